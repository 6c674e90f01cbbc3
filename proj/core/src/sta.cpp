#include "hamlet/sta.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>

#include <boost/multiprecision/cpp_int.hpp>

namespace hamlet::sta {

namespace {

using boost::multiprecision::cpp_int;
using boost::multiprecision::cpp_rational;

constexpr double kPi = std::numbers::pi;

const cpp_int& factorial(int n) {
  static const std::vector<cpp_int> table = [] {
    std::vector<cpp_int> t(128);
    t[0] = 1;
    for (size_t i = 1; i < t.size(); ++i) t[i] = t[i - 1] * cpp_int(i);
    return t;
  }();
  return table[static_cast<size_t>(n)];
}

bool triangle_ok(int j, int j1, int j2) {
  return j >= std::abs(j1 - j2) && j <= j1 + j2;
}

// Racah's closed form, exact until the final sqrt.
double clebsch_gordan_exact(int j, int m, int j1, int m1, int j2, int m2) {
  cpp_rational delta(factorial(j1 + j2 - j) * factorial(j1 - j2 + j) * factorial(-j1 + j2 + j),
                     factorial(j1 + j2 + j + 1));
  cpp_rational pref = delta * (2 * j + 1);
  pref *= factorial(j + m) * factorial(j - m) * factorial(j1 - m1) * factorial(j1 + m1) *
          factorial(j2 - m2) * factorial(j2 + m2);

  cpp_rational sum = 0;
  const int k_lo = std::max({0, -(j - j2 + m1), -(j - j1 - m2)});
  const int k_hi = std::min({j1 + j2 - j, j1 - m1, j2 + m2});
  for (int k = k_lo; k <= k_hi; ++k) {
    cpp_rational term(1, factorial(k) * factorial(j1 + j2 - j - k) * factorial(j1 - m1 - k) *
                             factorial(j2 + m2 - k) * factorial(j - j2 + m1 + k) *
                             factorial(j - j1 - m2 + k));
    if (k % 2) term = -term;
    sum += term;
  }
  if (sum == 0) return 0.0;

  const cpp_rational squared = pref * sum * sum;
  const double root = std::sqrt(squared.convert_to<double>());
  return sum > 0 ? root : -root;
}

struct CgKey {
  int j, m, j1, m1, j2, m2;
  auto operator<=>(const CgKey&) const = default;
};

std::map<CgKey, double> g_cg_cache;
std::mutex g_cg_mutex;

}  // namespace

double SphericalCoeffs::norm() const {
  double s = 0;
  for (const cplx& v : values_) s += std::norm(v);
  return std::sqrt(s);
}

double SphericalCoeffs::reality_defect() const {
  double worst = 0;
  for (int m = 0; m <= order_; ++m) {
    const double sign = (m % 2) ? -1.0 : 1.0;
    worst = std::max(worst, std::abs((*this)(-m) - sign * std::conj((*this)(m))));
  }
  return worst;
}

double clebsch_gordan(int j, int m, int j1, int m1, int j2, int m2) {
  if (j < 0 || j1 < 0 || j2 < 0)
    throw ConfigError("clebsch_gordan: negative order");
  if (std::abs(m) > j || std::abs(m1) > j1 || std::abs(m2) > j2)
    throw ConfigError("clebsch_gordan: |m| exceeds order");
  if (m != m1 + m2 || !triangle_ok(j, j1, j2)) return 0.0;

  const CgKey key{j, m, j1, m1, j2, m2};
  std::lock_guard lock(g_cg_mutex);
  auto it = g_cg_cache.find(key);
  if (it != g_cg_cache.end()) return it->second;
  const double value = clebsch_gordan_exact(j, m, j1, m1, j2, m2);
  g_cg_cache.emplace(key, value);
  return value;
}

void warm_clebsch_gordan_cache(int max_order) {
  for (int j1 = 0; j1 <= max_order; ++j1)
    for (int j2 = 0; j2 <= max_order; ++j2)
      for (int j = std::abs(j1 - j2); j <= std::min(j1 + j2, max_order); ++j)
        for (int m1 = -j1; m1 <= j1; ++m1)
          for (int m2 = -j2; m2 <= j2; ++m2)
            if (std::abs(m1 + m2) <= j) clebsch_gordan(j, m1 + m2, j1, m1, j2, m2);
}

const CouplingTable& coupling_table(int j, int j1, int j2) {
  if (!triangle_ok(j, j1, j2))
    throw ConfigError("coupling_table: triangle inequality violated");
  struct TableKey {
    int j, j1, j2;
    auto operator<=>(const TableKey&) const = default;
  };
  static std::map<TableKey, std::unique_ptr<CouplingTable>> cache;
  static std::mutex mutex;

  std::lock_guard lock(mutex);
  auto& slot = cache[TableKey{j, j1, j2}];
  if (!slot) {
    auto table = std::make_unique<CouplingTable>();
    table->j = j;
    table->j1 = j1;
    table->j2 = j2;
    table->terms.resize(static_cast<size_t>(2 * j + 1));
    for (int m = -j; m <= j; ++m) {
      for (int m1 = -j1; m1 <= j1; ++m1) {
        const int m2 = m - m1;
        if (std::abs(m2) > j2) continue;
        const double c = clebsch_gordan_exact(j, m, j1, m1, j2, m2);
        if (c != 0.0) table->terms[static_cast<size_t>(m + j)].push_back({m1, m2, c});
      }
    }
    slot = std::move(table);
  }
  return *slot;
}

Rotation::Rotation(double alpha, double beta, double gamma)
    : alpha_(alpha), beta_(beta), gamma_(gamma) {
  matrix_ = (Eigen::AngleAxisd(alpha, Eigen::Vector3d::UnitZ()) *
             Eigen::AngleAxisd(beta, Eigen::Vector3d::UnitY()) *
             Eigen::AngleAxisd(gamma, Eigen::Vector3d::UnitZ()))
                .toRotationMatrix();
}

Rotation Rotation::from_matrix(const Eigen::Matrix3d& m) {
  const double orth = (m.transpose() * m - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (orth > 1e-12 || std::abs(m.determinant() - 1.0) > 1e-12)
    throw ConfigError("Rotation::from_matrix: not a proper rotation matrix");

  const double sb = std::hypot(m(2, 0), m(2, 1));
  double alpha, beta, gamma;
  beta = std::atan2(sb, m(2, 2));
  if (sb > 1e-13) {
    alpha = std::atan2(m(1, 2), m(0, 2));
    gamma = std::atan2(m(2, 1), -m(2, 0));
  } else if (m(2, 2) > 0) {
    alpha = std::atan2(m(1, 0), m(0, 0));
    gamma = 0.0;
  } else {
    alpha = std::atan2(-m(1, 0), -m(0, 0));
    gamma = 0.0;
  }
  return Rotation(alpha, beta, gamma);
}

namespace {

long double fact_ld(int n) {
  static const std::array<long double, 64> table = [] {
    std::array<long double, 64> t{};
    t[0] = 1.0L;
    for (size_t i = 1; i < t.size(); ++i) t[i] = t[i - 1] * static_cast<long double>(i);
    return t;
  }();
  return table[static_cast<size_t>(n)];
}

long double wigner_small_d(int j, int mp, int m, double beta) {
  const long double c = std::cos(static_cast<long double>(beta) / 2);
  const long double s = std::sin(static_cast<long double>(beta) / 2);
  const long double pref =
      std::sqrt(fact_ld(j + mp) * fact_ld(j - mp) * fact_ld(j + m) * fact_ld(j - m));
  long double sum = 0;
  const int s_lo = std::max(0, m - mp);
  const int s_hi = std::min(j + m, j - mp);
  for (int k = s_lo; k <= s_hi; ++k) {
    const int pc = 2 * j + m - mp - 2 * k;
    const int ps = mp - m + 2 * k;
    long double term = ((mp - m + k) % 2 ? -1.0L : 1.0L);
    term *= std::pow(c, pc) * std::pow(s, ps);
    term /= fact_ld(j + m - k) * fact_ld(k) * fact_ld(mp - m + k) * fact_ld(j - mp - k);
    sum += term;
  }
  return pref * sum;
}

}  // namespace

Eigen::MatrixXcd wigner_d(int j, const Rotation& g) {
  if (j < 0) throw ConfigError("wigner_d: negative order");
  if (j > kMaxWignerOrder) throw ConfigError("wigner_d: order above supported maximum");
  const int n = 2 * j + 1;
  Eigen::MatrixXcd d(n, n);
  for (int mp = -j; mp <= j; ++mp) {
    const cplx ea = std::polar(1.0, -mp * g.alpha());
    for (int m = -j; m <= j; ++m) {
      const cplx eg = std::polar(1.0, -m * g.gamma());
      d(mp + j, m + j) = ea * static_cast<double>(wigner_small_d(j, mp, m, g.beta())) * eg;
    }
  }
  return d;
}

SphericalCoeffs spherical_product(int j, const SphericalCoeffs& v, const SphericalCoeffs& w) {
  if (!triangle_ok(j, v.order(), w.order()))
    throw ConfigError("spherical_product: triangle inequality violated");
  const CouplingTable& table = coupling_table(j, v.order(), w.order());
  SphericalCoeffs out(j);
  for (int m = -j; m <= j; ++m) {
    cplx acc = 0;
    for (const auto& t : table.terms_for(m)) acc += t.coeff * v(t.m1) * w(t.m2);
    out(m) = acc;
  }
  return out;
}

namespace {

// Orthonormal associated Legendre values (Condon-Shortley included) for
// m = 0..j at fixed l = j, given x = cos(theta).
void normalized_legendre_row(int j, double x, double* out) {
  const double s = std::sqrt(std::max(0.0, 1.0 - x * x));
  std::vector<double> pmm(static_cast<size_t>(j) + 1);
  pmm[0] = 1.0 / std::sqrt(4.0 * kPi);
  for (int m = 1; m <= j; ++m)
    pmm[static_cast<size_t>(m)] =
        -std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * s * pmm[static_cast<size_t>(m - 1)];

  for (int m = 0; m <= j; ++m) {
    double p = pmm[static_cast<size_t>(m)];
    if (j == m) {
      out[m] = p;
      continue;
    }
    double p_prev = p;
    p = std::sqrt(2.0 * m + 3.0) * x * p_prev;
    for (int l = m + 2; l <= j; ++l) {
      const double a = std::sqrt((4.0 * l * l - 1.0) / (static_cast<double>(l) * l - m * m));
      const double b = std::sqrt((2.0 * l + 1.0) * (l + m - 1.0) * (l - m - 1.0) /
                                 ((2.0 * l - 3.0) * (static_cast<double>(l) * l - m * m)));
      const double p_next = a * x * p - b * p_prev;
      p_prev = p;
      p = p_next;
    }
    out[m] = p;
  }
}

}  // namespace

SphericalCoeffs eval_sph_harmonics(int j, const Eigen::Vector3d& n) {
  if (j < 0) throw ConfigError("eval_sph_harmonics: negative order");
  if (std::abs(n.norm() - 1.0) > 1e-9)
    throw ConfigError("eval_sph_harmonics: direction must be unit length");

  const double x = std::clamp(n.z(), -1.0, 1.0);
  const double phi = std::atan2(n.y(), n.x());
  std::vector<double> leg(static_cast<size_t>(j) + 1);
  normalized_legendre_row(j, x, leg.data());

  SphericalCoeffs out(j);
  for (int m = 0; m <= j; ++m) {
    const cplx y = leg[static_cast<size_t>(m)] * std::polar(1.0, m * phi);
    out(m) = y;
    out(-m) = (m % 2 ? -1.0 : 1.0) * std::conj(y);
  }
  return out;
}

SphericalCoeffs solid_harmonic(int j, const Eigen::Vector3d& r) {
  const double len = r.norm();
  if (len == 0.0) {
    SphericalCoeffs out(j);
    if (j == 0) out(0) = 1.0 / std::sqrt(4.0 * kPi);
    return out;
  }
  SphericalCoeffs out = eval_sph_harmonics(j, r / len);
  const double scale = std::pow(len, j);
  for (cplx& v : out.values()) v *= scale;
  return out;
}

namespace {

// Coefficients of the unique symmetric traceless M with
// n^T M n = sum_m v_m Y^2_m(n).
const double kQ0 = std::sqrt(5.0 / (16.0 * kPi));
const double kQ1 = std::sqrt(15.0 / (8.0 * kPi));
const double kQ2 = std::sqrt(15.0 / (32.0 * kPi));

}  // namespace

Eigen::Matrix3d st2_to_matrix(const SphericalCoeffs& v) {
  if (v.order() != 2) throw ConfigError("st2_to_matrix: input must have order 2");
  if (v.reality_defect() > 1e-8)
    throw DataError("st2_to_matrix: coefficients violate the reality symmetry");

  const double v0 = v(0).real();
  const double a = v(1).real(), b = v(1).imag();
  const double c = v(2).real(), d = v(2).imag();

  Eigen::Matrix3d m;
  m(0, 0) = -kQ0 * v0 + 2.0 * kQ2 * c;
  m(1, 1) = -kQ0 * v0 - 2.0 * kQ2 * c;
  m(2, 2) = 2.0 * kQ0 * v0;
  m(0, 1) = m(1, 0) = -2.0 * kQ2 * d;
  m(0, 2) = m(2, 0) = -kQ1 * a;
  m(1, 2) = m(2, 1) = kQ1 * b;
  return m;
}

SphericalCoeffs st2_from_matrix(const Eigen::Matrix3d& m) {
  const Eigen::Matrix3d sym = 0.5 * (m + m.transpose());
  const Eigen::Matrix3d t = sym - (sym.trace() / 3.0) * Eigen::Matrix3d::Identity();

  SphericalCoeffs v(2);
  const double v0 = t(2, 2) / (2.0 * kQ0);
  const double a = -t(0, 2) / kQ1;
  const double b = t(1, 2) / kQ1;
  const double c = (t(0, 0) - t(1, 1)) / (4.0 * kQ2);
  const double d = -t(0, 1) / (2.0 * kQ2);
  v(0) = v0;
  v(1) = cplx(a, b);
  v(-1) = cplx(-a, b);
  v(2) = cplx(c, d);
  v(-2) = cplx(c, -d);
  return v;
}

PrincipalDirection principal_direction(const SphericalCoeffs& v) {
  const Eigen::Matrix3d m = st2_to_matrix(v);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(m);

  PrincipalDirection out;
  out.magnitude = v.norm();
  Eigen::Vector3d dir = solver.eigenvectors().col(2);
  const double gap = solver.eigenvalues()(2) - solver.eigenvalues()(1);
  out.degenerate = gap < 1e-12 * std::max(out.magnitude, 1e-300);

  for (int i = 0; i < 3; ++i) {
    if (std::abs(dir(i)) > 1e-14) {
      if (dir(i) < 0) dir = -dir;
      break;
    }
  }
  out.direction = dir;
  return out;
}

}  // namespace hamlet::sta
