#include "hamlet/features.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace hamlet::features {

namespace {

bool valid_readout(int l, int K) { return std::abs(l - K) <= 2 && l + K >= 2; }

int readout_k_min(int l) { return std::max({0, l - 2, 2 - l}); }

}  // namespace

ScaleConfig enumerate_features(int s, const std::vector<KernelWithCutoff>& kernels,
                               bool previous_output_present) {
  ScaleConfig cfg;
  cfg.s = s;
  cfg.kernels = kernels;

  for (int g = 0; g < static_cast<int>(kernels.size()); ++g) {
    const int cutoff = kernels[static_cast<size_t>(g)].cutoff;
    for (int j : {0, 2})
      for (int L = 0; L <= cutoff + j; ++L)
        for (int J = std::abs(L - j); J <= L + j; ++J)
          if (J <= cutoff) cfg.linear_specs.push_back({J, L, j, g});
  }

  const int nlin = static_cast<int>(cfg.linear_specs.size());
  for (int a = 0; a < nlin; ++a) {
    const auto& left = cfg.linear_specs[static_cast<size_t>(a)];
    for (int b = a; b < nlin; ++b) {
      const auto& right = cfg.linear_specs[static_cast<size_t>(b)];
      for (int l = std::abs(left.J - right.J); l <= left.J + right.J; ++l) {
        if (a == b && l % 2) continue;  // <v o v>_l == 0 for odd l
        for (int K = readout_k_min(l); K <= l + 2; ++K) {
          if (!valid_readout(l, K)) continue;
          if ((left.L + left.j + right.L + right.j + K) % 2) continue;  // parity
          cfg.quad_specs.push_back({a, b, l, K});
        }
      }
    }
  }

  if (previous_output_present) {
    for (int a = 0; a < nlin; ++a) {
      const auto& spec = cfg.linear_specs[static_cast<size_t>(a)];
      for (int k = 1; k <= 3; ++k) {
        const int yk_order = 2 * k;
        for (int l = std::abs(spec.J - yk_order); l <= spec.J + yk_order; ++l) {
          for (int K = readout_k_min(l); K <= l + 2; ++K) {
            if (!valid_readout(l, K)) continue;
            if ((spec.L + spec.j + K) % 2) continue;  // parity (y_k is even)
            cfg.link_specs.push_back({a, k, l, K});
          }
        }
      }
    }
  }
  return cfg;
}

std::string ScaleConfig::manifest() const {
  std::ostringstream os;
  os << "scale " << s << "\n";
  for (const auto& k : kernels)
    os << "kernel " << (k.kernel.kind == field::KernelKind::Gaussian ? "gaussian" : "log") << " "
       << k.kernel.sigma << " cutoff " << k.cutoff << "\n";
  for (const auto& l : linear_specs)
    os << "linear J " << l.J << " L " << l.L << " j " << l.j << " g " << l.kernel << "\n";
  for (const auto& q : quad_specs)
    os << "quad " << q.left << " " << q.right << " l " << q.l << " K " << q.K << "\n";
  for (const auto& l : link_specs)
    os << "link " << l.b << " k " << l.k << " l " << l.l << " K " << l.K << "\n";
  return os.str();
}

std::vector<STField> compute_linear_features(const std::map<int, STField>& data,
                                             const std::vector<LinearFeatureSpec>& specs,
                                             const std::vector<KernelWithCutoff>& kernels,
                                             int margin) {
  for (const auto& spec : specs)
    if (!data.contains(spec.j))
      throw DataError("compute_linear_features: missing input order " + std::to_string(spec.j));

  std::vector<STField> out(specs.size());
#pragma omp parallel for schedule(dynamic)
  for (ptrdiff_t i = 0; i < static_cast<ptrdiff_t>(specs.size()); ++i) {
    const auto& spec = specs[static_cast<size_t>(i)];
    out[static_cast<size_t>(i)] =
        field::linear_feature(data.at(spec.j), spec.L, spec.J,
                              kernels[static_cast<size_t>(spec.kernel)].kernel, margin);
  }
  return out;
}

STField spherical_product_field(int l, const STField& a, const STField& b) {
  if (!(a.grid() == b.grid()))
    throw DataError("spherical_product_field: operands live on different grids");
  const sta::CouplingTable& table = sta::coupling_table(l, a.order(), b.order());

  STField out(a.grid(), l);
  const size_t nvox = a.grid().voxel_count();
  const int ja = a.order(), jb = b.order();
  for (size_t vox = 0; vox < nvox; ++vox) {
    const field::cplx* va = a.voxel(vox);
    const field::cplx* vb = b.voxel(vox);
    field::cplx* vo = out.voxel(vox);
    for (int m = -l; m <= l; ++m) {
      field::cplx acc = 0;
      for (const auto& t : table.terms_for(m))
        acc += t.coeff * va[t.m1 + ja] * vb[t.m2 + jb];
      vo[m + l] = acc;
    }
  }
  return out;
}

STField compute_quad_feature(const STField& bL, const STField& bR, const QuadFeatureSpec& spec,
                             const RadialKernel& gpp, int margin) {
  const STField product = spherical_product_field(spec.l, bL, bR);
  return field::linear_feature(product, spec.K, 2, gpp, margin);
}

STField compute_link_feature(const STField& b, const STField& yk, const LinkFeatureSpec& spec,
                             const RadialKernel& gpp, int margin) {
  if (yk.order() != 2 * spec.k)
    throw DataError("compute_link_feature: power field order does not match spec");
  const STField product = spherical_product_field(spec.l, b, yk);
  return field::linear_feature(product, spec.K, 2, gpp, margin);
}

std::array<STField, 3> spherical_powers(const STField& y) {
  if (y.order() != 2) throw DataError("spherical_powers: input must have order 2");
  const size_t nvox = y.grid().voxel_count();

  std::vector<double> mag(nvox);
  for (size_t vox = 0; vox < nvox; ++vox) mag[vox] = y.magnitude(vox);
  std::vector<double> sorted = mag;
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<ptrdiff_t>(nvox / 2), sorted.end());
  const double median = sorted[nvox / 2];
  const double eps = std::max(1e-6 * median, std::numeric_limits<double>::epsilon());

  std::array<STField, 3> out{y, STField(y.grid(), 4), STField(y.grid(), 6)};
  for (int k = 2; k <= 3; ++k) {
    STField raw = spherical_product_field(2 * k, out[static_cast<size_t>(k - 2)], y);
    const int nc = raw.channels();
    for (size_t vox = 0; vox < nvox; ++vox) {
      const double scale = 1.0 / (mag[vox] + eps);
      field::cplx* v = raw.voxel(vox);
      for (int c = 0; c < nc; ++c) v[c] *= scale;
    }
    out[static_cast<size_t>(k - 1)] = std::move(raw);
  }
  return out;
}

}  // namespace hamlet::features
