#pragma once

// Spherical tensor algebra: Clebsch-Gordan coefficients, Wigner-D matrices,
// spherical products, spherical/solid harmonics, and the correspondence
// between order-2 tensors and symmetric traceless 3x3 matrices.
//
// Conventions (the single source of truth for the whole library):
//  * complex spherical harmonics with Condon-Shortley phase,
//    unit-normalized over the sphere;
//  * coefficient vectors are indexed m = -j..j in ascending order;
//  * rotations act on coefficients as v' = D^j(g) v while coordinates
//    transform as r' = R(g)^T r, so that a sampled angular function
//    x(n) = sum_m v_m Y^j_m(n) satisfies x'(n) = x(R^T n);
//  * D^j(alpha,beta,gamma) = exp(-i m' alpha) d^j_{m'm}(beta) exp(-i m gamma)
//    for ZYZ Euler angles with R = Rz(alpha) Ry(beta) Rz(gamma).
//
// Coefficients of real-valued angular functions obey the reality symmetry
// v[-m] = (-1)^m conj(v[m]).

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hamlet/error.hpp"

namespace hamlet::sta {

using cplx = std::complex<double>;

/// Wigner-D matrices are provided up to this order.
inline constexpr int kMaxWignerOrder = 8;

/// Coefficient vector of a single spherical tensor of order j.
class SphericalCoeffs {
public:
  explicit SphericalCoeffs(int order)
      : order_(order), values_(static_cast<size_t>(2 * check_order(order) + 1)) {}

  int order() const { return order_; }
  int size() const { return 2 * order_ + 1; }

  cplx& operator()(int m) { return values_[static_cast<size_t>(m + order_)]; }
  const cplx& operator()(int m) const { return values_[static_cast<size_t>(m + order_)]; }

  std::span<cplx> values() { return values_; }
  std::span<const cplx> values() const { return values_; }

  double norm() const;

  /// Max deviation from v[-m] = (-1)^m conj(v[m]).
  double reality_defect() const;

private:
  static int check_order(int order) {
    if (order < 0) throw ConfigError("spherical tensor order must be non-negative");
    return order;
  }

  int order_;
  std::vector<cplx> values_;
};

/// A proper rotation of 3D space, canonically parametrized by ZYZ Euler angles.
class Rotation {
public:
  Rotation() : Rotation(0.0, 0.0, 0.0) {}
  Rotation(double alpha, double beta, double gamma);

  /// Builds from a 3x3 matrix; must be orthogonal with det +1 within 1e-12.
  static Rotation from_matrix(const Eigen::Matrix3d& m);

  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }
  const Eigen::Matrix3d& matrix() const { return matrix_; }

  Rotation operator*(const Rotation& other) const {
    return from_matrix(matrix_ * other.matrix_);
  }

private:
  double alpha_, beta_, gamma_;
  Eigen::Matrix3d matrix_;
};

/// <j m | j1 m1, j2 m2> by the Racah closed form, evaluated in exact rational
/// arithmetic and rounded to double. Returns 0 when m != m1+m2 or the triangle
/// inequality fails. Memoized; see warm_clebsch_gordan_cache for the one-time
/// initialization contract.
double clebsch_gordan(int j, int m, int j1, int m1, int j2, int m2);

/// Precomputes every CG coefficient with j1,j2,j <= max_order so later
/// concurrent lookups are read-only.
void warm_clebsch_gordan_cache(int max_order);

/// Nonzero terms of the coupling j1 x j2 -> j, grouped by output m.
struct CouplingTable {
  struct Term {
    int m1, m2;
    double coeff;
  };
  int j = 0, j1 = 0, j2 = 0;
  std::vector<std::vector<Term>> terms;  // indexed by m + j

  std::span<const Term> terms_for(int m) const { return terms[static_cast<size_t>(m + j)]; }
};

/// Shared immutable coupling table; built on first use.
const CouplingTable& coupling_table(int j, int j1, int j2);

/// D^j(g), (2j+1)x(2j+1), row m' and column m both ascending from -j.
Eigen::MatrixXcd wigner_d(int j, const Rotation& g);

/// Spherical product <v o w>_j. Requires |j1-j2| <= j <= j1+j2.
SphericalCoeffs spherical_product(int j, const SphericalCoeffs& v, const SphericalCoeffs& w);

/// (Y^j_{-j}(n), ..., Y^j_j(n)) for a unit vector n (|n| = 1 within 1e-9).
SphericalCoeffs eval_sph_harmonics(int j, const Eigen::Vector3d& n);

/// Solid harmonic R^j(r) = |r|^j Y^j(r/|r|); each component is a homogeneous
/// degree-j polynomial in (x,y,z). Defined at r = 0.
SphericalCoeffs solid_harmonic(int j, const Eigen::Vector3d& r);

/// The symmetric traceless matrix M with n^T M n = sum_m v_m Y^2_m(n).
/// For reality-symmetric v this gives ||M||_F^2 = (15/(8 pi)) |v|^2.
Eigen::Matrix3d st2_to_matrix(const SphericalCoeffs& v);

/// Inverse of st2_to_matrix (trace part of M is discarded).
SphericalCoeffs st2_from_matrix(const Eigen::Matrix3d& m);

struct PrincipalDirection {
  Eigen::Vector3d direction;
  double magnitude = 0.0;
  bool degenerate = false;
};

/// Top eigenvector of st2_to_matrix(v), sign-fixed so the first nonzero
/// component is positive; magnitude is the coefficient norm |v|.
PrincipalDirection principal_direction(const SphericalCoeffs& v);

}  // namespace hamlet::sta
