#pragma once

// Enumeration of admissible feature index tuples and computation of the
// quadratic and link features feeding each filter scale.
//
// Selection rules for one scale, writing I = (J, L, j, g):
//   * j in {0, 2}, g from the scale's kernel bank;
//   * |L - j| <= J <= L + j and J <= cutoff(g);
//   * products <b_I o b_I'>_l require |J - J'| <= l <= J + J';
//   * the readout <del^K o (g'' * .)>_2 requires |l - K| <= 2 <= l + K;
//   * pairs (I, I') are unordered; <v o v>_l vanishes identically for odd l
//     and such self-pairs are dropped;
//   * total reflection parity must be even so the output transforms like a
//     geometric rank-2 field under mirrors: L + j + L' + j' + K even for
//     quadratic features and L + j + K even for link features (the previous
//     layer's output and its spherical powers are parity-even).

#include <array>
#include <string>
#include <vector>

#include "hamlet/fieldops.hpp"

namespace hamlet::features {

using field::RadialKernel;
using field::STField;

struct KernelWithCutoff {
  RadialKernel kernel;
  int cutoff = 0;  // max tensor order J reachable through this kernel
};

struct LinearFeatureSpec {
  int J = 0, L = 0, j = 0;
  int kernel = 0;  // index into ScaleConfig::kernels
};

/// <del^K o (g'' * <b_left o b_right>_l)>_2 with unordered (left, right).
struct QuadFeatureSpec {
  int left = 0, right = 0;  // indices into ScaleConfig::linear_specs
  int l = 0, K = 0;
};

/// <del^K o (g'' * <b o y_k>_l)>_2 against the previous layer's spherical
/// power y_k of order 2k.
struct LinkFeatureSpec {
  int b = 0;  // index into ScaleConfig::linear_specs
  int k = 1;  // spherical power index, 1..3
  int l = 0, K = 0;
};

struct ScaleConfig {
  int s = 0;  // scale index (negative = coarser)
  std::vector<KernelWithCutoff> kernels;
  std::vector<LinearFeatureSpec> linear_specs;
  std::vector<QuadFeatureSpec> quad_specs;
  std::vector<LinkFeatureSpec> link_specs;

  /// Canonical text form; part of the model file so that trained weights
  /// bind to an exact enumeration.
  std::string manifest() const;
};

/// Exhaustively enumerates all admissible spec tuples in canonical order.
/// Link specs are produced only when a previous layer's output exists.
ScaleConfig enumerate_features(int s, const std::vector<KernelWithCutoff>& kernels,
                               bool previous_output_present);

/// b_I for every listed spec, in spec order. `data` holds the SH projections
/// keyed by order and must contain every order the specs reference.
std::vector<STField> compute_linear_features(const std::map<int, STField>& data,
                                             const std::vector<LinearFeatureSpec>& specs,
                                             const std::vector<KernelWithCutoff>& kernels,
                                             int margin = 3);

/// Voxelwise spherical product <a o b>_l of two fields on the same grid.
STField spherical_product_field(int l, const STField& a, const STField& b);

/// f = <del^K o (g'' * <bL o bR>_l)>_2.
STField compute_quad_feature(const STField& bL, const STField& bR, const QuadFeatureSpec& spec,
                             const RadialKernel& gpp, int margin = 3);

/// f = <del^K o (g'' * <b o yk>_l)>_2.
STField compute_link_feature(const STField& b, const STField& yk, const LinkFeatureSpec& spec,
                             const RadialKernel& gpp, int margin = 3);

/// Normalized spherical powers [y_1, y_2, y_3] of an order-2 field:
/// y_1 = y and y_k = <y_{k-1} o y>_{2k} / (|y| + eps) voxelwise, where eps
/// is 1e-6 times the median magnitude over the volume (floored at machine
/// epsilon) so the construction stays scale-covariant.
std::array<STField, 3> spherical_powers(const STField& y);

}  // namespace hamlet::features
