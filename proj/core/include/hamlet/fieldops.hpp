#pragma once

// Operations on spherical tensor fields: FFT convolution with radial
// kernels, spherical derivatives as Fourier multipliers, SH projection of
// DWI data, multi-scale resampling, and boundary windowing.

#include <map>

#include "hamlet/field.hpp"

namespace hamlet::field {

enum class KernelKind { Gaussian, LaplacianOfGaussian };

/// Radially symmetric kernel; sigma is in voxels at the current scale.
struct RadialKernel {
  KernelKind kind = KernelKind::Gaussian;
  double sigma = 1.0;

  bool operator==(const RadialKernel&) const = default;
};

inline RadialKernel gaussian(double sigma) { return {KernelKind::Gaussian, sigma}; }
inline RadialKernel log_kernel(double sigma) { return {KernelKind::LaplacianOfGaussian, sigma}; }

/// Componentwise FFT convolution on a grid padded by at least `margin`
/// voxels per side. Gaussians are normalized to unit sum, Laplacians of
/// Gaussians to zero sum; sigma <= 0.25 voxels clamps to a discrete delta.
STField convolve_radial(const STField& f, const RadialKernel& k, int margin = 3);

/// <del^L o (k * a)>_J : spherical derivative of the smoothed field, coupled
/// from the order-L derivative channels and the order-j input channels into
/// order J. Requires |L - j| <= J <= L + j. del^0 is 1/sqrt(4 pi) times the
/// identity. Computed entirely in the Fourier domain of the padded grid.
STField linear_feature(const STField& a, int L, int J, const RadialKernel& k, int margin = 3);

enum class ResampleDirection { Down, Up };

/// Grid of the gamma-fold coarser volume. Sample positions are centered on
/// the input volume so decimation commutes with grid rotations and mirrors.
VolumeGrid downsampled_grid(const VolumeGrid& g, double gamma);

/// Down: Gaussian presmooth (sigma in input voxels) then centered trilinear
/// decimation by gamma. Up: trilinear interpolation onto the gamma-fold
/// finer grid. World coordinates of all samples are preserved exactly.
STField resample(const STField& f, double gamma, ResampleDirection dir, double presmooth_sigma);

/// Trilinear resampling of f onto an explicit target grid (world-space).
STField resample_to(const STField& f, const VolumeGrid& target);

/// Separable raised-cosine taper: 1 in the interior, decaying to exactly 0
/// at the boundary voxels over `margin` voxels per face.
STField window(const STField& f, int margin);

/// The taper weights themselves, one per voxel.
std::vector<double> window_weights(const VolumeGrid& g, int margin);

/// Continuous taper profile of the grid `g`, evaluated at a world position.
/// Used to carry the finest-scale window down the pyramid.
double window_weight_world(const VolumeGrid& g, int margin, const Eigen::Vector3d& world);

/// Per-voxel least-squares fit of the b0-normalized shell signal onto the
/// even-order symmetrized SH basis. Returns one field per order
/// j = 0, 2, ..., lmax. Voxels with b0 <= 0 are zeroed.
std::map<int, STField> sh_project(const DwiVolume& dwi, double shell, int lmax);

}  // namespace hamlet::field
