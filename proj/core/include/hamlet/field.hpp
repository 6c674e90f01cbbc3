#pragma once

// Spherical tensor fields on regular 3D grids, plus the raw
// diffusion-weighted volume container they are projected from.
//
// Voxel data is stored x-fastest (index = (z*ny + y)*nx + x) with the
// 2j+1 tensor channels interleaved per voxel in ascending m order.

#include <array>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "hamlet/error.hpp"
#include "hamlet/sta.hpp"

namespace hamlet::field {

using cplx = std::complex<double>;

struct VolumeGrid {
  std::array<int, 3> dims{1, 1, 1};          // voxels per axis
  std::array<double, 3> spacing{1.0, 1.0, 1.0};  // mm per voxel
  std::array<double, 3> origin{0.0, 0.0, 0.0};   // mm, center of voxel (0,0,0)

  size_t voxel_count() const {
    return static_cast<size_t>(dims[0]) * static_cast<size_t>(dims[1]) *
           static_cast<size_t>(dims[2]);
  }

  size_t index(int x, int y, int z) const {
    return (static_cast<size_t>(z) * dims[1] + static_cast<size_t>(y)) * dims[0] +
           static_cast<size_t>(x);
  }

  bool contains(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < dims[0] && y < dims[1] && z < dims[2];
  }

  Eigen::Vector3d voxel_center(double x, double y, double z) const {
    return {origin[0] + x * spacing[0], origin[1] + y * spacing[1], origin[2] + z * spacing[2]};
  }

  /// World position -> continuous voxel coordinates.
  Eigen::Vector3d to_voxel(const Eigen::Vector3d& world) const {
    return {(world.x() - origin[0]) / spacing[0], (world.y() - origin[1]) / spacing[1],
            (world.z() - origin[2]) / spacing[2]};
  }

  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] < 1) throw ConfigError("VolumeGrid: dims must be >= 1");
      if (!(spacing[a] > 0)) throw ConfigError("VolumeGrid: spacing must be positive");
    }
  }

  bool operator==(const VolumeGrid&) const = default;
};

/// A field of spherical tensor coefficients of one order on a voxel grid.
class STField {
public:
  STField() = default;
  STField(VolumeGrid grid, int order)
      : grid_(std::move(grid)), order_(order),
        data_(grid_.voxel_count() * static_cast<size_t>(2 * order + 1)) {
    grid_.validate();
    if (order < 0) throw ConfigError("STField: negative order");
  }

  const VolumeGrid& grid() const { return grid_; }
  int order() const { return order_; }
  int channels() const { return 2 * order_ + 1; }

  std::span<cplx> data() { return data_; }
  std::span<const cplx> data() const { return data_; }

  cplx* voxel(size_t flat) { return data_.data() + flat * static_cast<size_t>(channels()); }
  const cplx* voxel(size_t flat) const {
    return data_.data() + flat * static_cast<size_t>(channels());
  }
  cplx* voxel(int x, int y, int z) { return voxel(grid_.index(x, y, z)); }
  const cplx* voxel(int x, int y, int z) const { return voxel(grid_.index(x, y, z)); }

  /// Channel value at (voxel, m), m in [-order, order].
  cplx& at(size_t flat, int m) { return voxel(flat)[m + order_]; }
  const cplx& at(size_t flat, int m) const { return voxel(flat)[m + order_]; }

  double magnitude(size_t flat) const {
    double s = 0;
    const cplx* v = voxel(flat);
    for (int c = 0; c < channels(); ++c) s += std::norm(v[c]);
    return std::sqrt(s);
  }

  sta::SphericalCoeffs coeffs(size_t flat) const {
    sta::SphericalCoeffs c(order_);
    const cplx* v = voxel(flat);
    std::copy(v, v + channels(), c.values().begin());
    return c;
  }

  void set_coeffs(size_t flat, const sta::SphericalCoeffs& c) {
    std::copy(c.values().begin(), c.values().end(), voxel(flat));
  }

  double energy() const {
    double s = 0;
    for (const cplx& v : data_) s += std::norm(v);
    return s;
  }

  /// Trilinear interpolation of all channels at a world position; samples
  /// outside the grid are clamped to the boundary.
  void sample_world(const Eigen::Vector3d& world, cplx* out) const;

private:
  VolumeGrid grid_;
  int order_ = 0;
  std::vector<cplx> data_;
};

/// b0 volume, gradient table, and diffusion-weighted volumes.
struct DwiVolume {
  VolumeGrid grid;
  std::vector<double> b0;
  std::vector<Eigen::Vector3d> gradients;  // unit directions
  std::vector<double> bvalues;             // s/mm^2, one per gradient
  std::vector<std::vector<double>> dwi;    // one volume per gradient

  void validate() const;
  /// Largest b-value present (the default shell choice).
  double max_bvalue() const;
};

// ---- binary file formats (little-endian, bit-exact) ----
//
// STF1: magic "STF1", version u32, j u32, dims 3xu32, spacing 3xf64,
//       origin 3xf64, precision u32 (0 = f32, 1 = f64), 4 zero pad bytes,
//       then interleaved complex data (re,im per channel, channels per voxel).
// DWV1: magic "DWV1", version u32, dims 3xu32, spacing 3xf64, origin 3xf64,
//       precision u32, 8 zero pad bytes, gradient count u32, per gradient
//       3xf64 direction + f64 b-value, then the b0 volume and one volume per
//       gradient as scalars in the stated precision.

enum class Precision : uint32_t { Float32 = 0, Float64 = 1 };

void write_stf(const std::filesystem::path& path, const STField& f,
               Precision prec = Precision::Float64);
STField read_stf(const std::filesystem::path& path);

void write_dwv(const std::filesystem::path& path, const DwiVolume& dwi,
               Precision prec = Precision::Float64);
DwiVolume read_dwv(const std::filesystem::path& path);

}  // namespace hamlet::field
