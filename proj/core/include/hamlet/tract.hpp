#pragma once

// Ground-truth machinery: rasterizing streamlines into order-2 label
// fields, waypoint-based tract selection, and synthetic DWI phantoms with
// known tube geometry.

#include <filesystem>
#include <span>

#include "hamlet/field.hpp"

namespace hamlet::tract {

using field::STField;
using field::VolumeGrid;

struct Streamline {
  std::vector<Eigen::Vector3d> points;  // mm, world coordinates
};

/// Normalized order-2 tract label. |field| approaches 1 where fiber density
/// is well above the detectability constant epsilon.
struct TractLabel {
  STField field;
  double epsilon = 0.1;
};

/// Ordered waypoint sequence with per-waypoint tolerances (mm).
struct WaypointSpec {
  std::string name;
  std::vector<Eigen::Vector3d> points;
  std::vector<double> tolerances;

  void validate() const;
};

/// Splats length-weighted Y^2(tangent) contributions into the voxel
/// containing each segment midpoint (segments longer than half a voxel are
/// subdivided first), then normalizes y' = y / (|y| + epsilon) voxelwise.
TractLabel rasterize_label(std::span<const Streamline> streamlines, const VolumeGrid& grid,
                           double epsilon);

/// Unnormalized accumulation stage of rasterize_label (additive over inputs).
STField rasterize_density(std::span<const Streamline> streamlines, const VolumeGrid& grid);

/// Ordered-ROI selection: a streamline is kept iff it approaches every
/// waypoint within its tolerance, in order, along either traversal direction.
std::vector<Streamline> select_tract(std::span<const Streamline> streamlines,
                                     const WaypointSpec& spec);

/// One tubular fiber bundle. The centerline is either a straight segment or
/// a circular arc; the diffusivity profile is axially symmetric.
struct BundleSpec {
  enum class Kind { Line, Arc };
  Kind kind = Kind::Line;
  // Line: from -> to. Arc: circle of arc_radius about center, in the plane
  // orthogonal to normal, swept from angle0 to angle1 (radians).
  Eigen::Vector3d from{0, 0, 0}, to{0, 0, 1};
  Eigen::Vector3d center{0, 0, 0}, normal{0, 0, 1};
  double arc_radius = 20.0;
  double angle0 = 0.0, angle1 = 3.141592653589793;
  double radius = 4.0;        // tube radius, mm
  double d_parallel = 1.7e-3; // mm^2/s
  double d_perp = 0.3e-3;     // mm^2/s
};

struct PhantomSpec {
  VolumeGrid grid;
  std::vector<BundleSpec> bundles;
  std::vector<Eigen::Vector3d> gradients;  // unit directions
  std::vector<double> bvalues;             // one per gradient
  double b0_value = 100.0;
  double background_adc = 0.7e-3;  // isotropic diffusivity outside bundles
  double noise_sigma = 0.0;        // Rician noise level, signal units
  uint64_t seed = 0;
  double streamline_spacing = 1.5;  // mm between ground-truth lines
  double streamline_step = 0.75;    // mm along each line

  void validate() const;
};

struct Phantom {
  field::DwiVolume dwi;
  std::vector<Streamline> truth;  // centerline-parallel ground truth
};

/// Synthesizes the axially symmetric single-fiber signal
/// s(n) = exp(-b (d_perp + (d_par - d_perp)(n.t)^2)) inside each tube,
/// an isotropic signal elsewhere, blends overlaps by volume fraction, and
/// adds seeded Rician noise.
Phantom generate_phantom(const PhantomSpec& spec);

/// Deterministic, roughly uniform unit directions (spherical Fibonacci).
std::vector<Eigen::Vector3d> fibonacci_directions(int count);

// TRKS1 streamline file: 8-byte magic "TRKS1\0\0\0", u32 count, then per
// streamline a u32 point count followed by 3xf32 points in mm.
void write_trks(const std::filesystem::path& path, std::span<const Streamline> streamlines);
std::vector<Streamline> read_trks(const std::filesystem::path& path);

}  // namespace hamlet::tract
