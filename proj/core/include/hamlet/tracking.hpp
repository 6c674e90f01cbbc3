#pragma once

// Streamline tracking on predicted rank-2 fields and the scalar metrics
// built on them (apparent tract volume, ICC, Dice).

#include <span>

#include "hamlet/tract.hpp"

namespace hamlet::tracking {

using field::STField;

struct TrackingParams {
  double step = 0.5;        // mm; must not exceed the smallest voxel spacing
  double threshold = 0.0;   // |y| termination / seeding cut
  int seed_count = 0;       // random seeds; ignored when seeds are explicit
  std::vector<Eigen::Vector3d> seeds;  // explicit seed positions (mm)
  int max_steps = 2000;     // per direction
  uint64_t rng_seed = 0;

  void validate(const field::VolumeGrid& grid) const;
};

/// Euler integration of the principal-direction field, bidirectionally from
/// each seed. Seeds are drawn uniformly inside voxels with |y| >= threshold.
/// A streamline ends when |y| drops below the threshold, the position leaves
/// the grid, or max_steps is reached.
std::vector<tract::Streamline> track(const STField& y, const TrackingParams& params);

/// sum over voxels of |y|^2 times the voxel volume.
double apparent_volume(const STField& y);

/// ICC = 1 - sum_i (x1_i - x2_i)^2 / sum_{ij} (x^j_i - mean)^2 with the mean
/// pooled over both sessions.
double icc(std::span<const double> x1, std::span<const double> x2);

/// 2|a&b| / (|a|+|b|); 1 when both masks are empty.
double dice(std::span<const uint8_t> a, std::span<const uint8_t> b);

}  // namespace hamlet::tracking
