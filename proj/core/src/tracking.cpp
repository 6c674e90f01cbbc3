#include "hamlet/tracking.hpp"

#include <algorithm>
#include <cmath>

#include "hamlet/rng.hpp"

namespace hamlet::tracking {

void TrackingParams::validate(const field::VolumeGrid& grid) const {
  if (!(step > 0)) throw ConfigError("tracking: step must be positive");
  const double min_spacing = std::min({grid.spacing[0], grid.spacing[1], grid.spacing[2]});
  if (step > min_spacing)
    throw ConfigError("tracking: step must not exceed the smallest voxel spacing");
  if (threshold < 0) throw ConfigError("tracking: threshold must be non-negative");
  if (max_steps < 1) throw ConfigError("tracking: max_steps must be positive");
  if (seeds.empty() && seed_count < 0) throw ConfigError("tracking: negative seed count");
}

namespace {

struct Probe {
  bool valid = false;
  Eigen::Vector3d direction;
  double magnitude = 0;
};

Probe probe_field(const STField& y, const Eigen::Vector3d& pos) {
  Probe p;
  const auto& g = y.grid();
  const Eigen::Vector3d v = g.to_voxel(pos);
  for (int a = 0; a < 3; ++a)
    if (v(a) < -0.5 || v(a) > g.dims[a] - 0.5) return p;  // outside the grid

  field::cplx coeffs[5];
  y.sample_world(pos, coeffs);
  sta::SphericalCoeffs c(2);
  for (int i = 0; i < 5; ++i) c.values()[static_cast<size_t>(i)] = coeffs[i];
  // Interpolated coefficients may carry tiny asymmetries; symmetrize.
  for (int m = 1; m <= 2; ++m) {
    const field::cplx avg = 0.5 * (c(m) + (m % 2 ? -1.0 : 1.0) * std::conj(c(-m)));
    c(m) = avg;
    c(-m) = (m % 2 ? -1.0 : 1.0) * std::conj(avg);
  }
  c(0) = c(0).real();

  const auto pd = sta::principal_direction(c);
  p.valid = true;
  p.direction = pd.direction;
  p.magnitude = pd.magnitude;
  return p;
}

/// One-sided Euler integration; appends positions after `start`.
void integrate(const STField& y, const TrackingParams& params, const Eigen::Vector3d& start,
               Eigen::Vector3d dir, std::vector<Eigen::Vector3d>* out) {
  Eigen::Vector3d pos = start;
  for (int s = 0; s < params.max_steps; ++s) {
    pos += params.step * dir;
    const Probe p = probe_field(y, pos);
    if (!p.valid || p.magnitude < params.threshold) break;
    out->push_back(pos);
    Eigen::Vector3d next = p.direction;
    if (next.dot(dir) < 0) next = -next;  // rank-2 axes carry no sign
    dir = next;
  }
}

}  // namespace

std::vector<tract::Streamline> track(const STField& y, const TrackingParams& params) {
  params.validate(y.grid());
  const auto& g = y.grid();

  std::vector<Eigen::Vector3d> seeds = params.seeds;
  if (seeds.empty()) {
    std::vector<size_t> above;
    for (size_t v = 0; v < g.voxel_count(); ++v)
      if (y.magnitude(v) >= params.threshold && y.magnitude(v) > 0) above.push_back(v);
    if (above.empty()) return {};
    Rng rng(params.rng_seed);
    for (int i = 0; i < params.seed_count; ++i) {
      const size_t flat = above[rng.integer(above.size())];
      const int x = static_cast<int>(flat % static_cast<size_t>(g.dims[0]));
      const int yi = static_cast<int>((flat / static_cast<size_t>(g.dims[0])) %
                                      static_cast<size_t>(g.dims[1]));
      const int z = static_cast<int>(flat / (static_cast<size_t>(g.dims[0]) * g.dims[1]));
      seeds.push_back(g.voxel_center(x + rng.uniform() - 0.5, yi + rng.uniform() - 0.5,
                                     z + rng.uniform() - 0.5));
    }
  }

  std::vector<tract::Streamline> out;
  for (const Eigen::Vector3d& seed : seeds) {
    const Probe p = probe_field(y, seed);
    if (!p.valid || p.magnitude < params.threshold || p.magnitude == 0) continue;

    std::vector<Eigen::Vector3d> fwd, bwd;
    integrate(y, params, seed, p.direction, &fwd);
    integrate(y, params, seed, -p.direction, &bwd);

    tract::Streamline line;
    line.points.assign(bwd.rbegin(), bwd.rend());
    line.points.push_back(seed);
    line.points.insert(line.points.end(), fwd.begin(), fwd.end());
    if (line.points.size() >= 2) out.push_back(std::move(line));
  }
  return out;
}

double apparent_volume(const STField& y) {
  const auto& g = y.grid();
  const double voxel_volume = g.spacing[0] * g.spacing[1] * g.spacing[2];
  double power = 0;
  for (size_t v = 0; v < g.voxel_count(); ++v) {
    const double m = y.magnitude(v);
    power += m * m;
  }
  return power * voxel_volume;
}

double icc(std::span<const double> x1, std::span<const double> x2) {
  if (x1.size() != x2.size() || x1.size() < 2)
    throw ConfigError("icc: sessions must have equal length >= 2");
  double mean = 0;
  for (double v : x1) mean += v;
  for (double v : x2) mean += v;
  mean /= static_cast<double>(2 * x1.size());

  double num = 0, den = 0;
  for (size_t i = 0; i < x1.size(); ++i) {
    num += (x1[i] - x2[i]) * (x1[i] - x2[i]);
    den += (x1[i] - mean) * (x1[i] - mean) + (x2[i] - mean) * (x2[i] - mean);
  }
  if (den == 0) throw NumericError("icc: pooled variance is zero, ICC undefined");
  return 1.0 - num / den;
}

double dice(std::span<const uint8_t> a, std::span<const uint8_t> b) {
  if (a.size() != b.size()) throw ConfigError("dice: masks must share a grid");
  size_t inter = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    inter += a[i] && b[i];
    na += a[i] != 0;
    nb += b[i] != 0;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

}  // namespace hamlet::tracking
