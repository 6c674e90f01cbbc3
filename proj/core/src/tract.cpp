#include "hamlet/tract.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "hamlet/rng.hpp"

namespace hamlet::tract {

void WaypointSpec::validate() const {
  if (points.size() != tolerances.size())
    throw ConfigError("WaypointSpec: points and tolerances must have equal length");
  if (points.empty()) throw ConfigError("WaypointSpec: at least one waypoint required");
  for (double t : tolerances)
    if (!(t > 0)) throw ConfigError("WaypointSpec: tolerances must be positive");
}

STField rasterize_density(std::span<const Streamline> streamlines, const VolumeGrid& grid) {
  STField density(grid, 2);
  const double half_voxel = 0.5 * std::min({grid.spacing[0], grid.spacing[1], grid.spacing[2]});

  for (const Streamline& line : streamlines) {
    if (line.points.size() < 2) continue;
    for (size_t i = 0; i + 1 < line.points.size(); ++i) {
      const Eigen::Vector3d delta = line.points[i + 1] - line.points[i];
      const double len = delta.norm();
      if (len == 0) continue;
      const Eigen::Vector3d tangent = delta / len;
      const sta::SphericalCoeffs y2 = sta::eval_sph_harmonics(2, tangent);

      const int pieces = std::max(1, static_cast<int>(std::ceil(len / half_voxel)));
      const double piece_len = len / pieces;
      for (int p = 0; p < pieces; ++p) {
        const Eigen::Vector3d mid = line.points[i] + delta * ((p + 0.5) / pieces);
        const Eigen::Vector3d v = grid.to_voxel(mid);
        const int x = static_cast<int>(std::lround(v.x()));
        const int y = static_cast<int>(std::lround(v.y()));
        const int z = static_cast<int>(std::lround(v.z()));
        if (!grid.contains(x, y, z)) continue;
        field::cplx* dst = density.voxel(x, y, z);
        for (int m = -2; m <= 2; ++m) dst[m + 2] += piece_len * y2(m);
      }
    }
  }
  return density;
}

TractLabel rasterize_label(std::span<const Streamline> streamlines, const VolumeGrid& grid,
                           double epsilon) {
  if (!(epsilon > 0)) throw ConfigError("rasterize_label: epsilon must be positive");
  TractLabel label{rasterize_density(streamlines, grid), epsilon};
  STField& f = label.field;
  const size_t nvox = grid.voxel_count();
  for (size_t vox = 0; vox < nvox; ++vox) {
    const double scale = 1.0 / (f.magnitude(vox) + epsilon);
    field::cplx* v = f.voxel(vox);
    for (int c = 0; c < 5; ++c) v[c] *= scale;
  }
  return label;
}

namespace {

bool passes_in_order(const std::vector<Eigen::Vector3d>& pts, const WaypointSpec& spec) {
  size_t start = 0;
  for (size_t w = 0; w < spec.points.size(); ++w) {
    bool found = false;
    for (size_t i = start; i < pts.size(); ++i) {
      if ((pts[i] - spec.points[w]).norm() < spec.tolerances[w]) {
        start = i;  // next waypoint may reuse this index (non-decreasing)
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  return true;
}

}  // namespace

std::vector<Streamline> select_tract(std::span<const Streamline> streamlines,
                                     const WaypointSpec& spec) {
  spec.validate();
  std::vector<Streamline> out;
  for (const Streamline& line : streamlines) {
    if (passes_in_order(line.points, spec)) {
      out.push_back(line);
      continue;
    }
    std::vector<Eigen::Vector3d> reversed(line.points.rbegin(), line.points.rend());
    if (passes_in_order(reversed, spec)) out.push_back(line);
  }
  return out;
}

void PhantomSpec::validate() const {
  grid.validate();
  if (gradients.size() != bvalues.size())
    throw ConfigError("PhantomSpec: gradients and bvalues must have equal length");
  if (gradients.empty()) throw ConfigError("PhantomSpec: gradient table is empty");
  if (noise_sigma < 0) throw ConfigError("PhantomSpec: noise sigma must be non-negative");
  if (!(b0_value > 0)) throw ConfigError("PhantomSpec: b0 value must be positive");
  for (const auto& b : bundles) {
    if (!(b.radius > 0)) throw ConfigError("PhantomSpec: bundle radius must be positive");
    if (b.kind == BundleSpec::Kind::Line && (b.to - b.from).norm() == 0)
      throw ConfigError("PhantomSpec: degenerate line bundle");
  }
  if (!(streamline_spacing > 0) || !(streamline_step > 0))
    throw ConfigError("PhantomSpec: streamline spacing and step must be positive");
}

namespace {

struct CenterlinePoint {
  Eigen::Vector3d pos;
  Eigen::Vector3d tangent;
};

/// Dense sampling of a bundle's centerline.
std::vector<CenterlinePoint> sample_centerline(const BundleSpec& b, double step) {
  std::vector<CenterlinePoint> pts;
  if (b.kind == BundleSpec::Kind::Line) {
    const Eigen::Vector3d d = b.to - b.from;
    const double len = d.norm();
    const Eigen::Vector3d t = d / len;
    const int n = std::max(2, static_cast<int>(std::ceil(len / step)) + 1);
    for (int i = 0; i < n; ++i)
      pts.push_back({b.from + d * (static_cast<double>(i) / (n - 1)), t});
  } else {
    const Eigen::Vector3d n = b.normal.normalized();
    Eigen::Vector3d u = n.unitOrthogonal();
    Eigen::Vector3d v = n.cross(u);
    const double span = std::abs(b.angle1 - b.angle0) * b.arc_radius;
    const int count = std::max(2, static_cast<int>(std::ceil(span / step)) + 1);
    for (int i = 0; i < count; ++i) {
      const double a = b.angle0 + (b.angle1 - b.angle0) * i / (count - 1);
      pts.push_back({b.center + b.arc_radius * (std::cos(a) * u + std::sin(a) * v),
                     (-std::sin(a) * u + std::cos(a) * v) *
                         (b.angle1 >= b.angle0 ? 1.0 : -1.0)});
    }
  }
  return pts;
}

/// Closest centerline sample; returns squared distance.
double closest_point(const std::vector<CenterlinePoint>& line, const Eigen::Vector3d& p,
                     Eigen::Vector3d* tangent) {
  double best = std::numeric_limits<double>::max();
  for (const auto& c : line) {
    const double d2 = (p - c.pos).squaredNorm();
    if (d2 < best) {
      best = d2;
      *tangent = c.tangent;
    }
  }
  return best;
}

/// Frame (u, v) orthogonal to the mean tangent, used to lay out the
/// ground-truth parallel lines.
void bundle_frame(const BundleSpec& b, Eigen::Vector3d* axis_u, Eigen::Vector3d* axis_v) {
  Eigen::Vector3d t;
  if (b.kind == BundleSpec::Kind::Line)
    t = (b.to - b.from).normalized();
  else
    t = b.normal.normalized();
  *axis_u = t.unitOrthogonal();
  *axis_v = t.cross(*axis_u);
}

}  // namespace

std::vector<Eigen::Vector3d> fibonacci_directions(int count) {
  std::vector<Eigen::Vector3d> dirs;
  dirs.reserve(static_cast<size_t>(count));
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (int i = 0; i < count; ++i) {
    const double z = 1.0 - (2.0 * i + 1.0) / count;
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double a = golden * i;
    dirs.emplace_back(r * std::cos(a), r * std::sin(a), z);
  }
  return dirs;
}

Phantom generate_phantom(const PhantomSpec& spec) {
  spec.validate();
  Phantom out;
  out.dwi.grid = spec.grid;
  out.dwi.gradients = spec.gradients;
  out.dwi.bvalues = spec.bvalues;

  const size_t nvox = spec.grid.voxel_count();
  const size_t ngrad = spec.gradients.size();
  out.dwi.b0.assign(nvox, spec.b0_value);
  out.dwi.dwi.assign(ngrad, std::vector<double>(nvox));

  std::vector<std::vector<CenterlinePoint>> centerlines;
  for (const auto& b : spec.bundles)
    centerlines.push_back(sample_centerline(b, 0.25 * b.radius));

  // Noise-free attenuation volumes.
  std::vector<Eigen::Vector3d> tangents(spec.bundles.size());
  std::vector<bool> inside(spec.bundles.size());
  size_t flat = 0;
  for (int z = 0; z < spec.grid.dims[2]; ++z)
    for (int y = 0; y < spec.grid.dims[1]; ++y)
      for (int x = 0; x < spec.grid.dims[0]; ++x, ++flat) {
        const Eigen::Vector3d p = spec.grid.voxel_center(x, y, z);
        int hits = 0;
        for (size_t bi = 0; bi < spec.bundles.size(); ++bi) {
          const double d2 = closest_point(centerlines[bi], p, &tangents[bi]);
          inside[bi] = d2 <= spec.bundles[bi].radius * spec.bundles[bi].radius;
          hits += inside[bi];
        }
        for (size_t gi = 0; gi < ngrad; ++gi) {
          const double b = out.dwi.bvalues[gi];
          double att;
          if (hits == 0) {
            att = std::exp(-b * spec.background_adc);
          } else {
            att = 0;  // overlapping bundles blend by volume fraction
            for (size_t bi = 0; bi < spec.bundles.size(); ++bi) {
              if (!inside[bi]) continue;
              const double ct = spec.gradients[gi].dot(tangents[bi]);
              const auto& bu = spec.bundles[bi];
              att += std::exp(-b * (bu.d_perp + (bu.d_parallel - bu.d_perp) * ct * ct));
            }
            att /= hits;
          }
          out.dwi.dwi[gi][flat] = spec.b0_value * att;
        }
      }

  if (spec.noise_sigma > 0) {
    Rng rng(spec.seed);
    // Rician: magnitude of the complex signal plus circular Gaussian noise.
    auto rician = [&](double v) {
      const double re = v + spec.noise_sigma * rng.normal();
      const double im = spec.noise_sigma * rng.normal();
      return std::hypot(re, im);
    };
    for (double& v : out.dwi.b0) v = rician(v);
    for (auto& vol : out.dwi.dwi)
      for (double& v : vol) v = rician(v);
  }

  // Ground truth: centerline-parallel lines on a square lattice within the
  // tube radius.
  for (size_t bi = 0; bi < spec.bundles.size(); ++bi) {
    const auto& b = spec.bundles[bi];
    Eigen::Vector3d u, v;
    bundle_frame(b, &u, &v);
    const auto& center = centerlines[bi];
    const int reach = static_cast<int>(std::floor(b.radius / spec.streamline_spacing));
    for (int iu = -reach; iu <= reach; ++iu)
      for (int iv = -reach; iv <= reach; ++iv) {
        const Eigen::Vector3d offset =
            (iu * spec.streamline_spacing) * u + (iv * spec.streamline_spacing) * v;
        if (offset.norm() > b.radius) continue;
        Streamline line;
        for (size_t ci = 0; ci < center.size(); ++ci) {
          const Eigen::Vector3d p = center[ci].pos + offset;
          if (line.points.empty() || (p - line.points.back()).norm() >= spec.streamline_step)
            line.points.push_back(p);
        }
        if (line.points.size() >= 2) out.truth.push_back(std::move(line));
      }
  }
  return out;
}

// ---- TRKS1 io ----

void write_trks(const std::filesystem::path& path, std::span<const Streamline> streamlines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write("TRKS1\0\0\0", 8);
  const uint32_t count = static_cast<uint32_t>(streamlines.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const Streamline& line : streamlines) {
    const uint32_t npts = static_cast<uint32_t>(line.points.size());
    out.write(reinterpret_cast<const char*>(&npts), 4);
    for (const auto& p : line.points) {
      const float xyz[3] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                            static_cast<float>(p.z())};
      out.write(reinterpret_cast<const char*>(xyz), 12);
    }
  }
  if (!out) throw DataError("streamline write failed");
}

std::vector<Streamline> read_trks(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open for reading: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, "TRKS1\0\0\0", 8) != 0)
    throw DataError("not a TRKS1 file: " + path.string());
  uint32_t count = 0;
  in.read(reinterpret_cast<char*>(&count), 4);
  if (!in) throw DataError("truncated TRKS1 file");
  std::vector<Streamline> out(count);
  for (auto& line : out) {
    uint32_t npts = 0;
    in.read(reinterpret_cast<char*>(&npts), 4);
    if (!in) throw DataError("truncated TRKS1 file");
    line.points.resize(npts);
    for (auto& p : line.points) {
      float xyz[3];
      in.read(reinterpret_cast<char*>(xyz), 12);
      if (in.gcount() != 12) throw DataError("truncated TRKS1 file");
      p = Eigen::Vector3d(xyz[0], xyz[1], xyz[2]);
    }
  }
  return out;
}

}  // namespace hamlet::tract
