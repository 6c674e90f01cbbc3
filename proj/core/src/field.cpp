#include "hamlet/field.hpp"

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are unsupported");

namespace hamlet::field {

void STField::sample_world(const Eigen::Vector3d& world, cplx* out) const {
  const Eigen::Vector3d v = grid_.to_voxel(world);
  const int nc = channels();

  double cx = std::clamp(v.x(), 0.0, static_cast<double>(grid_.dims[0] - 1));
  double cy = std::clamp(v.y(), 0.0, static_cast<double>(grid_.dims[1] - 1));
  double cz = std::clamp(v.z(), 0.0, static_cast<double>(grid_.dims[2] - 1));

  const int x0 = std::min(static_cast<int>(cx), grid_.dims[0] - 1);
  const int y0 = std::min(static_cast<int>(cy), grid_.dims[1] - 1);
  const int z0 = std::min(static_cast<int>(cz), grid_.dims[2] - 1);
  const int x1 = std::min(x0 + 1, grid_.dims[0] - 1);
  const int y1 = std::min(y0 + 1, grid_.dims[1] - 1);
  const int z1 = std::min(z0 + 1, grid_.dims[2] - 1);
  const double fx = cx - x0, fy = cy - y0, fz = cz - z0;

  for (int c = 0; c < nc; ++c) out[c] = 0;
  const struct {
    int x, y, z;
    double w;
  } corners[8] = {
      {x0, y0, z0, (1 - fx) * (1 - fy) * (1 - fz)}, {x1, y0, z0, fx * (1 - fy) * (1 - fz)},
      {x0, y1, z0, (1 - fx) * fy * (1 - fz)},       {x1, y1, z0, fx * fy * (1 - fz)},
      {x0, y0, z1, (1 - fx) * (1 - fy) * fz},       {x1, y0, z1, fx * (1 - fy) * fz},
      {x0, y1, z1, (1 - fx) * fy * fz},             {x1, y1, z1, fx * fy * fz},
  };
  for (const auto& corner : corners) {
    if (corner.w == 0.0) continue;
    const cplx* src = voxel(corner.x, corner.y, corner.z);
    for (int c = 0; c < nc; ++c) out[c] += corner.w * src[c];
  }
}

void DwiVolume::validate() const {
  grid.validate();
  if (b0.size() != grid.voxel_count()) throw DataError("DwiVolume: b0 size mismatch");
  if (gradients.size() != dwi.size() || gradients.size() != bvalues.size())
    throw DataError("DwiVolume: gradient table and volume count mismatch");
  for (const auto& g : gradients)
    if (std::abs(g.norm() - 1.0) > 1e-6)
      throw DataError("DwiVolume: gradient directions must be unit length");
  for (const auto& vol : dwi)
    if (vol.size() != grid.voxel_count()) throw DataError("DwiVolume: volume size mismatch");
}

double DwiVolume::max_bvalue() const {
  double best = 0;
  for (double b : bvalues) best = std::max(best, b);
  return best;
}

namespace {

class Writer {
public:
  explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw DataError("cannot open for writing: " + path.string());
  }
  void bytes(const void* p, size_t n) { out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n)); }
  void u32(uint32_t v) { bytes(&v, 4); }
  void f64(double v) { bytes(&v, 8); }
  void f32(float v) { bytes(&v, 4); }
  void scalar(double v, Precision p) {
    if (p == Precision::Float64)
      f64(v);
    else
      f32(static_cast<float>(v));
  }
  void check() {
    if (!out_) throw DataError("write failed");
  }

private:
  std::ofstream out_;
};

class Reader {
public:
  explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw DataError("cannot open for reading: " + path.string());
  }
  void bytes(void* p, size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n))
      throw DataError("unexpected end of file");
  }
  uint32_t u32() {
    uint32_t v;
    bytes(&v, 4);
    return v;
  }
  double f64() {
    double v;
    bytes(&v, 8);
    return v;
  }
  float f32() {
    float v;
    bytes(&v, 4);
    return v;
  }
  double scalar(Precision p) { return p == Precision::Float64 ? f64() : static_cast<double>(f32()); }

private:
  std::ifstream in_;
};

Precision parse_precision(uint32_t v) {
  if (v > 1) throw DataError("unknown precision flag");
  return static_cast<Precision>(v);
}

void write_grid(Writer& w, const VolumeGrid& g) {
  for (int a = 0; a < 3; ++a) w.u32(static_cast<uint32_t>(g.dims[a]));
  for (int a = 0; a < 3; ++a) w.f64(g.spacing[a]);
  for (int a = 0; a < 3; ++a) w.f64(g.origin[a]);
}

VolumeGrid read_grid(Reader& r) {
  VolumeGrid g;
  for (int a = 0; a < 3; ++a) g.dims[a] = static_cast<int>(r.u32());
  for (int a = 0; a < 3; ++a) g.spacing[a] = r.f64();
  for (int a = 0; a < 3; ++a) g.origin[a] = r.f64();
  g.validate();
  return g;
}

}  // namespace

void write_stf(const std::filesystem::path& path, const STField& f, Precision prec) {
  Writer w(path);
  w.bytes("STF1", 4);
  w.u32(1);  // version
  w.u32(static_cast<uint32_t>(f.order()));
  write_grid(w, f.grid());
  w.u32(static_cast<uint32_t>(prec));
  w.u32(0);  // pad to 8-byte boundary
  for (const cplx& v : f.data()) {
    w.scalar(v.real(), prec);
    w.scalar(v.imag(), prec);
  }
  w.check();
}

STField read_stf(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "STF1", 4) != 0) throw DataError("not an STF1 file: " + path.string());
  if (r.u32() != 1) throw DataError("unsupported STF1 version");
  const int order = static_cast<int>(r.u32());
  const VolumeGrid grid = read_grid(r);
  const Precision prec = parse_precision(r.u32());
  r.u32();  // pad

  STField f(grid, order);
  for (cplx& v : f.data()) {
    const double re = r.scalar(prec);
    const double im = r.scalar(prec);
    v = cplx(re, im);
  }
  return f;
}

void write_dwv(const std::filesystem::path& path, const DwiVolume& dwi, Precision prec) {
  dwi.validate();
  Writer w(path);
  w.bytes("DWV1", 4);
  w.u32(1);  // version
  write_grid(w, dwi.grid);
  w.u32(static_cast<uint32_t>(prec));
  w.u32(0);
  w.u32(0);  // pad to 8-byte boundary
  w.u32(static_cast<uint32_t>(dwi.gradients.size()));
  for (size_t i = 0; i < dwi.gradients.size(); ++i) {
    for (int a = 0; a < 3; ++a) w.f64(dwi.gradients[i](a));
    w.f64(dwi.bvalues[i]);
  }
  for (double v : dwi.b0) w.scalar(v, prec);
  for (const auto& vol : dwi.dwi)
    for (double v : vol) w.scalar(v, prec);
  w.check();
}

DwiVolume read_dwv(const std::filesystem::path& path) {
  Reader r(path);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "DWV1", 4) != 0) throw DataError("not a DWV1 file: " + path.string());
  if (r.u32() != 1) throw DataError("unsupported DWV1 version");
  DwiVolume dwi;
  dwi.grid = read_grid(r);
  const Precision prec = parse_precision(r.u32());
  r.u32();
  r.u32();  // pad
  const uint32_t ngrad = r.u32();
  dwi.gradients.resize(ngrad);
  dwi.bvalues.resize(ngrad);
  for (uint32_t i = 0; i < ngrad; ++i) {
    for (int a = 0; a < 3; ++a) dwi.gradients[i](a) = r.f64();
    dwi.bvalues[i] = r.f64();
  }
  const size_t nvox = dwi.grid.voxel_count();
  dwi.b0.resize(nvox);
  for (double& v : dwi.b0) v = r.scalar(prec);
  dwi.dwi.assign(ngrad, std::vector<double>(nvox));
  for (auto& vol : dwi.dwi)
    for (double& v : vol) v = r.scalar(prec);
  dwi.validate();
  return dwi;
}

}  // namespace hamlet::field
