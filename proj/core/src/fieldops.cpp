#include "hamlet/fieldops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <numbers>

#include <fftw3.h>

namespace hamlet::field {

namespace {

constexpr double kPi = std::numbers::pi;
const double kInvSqrt4Pi = 1.0 / std::sqrt(4.0 * kPi);

// ---- FFT plumbing ----

/// Cached in-place c2c plans for one grid size. FFTW_ESTIMATE keeps the
/// algorithm choice (and therefore the output bits) reproducible.
class Fft3 {
public:
  static const Fft3& get(const std::array<int, 3>& dims) {
    static std::map<std::array<int, 3>, std::unique_ptr<Fft3>> cache;
    static std::mutex mutex;
    std::lock_guard lock(mutex);
    auto& slot = cache[dims];
    if (!slot) slot = std::unique_ptr<Fft3>(new Fft3(dims));
    return *slot;
  }

  void forward(cplx* data) const {
    fftw_execute_dft(fwd_, reinterpret_cast<fftw_complex*>(data),
                     reinterpret_cast<fftw_complex*>(data));
  }
  void backward(cplx* data) const {
    fftw_execute_dft(bwd_, reinterpret_cast<fftw_complex*>(data),
                     reinterpret_cast<fftw_complex*>(data));
  }

private:
  explicit Fft3(const std::array<int, 3>& dims) {
    const size_t n = static_cast<size_t>(dims[0]) * dims[1] * dims[2];
    fftw_complex* buf = fftw_alloc_complex(n);
    // x is the fastest-varying index, so it is FFTW's last dimension.
    fwd_ = fftw_plan_dft_3d(dims[2], dims[1], dims[0], buf, buf, FFTW_FORWARD,
                            FFTW_ESTIMATE | FFTW_UNALIGNED);
    bwd_ = fftw_plan_dft_3d(dims[2], dims[1], dims[0], buf, buf, FFTW_BACKWARD,
                            FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(buf);
    if (!fwd_ || !bwd_) throw Error("FFTW plan creation failed");
  }

  fftw_plan fwd_;
  fftw_plan bwd_;
};

bool fft_friendly(int n) {
  for (int p : {2, 3, 5, 7})
    while (n % p == 0) n /= p;
  return n == 1;
}

int next_fft_size(int n) {
  while (!fft_friendly(n)) ++n;
  return n;
}

struct PaddedLayout {
  std::array<int, 3> pdims;
  std::array<int, 3> lo;  // content offset inside the padded grid

  size_t volume() const {
    return static_cast<size_t>(pdims[0]) * pdims[1] * pdims[2];
  }
};

PaddedLayout padded_layout(const VolumeGrid& g, double sigma, int margin) {
  PaddedLayout out;
  const int pad = std::max(margin, static_cast<int>(std::ceil(3.0 * sigma)));
  for (int a = 0; a < 3; ++a) {
    out.pdims[a] = next_fft_size(g.dims[a] + 2 * pad);
    out.lo[a] = (out.pdims[a] - g.dims[a]) / 2;
  }
  return out;
}

/// Signed frequency index for slot i of an N-point DFT.
int signed_freq(int i, int n) { return i <= n / 2 ? i : i - n; }

/// Transform of the sampled, normalized kernel on the padded grid. The
/// sampled kernel is exactly symmetric under index negation mod N, so its
/// spectrum is real.
std::vector<double> kernel_spectrum(const PaddedLayout& lay, const RadialKernel& k) {
  const size_t n = lay.volume();
  std::vector<cplx> buf(n, cplx(0));

  if (k.kind == KernelKind::Gaussian && k.sigma <= 0.25) {
    buf[0] = 1.0;  // discrete delta
  } else {
    const double s2 = k.sigma * k.sigma;
    double sum = 0;
    size_t idx = 0;
    for (int z = 0; z < lay.pdims[2]; ++z) {
      const double dz = signed_freq(z, lay.pdims[2]);
      for (int y = 0; y < lay.pdims[1]; ++y) {
        const double dy = signed_freq(y, lay.pdims[1]);
        for (int x = 0; x < lay.pdims[0]; ++x, ++idx) {
          const double dx = signed_freq(x, lay.pdims[0]);
          const double r2 = dx * dx + dy * dy + dz * dz;
          const double g = std::exp(-0.5 * r2 / s2);
          sum += g;
          buf[idx] = k.kind == KernelKind::Gaussian ? g : (r2 - 3.0 * s2) / (s2 * s2) * g;
        }
      }
    }
    if (k.kind == KernelKind::Gaussian) {
      for (cplx& v : buf) v /= sum;
    } else {
      // normalize against the Gaussian mass, then remove the residual mean
      // so the kernel sums to exactly zero.
      cplx mean = 0;
      for (cplx& v : buf) {
        v /= sum;
        mean += v;
      }
      mean /= static_cast<double>(n);
      for (cplx& v : buf) v -= mean;
    }
  }

  Fft3::get(lay.pdims).forward(buf.data());
  std::vector<double> spectrum(n);
  for (size_t i = 0; i < n; ++i) spectrum[i] = buf[i].real();
  return spectrum;
}

/// (2 pi i)^L R^L_m(kappa) for every padded frequency voxel, channels for
/// m = -L..L. kappa is the frequency in cycles/mm. Built by coupling
/// R^1 upward; the per-order proportionality constants are calibrated once
/// against the direct evaluation. Odd-order channels are zeroed on Nyquist
/// planes, where the lattice frequency has no well-defined sign.
class DerivativeMultiplier {
public:
  DerivativeMultiplier(const PaddedLayout& lay, const VolumeGrid& g, int order)
      : order_(order), lay_(lay) {
    if (order_ == 0) return;
    chan_.assign(static_cast<size_t>(2 * order_ + 1), std::vector<cplx>(lay.volume()));

    std::vector<const sta::CouplingTable*> tables;
    for (int l = 2; l <= order_; ++l) tables.push_back(&sta::coupling_table(l, l - 1, 1));
    const std::vector<double> corr = corrections(order_);

    const double c10 = std::sqrt(3.0 / (4.0 * kPi));
    const double c11 = std::sqrt(3.0 / (8.0 * kPi));
    const cplx il = std::pow(cplx(0, 2.0 * kPi), order_);

    std::vector<cplx> prev(2 * order_ + 1), cur(2 * order_ + 1);
    size_t idx = 0;
    for (int z = 0; z < lay.pdims[2]; ++z) {
      const bool nyq_z = (lay.pdims[2] % 2 == 0) && z == lay.pdims[2] / 2;
      const double kz = signed_freq(z, lay.pdims[2]) / (lay.pdims[2] * g.spacing[2]);
      for (int y = 0; y < lay.pdims[1]; ++y) {
        const bool nyq_y = (lay.pdims[1] % 2 == 0) && y == lay.pdims[1] / 2;
        const double ky = signed_freq(y, lay.pdims[1]) / (lay.pdims[1] * g.spacing[1]);
        for (int x = 0; x < lay.pdims[0]; ++x, ++idx) {
          const bool nyq_x = (lay.pdims[0] % 2 == 0) && x == lay.pdims[0] / 2;
          const double kx = signed_freq(x, lay.pdims[0]) / (lay.pdims[0] * g.spacing[0]);
          if ((order_ % 2) && (nyq_x || nyq_y || nyq_z)) {
            for (int c = 0; c < 2 * order_ + 1; ++c) chan_[static_cast<size_t>(c)][idx] = 0;
            continue;
          }
          // R^1 channels, then couple upward to the requested order.
          const cplx one[3] = {c11 * cplx(kx, -ky), cplx(c10 * kz), -c11 * cplx(kx, ky)};
          prev[0] = one[0];
          prev[1] = one[1];
          prev[2] = one[2];
          for (int l = 2; l <= order_; ++l) {
            const sta::CouplingTable& tab = *tables[static_cast<size_t>(l - 2)];
            for (int m = -l; m <= l; ++m) {
              cplx acc = 0;
              for (const auto& t : tab.terms_for(m))
                acc += t.coeff * prev[static_cast<size_t>(t.m1 + l - 1)] *
                       one[static_cast<size_t>(t.m2 + 1)];
              cur[static_cast<size_t>(m + l)] = acc * corr[static_cast<size_t>(l)];
            }
            std::copy(cur.begin(), cur.begin() + 2 * l + 1, prev.begin());
          }
          for (int c = 0; c < 2 * order_ + 1; ++c)
            chan_[static_cast<size_t>(c)][idx] = il * prev[static_cast<size_t>(c)];
        }
      }
    }
  }

  /// Multiplier value for channel m at flat padded index.
  cplx value(int m, size_t idx) const {
    if (order_ == 0) return kInvSqrt4Pi;
    return chan_[static_cast<size_t>(m + order_)][idx];
  }

private:
  // corr[l] scales the stretched coupling <R^{l-1} o R^1>_l onto R^l.
  static std::vector<double> corrections(int up_to) {
    static std::vector<double> table{0.0, 1.0};
    static std::mutex mutex;
    std::lock_guard lock(mutex);
    const Eigen::Vector3d probe(0.3234, -0.4771, 0.8192);
    while (static_cast<int>(table.size()) <= up_to) {
      const int l = static_cast<int>(table.size());
      const sta::SphericalCoeffs direct = sta::solid_harmonic(l, probe);
      const sta::SphericalCoeffs prev = sta::solid_harmonic(l - 1, probe);
      const sta::SphericalCoeffs one = sta::solid_harmonic(1, probe);
      const sta::SphericalCoeffs coupled = sta::spherical_product(l, prev, one);
      cplx num = 0;
      double den = 0;
      for (int m = -l; m <= l; ++m) {
        num += std::conj(coupled(m)) * direct(m);
        den += std::norm(coupled(m));
      }
      table.push_back((num / den).real());
    }
    return table;
  }

  int order_;
  PaddedLayout lay_;
  std::vector<std::vector<cplx>> chan_;
};

void embed_channel(const STField& f, int m, const PaddedLayout& lay, cplx* out) {
  std::fill(out, out + lay.volume(), cplx(0));
  const int ch = m + f.order();
  const auto& g = f.grid();
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y) {
      const cplx* src = f.voxel(0, y, z);
      cplx* dst = out + (static_cast<size_t>(z + lay.lo[2]) * lay.pdims[1] + (y + lay.lo[1])) *
                            lay.pdims[0] +
                  lay.lo[0];
      for (int x = 0; x < g.dims[0]; ++x) dst[x] = src[static_cast<size_t>(x) * f.channels() + ch];
    }
}

void crop_channel(const cplx* padded, const PaddedLayout& lay, STField& f, int m) {
  const int ch = m + f.order();
  const auto& g = f.grid();
  const double scale = 1.0 / static_cast<double>(lay.volume());
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y) {
      const cplx* src = padded + (static_cast<size_t>(z + lay.lo[2]) * lay.pdims[1] +
                                  (y + lay.lo[1])) *
                                     lay.pdims[0] +
                        lay.lo[0];
      cplx* dst = f.voxel(0, y, z);
      for (int x = 0; x < g.dims[0]; ++x) dst[static_cast<size_t>(x) * f.channels() + ch] = scale * src[x];
    }
}

}  // namespace

STField linear_feature(const STField& a, int L, int J, const RadialKernel& k, int margin) {
  const int j = a.order();
  if (L < 0 || J < std::abs(L - j) || J > L + j)
    throw ConfigError("linear_feature: triangle inequality violated");

  const PaddedLayout lay = padded_layout(a.grid(), k.sigma, margin);
  const Fft3& fft = Fft3::get(lay.pdims);
  const size_t pvol = lay.volume();

  // Smoothed input channels in the Fourier domain.
  const std::vector<double> khat = kernel_spectrum(lay, k);
  std::vector<std::vector<cplx>> ahat(static_cast<size_t>(a.channels()));
  for (int m2 = -j; m2 <= j; ++m2) {
    auto& chan = ahat[static_cast<size_t>(m2 + j)];
    chan.resize(pvol);
    embed_channel(a, m2, lay, chan.data());
    fft.forward(chan.data());
    for (size_t i = 0; i < pvol; ++i) chan[i] *= khat[i];
  }

  const DerivativeMultiplier dmult(lay, a.grid(), L);
  const sta::CouplingTable& table = sta::coupling_table(J, L, j);

  STField out(a.grid(), J);
  std::vector<cplx> buf(pvol);
  for (int m = -J; m <= J; ++m) {
    std::fill(buf.begin(), buf.end(), cplx(0));
    for (const auto& t : table.terms_for(m)) {
      const auto& chan = ahat[static_cast<size_t>(t.m2 + j)];
      for (size_t i = 0; i < pvol; ++i) buf[i] += t.coeff * dmult.value(t.m1, i) * chan[i];
    }
    fft.backward(buf.data());
    crop_channel(buf.data(), lay, out, m);
  }
  return out;
}

STField convolve_radial(const STField& f, const RadialKernel& k, int margin) {
  const PaddedLayout lay = padded_layout(f.grid(), k.sigma, margin);
  const Fft3& fft = Fft3::get(lay.pdims);
  const std::vector<double> khat = kernel_spectrum(lay, k);

  STField out(f.grid(), f.order());
  std::vector<cplx> buf(lay.volume());
  for (int m = -f.order(); m <= f.order(); ++m) {
    embed_channel(f, m, lay, buf.data());
    fft.forward(buf.data());
    for (size_t i = 0; i < buf.size(); ++i) buf[i] *= khat[i];
    fft.backward(buf.data());
    crop_channel(buf.data(), lay, out, m);
  }
  return out;
}

VolumeGrid downsampled_grid(const VolumeGrid& g, double gamma) {
  if (!(gamma > 1.0)) throw ConfigError("resample: gamma must exceed 1");
  VolumeGrid out;
  for (int a = 0; a < 3; ++a) {
    out.dims[a] = static_cast<int>(std::ceil(g.dims[a] / gamma));
    if (out.dims[a] < 4) throw DataError("resample: grid too small after downsampling");
    const double offset = 0.5 * ((g.dims[a] - 1) - (out.dims[a] - 1) * gamma);
    out.spacing[a] = g.spacing[a] * gamma;
    out.origin[a] = g.origin[a] + offset * g.spacing[a];
  }
  return out;
}

STField resample_to(const STField& f, const VolumeGrid& target) {
  STField out(target, f.order());
  const size_t nc = static_cast<size_t>(out.channels());
  size_t flat = 0;
  for (int z = 0; z < target.dims[2]; ++z)
    for (int y = 0; y < target.dims[1]; ++y)
      for (int x = 0; x < target.dims[0]; ++x, ++flat)
        f.sample_world(target.voxel_center(x, y, z), out.data().data() + flat * nc);
  return out;
}

STField resample(const STField& f, double gamma, ResampleDirection dir, double presmooth_sigma) {
  if (!(gamma > 1.0)) throw ConfigError("resample: gamma must exceed 1");
  if (dir == ResampleDirection::Down) {
    const VolumeGrid target = downsampled_grid(f.grid(), gamma);
    const STField smoothed =
        presmooth_sigma > 0 ? convolve_radial(f, gaussian(presmooth_sigma)) : f;
    return resample_to(smoothed, target);
  }

  const VolumeGrid& g = f.grid();
  VolumeGrid target;
  for (int a = 0; a < 3; ++a) {
    target.dims[a] = static_cast<int>(std::lround(g.dims[a] * gamma));
    target.spacing[a] = g.spacing[a] / gamma;
    const double center = g.origin[a] + 0.5 * (g.dims[a] - 1) * g.spacing[a];
    target.origin[a] = center - 0.5 * (target.dims[a] - 1) * target.spacing[a];
  }
  return resample_to(f, target);
}

namespace {

double taper_profile(double u, double n, int margin) {
  if (margin <= 0) return 1.0;
  const double edge = std::min(u, (n - 1.0) - u);
  if (edge <= 0) return 0.0;
  if (edge >= margin) return 1.0;
  return 0.5 * (1.0 - std::cos(kPi * edge / margin));
}

}  // namespace

std::vector<double> window_weights(const VolumeGrid& g, int margin) {
  std::array<std::vector<double>, 3> axis;
  for (int a = 0; a < 3; ++a) {
    axis[a].resize(static_cast<size_t>(g.dims[a]));
    for (int i = 0; i < g.dims[a]; ++i)
      axis[a][static_cast<size_t>(i)] = taper_profile(i, g.dims[a], margin);
  }
  std::vector<double> w(g.voxel_count());
  size_t idx = 0;
  for (int z = 0; z < g.dims[2]; ++z)
    for (int y = 0; y < g.dims[1]; ++y)
      for (int x = 0; x < g.dims[0]; ++x, ++idx)
        w[idx] = axis[0][static_cast<size_t>(x)] * axis[1][static_cast<size_t>(y)] *
                 axis[2][static_cast<size_t>(z)];
  return w;
}

double window_weight_world(const VolumeGrid& g, int margin, const Eigen::Vector3d& world) {
  const Eigen::Vector3d v = g.to_voxel(world);
  double w = 1.0;
  for (int a = 0; a < 3; ++a) w *= taper_profile(v(a), g.dims[a], margin);
  return w;
}

STField window(const STField& f, int margin) {
  const std::vector<double> w = window_weights(f.grid(), margin);
  STField out = f;
  const int nc = out.channels();
  for (size_t vox = 0; vox < w.size(); ++vox) {
    cplx* v = out.voxel(vox);
    for (int c = 0; c < nc; ++c) v[c] *= w[vox];
  }
  return out;
}

std::map<int, STField> sh_project(const DwiVolume& dwi, double shell, int lmax) {
  dwi.validate();
  if (lmax < 0 || lmax % 2) throw ConfigError("sh_project: lmax must be even and non-negative");

  std::vector<size_t> idx;
  for (size_t i = 0; i < dwi.bvalues.size(); ++i)
    if (std::abs(dwi.bvalues[i] - shell) <= 1.0) idx.push_back(i);

  // Distinct directions up to antipodal equivalence.
  std::vector<Eigen::Vector3d> distinct;
  for (size_t i : idx) {
    const Eigen::Vector3d& d = dwi.gradients[i];
    bool dup = false;
    for (const auto& e : distinct)
      if ((d - e).norm() < 1e-6 || (d + e).norm() < 1e-6) {
        dup = true;
        break;
      }
    if (!dup) distinct.push_back(d);
  }
  const int ncoef = (lmax + 1) * (lmax + 2) / 2;
  if (static_cast<int>(distinct.size()) < ncoef)
    throw DataError("sh_project: insufficient distinct gradient directions on shell");

  // Real design matrix: per even order, m = 0 plus (Re, Im) pairs for m > 0.
  const int rows = static_cast<int>(idx.size());
  Eigen::MatrixXd design(rows, ncoef);
  for (int r = 0; r < rows; ++r) {
    int col = 0;
    for (int j = 0; j <= lmax; j += 2) {
      const sta::SphericalCoeffs y = sta::eval_sph_harmonics(j, dwi.gradients[idx[static_cast<size_t>(r)]]);
      design(r, col++) = y(0).real();
      for (int m = 1; m <= j; ++m) {
        design(r, col++) = 2.0 * y(m).real();
        design(r, col++) = -2.0 * y(m).imag();
      }
    }
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  if (qr.rank() < ncoef)
    throw DataError("sh_project: gradient directions are degenerate for this lmax");

  std::map<int, STField> out;
  for (int j = 0; j <= lmax; j += 2) out.emplace(j, STField(dwi.grid, j));

  Eigen::VectorXd rhs(rows), coef(ncoef);
  const size_t nvox = dwi.grid.voxel_count();
  for (size_t vox = 0; vox < nvox; ++vox) {
    if (!(dwi.b0[vox] > 0)) continue;  // masked, stays zero
    const double inv_b0 = 1.0 / dwi.b0[vox];
    for (int r = 0; r < rows; ++r) rhs(r) = dwi.dwi[idx[static_cast<size_t>(r)]][vox] * inv_b0;
    coef = qr.solve(rhs);
    int col = 0;
    for (int j = 0; j <= lmax; j += 2) {
      STField& f = out.at(j);
      cplx* v = f.voxel(vox);
      v[j] = coef(col++);  // m = 0
      for (int m = 1; m <= j; ++m) {
        const cplx c(coef(col), coef(col + 1));
        col += 2;
        v[j + m] = c;
        v[j - m] = (m % 2 ? -1.0 : 1.0) * std::conj(c);
      }
    }
  }
  return out;
}

}  // namespace hamlet::field
