#include "hamlet/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hamlet::model {

namespace {

using json = nlohmann::ordered_json;

std::vector<double> magnitudes(const STField& f) {
  std::vector<double> mag(f.grid().voxel_count());
  for (size_t v = 0; v < mag.size(); ++v) mag[v] = f.magnitude(v);
  return mag;
}

void axpy_field(STField& out, double w, const STField& f) {
  auto dst = out.data();
  auto src = f.data();
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += w * src[i];
}

void scale_by_magnitude(STField& f, const std::vector<double>& mag) {
  const int nc = f.channels();
  for (size_t v = 0; v < mag.size(); ++v) {
    field::cplx* p = f.voxel(v);
    for (int c = 0; c < nc; ++c) p[c] *= mag[v];
  }
}

/// Lazily materializes the feature columns of one scale in their canonical
/// order: [upsampled previous output] [quad features, magnitude-windowed on
/// upper scales] [link features].
struct ScaleColumns {
  const features::ScaleConfig& cfg;
  const std::vector<STField>& lin;
  const STField* y_up = nullptr;                    // upper scales only
  const std::array<STField, 3>* powers = nullptr;   // spherical powers of y_up
  const std::vector<double>* mag = nullptr;         // |y_up| per voxel
  field::RadialKernel gpp;
  int margin = 3;

  int columns() const {
    return (y_up ? 1 : 0) + static_cast<int>(cfg.quad_specs.size()) +
           static_cast<int>(cfg.link_specs.size());
  }

  STField column(int idx) const {
    if (y_up) {
      if (idx == 0) return *y_up;
      --idx;
    }
    if (idx < static_cast<int>(cfg.quad_specs.size())) {
      const auto& q = cfg.quad_specs[static_cast<size_t>(idx)];
      STField f = features::compute_quad_feature(lin[static_cast<size_t>(q.left)],
                                                 lin[static_cast<size_t>(q.right)], q, gpp, margin);
      if (y_up) scale_by_magnitude(f, *mag);
      return f;
    }
    idx -= static_cast<int>(cfg.quad_specs.size());
    const auto& l = cfg.link_specs[static_cast<size_t>(idx)];
    return features::compute_link_feature(lin[static_cast<size_t>(l.b)],
                                          (*powers)[static_cast<size_t>(l.k - 1)], l, gpp, margin);
  }
};

constexpr int kColumnChunk = 16;

/// out = sum_i eff(i) * column(i), accumulated in ascending column order so
/// training-time predictions and later forward passes are bit-identical.
STField weighted_column_sum(const ScaleColumns& src, const VolumeGrid& grid,
                            const Eigen::VectorXd& eff) {
  STField out(grid, 2);
  const int ncol = src.columns();
  std::vector<STField> chunk(kColumnChunk);
  for (int base = 0; base < ncol; base += kColumnChunk) {
    const int n = std::min(kColumnChunk, ncol - base);
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) chunk[static_cast<size_t>(i)] = src.column(base + i);
    for (int i = 0; i < n; ++i)
      axpy_field(out, eff(base + i), chunk[static_cast<size_t>(i)]);
  }
  return out;
}

Eigen::VectorXd effective_weights(const ScaleWeights& w) {
  Eigen::VectorXd eff(w.columns());
  int c = 0;
  if (w.has_previous) eff(c++) = w.kappa;
  for (int i = 0; i < w.alpha.size(); ++i) eff(c++) = w.alpha(i);
  for (int i = 0; i < w.beta.size(); ++i) eff(c++) = w.beta(i);
  for (int i = 0; i < eff.size(); ++i) eff(i) /= w.powers(i);
  return eff;
}

const VolumeGrid& pyramid_grid(const std::map<int, STField>& data) {
  if (data.empty()) throw DataError("pyramid level holds no fields");
  return data.begin()->second.grid();
}

/// Voxels whose finest-scale window weight is at least 0.5; taper-corrupted
/// samples are excluded from the regression.
std::vector<size_t> included_voxels(const VolumeGrid& scale_grid, const VolumeGrid& finest,
                                    int margin) {
  std::vector<size_t> idx;
  idx.reserve(scale_grid.voxel_count());
  size_t flat = 0;
  for (int z = 0; z < scale_grid.dims[2]; ++z)
    for (int y = 0; y < scale_grid.dims[1]; ++y)
      for (int x = 0; x < scale_grid.dims[0]; ++x, ++flat)
        if (field::window_weight_world(finest, margin, scale_grid.voxel_center(x, y, z)) >= 0.5)
          idx.push_back(flat);
  return idx;
}

}  // namespace

void HamletModel::validate() const {
  if (scales.empty()) throw DataError("model holds no scales");
  if (scales.size() != weights.size()) throw DataError("corrupt model: scale/weight count mismatch");
  if (!(gamma > 1.0)) throw DataError("model gamma must exceed 1");
  for (size_t k = 0; k < scales.size(); ++k) {
    const auto& cfg = scales[k];
    const auto& w = weights[k];
    if (w.has_previous != (k > 0))
      throw DataError("corrupt model: previous-output column mismatch");
    if (k == 0 && !cfg.link_specs.empty())
      throw DataError("corrupt model: lowest scale cannot hold link specs");
    if (w.alpha.size() != static_cast<Eigen::Index>(cfg.quad_specs.size()) ||
        w.beta.size() != static_cast<Eigen::Index>(cfg.link_specs.size()) ||
        w.powers.size() != w.columns())
      throw DataError("corrupt model: weight vector length mismatch");
    for (int i = 0; i < w.powers.size(); ++i)
      if (!(w.powers(i) > 0)) throw DataError("corrupt model: non-positive feature power");
  }
}

double pyramid_sigma(int s, double gamma) { return 0.75 * std::pow(gamma, -s); }

DataPyramid build_pyramid(const std::map<int, STField>& finest, const std::vector<int>& scales,
                          double gamma) {
  if (finest.empty()) throw DataError("build_pyramid: no input fields");
  DataPyramid pyr;
  for (int s : scales) {
    if (s > 0) throw ConfigError("build_pyramid: scale indices must be <= 0");
    const double sigma = pyramid_sigma(s, gamma);
    const double factor = std::pow(gamma, -s);
    std::map<int, STField> level;
    for (const auto& [order, f] : finest) {
      STField smoothed = field::convolve_radial(f, field::gaussian(sigma));
      if (factor > 1.0)
        smoothed = field::resample_to(smoothed, field::downsampled_grid(f.grid(), factor));
      level.emplace(order, std::move(smoothed));
    }
    pyr.push_back(std::move(level));
  }
  return pyr;
}

std::vector<STField> build_label_pyramid(const STField& finest, const std::vector<int>& scales,
                                         double gamma) {
  std::map<int, STField> wrap{{finest.order(), finest}};
  DataPyramid pyr = build_pyramid(wrap, scales, gamma);
  std::vector<STField> out;
  for (auto& level : pyr) out.push_back(std::move(level.begin()->second));
  return out;
}

DataPyramid prepare_input(const field::DwiVolume& dwi, const HamletModel& m) {
  const double shell = m.shell < 0 ? dwi.max_bvalue() : m.shell;
  std::map<int, STField> proj = field::sh_project(dwi, shell, m.lmax);
  for (auto& [order, f] : proj) f = field::window(f, m.margin);
  std::vector<int> scales;
  for (const auto& cfg : m.scales) scales.push_back(cfg.s);
  return build_pyramid(proj, scales, m.gamma);
}

STField forward(const HamletModel& m, const DataPyramid& pyramid) {
  m.validate();
  if (pyramid.size() != m.scales.size())
    throw DataError("forward: pyramid does not match model scales");

  STField y;
  for (size_t k = 0; k < m.scales.size(); ++k) {
    const auto& cfg = m.scales[k];
    const auto& w = m.weights[k];
    const VolumeGrid& grid = pyramid_grid(pyramid[k]);

    const std::vector<STField> lin = features::compute_linear_features(
        pyramid[k], cfg.linear_specs, cfg.kernels, m.margin);

    ScaleColumns src{cfg, lin, nullptr, nullptr, nullptr,
                     field::gaussian(m.gpp_sigma), m.margin};
    STField y_up;
    std::array<STField, 3> powers;
    std::vector<double> mag;
    if (k > 0) {
      y_up = field::resample_to(y, grid);
      powers = features::spherical_powers(y_up);
      mag = magnitudes(y_up);
      src.y_up = &y_up;
      src.powers = &powers;
      src.mag = &mag;
    }
    y = weighted_column_sum(src, grid, effective_weights(w));
  }
  return y;
}

Eigen::VectorXd solve_ridge_normal(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                   double lambda, Eigen::VectorXd* powers_out) {
  if (lambda < 0) throw ConfigError("ridge: lambda must be non-negative");
  const Eigen::Index n = a.rows();
  Eigen::VectorXd powers(n);
  for (Eigen::Index i = 0; i < n; ++i)
    powers(i) = a(i, i) > 0 ? std::sqrt(a(i, i)) : 1.0;  // dead columns keep power 1

  Eigen::MatrixXd an = powers.cwiseInverse().asDiagonal() * a *
                       powers.cwiseInverse().asDiagonal();
  an.diagonal().array() += lambda;
  const Eigen::VectorXd bn = b.cwiseQuotient(powers);

  Eigen::LDLT<Eigen::MatrixXd> ldlt(an);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("ridge system could not be factorized; increase lambda");
  if (lambda == 0.0) {
    const Eigen::VectorXd d = ldlt.vectorD();
    const double dmax = d.maxCoeff();
    if (d.minCoeff() <= dmax * 1e-13)
      throw NumericError("ridge system is rank deficient with lambda = 0; use lambda > 0");
  }
  const Eigen::VectorXd u = ldlt.solve(bn);
  if (powers_out) *powers_out = powers;
  return u;
}

Eigen::VectorXd solve_ridge(const std::array<Eigen::MatrixXcd, 5>& F,
                            const std::array<Eigen::VectorXcd, 5>& Y, double lambda) {
  const Eigen::Index n = F[0].cols();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  for (int m = 0; m < 5; ++m) {
    if (F[static_cast<size_t>(m)].cols() != n ||
        F[static_cast<size_t>(m)].rows() != Y[static_cast<size_t>(m)].size())
      throw ConfigError("solve_ridge: inconsistent dimensions");
    a += (F[static_cast<size_t>(m)].adjoint() * F[static_cast<size_t>(m)]).real();
    b += (F[static_cast<size_t>(m)].adjoint() * Y[static_cast<size_t>(m)]).real();
  }
  // Plain Tikhonov on the raw weights: solve (A + lambda I) w = b.
  Eigen::MatrixXd reg = a;
  reg.diagonal().array() += lambda;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
  if (ldlt.info() != Eigen::Success)
    throw NumericError("ridge system could not be factorized; increase lambda");
  if (lambda == 0.0) {
    const Eigen::VectorXd d = ldlt.vectorD();
    if (d.minCoeff() <= d.maxCoeff() * 1e-13)
      throw NumericError("ridge system is rank deficient with lambda = 0; use lambda > 0");
  }
  return ldlt.solve(b);
}

HamletModel train(const std::vector<TrainingSample>& samples, const TrainOptions& opt,
                  TrainReport* report) {
  if (samples.empty()) throw ConfigError("train: at least one sample required");
  if (opt.configs.empty()) throw ConfigError("train: no scale configs");
  if (opt.lambda < 0) throw ConfigError("train: lambda must be non-negative");
  if (!opt.configs.front().link_specs.empty())
    throw ConfigError("train: lowest scale must not hold link specs");

  const size_t nscales = opt.configs.size();
  for (const auto& s : samples) {
    if (s.data.size() != nscales || s.labels.size() != nscales)
      throw DataError("train: sample pyramid does not match scale configs");
  }

  HamletModel m;
  m.scales = opt.configs;
  m.weights.resize(nscales);
  m.gamma = opt.gamma;
  m.lambda = opt.lambda;
  m.gpp_sigma = opt.gpp_sigma;
  m.margin = opt.margin;
  m.lmax = opt.lmax;
  m.shell = opt.shell;
  m.label_name = opt.label_name;

  if (report) report->scales.clear();

  std::vector<STField> y_prev(samples.size());

  for (size_t k = 0; k < nscales; ++k) {
    const auto& cfg = opt.configs[k];
    const bool has_prev = k > 0;
    const int nquad = static_cast<int>(cfg.quad_specs.size());
    const int nlink = static_cast<int>(cfg.link_specs.size());
    const int ncol = (has_prev ? 1 : 0) + nquad + nlink;

    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(ncol, ncol);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(ncol);
    double label_energy = 0;
    size_t total_voxels = 0;

    for (const auto& sample : samples) {
      const size_t si = static_cast<size_t>(&sample - samples.data());
      const VolumeGrid& grid = pyramid_grid(sample.data[k]);
      const std::vector<STField> lin = features::compute_linear_features(
          sample.data[k], cfg.linear_specs, cfg.kernels, opt.margin);

      ScaleColumns src{cfg, lin, nullptr, nullptr, nullptr,
                       field::gaussian(opt.gpp_sigma), opt.margin};
      STField y_up;
      std::array<STField, 3> powers;
      std::vector<double> mag;
      if (has_prev) {
        y_up = field::resample_to(y_prev[si], grid);
        powers = features::spherical_powers(y_up);
        mag = magnitudes(y_up);
        src.y_up = &y_up;
        src.powers = &powers;
        src.mag = &mag;
      }

      const std::vector<size_t> incl = included_voxels(grid, sample.finest_grid, opt.margin);
      const Eigen::Index rows = static_cast<Eigen::Index>(incl.size()) * 5;
      total_voxels += incl.size();

      Eigen::MatrixXcd F(rows, ncol);
#pragma omp parallel for schedule(dynamic)
      for (int ci = 0; ci < ncol; ++ci) {
        const STField col = src.column(ci);
        for (size_t vi = 0; vi < incl.size(); ++vi) {
          const field::cplx* v = col.voxel(incl[vi]);
          for (int c = 0; c < 5; ++c)
            F(static_cast<Eigen::Index>(vi) * 5 + c, ci) = v[c];
        }
      }
      Eigen::VectorXcd Y(rows);
      const STField& label = sample.labels[k];
      for (size_t vi = 0; vi < incl.size(); ++vi) {
        const field::cplx* v = label.voxel(incl[vi]);
        for (int c = 0; c < 5; ++c) Y(static_cast<Eigen::Index>(vi) * 5 + c) = v[c];
      }

      a += (F.adjoint() * F).real();
      b += (F.adjoint() * Y).real();
      label_energy += Y.squaredNorm();
    }

    Eigen::VectorXd powers_col;
    const Eigen::VectorXd u = solve_ridge_normal(a, b, opt.lambda, &powers_col);

    ScaleWeights& w = m.weights[k];
    w.has_previous = has_prev;
    w.powers = powers_col;
    int c = 0;
    if (has_prev) w.kappa = u(c++);
    w.alpha.resize(nquad);
    for (int i = 0; i < nquad; ++i) w.alpha(i) = u(c++);
    w.beta.resize(nlink);
    for (int i = 0; i < nlink; ++i) w.beta(i) = u(c++);

    if (report) {
      TrainReport::Scale rs;
      rs.s = cfg.s;
      rs.n_quad = nquad;
      rs.n_link = nlink;
      rs.columns = ncol;
      rs.label_energy = label_energy;
      rs.voxels = total_voxels;
      // J(u) = |Y|^2 - 2 u.b_n + u.(A_n + lambda I) u in normalized space
      Eigen::MatrixXd an = powers_col.cwiseInverse().asDiagonal() * a *
                           powers_col.cwiseInverse().asDiagonal();
      an.diagonal().array() += opt.lambda;
      const Eigen::VectorXd bn = b.cwiseQuotient(powers_col);
      rs.residual = label_energy - 2.0 * u.dot(bn) + u.dot(an * u);
      report->scales.push_back(rs);
    }

    // Predictions at this scale feed the next one; computed exactly like a
    // forward pass so saved models reproduce them bit for bit.
    for (size_t si = 0; si < samples.size(); ++si) {
      const auto& sample = samples[si];
      const VolumeGrid& grid = pyramid_grid(sample.data[k]);
      const std::vector<STField> lin = features::compute_linear_features(
          sample.data[k], cfg.linear_specs, cfg.kernels, opt.margin);
      ScaleColumns src{cfg, lin, nullptr, nullptr, nullptr,
                       field::gaussian(opt.gpp_sigma), opt.margin};
      STField y_up;
      std::array<STField, 3> powers;
      std::vector<double> mag;
      if (has_prev) {
        y_up = field::resample_to(y_prev[si], grid);
        powers = features::spherical_powers(y_up);
        mag = magnitudes(y_up);
        src.y_up = &y_up;
        src.powers = &powers;
        src.mag = &mag;
      }
      y_prev[si] = weighted_column_sum(src, grid, effective_weights(w));
    }
  }

  // Detection threshold: the |y| cut maximizing mean Dice against the
  // finest-scale labels over the training set.
  double max_mag = 0;
  std::vector<std::vector<double>> pred_mag(samples.size());
  for (size_t si = 0; si < samples.size(); ++si) {
    pred_mag[si] = magnitudes(y_prev[si]);
    for (double v : pred_mag[si]) max_mag = std::max(max_mag, v);
  }
  double best_t = 0, best_dice = -1;
  constexpr int kSweepSteps = 128;
  for (int step = 1; step <= kSweepSteps; ++step) {
    const double t = max_mag * step / kSweepSteps;
    double mean_dice = 0;
    for (size_t si = 0; si < samples.size(); ++si) {
      const STField& label = samples[si].labels.back();
      size_t inter = 0, na = 0, nb = 0;
      for (size_t v = 0; v < pred_mag[si].size(); ++v) {
        const bool pa = pred_mag[si][v] >= t;
        const bool pb = label.magnitude(v) > 0.5;
        inter += pa && pb;
        na += pa;
        nb += pb;
      }
      mean_dice += (na + nb) == 0 ? 1.0 : 2.0 * static_cast<double>(inter) / (na + nb);
    }
    mean_dice /= static_cast<double>(samples.size());
    if (mean_dice > best_dice) {
      best_dice = mean_dice;
      best_t = t;
    }
  }
  m.detect_threshold = best_t;

  if (report) {
    report->detect_threshold = best_t;
    report->final_predictions = y_prev;
  }
  m.validate();
  return m;
}

// ---- HML1 serialization ----

namespace {

uint64_t fnv1a(const std::vector<uint8_t>& bytes) {
  uint64_t h = 14695981039346656037ull;
  for (uint8_t b : bytes) {
    h ^= b;
    h *= 1099511628211ull;
  }
  return h;
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + 4);
}

void put_f64(std::vector<uint8_t>& out, double v) {
  const auto* p = reinterpret_cast<const uint8_t*>(&v);
  out.insert(out.end(), p, p + 8);
}

std::string kernel_kind_name(field::KernelKind k) {
  return k == field::KernelKind::Gaussian ? "gaussian" : "log";
}

field::KernelKind kernel_kind_from(const std::string& s) {
  if (s == "gaussian") return field::KernelKind::Gaussian;
  if (s == "log") return field::KernelKind::LaplacianOfGaussian;
  throw DataError("unknown kernel kind: " + s);
}

}  // namespace

void save_model(const HamletModel& m, const std::filesystem::path& path) {
  m.validate();

  std::vector<uint8_t> block;
  for (const auto& w : m.weights) {
    put_u32(block, static_cast<uint32_t>(w.columns()));
    if (w.has_previous) put_f64(block, w.kappa);
    for (int i = 0; i < w.alpha.size(); ++i) put_f64(block, w.alpha(i));
    for (int i = 0; i < w.beta.size(); ++i) put_f64(block, w.beta(i));
    for (int i = 0; i < w.powers.size(); ++i) put_f64(block, w.powers(i));
  }

  json manifest;
  manifest["schema"] = 1;
  manifest["gamma"] = m.gamma;
  manifest["lambda"] = m.lambda;
  manifest["gpp_sigma"] = m.gpp_sigma;
  manifest["margin"] = m.margin;
  manifest["lmax"] = m.lmax;
  manifest["shell"] = m.shell;
  manifest["label"] = m.label_name;
  manifest["threshold"] = m.detect_threshold;
  json scales = json::array();
  for (size_t k = 0; k < m.scales.size(); ++k) {
    const auto& cfg = m.scales[k];
    json js;
    js["s"] = cfg.s;
    js["has_previous"] = m.weights[k].has_previous;
    json kernels = json::array();
    for (const auto& kc : cfg.kernels)
      kernels.push_back({{"kind", kernel_kind_name(kc.kernel.kind)},
                         {"sigma", kc.kernel.sigma},
                         {"cutoff", kc.cutoff}});
    js["kernels"] = kernels;
    json lin = json::array();
    for (const auto& l : cfg.linear_specs) lin.push_back({l.J, l.L, l.j, l.kernel});
    js["linear"] = lin;
    json quad = json::array();
    for (const auto& q : cfg.quad_specs) quad.push_back({q.left, q.right, q.l, q.K});
    js["quad"] = quad;
    json link = json::array();
    for (const auto& l : cfg.link_specs) link.push_back({l.b, l.k, l.l, l.K});
    js["link"] = link;
    scales.push_back(js);
  }
  manifest["scales"] = scales;
  char hash_hex[17];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(fnv1a(block)));
  manifest["weight_hash"] = hash_hex;

  const std::string text = manifest.dump();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open for writing: " + path.string());
  out.write("HML1", 4);
  const uint32_t version = 1;
  out.write(reinterpret_cast<const char*>(&version), 4);
  const uint64_t msize = text.size();
  out.write(reinterpret_cast<const char*>(&msize), 8);
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(reinterpret_cast<const char*>(block.data()), static_cast<std::streamsize>(block.size()));
  if (!out) throw DataError("model write failed");
}

HamletModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, "HML1", 4) != 0)
    throw DataError("not an HML1 model file: " + path.string());
  uint32_t version = 0;
  in.read(reinterpret_cast<char*>(&version), 4);
  if (!in || version != 1) throw DataError("unsupported model version");
  uint64_t msize = 0;
  in.read(reinterpret_cast<char*>(&msize), 8);
  if (!in) throw DataError("truncated model file");
  std::string text(msize, '\0');
  in.read(text.data(), static_cast<std::streamsize>(msize));
  if (in.gcount() != static_cast<std::streamsize>(msize)) throw DataError("truncated model file");

  json manifest;
  try {
    manifest = json::parse(text);
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt model manifest: ") + e.what());
  }

  HamletModel m;
  try {
    m.gamma = manifest.at("gamma").get<double>();
    m.lambda = manifest.at("lambda").get<double>();
    m.gpp_sigma = manifest.at("gpp_sigma").get<double>();
    m.margin = manifest.at("margin").get<int>();
    m.lmax = manifest.at("lmax").get<int>();
    m.shell = manifest.at("shell").get<double>();
    m.label_name = manifest.at("label").get<std::string>();
    m.detect_threshold = manifest.at("threshold").get<double>();
    for (const auto& js : manifest.at("scales")) {
      features::ScaleConfig cfg;
      cfg.s = js.at("s").get<int>();
      for (const auto& jk : js.at("kernels")) {
        features::KernelWithCutoff kc;
        kc.kernel.kind = kernel_kind_from(jk.at("kind").get<std::string>());
        kc.kernel.sigma = jk.at("sigma").get<double>();
        kc.cutoff = jk.at("cutoff").get<int>();
        cfg.kernels.push_back(kc);
      }
      for (const auto& jl : js.at("linear"))
        cfg.linear_specs.push_back({jl.at(0).get<int>(), jl.at(1).get<int>(), jl.at(2).get<int>(),
                                    jl.at(3).get<int>()});
      for (const auto& jq : js.at("quad"))
        cfg.quad_specs.push_back({jq.at(0).get<int>(), jq.at(1).get<int>(), jq.at(2).get<int>(),
                                  jq.at(3).get<int>()});
      for (const auto& jl : js.at("link"))
        cfg.link_specs.push_back({jl.at(0).get<int>(), jl.at(1).get<int>(), jl.at(2).get<int>(),
                                  jl.at(3).get<int>()});
      m.scales.push_back(std::move(cfg));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("corrupt model manifest: ") + e.what());
  }

  std::vector<uint8_t> block;
  m.weights.resize(m.scales.size());
  for (size_t k = 0; k < m.scales.size(); ++k) {
    const auto& js = manifest.at("scales").at(k);
    ScaleWeights& w = m.weights[k];
    w.has_previous = js.at("has_previous").get<bool>();
    const int nquad = static_cast<int>(m.scales[k].quad_specs.size());
    const int nlink = static_cast<int>(m.scales[k].link_specs.size());
    const int ncol = (w.has_previous ? 1 : 0) + nquad + nlink;

    uint32_t stored = 0;
    in.read(reinterpret_cast<char*>(&stored), 4);
    if (!in || static_cast<int>(stored) != ncol)
      throw DataError("corrupt model: weight block does not match manifest");
    put_u32(block, stored);

    std::vector<double> values(static_cast<size_t>(ncol) * 2);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * 8));
    if (in.gcount() != static_cast<std::streamsize>(values.size() * 8))
      throw DataError("truncated model file");
    for (double v : values) put_f64(block, v);

    size_t c = 0;
    if (w.has_previous) w.kappa = values[c++];
    w.alpha.resize(nquad);
    for (int i = 0; i < nquad; ++i) w.alpha(i) = values[c++];
    w.beta.resize(nlink);
    for (int i = 0; i < nlink; ++i) w.beta(i) = values[c++];
    w.powers.resize(ncol);
    for (int i = 0; i < ncol; ++i) w.powers(i) = values[c++];
  }
  if (in.peek() != std::ifstream::traits_type::eof())
    throw DataError("corrupt model: trailing bytes");

  char hash_hex[17];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx",
                static_cast<unsigned long long>(fnv1a(block)));
  if (manifest.at("weight_hash").get<std::string>() != hash_hex)
    throw DataError("model weight hash mismatch");

  m.validate();
  return m;
}

}  // namespace hamlet::model
