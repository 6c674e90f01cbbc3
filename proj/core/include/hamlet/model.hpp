#pragma once

// The hierarchical covariant filter: forward pass across scales,
// layer-by-layer ridge training with feature power normalization, and the
// HML1 model file.

#include <filesystem>
#include <optional>

#include "hamlet/features.hpp"

namespace hamlet::model {

using field::STField;
using field::VolumeGrid;

/// Learned weights of one scale. Column layout, shared with the feature
/// matrices assembled during training:
///   [previous-output column (upper scales only)] [quad specs] [link specs]
struct ScaleWeights {
  bool has_previous = false;
  double kappa = 0.0;           // weight of the upsampled previous output
  Eigen::VectorXd alpha;        // one weight per quad spec
  Eigen::VectorXd beta;         // one weight per link spec
  Eigen::VectorXd powers;       // per-column feature powers, same layout

  int columns() const {
    return (has_previous ? 1 : 0) + static_cast<int>(alpha.size()) +
           static_cast<int>(beta.size());
  }
};

struct HamletModel {
  std::vector<features::ScaleConfig> scales;  // ascending s (coarsest first)
  std::vector<ScaleWeights> weights;
  double gamma = 2.0;
  double lambda = 1e-3;
  double gpp_sigma = 1.0;  // final smoothing width, voxels
  int margin = 3;          // window margin at the finest scale, voxels
  int lmax = 2;
  double shell = -1.0;     // b-value fed to the SH projection; < 0 = highest
  std::string label_name;
  double detect_threshold = 0.0;

  void validate() const;
};

/// Per-scale SH projections, coarsest first.
using DataPyramid = std::vector<std::map<int, STField>>;

/// Presmoothing width used before resampling to scale s, in finest voxels.
double pyramid_sigma(int s, double gamma);

/// Builds the multi-scale data pyramid from finest-scale fields. Every scale
/// is produced directly from the finest data with the scale's presmoothing;
/// scale 0 is smoothed in place without resampling.
DataPyramid build_pyramid(const std::map<int, STField>& finest, const std::vector<int>& scales,
                          double gamma);

/// Same resampling applied to a single order-2 label field.
std::vector<STField> build_label_pyramid(const STField& finest, const std::vector<int>& scales,
                                         double gamma);

/// SH projection + boundary window + pyramid: the shared input preparation
/// for training and prediction.
DataPyramid prepare_input(const field::DwiVolume& dwi, const HamletModel& m);

/// Full forward pass; returns the order-2 output at the finest scale.
STField forward(const HamletModel& m, const DataPyramid& pyramid);

struct TrainingSample {
  DataPyramid data;             // per scale, coarsest first
  std::vector<STField> labels;  // per scale, same order
  VolumeGrid finest_grid;       // carries the window geometry
};

struct TrainOptions {
  std::vector<features::ScaleConfig> configs;  // coarsest first
  double lambda = 1e-3;
  double gamma = 2.0;
  double gpp_sigma = 1.0;
  int margin = 3;
  int lmax = 2;
  double shell = -1.0;
  std::string label_name;
};

struct TrainReport {
  struct Scale {
    int s = 0;
    int n_quad = 0, n_link = 0, columns = 0;
    double residual = 0.0;       // objective value at the solution
    double label_energy = 0.0;   // sum over included voxels of |Y|^2
    size_t voxels = 0;           // included voxels across samples
  };
  std::vector<Scale> scales;
  double detect_threshold = 0.0;
  std::vector<STField> final_predictions;  // finest-scale, one per sample
};

/// Layer-by-layer training: coarsest scale first, each scale solved by ridge
/// regression on power-normalized feature columns, predictions upsampled to
/// feed the next scale. Deterministic for fixed inputs.
HamletModel train(const std::vector<TrainingSample>& samples, const TrainOptions& opt,
                  TrainReport* report = nullptr);

/// Minimizes sum_m |Y_m - F_m w|^2 + lambda |w|^2 over real w via the real
/// part of the stacked complex normal equations. Deterministic.
Eigen::VectorXd solve_ridge(const std::array<Eigen::MatrixXcd, 5>& F,
                            const std::array<Eigen::VectorXcd, 5>& Y, double lambda);

/// Power-normalized variant used by train(): solves
/// (D A D + lambda I) u = D b with D = diag(1/powers), powers = sqrt(diag A).
/// Returns the normalized weights u; powers_out receives the powers.
Eigen::VectorXd solve_ridge_normal(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                   double lambda, Eigen::VectorXd* powers_out = nullptr);

// HML1 model file: "HML1" magic, u32 version, u64 manifest length, canonical
// JSON manifest (scale configs, hyperparameters, weight-block hash), then
// little-endian f64 weight and power blocks per scale.
void save_model(const HamletModel& m, const std::filesystem::path& path);
HamletModel load_model(const std::filesystem::path& path);

}  // namespace hamlet::model
