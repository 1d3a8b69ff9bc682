#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "miro/core.hpp"
#include "miro/graph.hpp"
#include "miro/model.hpp"

namespace miro {

struct TrainConfig {
  enum class Optimizer { adam, sgd_momentum };

  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  Optimizer optimizer = Optimizer::adam;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_opt = 1e-8;
  std::optional<std::size_t> k_star;
  double alpha = 1.0;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 10;
  /// Euclidean norm of the displacement error instead of the L1 norm.
  bool euclidean_error = false;
  /// Global gradient-norm clipping threshold; off when unset.
  std::optional<double> clip_norm;
  /// Inverse-frequency class weights in the classification loss.
  bool class_weights = false;

  void validate(const ModelConfig& model) const;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Per-node target displacements in nm, n x 2.
struct DisplacementTargets {
  Matrix fine;
  std::optional<Matrix> coarse;
};

DisplacementTargets gt_displacements(const LabeledCloud& labeled);

struct LossBreakdown {
  double total = 0.0;
  double r = 0.0;
  double d = 0.0;
  double cls = 0.0;
};

/// Loss terms plus their gradients with respect to every step output.
struct LossResult {
  LossBreakdown value;
  std::vector<Matrix> d_disp;
  std::vector<Matrix> d_logits;
};

struct LossOptions {
  std::optional<std::size_t> k_star;
  double alpha = 1.0;
  bool euclidean_error = false;
  /// Displacement errors and distances are divided by this length (nm).
  double length_scale = 1.0;
  /// Weight per class id, empty for uniform weights.
  std::vector<double> class_weights;

  static LossOptions from(const TrainConfig& cfg, double length_scale = 1.0);
};

/// Combined per-step loss; gradients are filled when `with_gradients` is set.
LossResult loss(const StepOutputs& out, const LocGraph& g, const DisplacementTargets& targets,
                std::optional<std::span<const int>> class_truth, const LossOptions& opt, bool with_gradients = false);

/// One training example with its graph built once.
struct TrainSample {
  LocGraph graph;
  DisplacementTargets targets;
  std::optional<std::vector<int>> classes;
};

std::vector<TrainSample> prepare_samples(std::span<const LabeledCloud> dataset, const GraphConfig& graph_cfg,
                                         bool need_coarse, bool need_classes);

struct GradientResult {
  ModelParams grad;
  LossBreakdown mean;
};

/// Gradient of the mean loss over the batch. Graphs are processed in
/// parallel and reduced in batch order. Throws "divergence" on a non-finite loss.
GradientResult gradients(const ModelParams& params, std::span<const TrainSample* const> batch, const LossOptions& opt);

struct OptimizerState {
  std::uint64_t t = 0;
  ModelParams m;
  ModelParams v;
};

OptimizerState make_optimizer_state(const ModelParams& params);
void optimizer_step(ModelParams& params, ModelParams grad, OptimizerState& state, const TrainConfig& cfg);
double global_norm(ModelParams& grad);

struct FitOptions {
  /// Run directory for config.json, checkpoints/ and loss.csv; nothing is
  /// written when empty.
  std::filesystem::path run_dir;
  bool resume = false;
  /// Extra settings stored verbatim in config.json.
  nlohmann::json extra_config;
  std::ostream* log = nullptr;
  std::function<void(std::size_t epoch, const LossBreakdown&)> on_epoch;
};

struct FitResult {
  ModelParams params;
  std::vector<LossBreakdown> history;
  /// Set when the loss rose on average over the final quarter of epochs.
  bool final_quarter_warning = false;
};

FitResult fit(std::span<const LabeledCloud> dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
              const GraphConfig& graph_cfg, const FitOptions& opt = {});

/// Least-squares slope of the final quarter of the loss history.
double final_quarter_slope(std::span<const LossBreakdown> history);

/// Training checkpoint (parameters, optimizer state, completed epochs, history).
struct Checkpoint {
  ModelParams params;
  OptimizerState optimizer;
  std::size_t epoch = 0;
  std::vector<LossBreakdown> history;
};
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Most recent checkpoints/epoch_*.json in a run directory, if any.
std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir);

}  // namespace miro
