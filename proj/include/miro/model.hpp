#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "miro/core.hpp"
#include "miro/graph.hpp"
#include "miro/kernels.hpp"
#include "miro/tensor.hpp"

namespace miro {

struct ModelConfig {
  std::size_t latent_dim = 256;
  std::size_t K = 8;
  std::size_t n_classes = 0;
  std::size_t n_eigs = 5;
  /// Length unit of the network in nm: edge distances are divided by it on
  /// input and displacements multiplied by it on output.
  double length_scale_nm = 100.0;
  /// Multiscale split step k*: steps below it were trained on fine targets.
  /// Recorded by training so inference knows which step carries the fine scale.
  std::optional<std::size_t> k_star;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Affine map y = W x + b with W stored out x in.
struct Linear {
  Matrix w;
  std::vector<double> b;

  Linear() = default;
  Linear(std::size_t out, std::size_t in) : w(out, in), b(out, 0.0) {}
  friend bool operator==(const Linear&, const Linear&) = default;
};

struct TensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> data;
};

/// All learnable weights. The same layout doubles as the gradient record.
struct ModelParams {
  ModelConfig config;
  Linear node_encoder;   // n_eigs -> L
  Linear edge_encoder;   // 3 -> L
  Linear phi;            // 6L -> L, input [u~_i, u~_j, f~_ij] with u~ = [v'|u], f~ = [e'|f]
  Linear psi;            // L -> L
  Linear disp_decoder;   // L -> 2
  Linear class_decoder;  // L -> n_classes, empty when n_classes == 0

  ModelParams() = default;
  /// Zero-initialized parameters of the configured shape.
  explicit ModelParams(const ModelConfig& cfg);

  /// Every tensor in a fixed order (weights before biases, layer by layer).
  std::vector<TensorView> tensors();
  std::size_t parameter_count() const;
  void set_zero();
  void check_finite() const;
  friend bool operator==(const ModelParams&, const ModelParams&) = default;
};

ModelParams init_params(const ModelConfig& cfg, std::uint64_t seed);

struct StepOutputs {
  std::vector<Matrix> displacements;  // K entries, n x 2, nm
  std::vector<Matrix> class_logits;   // K entries, n x n_classes, or empty
};

/// Activations retained by forward for the backward pass.
struct ForwardTape {
  Matrix edge_input;                  // scaled edge features
  Matrix v_lat, e_lat;                // encoder outputs
  Matrix p_src, p_dst, r_edge;        // static parts of phi
  std::vector<Matrix> u;              // u[0..K], u[0] = 0
  std::vector<Matrix> f;              // f[0..K], f[0] = 0
  std::vector<Matrix> s;              // s[k] = aggregated f[k+1], k < K
  kernels::Csr by_src, by_dst;
};

/// Runs the encoders and K recurrent steps. When `tape` is given every
/// intermediate activation is kept in it.
StepOutputs forward(const LocGraph& g, const ModelParams& params, ForwardTape* tape = nullptr);

/// Reverse pass: accumulates into `grad` the parameter gradients given the
/// loss gradients with respect to each step's displacements and logits.
void backward(const LocGraph& g, const ModelParams& params, const ForwardTape& tape,
              const std::vector<Matrix>& d_disp, const std::vector<Matrix>& d_logits, ModelParams& grad);

std::vector<Vec2> collapse(std::span<const Vec2> coords, const StepOutputs& out, std::size_t step);
std::vector<Vec2> collapse(const PointCloud& cloud, const StepOutputs& out, std::size_t step);

/// Checkpoint JSON: format_version, config and one {shape, data} record per tensor.
nlohmann::json params_to_json(const ModelParams& p);
ModelParams params_from_json(const nlohmann::json& j);
void save_params(const std::filesystem::path& path, const ModelParams& p);
/// Accepts plain parameter files and training checkpoints.
ModelParams load_params(const std::filesystem::path& path);

inline constexpr int kCheckpointFormat = 1;

}  // namespace miro
