#include "miro/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <numeric>
#include <ostream>
#include <sstream>

#include "miro/config.hpp"
#include "miro/io.hpp"
#include "miro/rng.hpp"

namespace miro {

namespace {

constexpr std::uint64_t kInitStream = 0x1417;

void require(bool ok, const std::string& what) {
  if (!ok) throw Error(what);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

Matrix targets_for(const Partition& p, std::span<const Vec2> pos) {
  Matrix t(pos.size(), 2);
  for (const auto& m : p.members()) {
    const Vec2 c = centroid(gather(pos, m));
    for (auto i : m) {
      t(i, 0) = c.x - pos[i].x;
      t(i, 1) = c.y - pos[i].y;
    }
  }
  return t;
}

void add_scaled(ModelParams& into, ModelParams& from, double s) {
  auto a = into.tensors();
  auto b = from.tensors();
  for (std::size_t t = 0; t < a.size(); ++t)
    for (std::size_t i = 0; i < a[t].data.size(); ++i) a[t].data[i] += s * b[t].data[i];
}

std::string epoch_name(std::size_t epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%05zu.json", epoch);
  return buf;
}

std::string loss_csv(std::span<const LossBreakdown> history) {
  std::ostringstream out;
  out << "epoch,L_total,L_r,L_d,L_class\n";
  for (std::size_t e = 0; e < history.size(); ++e)
    out << e + 1 << ',' << io::format_double(history[e].total) << ',' << io::format_double(history[e].r) << ','
        << io::format_double(history[e].d) << ',' << io::format_double(history[e].cls) << '\n';
  return out.str();
}

}  // namespace

void TrainConfig::validate(const ModelConfig& model) const {
  require(epochs >= 1, "train: epochs must be >= 1");
  require(batch_size >= 1, "train: batch_size must be >= 1");
  require(learning_rate >= 0.0 && std::isfinite(learning_rate), "train: learning_rate must be >= 0");
  require(momentum >= 0.0 && momentum < 1.0, "train: momentum must be in [0, 1)");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "train: betas must be in [0, 1)");
  require(eps_opt > 0.0, "train: eps_opt must be > 0");
  require(alpha >= 0.0, "train: alpha must be >= 0");
  require(checkpoint_every >= 1, "train: checkpoint_every must be >= 1");
  require(!k_star || (*k_star >= 1 && *k_star < model.K), "train: k_star must satisfy 1 <= k_star < K");
  require(!clip_norm || *clip_norm > 0.0, "train: clip_norm must be > 0");
}

DisplacementTargets gt_displacements(const LabeledCloud& labeled) {
  const auto pos = labeled.cloud().positions();
  DisplacementTargets t;
  t.fine = targets_for(labeled.truth(), pos);
  if (labeled.coarse_truth()) t.coarse = targets_for(*labeled.coarse_truth(), pos);
  return t;
}

LossOptions LossOptions::from(const TrainConfig& cfg, double length_scale) {
  LossOptions o;
  o.k_star = cfg.k_star;
  o.alpha = cfg.alpha;
  o.euclidean_error = cfg.euclidean_error;
  o.length_scale = length_scale;
  return o;
}

LossResult loss(const StepOutputs& out, const LocGraph& g, const DisplacementTargets& targets,
                std::optional<std::span<const int>> class_truth, const LossOptions& opt, bool with_gradients) {
  const std::size_t K = out.displacements.size(), n = g.n_nodes(), ne = g.n_edges();
  require(K >= 1, "loss: no steps");
  require(targets.fine.rows() == n && targets.fine.cols() == 2, "loss: target shape does not match the graph");
  if (opt.k_star) {
    require(targets.coarse.has_value(), "loss: multiscale mode needs coarse targets");
    require(targets.coarse->rows() == n, "loss: coarse target shape does not match the graph");
  }
  const bool use_class = class_truth.has_value() && !out.class_logits.empty();
  if (use_class) require(class_truth->size() == n, "loss: class labels do not match the node count");

  LossResult res;
  if (with_gradients) {
    res.d_disp.assign(K, Matrix(n, 2));
    if (!out.class_logits.empty()) res.d_logits.assign(K, Matrix(n, out.class_logits[0].cols()));
  }
  if (n == 0) return res;

  const double scale = opt.length_scale;
  const double kn = static_cast<double>(K) * static_cast<double>(n);
  for (std::size_t k = 0; k < K; ++k) {
    const Matrix& t = (opt.k_star && k >= *opt.k_star) ? *targets.coarse : targets.fine;
    const Matrix& d = out.displacements[k];
    require(d.rows() == n && d.cols() == 2, "loss: displacement shape does not match the graph");
    Matrix* gd = with_gradients ? &res.d_disp[k] : nullptr;

    double sum_r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double ex = d(i, 0) - t(i, 0), ey = d(i, 1) - t(i, 1);
      if (opt.euclidean_error) {
        const double len = std::hypot(ex, ey);
        sum_r += len;
        if (gd && len > 0.0) {
          (*gd)(i, 0) += ex / len / (kn * scale);
          (*gd)(i, 1) += ey / len / (kn * scale);
        }
      } else {
        sum_r += std::abs(ex) + std::abs(ey);
        if (gd) {
          (*gd)(i, 0) += sign(ex) / (kn * scale);
          (*gd)(i, 1) += sign(ey) / (kn * scale);
        }
      }
    }
    res.value.r += sum_r / (kn * scale);

    if (ne > 0) {
      const double ke = static_cast<double>(K) * static_cast<double>(ne);
      double sum_d = 0.0;
      for (std::size_t e = 0; e < ne; ++e) {
        const auto i = g.src[e], j = g.dst[e];
        const Vec2 base = g.coords[j] - g.coords[i];
        const Vec2 ph{base.x + (d(j, 0) - d(i, 0)), base.y + (d(j, 1) - d(i, 1))};
        const Vec2 pt{base.x + (t(j, 0) - t(i, 0)), base.y + (t(j, 1) - t(i, 1))};
        const double dh = norm(ph), diff = dh - norm(pt);
        sum_d += std::abs(diff);
        if (gd && dh > 0.0) {
          const double s = sign(diff) / (ke * scale * dh);
          (*gd)(j, 0) += s * ph.x;
          (*gd)(j, 1) += s * ph.y;
          (*gd)(i, 0) -= s * ph.x;
          (*gd)(i, 1) -= s * ph.y;
        }
      }
      res.value.d += sum_d / (ke * scale);
    }

    if (use_class) {
      const Matrix& z = out.class_logits[k];
      const std::size_t c = z.cols();
      for (std::size_t i = 0; i < n; ++i) {
        const int truth = (*class_truth)[i];
        require(truth >= 0 && static_cast<std::size_t>(truth) < c, "loss: class label out of range");
        const double w = opt.class_weights.empty() ? 1.0 : opt.class_weights[truth];
        auto row = z.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double se = 0.0;
        for (double v : row) se += std::exp(v - mx);
        const double lse = mx + std::log(se);
        res.value.cls += opt.alpha * w * (lse - row[truth]) / kn;
        if (with_gradients) {
          auto gr = res.d_logits[k].row(i);
          for (std::size_t q = 0; q < c; ++q) {
            const double p = std::exp(row[q] - lse) - (static_cast<int>(q) == truth ? 1.0 : 0.0);
            gr[q] += opt.alpha * w * p / kn;
          }
        }
      }
    }
  }
  res.value.total = res.value.r + res.value.d + res.value.cls;
  return res;
}

std::vector<TrainSample> prepare_samples(std::span<const LabeledCloud> dataset, const GraphConfig& graph_cfg,
                                         bool need_coarse, bool need_classes) {
  std::vector<TrainSample> out(dataset.size());
  std::vector<std::exception_ptr> errors(dataset.size());
  const auto n = static_cast<std::ptrdiff_t>(dataset.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    try {
      const LabeledCloud& c = dataset[i];
      if (need_coarse && !c.coarse_truth())
        throw Error("cloud " + std::to_string(i) + " has no coarse labels, needed for multiscale training");
      if (need_classes && !c.shape_class())
        throw Error("cloud " + std::to_string(i) + " has no class labels, needed for class training");
      out[i].graph = build_graph(c.cloud(), graph_cfg);
      out[i].targets = gt_displacements(c);
      if (need_classes) out[i].classes = *c.shape_class();
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

GradientResult gradients(const ModelParams& params, std::span<const TrainSample* const> batch, const LossOptions& opt) {
  require(!batch.empty(), "gradients: empty batch");
  const std::size_t b = batch.size();
  std::vector<ModelParams> grads(b);
  std::vector<LossBreakdown> values(b);
  std::vector<std::exception_ptr> errors(b);
  const auto nb = static_cast<std::ptrdiff_t>(b);
#pragma omp parallel for schedule(dynamic) if (b > 1)
  for (std::ptrdiff_t i = 0; i < nb; ++i) {
    try {
      const TrainSample& s = *batch[i];
      ForwardTape tape;
      const StepOutputs out = forward(s.graph, params, &tape);
      std::optional<std::span<const int>> cls;
      if (s.classes) cls = std::span<const int>(*s.classes);
      LossResult lr = loss(out, s.graph, s.targets, cls, opt, true);
      values[i] = lr.value;
      if (!std::isfinite(lr.value.total))
        throw Error("divergence: non-finite loss on graph " + std::to_string(i) + " of the batch");
      grads[i] = ModelParams(params.config);
      backward(s.graph, params, tape, lr.d_disp, lr.d_logits, grads[i]);
    } catch (...) {
      errors[i] = std::current_exception();
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  GradientResult res{ModelParams(params.config), {}};
  const double inv = 1.0 / static_cast<double>(b);
  for (std::size_t i = 0; i < b; ++i) {
    add_scaled(res.grad, grads[i], inv);
    res.mean.total += values[i].total * inv;
    res.mean.r += values[i].r * inv;
    res.mean.d += values[i].d * inv;
    res.mean.cls += values[i].cls * inv;
  }
  return res;
}

OptimizerState make_optimizer_state(const ModelParams& params) {
  return {0, ModelParams(params.config), ModelParams(params.config)};
}

double global_norm(ModelParams& grad) {
  double s = 0.0;
  for (auto& t : grad.tensors())
    for (double v : t.data) s += v * v;
  return std::sqrt(s);
}

void optimizer_step(ModelParams& params, ModelParams grad, OptimizerState& state, const TrainConfig& cfg) {
  if (cfg.clip_norm) {
    const double norm = global_norm(grad);
    if (norm > *cfg.clip_norm) {
      const double s = *cfg.clip_norm / norm;
      for (auto& t : grad.tensors())
        for (double& v : t.data) v *= s;
    }
  }
  ++state.t;
  auto p = params.tensors();
  auto g = grad.tensors();
  auto m = state.m.tensors();
  auto v = state.v.tensors();
  const double lr = cfg.learning_rate;
  if (cfg.optimizer == TrainConfig::Optimizer::adam) {
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
    for (std::size_t t = 0; t < p.size(); ++t)
      for (std::size_t i = 0; i < p[t].data.size(); ++i) {
        const double gi = g[t].data[i];
        double& mi = m[t].data[i];
        double& vi = v[t].data[i];
        mi = cfg.beta1 * mi + (1.0 - cfg.beta1) * gi;
        vi = cfg.beta2 * vi + (1.0 - cfg.beta2) * gi * gi;
        p[t].data[i] -= lr * (mi / c1) / (std::sqrt(vi / c2) + cfg.eps_opt);
      }
  } else {
    for (std::size_t t = 0; t < p.size(); ++t)
      for (std::size_t i = 0; i < p[t].data.size(); ++i) {
        double& mi = m[t].data[i];
        mi = cfg.momentum * mi + g[t].data[i];
        p[t].data[i] -= lr * mi;
      }
  }
}

double final_quarter_slope(std::span<const LossBreakdown> history) {
  const std::size_t q = history.size() / 4;
  if (q < 2) return 0.0;
  const auto tail = history.subspan(history.size() - q);
  const double xm = (static_cast<double>(q) - 1.0) / 2.0;
  double ym = 0.0;
  for (const auto& h : tail) ym += h.total / static_cast<double>(q);
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < q; ++i) {
    const double dx = static_cast<double>(i) - xm;
    sxy += dx * (tail[i].total - ym);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  nlohmann::json j;
  j["format_version"] = kCheckpointFormat;
  j["epoch"] = c.epoch;
  j["params"] = params_to_json(c.params);
  j["optimizer"] = {{"t", c.optimizer.t}, {"m", params_to_json(c.optimizer.m)}, {"v", params_to_json(c.optimizer.v)}};
  nlohmann::json h = nlohmann::json::array();
  for (const auto& l : c.history) h.push_back({l.total, l.r, l.d, l.cls});
  j["history"] = std::move(h);
  io::write_atomic(path, j.dump() + "\n");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  try {
    const auto j = nlohmann::json::parse(io::read_text(path));
    Checkpoint c;
    c.epoch = j.at("epoch").get<std::size_t>();
    c.params = params_from_json(j.at("params"));
    c.optimizer.t = j.at("optimizer").at("t").get<std::uint64_t>();
    c.optimizer.m = params_from_json(j.at("optimizer").at("m"));
    c.optimizer.v = params_from_json(j.at("optimizer").at("v"));
    for (const auto& row : j.at("history")) c.history.push_back({row[0], row[1], row[2], row[3]});
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint " + path.string() + ": " + e.what());
  }
}

std::optional<std::filesystem::path> latest_checkpoint(const std::filesystem::path& run_dir) {
  const auto dir = run_dir / "checkpoints";
  if (!std::filesystem::is_directory(dir)) return std::nullopt;
  std::optional<std::filesystem::path> best;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) != 0 || entry.path().extension() != ".json") continue;
    if (!best || name > best->filename().string()) best = entry.path();
  }
  return best;
}

FitResult fit(std::span<const LabeledCloud> dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
              const GraphConfig& graph_cfg, const FitOptions& opt) {
  model_cfg.validate();
  train_cfg.validate(model_cfg);
  graph_cfg.validate();
  require(graph_cfg.n_eigs == model_cfg.n_eigs, "fit: graph n_eigs and model n_eigs differ");
  require(!dataset.empty(), "fit: empty dataset");

  ModelConfig mc = model_cfg;
  mc.k_star = train_cfg.k_star;
  const auto samples = prepare_samples(dataset, graph_cfg, train_cfg.k_star.has_value(), mc.n_classes > 0);

  LossOptions lo = LossOptions::from(train_cfg, mc.length_scale_nm);
  if (train_cfg.class_weights && mc.n_classes > 0) {
    std::vector<double> count(mc.n_classes, 0.0);
    double total = 0.0;
    for (const auto& s : samples)
      for (int c : *s.classes) {
        require(c >= 0 && static_cast<std::size_t>(c) < mc.n_classes, "fit: class label out of range");
        count[c] += 1.0;
        total += 1.0;
      }
    lo.class_weights.resize(mc.n_classes);
    for (std::size_t c = 0; c < mc.n_classes; ++c)
      lo.class_weights[c] = count[c] > 0.0 ? total / (static_cast<double>(mc.n_classes) * count[c]) : 1.0;
  }

  Checkpoint state;
  state.params = init_params(mc, derive_seed(train_cfg.seed, kInitStream));
  state.optimizer = make_optimizer_state(state.params);

  const bool persist = !opt.run_dir.empty();
  if (persist) {
    if (opt.resume) {
      if (auto latest = latest_checkpoint(opt.run_dir)) {
        state = load_checkpoint(*latest);
        require(state.params.config == mc, "fit: checkpoint model config differs from the requested one");
        if (opt.log) *opt.log << "resuming from " << latest->string() << " (epoch " << state.epoch << ")\n";
      }
    }
    std::filesystem::create_directories(opt.run_dir / "checkpoints");
    nlohmann::json cfg = opt.extra_config.is_object() ? opt.extra_config : nlohmann::json::object();
    cfg["model"] = mc;
    cfg["train"] = train_cfg;
    cfg["graph"] = graph_cfg;
    io::write_atomic(opt.run_dir / "config.json", cfg.dump(2) + "\n");
  }

  std::vector<std::size_t> order(samples.size());
  std::vector<const TrainSample*> batch;
  for (std::size_t epoch = state.epoch; epoch < train_cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng rng(derive_seed(train_cfg.seed, epoch + 1));
    std::shuffle(order.begin(), order.end(), rng);

    LossBreakdown sum;
    for (std::size_t start = 0; start < order.size(); start += train_cfg.batch_size) {
      batch.clear();
      for (std::size_t k = start; k < std::min(order.size(), start + train_cfg.batch_size); ++k)
        batch.push_back(&samples[order[k]]);
      GradientResult gr = gradients(state.params, batch, lo);
      optimizer_step(state.params, std::move(gr.grad), state.optimizer, train_cfg);
      const double w = static_cast<double>(batch.size());
      sum.total += gr.mean.total * w;
      sum.r += gr.mean.r * w;
      sum.d += gr.mean.d * w;
      sum.cls += gr.mean.cls * w;
    }
    const double inv = 1.0 / static_cast<double>(samples.size());
    const LossBreakdown mean{sum.total * inv, sum.r * inv, sum.d * inv, sum.cls * inv};
    state.history.push_back(mean);
    state.epoch = epoch + 1;
    if (opt.log)
      *opt.log << "epoch " << state.epoch << '/' << train_cfg.epochs << "  loss " << mean.total << "  (r " << mean.r
               << ", d " << mean.d << ", class " << mean.cls << ")\n";
    if (opt.on_epoch) opt.on_epoch(state.epoch, mean);
    if (persist) {
      io::write_atomic(opt.run_dir / "loss.csv", loss_csv(state.history));
      if (state.epoch % train_cfg.checkpoint_every == 0 || state.epoch == train_cfg.epochs)
        save_checkpoint(opt.run_dir / "checkpoints" / epoch_name(state.epoch), state);
    }
  }

  FitResult res{state.params, state.history, false};
  if (final_quarter_slope(res.history) > 0.0) {
    res.final_quarter_warning = true;
    if (opt.log) *opt.log << "warning: training loss increased on average over the final quarter of epochs\n";
  }
  return res;
}

}  // namespace miro
