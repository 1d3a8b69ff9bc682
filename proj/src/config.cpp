#include "miro/config.hpp"

#include <set>
#include <type_traits>

#include "miro/io.hpp"

namespace miro {

using nlohmann::json;

namespace {

class Fields {
 public:
  Fields(const json& j, const char* what) : j_(j), what_(what) {
    if (!j.is_object()) throw Error(what_ + ": expected a JSON object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key) || j_.at(key).is_null()) return;
    out = convert<T>(key, j_.at(key));
  }

  template <class T>
  void get(const char* key, std::optional<T>& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null()) {
      out.reset();
      return;
    }
    out = convert<T>(key, j_.at(key));
  }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key())) throw Error(what_ + ": unknown key \"" + item.key() + "\"");
  }

 private:
  template <class T>
  T convert(const char* key, const json& v) const {
    if constexpr (std::is_integral_v<T> && std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_unsigned()) throw Error(what_ + ": \"" + key + "\" must be a non-negative integer");
    } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
      if (!v.is_number_integer()) throw Error(what_ + ": \"" + key + "\" must be an integer");
    }
    return v.get<T>();
  }

  const json& j_;
  std::string what_;
  std::set<std::string> seen_;
};

template <class E>
std::string enum_name(E v, std::initializer_list<std::pair<E, const char*>> names) {
  for (auto [e, n] : names)
    if (e == v) return n;
  return "?";
}

template <class E>
E enum_value(const std::string& s, const char* what, std::initializer_list<std::pair<E, const char*>> names) {
  std::string all;
  for (auto [e, n] : names) {
    if (s == n) return e;
    all += all.empty() ? n : std::string(", ") + n;
  }
  throw Error(std::string(what) + ": unknown value \"" + s + "\" (expected one of: " + all + ")");
}

const std::initializer_list<std::pair<GraphConfig::DeltaMode, const char*>> kDeltaModes = {
    {GraphConfig::DeltaMode::fixed, "fixed"}, {GraphConfig::DeltaMode::percentile, "percentile"}};
const std::initializer_list<std::pair<TrainConfig::Optimizer, const char*>> kOptimizers = {
    {TrainConfig::Optimizer::adam, "adam"}, {TrainConfig::Optimizer::sgd_momentum, "sgd_momentum"}};
const std::initializer_list<std::pair<sim::AugmentSpec::BackgroundMode, const char*>> kBackgroundModes = {
    {sim::AugmentSpec::BackgroundMode::uniform, "uniform"}, {sim::AugmentSpec::BackgroundMode::resampled, "resampled"}};

}  // namespace

void to_json(json& j, const Rect& r) { j = json::array({r.x0, r.y0, r.x1, r.y1}); }

void from_json(const json& j, Rect& r) {
  if (!j.is_array() || j.size() != 4) throw Error("extent: expected [x0, y0, x1, y1]");
  r = {j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
  if (!(r.x1 > r.x0 && r.y1 > r.y0)) throw Error("extent: must have positive width and height");
}

void to_json(json& j, const GraphConfig& c) {
  j = {{"delta_mode", enum_name(c.delta_mode, kDeltaModes)},
       {"delta", c.delta},
       {"percentile", c.percentile},
       {"n_eigs", c.n_eigs},
       {"dense_limit", c.solver.dense_limit},
       {"residual_tol", c.solver.residual_tol},
       {"zero_tol", c.solver.zero_tol}};
}

void from_json(const json& j, GraphConfig& c) {
  c = GraphConfig{};
  Fields f(j, "graph config");
  std::string mode = enum_name(c.delta_mode, kDeltaModes);
  f.get("delta_mode", mode);
  c.delta_mode = enum_value(mode, "graph config delta_mode", kDeltaModes);
  f.get("delta", c.delta);
  f.get("percentile", c.percentile);
  f.get("n_eigs", c.n_eigs);
  f.get("dense_limit", c.solver.dense_limit);
  f.get("residual_tol", c.solver.residual_tol);
  f.get("zero_tol", c.solver.zero_tol);
  f.finish();
  c.validate();
}

void to_json(json& j, const ModelConfig& c) {
  j = {{"latent_dim", c.latent_dim},
       {"K", c.K},
       {"n_classes", c.n_classes},
       {"n_eigs", c.n_eigs},
       {"length_scale_nm", c.length_scale_nm},
       {"k_star", c.k_star ? json(*c.k_star) : json(nullptr)}};
}

void from_json(const json& j, ModelConfig& c) {
  c = ModelConfig{};
  Fields f(j, "model config");
  f.get("latent_dim", c.latent_dim);
  f.get("K", c.K);
  f.get("n_classes", c.n_classes);
  f.get("n_eigs", c.n_eigs);
  f.get("length_scale_nm", c.length_scale_nm);
  f.get("k_star", c.k_star);
  f.finish();
  c.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = {{"epochs", c.epochs},
       {"batch_size", c.batch_size},
       {"learning_rate", c.learning_rate},
       {"optimizer", enum_name(c.optimizer, kOptimizers)},
       {"momentum", c.momentum},
       {"beta1", c.beta1},
       {"beta2", c.beta2},
       {"eps_opt", c.eps_opt},
       {"k_star", c.k_star ? json(*c.k_star) : json(nullptr)},
       {"alpha", c.alpha},
       {"seed", c.seed},
       {"checkpoint_every", c.checkpoint_every},
       {"euclidean_error", c.euclidean_error},
       {"clip_norm", c.clip_norm ? json(*c.clip_norm) : json(nullptr)},
       {"class_weights", c.class_weights}};
}

void from_json(const json& j, TrainConfig& c) {
  c = TrainConfig{};
  Fields f(j, "train config");
  f.get("epochs", c.epochs);
  f.get("batch_size", c.batch_size);
  f.get("learning_rate", c.learning_rate);
  std::string opt = enum_name(c.optimizer, kOptimizers);
  f.get("optimizer", opt);
  c.optimizer = enum_value(opt, "train config optimizer", kOptimizers);
  f.get("momentum", c.momentum);
  f.get("beta1", c.beta1);
  f.get("beta2", c.beta2);
  f.get("eps_opt", c.eps_opt);
  f.get("k_star", c.k_star);
  f.get("alpha", c.alpha);
  f.get("seed", c.seed);
  f.get("checkpoint_every", c.checkpoint_every);
  f.get("euclidean_error", c.euclidean_error);
  f.get("clip_norm", c.clip_norm);
  f.get("class_weights", c.class_weights);
  f.finish();
}

void to_json(json& j, const DbscanConfig& c) { j = {{"eps", c.eps}, {"min_pts", c.min_pts}}; }

void from_json(const json& j, DbscanConfig& c) {
  c = DbscanConfig{};
  Fields f(j, "dbscan config");
  f.get("eps", c.eps);
  f.get("min_pts", c.min_pts);
  f.finish();
  c.validate();
}

void to_json(json& j, const PipelineConfig& c) {
  j = {{"graph", c.graph},
       {"fine", c.fine},
       {"coarse", c.coarse ? json(*c.coarse) : json(nullptr)},
       {"class_mode", c.class_mode},
       {"fine_step", c.fine_step ? json(*c.fine_step) : json(nullptr)}};
}

void from_json(const json& j, PipelineConfig& c) {
  c = PipelineConfig{};
  Fields f(j, "pipeline config");
  f.get("graph", c.graph);
  f.get("fine", c.fine);
  f.get("coarse", c.coarse);
  f.get("class_mode", c.class_mode);
  f.get("fine_step", c.fine_step);
  f.finish();
}

void to_json(json& j, const MetricConfig& c) { j = {{"xi", c.xi}}; }

void from_json(const json& j, MetricConfig& c) {
  c = MetricConfig{};
  Fields f(j, "metric config");
  f.get("xi", c.xi);
  f.finish();
  c.validate();
}

namespace sim {

void to_json(json& j, const IntDist& d) {
  switch (d.kind) {
    case IntDist::Kind::fixed: j = d.lo; break;
    case IntDist::Kind::uniform: j = {{"uniform", {d.lo, d.hi}}}; break;
    case IntDist::Kind::geometric: j = {{"geometric", d.mean}}; break;
  }
}

void from_json(const json& j, IntDist& d) {
  if (j.is_number_integer()) {
    d = IntDist::fixed(j.get<int>());
  } else if (j.is_object() && j.size() == 1 && j.contains("uniform")) {
    const auto& r = j.at("uniform");
    if (!r.is_array() || r.size() != 2) throw Error("count distribution: uniform expects [lo, hi]");
    d = IntDist::uniform(r[0].get<int>(), r[1].get<int>());
  } else if (j.is_object() && j.size() == 1 && j.contains("geometric")) {
    d = IntDist::geometric(j.at("geometric").get<double>());
  } else {
    throw Error("count distribution: expected an integer, {\"uniform\": [lo, hi]} or {\"geometric\": mean}");
  }
  d.validate("count distribution");
}

void to_json(json& j, const Shape& s) {
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, GaussianShape>)
          j = {{"type", "gaussian"}, {"sigma_lo", v.sigma_lo}, {"sigma_hi", v.sigma_hi}};
        else if constexpr (std::is_same_v<T, EllipseShape>)
          j = {{"type", "ellipse"}, {"sigma_major", v.sigma_major}, {"aspect", v.aspect}};
        else if constexpr (std::is_same_v<T, ArcShape>)
          j = {{"type", "arc"}, {"radius", v.radius}, {"radial_sigma", v.radial_sigma}, {"arc_span", v.arc_span}};
        else
          j = {{"type", "npc"},
               {"corner_radius", v.corner_radius},
               {"corners", v.corners},
               {"spread_divisor", v.spread_divisor}};
      },
      s);
}

void from_json(const json& j, Shape& s) {
  Fields f(j, "shape");
  std::string type;
  f.get("type", type);
  if (type == "gaussian") {
    GaussianShape g;
    std::optional<double> sigma;
    f.get("sigma", sigma);
    if (sigma) g.sigma_lo = g.sigma_hi = *sigma;
    f.get("sigma_lo", g.sigma_lo);
    f.get("sigma_hi", g.sigma_hi);
    s = g;
  } else if (type == "ellipse") {
    EllipseShape e;
    f.get("sigma_major", e.sigma_major);
    f.get("aspect", e.aspect);
    s = e;
  } else if (type == "arc") {
    ArcShape a;
    f.get("radius", a.radius);
    f.get("radial_sigma", a.radial_sigma);
    f.get("arc_span", a.arc_span);
    s = a;
  } else if (type == "npc") {
    NpcShape n;
    f.get("corner_radius", n.corner_radius);
    f.get("corners", n.corners);
    f.get("spread_divisor", n.spread_divisor);
    s = n;
  } else {
    throw Error("shape: unknown type \"" + type + "\" (expected gaussian, ellipse, arc or npc)");
  }
  f.finish();
}

void to_json(json& j, const ClusterGroup& g) {
  j = {{"count", g.count}, {"molecules", g.molecules}, {"shape", g.shape}, {"class_id", g.class_id}};
}

void from_json(const json& j, ClusterGroup& g) {
  g = ClusterGroup{};
  Fields f(j, "cluster group");
  f.get("count", g.count);
  f.get("molecules", g.molecules);
  f.get("shape", g.shape);
  f.get("class_id", g.class_id);
  f.finish();
}

void to_json(json& j, const Background& b) {
  j = json::object();
  if (b.fraction_of_total) j["fraction"] = *b.fraction_of_total;
  if (b.count) j["count"] = *b.count;
}

void from_json(const json& j, Background& b) {
  b = Background{};
  Fields f(j, "background");
  f.get("fraction", b.fraction_of_total);
  f.get("count", b.count);
  f.finish();
  b.validate();
}

void to_json(json& j, const ScenarioSpec& s) {
  j = {{"extent", s.extent},
       {"groups", s.groups},
       {"background", s.background},
       {"min_cluster_separation", s.min_cluster_separation},
       {"max_placement_attempts", s.max_placement_attempts},
       {"seed", s.seed}};
}

void from_json(const json& j, ScenarioSpec& s) {
  s = ScenarioSpec{};
  Fields f(j, "scenario");
  f.get("extent", s.extent);
  f.get("groups", s.groups);
  f.get("background", s.background);
  f.get("min_cluster_separation", s.min_cluster_separation);
  f.get("max_placement_attempts", s.max_placement_attempts);
  f.get("seed", s.seed);
  f.finish();
  s.validate();
}

void to_json(json& j, const BlinkSpec& b) {
  j = {{"mean_blinks", b.mean_blinks},
       {"localization_precision", b.localization_precision},
       {"blink_background", b.blink_background}};
}

void from_json(const json& j, BlinkSpec& b) {
  b = BlinkSpec{};
  Fields f(j, "blink");
  f.get("mean_blinks", b.mean_blinks);
  f.get("localization_precision", b.localization_precision);
  f.get("blink_background", b.blink_background);
  f.finish();
  b.validate();
}

void to_json(json& j, const AugmentSpec& a) {
  j = {{"rotations", a.rotations},
       {"reflections", a.reflections},
       {"dropout_prob", a.dropout_prob},
       {"addition_prob", a.addition_prob},
       {"jitter_sigma", a.jitter_sigma},
       {"placements", {a.placements_lo, a.placements_hi}},
       {"background_mode", enum_name(a.background_mode, kBackgroundModes)},
       {"background", a.background}};
}

void from_json(const json& j, AugmentSpec& a) {
  a = AugmentSpec{};
  Fields f(j, "augment");
  f.get("rotations", a.rotations);
  f.get("reflections", a.reflections);
  f.get("dropout_prob", a.dropout_prob);
  f.get("addition_prob", a.addition_prob);
  f.get("jitter_sigma", a.jitter_sigma);
  std::optional<std::vector<int>> placements;
  f.get("placements", placements);
  if (placements) {
    if (placements->size() != 2) throw Error("augment: placements expects [lo, hi]");
    a.placements_lo = (*placements)[0];
    a.placements_hi = (*placements)[1];
  }
  std::string mode = enum_name(a.background_mode, kBackgroundModes);
  f.get("background_mode", mode);
  a.background_mode = enum_value(mode, "augment background_mode", kBackgroundModes);
  f.get("background", a.background);
  f.finish();
  if (a.background_mode != AugmentSpec::BackgroundMode::resampled) a.validate();
}

void to_json(json& j, const Preset& p) {
  j = {{"name", p.name}, {"scenario", p.scenario}, {"blink", p.blink ? json(*p.blink) : json(nullptr)}};
}

void from_json(const json& j, Preset& p) {
  p = Preset{};
  Fields f(j, "preset");
  f.get("name", p.name);
  f.get("scenario", p.scenario);
  f.get("blink", p.blink);
  f.finish();
}

}  // namespace sim

namespace config {

json read_json_file(const std::string& path) {
  try {
    return json::parse(io::read_text(path));
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace config

}  // namespace miro
