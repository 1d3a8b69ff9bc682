#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "miro/cluster.hpp"
#include "miro/config.hpp"
#include "miro/graph.hpp"
#include "miro/io.hpp"
#include "miro/kernels.hpp"
#include "miro/metrics.hpp"
#include "miro/model.hpp"
#include "miro/simulate.hpp"
#include "miro/train.hpp"

#ifndef MIRO_VERSION
#define MIRO_VERSION "dev"
#endif

namespace fs = std::filesystem;
using nlohmann::json;
using namespace miro;

namespace {

// Output bookkeeping for one subcommand: files are registered as they are
// produced so a failed run can remove them, and the manifest is written last.
class Run {
 public:
  Run(std::string command, fs::path out) : command_(std::move(command)), out_(std::move(out)) {}

  void open() {
    if (out_.empty()) throw Error("--out is required");
    created_ = !fs::exists(out_);
    fs::create_directories(out_);
    start_ = std::chrono::steady_clock::now();
    opened_ = true;
  }

  const fs::path& dir() const { return out_; }

  fs::path file(const std::string& name) {
    fs::path p = out_ / name;
    written_.push_back(p);
    return p;
  }

  json manifest;

  void finish() {
    json outputs = json::array();
    for (const auto& p : written_) outputs.push_back(fs::relative(p, out_).generic_string());
    manifest["command"] = command_;
    manifest["tool_version"] = MIRO_VERSION;
    manifest["outputs"] = outputs;
    manifest["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    io::write_atomic(out_ / "manifest.json", manifest.dump(2) + "\n");
  }

  void abort() noexcept {
    if (!opened_) return;
    std::error_code ec;
    if (created_) {
      fs::remove_all(out_, ec);
      return;
    }
    for (const auto& p : written_) fs::remove_all(p, ec);
  }

 private:
  std::string command_;
  fs::path out_;
  bool created_ = false;
  bool opened_ = false;
  std::vector<fs::path> written_;
  std::chrono::steady_clock::time_point start_;
};

std::uint64_t resolve_seed(std::uint64_t cli_seed) {
  const char* env = std::getenv("MIRO_SEED");
  if (!env) return cli_seed;
  try {
    std::size_t used = 0;
    const auto v = std::stoull(env, &used);
    if (used != std::string(env).size()) throw std::invalid_argument(env);
    return v;
  } catch (const std::exception&) {
    throw Error(std::string("MIRO_SEED must be a non-negative integer, got \"") + env + "\"");
  }
}

json read_object(const std::string& path) {
  if (path.empty()) return json::object();
  auto j = config::read_json_file(path);
  if (!j.is_object()) throw Error(path + ": expected a JSON object");
  return j;
}

json take(json& j, const char* key) {
  if (!j.contains(key)) return json::object();
  json v = j.at(key);
  j.erase(key);
  return v;
}

void reject_leftovers(const json& j, const std::string& what) {
  for (const auto& item : j.items()) throw Error(what + ": unknown key \"" + item.key() + "\"");
}

std::vector<fs::path> csv_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(dir.string() + ": not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".csv") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

ModelParams load_model(const std::string& path) {
  const auto j = config::read_json_file(path);
  try {
    return params_from_json(j.contains("params") ? j.at("params") : j);
  } catch (const Error& e) {
    throw Error(path + ": " + e.what());
  }
}

std::string numbered(const char* stem, std::size_t i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%05zu.csv", stem, i);
  return buf;
}

// Dependency-free scatter plot; NOISE in gray, clusters from a fixed palette.
std::string render_svg(std::span<const Vec2> pts, std::span<const int> labels) {
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#bcbd22", "#17becf", "#393b79"};
  double x0 = 0, y0 = 0, x1 = 1, y1 = 1;
  if (!pts.empty()) {
    x0 = x1 = pts[0].x;
    y0 = y1 = pts[0].y;
    for (const auto& p : pts) {
      x0 = std::min(x0, p.x), x1 = std::max(x1, p.x);
      y0 = std::min(y0, p.y), y1 = std::max(y1, p.y);
    }
  }
  const double span = std::max({x1 - x0, y1 - y0, 1e-9});
  const double size = 800.0, margin = 10.0, k = (size - 2 * margin) / span;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
    << "\" viewBox=\"0 0 " << size << " " << size << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  // Noise first so clusters draw on top.
  for (int pass = 0; pass < 2; ++pass)
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const bool noise = labels[i] == Partition::NOISE;
      if (noise != (pass == 0)) continue;
      const char* color = noise ? "#b0b0b0" : palette[labels[i] % 10];
      s << "<circle cx=\"" << io::format_double(margin + (pts[i].x - x0) * k) << "\" cy=\""
        << io::format_double(size - margin - (pts[i].y - y0) * k) << "\" r=\"1.5\" fill=\"" << color << "\"/>\n";
    }
  s << "</svg>\n";
  return s.str();
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string preset, config_path, out;
  std::size_t count = 1;
  std::uint64_t seed = 0;
};

int cmd_simulate(const SimulateArgs& a, bool print_config) {
  if (a.preset.empty() == a.config_path.empty()) throw Error("simulate: give exactly one of --preset or --config");
  const sim::Preset preset = a.preset.empty()
                                 ? config::parse<sim::Preset>(config::read_json_file(a.config_path), a.config_path)
                                 : sim::preset(a.preset);
  const auto seed = resolve_seed(a.seed);
  if (print_config) {
    std::cout << json(preset).dump(2) << "\n";
    return 0;
  }
  Run run("simulate", a.out);
  try {
    run.open();
    for (std::size_t i = 0; i < a.count; ++i)
      io::write_cloud(run.file(numbered("cloud", i)), sim::simulate(preset, derive_seed(seed, i)));
    run.manifest["config"] = preset;
    run.manifest["seed"] = seed;
    run.manifest["count"] = a.count;
    run.manifest["inputs"] = a.config_path.empty() ? json::array() : json::array({a.config_path});
    run.finish();
  } catch (...) {
    run.abort();
    throw;
  }
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainSetup {
  ModelConfig model;
  TrainConfig train;
  GraphConfig graph;
  std::optional<sim::AugmentSpec> augment;
  std::size_t augment_clouds = 200;

  json to_json() const {
    json j = {{"model", model}, {"train", train}, {"graph", graph}};
    if (augment) j["augment"] = {{"spec", *augment}, {"clouds", augment_clouds}};
    return j;
  }
};

TrainSetup train_setup(const std::string& path, std::optional<std::uint64_t> seed) {
  json j = read_object(path);
  TrainSetup s;
  s.model = config::parse<ModelConfig>(take(j, "model"), "model config");
  s.train = config::parse<TrainConfig>(take(j, "train"), "train config");
  s.graph = config::parse<GraphConfig>(take(j, "graph"), "graph config");
  if (j.contains("augment")) {
    json aug = take(j, "augment");
    if (!aug.is_object()) throw Error("augment config: expected a JSON object");
    s.augment = config::parse<sim::AugmentSpec>(take(aug, "spec"), "augment config");
    if (aug.contains("clouds")) s.augment_clouds = take(aug, "clouds").get<std::size_t>();
    reject_leftovers(aug, "augment config");
  }
  reject_leftovers(j, path);
  if (seed) s.train.seed = *seed;
  s.train.seed = resolve_seed(s.train.seed);
  s.train.validate(s.model);
  return s;
}

struct TrainArgs {
  std::string data, config_path, out;
  std::optional<std::uint64_t> seed;
  bool resume = false;
  bool quiet = false;
};

std::vector<LabeledCloud> load_training_data(const std::string& dir, const TrainSetup& s) {
  std::vector<LabeledCloud> data;
  for (const auto& f : csv_files(dir)) {
    auto file = io::read_cloud(f);
    if (!file.columns.cluster_id) throw Error("unlabeled data: " + f.string() + " has no cluster_id column");
    if (s.model.n_classes > 0 && !file.columns.class_id)
      throw Error("class training needs class_id labels: " + f.string());
    if (s.train.k_star && !file.columns.coarse_id)
      throw Error("multiscale training needs coarse_id labels: " + f.string());
    data.push_back(std::move(file.data));
  }
  if (data.empty()) throw Error("no .csv clouds in " + dir);
  if (!s.augment) return data;
  std::vector<sim::SeedCluster> seeds;
  for (const auto& c : data)
    for (auto& sc : sim::seeds_from(c)) seeds.push_back(std::move(sc));
  return sim::augment_dataset(seeds, *s.augment, s.augment_clouds, data.front().cloud().extent(),
                              derive_seed(s.train.seed, 0xa09));
}

int cmd_train(const TrainArgs& a, bool print_config) {
  const auto setup = train_setup(a.config_path, a.seed);
  if (print_config) {
    std::cout << setup.to_json().dump(2) << "\n";
    return 0;
  }
  if (a.data.empty()) throw Error("train: --data is required");
  Run run("train", a.out);
  try {
    const auto data = load_training_data(a.data, setup);
    run.open();
    FitOptions opt;
    opt.run_dir = run.dir();
    opt.resume = a.resume;
    opt.extra_config = setup.to_json();
    if (!a.quiet) opt.log = &std::cerr;
    const auto result = fit(data, setup.model, setup.train, setup.graph, opt);
    save_params(run.file("model.json"), result.params);
    if (result.final_quarter_warning)
      std::cerr << "warning: loss rose on average over the final quarter of epochs\n";
    run.manifest["config"] = setup.to_json();
    run.manifest["seed"] = setup.train.seed;
    run.manifest["inputs"] = json::array({a.data});
    run.manifest["final_loss"] = result.history.empty() ? 0.0 : result.history.back().total;
    run.finish();
  } catch (...) {
    run.abort();
    throw;
  }
  return 0;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string input, model, config_path, out;
  bool no_miro = false, collapsed = false, svg = false, dump_graph = false;
  std::optional<double> eps;
  std::optional<std::size_t> min_pts;
};

PipelineResult run_without_model(const PointCloud& cloud, const PipelineConfig& cfg) {
  if (cfg.class_mode) throw Error("infer: class mode needs a model");
  const auto pos = cloud.positions();
  PipelineResult r;
  r.fine = dbscan(pos, cfg.fine);
  r.collapsed_fine.assign(pos.begin(), pos.end());
  if (cfg.coarse) {
    r.coarse = dbscan(pos, *cfg.coarse);
    r.fine = enforce_hierarchy(r.fine, *r.coarse);
    r.collapsed_coarse = r.collapsed_fine;
  }
  return r;
}

int cmd_infer(const InferArgs& a, bool print_config) {
  PipelineConfig cfg = a.config_path.empty() ? PipelineConfig{}
                                             : config::parse<PipelineConfig>(read_object(a.config_path), a.config_path);
  if (a.eps) cfg.fine.eps = *a.eps;
  if (a.min_pts) cfg.fine.min_pts = *a.min_pts;
  cfg.fine.validate();
  if (print_config) {
    std::cout << json(cfg).dump(2) << "\n";
    return 0;
  }
  if (a.input.empty()) throw Error("infer: --input is required");
  if (!a.no_miro && a.model.empty()) throw Error("infer: --model is required unless --no-miro is given");
  const auto file = io::read_cloud(a.input);
  const auto& cloud = file.data.cloud();
  Run run("infer", a.out);
  try {
    PipelineResult r;
    if (a.no_miro) {
      r = run_without_model(cloud, cfg);
    } else {
      const auto params = load_model(a.model);
      r = run_pipeline(cloud, params, cfg);
    }
    run.open();
    std::optional<std::vector<int>> classes;
    if (r.cluster_class) {
      classes.emplace(cloud.size(), 0);
      for (std::size_t i = 0; i < cloud.size(); ++i) {
        const auto it = r.cluster_class->find(r.fine[i]);
        if (it != r.cluster_class->end()) (*classes)[i] = it->second;
      }
    }
    const LabeledCloud labeled(cloud, r.fine, classes, r.coarse);
    io::Columns cols;
    cols.frame = file.columns.frame;
    cols.cluster_id = true;
    cols.class_id = classes.has_value();
    cols.coarse_id = r.coarse.has_value();
    io::write_cloud(run.file("clustered.csv"), labeled, cols);
    if (a.collapsed) {
      io::write_positions(run.file("collapsed.csv"), r.collapsed_fine);
      if (r.collapsed_coarse) io::write_positions(run.file("collapsed_coarse.csv"), *r.collapsed_coarse);
    }
    if (a.svg) {
      const auto pos = cloud.positions();
      io::write_atomic(run.file("clusters.svg"), render_svg(pos, r.fine.labels()));
    }
    if (a.dump_graph) io::write_atomic(run.file("graph_edges.csv"), format_edges_csv(build_graph(cloud, cfg.graph)));
    run.manifest["config"] = cfg;
    run.manifest["no_miro"] = a.no_miro;
    run.manifest["inputs"] = a.no_miro ? json::array({a.input}) : json::array({a.input, a.model});
    run.manifest["clusters"] = r.fine.n_clusters();
    run.finish();
  } catch (...) {
    run.abort();
    throw;
  }
  return 0;
}

// ---------------------------------------------------------------- evaluate

struct Summary {
  double mean = 0.0, sd = 0.0;
  std::size_t n = 0;
};

Summary summarize(const std::vector<std::optional<double>>& xs) {
  Summary s;
  for (const auto& x : xs)
    if (x) s.mean += *x, ++s.n;
  if (s.n == 0) return s;
  s.mean /= double(s.n);
  if (s.n > 1) {
    for (const auto& x : xs)
      if (x) s.sd += (*x - s.mean) * (*x - s.mean);
    s.sd = std::sqrt(s.sd / double(s.n - 1));
  }
  return s;
}

std::string cell(const std::optional<double>& v) { return v ? io::format_double(*v) : ""; }

std::string plus_minus(const Summary& s) {
  if (s.n == 0) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f ± %.2f", s.mean, s.sd);
  return buf;
}

struct EvaluateArgs {
  std::string truth, pred, config_path, out;
  std::optional<double> xi;
};

int cmd_evaluate(const EvaluateArgs& a, bool print_config) {
  MetricConfig cfg = a.config_path.empty() ? MetricConfig{}
                                           : config::parse<MetricConfig>(read_object(a.config_path), a.config_path);
  if (a.xi) cfg.xi = *a.xi;
  cfg.validate();
  if (print_config) {
    std::cout << json(cfg).dump(2) << "\n";
    return 0;
  }
  if (a.truth.empty() || a.pred.empty()) throw Error("evaluate: --truth and --pred are required");
  std::vector<std::pair<fs::path, fs::path>> pairs;
  if (fs::is_directory(a.truth)) {
    for (const auto& t : csv_files(a.truth)) {
      const fs::path p = fs::path(a.pred) / t.filename();
      if (!fs::exists(p)) throw Error("evaluate: no prediction for " + t.filename().string() + " in " + a.pred);
      pairs.emplace_back(t, p);
    }
    if (pairs.empty()) throw Error("evaluate: no .csv files in " + a.truth);
  } else {
    pairs.emplace_back(a.truth, a.pred);
  }

  const auto columns = report_columns();
  std::vector<std::vector<std::optional<double>>> values(columns.size());
  std::ostringstream rows;
  rows << "field";
  for (const auto& c : columns) rows << "," << c;
  rows << "\n";
  for (const auto& [t, p] : pairs) {
    const auto truth = io::read_cloud(t), pred = io::read_cloud(p);
    if (!truth.columns.cluster_id) throw Error("evaluate: " + t.string() + " has no cluster_id column");
    if (!pred.columns.cluster_id) throw Error("evaluate: " + p.string() + " has no cluster_id column");
    if (truth.data.size() != pred.data.size())
      throw Error("evaluate: " + t.string() + " and " + p.string() + " differ in point count");
    const auto pos = truth.data.cloud().positions();
    const auto rep = evaluate(truth.data.truth(), pred.data.truth(), pos, cfg);
    const auto v = report_values(rep);
    rows << t.stem().string();
    for (std::size_t k = 0; k < v.size(); ++k) {
      rows << "," << cell(v[k]);
      values[k].push_back(v[k]);
    }
    rows << "\n";
  }

  std::ostringstream summary;
  summary << "metric,mean,sd,n,table\n";
  for (std::size_t k = 0; k < columns.size(); ++k) {
    const auto s = summarize(values[k]);
    summary << columns[k] << "," << (s.n ? io::format_double(s.mean) : "") << ","
            << (s.n ? io::format_double(s.sd) : "") << "," << s.n << "," << plus_minus(s) << "\n";
    std::cout << columns[k] << ": " << plus_minus(s) << "\n";
  }

  Run run("evaluate", a.out);
  try {
    run.open();
    io::write_atomic(run.file("metrics.csv"), rows.str());
    io::write_atomic(run.file("summary.csv"), summary.str());
    run.manifest["config"] = cfg;
    run.manifest["inputs"] = json::array({a.truth, a.pred});
    run.manifest["fields"] = pairs.size();
    run.finish();
  } catch (...) {
    run.abort();
    throw;
  }
  return 0;
}

// ---------------------------------------------------------------- bench

struct BenchSetup {
  TrainSetup training;
  std::size_t train_clouds = 200;
  std::vector<double> eps_grid{2, 4, 6, 8, 10, 12, 15, 20, 25, 30, 40, 50};
  std::vector<std::size_t> min_pts_grid{3, 5, 10, 20};
  std::string tune_metric = "ji_c";
  std::optional<double> xi;

  json to_json() const {
    return {{"training", training.to_json()}, {"train_clouds", train_clouds}, {"eps_grid", eps_grid},
            {"min_pts_grid", min_pts_grid},   {"tune_metric", tune_metric},   {"xi", xi ? json(*xi) : json(nullptr)}};
  }
};

BenchSetup bench_setup(const std::string& path, std::uint64_t seed) {
  json j = read_object(path);
  BenchSetup s;
  // Desk-scale defaults; a config file replaces them section by section.
  s.training.model.latent_dim = 32;
  s.training.model.K = 4;
  s.training.train.epochs = 100;
  s.training.train.learning_rate = 3e-3;
  s.training.train.batch_size = 4;
  if (j.contains("model")) s.training.model = config::parse<ModelConfig>(take(j, "model"), "model config");
  if (j.contains("train")) s.training.train = config::parse<TrainConfig>(take(j, "train"), "train config");
  if (j.contains("graph")) s.training.graph = config::parse<GraphConfig>(take(j, "graph"), "graph config");
  if (j.contains("train_clouds")) s.train_clouds = take(j, "train_clouds").get<std::size_t>();
  if (j.contains("eps_grid")) s.eps_grid = take(j, "eps_grid").get<std::vector<double>>();
  if (j.contains("min_pts_grid")) s.min_pts_grid = take(j, "min_pts_grid").get<std::vector<std::size_t>>();
  if (j.contains("tune_metric")) s.tune_metric = take(j, "tune_metric").get<std::string>();
  if (j.contains("xi")) s.xi = take(j, "xi").get<double>();
  reject_leftovers(j, path.empty() ? "bench config" : path);
  s.training.train.seed = seed;
  s.training.train.validate(s.training.model);
  const auto cols = report_columns();
  if (std::find(cols.begin(), cols.end(), s.tune_metric) == cols.end())
    throw Error("bench: unknown tune_metric \"" + s.tune_metric + "\"");
  if (s.eps_grid.empty() || s.min_pts_grid.empty()) throw Error("bench: empty DBSCAN grid");
  return s;
}

// One evaluation case: a cloud with truth, plus the positions DBSCAN sees.
struct Case {
  LabeledCloud cloud;
  std::vector<Vec2> raw, moved;
  std::size_t condition = 0;
};

struct BenchArgs {
  std::string preset, model, config_path, out;
  std::vector<double> distances{1, 2, 3, 4};
  std::string unit = "sigma";
  std::size_t seeds = 100, tune_seeds = 50;
  std::uint64_t seed = 0;
  bool quiet = false;
};

std::vector<sim::SeedCluster> pair_spot_seeds(std::uint64_t seed) {
  sim::PairTestSpec ps;
  ps.separation = 2000.0;
  ps.field = 4000.0;
  std::vector<sim::SeedCluster> seeds;
  for (std::uint64_t s = 0; seeds.size() < 4 && s < 1000; ++s)
    for (auto& sc : sim::seeds_from(sim::gen_pair_test(ps, derive_seed(seed, 0x5eed + s))))
      if (sc.points.size() >= 20 && sc.points.size() <= 150 && seeds.size() < 4) seeds.push_back(std::move(sc));
  return seeds;
}

int cmd_bench(const BenchArgs& a, bool print_config) {
  const auto seed = resolve_seed(a.seed);
  const auto setup = bench_setup(a.config_path, seed);
  const bool pairs = a.preset == "pairtest";
  if (a.preset.empty()) throw Error("bench: --preset is required");
  std::optional<sim::Preset> preset;
  if (!pairs) preset = sim::preset(a.preset);
  if (a.unit != "sigma" && a.unit != "nm") throw Error("bench: --unit must be sigma or nm");
  if (print_config) {
    std::cout << setup.to_json().dump(2) << "\n";
    return 0;
  }
  const sim::PairTestSpec pair_base;
  std::vector<double> separations;
  if (pairs) {
    if (a.distances.empty()) throw Error("bench: --distances is empty");
    for (double d : a.distances) separations.push_back(a.unit == "sigma" ? d * pair_base.sigma : d);
  }
  const MetricConfig metric{setup.xi.value_or(pairs ? pair_base.sigma : MetricConfig{}.xi)};

  Run run("bench", a.out);
  try {
    run.open();
    // Model: load or train.
    ModelParams model;
    if (!a.model.empty()) {
      model = load_model(a.model);
    } else {
      std::vector<LabeledCloud> train;
      if (pairs) {
        sim::AugmentSpec aug;
        aug.placements_lo = 2;
        aug.placements_hi = 5;
        aug.background = sim::Background{0.2, std::nullopt};
        aug.jitter_sigma = 2.0;
        aug.dropout_prob = 0.1;
        aug.addition_prob = 0.1;
        train = sim::augment_dataset(pair_spot_seeds(seed), aug, setup.train_clouds, Rect{0, 0, 1000, 1000},
                                     derive_seed(seed, 0xa09));
      } else {
        for (std::size_t i = 0; i < setup.train_clouds; ++i)
          train.push_back(sim::simulate(*preset, derive_seed(seed, 0x7000000 + i)));
      }
      FitOptions opt;
      opt.run_dir = run.file("train");
      opt.extra_config = setup.training.to_json();
      if (!a.quiet) opt.log = &std::cerr;
      model = fit(train, setup.training.model, setup.training.train, setup.training.graph, opt).params;
      save_params(run.file("train/model.json"), model);
    }
    const std::size_t step = model.config.k_star ? *model.config.k_star - 1 : model.config.K - 1;

    auto make_cases = [&](std::uint64_t first, std::size_t count) {
      std::vector<Case> cases;
      const std::size_t conditions = pairs ? separations.size() : 1;
      for (std::size_t c = 0; c < conditions; ++c)
        for (std::uint64_t s = first; s < first + count; ++s) {
          Case k;
          k.condition = c;
          if (pairs) {
            auto spec = pair_base;
            spec.separation = separations[c];
            k.cloud = sim::gen_pair_test(spec, derive_seed(seed, s));
          } else {
            k.cloud = sim::simulate(*preset, derive_seed(seed, s));
          }
          const auto pos = k.cloud.cloud().positions();
          k.raw.assign(pos.begin(), pos.end());
          const auto g = build_graph(k.raw, setup.training.graph);
          k.moved = collapse(g.coords, forward(g, model), step);
          cases.push_back(std::move(k));
        }
      return cases;
    };
    auto report = [&](const Case& k, bool with_miro, const DbscanConfig& db) {
      const auto pred = dbscan(with_miro ? k.moved : k.raw, db);
      return evaluate(k.cloud.truth(), pred, k.raw, metric);
    };

    // Each method gets one DBSCAN setting for the whole scenario, chosen on
    // separate tuning seeds.
    const auto columns = report_columns();
    const std::size_t tune_col = std::size_t(std::find(columns.begin(), columns.end(), setup.tune_metric) - columns.begin());
    const auto tuning = make_cases(1000000, a.tune_seeds);
    const auto evaluation = make_cases(0, a.seeds);
    const char* methods[] = {"DBSCAN", "MIRO+DBSCAN"};
    std::ostringstream csv;
    csv << (pairs ? "distance,distance_nm," : "") << "method,eps,min_pts,n";
    for (const auto& c : columns) csv << "," << c << "_mean," << c << "_sd";
    csv << "\n";
    for (int m = 0; m < 2; ++m) {
      DbscanConfig best{setup.eps_grid[0], setup.min_pts_grid[0]};
      double best_score = -std::numeric_limits<double>::infinity();
      for (double eps : setup.eps_grid)
        for (std::size_t mp : setup.min_pts_grid) {
          const DbscanConfig db{eps, mp};
          double score = 0.0;
          for (const auto& k : tuning) score += report_values(report(k, m == 1, db))[tune_col].value_or(0.0);
          if (score > best_score) best_score = score, best = db;
        }
      if (!a.quiet)
        std::cerr << methods[m] << ": eps " << best.eps << " min_pts " << best.min_pts << " (tuned on "
                  << setup.tune_metric << ")\n";
      const std::size_t conditions = pairs ? separations.size() : 1;
      for (std::size_t c = 0; c < conditions; ++c) {
        std::vector<std::vector<std::optional<double>>> vals(columns.size());
        for (const auto& k : evaluation) {
          if (k.condition != c) continue;
          const auto v = report_values(report(k, m == 1, best));
          for (std::size_t i = 0; i < v.size(); ++i) vals[i].push_back(v[i]);
        }
        if (pairs) csv << io::format_double(a.distances[c]) << "," << io::format_double(separations[c]) << ",";
        csv << methods[m] << "," << io::format_double(best.eps) << "," << best.min_pts << "," << a.seeds;
        for (const auto& v : vals) {
          const auto s = summarize(v);
          csv << "," << (s.n ? io::format_double(s.mean) : "") << "," << (s.n ? io::format_double(s.sd) : "");
        }
        csv << "\n";
      }
    }
    io::write_atomic(run.file("comparison.csv"), csv.str());
    std::cout << csv.str();
    run.manifest["config"] = setup.to_json();
    run.manifest["preset"] = a.preset;
    run.manifest["seed"] = seed;
    run.manifest["inputs"] = a.model.empty() ? json::array() : json::array({a.model});
    run.finish();
  } catch (...) {
    run.abort();
    throw;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MIRO: recurrent graph preprocessing for SMLM clustering"};
  app.set_version_flag("--version", MIRO_VERSION);
  app.require_subcommand(1);
  int threads = 0;
  bool print_config = false;
  app.add_option("--threads", threads, "Worker threads (0 = all cores; 1 is the reproducibility reference)")
      ->check(CLI::NonNegativeNumber);
  app.add_flag("--print-config", print_config, "Print the effective configuration as JSON and exit");

  SimulateArgs sa;
  auto* sim_cmd = app.add_subcommand("simulate", "Write simulated clouds from a preset or a scenario file");
  sim_cmd->add_option("--preset", sa.preset, "Preset name");
  sim_cmd->add_option("--config", sa.config_path, "Preset JSON file");
  sim_cmd->add_option("--count", sa.count, "Number of clouds");
  sim_cmd->add_option("--out", sa.out, "Output directory");
  sim_cmd->add_option("--seed", sa.seed, "Base seed (MIRO_SEED overrides)");

  TrainArgs ta;
  auto* train_cmd = app.add_subcommand("train", "Train a model on labeled cloud CSVs");
  train_cmd->add_option("--data", ta.data, "Directory of labeled cloud CSVs");
  train_cmd->add_option("--config", ta.config_path, "JSON with model, train, graph and augment sections");
  train_cmd->add_option("--out", ta.out, "Run directory");
  train_cmd->add_option("--seed", ta.seed, "Training seed (MIRO_SEED overrides)");
  train_cmd->add_flag("--resume", ta.resume, "Continue from the latest checkpoint in the run directory");
  train_cmd->add_flag("--quiet", ta.quiet, "No per-epoch log");

  InferArgs ia;
  auto* infer_cmd = app.add_subcommand("infer", "Cluster one cloud with or without MIRO preprocessing");
  infer_cmd->add_option("--input", ia.input, "Cloud CSV");
  infer_cmd->add_option("--model", ia.model, "model.json or a training checkpoint");
  infer_cmd->add_option("--config", ia.config_path, "Pipeline JSON (graph, fine, coarse, class_mode, fine_step)");
  infer_cmd->add_option("--eps", ia.eps, "Fine DBSCAN eps (nm)");
  infer_cmd->add_option("--min-pts", ia.min_pts, "Fine DBSCAN minPts");
  infer_cmd->add_option("--out", ia.out, "Output directory");
  infer_cmd->add_flag("--no-miro", ia.no_miro, "Run DBSCAN on the raw coordinates");
  infer_cmd->add_flag("--collapsed", ia.collapsed, "Also write the collapsed coordinates");
  infer_cmd->add_flag("--svg", ia.svg, "Also write an SVG scatter plot of the clusters");
  infer_cmd->add_flag("--dump-graph", ia.dump_graph, "Also write the graph edge list");

  EvaluateArgs ea;
  auto* eval_cmd = app.add_subcommand("evaluate", "Score predicted clusters against ground truth");
  eval_cmd->add_option("--truth", ea.truth, "Ground-truth CSV or directory");
  eval_cmd->add_option("--pred", ea.pred, "Prediction CSV or directory (matched by file name)");
  eval_cmd->add_option("--config", ea.config_path, "Metric JSON (xi)");
  eval_cmd->add_option("--xi", ea.xi, "Centroid pairing threshold (nm)");
  eval_cmd->add_option("--out", ea.out, "Output directory");

  BenchArgs ba;
  auto* bench_cmd = app.add_subcommand("bench", "Compare DBSCAN with and without MIRO on a preset");
  bench_cmd->add_option("--preset", ba.preset, "pairtest or a simulation preset");
  bench_cmd->add_option("--distances", ba.distances, "Pair separations (pairtest only)")->delimiter(',');
  bench_cmd->add_option("--unit", ba.unit, "Unit of --distances: sigma or nm");
  bench_cmd->add_option("--model", ba.model, "Use this model instead of training one");
  bench_cmd->add_option("--config", ba.config_path, "Bench JSON (model, train, graph, grids, tune_metric, xi)");
  bench_cmd->add_option("--seeds", ba.seeds, "Evaluation clouds per condition");
  bench_cmd->add_option("--tune-seeds", ba.tune_seeds, "Tuning clouds per condition");
  bench_cmd->add_option("--seed", ba.seed, "Base seed (MIRO_SEED overrides)");
  bench_cmd->add_option("--out", ba.out, "Output directory");
  bench_cmd->add_flag("--quiet", ba.quiet, "No progress log");

  CLI11_PARSE(app, argc, argv);
  if (threads > 0) {
    kernels::set_threads(threads);
    omp_set_num_threads(threads);
  }
  try {
    if (*sim_cmd) return cmd_simulate(sa, print_config);
    if (*train_cmd) return cmd_train(ta, print_config);
    if (*infer_cmd) return cmd_infer(ia, print_config);
    if (*eval_cmd) return cmd_evaluate(ea, print_config);
    if (*bench_cmd) return cmd_bench(ba, print_config);
  } catch (const std::exception& e) {
    std::cerr << "miro: error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
