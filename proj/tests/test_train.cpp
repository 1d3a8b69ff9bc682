#include <doctest.h>

#include <filesystem>

#include "gradcheck.hpp"
#include "miro/graph.hpp"
#include "miro/io.hpp"
#include "miro/simulate.hpp"
#include "miro/train.hpp"
#include "oracles.hpp"

using namespace miro;

namespace {

LocGraph graph_of(std::vector<Vec2> pts, std::vector<std::pair<std::uint32_t, std::uint32_t>> undirected) {
  LocGraph g;
  g.coords = std::move(pts);
  g.node_feats = Matrix(g.coords.size(), 5);
  std::vector<std::pair<std::uint32_t, std::uint32_t>> dir;
  for (auto [i, j] : undirected) {
    dir.push_back({i, j});
    dir.push_back({j, i});
  }
  std::sort(dir.begin(), dir.end());
  g.edge_feats = Matrix(dir.size(), 3);
  for (std::size_t k = 0; k < dir.size(); ++k) {
    g.src.push_back(dir[k].first);
    g.dst.push_back(dir[k].second);
    const Vec2 d = g.coords[dir[k].second] - g.coords[dir[k].first];
    g.edge_feats(k, 0) = norm(d);
    g.edge_feats(k, 1) = d.x / norm(d);
    g.edge_feats(k, 2) = d.y / norm(d);
  }
  return g;
}

StepOutputs outputs(std::vector<Matrix> disp) {
  StepOutputs o;
  o.displacements = std::move(disp);
  return o;
}

std::vector<LabeledCloud> spot_dataset(std::size_t n, std::uint64_t seed) {
  sim::ScenarioSpec s;
  s.extent = {0, 0, 800, 800};
  s.groups = {{sim::IntDist::fixed(3), sim::IntDist::fixed(12), sim::GaussianShape{20.0, 20.0}, 1}};
  s.background = sim::Background{0.3, std::nullopt};
  std::vector<LabeledCloud> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(sim::generate(s, derive_seed(seed, i)));
  return out;
}

}  // namespace

TEST_CASE("ground-truth displacements") {
  LabeledCloud c(PointCloud({{10, 0, {}}, {-10, 0, {}}, {50, 50, {}}}), Partition({0, 0, -1}));
  const auto t = gt_displacements(c);
  CHECK(t.fine(0, 0) == -10.0);
  CHECK(t.fine(0, 1) == 0.0);
  CHECK(t.fine(2, 0) == 0.0);
  CHECK(t.fine(2, 1) == 0.0);
  CHECK_FALSE(t.coarse.has_value());

  LabeledCloud sq(PointCloud({{0, 0, {}}, {2, 0, {}}, {2, 2, {}}, {0, 2, {}}}), Partition({0, 0, 0, 0}));
  const auto u = gt_displacements(sq);
  double sx = 0, sy = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(sq.cloud().points()[i].x + u.fine(i, 0) == 1.0);
    CHECK(sq.cloud().points()[i].y + u.fine(i, 1) == 1.0);
    sx += u.fine(i, 0);
    sy += u.fine(i, 1);
  }
  CHECK(sx == 0.0);
  CHECK(sy == 0.0);
}

TEST_CASE("loss worked examples") {
  LossOptions opt;
  {
    const auto g = graph_of({{0, 0}}, {});
    Matrix d(1, 2);
    d(0, 0) = 1.0;
    const auto r = loss(outputs({d}), g, {Matrix(1, 2), std::nullopt}, std::nullopt, opt);
    CHECK(r.value.r == 1.0);
    CHECK(r.value.d == 0.0);
  }
  {
    const auto g = graph_of({{0, 0}, {3, 4}}, {{0, 1}});
    Matrix d(2, 2);
    d(1, 1) = -4.0;
    const auto r = loss(outputs({d}), g, {Matrix(2, 2), std::nullopt}, std::nullopt, opt);
    CHECK(r.value.d == doctest::Approx(2.0).epsilon(1e-15));
  }
  {
    Rng rng(3);
    const auto g = build_graph(oracle::random_points(rng, 20, 200.0), GraphConfig{});
    Matrix t(20, 2);
    for (double& v : t.values()) v = normal(rng, 5.0);
    const auto r = loss(outputs({t, t, t}), g, {t, std::nullopt}, std::nullopt, opt);
    CHECK(r.value.r == 0.0);
    CHECK(r.value.d == doctest::Approx(0.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(loss(outputs({Matrix(1, 2)}), graph_of({{0, 0}}, {}), {Matrix(1, 2), std::nullopt}, std::nullopt,
                       LossOptions{1}),
                  Error);
}

TEST_CASE("per-step structure: one step equals the single-step loss") {
  Rng rng(8);
  const auto g = build_graph(oracle::random_points(rng, 30, 300.0), GraphConfig{});
  Matrix t(30, 2), d(30, 2);
  for (double& v : t.values()) v = normal(rng, 5.0);
  for (double& v : d.values()) v = normal(rng, 5.0);
  LossOptions opt;
  opt.length_scale = 100.0;
  const auto one = loss(outputs({d}), g, {t, std::nullopt}, std::nullopt, opt);
  const auto two = loss(outputs({d, d}), g, {t, std::nullopt}, std::nullopt, opt);
  CHECK(std::abs(one.value.total - two.value.total) < 1e-12);
}

TEST_CASE("gradients match central differences") {
  Rng rng(21);
  for (int trial = 0; trial < 3; ++trial) {
    const auto pts = oracle::random_points(rng, 12, 150.0);
    const auto g = build_graph(pts, GraphConfig{});
    ModelConfig cfg;
    cfg.latent_dim = 8;
    cfg.K = 2;
    cfg.n_classes = 3;
    const auto p = init_params(cfg, 100 + trial);
    DisplacementTargets t{Matrix(12, 2), std::nullopt};
    for (double& v : t.fine.values()) v = normal(rng, 20.0);
    std::vector<int> cls(12);
    for (int& c : cls) c = uniform_int(rng, 0, 2);
    LossOptions opt;
    opt.length_scale = cfg.length_scale_nm;
    const auto r = gradcheck::check(g, p, t, std::span<const int>(cls), opt);
    CAPTURE(r.skipped);
    CHECK(r.checked > r.skipped);
    CHECK(r.max_rel < 1e-4);
  }
}

TEST_CASE("zero model with zero targets has zero decoder bias gradient") {
  Rng rng(2);
  TrainSample s;
  s.graph = build_graph(oracle::random_points(rng, 15, 200.0), GraphConfig{});
  s.targets = {Matrix(15, 2), std::nullopt};
  ModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.K = 2;
  const ModelParams zero(cfg);
  const TrainSample* batch[] = {&s};
  const auto gr = gradients(zero, batch, LossOptions{});
  for (double v : gr.grad.disp_decoder.b) CHECK(v == 0.0);
}

TEST_CASE("duplicating a graph in the batch leaves the gradient unchanged") {
  auto data = spot_dataset(1, 4);
  const auto samples = prepare_samples(data, GraphConfig{}, false, false);
  ModelConfig cfg;
  cfg.latent_dim = 8;
  cfg.K = 2;
  const auto p = init_params(cfg, 1);
  const TrainSample* one[] = {&samples[0]};
  const TrainSample* two[] = {&samples[0], &samples[0]};
  auto a = gradients(p, one, LossOptions{}).grad;
  auto b = gradients(p, two, LossOptions{}).grad;
  auto ta = a.tensors(), tb = b.tensors();
  for (std::size_t t = 0; t < ta.size(); ++t)
    for (std::size_t i = 0; i < ta[t].data.size(); ++i)
      CHECK(std::abs(ta[t].data[i] - tb[t].data[i]) <= 1e-15 * std::max(1.0, std::abs(ta[t].data[i])));
}

TEST_CASE("non-finite loss reports divergence") {
  auto data = spot_dataset(2, 5);
  auto samples = prepare_samples(data, GraphConfig{}, false, false);
  samples[1].targets.fine(0, 0) = std::numeric_limits<double>::infinity();
  ModelConfig cfg;
  cfg.latent_dim = 4;
  cfg.K = 1;
  const TrainSample* batch[] = {&samples[0], &samples[1]};
  CHECK_THROWS_WITH_AS(gradients(init_params(cfg, 1), batch, LossOptions{}),
                       "divergence: non-finite loss on graph 1 of the batch", Error);
}

TEST_CASE("fit with zero learning rate is a no-op") {
  auto data = spot_dataset(1, 6);
  ModelConfig mc;
  mc.latent_dim = 8;
  mc.K = 2;
  TrainConfig tc;
  tc.epochs = 1;
  tc.learning_rate = 0.0;
  tc.seed = 9;
  const auto r = fit(data, mc, tc, GraphConfig{});
  CHECK(r.params == init_params(mc, derive_seed(9, 0x1417)));
  CHECK(r.history.size() == 1);
}

TEST_CASE("training reduces the loss and resumes deterministically") {
  auto data = spot_dataset(12, 7);
  ModelConfig mc;
  mc.latent_dim = 16;
  mc.K = 3;
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 4;
  tc.learning_rate = 3e-3;
  tc.seed = 5;
  tc.checkpoint_every = 10;

  const auto dir = std::filesystem::temp_directory_path() / "miro_test_fit";
  std::filesystem::remove_all(dir);
  FitOptions full_opt;
  full_opt.run_dir = dir / "full";
  const auto full = fit(data, mc, tc, GraphConfig{}, full_opt);
  CHECK(full.history.back().total < 0.5 * full.history.front().total);
  CHECK(std::filesystem::exists(dir / "full" / "config.json"));
  CHECK(std::filesystem::exists(dir / "full" / "checkpoints" / "epoch_00030.json"));
  const auto csv = io::read_text(dir / "full" / "loss.csv");
  CHECK(csv.rfind("epoch,L_total,L_r,L_d,L_class\n1,", 0) == 0);

  // Interrupted run: 20 epochs, then resume to 30.
  TrainConfig first = tc;
  first.epochs = 20;
  FitOptions part_opt;
  part_opt.run_dir = dir / "part";
  fit(data, mc, first, GraphConfig{}, part_opt);
  part_opt.resume = true;
  const auto resumed = fit(data, mc, tc, GraphConfig{}, part_opt);
  CHECK(resumed.params == full.params);
  CHECK(resumed.history.size() == 30);
  CHECK(io::read_text(dir / "part" / "loss.csv") == csv);

  const auto ck = load_checkpoint(*latest_checkpoint(dir / "full"));
  CHECK(ck.epoch == 30);
  CHECK(ck.params == full.params);
  CHECK(load_params(*latest_checkpoint(dir / "full")) == full.params);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config validation") {
  ModelConfig mc;
  mc.K = 4;
  TrainConfig tc;
  tc.k_star = 4;
  CHECK_THROWS_AS(tc.validate(mc), Error);
  tc.k_star = 0;
  CHECK_THROWS_AS(tc.validate(mc), Error);
  tc.k_star = 2;
  CHECK_NOTHROW(tc.validate(mc));
  tc.alpha = -1;
  CHECK_THROWS_AS(tc.validate(mc), Error);
}

TEST_CASE("final quarter slope") {
  std::vector<LossBreakdown> down, up;
  for (int i = 0; i < 20; ++i) {
    down.push_back({20.0 - i});
    up.push_back({double(i)});
  }
  CHECK(final_quarter_slope(down) < 0.0);
  CHECK(final_quarter_slope(up) > 0.0);
}
