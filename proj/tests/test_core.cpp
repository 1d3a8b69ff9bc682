#include <doctest.h>

#include <charconv>
#include <filesystem>

#include "miro/config.hpp"
#include "miro/core.hpp"
#include "miro/io.hpp"
#include "miro/rng.hpp"

using namespace miro;

TEST_CASE("centroid") {
  const std::vector<Vec2> two{{0, 0}, {2, 0}};
  CHECK(centroid(two) == Vec2{1, 0});
  const std::vector<Vec2> one{{5, 5}};
  CHECK(centroid(one) == Vec2{5, 5});
  CHECK_THROWS_WITH_AS(centroid(std::vector<Vec2>{}), "empty point set", Error);

  Rng rng(42);
  std::vector<Vec2> square(1000);
  for (auto& p : square) p = {uniform(rng, 0, 1), uniform(rng, 0, 1)};
  const Vec2 c = centroid(square);
  CHECK(std::abs(c.x - 0.5) < 0.05);
  CHECK(std::abs(c.y - 0.5) < 0.05);
}

TEST_CASE("point cloud extent grows to fit") {
  PointCloud c({{1, 2, {}}, {-3, 5, {}}}, Rect{0, 0, 1, 1});
  for (const auto& p : c.points()) CHECK(c.extent().contains(p.pos()));
  CHECK_THROWS_AS(PointCloud({{std::nan(""), 0, {}}}), Error);
}

TEST_CASE("partition validation and helpers") {
  CHECK_THROWS_AS(Partition({0, -2}), Error);
  Partition p({3, -1, 3, 7, 7, -1});
  CHECK(p.cluster_ids() == std::vector<int>{3, 7});
  CHECK(p.n_clusters() == 2);
  CHECK(p.members()[1] == std::vector<std::size_t>{3, 4});
  CHECK(p.compacted().labels() == std::vector<int>{0, -1, 0, 1, 1, -1});
}

TEST_CASE("labeled cloud invariants") {
  PointCloud cloud({{0, 0, {}}, {1, 0, {}}, {2, 0, {}}});
  CHECK_THROWS_AS(LabeledCloud(cloud, Partition({0, 0})), Error);
  CHECK_THROWS_AS(LabeledCloud(cloud, Partition({0, 0, -1}), std::vector<int>{1, 1, 2}), Error);
  CHECK_THROWS_AS(LabeledCloud(cloud, Partition({0, 0, 1}), std::nullopt, Partition({0, 1, 1})), Error);
  CHECK_NOTHROW(LabeledCloud(cloud, Partition({0, 1, -1}), std::vector<int>{1, 2, 0}, Partition({0, 0, -1})));
}

TEST_CASE("csv parsing") {
  auto f = io::parse_cloud("x_nm,y_nm\n1.5,2.5\n");
  CHECK(f.data.size() == 1);
  CHECK(f.data.cloud().points()[0].x == 1.5);
  CHECK_FALSE(f.columns.cluster_id);
  CHECK(f.data.truth()[0] == Partition::NOISE);

  auto g = io::parse_cloud("x_nm,y_nm,cluster_id\r\n0,0,-1\r\n1,1,4\r\n");
  CHECK(g.data.truth().labels() == std::vector<int>{-1, 4});

  CHECK_THROWS_WITH_AS(io::parse_cloud("x_nm,y_nm\n1,2\n1,abc\n"), doctest::Contains("line 3"), Error);
  CHECK_THROWS_WITH_AS(io::parse_cloud("x_nm,y_nm\n1,2,3\n"), doctest::Contains("line 2"), Error);
  CHECK_THROWS_AS(io::parse_cloud("x,y\n1,2\n"), Error);
  CHECK_THROWS_AS(io::parse_cloud("x_nm,y_nm,cluster_id,frame\n1,2,3,4\n"), Error);
}

TEST_CASE("csv round trip is exact") {
  const std::string text =
      "x_nm,y_nm,frame,cluster_id,class_id,coarse_id\n"
      "0.1,-2.000000000000001,3,0,2,0\n"
      "1e-300,12345.678901234567,,1,1,0\n"
      "3.3333333333333335,7,9,-1,0,-1\n";
  const auto first = io::parse_cloud(text);
  const std::string written = io::format_cloud(first.data, first.columns);
  const auto second = io::parse_cloud(written);
  CHECK(second.columns == first.columns);
  CHECK(second.data.cloud().points() == first.data.cloud().points());
  CHECK(second.data.truth() == first.data.truth());
  CHECK(second.data.shape_class() == first.data.shape_class());
  CHECK(second.data.coarse_truth() == first.data.coarse_truth());
  CHECK(io::format_cloud(second.data, second.columns) == written);

  Rng rng(3);
  for (int i = 0; i < 1000; ++i) {
    const double v = uniform(rng, -1e4, 1e4) * std::pow(10.0, uniform_int(rng, -20, 20));
    double back = 0;
    const auto s = io::format_double(v);
    std::from_chars(s.data(), s.data() + s.size(), back);
    CHECK(back == v);
  }
}

TEST_CASE("file write and read") {
  const auto dir = std::filesystem::temp_directory_path() / "miro_test_core";
  std::filesystem::create_directories(dir);
  LabeledCloud c(PointCloud({{1, 2, 5}, {3, 4, {}}}), Partition({0, -1}));
  io::write_cloud(dir / "c.csv", c);
  const auto back = io::read_cloud(dir / "c.csv");
  CHECK(back.data.cloud().points() == c.cloud().points());
  CHECK(back.data.truth() == c.truth());
  CHECK_THROWS_AS(io::read_cloud(dir / "missing.csv"), Error);
  std::filesystem::remove_all(dir);
}

TEST_CASE("config json round trips and rejects unknown keys") {
  TrainConfig t;
  t.k_star = 3;
  t.clip_norm = 10.0;
  t.optimizer = TrainConfig::Optimizer::sgd_momentum;
  ModelConfig m;
  m.K = 6;
  t.validate(m);
  nlohmann::json j = t;
  CHECK(config::parse<TrainConfig>(j, "train") == t);
  j["unknown"] = 1;
  CHECK_THROWS_WITH_AS(config::parse<TrainConfig>(j, "train"), doctest::Contains("unknown"), Error);

  nlohmann::json mj = m;
  CHECK(config::parse<ModelConfig>(mj, "model") == m);
  CHECK_THROWS_AS(config::parse<ModelConfig>(nlohmann::json{{"K", 0}}, "model"), Error);
  CHECK_THROWS_AS(config::parse<ModelConfig>(nlohmann::json{{"K", -3}}, "model"), Error);
  CHECK(config::parse<ModelConfig>(nlohmann::json::object(), "model") == ModelConfig{});

  GraphConfig g = GraphConfig::fixed(40.0, 4);
  nlohmann::json gj = g;
  const auto g2 = config::parse<GraphConfig>(gj, "graph");
  CHECK(g2.delta_mode == GraphConfig::DeltaMode::fixed);
  CHECK(g2.delta == 40.0);
  CHECK(g2.n_eigs == 4);

  DbscanConfig d{20.0, 4};
  nlohmann::json dj = d;
  CHECK(config::parse<DbscanConfig>(dj, "dbscan") == d);
  CHECK_THROWS_AS(config::parse<DbscanConfig>(nlohmann::json{{"eps", -1.0}}, "dbscan"), Error);
}
