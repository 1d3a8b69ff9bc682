#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "miro/delaunay.hpp"
#include "miro/graph.hpp"
#include "miro/spectral.hpp"
#include "oracles.hpp"

using namespace miro;

namespace {

std::vector<geom::Edge> undirected(const LocGraph& g) {
  std::vector<geom::Edge> e;
  for (std::size_t k = 0; k < g.n_edges(); ++k)
    if (g.src[k] < g.dst[k]) e.push_back({g.src[k], g.dst[k]});
  return e;
}

std::vector<geom::Edge> random_graph(Rng& rng, std::size_t n, double p) {
  std::vector<geom::Edge> e;
  for (std::uint32_t i = 0; i < n; ++i)
    for (std::uint32_t j = i + 1; j < n; ++j)
      if (bernoulli(rng, p)) e.push_back({i, j});
  return e;
}

}  // namespace

TEST_CASE("delaunay small cases") {
  const std::vector<Vec2> tri{{0, 0}, {1, 0}, {0, 1}};
  CHECK(geom::delaunay_edges(tri) == std::vector<geom::Edge>{{0, 1}, {0, 2}, {1, 2}});

  const std::vector<Vec2> sq{{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  const auto e = geom::delaunay_edges(sq);
  CHECK(e.size() == 5);
  for (geom::Edge p : {geom::Edge{0, 1}, geom::Edge{1, 2}, geom::Edge{2, 3}, geom::Edge{0, 3}})
    CHECK(std::find(e.begin(), e.end(), p) != e.end());

  CHECK(geom::delaunay_edges(std::vector<Vec2>{{1, 1}}).empty());
  CHECK(geom::delaunay_edges(std::vector<Vec2>{}).empty());
}

TEST_CASE("delaunay matches the empty circumcircle oracle") {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const auto p = oracle::random_points(rng, 50, 1000.0);
    CHECK(geom::delaunay_edges(p) == oracle::delaunay(p));
  }
}

TEST_CASE("degenerate inputs fall back to nearest neighbours") {
  std::vector<Vec2> line;
  for (int i = 0; i < 6; ++i) line.push_back({double(i), 2.0 * i});
  CHECK_FALSE(geom::delaunay(line).has_value());
  CHECK(geom::delaunay_edges(line) == geom::knn_edges(line, 3));
  const std::vector<Vec2> two{{0, 0}, {3, 4}};
  CHECK(geom::delaunay_edges(two) == std::vector<geom::Edge>{{0, 1}});
}

TEST_CASE("duplicate points stay connected with a zero direction") {
  const std::vector<Vec2> p{{0, 0}, {10, 0}, {0, 10}, {10, 0}};
  const auto g = build_graph(p, GraphConfig::fixed(100.0));
  bool found = false;
  for (std::size_t k = 0; k < g.n_edges(); ++k)
    if ((g.src[k] == 1 && g.dst[k] == 3) || (g.src[k] == 3 && g.dst[k] == 1)) {
      found = true;
      CHECK(g.edge_feats(k, 0) == 0.0);
      CHECK(g.edge_feats(k, 1) == 0.0);
      CHECK(g.edge_feats(k, 2) == 0.0);
    }
  CHECK(found);
}

TEST_CASE("laplacian features on tiny graphs") {
  const std::vector<geom::Edge> path{{0, 1}};
  const auto s = spectral::laplacian_spectrum(2, path);
  CHECK(s.values[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(s.values[1] == doctest::Approx(2.0));
  const auto f = spectral::laplacian_features(path, 2, 5);
  CHECK(f(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(f(1, 0) == doctest::Approx(1.0 / std::sqrt(2.0)));
  for (std::size_t c = 1; c < 5; ++c) CHECK(f(0, c) == 0.0);

  const std::vector<geom::Edge> tri{{0, 1}, {1, 2}, {0, 2}};
  const auto t = spectral::smallest_nontrivial(3, tri, 5);
  REQUIRE(t.values.size() == 2);
  CHECK(t.values[0] == doctest::Approx(1.5));
  CHECK(t.values[1] == doctest::Approx(1.5));
}

TEST_CASE("spectral bounds, null space and orthonormality") {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 5 + std::size_t(uniform_int(rng, 0, 40));
    const auto e = random_graph(rng, n, uniform(rng, 0.02, 0.3));
    const auto s = spectral::laplacian_spectrum(n, e);
    const auto comps = spectral::connected_components(n, e);
    std::vector<std::size_t> size(comps.count, 0);
    for (auto id : comps.id) ++size[id];
    const auto non_singleton = std::count_if(size.begin(), size.end(), [](auto x) { return x > 1; });
    std::size_t zeros = 0;
    for (double v : s.values) {
      CHECK(v >= -1e-9);
      CHECK(v <= 2.0 + 1e-9);
      zeros += v < 1e-9;
    }
    CHECK(zeros == std::size_t(non_singleton));
  }
}

TEST_CASE("per-component solve matches the global dense spectrum") {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t n = 10 + std::size_t(uniform_int(rng, 0, 50));
    const auto e = random_graph(rng, n, uniform(rng, 0.03, 0.2));
    const auto full = spectral::laplacian_spectrum(n, e);
    const auto sel = spectral::smallest_nontrivial(n, e, 5);
    const double tol = 1e-9 * full.values.back();
    std::vector<double> nontrivial;
    for (double v : full.values)
      if (v > tol) nontrivial.push_back(v);
    REQUIRE(sel.values.size() == std::min<std::size_t>(5, nontrivial.size()));
    for (std::size_t k = 0; k < sel.values.size(); ++k) CHECK(std::abs(sel.values[k] - nontrivial[k]) < 1e-9);
    const auto l = spectral::normalized_laplacian(n, e);
    for (std::size_t k = 0; k < sel.values.size(); ++k) {
      double res = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        double r = -sel.values[k] * sel.vectors(i, k);
        for (std::size_t j = 0; j < n; ++j) r += l(i, j) * sel.vectors(j, k);
        res += r * r;
        norm += sel.vectors(i, k) * sel.vectors(i, k);
      }
      CHECK(std::sqrt(res) < 1e-8);
      CHECK(std::abs(norm - 1.0) < 1e-10);
    }
  }
}

TEST_CASE("lanczos path agrees with the dense path") {
  Rng rng(99);
  const auto p = oracle::random_points(rng, 600, 3000.0);
  const auto edges = geom::delaunay_edges(p);
  spectral::SolverOptions dense, sparse;
  dense.dense_limit = 10000;
  sparse.dense_limit = 0;
  const auto a = spectral::smallest_nontrivial(p.size(), edges, 5, dense);
  const auto b = spectral::smallest_nontrivial(p.size(), edges, 5, sparse);
  REQUIRE(a.values.size() == 5);
  REQUIRE(b.values.size() == 5);
  const auto l = spectral::normalized_laplacian(p.size(), edges);
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(std::abs(a.values[k] - b.values[k]) < 1e-8);
    double res = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      double r = -b.values[k] * b.vectors(i, k);
      for (std::size_t j = 0; j < p.size(); ++j) r += l(i, j) * b.vectors(j, k);
      res += r * r;
    }
    CHECK(std::sqrt(res) < 1e-6);
  }
  double max_off = 0.0;
  for (std::size_t x = 0; x < 5; ++x)
    for (std::size_t y = 0; y < 5; ++y) {
      double dot = 0.0;
      for (std::size_t i = 0; i < p.size(); ++i) dot += b.vectors(i, x) * b.vectors(i, y);
      max_off = std::max(max_off, std::abs(dot - (x == y ? 1.0 : 0.0)));
    }
  CHECK(max_off < 1e-8);
}

TEST_CASE("build_graph threshold and invariants") {
  const std::vector<Vec2> p{{0, 0}, {10, 0}, {1000, 30}};
  const auto g = build_graph(p, GraphConfig::fixed(50.0));
  CHECK(g.n_edges() == 2);
  CHECK(undirected(g) == std::vector<geom::Edge>{{0, 1}});

  Rng rng(4);
  const auto pts = oracle::random_points(rng, 200, 2000.0);
  const auto h = build_graph(pts, GraphConfig{});
  const double mean_deg = double(h.n_edges()) / 200.0;
  const double delaunay_deg = 2.0 * double(geom::delaunay_edges(pts).size()) / 200.0;
  CHECK(mean_deg <= delaunay_deg);
  CHECK(delaunay_deg < 6.0);
  for (std::size_t k = 0; k < h.n_edges(); ++k) {
    CHECK(h.src[k] != h.dst[k]);
    const double d = distance(h.coords[h.src[k]], h.coords[h.dst[k]]);
    CHECK(std::abs(h.edge_feats(k, 0) - d) < 1e-9);
    CHECK(std::abs(std::hypot(h.edge_feats(k, 1), h.edge_feats(k, 2)) - 1.0) < 1e-9);
    CHECK(h.edge_feats(k, 0) <= h.delta);
    if (k > 0) CHECK(std::pair(h.src[k - 1], h.dst[k - 1]) < std::pair(h.src[k], h.dst[k]));
  }
  // Every undirected edge appears in both directions exactly once.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> fwd, rev;
  for (std::size_t k = 0; k < h.n_edges(); ++k) {
    fwd.emplace_back(h.src[k], h.dst[k]);
    rev.emplace_back(h.dst[k], h.src[k]);
  }
  std::sort(rev.begin(), rev.end());
  CHECK(fwd == rev);
  for (double v : h.node_feats.values()) CHECK(v >= 0.0);
  for (std::size_t c = 0; c < h.node_feats.cols(); ++c) {
    double s = 0.0;
    for (std::size_t i = 0; i < h.n_nodes(); ++i) s += h.node_feats(i, c) * h.node_feats(i, c);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }

  const auto again = build_graph(pts, GraphConfig{});
  CHECK(again.node_feats == h.node_feats);
  CHECK(again.edge_feats == h.edge_feats);
}

TEST_CASE("graph features under rigid motions") {
  Rng rng(12);
  const auto pts = oracle::random_points(rng, 150, 1500.0);
  const auto cfg = GraphConfig::fixed(250.0);
  const auto g = build_graph(pts, cfg);
  const double angle = 0.7;
  std::vector<Vec2> moved;
  for (auto p : pts)
    moved.push_back({std::cos(angle) * p.x - std::sin(angle) * p.y + 1000.0,
                     std::sin(angle) * p.x + std::cos(angle) * p.y - 500.0});
  const auto h = build_graph(moved, cfg);
  REQUIRE(h.src == g.src);
  REQUIRE(h.dst == g.dst);
  for (std::size_t k = 0; k < g.n_edges(); ++k) {
    CHECK(std::abs(h.edge_feats(k, 0) - g.edge_feats(k, 0)) < 1e-9);
    const double rx = std::cos(angle) * g.edge_feats(k, 1) - std::sin(angle) * g.edge_feats(k, 2);
    const double ry = std::sin(angle) * g.edge_feats(k, 1) + std::cos(angle) * g.edge_feats(k, 2);
    CHECK(std::abs(h.edge_feats(k, 1) - rx) < 1e-9);
    CHECK(std::abs(h.edge_feats(k, 2) - ry) < 1e-9);
  }
  // The Laplacian depends only on topology, so the features are identical.
  CHECK(h.node_feats == g.node_feats);
}

TEST_CASE("percentile and edge csv") {
  CHECK(percentile({1, 2, 3, 4, 5}, 50) == 3.0);
  CHECK(percentile({1, 2, 3, 4}, 50) == 2.5);
  CHECK(percentile({4, 1}, 100) == 4.0);
  const std::vector<Vec2> p{{0, 0}, {3, 4}};
  const auto g = build_graph(p, GraphConfig::fixed(10.0));
  CHECK(format_edges_csv(g) == "i,j,dist_nm,dir_x,dir_y\n0,1,5,0.6,0.8\n1,0,5,-0.6,-0.8\n");
  CHECK_THROWS_AS(build_graph(std::vector<Vec2>{}, GraphConfig{}), Error);
  CHECK_THROWS_AS(GraphConfig::fixed(-1.0).validate(), Error);
  CHECK_THROWS_AS(GraphConfig::percentile_of(100.0).validate(), Error);
}

TEST_CASE("permute_nodes relabels consistently") {
  Rng rng(2);
  const auto pts = oracle::random_points(rng, 40, 500.0);
  const auto g = build_graph(pts, GraphConfig{});
  std::vector<std::uint32_t> perm(40);
  std::iota(perm.begin(), perm.end(), 0);
  std::shuffle(perm.begin(), perm.end(), rng);
  const auto h = permute_nodes(g, perm);
  for (std::size_t i = 0; i < 40; ++i) {
    CHECK(h.coords[perm[i]] == g.coords[i]);
    for (std::size_t c = 0; c < g.node_feats.cols(); ++c) CHECK(h.node_feats(perm[i], c) == g.node_feats(i, c));
  }
  CHECK(h.n_edges() == g.n_edges());
}
