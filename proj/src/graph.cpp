#include "miro/graph.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "miro/delaunay.hpp"
#include "miro/io.hpp"

namespace miro {

GraphConfig GraphConfig::fixed(double delta_nm, std::size_t n_eigs) {
  GraphConfig c;
  c.delta_mode = DeltaMode::fixed;
  c.delta = delta_nm;
  c.n_eigs = n_eigs;
  return c;
}

GraphConfig GraphConfig::percentile_of(double p, std::size_t n_eigs) {
  GraphConfig c;
  c.delta_mode = DeltaMode::percentile;
  c.percentile = p;
  c.n_eigs = n_eigs;
  return c;
}

void GraphConfig::validate() const {
  if (delta_mode == DeltaMode::fixed && !(delta > 0.0)) throw Error("graph: fixed delta must be > 0");
  if (delta_mode == DeltaMode::percentile && !(percentile > 0.0 && percentile < 100.0))
    throw Error("graph: percentile must be in (0, 100)");
  if (n_eigs < 1) throw Error("graph: n_eigs must be >= 1");
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double t = pos - static_cast<double>(lo);
  return values[lo] + t * (values[hi] - values[lo]);
}

LocGraph build_graph(std::span<const Vec2> points, const GraphConfig& cfg) {
  cfg.validate();
  if (points.empty()) throw Error("build_graph: empty point set");
  LocGraph g;
  g.coords.assign(points.begin(), points.end());
  const std::size_t n = points.size();

  const auto all = geom::delaunay_edges(points);
  std::vector<double> lengths(all.size());
  for (std::size_t e = 0; e < all.size(); ++e) lengths[e] = distance(points[all[e].first], points[all[e].second]);
  g.delta = cfg.delta_mode == GraphConfig::DeltaMode::fixed ? cfg.delta : percentile(lengths, cfg.percentile);

  std::vector<geom::Edge> kept;
  for (std::size_t e = 0; e < all.size(); ++e)
    if (lengths[e] <= g.delta) kept.push_back(all[e]);

  g.node_feats = spectral::laplacian_features(kept, n, cfg.n_eigs, cfg.solver);

  std::vector<geom::Edge> directed;
  directed.reserve(2 * kept.size());
  for (auto [i, j] : kept) {
    directed.emplace_back(i, j);
    directed.emplace_back(j, i);
  }
  std::sort(directed.begin(), directed.end());
  g.src.resize(directed.size());
  g.dst.resize(directed.size());
  g.edge_feats.resize(directed.size(), 3);
  for (std::size_t e = 0; e < directed.size(); ++e) {
    const auto [i, j] = directed[e];
    g.src[e] = i;
    g.dst[e] = j;
    const Vec2 d = points[j] - points[i];
    const double len = norm(d);
    g.edge_feats(e, 0) = len;
    g.edge_feats(e, 1) = len > 0.0 ? d.x / len : 0.0;
    g.edge_feats(e, 2) = len > 0.0 ? d.y / len : 0.0;
  }
  return g;
}

LocGraph build_graph(const PointCloud& cloud, const GraphConfig& cfg) {
  const auto pos = cloud.positions();
  return build_graph(pos, cfg);
}

std::string format_edges_csv(const LocGraph& g) {
  std::ostringstream out;
  out << "i,j,dist_nm,dir_x,dir_y\n";
  for (std::size_t e = 0; e < g.n_edges(); ++e)
    out << g.src[e] << ',' << g.dst[e] << ',' << io::format_double(g.edge_feats(e, 0)) << ','
        << io::format_double(g.edge_feats(e, 1)) << ',' << io::format_double(g.edge_feats(e, 2)) << '\n';
  return out.str();
}

LocGraph permute_nodes(const LocGraph& g, std::span<const std::uint32_t> perm) {
  const std::size_t n = g.n_nodes();
  if (perm.size() != n) throw Error("permute_nodes: permutation size mismatch");
  LocGraph p;
  p.delta = g.delta;
  p.coords.resize(n);
  p.node_feats.resize(n, g.node_feats.cols());
  for (std::size_t i = 0; i < n; ++i) {
    p.coords[perm[i]] = g.coords[i];
    std::copy(g.node_feats.row(i).begin(), g.node_feats.row(i).end(), p.node_feats.row(perm[i]).begin());
  }
  std::vector<std::size_t> order(g.n_edges());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::pair(perm[g.src[a]], perm[g.dst[a]]) < std::pair(perm[g.src[b]], perm[g.dst[b]]);
  });
  p.src.resize(order.size());
  p.dst.resize(order.size());
  p.edge_feats.resize(order.size(), g.edge_feats.cols());
  for (std::size_t k = 0; k < order.size(); ++k) {
    p.src[k] = perm[g.src[order[k]]];
    p.dst[k] = perm[g.dst[order[k]]];
    std::copy(g.edge_feats.row(order[k]).begin(), g.edge_feats.row(order[k]).end(), p.edge_feats.row(k).begin());
  }
  return p;
}

}  // namespace miro
