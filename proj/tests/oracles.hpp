// Brute-force reference implementations and fixtures shared by the unit and
// acceptance tests.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <span>
#include <vector>

#include "miro/core.hpp"
#include "miro/delaunay.hpp"
#include "miro/rng.hpp"
#include "miro/tensor.hpp"

namespace oracle {

using miro::Vec2;

inline std::vector<Vec2> random_points(miro::Rng& rng, std::size_t n, double side) {
  std::vector<Vec2> p(n);
  for (auto& v : p) v = {miro::uniform(rng, 0.0, side), miro::uniform(rng, 0.0, side)};
  return p;
}

/// Delaunay edges by the empty-circumcircle test over every triangle, O(n^4).
inline std::vector<miro::geom::Edge> delaunay(std::span<const Vec2> p) {
  std::set<miro::geom::Edge> edges;
  const std::size_t n = p.size();
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      for (std::size_t c = b + 1; c < n; ++c) {
        const long double ax = p[a].x, ay = p[a].y, bx = p[b].x, by = p[b].y, cx = p[c].x, cy = p[c].y;
        const long double d = 2 * (ax * (by - cy) + bx * (cy - ay) + cx * (ay - by));
        if (std::abs(d) < 1e-12L) continue;
        const long double a2 = ax * ax + ay * ay, b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
        const long double ux = (a2 * (by - cy) + b2 * (cy - ay) + c2 * (ay - by)) / d;
        const long double uy = (a2 * (cx - bx) + b2 * (ax - cx) + c2 * (bx - ax)) / d;
        const long double r2 = (ax - ux) * (ax - ux) + (ay - uy) * (ay - uy);
        bool empty = true;
        for (std::size_t q = 0; q < n && empty; ++q) {
          if (q == a || q == b || q == c) continue;
          const long double dx = p[q].x - ux, dy = p[q].y - uy;
          if (dx * dx + dy * dy < r2 * (1 - 1e-12L)) empty = false;
        }
        if (!empty) continue;
        const std::uint32_t t[3] = {std::uint32_t(a), std::uint32_t(b), std::uint32_t(c)};
        edges.insert({t[0], t[1]});
        edges.insert({t[0], t[2]});
        edges.insert({t[1], t[2]});
      }
  return {edges.begin(), edges.end()};
}

struct DbscanTruth {
  std::vector<char> core;
  /// Component id of every core point (core-core links within eps), -1 otherwise.
  std::vector<int> core_component;
  /// For non-core points, the set of components with a core neighbour.
  std::vector<std::set<int>> reachable;
};

inline DbscanTruth dbscan(std::span<const Vec2> p, double eps, std::size_t min_pts) {
  const std::size_t n = p.size();
  DbscanTruth t;
  t.core.assign(n, 0);
  auto near = [&](std::size_t i, std::size_t j) { return miro::distance(p[i], p[j]) <= eps; };
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < n; ++j) c += near(i, j);
    t.core[i] = c >= min_pts;
  }
  t.core_component.assign(n, -1);
  int next = 0;
  for (std::size_t s = 0; s < n; ++s) {
    if (!t.core[s] || t.core_component[s] >= 0) continue;
    std::vector<std::size_t> stack{s};
    t.core_component[s] = next;
    while (!stack.empty()) {
      const auto i = stack.back();
      stack.pop_back();
      for (std::size_t j = 0; j < n; ++j)
        if (t.core[j] && t.core_component[j] < 0 && near(i, j)) {
          t.core_component[j] = next;
          stack.push_back(j);
        }
    }
    ++next;
  }
  t.reachable.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    if (!t.core[i])
      for (std::size_t j = 0; j < n; ++j)
        if (t.core[j] && near(i, j)) t.reachable[i].insert(t.core_component[j]);
  return t;
}

/// True when `labels` is a valid DBSCAN result for the oracle: core points
/// grouped exactly by component, unreachable points NOISE, and every border
/// point in the cluster of one of its core neighbours.
inline bool dbscan_consistent(const DbscanTruth& t, std::span<const int> labels) {
  std::map<int, int> comp_to_label, label_to_comp;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!t.core[i]) continue;
    if (labels[i] < 0) return false;
    auto [a, ins_a] = comp_to_label.emplace(t.core_component[i], labels[i]);
    auto [b, ins_b] = label_to_comp.emplace(labels[i], t.core_component[i]);
    if (a->second != labels[i] || b->second != t.core_component[i]) return false;
  }
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (t.core[i]) continue;
    if (t.reachable[i].empty()) {
      if (labels[i] != -1) return false;
      continue;
    }
    auto it = label_to_comp.find(labels[i]);
    if (it == label_to_comp.end() || !t.reachable[i].count(it->second)) return false;
  }
  return true;
}

/// Same partition up to renaming of the labels (NOISE must stay NOISE).
inline bool same_up_to_renaming(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) return false;
  std::map<int, int> ab, ba;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if ((a[i] == -1) != (b[i] == -1)) return false;
    if (a[i] == -1) continue;
    auto [x, xi] = ab.emplace(a[i], b[i]);
    auto [y, yi] = ba.emplace(b[i], a[i]);
    if (x->second != b[i] || y->second != a[i]) return false;
  }
  return true;
}

/// Minimum assignment cost over all injective row-to-column maps.
inline double brute_assignment(const miro::Matrix& c) {
  const std::size_t r = c.rows(), k = c.cols();
  if (r == 0 || k == 0) return 0.0;
  const bool by_rows = r <= k;
  const std::size_t small = by_rows ? r : k, big = by_rows ? k : r;
  std::vector<std::size_t> perm(big);
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < small; ++i) s += by_rows ? c(i, perm[i]) : c(perm[i], i);
    best = std::min(best, s);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// Label vectors reproducing the two worked confusion matrices of the metric
/// comparison: 1000 noise points and 20 ground-truth clusters of 50.
struct LabelPair {
  std::vector<int> gt, pred;
};

inline LabelPair table_a() {
  LabelPair t;
  auto add = [&](int g, int p, int count) {
    for (int i = 0; i < count; ++i) {
      t.gt.push_back(g);
      t.pred.push_back(p);
    }
  };
  add(-1, -1, 800);
  for (int c = 0; c < 20; ++c) add(-1, c, 10);
  for (int c = 0; c < 20; ++c) {
    add(c, -1, 5);
    add(c, c, 45);
  }
  return t;
}

inline LabelPair table_b() {
  LabelPair t;
  auto add = [&](int g, int p, int count) {
    for (int i = 0; i < count; ++i) {
      t.gt.push_back(g);
      t.pred.push_back(p);
    }
  };
  add(-1, -1, 900);
  for (int c = 0; c < 10; ++c) add(-1, c, 5);
  for (int k = 0; k < 10; ++k) add(-1, 10 + 2 * k, 5);
  for (int c = 0; c < 10; ++c) {
    add(c, -1, 9);
    add(c, c, 41);
  }
  for (int k = 0; k < 10; ++k) {
    add(10 + k, -1, 9);
    add(10 + k, 10 + 2 * k, 21);
    add(10 + k, 11 + 2 * k, 20);
  }
  return t;
}

/// Positions for a label pair. Every ground-truth cluster gets a grid cell.
/// When several predicted clusters share one ground-truth cluster, each
/// predicted part sits at its own offset around the cell center, so a split
/// cluster is split in space too and the larger part stays closest to the
/// ground-truth centroid. Points of one (gt, pred) group lie evenly on a small
/// circle, which puts every group centroid exactly on its center. Background
/// assigned to a predicted cluster joins that prediction's part; the remaining
/// background is spread over the field.
inline std::vector<Vec2> layout_for(const LabelPair& t, miro::Rng& rng, double spacing = 1000.0) {
  std::map<int, std::map<int, int>> overlap;  // pred -> gt -> count
  std::map<int, std::vector<int>> parts;      // gt -> predicted clusters overlapping it
  for (std::size_t i = 0; i < t.gt.size(); ++i)
    if (t.gt[i] >= 0 && t.pred[i] >= 0) ++overlap[t.pred[i]][t.gt[i]];
  std::map<int, int> owner;
  for (const auto& [p, counts] : overlap) {
    owner[p] = std::max_element(counts.begin(), counts.end(), [](auto a, auto b) { return a.second < b.second; })->first;
    for (const auto& [g, n] : counts) parts[g].push_back(p);
  }
  auto center = [&](int g, int p) {
    Vec2 c{spacing * (g % 10), spacing * (g / 10)};
    const auto& ps = parts[g];
    if (p < 0 || ps.size() < 2) return c;
    const auto k = std::size_t(std::find(ps.begin(), ps.end(), p) - ps.begin());
    const double a = 2.0 * std::numbers::pi * double(k) / double(ps.size());
    return Vec2{c.x + 0.03 * spacing * std::cos(a), c.y + 0.03 * spacing * std::sin(a)};
  };
  std::map<std::pair<int, int>, std::vector<std::size_t>> groups;
  std::vector<Vec2> p(t.gt.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (t.gt[i] >= 0) {
      groups[{t.gt[i], t.pred[i]}].push_back(i);
    } else if (t.pred[i] >= 0) {
      groups[{owner.at(t.pred[i]), t.pred[i]}].push_back(i);
    } else {
      p[i] = {miro::uniform(rng, 0.0, 10 * spacing), miro::uniform(rng, 0.0, 10 * spacing)};
    }
  }
  std::map<Vec2, int, bool (*)(const Vec2&, const Vec2&)> rings_at(
      +[](const Vec2& a, const Vec2& b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  for (const auto& [key, idx] : groups) {
    const Vec2 c = center(key.first, key.second);
    const double radius = 0.005 * spacing * double(1 + rings_at[c]++);
    for (std::size_t m = 0; m < idx.size(); ++m) {
      const double a = 2.0 * std::numbers::pi * double(m) / double(idx.size());
      p[idx[m]] = {c.x + radius * std::cos(a), c.y + radius * std::sin(a)};
    }
  }
  return p;
}

}  // namespace oracle
