#include "miro/delaunay.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <unordered_map>

namespace miro::geom {

long double orient(Vec2 a, Vec2 b, Vec2 c) {
  const long double abx = (long double)b.x - a.x, aby = (long double)b.y - a.y;
  const long double acx = (long double)c.x - a.x, acy = (long double)c.y - a.y;
  return abx * acy - aby * acx;
}

long double incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
  const long double adx = (long double)a.x - d.x, ady = (long double)a.y - d.y;
  const long double bdx = (long double)b.x - d.x, bdy = (long double)b.y - d.y;
  const long double cdx = (long double)c.x - d.x, cdy = (long double)c.y - d.y;
  const long double ad = adx * adx + ady * ady;
  const long double bd = bdx * bdx + bdy * bdy;
  const long double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

namespace {

constexpr int kInf = -1;

std::uint64_t hilbert_index(std::uint32_t x, std::uint32_t y, int order) {
  std::uint64_t d = 0;
  for (std::uint32_t s = 1u << (order - 1); s > 0; s >>= 1) {
    const std::uint32_t rx = (x & s) ? 1 : 0;
    const std::uint32_t ry = (y & s) ? 1 : 0;
    d += static_cast<std::uint64_t>(s) * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = s - 1 - x;
        y = s - 1 - y;
      }
      std::swap(x, y);
    }
  }
  return d;
}

struct Tri {
  int v[3];
  int n[3];
  bool alive = true;
};

class Triangulation {
 public:
  explicit Triangulation(std::span<const Vec2> pts) : p_(pts) {}

  void init(int a, int b, int c) {
    if (orient(p_[a], p_[b], p_[c]) < 0) std::swap(b, c);
    const int t0 = add({a, b, c});
    const int g0 = add({c, b, kInf});  // across edge b->c
    const int g1 = add({a, c, kInf});  // across edge c->a
    const int g2 = add({b, a, kInf});  // across edge a->b
    link({t0, g0, g1, g2});
    last_ = t0;
  }

  void insert(int pi) {
    const int start = locate(pi);
    // conflict region by flood fill
    std::vector<int> cavity{start};
    std::vector<std::pair<int, int>> boundary;  // (tri, local edge index) of cavity triangles
    mark_.resize(tris_.size(), 0);
    ++stamp_;
    mark_[start] = stamp_;
    for (std::size_t q = 0; q < cavity.size(); ++q) {
      const int t = cavity[q];
      for (int i = 0; i < 3; ++i) {
        const int nb = tris_[t].n[i];
        if (mark_[nb] == stamp_) continue;
        if (conflict(nb, pi)) {
          mark_[nb] = stamp_;
          cavity.push_back(nb);
        } else {
          boundary.emplace_back(t, i);
        }
      }
    }
    // re-check boundary entries whose outer triangle joined the cavity later
    std::vector<int> created;
    std::unordered_map<int, int> by_first, by_second;
    for (auto [t, i] : boundary) {
      const int nb = tris_[t].n[i];
      if (mark_[nb] == stamp_) continue;
      const int u = tris_[t].v[(i + 1) % 3];
      const int v = tris_[t].v[(i + 2) % 3];
      const int nt = add({u, v, pi});
      tris_[nt].n[2] = nb;
      for (int k = 0; k < 3; ++k)
        if (tris_[nb].n[k] == t) tris_[nb].n[k] = nt;
      by_first[u] = nt;
      by_second[v] = nt;
      created.push_back(nt);
    }
    for (int nt : created) {
      const int u = tris_[nt].v[0], v = tris_[nt].v[1];
      tris_[nt].n[0] = by_first.at(v);   // across v->p
      tris_[nt].n[1] = by_second.at(u);  // across p->u
    }
    for (int t : cavity) {
      tris_[t].alive = false;
      free_.push_back(t);
    }
    last_ = created.empty() ? last_ : created.front();
  }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (const auto& t : tris_) {
      if (!t.alive) continue;
      for (int i = 0; i < 3; ++i) {
        const int a = t.v[i], b = t.v[(i + 1) % 3];
        if (a == kInf || b == kInf) continue;
        out.emplace_back(std::min(a, b), std::max(a, b));
      }
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }

 private:
  int add(std::array<int, 3> v) {
    Tri t{{v[0], v[1], v[2]}, {-1, -1, -1}, true};
    if (!free_.empty()) {
      const int id = free_.back();
      free_.pop_back();
      tris_[id] = t;
      return id;
    }
    tris_.push_back(t);
    mark_.push_back(0);
    return static_cast<int>(tris_.size()) - 1;
  }

  void link(const std::vector<int>& ids) {
    std::map<std::pair<int, int>, std::pair<int, int>> edge;
    for (int t : ids)
      for (int i = 0; i < 3; ++i) edge[{tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3]}] = {t, i};
    for (int t : ids)
      for (int i = 0; i < 3; ++i) {
        const auto& other = edge.at({tris_[t].v[(i + 2) % 3], tris_[t].v[(i + 1) % 3]});
        tris_[t].n[i] = other.first;
      }
  }

  static bool is_ghost(const Tri& t) { return t.v[0] == kInf || t.v[1] == kInf || t.v[2] == kInf; }

  // For a ghost, the finite edge (u, v) in the triangle's cyclic order.
  static std::pair<int, int> ghost_edge(const Tri& t) {
    for (int i = 0; i < 3; ++i)
      if (t.v[i] == kInf) return {t.v[(i + 1) % 3], t.v[(i + 2) % 3]};
    return {-1, -1};
  }

  bool conflict(int ti, int pi) const {
    const Tri& t = tris_[ti];
    const Vec2 p = p_[pi];
    if (is_ghost(t)) {
      auto [u, v] = ghost_edge(t);
      const long double o = orient(p_[u], p_[v], p);
      if (o > 0) return true;
      if (o < 0) return false;
      const Vec2 a = p_[u], b = p_[v];
      const double dot = (p.x - a.x) * (b.x - a.x) + (p.y - a.y) * (b.y - a.y);
      const double len2 = (b.x - a.x) * (b.x - a.x) + (b.y - a.y) * (b.y - a.y);
      return dot > 0.0 && dot < len2;
    }
    return incircle(p_[t.v[0]], p_[t.v[1]], p_[t.v[2]], p) > 0;
  }

  int locate(int pi) {
    const Vec2 p = p_[pi];
    int t = last_;
    if (!tris_[t].alive) t = first_alive();
    const std::size_t limit = 4 * tris_.size() + 16;
    for (std::size_t step = 0; step < limit; ++step) {
      const Tri& tr = tris_[t];
      if (is_ghost(tr)) {
        if (conflict(t, pi)) return t;
        for (int i = 0; i < 3; ++i)
          if (tr.v[i] == kInf) t = tr.n[i];
        continue;
      }
      rot_ = (rot_ + 1) % 3;
      int next = -1;
      for (int k = 0; k < 3; ++k) {
        const int i = (k + rot_) % 3;
        if (orient(p_[tr.v[(i + 1) % 3]], p_[tr.v[(i + 2) % 3]], p) < 0) {
          next = tr.n[i];
          break;
        }
      }
      if (next < 0) return t;
      if (is_ghost(tris_[next])) return next;
      t = next;
    }
    for (std::size_t i = 0; i < tris_.size(); ++i)
      if (tris_[i].alive && conflict(static_cast<int>(i), pi)) return static_cast<int>(i);
    throw Error("delaunay: point location failed");
  }

  int first_alive() const {
    for (std::size_t i = 0; i < tris_.size(); ++i)
      if (tris_[i].alive) return static_cast<int>(i);
    return 0;
  }

  std::span<const Vec2> p_;
  std::vector<Tri> tris_;
  std::vector<int> free_;
  std::vector<unsigned> mark_;
  unsigned stamp_ = 0;
  int last_ = 0;
  int rot_ = 0;
};

}  // namespace

std::optional<std::vector<Edge>> delaunay(std::span<const Vec2> points) {
  const std::size_t n = points.size();
  if (n < 3) return std::nullopt;

  // exact duplicates map to their first occurrence
  std::vector<int> twin(n, -1);
  {
    std::map<std::pair<double, double>, int> seen;
    for (std::size_t i = 0; i < n; ++i) {
      auto [it, inserted] = seen.try_emplace({points[i].x, points[i].y}, static_cast<int>(i));
      if (!inserted) twin[i] = it->second;
    }
  }
  std::vector<int> uniq;
  for (std::size_t i = 0; i < n; ++i)
    if (twin[i] < 0) uniq.push_back(static_cast<int>(i));
  if (uniq.size() < 3) return std::nullopt;

  const int a = uniq[0], b = uniq[1];
  int c = -1;
  for (std::size_t k = 2; k < uniq.size(); ++k)
    if (orient(points[a], points[b], points[uniq[k]]) != 0) {
      c = uniq[k];
      break;
    }
  if (c < 0) return std::nullopt;

  // spatially coherent insertion order
  double x0 = points[a].x, x1 = x0, y0 = points[a].y, y1 = y0;
  for (int i : uniq) {
    x0 = std::min(x0, points[i].x);
    x1 = std::max(x1, points[i].x);
    y0 = std::min(y0, points[i].y);
    y1 = std::max(y1, points[i].y);
  }
  const double span = std::max({x1 - x0, y1 - y0, 1e-300});
  std::vector<std::pair<std::uint64_t, int>> order;
  order.reserve(uniq.size());
  for (int i : uniq) {
    if (i == a || i == b || i == c) continue;
    const auto qx = static_cast<std::uint32_t>(std::min(65535.0, (points[i].x - x0) / span * 65535.0));
    const auto qy = static_cast<std::uint32_t>(std::min(65535.0, (points[i].y - y0) / span * 65535.0));
    order.emplace_back(hilbert_index(qx, qy, 16), i);
  }
  std::sort(order.begin(), order.end());

  Triangulation tri(points);
  tri.init(a, b, c);
  for (const auto& [key, i] : order) tri.insert(i);
  auto edges = tri.edges();

  bool any_dup = false;
  for (int t : twin) any_dup = any_dup || t >= 0;
  if (any_dup) {
    std::vector<std::vector<std::uint32_t>> adj(n);
    for (auto [i, j] : edges) {
      adj[i].push_back(j);
      adj[j].push_back(i);
    }
    for (std::size_t d = 0; d < n; ++d) {
      if (twin[d] < 0) continue;
      const auto t = static_cast<std::uint32_t>(twin[d]);
      const auto dd = static_cast<std::uint32_t>(d);
      edges.emplace_back(std::min(t, dd), std::max(t, dd));
      for (auto nb : adj[t]) edges.emplace_back(std::min(nb, dd), std::max(nb, dd));
    }
    // duplicates of the same twin also connect to each other
    std::map<int, std::vector<std::uint32_t>> groups;
    for (std::size_t d = 0; d < n; ++d)
      if (twin[d] >= 0) groups[twin[d]].push_back(static_cast<std::uint32_t>(d));
    for (const auto& [t, ds] : groups)
      for (std::size_t x = 0; x < ds.size(); ++x)
        for (std::size_t y = x + 1; y < ds.size(); ++y) edges.emplace_back(ds[x], ds[y]);
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  }
  return edges;
}

std::vector<Edge> knn_edges(std::span<const Vec2> points, std::size_t k) {
  const std::size_t n = points.size();
  std::vector<Edge> out;
  if (n < 2 || k == 0) return out;
  k = std::min(k, n - 1);
  std::vector<std::pair<double, std::uint32_t>> d;
  for (std::size_t i = 0; i < n; ++i) {
    d.clear();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const Vec2 v = points[j] - points[i];
      d.emplace_back(v.x * v.x + v.y * v.y, static_cast<std::uint32_t>(j));
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    for (std::size_t m = 0; m < k; ++m) {
      const auto j = d[m].second;
      const auto ii = static_cast<std::uint32_t>(i);
      out.emplace_back(std::min(ii, j), std::max(ii, j));
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<Edge> delaunay_edges(std::span<const Vec2> points) {
  if (points.size() < 2) return {};
  if (auto e = delaunay(points)) return std::move(*e);
  return knn_edges(points, std::min<std::size_t>(3, points.size() - 1));
}

}  // namespace miro::geom
