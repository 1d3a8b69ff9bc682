#include "miro/polygon.hpp"

#include <algorithm>
#include <cmath>

namespace miro::geom {

namespace {

double cross(Vec2 o, Vec2 a, Vec2 b) { return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x); }

Vec2 line_intersection(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
  const double d1 = cross(a, b, p), d2 = cross(a, b, q);
  const double t = d1 / (d1 - d2);
  return {p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)};
}

}  // namespace

std::vector<Vec2> convex_hull(std::span<const Vec2> points) {
  std::vector<Vec2> p(points.begin(), points.end());
  std::sort(p.begin(), p.end(), [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
  p.erase(std::unique(p.begin(), p.end()), p.end());
  if (p.size() < 3) return p;
  std::vector<Vec2> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i-- > 0;) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i]) <= 0) --k;
    h[k++] = p[i];
  }
  h.resize(k - 1);
  return h;
}

double polygon_area(std::span<const Vec2> poly) {
  if (poly.size() < 3) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2 a = poly[i], b = poly[(i + 1) % poly.size()];
    s += a.x * b.y - a.y * b.x;
  }
  return 0.5 * s;
}

std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip) {
  std::vector<Vec2> out(subject.begin(), subject.end());
  if (clip.size() < 3) return {};
  for (std::size_t e = 0; e < clip.size() && !out.empty(); ++e) {
    const Vec2 a = clip[e], b = clip[(e + 1) % clip.size()];
    std::vector<Vec2> in = std::move(out);
    out.clear();
    for (std::size_t i = 0; i < in.size(); ++i) {
      const Vec2 p = in[i], q = in[(i + 1) % in.size()];
      const bool p_in = cross(a, b, p) >= 0, q_in = cross(a, b, q) >= 0;
      if (p_in) out.push_back(p);
      if (p_in != q_in) out.push_back(line_intersection(p, q, a, b));
    }
  }
  return out;
}

double hull_iou(std::span<const Vec2> a, std::span<const Vec2> b) {
  const auto ha = convex_hull(a), hb = convex_hull(b);
  const double area_a = polygon_area(ha), area_b = polygon_area(hb);
  const double inter = (ha.size() >= 3 && hb.size() >= 3) ? std::max(0.0, polygon_area(clip_convex(ha, hb))) : 0.0;
  const double uni = area_a + area_b - inter;
  if (uni <= 0.0) {
    if (a.empty() || b.empty()) return 0.0;
    return distance(centroid(a), centroid(b)) <= 1e-9 ? 1.0 : 0.0;
  }
  return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace miro::geom
