#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "miro/core.hpp"

namespace miro::geom {

using Edge = std::pair<std::uint32_t, std::uint32_t>;

/// Orientation of (a, b, c): > 0 counter-clockwise, < 0 clockwise, 0 collinear.
/// Evaluated in extended precision.
long double orient(Vec2 a, Vec2 b, Vec2 c);
/// > 0 when d lies strictly inside the circumcircle of counter-clockwise (a, b, c).
long double incircle(Vec2 a, Vec2 b, Vec2 c, Vec2 d);

/// Undirected Delaunay edges (i < j), sorted. Returns std::nullopt when the
/// input has fewer than three distinct, non-collinear points. Exact duplicate
/// points are skipped by the triangulation and attached to their first twin:
/// they get an edge to it and inherit its Delaunay neighbours.
std::optional<std::vector<Edge>> delaunay(std::span<const Vec2> points);

/// Undirected k-nearest-neighbour edges (i < j), sorted; ties by index.
std::vector<Edge> knn_edges(std::span<const Vec2> points, std::size_t k);

/// Delaunay edges, falling back to knn_edges with k = min(3, n - 1) on
/// degenerate input. Fewer than two points give no edges.
std::vector<Edge> delaunay_edges(std::span<const Vec2> points);

}  // namespace miro::geom
