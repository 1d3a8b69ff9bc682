#pragma once

#include <span>
#include <vector>

#include "miro/core.hpp"

namespace miro::geom {

/// Convex hull, counter-clockwise, without collinear points (monotone chain).
std::vector<Vec2> convex_hull(std::span<const Vec2> points);

/// Signed shoelace area; positive for counter-clockwise polygons.
double polygon_area(std::span<const Vec2> poly);

/// Intersection of two counter-clockwise convex polygons.
std::vector<Vec2> clip_convex(std::span<const Vec2> subject, std::span<const Vec2> clip);

/// Intersection-over-union of the convex hulls of two point sets. Degenerate
/// hulls (zero area on both sides) give 1 when the centroids coincide within
/// 1e-9 and 0 otherwise.
double hull_iou(std::span<const Vec2> a, std::span<const Vec2> b);

}  // namespace miro::geom
