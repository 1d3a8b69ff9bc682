#include "miro/core.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <unordered_map>

namespace miro {

double norm(Vec2 v) { return std::hypot(v.x, v.y); }
double distance(Vec2 a, Vec2 b) { return norm(a - b); }

double Rect::diagonal() const { return std::hypot(width(), height()); }

void Rect::grow_to(Vec2 p) {
  x0 = std::min(x0, p.x);
  y0 = std::min(y0, p.y);
  x1 = std::max(x1, p.x);
  y1 = std::max(y1, p.y);
}

Vec2 centroid(std::span<const Vec2> points) {
  if (points.empty()) throw Error("empty point set");
  double sx = 0.0, sy = 0.0;
  for (const auto& p : points) {
    sx += p.x;
    sy += p.y;
  }
  const double n = static_cast<double>(points.size());
  return {sx / n, sy / n};
}

PointCloud::PointCloud(std::vector<Localization> points, std::optional<Rect> extent)
    : points_(std::move(points)) {
  for (const auto& p : points_) {
    if (!std::isfinite(p.x) || !std::isfinite(p.y)) throw Error("non-finite localization coordinate");
    if (p.frame && *p.frame < 0) throw Error("negative frame index");
  }
  if (extent) {
    extent_ = *extent;
  } else if (!points_.empty()) {
    extent_ = {points_[0].x, points_[0].y, points_[0].x, points_[0].y};
  }
  for (const auto& p : points_) extent_.grow_to(p.pos());
}

std::vector<Vec2> PointCloud::positions() const {
  std::vector<Vec2> out;
  out.reserve(points_.size());
  for (const auto& p : points_) out.push_back(p.pos());
  return out;
}

Partition::Partition(std::vector<int> labels) : labels_(std::move(labels)) {
  for (int l : labels_)
    if (l < NOISE) throw Error("cluster labels must be >= -1");
}

std::vector<int> Partition::cluster_ids() const {
  std::vector<int> ids;
  for (int l : labels_)
    if (l != NOISE) ids.push_back(l);
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

std::vector<std::vector<std::size_t>> Partition::members() const {
  const auto ids = cluster_ids();
  std::unordered_map<int, std::size_t> slot;
  for (std::size_t k = 0; k < ids.size(); ++k) slot[ids[k]] = k;
  std::vector<std::vector<std::size_t>> out(ids.size());
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] != NOISE) out[slot[labels_[i]]].push_back(i);
  return out;
}

Partition Partition::compacted() const {
  std::unordered_map<int, int> remap;
  std::vector<int> out(labels_.size(), NOISE);
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (labels_[i] == NOISE) continue;
    auto [it, inserted] = remap.try_emplace(labels_[i], static_cast<int>(remap.size()));
    out[i] = it->second;
  }
  return Partition(std::move(out));
}

LabeledCloud::LabeledCloud(PointCloud cloud, Partition truth, std::optional<std::vector<int>> shape_class,
                           std::optional<Partition> coarse_truth)
    : cloud_(std::move(cloud)),
      truth_(std::move(truth)),
      shape_class_(std::move(shape_class)),
      coarse_truth_(std::move(coarse_truth)) {
  const std::size_t n = cloud_.size();
  if (truth_.size() != n) throw Error("truth partition length does not match point count");
  if (shape_class_) {
    if (shape_class_->size() != n) throw Error("shape_class length does not match point count");
    for (std::size_t i = 0; i < n; ++i) {
      if ((*shape_class_)[i] < 0) throw Error("class ids must be non-negative");
      if (truth_[i] == Partition::NOISE && (*shape_class_)[i] != 0)
        throw Error("noise points must have background class 0");
    }
  }
  if (coarse_truth_) {
    if (coarse_truth_->size() != n) throw Error("coarse partition length does not match point count");
    std::map<int, int> parent;
    for (std::size_t i = 0; i < n; ++i) {
      if (truth_[i] == Partition::NOISE) continue;
      auto [it, inserted] = parent.try_emplace(truth_[i], (*coarse_truth_)[i]);
      if (!inserted && it->second != (*coarse_truth_)[i])
        throw Error("fine cluster " + std::to_string(truth_[i]) + " spans several coarse clusters");
    }
  }
}

std::vector<Vec2> gather(std::span<const Vec2> points, std::span<const std::size_t> idx) {
  std::vector<Vec2> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(points[i]);
  return out;
}

}  // namespace miro
