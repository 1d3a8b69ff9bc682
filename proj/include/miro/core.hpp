#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace miro {

/// Every recoverable failure in the library surfaces as this type.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.y + b.y}; }
  friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.y - b.y}; }
  friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.y}; }
  friend bool operator==(Vec2 a, Vec2 b) = default;
};

double norm(Vec2 v);
double distance(Vec2 a, Vec2 b);

/// One molecular localization in nanometers.
struct Localization {
  double x = 0.0;
  double y = 0.0;
  std::optional<std::int64_t> frame;

  Vec2 pos() const { return {x, y}; }
  friend bool operator==(const Localization&, const Localization&) = default;
};

/// Axis-aligned rectangle, nm.
struct Rect {
  double x0 = 0.0;
  double y0 = 0.0;
  double x1 = 0.0;
  double y1 = 0.0;

  double width() const { return x1 - x0; }
  double height() const { return y1 - y0; }
  double diagonal() const;
  bool contains(Vec2 p) const { return p.x >= x0 && p.x <= x1 && p.y >= y0 && p.y <= y1; }
  void grow_to(Vec2 p);
  friend bool operator==(const Rect&, const Rect&) = default;
};

/// Arithmetic mean of the positions. Throws on empty input.
Vec2 centroid(std::span<const Vec2> points);

class PointCloud {
 public:
  PointCloud() = default;
  explicit PointCloud(std::vector<Localization> points, std::optional<Rect> extent = std::nullopt);

  const std::vector<Localization>& points() const { return points_; }
  const Rect& extent() const { return extent_; }
  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  std::vector<Vec2> positions() const;

 private:
  std::vector<Localization> points_;
  Rect extent_;
};

/// Per-point cluster labels; NOISE marks non-clustered points.
class Partition {
 public:
  static constexpr int NOISE = -1;

  Partition() = default;
  explicit Partition(std::vector<int> labels);
  static Partition all_noise(std::size_t n) { return Partition(std::vector<int>(n, NOISE)); }

  const std::vector<int>& labels() const { return labels_; }
  int operator[](std::size_t i) const { return labels_[i]; }
  std::size_t size() const { return labels_.size(); }

  /// Distinct non-noise labels in ascending order.
  std::vector<int> cluster_ids() const;
  std::size_t n_clusters() const { return cluster_ids().size(); }
  /// Member indices of every non-noise cluster, ordered as cluster_ids().
  std::vector<std::vector<std::size_t>> members() const;
  /// Relabels non-noise ids to 0..k-1 in order of first appearance.
  Partition compacted() const;

  friend bool operator==(const Partition&, const Partition&) = default;

 private:
  std::vector<int> labels_;
};

class LabeledCloud {
 public:
  LabeledCloud() = default;
  LabeledCloud(PointCloud cloud, Partition truth, std::optional<std::vector<int>> shape_class = std::nullopt,
               std::optional<Partition> coarse_truth = std::nullopt);

  const PointCloud& cloud() const { return cloud_; }
  const Partition& truth() const { return truth_; }
  const std::optional<std::vector<int>>& shape_class() const { return shape_class_; }
  const std::optional<Partition>& coarse_truth() const { return coarse_truth_; }
  std::size_t size() const { return cloud_.size(); }

 private:
  PointCloud cloud_;
  Partition truth_;
  std::optional<std::vector<int>> shape_class_;
  std::optional<Partition> coarse_truth_;
};

/// Positions of the given member indices.
std::vector<Vec2> gather(std::span<const Vec2> points, std::span<const std::size_t> idx);

}  // namespace miro
