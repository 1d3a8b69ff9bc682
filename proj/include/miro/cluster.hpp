#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "miro/core.hpp"
#include "miro/graph.hpp"
#include "miro/model.hpp"

namespace miro {

struct DbscanConfig {
  double eps = 12.5;
  std::size_t min_pts = 3;

  void validate() const;
  friend bool operator==(const DbscanConfig&, const DbscanConfig&) = default;
};

/// DBSCAN with a uniform grid index. A point's neighbourhood includes the point
/// itself and every point at distance <= eps. Clusters are numbered 0, 1, ...
/// in order of their lowest-index core point; a border point joins the first
/// cluster that reaches it.
Partition dbscan(std::span<const Vec2> points, const DbscanConfig& cfg);

struct PipelineConfig {
  GraphConfig graph;
  DbscanConfig fine;
  std::optional<DbscanConfig> coarse;
  bool class_mode = false;
  /// Step whose displacements feed fine clustering; defaults to k*-1 for
  /// multiscale models and K-1 otherwise.
  std::optional<std::size_t> fine_step;
};

struct PipelineResult {
  Partition fine;
  std::optional<Partition> coarse;
  std::optional<std::map<int, int>> cluster_class;
  std::vector<Vec2> collapsed_fine;
  std::optional<std::vector<Vec2>> collapsed_coarse;
};

PipelineResult run_pipeline(const PointCloud& cloud, const ModelParams& params, const PipelineConfig& cfg);

/// Splits fine clusters along coarse labels; fine members that are coarse
/// NOISE become NOISE. Idempotent.
Partition enforce_hierarchy(const Partition& fine, const Partition& coarse);

/// Majority vote of per-point classes within each cluster (ties to the lower
/// class id). Clusters voting class 0 are demoted to NOISE in `fine`.
std::map<int, int> vote_classes(Partition& fine, std::span<const int> point_class);

/// For each cluster centroid, the distance to the nearest other centroid.
/// Empty when there are fewer than two clusters.
std::vector<double> nn_cluster_distances(const Partition& partition, std::span<const Vec2> points);

}  // namespace miro
