#include "miro/cluster.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

namespace miro {

namespace {

class Grid {
 public:
  Grid(std::span<const Vec2> pts, double cell) : pts_(pts), cell_(cell) {
    for (std::uint32_t i = 0; i < pts.size(); ++i) cells_[{cell_of(pts[i].x), cell_of(pts[i].y)}].push_back(i);
  }

  // Indices within eps of point i (including i), ascending.
  void neighbours(std::size_t i, double eps, std::vector<std::uint32_t>& out) const {
    out.clear();
    const auto cx = cell_of(pts_[i].x), cy = cell_of(pts_[i].y);
    const double eps2 = eps * eps;
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy) {
        auto it = cells_.find({cx + dx, cy + dy});
        if (it == cells_.end()) continue;
        for (auto j : it->second) {
          const double ddx = pts_[j].x - pts_[i].x, ddy = pts_[j].y - pts_[i].y;
          if (ddx * ddx + ddy * ddy <= eps2) out.push_back(j);
        }
      }
    std::sort(out.begin(), out.end());
  }

 private:
  std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  using Cell = std::pair<std::int64_t, std::int64_t>;
  struct CellHash {
    std::size_t operator()(const Cell& c) const {
      return std::hash<std::uint64_t>()(static_cast<std::uint64_t>(c.first) * 0x9E3779B97F4A7C15ULL ^
                                        static_cast<std::uint64_t>(c.second));
    }
  };

  std::span<const Vec2> pts_;
  double cell_;
  std::unordered_map<Cell, std::vector<std::uint32_t>, CellHash> cells_;
};

}  // namespace

void DbscanConfig::validate() const {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw Error("dbscan: eps must be > 0");
  if (min_pts < 1) throw Error("dbscan: min_pts must be >= 1");
}

Partition dbscan(std::span<const Vec2> points, const DbscanConfig& cfg) {
  cfg.validate();
  const std::size_t n = points.size();
  std::vector<int> labels(n, Partition::NOISE);
  if (n == 0) return Partition(labels);

  Grid grid(points, cfg.eps);
  std::vector<char> core(n, 0);
  std::vector<std::uint32_t> nb;
  for (std::size_t i = 0; i < n; ++i) {
    grid.neighbours(i, cfg.eps, nb);
    core[i] = nb.size() >= cfg.min_pts;
  }

  int next = 0;
  std::vector<std::uint32_t> queue;
  for (std::size_t s = 0; s < n; ++s) {
    if (!core[s] || labels[s] != Partition::NOISE) continue;
    const int id = next++;
    labels[s] = id;
    queue.assign(1, static_cast<std::uint32_t>(s));
    for (std::size_t q = 0; q < queue.size(); ++q) {
      grid.neighbours(queue[q], cfg.eps, nb);
      for (auto j : nb) {
        if (labels[j] != Partition::NOISE) continue;
        labels[j] = id;
        if (core[j]) queue.push_back(j);
      }
    }
  }
  return Partition(labels);
}

Partition enforce_hierarchy(const Partition& fine, const Partition& coarse) {
  if (fine.size() != coarse.size()) throw Error("enforce_hierarchy: partitions differ in length");
  std::map<std::pair<int, int>, int> ids;
  std::vector<int> out(fine.size(), Partition::NOISE);
  for (std::size_t i = 0; i < fine.size(); ++i) {
    if (fine[i] == Partition::NOISE || coarse[i] == Partition::NOISE) continue;
    auto [it, inserted] = ids.try_emplace({fine[i], coarse[i]}, static_cast<int>(ids.size()));
    out[i] = it->second;
  }
  return Partition(out);
}

std::map<int, int> vote_classes(Partition& fine, std::span<const int> point_class) {
  if (point_class.size() != fine.size()) throw Error("vote_classes: class count does not match point count");
  std::map<int, std::map<int, std::size_t>> votes;
  for (std::size_t i = 0; i < fine.size(); ++i)
    if (fine[i] != Partition::NOISE) ++votes[fine[i]][point_class[i]];
  std::map<int, int> winner;
  for (const auto& [id, tally] : votes) {
    int best = 0;
    std::size_t best_n = 0;
    for (const auto& [cls, count] : tally)
      if (count > best_n) {
        best = cls;
        best_n = count;
      }
    winner[id] = best;
  }
  std::vector<int> labels = fine.labels();
  std::map<int, int> kept;
  for (auto& l : labels)
    if (l != Partition::NOISE && winner[l] == 0) l = Partition::NOISE;
  for (const auto& [id, cls] : winner)
    if (cls != 0) kept[id] = cls;
  fine = Partition(labels);
  return kept;
}

PipelineResult run_pipeline(const PointCloud& cloud, const ModelParams& params, const PipelineConfig& cfg) {
  const auto& mc = params.config;
  if (cfg.class_mode && mc.n_classes == 0) throw Error("pipeline: class mode needs a model trained with classes");
  std::size_t fine_step = mc.K - 1;
  if (cfg.fine_step) {
    fine_step = *cfg.fine_step;
  } else if (cfg.coarse) {
    if (!mc.k_star) throw Error("pipeline: coarse clustering needs a multiscale model (k_star unset)");
    fine_step = *mc.k_star - 1;
  }
  if (fine_step >= mc.K) throw Error("pipeline: fine step out of range");

  const auto pos = cloud.positions();
  const LocGraph g = build_graph(pos, cfg.graph);
  const StepOutputs out = forward(g, params);

  PipelineResult r;
  r.collapsed_fine = collapse(pos, out, fine_step);
  r.fine = dbscan(r.collapsed_fine, cfg.fine);
  if (cfg.coarse) {
    r.collapsed_coarse = collapse(pos, out, mc.K - 1);
    r.coarse = dbscan(*r.collapsed_coarse, *cfg.coarse);
    r.fine = enforce_hierarchy(r.fine, *r.coarse);
  }
  if (cfg.class_mode) {
    const Matrix& logits = out.class_logits.back();
    std::vector<int> cls(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i) {
      auto row = logits.row(i);
      cls[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
    }
    r.cluster_class = vote_classes(r.fine, cls);
  }
  return r;
}

std::vector<double> nn_cluster_distances(const Partition& partition, std::span<const Vec2> points) {
  if (partition.size() != points.size()) throw Error("nn_cluster_distances: partition length mismatch");
  std::vector<Vec2> centers;
  for (const auto& m : partition.members()) centers.push_back(centroid(gather(points, m)));
  std::vector<double> out;
  if (centers.size() < 2) return out;
  out.assign(centers.size(), std::numeric_limits<double>::infinity());
  for (std::size_t a = 0; a < centers.size(); ++a)
    for (std::size_t b = 0; b < centers.size(); ++b)
      if (a != b) out[a] = std::min(out[a], distance(centers[a], centers[b]));
  return out;
}

}  // namespace miro
