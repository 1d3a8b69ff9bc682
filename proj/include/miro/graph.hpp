#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "miro/core.hpp"
#include "miro/spectral.hpp"
#include "miro/tensor.hpp"

namespace miro {

struct GraphConfig {
  enum class DeltaMode { fixed, percentile };

  DeltaMode delta_mode = DeltaMode::percentile;
  /// Edge length threshold in nm, used in fixed mode.
  double delta = 0.0;
  /// Percentile of this cloud's Delaunay edge lengths, used in percentile mode.
  double percentile = 95.0;
  std::size_t n_eigs = 5;
  spectral::SolverOptions solver;

  static GraphConfig fixed(double delta_nm, std::size_t n_eigs = 5);
  static GraphConfig percentile_of(double p, std::size_t n_eigs = 5);
  void validate() const;
};

/// Graph input of the model. Edges are directed, stored in both directions and
/// sorted by (src, dst).
struct LocGraph {
  std::vector<Vec2> coords;
  Matrix node_feats;  // n x n_eigs
  std::vector<std::uint32_t> src;
  std::vector<std::uint32_t> dst;
  Matrix edge_feats;  // n_edges x 3: distance (nm), unit direction src -> dst
  double delta = 0.0;

  std::size_t n_nodes() const { return coords.size(); }
  std::size_t n_edges() const { return src.size(); }
};

/// Linear-interpolated percentile (p in [0, 100]) of unsorted values.
double percentile(std::vector<double> values, double p);

LocGraph build_graph(std::span<const Vec2> points, const GraphConfig& cfg);
LocGraph build_graph(const PointCloud& cloud, const GraphConfig& cfg);

/// `i,j,dist_nm,dir_x,dir_y` edge list with header.
std::string format_edges_csv(const LocGraph& g);

/// Relabels nodes so that old node i becomes node perm[i]; edges are re-sorted.
LocGraph permute_nodes(const LocGraph& g, std::span<const std::uint32_t> perm);

}  // namespace miro
