#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "miro/tensor.hpp"

namespace miro {

struct Assignment {
  /// (row, column) pairs sorted by row; min(rows, cols) of them.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double cost = 0.0;
};

/// Minimum-cost assignment of a rectangular cost matrix (padded square with
/// zero-cost dummies). Among optimal assignments the lexicographically
/// smallest column sequence is returned.
Assignment hungarian(const Matrix& cost);

}  // namespace miro
