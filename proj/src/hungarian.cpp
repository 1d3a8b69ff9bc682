#include "miro/hungarian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "miro/core.hpp"

namespace miro {

namespace {

// Re-routes the matching so that row `i` takes column `j`, using only
// equality edges of rows after i. Returns false when no such path exists.
bool reroute(std::size_t i, std::size_t j, const std::vector<std::vector<char>>& eq, std::vector<std::size_t>& col_of,
             std::vector<std::size_t>& row_of) {
  const std::size_t n = col_of.size();
  const std::size_t target = col_of[i];
  const std::size_t start = row_of[j];
  // BFS over rows starting at the current owner of j.
  constexpr auto kNone = std::numeric_limits<std::size_t>::max();
  std::vector<char> seen(n, 0);
  std::vector<std::size_t> queue{start};
  seen[j] = 1;
  std::size_t found = kNone;
  std::vector<std::size_t> reached_from(n, kNone);  // column c reached by row reached_from[c]
  for (std::size_t q = 0; q < queue.size() && found == kNone; ++q) {
    const std::size_t r = queue[q];
    for (std::size_t c = 0; c < n; ++c) {
      if (seen[c] || !eq[r][c]) continue;
      seen[c] = 1;
      reached_from[c] = r;
      if (c == target) {
        found = c;
        break;
      }
      const std::size_t owner = row_of[c];
      if (owner > i) queue.push_back(owner);
    }
  }
  if (found == kNone) return false;
  // Walk back: each row on the path takes the column it reached.
  std::size_t c = found;
  while (true) {
    const std::size_t r = reached_from[c];
    const std::size_t previous = col_of[r];
    col_of[r] = c;
    row_of[c] = r;
    if (r == start) break;
    c = previous;
  }
  col_of[i] = j;
  row_of[j] = i;
  return true;
}

}  // namespace

Assignment hungarian(const Matrix& cost) {
  Assignment out;
  const std::size_t rows = cost.rows(), cols = cost.cols();
  if (rows == 0 || cols == 0) return out;
  const std::size_t n = std::max(rows, cols);
  double max_abs = 0.0;
  for (double v : cost.values()) {
    if (!std::isfinite(v)) throw Error("hungarian: cost matrix has non-finite entries");
    max_abs = std::max(max_abs, std::abs(v));
  }
  auto a = [&](std::size_t i, std::size_t j) { return (i < rows && j < cols) ? cost(i, j) : 0.0; };

  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> col_of(n), row_of(n);
  for (std::size_t j = 1; j <= n; ++j) {
    row_of[j - 1] = p[j] - 1;
    col_of[p[j] - 1] = j - 1;
  }

  // Lexicographic refinement over the equality subgraph of the optimal duals.
  const double tol = 1e-11 * std::max(1.0, max_abs);
  std::vector<std::vector<char>> eq(n, std::vector<char>(n, 0));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) eq[i][j] = std::abs(a(i, j) - u[i + 1] - v[j + 1]) <= tol;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < col_of[i]; ++j)
      if (eq[i][j] && row_of[j] > i && reroute(i, j, eq, col_of, row_of)) break;

  for (std::size_t i = 0; i < rows; ++i)
    if (col_of[i] < cols) {
      out.pairs.emplace_back(i, col_of[i]);
      out.cost += cost(i, col_of[i]);
    }
  return out;
}

}  // namespace miro
