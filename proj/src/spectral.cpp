#include "miro/spectral.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace miro::spectral {

namespace {

using Adjacency = std::vector<std::vector<std::uint32_t>>;

Adjacency adjacency(std::size_t n, std::span<const geom::Edge> edges) {
  Adjacency adj(n);
  for (auto [i, j] : edges) {
    if (i == j) continue;
    if (i >= n || j >= n) throw std::out_of_range("edge index out of range");
    adj[i].push_back(j);
    adj[j].push_back(i);
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

Components components_of(const Adjacency& adj) {
  Components c;
  constexpr auto kUnset = std::numeric_limits<std::uint32_t>::max();
  c.id.assign(adj.size(), kUnset);
  std::vector<std::uint32_t> stack;
  for (std::uint32_t s = 0; s < adj.size(); ++s) {
    if (c.id[s] != kUnset) continue;
    const auto cid = static_cast<std::uint32_t>(c.count++);
    c.id[s] = cid;
    stack.assign(1, s);
    while (!stack.empty()) {
      auto v = stack.back();
      stack.pop_back();
      for (auto w : adj[v])
        if (c.id[w] == kUnset) {
          c.id[w] = cid;
          stack.push_back(w);
        }
    }
  }
  return c;
}

// Normalized Laplacian of one component, nodes given in ascending order.
Eigen::MatrixXd dense_block(const Adjacency& adj, const std::vector<std::uint32_t>& nodes,
                            const std::vector<std::uint32_t>& local) {
  const auto m = static_cast<Eigen::Index>(nodes.size());
  Eigen::MatrixXd l = Eigen::MatrixXd::Identity(m, m);
  for (Eigen::Index a = 0; a < m; ++a) {
    const auto& na = adj[nodes[a]];
    for (auto w : na) {
      const double da = static_cast<double>(na.size()), dw = static_cast<double>(adj[w].size());
      l(a, local[w]) = -1.0 / std::sqrt(da * dw);
    }
  }
  return l;
}

Eigen::SparseMatrix<double> sparse_block(const Adjacency& adj, const std::vector<std::uint32_t>& nodes,
                                         const std::vector<std::uint32_t>& local, double shift) {
  std::vector<Eigen::Triplet<double>> t;
  for (std::size_t a = 0; a < nodes.size(); ++a) {
    const auto& na = adj[nodes[a]];
    t.emplace_back(a, a, 1.0 + shift);
    for (auto w : na)
      t.emplace_back(a, local[w], -1.0 / std::sqrt(double(na.size()) * double(adj[w].size())));
  }
  Eigen::SparseMatrix<double> s(static_cast<Eigen::Index>(nodes.size()), static_cast<Eigen::Index>(nodes.size()));
  s.setFromTriplets(t.begin(), t.end());
  return s;
}

struct Candidate {
  double value;
  std::uint32_t component;
  std::uint32_t order;
  Eigen::VectorXd vec;
};

struct BlockResult {
  Eigen::VectorXd values;  // ascending
  Eigen::MatrixXd vectors;
  double lambda_max = 0.0;
  bool has_trivial = false;  // lanczos results already exclude the null vector
};

BlockResult solve_dense(const Eigen::MatrixXd& l) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(l);
  BlockResult r;
  r.values = es.eigenvalues();
  r.vectors = es.eigenvectors();
  r.lambda_max = r.values(r.values.size() - 1);
  r.has_trivial = true;
  return r;
}

double power_lambda_max(const Eigen::SparseMatrix<double>& l) {
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(l.rows(), 1.0, 2.0);
  x.normalize();
  double lambda = 0.0;
  for (int it = 0; it < 200; ++it) {
    Eigen::VectorXd y = l * x;
    const double next = x.dot(y);
    const double norm = y.norm();
    if (norm == 0.0) return 0.0;
    x = y / norm;
    if (std::abs(next - lambda) < 1e-12 * std::max(1.0, next)) return next;
    lambda = next;
  }
  return lambda;
}

// Smallest `count` eigenpairs of the component Laplacian orthogonal to its
// null vector, via Lanczos on (L + tau I)^-1 with full reorthogonalization.
// Returns false when the residual target is not met within the step budget.
bool solve_lanczos(const Eigen::SparseMatrix<double>& l, const Eigen::VectorXd& null_vec, std::size_t count,
                   double residual_tol, BlockResult& out) {
  constexpr double kTau = 1e-3;
  const Eigen::Index m = l.rows();
  Eigen::SparseMatrix<double> shifted = l;
  for (Eigen::Index i = 0; i < m; ++i) shifted.coeffRef(i, i) += kTau;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(shifted);
  if (ldlt.info() != Eigen::Success) return false;

  const auto max_steps = static_cast<Eigen::Index>(std::min<std::size_t>(m - 1, std::max<std::size_t>(300, 8 * count)));
  const auto want = static_cast<Eigen::Index>(std::min<std::size_t>(count, m - 1));
  Eigen::MatrixXd q(m, max_steps + 1);
  std::vector<double> alpha, beta;

  std::mt19937_64 rng(0x5eedULL);
  std::normal_distribution<double> normal;
  Eigen::VectorXd v(m);
  for (Eigen::Index i = 0; i < m; ++i) v(i) = normal(rng);
  v -= null_vec.dot(v) * null_vec;
  v.normalize();
  q.col(0) = v;

  auto orthogonalize = [&](Eigen::VectorXd& w, Eigen::Index upto) {
    for (int pass = 0; pass < 2; ++pass) {
      w -= null_vec.dot(w) * null_vec;
      for (Eigen::Index c = 0; c <= upto; ++c) w -= q.col(c).dot(w) * q.col(c);
    }
  };

  for (Eigen::Index j = 0; j < max_steps; ++j) {
    Eigen::VectorXd w = ldlt.solve(q.col(j));
    alpha.push_back(q.col(j).dot(w));
    orthogonalize(w, j);
    const double b = w.norm();
    const bool exhausted = b < 1e-12;
    const Eigen::Index steps = j + 1;
    if (steps >= want && (steps % 10 == 0 || exhausted || steps == max_steps)) {
      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(steps, steps);
      for (Eigen::Index a = 0; a < steps; ++a) {
        t(a, a) = alpha[a];
        if (a + 1 < steps) t(a, a + 1) = t(a + 1, a) = beta[a];
      }
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
      // Largest Ritz values of the inverse are the smallest of L.
      Eigen::MatrixXd vecs(m, want);
      Eigen::VectorXd vals(want);
      bool converged = true;
      for (Eigen::Index k = 0; k < want; ++k) {
        Eigen::VectorXd y = q.leftCols(steps) * es.eigenvectors().col(steps - 1 - k);
        y.normalize();
        const double lambda = y.dot(l * y);
        if ((l * y - lambda * y).norm() >= residual_tol) converged = false;
        vecs.col(k) = y;
        vals(k) = lambda;
      }
      if (converged || exhausted) {
        if (!converged) return false;
        std::vector<Eigen::Index> order(static_cast<std::size_t>(want));
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](auto a, auto b2) { return vals(a) < vals(b2); });
        out.values.resize(want);
        out.vectors.resize(m, want);
        for (Eigen::Index k = 0; k < want; ++k) {
          out.values(k) = vals(order[k]);
          out.vectors.col(k) = vecs.col(order[k]);
        }
        out.has_trivial = false;
        return true;
      }
    }
    if (exhausted) return false;
    beta.push_back(b);
    q.col(j + 1) = w / b;
  }
  return false;
}

}  // namespace

Components connected_components(std::size_t n, std::span<const geom::Edge> edges) {
  return components_of(adjacency(n, edges));
}

Matrix normalized_laplacian(std::size_t n, std::span<const geom::Edge> edges) {
  const auto adj = adjacency(n, edges);
  Matrix l(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    l(i, i) = 1.0;
    for (auto w : adj[i]) l(i, w) = -1.0 / std::sqrt(double(adj[i].size()) * double(adj[w].size()));
  }
  return l;
}

Eigenpairs laplacian_spectrum(std::size_t n, std::span<const geom::Edge> edges) {
  const Matrix l = normalized_laplacian(n, edges);
  Eigen::MatrixXd dense(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) dense(i, j) = l(i, j);
  Eigenpairs out;
  if (n == 0) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense);
  out.values.assign(es.eigenvalues().data(), es.eigenvalues().data() + n);
  out.vectors.resize(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) out.vectors(i, j) = es.eigenvectors()(i, j);
  return out;
}

Eigenpairs smallest_nontrivial(std::size_t n, std::span<const geom::Edge> edges, std::size_t count,
                               const SolverOptions& opt) {
  Eigenpairs out;
  out.vectors.resize(n, 0);
  if (n == 0 || count == 0) return out;
  const auto adj = adjacency(n, edges);
  const auto comps = components_of(adj);

  std::vector<std::vector<std::uint32_t>> members(comps.count);
  std::vector<std::uint32_t> local(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    local[i] = static_cast<std::uint32_t>(members[comps.id[i]].size());
    members[comps.id[i]].push_back(i);
  }

  std::vector<BlockResult> blocks(comps.count);
  double lambda_max = 0.0;
  for (std::size_t c = 0; c < comps.count; ++c) {
    const auto& nodes = members[c];
    BlockResult& b = blocks[c];
    if (nodes.size() <= opt.dense_limit) {
      b = solve_dense(dense_block(adj, nodes, local));
    } else {
      const auto l = sparse_block(adj, nodes, local, 0.0);
      Eigen::VectorXd null_vec(static_cast<Eigen::Index>(nodes.size()));
      for (std::size_t a = 0; a < nodes.size(); ++a) null_vec(a) = std::sqrt(double(adj[nodes[a]].size()));
      null_vec.normalize();
      if (!solve_lanczos(l, null_vec, count, opt.residual_tol, b)) b = solve_dense(dense_block(adj, nodes, local));
      b.lambda_max = std::max(b.lambda_max, power_lambda_max(l));
    }
    lambda_max = std::max(lambda_max, b.lambda_max);
  }

  const double tol = opt.zero_tol * lambda_max;
  std::vector<Candidate> cand;
  for (std::size_t c = 0; c < comps.count; ++c) {
    const BlockResult& b = blocks[c];
    std::uint32_t taken = 0;
    for (Eigen::Index k = 0; k < b.values.size() && taken < count; ++k) {
      if (b.has_trivial && b.values(k) <= tol) continue;
      cand.push_back({b.values(k), static_cast<std::uint32_t>(c), taken++, b.vectors.col(k)});
    }
  }
  std::stable_sort(cand.begin(), cand.end(), [](const Candidate& a, const Candidate& b) { return a.value < b.value; });
  const std::size_t k = std::min(count, cand.size());
  out.values.resize(k);
  out.vectors.resize(n, k);
  for (std::size_t col = 0; col < k; ++col) {
    const Candidate& cd = cand[col];
    out.values[col] = cd.value;
    const auto& nodes = members[cd.component];
    for (std::size_t a = 0; a < nodes.size(); ++a) out.vectors(nodes[a], col) = cd.vec(static_cast<Eigen::Index>(a));
  }
  return out;
}

Matrix laplacian_features(std::span<const geom::Edge> edges, std::size_t n, std::size_t n_eigs,
                          const SolverOptions& opt) {
  const Eigenpairs e = smallest_nontrivial(n, edges, n_eigs, opt);
  Matrix f(n, n_eigs);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < e.values.size(); ++c) f(i, c) = std::abs(e.vectors(i, c));
  return f;
}

}  // namespace miro::spectral
