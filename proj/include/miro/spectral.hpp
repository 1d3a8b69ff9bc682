#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "miro/delaunay.hpp"
#include "miro/tensor.hpp"

namespace miro::spectral {

/// Eigenvalues in ascending order with matching unit eigenvectors as the
/// columns of `vectors` (n x values.size()).
struct Eigenpairs {
  std::vector<double> values;
  Matrix vectors;
};

/// Component id per node (ids numbered by smallest member) and the count.
struct Components {
  std::vector<std::uint32_t> id;
  std::size_t count = 0;
};
Components connected_components(std::size_t n, std::span<const geom::Edge> edges);

/// Dense normalized Laplacian I - D^-1/2 A D^-1/2. Isolated nodes keep an
/// identity row. Edges may be given in one or both directions; repeats and
/// self-loops are ignored.
Matrix normalized_laplacian(std::size_t n, std::span<const geom::Edge> edges);

/// Full dense eigendecomposition of the normalized Laplacian.
Eigenpairs laplacian_spectrum(std::size_t n, std::span<const geom::Edge> edges);

struct SolverOptions {
  /// Components up to this size are solved densely; larger ones use
  /// shift-invert Lanczos.
  std::size_t dense_limit = 256;
  double residual_tol = 1e-6;
  /// Eigenvalues at or below zero_tol * lambda_max count as trivial.
  double zero_tol = 1e-9;
};

/// The `count` eigenpairs of smallest non-trivial eigenvalue. Fewer are
/// returned when the graph has fewer non-trivial eigenpairs.
Eigenpairs smallest_nontrivial(std::size_t n, std::span<const geom::Edge> edges, std::size_t count,
                               const SolverOptions& opt = {});

/// Absolute values of smallest_nontrivial, zero-padded to n x n_eigs.
Matrix laplacian_features(std::span<const geom::Edge> edges, std::size_t n, std::size_t n_eigs,
                          const SolverOptions& opt = {});

}  // namespace miro::spectral
