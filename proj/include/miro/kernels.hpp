#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "miro/tensor.hpp"

// Row-parallel building blocks of the message-passing model. Every kernel in
// miro::kernels has a plain reference twin in miro::kernels::serial with the
// same summation order, so both produce bit-identical results for any thread
// count. Tests compare the two; bench/ times them.
namespace miro::kernels {

/// Incoming-edge lists grouped by node: edges offsets[i]..offsets[i+1] of
/// `ids` are the edges aggregated into node i.
struct Csr {
  std::vector<std::uint32_t> offsets;
  std::vector<std::uint32_t> ids;
};
Csr group_by(std::span<const std::uint32_t> node_of_edge, std::size_t n_nodes);

/// y = x * w^T + b  (x: rows x in, w: out x in, b: out or empty).
void linear(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& y);
/// dx (+)= dy * w
void linear_grad_input(const Matrix& dy, const Matrix& w, Matrix& dx, bool accumulate);
/// dw += dy^T * x,  db += column sums of dy (db may be empty).
void linear_grad_params(const Matrix& dy, const Matrix& x, Matrix& dw, std::span<double> db);

void relu(Matrix& y);
/// dy *= (y > 0), where y is the rectifier output.
void relu_grad(Matrix& dy, const Matrix& y);

/// out = [a | b] row by row.
void concat_cols(const Matrix& a, const Matrix& b, Matrix& out);
/// Splits columns of src into left (first left.cols()) and right.
void split_cols(const Matrix& src, Matrix& left, Matrix& right);

/// z[e] = a[first[e]] + b[second[e]] + c[e]
void edge_combine(const Matrix& a, const Matrix& b, const Matrix& c, std::span<const std::uint32_t> first,
                  std::span<const std::uint32_t> second, Matrix& z);
/// out[i] = sum over edges grouped at node i of v[e]   (n_nodes rows).
void segment_sum(const Matrix& v, const Csr& groups, Matrix& out);
/// dv[e] += dout[node[e]]
void gather_add(const Matrix& dout, std::span<const std::uint32_t> node, Matrix& dv);

namespace serial {
void linear(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& y);
void linear_grad_input(const Matrix& dy, const Matrix& w, Matrix& dx, bool accumulate);
void linear_grad_params(const Matrix& dy, const Matrix& x, Matrix& dw, std::span<double> db);
void relu(Matrix& y);
void relu_grad(Matrix& dy, const Matrix& y);
void edge_combine(const Matrix& a, const Matrix& b, const Matrix& c, std::span<const std::uint32_t> first,
                  std::span<const std::uint32_t> second, Matrix& z);
void segment_sum(const Matrix& v, const Csr& groups, Matrix& out);
void gather_add(const Matrix& dout, std::span<const std::uint32_t> node, Matrix& dv);
}  // namespace serial

/// Threads used by the parallel kernels (omp_get_max_threads).
int max_threads();
void set_threads(int n);

}  // namespace miro::kernels
