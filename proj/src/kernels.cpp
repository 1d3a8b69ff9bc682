#include "miro/kernels.hpp"

#include <omp.h>

#include <cassert>
#include <stdexcept>

namespace miro::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1 << 14;

void check(bool ok, const char* what) {
  if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Csr group_by(std::span<const std::uint32_t> node_of_edge, std::size_t n_nodes) {
  Csr g;
  g.offsets.assign(n_nodes + 1, 0);
  for (auto i : node_of_edge) ++g.offsets[i + 1];
  for (std::size_t i = 0; i < n_nodes; ++i) g.offsets[i + 1] += g.offsets[i];
  g.ids.resize(node_of_edge.size());
  std::vector<std::uint32_t> cursor(g.offsets.begin(), g.offsets.end() - 1);
  for (std::size_t e = 0; e < node_of_edge.size(); ++e) g.ids[cursor[node_of_edge[e]]++] = static_cast<std::uint32_t>(e);
  return g;
}

void linear(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& y) {
  check(x.cols() == w.cols(), "linear: input width mismatch");
  check(b.empty() || b.size() == w.rows(), "linear: bias size mismatch");
  const std::size_t rows = x.rows(), in = w.cols(), out = w.rows();
  y.resize(rows, out);
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * in * out > kParallelWork)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const double* xr = x.data() + r * in;
    double* yr = y.data() + r * out;
    for (std::size_t o = 0; o < out; ++o) {
      const double* wo = w.data() + o * in;
      double acc = 0.0;
      for (std::size_t k = 0; k < in; ++k) acc += xr[k] * wo[k];
      yr[o] = b.empty() ? acc : acc + b[o];
    }
  }
}

void linear_grad_input(const Matrix& dy, const Matrix& w, Matrix& dx, bool accumulate) {
  check(dy.cols() == w.rows(), "linear_grad_input: shape mismatch");
  const std::size_t rows = dy.rows(), in = w.cols(), out = w.rows();
  if (!accumulate) dx.resize(rows, in);
  check(dx.rows() == rows && dx.cols() == in, "linear_grad_input: dx shape mismatch");
  const auto n = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for schedule(static) if (rows * in * out > kParallelWork)
  for (std::ptrdiff_t r = 0; r < n; ++r) {
    const double* dyr = dy.data() + r * out;
    double* dxr = dx.data() + r * in;
    for (std::size_t o = 0; o < out; ++o) {
      const double g = dyr[o];
      if (g == 0.0) continue;
      const double* wo = w.data() + o * in;
      for (std::size_t k = 0; k < in; ++k) dxr[k] += g * wo[k];
    }
  }
}

void linear_grad_params(const Matrix& dy, const Matrix& x, Matrix& dw, std::span<double> db) {
  check(dy.rows() == x.rows(), "linear_grad_params: row mismatch");
  check(dw.rows() == dy.cols() && dw.cols() == x.cols(), "linear_grad_params: dw shape mismatch");
  const std::size_t rows = dy.rows(), in = x.cols(), out = dy.cols();
  const auto n_out = static_cast<std::ptrdiff_t>(out);
#pragma omp parallel for schedule(static) if (rows * in * out > kParallelWork)
  for (std::ptrdiff_t o = 0; o < n_out; ++o) {
    double* dwo = dw.data() + o * in;
    double bsum = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double g = dy(r, static_cast<std::size_t>(o));
      bsum += g;
      if (g == 0.0) continue;
      const double* xr = x.data() + r * in;
      for (std::size_t k = 0; k < in; ++k) dwo[k] += g * xr[k];
    }
    if (!db.empty()) db[static_cast<std::size_t>(o)] += bsum;
  }
}

void relu(Matrix& y) {
  auto& v = y.values();
  const auto n = static_cast<std::ptrdiff_t>(v.size());
#pragma omp parallel for schedule(static) if (v.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    if (!(v[i] > 0.0)) v[i] = 0.0;
}

void relu_grad(Matrix& dy, const Matrix& y) {
  check(dy.size() == y.size(), "relu_grad: size mismatch");
  auto& g = dy.values();
  const auto& a = y.values();
  const auto n = static_cast<std::ptrdiff_t>(g.size());
#pragma omp parallel for schedule(static) if (g.size() > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i)
    if (!(a[i] > 0.0)) g[i] = 0.0;
}

void concat_cols(const Matrix& a, const Matrix& b, Matrix& out) {
  check(a.rows() == b.rows(), "concat_cols: row mismatch");
  out.resize(a.rows(), a.cols() + b.cols());
  for (std::size_t r = 0; r < a.rows(); ++r) {
    std::copy(a.row(r).begin(), a.row(r).end(), out.row(r).begin());
    std::copy(b.row(r).begin(), b.row(r).end(), out.row(r).begin() + static_cast<std::ptrdiff_t>(a.cols()));
  }
}

void split_cols(const Matrix& src, Matrix& left, Matrix& right) {
  check(left.cols() + right.cols() == src.cols(), "split_cols: width mismatch");
  const std::size_t lc = left.cols(), rc = right.cols();
  left.resize(src.rows(), lc);
  right.resize(src.rows(), rc);
  for (std::size_t r = 0; r < src.rows(); ++r) {
    auto s = src.row(r);
    std::copy(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(lc), left.row(r).begin());
    std::copy(s.begin() + static_cast<std::ptrdiff_t>(lc), s.end(), right.row(r).begin());
  }
}

void edge_combine(const Matrix& a, const Matrix& b, const Matrix& c, std::span<const std::uint32_t> first,
                  std::span<const std::uint32_t> second, Matrix& z) {
  check(a.cols() == c.cols() && b.cols() == c.cols(), "edge_combine: width mismatch");
  check(first.size() == c.rows() && second.size() == c.rows(), "edge_combine: edge count mismatch");
  const std::size_t e_count = c.rows(), w = c.cols();
  z.resize(e_count, w);
  const auto n = static_cast<std::ptrdiff_t>(e_count);
#pragma omp parallel for schedule(static) if (e_count * w > kParallelWork)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    const double* ar = a.data() + first[e] * w;
    const double* br = b.data() + second[e] * w;
    const double* cr = c.data() + e * w;
    double* zr = z.data() + e * w;
    for (std::size_t k = 0; k < w; ++k) zr[k] = ar[k] + br[k] + cr[k];
  }
}

void segment_sum(const Matrix& v, const Csr& groups, Matrix& out) {
  const std::size_t n_nodes = groups.offsets.size() - 1, w = v.cols();
  out.resize(n_nodes, w);
  const auto n = static_cast<std::ptrdiff_t>(n_nodes);
#pragma omp parallel for schedule(static) if (v.rows() * w > kParallelWork)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    double* o = out.data() + i * w;
    for (auto k = groups.offsets[i]; k < groups.offsets[i + 1]; ++k) {
      const double* src = v.data() + groups.ids[k] * w;
      for (std::size_t c = 0; c < w; ++c) o[c] += src[c];
    }
  }
}

void gather_add(const Matrix& dout, std::span<const std::uint32_t> node, Matrix& dv) {
  check(node.size() == dv.rows() && dout.cols() == dv.cols(), "gather_add: shape mismatch");
  const std::size_t w = dv.cols();
  const auto n = static_cast<std::ptrdiff_t>(dv.rows());
#pragma omp parallel for schedule(static) if (dv.rows() * w > kParallelWork)
  for (std::ptrdiff_t e = 0; e < n; ++e) {
    const double* s = dout.data() + node[e] * w;
    double* d = dv.data() + e * w;
    for (std::size_t c = 0; c < w; ++c) d[c] += s[c];
  }
}

int max_threads() { return omp_get_max_threads(); }
void set_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

namespace serial {

void linear(const Matrix& x, const Matrix& w, std::span<const double> b, Matrix& y) {
  y.resize(x.rows(), w.rows());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t o = 0; o < w.rows(); ++o) {
      double acc = 0.0;
      for (std::size_t k = 0; k < w.cols(); ++k) acc += x(r, k) * w(o, k);
      y(r, o) = b.empty() ? acc : acc + b[o];
    }
}

void linear_grad_input(const Matrix& dy, const Matrix& w, Matrix& dx, bool accumulate) {
  if (!accumulate) dx.resize(dy.rows(), w.cols());
  for (std::size_t r = 0; r < dy.rows(); ++r)
    for (std::size_t o = 0; o < w.rows(); ++o) {
      if (dy(r, o) == 0.0) continue;
      for (std::size_t k = 0; k < w.cols(); ++k) dx(r, k) += dy(r, o) * w(o, k);
    }
}

void linear_grad_params(const Matrix& dy, const Matrix& x, Matrix& dw, std::span<double> db) {
  for (std::size_t o = 0; o < dy.cols(); ++o) {
    double bsum = 0.0;
    for (std::size_t r = 0; r < dy.rows(); ++r) {
      bsum += dy(r, o);
      if (dy(r, o) == 0.0) continue;
      for (std::size_t k = 0; k < x.cols(); ++k) dw(o, k) += dy(r, o) * x(r, k);
    }
    if (!db.empty()) db[o] += bsum;
  }
}

void relu(Matrix& y) {
  for (auto& v : y.values())
    if (!(v > 0.0)) v = 0.0;
}

void relu_grad(Matrix& dy, const Matrix& y) {
  for (std::size_t i = 0; i < dy.size(); ++i)
    if (!(y.values()[i] > 0.0)) dy.values()[i] = 0.0;
}

void edge_combine(const Matrix& a, const Matrix& b, const Matrix& c, std::span<const std::uint32_t> first,
                  std::span<const std::uint32_t> second, Matrix& z) {
  z.resize(c.rows(), c.cols());
  for (std::size_t e = 0; e < c.rows(); ++e)
    for (std::size_t k = 0; k < c.cols(); ++k) z(e, k) = a(first[e], k) + b(second[e], k) + c(e, k);
}

void segment_sum(const Matrix& v, const Csr& groups, Matrix& out) {
  out.resize(groups.offsets.size() - 1, v.cols());
  for (std::size_t i = 0; i + 1 < groups.offsets.size(); ++i)
    for (auto k = groups.offsets[i]; k < groups.offsets[i + 1]; ++k)
      for (std::size_t c = 0; c < v.cols(); ++c) out(i, c) += v(groups.ids[k], c);
}

void gather_add(const Matrix& dout, std::span<const std::uint32_t> node, Matrix& dv) {
  for (std::size_t e = 0; e < dv.rows(); ++e)
    for (std::size_t c = 0; c < dv.cols(); ++c) dv(e, c) += dout(node[e], c);
}

}  // namespace serial

}  // namespace miro::kernels
