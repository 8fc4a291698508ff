#pragma once

// Differentiable tensor operations. All reductions run in a fixed
// left-to-right order so results are bit-reproducible.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "flightpatch/errors.hpp"
#include "flightpatch/rng.hpp"
#include "flightpatch/tensor.hpp"

namespace flightpatch {

namespace detail {

inline void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + to_string(a.shape()) + " vs " +
                         to_string(b.shape()));
  }
}

inline std::size_t normalize_axis(std::ptrdiff_t axis, std::size_t rank) {
  const auto r = static_cast<std::ptrdiff_t>(rank);
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) throw DimensionError("axis " + std::to_string(axis) + " out of range");
  return static_cast<std::size_t>(axis);
}

/// Splits a shape around `axis` into (outer, extent, inner) block sizes.
struct AxisBlocks {
  std::size_t outer = 1;
  std::size_t extent = 1;
  std::size_t inner = 1;
};

inline AxisBlocks blocks_around(const Shape& shape, std::size_t axis) {
  AxisBlocks b;
  for (std::size_t i = 0; i < axis; ++i) b.outer *= shape[i];
  b.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) b.inner *= shape[i];
  return b;
}

/// Walks the output of a permutation in row-major order. With scatter=false
/// it gathers dst[o] = src[i]; with scatter=true it accumulates src[i] += dst[o].
inline void permute_walk(double* in, const Shape& in_shape, std::span<const std::size_t> perm, double* out,
                         bool scatter) {
  const std::size_t r = in_shape.size();
  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t k = r; k-- > 1;) in_strides[k - 1] = in_strides[k] * in_shape[k];
  std::vector<std::size_t> out_shape(r), stride(r);
  for (std::size_t k = 0; k < r; ++k) {
    out_shape[k] = in_shape[perm[k]];
    stride[k] = in_strides[perm[k]];
  }
  const std::size_t n = element_count(in_shape);
  const std::size_t inner = out_shape[r - 1];
  const std::size_t inner_stride = stride[r - 1];
  std::vector<std::size_t> idx(r, 0);
  std::size_t src = 0;
  for (std::size_t o = 0; o < n; o += inner) {
    if (scatter) {
      for (std::size_t j = 0; j < inner; ++j) in[src + j * inner_stride] += out[o + j];
    } else {
      for (std::size_t j = 0; j < inner; ++j) out[o + j] = in[src + j * inner_stride];
    }
    for (std::size_t k = r - 1; k-- > 0;) {
      ++idx[k];
      src += stride[k];
      if (idx[k] < out_shape[k]) break;
      src -= stride[k] * out_shape[k];
      idx[k] = 0;
    }
  }
}

}  // namespace detail

namespace detail {

// y[r, :] += x[r, :] * w for `rows` rows; four rows share each weight-row load.
inline void gemm_rows(const double* __restrict x, const double* __restrict w, double* __restrict y, std::size_t rows,
                      std::size_t in, std::size_t out) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* x0 = x + r * in;
    const double* x1 = x0 + in;
    const double* x2 = x1 + in;
    const double* x3 = x2 + in;
    double* y0 = y + r * out;
    double* y1 = y0 + out;
    double* y2 = y1 + out;
    double* y3 = y2 + out;
    for (std::size_t i = 0; i < in; ++i) {
      const double* wi = w + i * out;
      const double a0 = x0[i], a1 = x1[i], a2 = x2[i], a3 = x3[i];
      for (std::size_t o = 0; o < out; ++o) {
        const double wv = wi[o];
        y0[o] += a0 * wv;
        y1[o] += a1 * wv;
        y2[o] += a2 * wv;
        y3[o] += a3 * wv;
      }
    }
  }
  for (; r < rows; ++r) {
    const double* xr = x + r * in;
    double* yr = y + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double a = xr[i];
      const double* wi = w + i * out;
      for (std::size_t o = 0; o < out; ++o) yr[o] += a * wi[o];
    }
  }
}

// gx[r, i] += sum_o g[r, o] * w[i, o]
inline void gemm_rows_transposed(const double* __restrict g, const double* __restrict w, double* __restrict gx,
                                 std::size_t rows, std::size_t in, std::size_t out) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* g0 = g + r * out;
    const double* g1 = g0 + out;
    const double* g2 = g1 + out;
    const double* g3 = g2 + out;
    for (std::size_t i = 0; i < in; ++i) {
      const double* wi = w + i * out;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t o = 0; o < out; ++o) {
        const double wv = wi[o];
        s0 += g0[o] * wv;
        s1 += g1[o] * wv;
        s2 += g2[o] * wv;
        s3 += g3[o] * wv;
      }
      gx[r * in + i] += s0;
      gx[(r + 1) * in + i] += s1;
      gx[(r + 2) * in + i] += s2;
      gx[(r + 3) * in + i] += s3;
    }
  }
  for (; r < rows; ++r) {
    const double* gr = g + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double* wi = w + i * out;
      double s = 0.0;
      for (std::size_t o = 0; o < out; ++o) s += gr[o] * wi[o];
      gx[r * in + i] += s;
    }
  }
}

// gw[i, o] += sum_r x[r, i] * g[r, o]
inline void gemm_outer_accumulate(const double* __restrict x, const double* __restrict g, double* __restrict gw,
                                  std::size_t rows, std::size_t in, std::size_t out) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* x0 = x + r * in;
    const double* g0 = g + r * out;
    const double* g1 = g0 + out;
    const double* g2 = g1 + out;
    const double* g3 = g2 + out;
    for (std::size_t i = 0; i < in; ++i) {
      const double a0 = x0[i], a1 = x0[in + i], a2 = x0[2 * in + i], a3 = x0[3 * in + i];
      double* gwi = gw + i * out;
      for (std::size_t o = 0; o < out; ++o) gwi[o] += a0 * g0[o] + a1 * g1[o] + a2 * g2[o] + a3 * g3[o];
    }
  }
  for (; r < rows; ++r) {
    const double* xr = x + r * in;
    const double* gr = g + r * out;
    for (std::size_t i = 0; i < in; ++i) {
      const double a = xr[i];
      double* gwi = gw + i * out;
      for (std::size_t o = 0; o < out; ++o) gwi[o] += a * gr[o];
    }
  }
}

}  // namespace detail

/// output[..., o] = sum_i input[..., i] * weight[i, o] + bias[o]. `bias` may be undefined.
inline Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias) {
  if (weight.rank() != 2 || input.dim(-1) != weight.dim(0)) {
    throw DimensionError("linear: input " + to_string(input.shape()) + " incompatible with weight " +
                         to_string(weight.shape()));
  }
  const std::size_t in = weight.dim(0);
  const std::size_t out = weight.dim(1);
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != out)) {
    throw DimensionError("linear: bias " + to_string(bias.shape()) + " does not match weight " +
                         to_string(weight.shape()));
  }
  const std::size_t rows = input.numel() / in;
  std::vector<double> result(rows * out, 0.0);
  detail::gemm_rows(input.data().data(), weight.data().data(), result.data(), rows, in, out);
  if (bias.defined()) {
    const double* b = bias.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
      double* y = result.data() + r * out;
      for (std::size_t o = 0; o < out; ++o) y[o] += b[o];
    }
  }
  Shape shape = input.shape();
  shape.back() = out;
  Tensor res = detail::make_result("linear", std::move(shape), std::move(result), {&input, &weight, &bias});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = input.impl().get();
    auto* wn = weight.impl().get();
    auto* bn = bias.defined() ? bias.impl().get() : nullptr;
    rn->backward = [rn, xn, wn, bn, rows, in, out] {
      const double* g = rn->grad.data();
      if (double* gx = detail::grad_of(xn)) detail::gemm_rows_transposed(g, wn->data.data(), gx, rows, in, out);
      if (double* gw = detail::grad_of(wn)) detail::gemm_outer_accumulate(xn->data.data(), g, gw, rows, in, out);
      if (double* gb = detail::grad_of(bn)) {
        for (std::size_t r = 0; r < rows; ++r) {
          const double* gr = g + r * out;
          for (std::size_t o = 0; o < out; ++o) gb[o] += gr[o];
        }
      }
    };
  }
  return res;
}

/// Batched matrix product over all leading axes: [..., M, K] x [..., K, N] -> [..., M, N],
/// or [..., M, K] x [..., N, K]^T when transpose_b. The product is scaled by alpha.
inline Tensor batched_matmul(const Tensor& a, const Tensor& b, bool transpose_b = false, double alpha = 1.0) {
  if (a.rank() < 2 || a.rank() != b.rank() ||
      !std::equal(a.shape().begin(), a.shape().end() - 2, b.shape().begin())) {
    throw DimensionError("batched_matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t m = a.dim(-2);
  const std::size_t k = a.dim(-1);
  const std::size_t n = transpose_b ? b.dim(-2) : b.dim(-1);
  if ((transpose_b ? b.dim(-1) : b.dim(-2)) != k) {
    throw DimensionError("batched_matmul: inner extents differ in " + to_string(a.shape()) + " and " +
                         to_string(b.shape()));
  }
  const std::size_t batch = a.numel() / (m * k);
  std::vector<double> result(batch * m * n, 0.0);
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t s = 0; s < batch; ++s) {
    const double* as = pa + s * m * k;
    const double* bs = pb + s * k * n;
    double* ys = result.data() + s * m * n;
    for (std::size_t i = 0; i < m; ++i) {
      double* y = ys + i * n;
      if (transpose_b) {
        for (std::size_t j = 0; j < n; ++j) {
          double acc = 0.0;
          for (std::size_t q = 0; q < k; ++q) acc += as[i * k + q] * bs[j * k + q];
          y[j] = alpha * acc;
        }
      } else {
        for (std::size_t q = 0; q < k; ++q) {
          const double aiq = as[i * k + q];
          const double* bq = bs + q * n;
          for (std::size_t j = 0; j < n; ++j) y[j] += aiq * bq[j];
        }
        if (alpha != 1.0) {
          for (std::size_t j = 0; j < n; ++j) y[j] *= alpha;
        }
      }
    }
  }
  Shape shape = a.shape();
  shape.back() = n;
  Tensor res = detail::make_result("batched_matmul", std::move(shape), std::move(result), {&a, &b});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* an = a.impl().get();
    auto* bn = b.impl().get();
    rn->backward = [rn, an, bn, batch, m, k, n, transpose_b, alpha] {
      double* ga = detail::grad_of(an);
      double* gb = detail::grad_of(bn);
      for (std::size_t s = 0; s < batch; ++s) {
        const double* g = rn->grad.data() + s * m * n;
        const double* as = an->data.data() + s * m * k;
        const double* bs = bn->data.data() + s * k * n;
        double* gas = ga ? ga + s * m * k : nullptr;
        double* gbs = gb ? gb + s * k * n : nullptr;
        for (std::size_t i = 0; i < m; ++i) {
          const double* gi = g + i * n;
          const double* ai = as + i * k;
          if (transpose_b) {
            // y[i, j] = alpha * sum_q a[i, q] * b[j, q]
            for (std::size_t j = 0; j < n; ++j) {
              const double gij = alpha * gi[j];
              const double* bj = bs + j * k;
              if (gas) {
                for (std::size_t q = 0; q < k; ++q) gas[i * k + q] += gij * bj[q];
              }
              if (gbs) {
                for (std::size_t q = 0; q < k; ++q) gbs[j * k + q] += gij * ai[q];
              }
            }
          } else {
            // y[i, j] = alpha * sum_q a[i, q] * b[q, j]
            for (std::size_t q = 0; q < k; ++q) {
              const double* bq = bs + q * n;
              if (gas) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) acc += gi[j] * bq[j];
                gas[i * k + q] += alpha * acc;
              }
              if (gbs) {
                const double aiq = alpha * ai[q];
                for (std::size_t j = 0; j < n; ++j) gbs[q * n + j] += aiq * gi[j];
              }
            }
          }
        }
      }
    };
  }
  return res;
}

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> result(a.numel());
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = pa[i] + pb[i];
  Tensor res = detail::make_result("add", a.shape(), std::move(result), {&a, &b});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* an = a.impl().get();
    auto* bn = b.impl().get();
    rn->backward = [rn, an, bn] {
      const auto& g = rn->grad;
      if (double* ga = detail::grad_of(an)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (double* gb = detail::grad_of(bn)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      }
    };
  }
  return res;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> result(a.numel());
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = a.data()[i] - b.data()[i];
  Tensor res = detail::make_result("sub", a.shape(), std::move(result), {&a, &b});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* an = a.impl().get();
    auto* bn = b.impl().get();
    rn->backward = [rn, an, bn] {
      const auto& g = rn->grad;
      if (double* ga = detail::grad_of(an)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
      }
      if (double* gb = detail::grad_of(bn)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
      }
    };
  }
  return res;
}

/// Elementwise product.
inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> result(a.numel());
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = a.data()[i] * b.data()[i];
  Tensor res = detail::make_result("mul", a.shape(), std::move(result), {&a, &b});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* an = a.impl().get();
    auto* bn = b.impl().get();
    rn->backward = [rn, an, bn] {
      const auto& g = rn->grad;
      if (double* ga = detail::grad_of(an)) {
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bn->data[i];
      }
      if (double* gb = detail::grad_of(bn)) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * an->data[i];
      }
    };
  }
  return res;
}

inline Tensor scale(const Tensor& x, double factor) {
  std::vector<double> result(x.numel());
  for (std::size_t i = 0; i < result.size(); ++i) result[i] = x.data()[i] * factor;
  Tensor res = detail::make_result("scale", x.shape(), std::move(result), {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn, factor] {
      double* gx = detail::grad_of(xn);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) gx[i] += rn->grad[i] * factor;
    };
  }
  return res;
}

/// Same values, new shape.
inline Tensor reshape(const Tensor& x, Shape shape) {
  if (element_count(shape) != x.numel()) {
    throw DimensionError("reshape: cannot view " + to_string(x.shape()) + " as " + to_string(shape));
  }
  std::vector<double> values(x.data().begin(), x.data().end());
  Tensor res = detail::make_result("reshape", std::move(shape), std::move(values), {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn] {
      double* gx = detail::grad_of(xn);
      for (std::size_t i = 0; i < rn->grad.size(); ++i) gx[i] += rn->grad[i];
    };
  }
  return res;
}

/// Axis permutation: output axis k is input axis perm[k].
inline Tensor permute(const Tensor& x, std::vector<std::size_t> perm) {
  if (perm.size() != x.rank()) throw DimensionError("permute: rank mismatch for " + to_string(x.shape()));
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    if (p >= perm.size() || seen[p]) throw DimensionError("permute: invalid axis permutation");
    seen[p] = true;
  }
  Shape shape(perm.size());
  for (std::size_t k = 0; k < perm.size(); ++k) shape[k] = x.shape()[perm[k]];
  std::vector<double> result(x.numel());
  detail::permute_walk(const_cast<double*>(x.data().data()), x.shape(), perm, result.data(), false);
  Tensor res = detail::make_result("permute", std::move(shape), std::move(result), {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn, perm = std::move(perm)] {
      detail::permute_walk(detail::grad_of(xn), xn->shape, perm, rn->grad.data(), true);
    };
  }
  return res;
}

/// Swaps the two trailing axes.
inline Tensor transpose_last(const Tensor& x) {
  std::vector<std::size_t> perm(x.rank());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::swap(perm[x.rank() - 1], perm[x.rank() - 2]);
  return permute(x, std::move(perm));
}

/// `length` consecutive entries along `axis` starting at `start`.
inline Tensor slice(const Tensor& x, std::ptrdiff_t axis_arg, std::size_t start, std::size_t length) {
  const std::size_t axis = detail::normalize_axis(axis_arg, x.rank());
  if (length == 0 || start + length > x.shape()[axis]) {
    throw DimensionError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + length) +
                         ") exceeds axis of " + to_string(x.shape()));
  }
  const auto b = detail::blocks_around(x.shape(), axis);
  Shape shape = x.shape();
  shape[axis] = length;
  std::vector<double> result(b.outer * length * b.inner);
  const double* src = x.data().data();
  for (std::size_t o = 0; o < b.outer; ++o) {
    std::copy_n(src + (o * b.extent + start) * b.inner, length * b.inner, result.data() + o * length * b.inner);
  }
  Tensor res = detail::make_result("slice", std::move(shape), std::move(result), {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn, b, start, length] {
      double* gx = detail::grad_of(xn);
      for (std::size_t o = 0; o < b.outer; ++o) {
        const double* g = rn->grad.data() + o * length * b.inner;
        double* dst = gx + (o * b.extent + start) * b.inner;
        for (std::size_t i = 0; i < length * b.inner; ++i) dst[i] += g[i];
      }
    };
  }
  return res;
}

/// Removes `axis` by taking entry `index` along it.
inline Tensor select(const Tensor& x, std::ptrdiff_t axis_arg, std::size_t index) {
  const std::size_t axis = detail::normalize_axis(axis_arg, x.rank());
  Shape shape = x.shape();
  shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
  if (shape.empty()) shape.push_back(1);
  return reshape(slice(x, static_cast<std::ptrdiff_t>(axis), index, 1), std::move(shape));
}

/// Prepends `count` zeros along `axis`.
inline Tensor pad_front(const Tensor& x, std::ptrdiff_t axis_arg, std::size_t count) {
  if (count == 0) return x;
  const std::size_t axis = detail::normalize_axis(axis_arg, x.rank());
  const auto b = detail::blocks_around(x.shape(), axis);
  const std::size_t padded = b.extent + count;
  Shape shape = x.shape();
  shape[axis] = padded;
  std::vector<double> result(b.outer * padded * b.inner, 0.0);
  const double* src = x.data().data();
  for (std::size_t o = 0; o < b.outer; ++o) {
    std::copy_n(src + o * b.extent * b.inner, b.extent * b.inner, result.data() + (o * padded + count) * b.inner);
  }
  Tensor res = detail::make_result("pad_front", std::move(shape), std::move(result), {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn, b, padded, count] {
      double* gx = detail::grad_of(xn);
      for (std::size_t o = 0; o < b.outer; ++o) {
        const double* g = rn->grad.data() + (o * padded + count) * b.inner;
        double* dst = gx + o * b.extent * b.inner;
        for (std::size_t i = 0; i < b.extent * b.inner; ++i) dst[i] += g[i];
      }
    };
  }
  return res;
}

/// Joins tensors along `axis`; all other extents must agree.
inline Tensor concat(const std::vector<Tensor>& parts, std::ptrdiff_t axis_arg) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const std::size_t axis = detail::normalize_axis(axis_arg, parts[0].rank());
  Shape shape = parts[0].shape();
  std::size_t total = 0;
  for (const auto& p : parts) {
    Shape probe = p.shape();
    if (probe.size() != shape.size()) throw DimensionError("concat: rank mismatch");
    probe[axis] = shape[axis];
    if (probe != shape) {
      throw DimensionError("concat: " + to_string(p.shape()) + " incompatible with " + to_string(parts[0].shape()));
    }
    total += p.shape()[axis];
  }
  const auto b0 = detail::blocks_around(shape, axis);
  shape[axis] = total;
  std::vector<double> result(b0.outer * total * b0.inner);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t e = p.shape()[axis];
    for (std::size_t o = 0; o < b0.outer; ++o) {
      std::copy_n(p.data().data() + o * e * b0.inner, e * b0.inner, result.data() + (o * total + offset) * b0.inner);
    }
    offset += e;
  }
  // make_result takes an initializer_list, so wire multi-input graphs by hand.
  Tensor res = detail::make_result("concat", std::move(shape), std::move(result), {});
  bool needs = false;
  for (const auto& p : parts) needs = needs || p.requires_grad();
  if (grad_enabled() && needs) {
    auto* rn = res.impl().get();
    rn->requires_grad = true;
    std::vector<std::pair<detail::Node*, std::size_t>> inputs;
    for (const auto& p : parts) {
      rn->inputs.push_back(p.impl());
      inputs.emplace_back(p.impl().get(), p.shape()[axis]);
    }
    rn->backward = [rn, inputs = std::move(inputs), b0, total] {
      std::size_t offset = 0;
      for (const auto& [node, e] : inputs) {
        if (double* gp = detail::grad_of(node)) {
          for (std::size_t o = 0; o < b0.outer; ++o) {
            const double* g = rn->grad.data() + (o * total + offset) * b0.inner;
            double* dst = gp + o * e * b0.inner;
            for (std::size_t i = 0; i < e * b0.inner; ++i) dst[i] += g[i];
          }
        }
        offset += e;
      }
    };
  }
  return res;
}

/// x * Phi(x) with the exact erf-based normal CDF.
inline Tensor gelu(const Tensor& x) {
  std::vector<double> result(x.numel());
  const double* px = x.data().data();
  for (std::size_t i = 0; i < result.size(); ++i) {
    result[i] = 0.5 * px[i] * (1.0 + std::erf(px[i] * std::numbers::sqrt2 * 0.5));
  }
  Tensor res = detail::make_result("gelu", x.shape(), std::move(result), {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn] {
      double* gx = detail::grad_of(xn);
      const double inv_sqrt_2pi = 0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2;
      for (std::size_t i = 0; i < rn->grad.size(); ++i) {
        const double v = xn->data[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 * 0.5));
        const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
        gx[i] += rn->grad[i] * (cdf + v * pdf);
      }
    };
  }
  return res;
}

/// Inverted dropout. Identity (same tensor) when not training or rate is zero.
inline Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0) || rate >= 1.0) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(x.numel());
  std::vector<double> result(x.numel());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
    result[i] = x.data()[i] * mask[i];
  }
  Tensor res = detail::make_result("dropout", x.shape(), std::move(result), {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn, mask = std::move(mask)] {
      double* gx = detail::grad_of(xn);
      for (std::size_t i = 0; i < mask.size(); ++i) gx[i] += rn->grad[i] * mask[i];
    };
  }
  return res;
}

/// Normalizes each trailing-axis vector to zero mean and unit (biased) variance,
/// then applies gamma/beta.
inline Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double epsilon) {
  const std::size_t d = x.dim(-1);
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw DimensionError("layer_norm: affine parameters " + to_string(gamma.shape()) + "/" +
                         to_string(beta.shape()) + " do not match input " + to_string(x.shape()));
  }
  const std::size_t rows = x.numel() / d;
  std::vector<double> result(x.numel());
  std::vector<double> normalized(x.numel());
  std::vector<double> inv_std(rows);
  const double* px = x.data().data();
  const double* pg = gamma.data().data();
  const double* pb = beta.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * d;
    double mean = 0.0;
    for (std::size_t i = 0; i < d; ++i) mean += xr[i];
    mean /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (xr[i] - mean) * (xr[i] - mean);
    var /= static_cast<double>(d);
    const double s = 1.0 / std::sqrt(var + epsilon);
    inv_std[r] = s;
    for (std::size_t i = 0; i < d; ++i) {
      const double xhat = (xr[i] - mean) * s;
      normalized[r * d + i] = xhat;
      result[r * d + i] = pg[i] * xhat + pb[i];
    }
  }
  Tensor res = detail::make_result("layer_norm", x.shape(), std::move(result), {&x, &gamma, &beta});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    auto* gn = gamma.impl().get();
    auto* bn = beta.impl().get();
    rn->backward = [rn, xn, gn, bn, rows, d, normalized = std::move(normalized), inv_std = std::move(inv_std)] {
      const double* g = rn->grad.data();
      double* gx = detail::grad_of(xn);
      double* gg = detail::grad_of(gn);
      double* gb = detail::grad_of(bn);
      std::vector<double> dxhat(d);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* gr = g + r * d;
        const double* xh = normalized.data() + r * d;
        if (gg) {
          for (std::size_t i = 0; i < d; ++i) gg[i] += gr[i] * xh[i];
        }
        if (gb) {
          for (std::size_t i = 0; i < d; ++i) gb[i] += gr[i];
        }
        if (gx) {
          double mean_d = 0.0;
          double mean_dx = 0.0;
          for (std::size_t i = 0; i < d; ++i) {
            dxhat[i] = gr[i] * gn->data[i];
            mean_d += dxhat[i];
            mean_dx += dxhat[i] * xh[i];
          }
          mean_d /= static_cast<double>(d);
          mean_dx /= static_cast<double>(d);
          for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += inv_std[r] * (dxhat[i] - mean_d - xh[i] * mean_dx);
        }
      }
    };
  }
  return res;
}

/// Softmax over the trailing axis with max subtraction.
inline Tensor softmax(const Tensor& x) {
  const std::size_t d = x.dim(-1);
  const std::size_t rows = x.numel() / d;
  std::vector<double> result(x.numel());
  const double* px = x.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = px + r * d;
    double* y = result.data() + r * d;
    double peak = xr[0];
    for (std::size_t i = 1; i < d; ++i) peak = std::max(peak, xr[i]);
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      y[i] = std::exp(xr[i] - peak);
      total += y[i];
    }
    for (std::size_t i = 0; i < d; ++i) y[i] /= total;
  }
  Tensor res = detail::make_result("softmax", x.shape(), std::move(result), {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn, rows, d] {
      double* gx = detail::grad_of(xn);
      for (std::size_t r = 0; r < rows; ++r) {
        const double* y = rn->data.data() + r * d;
        const double* g = rn->grad.data() + r * d;
        double dot = 0.0;
        for (std::size_t i = 0; i < d; ++i) dot += g[i] * y[i];
        for (std::size_t i = 0; i < d; ++i) gx[r * d + i] += y[i] * (g[i] - dot);
      }
    };
  }
  return res;
}

/// Sum of all elements as a scalar tensor.
inline Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.data()) total += v;
  Tensor res = detail::make_result("sum", {1}, {total}, {&x});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* xn = x.impl().get();
    rn->backward = [rn, xn] {
      double* gx = detail::grad_of(xn);
      const double g = rn->grad[0];
      for (std::size_t i = 0; i < xn->data.size(); ++i) gx[i] += g;
    };
  }
  return res;
}

inline Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

/// Mean squared difference over all elements.
inline Tensor mse_loss(const Tensor& prediction, const Tensor& target) {
  detail::require_same_shape("mse_loss", prediction, target);
  const std::size_t n = prediction.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = prediction.data()[i] - target.data()[i];
    total += e * e;
  }
  Tensor res = detail::make_result("mse_loss", {1}, {total / static_cast<double>(n)}, {&prediction, &target});
  if (res.requires_grad()) {
    auto* rn = res.impl().get();
    auto* pn = prediction.impl().get();
    auto* tn = target.impl().get();
    rn->backward = [rn, pn, tn, n] {
      const double g = rn->grad[0] * 2.0 / static_cast<double>(n);
      double* gp = detail::grad_of(pn);
      double* gt = detail::grad_of(tn);
      for (std::size_t i = 0; i < n; ++i) {
        const double e = pn->data[i] - tn->data[i];
        if (gp) gp[i] += g * e;
        if (gt) gt[i] -= g * e;
      }
    };
  }
  return res;
}

}  // namespace flightpatch
