#ifndef GAITSET_OPS_HPP_
#define GAITSET_OPS_HPP_

#include <Eigen/Core>

#ifdef _OPENMP
#include <omp.h>
#endif

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <utility>
#include <vector>

#include "gaitset/tensor.hpp"

namespace gaitset {

namespace detail {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;
template <typename T>
using StridedMap = Eigen::Map<RowMat<T>, 0, Eigen::OuterStride<>>;
template <typename T>
using ConstStridedMap = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;

// Canonical mean: sort ascending, then bottom-up adjacent pairing in double.
// The sorted pairwise tree makes the result exactly invariant to input order
// and to duplicating the whole multiset.
inline double canonical_mean(std::vector<double>& vals) {
  const size_t n = vals.size();
  std::sort(vals.begin(), vals.end());
  size_t m = n;
  while (m > 1) {
    size_t half = m / 2;
    for (size_t i = 0; i < half; ++i) vals[i] = vals[2 * i] + vals[2 * i + 1];
    if (m & 1) {
      vals[half] = vals[m - 1];
      m = half + 1;
    } else {
      m = half;
    }
  }
  return vals[0] / static_cast<double>(n);
}

// cols rows are indexed by (channel, ky, kx), columns by output pixel.
template <typename T>
void im2col(const T* in, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t ph,
            int64_t pw, int64_t oh, int64_t ow, T* cols) {
  for (int64_t c = 0; c < cin; ++c) {
    const T* chan = in + c * h * w;
    for (int64_t dy = 0; dy < kh; ++dy) {
      for (int64_t dx = 0; dx < kw; ++dx) {
        T* dst = cols + ((c * kh + dy) * kw + dx) * (oh * ow);
        for (int64_t y = 0; y < oh; ++y) {
          int64_t sy = y + dy - ph;
          T* row = dst + y * ow;
          if (sy < 0 || sy >= h) {
            std::memset(row, 0, static_cast<size_t>(ow) * sizeof(T));
            continue;
          }
          int64_t x0 = std::max<int64_t>(0, pw - dx);
          int64_t x1 = std::min<int64_t>(ow, w + pw - dx);
          if (x0 > 0) std::memset(row, 0, static_cast<size_t>(x0) * sizeof(T));
          if (x1 < ow) std::memset(row + x1, 0, static_cast<size_t>(ow - x1) * sizeof(T));
          if (x1 > x0)
            std::memcpy(row + x0, chan + sy * w + x0 + dx - pw,
                        static_cast<size_t>(x1 - x0) * sizeof(T));
        }
      }
    }
  }
}

// Plain batched cross-correlation, no tape. out must be pre-sized.
// Each frame's GEMM lands in a reused scratch block first: Eigen's vectorized
// tail handling rounds differently depending on destination alignment, and
// routing every frame through the same buffer keeps per-frame results
// byte-identical regardless of the frame's position in the batch (which the
// set-permutation invariance contract relies on).
template <typename T>
void conv2d_raw(const Storage<T>& input, const Storage<T>& kernel, int64_t ph, int64_t pw,
                Storage<T>& out) {
  const int64_t n = input.shape[0], cin = input.shape[1], h = input.shape[2], w = input.shape[3];
  const int64_t cout = kernel.shape[0], kh = kernel.shape[2], kw = kernel.shape[3];
  const int64_t oh = h + 2 * ph - kh + 1, ow = w + 2 * pw - kw + 1;
  const int64_t K = cin * kh * kw, opix = oh * ow;
  ConstMatMap<T> W(kernel.data.data(), cout, K);
#pragma omp parallel for schedule(static)
  for (int64_t f = 0; f < n; ++f) {
    static thread_local std::vector<T> cols, dst;
    cols.resize(static_cast<size_t>(K * opix));
    dst.resize(static_cast<size_t>(cout * opix));
    im2col(input.data.data() + f * cin * h * w, cin, h, w, kh, kw, ph, pw, oh, ow, cols.data());
    MatMap<T>(dst.data(), cout, opix).noalias() = W * ConstMatMap<T>(cols.data(), K, opix);
    std::memcpy(out.data.data() + f * cout * opix, dst.data(),
                static_cast<size_t>(cout * opix) * sizeof(T));
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Storage<T> out(a.shape());
  const auto da = a.data(), db = b.data();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = da[i] + db[i];
  return BasicTensor<T>::make_op(
      std::move(out), {a, b},
      [](detail::Node<T>& self) {
        for (int k = 0; k < 2; ++k) {
          auto& p = *self.parents[k];
          if (!p.requires_grad) continue;
          auto& g = p.ensure_grad();
          for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
        }
      },
      "add");
}

template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Storage<T> out(a.shape());
  const auto da = a.data(), db = b.data();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = da[i] - db[i];
  return BasicTensor<T>::make_op(
      std::move(out), {a, b},
      [](detail::Node<T>& self) {
        if (self.parents[0]->requires_grad) {
          auto& g = self.parents[0]->ensure_grad();
          for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
        }
        if (self.parents[1]->requires_grad) {
          auto& g = self.parents[1]->ensure_grad();
          for (size_t i = 0; i < g.data.size(); ++i) g.data[i] -= self.grad.data[i];
        }
      },
      "sub");
}

template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.shape() != b.shape())
    throw ShapeError("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Storage<T> out(a.shape());
  const auto da = a.data(), db = b.data();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = da[i] * db[i];
  return BasicTensor<T>::make_op(
      std::move(out), {a, b},
      [](detail::Node<T>& self) {
        const auto& va = self.parents[0]->value.data;
        const auto& vb = self.parents[1]->value.data;
        if (self.parents[0]->requires_grad) {
          auto& g = self.parents[0]->ensure_grad();
          for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * vb[i];
        }
        if (self.parents[1]->requires_grad) {
          auto& g = self.parents[1]->ensure_grad();
          for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * va[i];
        }
      },
      "mul");
}

template <typename T>
BasicTensor<T> scale(const BasicTensor<T>& a, T factor) {
  Storage<T> out(a.shape());
  const auto da = a.data();
  for (int64_t i = 0; i < out.numel(); ++i) out.data[i] = da[i] * factor;
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [factor](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i] * factor;
      },
      "scale");
}

template <typename T>
BasicTensor<T> leaky_relu(const BasicTensor<T>& a, T slope) {
  Storage<T> out(a.shape());
  const auto da = a.data();
  for (int64_t i = 0; i < out.numel(); ++i) {
    T v = da[i];
    out.data[i] = v > T(0) ? v : slope * v;
  }
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [slope](detail::Node<T>& self) {
        const auto& x = self.parents[0]->value.data;
        auto& g = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i)
          g.data[i] += self.grad.data[i] * (x[i] > T(0) ? T(1) : slope);
      },
      "leaky_relu");
}

// ---------------------------------------------------------------------------
// structure
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> reshape(const BasicTensor<T>& a, Shape new_shape) {
  check_shape_valid(new_shape, "reshape");
  if (shape_numel(new_shape) != a.numel())
    throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(new_shape));
  Storage<T> out(std::move(new_shape));
  std::copy(a.data().begin(), a.data().end(), out.data.begin());
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += self.grad.data[i];
      },
      "reshape");
}

template <typename T>
BasicTensor<T> slice(const BasicTensor<T>& a, size_t axis, int64_t start, int64_t len) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw ShapeError("slice: axis out of range");
  if (start < 0 || len <= 0 || start + len > s[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                     ") outside extent " + std::to_string(s[axis]));
  Shape os = s;
  os[axis] = len;
  int64_t inner = 1;
  for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  int64_t outer = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s[i];
  const int64_t src_block = s[axis] * inner, dst_block = len * inner;
  Storage<T> out(os);
  const auto da = a.data();
  for (int64_t o = 0; o < outer; ++o)
    std::copy(da.begin() + o * src_block + start * inner,
              da.begin() + o * src_block + (start + len) * inner, out.data.begin() + o * dst_block);
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [outer, inner, src_block, dst_block, start](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t o = 0; o < outer; ++o) {
          T* dst = g.data.data() + o * src_block + start * inner;
          const T* src = self.grad.data.data() + o * dst_block;
          for (int64_t i = 0; i < dst_block; ++i) dst[i] += src[i];
        }
      },
      "slice");
}

template <typename T>
BasicTensor<T> concat(const std::vector<BasicTensor<T>>& parts, size_t axis) {
  if (parts.empty()) throw ShapeError("concat: empty input list");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range");
  int64_t total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != s0.size()) throw ShapeError("concat: rank mismatch");
    for (size_t i = 0; i < s.size(); ++i)
      if (i != axis && s[i] != s0[i])
        throw ShapeError("concat: shape mismatch " + shape_str(s) + " vs " + shape_str(s0));
    total += s[axis];
  }
  Shape os = s0;
  os[axis] = total;
  int64_t inner = 1;
  for (size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  int64_t outer = 1;
  for (size_t i = 0; i < axis; ++i) outer *= s0[i];

  Storage<T> out(os);
  std::vector<int64_t> ext(parts.size());
  for (size_t k = 0; k < parts.size(); ++k) ext[k] = parts[k].dim(axis);
  const int64_t out_block = total * inner;
  int64_t off = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const auto dp = parts[k].data();
    const int64_t blk = ext[k] * inner;
    for (int64_t o = 0; o < outer; ++o)
      std::copy(dp.begin() + o * blk, dp.begin() + (o + 1) * blk,
                out.data.begin() + o * out_block + off);
    off += blk;
  }
  return BasicTensor<T>::make_op(
      std::move(out), parts,
      [outer, inner, ext, out_block](detail::Node<T>& self) {
        int64_t off = 0;
        for (size_t k = 0; k < self.parents.size(); ++k) {
          const int64_t blk = ext[k] * inner;
          if (self.parents[k]->requires_grad) {
            auto& g = self.parents[k]->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
              const T* src = self.grad.data.data() + o * out_block + off;
              T* dst = g.data.data() + o * blk;
              for (int64_t i = 0; i < blk; ++i) dst[i] += src[i];
            }
          }
          off += blk;
        }
      },
      "concat");
}

// Replicates a tensor n times along a new leading axis.
template <typename T>
BasicTensor<T> broadcast0(const BasicTensor<T>& a, int64_t n) {
  if (n <= 0) throw ShapeError("broadcast0: non-positive count");
  Shape os;
  os.reserve(a.rank() + 1);
  os.push_back(n);
  for (int64_t e : a.shape()) os.push_back(e);
  Storage<T> out(os);
  const int64_t block = a.numel();
  const auto da = a.data();
  for (int64_t i = 0; i < n; ++i)
    std::copy(da.begin(), da.end(), out.data.begin() + i * block);
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [n, block](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t i = 0; i < n; ++i) {
          const T* src = self.grad.data.data() + i * block;
          for (int64_t j = 0; j < block; ++j) g.data[j] += src[j];
        }
      },
      "broadcast0");
}

// ---------------------------------------------------------------------------
// set-axis reductions (axis 0 dropped from the result)
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> reduce_max0(const BasicTensor<T>& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw ShapeError("reduce_max0: rank must be >= 2");
  const int64_t n = s[0], block = a.numel() / n;
  Storage<T> out(Shape(s.begin() + 1, s.end()));
  auto arg = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(block));
  const auto da = a.data();
  for (int64_t j = 0; j < block; ++j) {
    T best = da[j];
    int32_t bi = 0;
    for (int64_t i = 1; i < n; ++i) {
      T v = da[i * block + j];
      if (v > best) {  // strict: ties keep the first-encountered element
        best = v;
        bi = static_cast<int32_t>(i);
      }
    }
    out.data[j] = best;
    (*arg)[j] = bi;
  }
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [arg, block](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t j = 0; j < block; ++j)
          g.data[static_cast<int64_t>((*arg)[j]) * block + j] += self.grad.data[j];
      },
      "reduce_max0");
}

template <typename T>
BasicTensor<T> reduce_mean0(const BasicTensor<T>& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw ShapeError("reduce_mean0: rank must be >= 2");
  const int64_t n = s[0], block = a.numel() / n;
  Storage<T> out(Shape(s.begin() + 1, s.end()));
  const auto da = a.data();
  std::vector<double> scratch(static_cast<size_t>(n));
  for (int64_t j = 0; j < block; ++j) {
    scratch.resize(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) scratch[static_cast<size_t>(i)] = double(da[i * block + j]);
    out.data[j] = static_cast<T>(detail::canonical_mean(scratch));
  }
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [n, block](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const T inv = T(1) / static_cast<T>(n);
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < block; ++j) g.data[i * block + j] += self.grad.data[j] * inv;
      },
      "reduce_mean0");
}

template <typename T>
BasicTensor<T> reduce_median0(const BasicTensor<T>& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw ShapeError("reduce_median0: rank must be >= 2");
  const int64_t n = s[0], block = a.numel() / n;
  Storage<T> out(Shape(s.begin() + 1, s.end()));
  // Two source indices per position; equal when n is odd.
  auto idx = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(2 * block));
  const auto da = a.data();
  std::vector<std::pair<T, int32_t>> order(static_cast<size_t>(n));
  for (int64_t j = 0; j < block; ++j) {
    for (int64_t i = 0; i < n; ++i)
      order[static_cast<size_t>(i)] = {da[i * block + j], static_cast<int32_t>(i)};
    std::sort(order.begin(), order.end());
    if (n & 1) {
      auto [v, i] = order[static_cast<size_t>(n / 2)];
      out.data[j] = v;
      (*idx)[2 * j] = i;
      (*idx)[2 * j + 1] = i;
    } else {
      auto [v1, i1] = order[static_cast<size_t>(n / 2 - 1)];
      auto [v2, i2] = order[static_cast<size_t>(n / 2)];
      out.data[j] = (v1 + v2) / T(2);
      (*idx)[2 * j] = i1;
      (*idx)[2 * j + 1] = i2;
    }
  }
  const bool odd = (n & 1) != 0;
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [idx, block, odd](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t j = 0; j < block; ++j) {
          T gv = self.grad.data[j];
          if (odd) {
            g.data[static_cast<int64_t>((*idx)[2 * j]) * block + j] += gv;
          } else {
            g.data[static_cast<int64_t>((*idx)[2 * j]) * block + j] += gv / T(2);
            g.data[static_cast<int64_t>((*idx)[2 * j + 1]) * block + j] += gv / T(2);
          }
        }
      },
      "reduce_median0");
}

// ---------------------------------------------------------------------------
// full reductions
// ---------------------------------------------------------------------------

template <typename T>
BasicTensor<T> sum_all(const BasicTensor<T>& a) {
  double acc = 0;
  for (T v : a.data()) acc += double(v);
  Storage<T> out(Shape{1});
  out.data[0] = static_cast<T>(acc);
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const T gv = self.grad.data[0];
        for (auto& x : g.data) x += gv;
      },
      "sum_all");
}

template <typename T>
BasicTensor<T> mean_all(const BasicTensor<T>& a) {
  double acc = 0;
  for (T v : a.data()) acc += double(v);
  Storage<T> out(Shape{1});
  const int64_t n = a.numel();
  out.data[0] = static_cast<T>(acc / double(n));
  return BasicTensor<T>::make_op(
      std::move(out), {a},
      [n](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        const T gv = self.grad.data[0] / static_cast<T>(n);
        for (auto& x : g.data) x += gv;
      },
      "mean_all");
}

// ---------------------------------------------------------------------------
// conv / pool / affine
// ---------------------------------------------------------------------------

// Cross-correlation with symmetric zero padding; stride 1. Defaults to
// "same" padding for odd kernels when ph/pw are negative.
template <typename T>
BasicTensor<T> conv2d(const BasicTensor<T>& input, const BasicTensor<T>& kernel, int64_t ph = -1,
                      int64_t pw = -1) {
  if (input.rank() != 4 || kernel.rank() != 4)
    throw ShapeError("conv2d: need input [n,c,h,w] and kernel [co,ci,kh,kw]");
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  const int64_t n = is[0], cin = is[1], h = is[2], w = is[3];
  const int64_t cout = ks[0], kh = ks[2], kw = ks[3];
  if (ks[1] != cin)
    throw ShapeError("conv2d: channel mismatch, input has " + std::to_string(cin) +
                     ", kernel expects " + std::to_string(ks[1]));
  if (kh % 2 == 0 || kw % 2 == 0) throw ShapeError("conv2d: kernel extents must be odd");
  if (ph < 0) ph = (kh - 1) / 2;
  if (pw < 0) pw = (kw - 1) / 2;
  const int64_t oh = h + 2 * ph - kh + 1, ow = w + 2 * pw - kw + 1;
  if (oh <= 0 || ow <= 0) throw ShapeError("conv2d: empty output for input " + shape_str(is));

  Storage<T> out(Shape{n, cout, oh, ow});
  detail::conv2d_raw(input.storage(), kernel.storage(), ph, pw, out);

  return BasicTensor<T>::make_op(
      std::move(out), {input, kernel},
      [ph, pw](detail::Node<T>& self) {
        auto& in_node = *self.parents[0];
        auto& k_node = *self.parents[1];
        const Shape& is = in_node.value.shape;
        const Shape& ks = k_node.value.shape;
        const int64_t n = is[0], cin = is[1], h = is[2], w = is[3];
        const int64_t cout = ks[0], kh = ks[2], kw = ks[3];
        const Shape& os = self.value.shape;
        const int64_t oh = os[2], ow = os[3], opix = oh * ow;
        const int64_t K = cin * kh * kw;

        if (k_node.requires_grad) {
          auto& gk = k_node.ensure_grad();
          int nthreads = 1;
#ifdef _OPENMP
#pragma omp parallel
          {
#pragma omp single
            nthreads = omp_get_num_threads();
          }
#endif
          std::vector<std::vector<T>> partial(
              static_cast<size_t>(nthreads), std::vector<T>(static_cast<size_t>(cout * K), T(0)));
#pragma omp parallel for schedule(static)
          for (int64_t f = 0; f < n; ++f) {
            int tid = 0;
#ifdef _OPENMP
            tid = omp_get_thread_num();
#endif
            static thread_local std::vector<T> cols;
            cols.resize(static_cast<size_t>(K * opix));
            detail::im2col(in_node.value.data.data() + f * cin * h * w, cin, h, w, kh, kw, ph, pw,
                           oh, ow, cols.data());
            detail::MatMap<T>(partial[static_cast<size_t>(tid)].data(), cout, K).noalias() +=
                detail::ConstMatMap<T>(self.grad.data.data() + f * cout * opix, cout, opix) *
                detail::ConstMatMap<T>(cols.data(), K, opix).transpose();
          }
          // fixed-order reduction keeps results reproducible for a given thread count
          for (const auto& p : partial)
            for (int64_t i = 0; i < cout * K; ++i) gk.data[i] += p[i];
        }

        if (in_node.requires_grad) {
          // grad wrt input is a correlation of the padded output-grad with the
          // channel-swapped, spatially flipped kernel
          Storage<T> flipped(Shape{cin, cout, kh, kw});
          const T* Wd = k_node.value.data.data();
          for (int64_t co = 0; co < cout; ++co)
            for (int64_t ci = 0; ci < cin; ++ci)
              for (int64_t dy = 0; dy < kh; ++dy)
                for (int64_t dx = 0; dx < kw; ++dx)
                  flipped.data[((ci * cout + co) * kh + (kh - 1 - dy)) * kw + (kw - 1 - dx)] =
                      Wd[((co * cin + ci) * kh + dy) * kw + dx];
          Storage<T> gin(is);
          detail::conv2d_raw(self.grad, flipped, kh - 1 - ph, kw - 1 - pw, gin);
          auto& g = in_node.ensure_grad();
          for (size_t i = 0; i < g.data.size(); ++i) g.data[i] += gin.data[i];
        }
      },
      "conv2d");
}

// 2x2 max pooling, stride 2. Gradient goes to the first-encountered maximal
// cell of each window in row-major order.
template <typename T>
BasicTensor<T> spatial_max_pool(const BasicTensor<T>& input) {
  if (input.rank() != 4) throw ShapeError("spatial_max_pool: need [n,c,h,w]");
  const Shape& s = input.shape();
  const int64_t n = s[0], c = s[1], h = s[2], w = s[3];
  if (h % 2 != 0 || w % 2 != 0)
    throw ShapeError("spatial_max_pool: extents must be divisible by 2, got " + shape_str(s));
  const int64_t oh = h / 2, ow = w / 2;
  Storage<T> out(Shape{n, c, oh, ow});
  auto arg = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(out.numel()));
  const auto da = input.data();
  for (int64_t m = 0; m < n * c; ++m) {
    const T* plane = da.data() + m * h * w;
    T* oplane = out.data.data() + m * oh * ow;
    int32_t* aplane = arg->data() + m * oh * ow;
    for (int64_t y = 0; y < oh; ++y) {
      for (int64_t x = 0; x < ow; ++x) {
        const int64_t base = 2 * y * w + 2 * x;
        T best = plane[base];
        int32_t bi = 0;
        const int64_t cand[3] = {base + 1, base + w, base + w + 1};
        for (int k = 0; k < 3; ++k)
          if (plane[cand[k]] > best) {
            best = plane[cand[k]];
            bi = static_cast<int32_t>(k + 1);
          }
        oplane[y * ow + x] = best;
        aplane[y * ow + x] = bi;
      }
    }
  }
  return BasicTensor<T>::make_op(
      std::move(out), {input},
      [arg, n, c, h, w, oh, ow](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t m = 0; m < n * c; ++m) {
          T* gplane = g.data.data() + m * h * w;
          const T* goplane = self.grad.data.data() + m * oh * ow;
          const int32_t* aplane = arg->data() + m * oh * ow;
          for (int64_t y = 0; y < oh; ++y)
            for (int64_t x = 0; x < ow; ++x) {
              const int64_t base = 2 * y * w + 2 * x;
              const int32_t k = aplane[y * ow + x];
              const int64_t off = (k == 0) ? 0 : (k == 1 ? 1 : (k == 2 ? w : w + 1));
              gplane[base + off] += goplane[y * ow + x];
            }
        }
      },
      "spatial_max_pool");
}

// Matrix product over the last axis: [..., d_in] x [d_in, d_out]. No bias.
template <typename T>
BasicTensor<T> affine(const BasicTensor<T>& input, const BasicTensor<T>& weight) {
  if (weight.rank() != 2) throw ShapeError("affine: weight must be [d_in, d_out]");
  if (input.rank() < 1) throw ShapeError("affine: input rank must be >= 1");
  const int64_t d_in = weight.dim(0), d_out = weight.dim(1);
  if (input.shape().back() != d_in)
    throw ShapeError("affine: input last extent " + std::to_string(input.shape().back()) +
                     " != weight d_in " + std::to_string(d_in));
  const int64_t rows = input.numel() / d_in;
  Shape os = input.shape();
  os.back() = d_out;
  Storage<T> out(os);
  detail::MatMap<T>(out.data.data(), rows, d_out).noalias() =
      detail::ConstMatMap<T>(input.data().data(), rows, d_in) *
      detail::ConstMatMap<T>(weight.data().data(), d_in, d_out);
  return BasicTensor<T>::make_op(
      std::move(out), {input, weight},
      [rows, d_in, d_out](detail::Node<T>& self) {
        auto& in_node = *self.parents[0];
        auto& w_node = *self.parents[1];
        detail::ConstMatMap<T> go(self.grad.data.data(), rows, d_out);
        if (in_node.requires_grad) {
          auto& g = in_node.ensure_grad();
          detail::MatMap<T>(g.data.data(), rows, d_in).noalias() +=
              go * detail::ConstMatMap<T>(w_node.value.data.data(), d_in, d_out).transpose();
        }
        if (w_node.requires_grad) {
          auto& g = w_node.ensure_grad();
          detail::MatMap<T>(g.data.data(), d_in, d_out).noalias() +=
              detail::ConstMatMap<T>(in_node.value.data.data(), rows, d_in).transpose() * go;
        }
      },
      "affine");
}

// ---------------------------------------------------------------------------
// horizontal pyramid helpers
// ---------------------------------------------------------------------------

inline int64_t pyramid_strip_count(int64_t scales) { return (int64_t(1) << scales) - 1; }

// Splits height into 2^(s-1) strips per scale s and pools each strip with
// global-max + global-average over (height, width): [b,c,h,w] -> [b, strips, c].
template <typename T>
BasicTensor<T> strip_pool(const BasicTensor<T>& input, int64_t scales) {
  if (input.rank() != 4) throw ShapeError("strip_pool: need [b,c,h,w]");
  if (scales < 1) throw ShapeError("strip_pool: scales must be >= 1");
  const Shape& s = input.shape();
  const int64_t b = s[0], c = s[1], h = s[2], w = s[3];
  const int64_t finest = int64_t(1) << (scales - 1);
  if (h % finest != 0)
    throw ShapeError("strip_pool: height " + std::to_string(h) + " not divisible by " +
                     std::to_string(finest));
  const int64_t strips = pyramid_strip_count(scales);
  Storage<T> out(Shape{b, strips, c});
  auto arg = std::make_shared<std::vector<int32_t>>(static_cast<size_t>(out.numel()));

  // strip -> (row0, rows) table, scale-major then strip-index order
  std::vector<std::pair<int64_t, int64_t>> ranges;
  ranges.reserve(static_cast<size_t>(strips));
  for (int64_t sc = 1; sc <= scales; ++sc) {
    const int64_t parts = int64_t(1) << (sc - 1), rows = h / parts;
    for (int64_t t = 0; t < parts; ++t) ranges.emplace_back(t * rows, rows);
  }

  const auto da = input.data();
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t st = 0; st < strips; ++st) {
      const auto [row0, rows] = ranges[static_cast<size_t>(st)];
      for (int64_t ch = 0; ch < c; ++ch) {
        const T* plane = da.data() + (bi * c + ch) * h * w + row0 * w;
        T best = plane[0];
        int32_t bix = 0;
        double acc = 0;
        for (int64_t i = 0; i < rows * w; ++i) {
          const T v = plane[i];
          acc += double(v);
          if (v > best) {
            best = v;
            bix = static_cast<int32_t>(i);
          }
        }
        const int64_t o = (bi * strips + st) * c + ch;
        out.data[o] = best + static_cast<T>(acc / double(rows * w));
        (*arg)[o] = bix;
      }
    }
  }
  return BasicTensor<T>::make_op(
      std::move(out), {input},
      [arg, ranges, b, c, h, w, strips](detail::Node<T>& self) {
        auto& g = self.parents[0]->ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t st = 0; st < strips; ++st) {
            const auto [row0, rows] = ranges[static_cast<size_t>(st)];
            const T inv = T(1) / static_cast<T>(rows * w);
            for (int64_t ch = 0; ch < c; ++ch) {
              const int64_t o = (bi * strips + st) * c + ch;
              const T gv = self.grad.data[o];
              T* plane = g.data.data() + (bi * c + ch) * h * w + row0 * w;
              plane[(*arg)[o]] += gv;
              const T gavg = gv * inv;
              for (int64_t i = 0; i < rows * w; ++i) plane[i] += gavg;
            }
          }
      },
      "strip_pool");
}

// Applies an independent affine map per strip: [b,t,c] x [t,c,d] -> [b,t,d].
template <typename T>
BasicTensor<T> strip_affine(const BasicTensor<T>& input, const BasicTensor<T>& weights) {
  if (input.rank() != 3 || weights.rank() != 3)
    throw ShapeError("strip_affine: need input [b,t,c] and weights [t,c,d]");
  const int64_t b = input.dim(0), t = input.dim(1), c = input.dim(2);
  if (weights.dim(0) != t || weights.dim(1) != c)
    throw ShapeError("strip_affine: weights " + shape_str(weights.shape()) +
                     " do not match input " + shape_str(input.shape()));
  const int64_t d = weights.dim(2);
  Storage<T> out(Shape{b, t, d});
  for (int64_t st = 0; st < t; ++st) {
    detail::StridedMap<T>(out.data.data() + st * d, b, d, Eigen::OuterStride<>(t * d)).noalias() =
        detail::ConstStridedMap<T>(input.data().data() + st * c, b, c,
                                   Eigen::OuterStride<>(t * c)) *
        detail::ConstMatMap<T>(weights.data().data() + st * c * d, c, d);
  }
  return BasicTensor<T>::make_op(
      std::move(out), {input, weights},
      [b, t, c, d](detail::Node<T>& self) {
        auto& in_node = *self.parents[0];
        auto& w_node = *self.parents[1];
        for (int64_t st = 0; st < t; ++st) {
          detail::ConstStridedMap<T> go(self.grad.data.data() + st * d, b, d,
                                        Eigen::OuterStride<>(t * d));
          if (in_node.requires_grad) {
            auto& g = in_node.ensure_grad();
            detail::StridedMap<T>(g.data.data() + st * c, b, c, Eigen::OuterStride<>(t * c))
                .noalias() += go * detail::ConstMatMap<T>(w_node.value.data.data() + st * c * d, c,
                                                          d)
                                       .transpose();
          }
          if (w_node.requires_grad) {
            auto& g = w_node.ensure_grad();
            detail::MatMap<T>(g.data.data() + st * c * d, c, d).noalias() +=
                detail::ConstStridedMap<T>(in_node.value.data.data() + st * c, b, c,
                                           Eigen::OuterStride<>(t * c))
                    .transpose() *
                go;
          }
        }
      },
      "strip_affine");
}

}  // namespace gaitset

#endif  // GAITSET_OPS_HPP_
