// SPDX-License-Identifier: Apache-2.0
#include "urm/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace urm::ops {
namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void require_same_precision(const Tensor& a, const Tensor& b, const char* op) {
  if (a.precision() != b.precision())
    throw ShapeError(std::string(op) + ": operands have mixed precision (" +
                     precision_name(a.precision()) + " vs " +
                     precision_name(b.precision()) + ")");
}

bool want_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs)
    if (t->grad_path()) return true;
  return false;
}

void record(Tensor& out, Tape::BackwardFn fn) {
  out.mark_from_op();
  Tape::active()->record(out, std::move(fn));
}

Shape broadcast_shapes(const Shape& a, const Shape& b, const char* op) {
  const std::size_t r = std::max(a.size(), b.size());
  Shape out(r);
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t da = i < r - a.size() ? 1 : a[i - (r - a.size())];
    const std::size_t db = i < r - b.size() ? 1 : b[i - (r - b.size())];
    if (da != db && da != 1 && db != 1)
      throw ShapeError(std::string(op) + ": shapes " + shape_str(a) + " and " +
                       shape_str(b) + " are not broadcastable");
    out[i] = std::max(da, db);
  }
  return out;
}

/// Element strides of `in` aligned against `out`, zero on broadcast dims.
std::vector<std::size_t> bcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t s = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const std::size_t dim = in[in.size() - 1 - k];
    strides[out.size() - 1 - k] = dim == 1 ? 0 : s;
    s *= dim;
  }
  return strides;
}

/// Walks every flat index of `out_shape`, handing the aligned offsets into two
/// broadcast inputs to `fn(out_i, a_off, b_off)`.
template <class Fn>
void for_each_broadcast(const Shape& out_shape, const Shape& a, const Shape& b,
                        Fn&& fn) {
  const std::size_t n = shape_numel(out_shape);
  const auto sa = bcast_strides(a, out_shape);
  const auto sb = bcast_strides(b, out_shape);
  const std::size_t r = out_shape.size();
  std::vector<std::size_t> idx(r, 0);
  std::size_t ao = 0, bo = 0;
  for (std::size_t i = 0; i < n; ++i) {
    fn(i, ao, bo);
    for (std::size_t d = r; d-- > 0;) {
      ++idx[d];
      ao += sa[d];
      bo += sb[d];
      if (idx[d] < out_shape[d]) break;
      ao -= sa[d] * out_shape[d];
      bo -= sb[d] * out_shape[d];
      idx[d] = 0;
    }
  }
}

// c[M,P] += a[M,K] * b[K,P]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t M, std::size_t K,
             std::size_t P) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* ai = a + i * K;
    T* ci = c + i * P;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = ai[k];
      const T* bk = b + k * P;
      for (std::size_t j = 0; j < P; ++j) ci[j] += av * bk[j];
    }
  }
}

// c[M,P] += a[M,K] * bt[P,K]^T
template <class T>
void gemm_nt(const T* a, const T* bt, T* c, std::size_t M, std::size_t K,
             std::size_t P) {
  for (std::size_t i = 0; i < M; ++i) {
    const T* ai = a + i * K;
    T* ci = c + i * P;
    for (std::size_t j = 0; j < P; ++j) {
      const T* bj = bt + j * K;
      T acc{};
      for (std::size_t k = 0; k < K; ++k) acc += ai[k] * bj[k];
      ci[j] += acc;
    }
  }
}

// c[M,P] += at[K,M]^T * b[K,P]
template <class T>
void gemm_tn(const T* at, const T* b, T* c, std::size_t M, std::size_t K,
             std::size_t P) {
  for (std::size_t k = 0; k < K; ++k) {
    const T* ak = at + k * M;
    const T* bk = b + k * P;
    for (std::size_t i = 0; i < M; ++i) {
      const T av = ak[i];
      T* ci = c + i * P;
      for (std::size_t j = 0; j < P; ++j) ci[j] += av * bk[j];
    }
  }
}

struct AxisSplit {
  std::size_t outer, n, inner;
};

AxisSplit split_axis(const Shape& shape, std::size_t axis, const char* op) {
  if (axis >= shape.size())
    throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                     " out of range for shape " + shape_str(shape));
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

/// Map a flat batch index over `batch` to offsets (in matrix units) into two
/// broadcast operands whose aligned strides are sa/sb.
void batch_offsets(std::size_t flat, const Shape& batch,
                   const std::vector<std::size_t>& sa,
                   const std::vector<std::size_t>& sb, std::size_t& ao,
                   std::size_t& bo) {
  ao = bo = 0;
  for (std::size_t d = batch.size(); d-- > 0;) {
    const std::size_t q = flat % batch[d];
    flat /= batch[d];
    ao += q * sa[d];
    bo += q * sb[d];
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_precision(a, b, "matmul");
  if (a.rank() < 2 || b.rank() < 2)
    throw ShapeError("matmul: operands must have rank >= 2, got " +
                     shape_str(a.shape()) + " and " + shape_str(b.shape()));
  const std::size_t M = a.shape()[a.rank() - 2];
  const std::size_t K = a.shape()[a.rank() - 1];
  const std::size_t K2 = b.shape()[b.rank() - 2];
  const std::size_t P = b.shape()[b.rank() - 1];
  if (K != K2)
    throw ShapeError("matmul: inner dimensions disagree, " +
                     shape_str(a.shape()) + " x " + shape_str(b.shape()));

  const Shape batch_a(a.shape().begin(), a.shape().end() - 2);
  const Shape batch_b(b.shape().begin(), b.shape().end() - 2);
  const Shape batch = broadcast_shapes(batch_a, batch_b, "matmul");
  Shape out_shape = batch;
  out_shape.push_back(M);
  out_shape.push_back(P);

  Tensor out = Tensor::zeros(out_shape, a.precision());
  const std::size_t nb = shape_numel(batch);
  const auto sa = bcast_strides(batch_a, batch);
  const auto sb = bcast_strides(batch_b, batch);

  dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.cdata<T>();
    const T* pb = b.cdata<T>();
    T* pc = out.mutable_data<T>();
    for (std::size_t i = 0; i < nb; ++i) {
      std::size_t ao, bo;
      batch_offsets(i, batch, sa, sb, ao, bo);
      gemm_nn(pa + ao * M * K, pb + bo * K * P, pc + i * M * P, M, K, P);
    }
  });

  if (want_grad({&a, &b})) {
    record(out, [a, b, out, M, K, P, nb, batch, sa, sb](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      dispatch(a.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        if (a.grad_path()) {
          Storage& da = grad_slot(g, a);
          const T* pb = b.cdata<T>();
          for (std::size_t i = 0; i < nb; ++i) {
            std::size_t ao, bo;
            batch_offsets(i, batch, sa, sb, ao, bo);
            gemm_nt(pg + i * M * P, pb + bo * K * P, da.data<T>() + ao * M * K,
                    M, P, K);
          }
        }
        if (b.grad_path()) {
          Storage& db = grad_slot(g, b);
          const T* pa = a.cdata<T>();
          for (std::size_t i = 0; i < nb; ++i) {
            std::size_t ao, bo;
            batch_offsets(i, batch, sa, sb, ao, bo);
            // dB[K,P] = A^T G: gemm_tn with its output rows = K, summing M.
            gemm_tn(pa + ao * M * K, pg + i * M * P, db.data<T>() + bo * K * P,
                    K, M, P);
          }
        }
      });
    });
  }
  return out;
}

namespace {
template <class T>
void transpose_copy(const T* src, T* dst, std::size_t nb, std::size_t R,
                    std::size_t C) {
  for (std::size_t b = 0; b < nb; ++b) {
    const T* s = src + b * R * C;
    T* d = dst + b * R * C;
    for (std::size_t i = 0; i < R; ++i)
      for (std::size_t j = 0; j < C; ++j) d[j * R + i] = s[i * C + j];
  }
}
}  // namespace

Tensor transpose(const Tensor& x) {
  if (x.rank() < 2)
    throw ShapeError("transpose: rank >= 2 required, got " +
                     shape_str(x.shape()));
  Shape out_shape = x.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  const std::size_t R = x.shape()[x.rank() - 2];
  const std::size_t C = x.shape()[x.rank() - 1];
  const std::size_t nb = x.numel() / (R * C);

  Tensor out = Tensor::zeros(out_shape, x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    transpose_copy(x.cdata<T>(), out.mutable_data<T>(), nb, R, C);
  });

  if (want_grad({&x})) {
    record(out, [x, out, nb, R, C](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dx = grad_slot(g, x);
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        // d/dx of a transpose is the transpose of the output gradient;
        // accumulate element-by-element to respect prior contents.
        const T* pg = go->data<T>();
        T* pd = dx.data<T>();
        for (std::size_t b = 0; b < nb; ++b)
          for (std::size_t i = 0; i < R; ++i)
            for (std::size_t j = 0; j < C; ++j)
              pd[b * R * C + i * C + j] += pg[b * R * C + j * R + i];
      });
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " +
                     shape_str(shape));
  Tensor out = Tensor::zeros(shape, x.precision());
  out.mutable_storage() = x.storage();

  if (want_grad({&x})) {
    record(out, [x, out](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dx = grad_slot(g, x);
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        T* pd = dx.data<T>();
        for (std::size_t i = 0; i < x.numel(); ++i) pd[i] += pg[i];
      });
    });
  }
  return out;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "softmax");
  Tensor out = Tensor::zeros(x.shape(), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.cdata<T>();
    T* py = out.mutable_data<T>();
    for (std::size_t o = 0; o < s.outer; ++o) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const std::size_t base = o * s.n * s.inner + i;
        T mx = px[base];
        for (std::size_t k = 1; k < s.n; ++k)
          mx = std::max(mx, px[base + k * s.inner]);
        T denom{};
        for (std::size_t k = 0; k < s.n; ++k) {
          const T e = std::exp(px[base + k * s.inner] - mx);
          py[base + k * s.inner] = e;
          denom += e;
        }
        for (std::size_t k = 0; k < s.n; ++k) py[base + k * s.inner] /= denom;
      }
    }
  });

  if (want_grad({&x})) {
    record(out, [x, out, s](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dx = grad_slot(g, x);
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        const T* py = out.cdata<T>();
        T* pd = dx.data<T>();
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            const std::size_t base = o * s.n * s.inner + i;
            T dot{};
            for (std::size_t k = 0; k < s.n; ++k)
              dot += pg[base + k * s.inner] * py[base + k * s.inner];
            for (std::size_t k = 0; k < s.n; ++k) {
              const std::size_t e = base + k * s.inner;
              pd[e] += py[e] * (pg[e] - dot);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  require_same_precision(x, gamma, "layer_norm");
  require_same_precision(x, beta, "layer_norm");
  if (x.rank() < 1)
    throw ShapeError("layer_norm: input must have rank >= 1");
  const std::size_t C = x.shape().back();
  if (gamma.numel() != C || beta.numel() != C)
    throw ShapeError("layer_norm: gamma/beta size must equal last dim " +
                     std::to_string(C));
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
  const std::size_t rows = x.numel() / C;

  Tensor out = Tensor::zeros(x.shape(), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.cdata<T>();
    const T* pgm = gamma.cdata<T>();
    const T* pbt = beta.cdata<T>();
    T* py = out.mutable_data<T>();
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = px + r * C;
      T* yrow = py + r * C;
      T mu{};
      for (std::size_t c = 0; c < C; ++c) mu += row[c];
      mu /= static_cast<T>(C);
      T var{};
      for (std::size_t c = 0; c < C; ++c) {
        const T d = row[c] - mu;
        var += d * d;
      }
      var /= static_cast<T>(C);
      const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
      for (std::size_t c = 0; c < C; ++c)
        yrow[c] = pgm[c] * (row[c] - mu) * inv + pbt[c];
    }
  });

  if (want_grad({&x, &gamma, &beta})) {
    record(out, [x, gamma, beta, out, eps, rows, C](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* px = x.cdata<T>();
        const T* pgm = gamma.cdata<T>();
        const T* pg = go->data<T>();
        T* pdx = x.grad_path() ? grad_slot(g, x).data<T>() : nullptr;
        T* pdgm = gamma.grad_path() ? grad_slot(g, gamma).data<T>() : nullptr;
        T* pdbt = beta.grad_path() ? grad_slot(g, beta).data<T>() : nullptr;
        std::vector<T> xhat(C);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* row = px + r * C;
          const T* grow = pg + r * C;
          T mu{};
          for (std::size_t c = 0; c < C; ++c) mu += row[c];
          mu /= static_cast<T>(C);
          T var{};
          for (std::size_t c = 0; c < C; ++c) {
            const T d = row[c] - mu;
            var += d * d;
          }
          var /= static_cast<T>(C);
          const T inv = T(1) / std::sqrt(var + static_cast<T>(eps));
          for (std::size_t c = 0; c < C; ++c) xhat[c] = (row[c] - mu) * inv;
          if (pdgm)
            for (std::size_t c = 0; c < C; ++c) pdgm[c] += grow[c] * xhat[c];
          if (pdbt)
            for (std::size_t c = 0; c < C; ++c) pdbt[c] += grow[c];
          if (pdx) {
            T mean_dxhat{}, mean_dxhat_xhat{};
            for (std::size_t c = 0; c < C; ++c) {
              const T dxh = grow[c] * pgm[c];
              mean_dxhat += dxh;
              mean_dxhat_xhat += dxh * xhat[c];
            }
            mean_dxhat /= static_cast<T>(C);
            mean_dxhat_xhat /= static_cast<T>(C);
            for (std::size_t c = 0; c < C; ++c) {
              const T dxh = grow[c] * pgm[c];
              pdx[r * C + c] +=
                  inv * (dxh - mean_dxhat - xhat[c] * mean_dxhat_xhat);
            }
          }
        }
      });
    });
  }
  return out;
}

Tensor unary(UnaryKind kind, const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape(), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.cdata<T>();
    T* py = out.mutable_data<T>();
    const std::size_t n = x.numel();
    switch (kind) {
      case UnaryKind::sigmoid:
        for (std::size_t i = 0; i < n; ++i)
          py[i] = T(1) / (T(1) + std::exp(-px[i]));
        break;
      case UnaryKind::tanh:
        for (std::size_t i = 0; i < n; ++i) py[i] = std::tanh(px[i]);
        break;
      case UnaryKind::gelu:
        for (std::size_t i = 0; i < n; ++i)
          py[i] = T(0.5) * px[i] *
                  (T(1) + std::erf(px[i] * static_cast<T>(kInvSqrt2)));
        break;
      case UnaryKind::negate:
        for (std::size_t i = 0; i < n; ++i) py[i] = -px[i];
        break;
    }
  });

  if (want_grad({&x})) {
    record(out, [kind, x, out](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dx = grad_slot(g, x);
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        const T* px = x.cdata<T>();
        const T* py = out.cdata<T>();
        T* pd = dx.data<T>();
        const std::size_t n = x.numel();
        switch (kind) {
          case UnaryKind::sigmoid:
            for (std::size_t i = 0; i < n; ++i)
              pd[i] += pg[i] * py[i] * (T(1) - py[i]);
            break;
          case UnaryKind::tanh:
            for (std::size_t i = 0; i < n; ++i)
              pd[i] += pg[i] * (T(1) - py[i] * py[i]);
            break;
          case UnaryKind::gelu:
            for (std::size_t i = 0; i < n; ++i) {
              const T cdf = T(0.5) * (T(1) + std::erf(px[i] *
                                                      static_cast<T>(kInvSqrt2)));
              const T pdf = static_cast<T>(kInvSqrt2Pi) *
                            std::exp(T(-0.5) * px[i] * px[i]);
              pd[i] += pg[i] * (cdf + px[i] * pdf);
            }
            break;
          case UnaryKind::negate:
            for (std::size_t i = 0; i < n; ++i) pd[i] -= pg[i];
            break;
        }
      });
    });
  }
  return out;
}

Tensor binary(BinaryKind kind, const Tensor& a, const Tensor& b) {
  require_same_precision(a, b, "binary");
  const Shape out_shape = broadcast_shapes(a.shape(), b.shape(), "binary");
  Tensor out = Tensor::zeros(out_shape, a.precision());
  const bool same = a.shape() == b.shape();

  dispatch(a.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* pa = a.cdata<T>();
    const T* pb = b.cdata<T>();
    T* pc = out.mutable_data<T>();
    auto apply = [kind](T x, T y) {
      switch (kind) {
        case BinaryKind::add: return x + y;
        case BinaryKind::sub: return x - y;
        default: return x * y;
      }
    };
    if (same) {
      const std::size_t n = out.numel();
      for (std::size_t i = 0; i < n; ++i) pc[i] = apply(pa[i], pb[i]);
    } else {
      for_each_broadcast(out_shape, a.shape(), b.shape(),
                         [&](std::size_t i, std::size_t ao, std::size_t bo) {
                           pc[i] = apply(pa[ao], pb[bo]);
                         });
    }
  });

  if (want_grad({&a, &b})) {
    record(out, [kind, a, b, out, out_shape, same](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      dispatch(a.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        const T* pa = a.cdata<T>();
        const T* pb = b.cdata<T>();
        T* pda = a.grad_path() ? grad_slot(g, a).data<T>() : nullptr;
        T* pdb = b.grad_path() ? grad_slot(g, b).data<T>() : nullptr;
        auto accum = [&](std::size_t i, std::size_t ao, std::size_t bo) {
          switch (kind) {
            case BinaryKind::add:
              if (pda) pda[ao] += pg[i];
              if (pdb) pdb[bo] += pg[i];
              break;
            case BinaryKind::sub:
              if (pda) pda[ao] += pg[i];
              if (pdb) pdb[bo] -= pg[i];
              break;
            case BinaryKind::mul:
              if (pda) pda[ao] += pg[i] * pb[bo];
              if (pdb) pdb[bo] += pg[i] * pa[ao];
              break;
          }
        };
        if (same) {
          const std::size_t n = shape_numel(out_shape);
          for (std::size_t i = 0; i < n; ++i) accum(i, i, i);
        } else {
          for_each_broadcast(out_shape, a.shape(), b.shape(), accum);
        }
      });
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out = Tensor::zeros(x.shape(), x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.cdata<T>();
    T* py = out.mutable_data<T>();
    const T tc = static_cast<T>(c);
    for (std::size_t i = 0; i < x.numel(); ++i) py[i] = px[i] * tc;
  });
  if (want_grad({&x})) {
    record(out, [x, out, c](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dx = grad_slot(g, x);
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        T* pd = dx.data<T>();
        const T tc = static_cast<T>(c);
        for (std::size_t i = 0; i < x.numel(); ++i) pd[i] += pg[i] * tc;
      });
    });
  }
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no parts");
  const Shape& first = parts[0].shape();
  if (axis >= first.size())
    throw ShapeError("concat: axis " + std::to_string(axis) +
                     " out of range for rank " + std::to_string(first.size()));
  std::size_t axis_total = 0;
  for (const Tensor& p : parts) {
    require_same_precision(parts[0], p, "concat");
    if (p.rank() != first.size())
      throw ShapeError("concat: rank mismatch " + shape_str(p.shape()) +
                       " vs " + shape_str(first));
    for (std::size_t d = 0; d < first.size(); ++d)
      if (d != axis && p.shape()[d] != first[d])
        throw ShapeError("concat: non-axis dims disagree, " +
                         shape_str(p.shape()) + " vs " + shape_str(first));
    axis_total += p.shape()[axis];
  }
  Shape out_shape = first;
  out_shape[axis] = axis_total;
  Tensor out = Tensor::zeros(out_shape, parts[0].precision());
  const AxisSplit s = split_axis(out_shape, axis, "concat");

  dispatch(out.precision(), [&](auto tag) {
    using T = decltype(tag);
    T* py = out.mutable_data<T>();
    std::size_t axis_at = 0;
    for (const Tensor& p : parts) {
      const T* pp = p.cdata<T>();
      const std::size_t pn = p.shape()[axis];
      for (std::size_t o = 0; o < s.outer; ++o) {
        const T* src = pp + o * pn * s.inner;
        T* dst = py + (o * s.n + axis_at) * s.inner;
        std::copy(src, src + pn * s.inner, dst);
      }
      axis_at += pn;
    }
  });

  bool any_grad = false;
  for (const Tensor& p : parts)
    if (p.grad_path()) any_grad = true;
  if (Tape::active() && any_grad) {
    record(out, [parts, out, s, axis](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      dispatch(out.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        std::size_t axis_at = 0;
        for (const Tensor& p : parts) {
          const std::size_t pn = p.shape()[axis];
          if (p.grad_path()) {
            T* pd = grad_slot(g, p).data<T>();
            for (std::size_t o = 0; o < s.outer; ++o) {
              const T* src = pg + (o * s.n + axis_at) * s.inner;
              T* dst = pd + o * pn * s.inner;
              for (std::size_t k = 0; k < pn * s.inner; ++k) dst[k] += src[k];
            }
          }
          axis_at += pn;
        }
      });
    });
  }
  return out;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t len) {
  const AxisSplit s = split_axis(x.shape(), axis, "slice");
  if (start + len > s.n)
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") exceeds axis size " +
                     std::to_string(s.n));
  Shape out_shape = x.shape();
  out_shape[axis] = len;
  Tensor out = Tensor::zeros(out_shape, x.precision());

  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.cdata<T>();
    T* py = out.mutable_data<T>();
    for (std::size_t o = 0; o < s.outer; ++o) {
      const T* src = px + (o * s.n + start) * s.inner;
      std::copy(src, src + len * s.inner, py + o * len * s.inner);
    }
  });

  if (want_grad({&x})) {
    record(out, [x, out, s, start, len](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dx = grad_slot(g, x);
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        T* pd = dx.data<T>();
        for (std::size_t o = 0; o < s.outer; ++o) {
          T* dst = pd + (o * s.n + start) * s.inner;
          const T* src = pg + o * len * s.inner;
          for (std::size_t k = 0; k < len * s.inner; ++k) dst[k] += src[k];
        }
      });
    });
  }
  return out;
}

Tensor reduce_mean(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis(x.shape(), axis, "reduce_mean");
  Shape out_shape;
  for (std::size_t d = 0; d < x.rank(); ++d)
    if (d != axis) out_shape.push_back(x.shape()[d]);
  Tensor out = Tensor::zeros(out_shape, x.precision());

  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.cdata<T>();
    T* py = out.mutable_data<T>();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t i = 0; i < s.inner; ++i) {
        T acc{};
        for (std::size_t k = 0; k < s.n; ++k)
          acc += px[(o * s.n + k) * s.inner + i];
        py[o * s.inner + i] = acc / static_cast<T>(s.n);
      }
  });

  if (want_grad({&x})) {
    record(out, [x, out, s](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dx = grad_slot(g, x);
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        T* pd = dx.data<T>();
        const T inv = T(1) / static_cast<T>(s.n);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t i = 0; i < s.inner; ++i) {
            const T gv = pg[o * s.inner + i] * inv;
            for (std::size_t k = 0; k < s.n; ++k)
              pd[(o * s.n + k) * s.inner + i] += gv;
          }
      });
    });
  }
  return out;
}

Tensor sum(const Tensor& x) {
  Tensor out = Tensor::zeros({}, x.precision());
  dispatch(x.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* px = x.cdata<T>();
    T acc{};
    for (std::size_t i = 0; i < x.numel(); ++i) acc += px[i];
    out.mutable_data<T>()[0] = acc;
  });
  if (want_grad({&x})) {
    record(out, [x, out](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dx = grad_slot(g, x);
      dispatch(x.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T gv = go->data<T>()[0];
        T* pd = dx.data<T>();
        for (std::size_t i = 0; i < x.numel(); ++i) pd[i] += gv;
      });
    });
  }
  return out;
}

Tensor outer(const Tensor& u, const Tensor& w) {
  require_same_precision(u, w, "outer");
  if (u.rank() != 1 || w.rank() != 1)
    throw ShapeError("outer: rank-1 operands required, got " +
                     shape_str(u.shape()) + " and " + shape_str(w.shape()));
  if (u.numel() != w.numel())
    throw ShapeError("outer: length mismatch, " + shape_str(u.shape()) +
                     " vs " + shape_str(w.shape()));
  const std::size_t n = u.numel();
  Tensor out = Tensor::zeros({n, n}, u.precision());
  dispatch(u.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* pu = u.cdata<T>();
    const T* pw = w.cdata<T>();
    T* py = out.mutable_data<T>();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) py[i * n + j] = pu[i] * pw[j];
  });

  if (want_grad({&u, &w})) {
    record(out, [u, w, out, n](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      dispatch(u.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T* pg = go->data<T>();
        const T* pu = u.cdata<T>();
        const T* pw = w.cdata<T>();
        if (u.grad_path()) {
          T* pd = grad_slot(g, u).data<T>();
          for (std::size_t i = 0; i < n; ++i) {
            T acc{};
            for (std::size_t j = 0; j < n; ++j) acc += pg[i * n + j] * pw[j];
            pd[i] += acc;
          }
        }
        if (w.grad_path()) {
          T* pd = grad_slot(g, w).data<T>();
          for (std::size_t j = 0; j < n; ++j) {
            T acc{};
            for (std::size_t i = 0; i < n; ++i) acc += pg[i * n + j] * pu[i];
            pd[j] += acc;
          }
        }
      });
    });
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2)
    throw ShapeError("cross_entropy: logits must be (batch, classes), got " +
                     shape_str(logits.shape()));
  const std::size_t B = logits.shape()[0];
  const std::size_t K = logits.shape()[1];
  if (labels.size() != B)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(B));
  for (std::size_t b = 0; b < B; ++b)
    if (labels[b] < 0 || static_cast<std::size_t>(labels[b]) >= K)
      throw ContractError("cross_entropy: label " + std::to_string(labels[b]) +
                          " out of range [0, " + std::to_string(K) + ")");

  Tensor out = Tensor::zeros({}, logits.precision());
  dispatch(logits.precision(), [&](auto tag) {
    using T = decltype(tag);
    const T* pz = logits.cdata<T>();
    T acc{};
    for (std::size_t b = 0; b < B; ++b) {
      const T* row = pz + b * K;
      T mx = row[0];
      for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
      T denom{};
      for (std::size_t k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
      acc += mx + std::log(denom) - row[labels[b]];
    }
    out.mutable_data<T>()[0] = acc / static_cast<T>(B);
  });

  if (want_grad({&logits})) {
    std::vector<int> labels_copy(labels.begin(), labels.end());
    record(out, [logits, out, labels = std::move(labels_copy), B,
                 K](GradBuffers& g) {
      const Storage* go = grad_of(g, out);
      if (!go) return;
      Storage& dz = grad_slot(g, logits);
      dispatch(logits.precision(), [&](auto tag) {
        using T = decltype(tag);
        const T gv = go->data<T>()[0] / static_cast<T>(B);
        const T* pz = logits.cdata<T>();
        T* pd = dz.data<T>();
        for (std::size_t b = 0; b < B; ++b) {
          const T* row = pz + b * K;
          T mx = row[0];
          for (std::size_t k = 1; k < K; ++k) mx = std::max(mx, row[k]);
          T denom{};
          for (std::size_t k = 0; k < K; ++k) denom += std::exp(row[k] - mx);
          for (std::size_t k = 0; k < K; ++k) {
            const T p = std::exp(row[k] - mx) / denom;
            const T ind = k == static_cast<std::size_t>(labels[b]) ? T(1) : T(0);
            pd[b * K + k] += gv * (p - ind);
          }
        }
      });
    });
  }
  return out;
}

}  // namespace urm::ops
