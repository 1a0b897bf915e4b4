#include "thtd/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace thtd {

namespace {

template <typename T>
using NodeP = std::shared_ptr<detail::Node<T>>;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
bool wants_grad(const NodeP<T>& n) {
  return n && n->requires_grad;
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
}

int normalize_axis(int axis, std::size_t rank) {
  int r = static_cast<int>(rank);
  int a = axis < 0 ? axis + r : axis;
  if (a < 0 || a >= r)
    throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " + std::to_string(rank));
  return a;
}

template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(const Tensor<T>& x, Fwd fwd, Deriv deriv) {
  const auto& in = x.storage();
  std::vector<T> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
  NodeP<T> xn = x.node();
  return make_result<T>(x.shape(), std::move(out), {x}, [xn, deriv](detail::Node<T>& self) {
    auto& gx = xn->ensure_grad();
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += self.grad[i] * deriv(xn->data[i], self.data[i]);
  });
}

}  // namespace

// ---- elementwise ----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.storage());
  const auto& bd = b.storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bd[i];
  NodeP<T> an = a.node(), bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
    for (auto* n : {an.get(), bn.get()}) {
      if (!n->requires_grad) continue;
      auto& g = n->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.storage());
  const auto& bd = b.storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bd[i];
  NodeP<T> an = a.node(), bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.storage());
  const auto& bd = b.storage();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bd[i];
  NodeP<T> an = a.node(), bn = b.node();
  return make_result<T>(a.shape(), std::move(out), {a, b}, [an, bn](detail::Node<T>& self) {
    if (an->requires_grad) {
      auto& g = an->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * bn->data[i];
    }
    if (bn->requires_grad) {
      auto& g = bn->ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * an->data[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  return unary(a, [factor](T v) { return v * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  return unary(x, [](T v) { return v > T(0) ? v : T(0); },
               [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return unary(
      x,
      [](T v) {
        // Split on sign so exp never overflows; saturated values stay strictly inside (0, 1).
        constexpr T lo = std::numeric_limits<T>::min();
        const T hi = std::nextafter(T(1), T(0));
        if (std::isnan(v)) return v;
        if (v >= T(0)) return std::min(hi, T(1) / (T(1) + std::exp(-v)));
        T e = std::exp(v);
        return std::max(lo, e / (T(1) + e));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr T k = T(0.7978845608028654);  // sqrt(2/pi)
  constexpr T c = T(0.044715);
  return unary(
      x, [](T v) { return T(0.5) * v * (T(1) + std::tanh(k * (v + c * v * v * v))); },
      [](T v, T) {
        T t = std::tanh(k * (v + c * v * v * v));
        return T(0.5) * (T(1) + t) + T(0.5) * v * (T(1) - t * t) * k * (T(1) + T(3) * c * v * v);
      });
}

// ---- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = std::accumulate(x.storage().begin(), x.storage().end(), T(0));
  NodeP<T> xn = x.node();
  return make_result<T>({}, {s}, {x}, [xn](detail::Node<T>& self) {
    auto& g = xn->ensure_grad();
    for (auto& v : g) v += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw ShapeError("mean of empty tensor");
  return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

// ---- layout ----------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  if (numel(shape) != x.numel())
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  NodeP<T> xn = x.node();
  return make_result<T>(std::move(shape), x.storage(), {x}, [xn](detail::Node<T>& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> permute(const Tensor<T>& x, const std::vector<int>& perm) {
  const auto& in_shape = x.shape();
  const std::size_t rank = in_shape.size();
  if (perm.size() != rank) throw ShapeError("permute: permutation rank mismatch");
  std::vector<bool> seen(rank, false);
  for (int p : perm) {
    if (p < 0 || p >= static_cast<int>(rank) || seen[p]) throw ShapeError("permute: invalid permutation");
    seen[p] = true;
  }
  std::vector<std::int64_t> in_strides(rank, 1);
  for (int i = static_cast<int>(rank) - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * in_shape[i + 1];
  Shape out_shape(rank);
  std::vector<std::int64_t> src_strides(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    src_strides[i] = in_strides[perm[i]];
  }
  // gather index for every output element, reused by backward
  auto n = static_cast<std::size_t>(x.numel());
  auto index = std::make_shared<std::vector<std::int64_t>>(n);
  std::vector<std::int64_t> counter(rank, 0);
  std::int64_t src = 0;
  for (std::size_t o = 0; o < n; ++o) {
    (*index)[o] = src;
    for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
      if (++counter[ax] < out_shape[ax]) {
        src += src_strides[ax];
        break;
      }
      src -= src_strides[ax] * (out_shape[ax] - 1);
      counter[ax] = 0;
    }
  }
  const auto& in = x.storage();
  std::vector<T> out(n);
  for (std::size_t o = 0; o < n; ++o) out[o] = in[(*index)[o]];
  NodeP<T> xn = x.node();
  return make_result<T>(std::move(out_shape), std::move(out), {x}, [xn, index](detail::Node<T>& self) {
    auto& g = xn->ensure_grad();
    for (std::size_t o = 0; o < index->size(); ++o) g[(*index)[o]] += self.grad[o];
  });
}

// ---- linear algebra --------------------------------------------------------

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() < 1 || weight.rank() != 2)
    throw ShapeError("linear: expected input [..., D_in] and weight [D_out, D_in]");
  const auto d_in = x.shape().back();
  const auto d_out = weight.dim(0);
  if (weight.dim(1) != d_in)
    throw ShapeError("linear: input last dim " + std::to_string(d_in) + " does not match weight " +
                     shape_str(weight.shape()));
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != d_out))
    throw ShapeError("linear: bias shape " + shape_str(bias.shape()) + " does not match D_out " +
                     std::to_string(d_out));
  const auto rows = d_in == 0 ? 0 : x.numel() / d_in;
  Shape out_shape = x.shape();
  out_shape.back() = d_out;
  std::vector<T> out(static_cast<std::size_t>(rows * d_out));
  {
    Eigen::Map<const RowMat<T>> X(x.storage().data(), rows, d_in);
    Eigen::Map<const RowMat<T>> W(weight.storage().data(), d_out, d_in);
    Eigen::Map<RowMat<T>> Y(out.data(), rows, d_out);
    Y.noalias() = X * W.transpose();
    if (bias.defined()) {
      Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(bias.storage().data(), d_out);
      Y.rowwise() += b;
    }
  }
  NodeP<T> xn = x.node(), wn = weight.node(), bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor<T>> inputs{x, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out_shape), std::move(out), inputs,
                        [xn, wn, bn, rows, d_in, d_out](detail::Node<T>& self) {
                          Eigen::Map<const RowMat<T>> dY(self.grad.data(), rows, d_out);
                          if (xn->requires_grad) {
                            Eigen::Map<RowMat<T>> dX(xn->ensure_grad().data(), rows, d_in);
                            Eigen::Map<const RowMat<T>> W(wn->data.data(), d_out, d_in);
                            dX.noalias() += dY * W;
                          }
                          if (wn->requires_grad) {
                            Eigen::Map<RowMat<T>> dW(wn->ensure_grad().data(), d_out, d_in);
                            Eigen::Map<const RowMat<T>> X(xn->data.data(), rows, d_in);
                            dW.noalias() += dY.transpose() * X;
                          }
                          if (wants_grad(bn)) {
                            Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> db(bn->ensure_grad().data(), d_out);
                            db += dY.colwise().sum();
                          }
                        });
}

template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0))
    throw ShapeError("bmm: expected [B,M,K] and [B,K,N], got " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
  const auto batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const auto n = transpose_b ? b.dim(1) : b.dim(2);
  const auto bk = transpose_b ? b.dim(2) : b.dim(1);
  if (bk != k)
    throw ShapeError("bmm: inner dims differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(static_cast<std::size_t>(batch * m * n));
  for (std::int64_t i = 0; i < batch; ++i) {
    Eigen::Map<const RowMat<T>> A(a.storage().data() + i * m * k, m, k);
    Eigen::Map<RowMat<T>> C(out.data() + i * m * n, m, n);
    if (transpose_b) {
      Eigen::Map<const RowMat<T>> B(b.storage().data() + i * n * k, n, k);
      C.noalias() = A * B.transpose();
    } else {
      Eigen::Map<const RowMat<T>> B(b.storage().data() + i * k * n, k, n);
      C.noalias() = A * B;
    }
  }
  NodeP<T> an = a.node(), bn = b.node();
  return make_result<T>({batch, m, n}, std::move(out), {a, b},
                        [an, bn, batch, m, k, n, transpose_b](detail::Node<T>& self) {
                          for (std::int64_t i = 0; i < batch; ++i) {
                            Eigen::Map<const RowMat<T>> dC(self.grad.data() + i * m * n, m, n);
                            Eigen::Map<const RowMat<T>> A(an->data.data() + i * m * k, m, k);
                            if (transpose_b) {
                              Eigen::Map<const RowMat<T>> B(bn->data.data() + i * n * k, n, k);
                              if (an->requires_grad) {
                                Eigen::Map<RowMat<T>> dA(an->ensure_grad().data() + i * m * k, m, k);
                                dA.noalias() += dC * B;
                              }
                              if (bn->requires_grad) {
                                Eigen::Map<RowMat<T>> dB(bn->ensure_grad().data() + i * n * k, n, k);
                                dB.noalias() += dC.transpose() * A;
                              }
                            } else {
                              Eigen::Map<const RowMat<T>> B(bn->data.data() + i * k * n, k, n);
                              if (an->requires_grad) {
                                Eigen::Map<RowMat<T>> dA(an->ensure_grad().data() + i * m * k, m, k);
                                dA.noalias() += dC * B.transpose();
                              }
                              if (bn->requires_grad) {
                                Eigen::Map<RowMat<T>> dB(bn->ensure_grad().data() + i * k * n, k, n);
                                dB.noalias() += A.transpose() * dC;
                              }
                            }
                          }
                        });
}

// ---- normalization ---------------------------------------------------------

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, int axis) {
  const int ax = normalize_axis(axis, x.rank());
  const auto& shape = x.shape();
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < ax; ++i) outer *= shape[i];
  for (std::size_t i = ax + 1; i < shape.size(); ++i) inner *= shape[i];
  const std::int64_t len = shape[ax];
  const auto& in = x.storage();
  std::vector<T> out(in.size());
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t j = 0; j < inner; ++j) {
      const std::int64_t base = o * len * inner + j;
      T mx = in[base];
      for (std::int64_t l = 1; l < len; ++l) mx = std::max(mx, in[base + l * inner]);
      T z = 0;
      for (std::int64_t l = 0; l < len; ++l) {
        T e = std::exp(in[base + l * inner] - mx);
        out[base + l * inner] = e;
        z += e;
      }
      for (std::int64_t l = 0; l < len; ++l) out[base + l * inner] /= z;
    }
  }
  NodeP<T> xn = x.node();
  return make_result<T>(shape, std::move(out), {x}, [xn, outer, inner, len](detail::Node<T>& self) {
    auto& g = xn->ensure_grad();
    const auto& y = self.data;
    const auto& dy = self.grad;
    for (std::int64_t o = 0; o < outer; ++o) {
      for (std::int64_t j = 0; j < inner; ++j) {
        const std::int64_t base = o * len * inner + j;
        T dot = 0;
        for (std::int64_t l = 0; l < len; ++l) dot += dy[base + l * inner] * y[base + l * inner];
        for (std::int64_t l = 0; l < len; ++l) {
          auto idx = base + l * inner;
          g[idx] += y[idx] * (dy[idx] - dot);
        }
      }
    }
  });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, double eps) {
  if (x.rank() < 1) throw ShapeError("layer_norm: scalar input");
  const auto d = x.shape().back();
  if (gamma.numel() != d || beta.numel() != d)
    throw ShapeError("layer_norm: gamma/beta size must equal trailing dim " + std::to_string(d));
  const auto rows = x.numel() / d;
  const auto& in = x.storage();
  const auto& gm = gamma.storage();
  const auto& bt = beta.storage();
  auto xhat = std::make_shared<std::vector<T>>(in.size());
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(rows));
  std::vector<T> out(in.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* row = in.data() + r * d;
    T mu = 0;
    for (std::int64_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::int64_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<T>(d);
    T rs = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*rstd)[r] = rs;
    for (std::int64_t i = 0; i < d; ++i) {
      T h = (row[i] - mu) * rs;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = gm[i] * h + bt[i];
    }
  }
  NodeP<T> xn = x.node(), gn = gamma.node(), bn = beta.node();
  return make_result<T>(x.shape(), std::move(out), {x, gamma, beta},
                        [xn, gn, bn, xhat, rstd, rows, d](detail::Node<T>& self) {
                          const auto& dy = self.grad;
                          if (gn->requires_grad || bn->requires_grad) {
                            auto& gg = gn->ensure_grad();
                            auto& gb = bn->ensure_grad();
                            for (std::int64_t r = 0; r < rows; ++r)
                              for (std::int64_t i = 0; i < d; ++i) {
                                gg[i] += dy[r * d + i] * (*xhat)[r * d + i];
                                gb[i] += dy[r * d + i];
                              }
                          }
                          if (!xn->requires_grad) return;
                          auto& gx = xn->ensure_grad();
                          const auto& gm = gn->data;
                          for (std::int64_t r = 0; r < rows; ++r) {
                            T m1 = 0, m2 = 0;
                            for (std::int64_t i = 0; i < d; ++i) {
                              T dh = dy[r * d + i] * gm[i];
                              m1 += dh;
                              m2 += dh * (*xhat)[r * d + i];
                            }
                            m1 /= static_cast<T>(d);
                            m2 /= static_cast<T>(d);
                            for (std::int64_t i = 0; i < d; ++i) {
                              T dh = dy[r * d + i] * gm[i];
                              gx[r * d + i] += (*rstd)[r] * (dh - m1 - (*xhat)[r * d + i] * m2);
                            }
                          }
                        });
}

#define THTD_INSTANTIATE_OPS(T)                                                        \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                          \
  template Tensor<T> scale(const Tensor<T>&, T);                                       \
  template Tensor<T> relu(const Tensor<T>&);                                           \
  template Tensor<T> sigmoid(const Tensor<T>&);                                        \
  template Tensor<T> gelu(const Tensor<T>&);                                           \
  template Tensor<T> sum(const Tensor<T>&);                                            \
  template Tensor<T> mean(const Tensor<T>&);                                           \
  template Tensor<T> reshape(const Tensor<T>&, Shape);                                 \
  template Tensor<T> permute(const Tensor<T>&, const std::vector<int>&);               \
  template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);     \
  template Tensor<T> bmm(const Tensor<T>&, const Tensor<T>&, bool);                    \
  template Tensor<T> softmax(const Tensor<T>&, int);                                   \
  template Tensor<T> layer_norm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);

THTD_INSTANTIATE_OPS(float)
THTD_INSTANTIATE_OPS(double)

}  // namespace thtd
