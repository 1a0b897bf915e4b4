#include <Eigen/Core>
#include <algorithm>

#include "thtd/ops.hpp"

namespace thtd {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Strided = Eigen::Stride<Eigen::Dynamic, 1>;

std::string dims_str(const std::array<std::int64_t, 3>& a) {
  return std::to_string(a[0]) + "x" + std::to_string(a[1]) + "x" + std::to_string(a[2]);
}

// Geometry of one conv3d call, shared by the forward pass and its closure.
struct ConvGeom {
  std::int64_t n, ci, ti, hi, wi;
  std::int64_t co, to, ho, wo;
  std::int64_t groups, ci_g, co_g;
  std::array<std::int64_t, 3> k, s, p;

  std::int64_t cols_rows() const { return ci_g * k[0] * k[1] * k[2]; }
  std::int64_t plane() const { return ho * wo; }
};

// Unrolls the receptive fields of output slice (batch b, group g, output frame t)
// into a [ci_g*kt*kh*kw, ho*wo] matrix.
template <typename T>
void im2col(const ConvGeom& G, const T* x, std::int64_t b, std::int64_t g, std::int64_t t, T* cols) {
  const std::int64_t P = G.plane();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < G.ci_g; ++c) {
    const std::int64_t cin = g * G.ci_g + c;
    for (std::int64_t a = 0; a < G.k[0]; ++a) {
      const std::int64_t tin = t * G.s[0] - G.p[0] + a;
      for (std::int64_t u = 0; u < G.k[1]; ++u) {
        for (std::int64_t v = 0; v < G.k[2]; ++v, ++row) {
          T* dst = cols + row * P;
          if (tin < 0 || tin >= G.ti) {
            std::fill(dst, dst + P, T(0));
            continue;
          }
          const T* src = x + (((b * G.ci + cin) * G.ti + tin) * G.hi) * G.wi;
          for (std::int64_t oy = 0; oy < G.ho; ++oy) {
            const std::int64_t iy = oy * G.s[1] - G.p[1] + u;
            T* drow = dst + oy * G.wo;
            if (iy < 0 || iy >= G.hi) {
              std::fill(drow, drow + G.wo, T(0));
              continue;
            }
            const T* srow = src + iy * G.wi;
            for (std::int64_t ox = 0; ox < G.wo; ++ox) {
              const std::int64_t ix = ox * G.s[2] - G.p[2] + v;
              drow[ox] = (ix < 0 || ix >= G.wi) ? T(0) : srow[ix];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const ConvGeom& G, const T* cols, std::int64_t b, std::int64_t g, std::int64_t t, T* dx) {
  const std::int64_t P = G.plane();
  std::int64_t row = 0;
  for (std::int64_t c = 0; c < G.ci_g; ++c) {
    const std::int64_t cin = g * G.ci_g + c;
    for (std::int64_t a = 0; a < G.k[0]; ++a) {
      const std::int64_t tin = t * G.s[0] - G.p[0] + a;
      for (std::int64_t u = 0; u < G.k[1]; ++u) {
        for (std::int64_t v = 0; v < G.k[2]; ++v, ++row) {
          if (tin < 0 || tin >= G.ti) continue;
          const T* src = cols + row * P;
          T* dst = dx + (((b * G.ci + cin) * G.ti + tin) * G.hi) * G.wi;
          for (std::int64_t oy = 0; oy < G.ho; ++oy) {
            const std::int64_t iy = oy * G.s[1] - G.p[1] + u;
            if (iy < 0 || iy >= G.hi) continue;
            T* drow = dst + iy * G.wi;
            const T* srow = src + oy * G.wo;
            for (std::int64_t ox = 0; ox < G.wo; ++ox) {
              const std::int64_t ix = ox * G.s[2] - G.p[2] + v;
              if (ix >= 0 && ix < G.wi) drow[ix] += srow[ox];
            }
          }
        }
      }
    }
  }
}

void require_5d(const Shape& s, const char* op) {
  if (s.size() != 5)
    throw ShapeError(std::string(op) + ": expected [N, C, T, H, W] input, got " + shape_str(s));
}

}  // namespace

Shape ConvSpec::weight_shape() const {
  return {out_channels, groups > 0 ? in_channels / groups : 0, kernel[0], kernel[1], kernel[2]};
}

void ConvSpec::validate() const {
  for (int i = 0; i < 3; ++i) {
    if (kernel[i] < 1 || stride[i] < 1 || padding[i] < 0)
      throw ConfigError("conv3d: kernel " + dims_str(kernel) + ", stride " + dims_str(stride) +
                        ", padding " + dims_str(padding) + " out of range");
  }
  if (in_channels < 1 || out_channels < 1 || groups < 1)
    throw ConfigError("conv3d: channel counts and groups must be >= 1");
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw ConfigError("conv3d: groups " + std::to_string(groups) + " must divide in/out channels " +
                      std::to_string(in_channels) + "/" + std::to_string(out_channels));
}

std::array<std::int64_t, 3> ConvSpec::output_dims(std::int64_t t, std::int64_t h, std::int64_t w) const {
  validate();
  std::array<std::int64_t, 3> in{t, h, w}, out{};
  for (int i = 0; i < 3; ++i) {
    const std::int64_t span = in[i] + 2 * padding[i] - kernel[i];
    out[i] = span < 0 ? 0 : span / stride[i] + 1;
    if (out[i] < 1)
      throw ConfigError("conv3d: input " + dims_str(in) + " with kernel " + dims_str(kernel) +
                        " and padding " + dims_str(padding) + " yields an empty output");
  }
  return out;
}

template <typename T>
Tensor<T> conv3d(const Tensor<T>& input, const ConvSpec& spec, const Tensor<T>& weight,
                 const Tensor<T>& bias) {
  require_5d(input.shape(), "conv3d");
  spec.validate();
  if (input.dim(1) != spec.in_channels)
    throw ShapeError("conv3d: input has " + std::to_string(input.dim(1)) + " channels, spec expects " +
                     std::to_string(spec.in_channels));
  if (weight.shape() != spec.weight_shape())
    throw ShapeError("conv3d: weight shape " + shape_str(weight.shape()) + " != expected " +
                     shape_str(spec.weight_shape()));
  if (bias.defined() && bias.shape() != Shape{spec.out_channels})
    throw ShapeError("conv3d: bias shape " + shape_str(bias.shape()) + " != [" +
                     std::to_string(spec.out_channels) + "]");

  const auto od = spec.output_dims(input.dim(2), input.dim(3), input.dim(4));
  ConvGeom G{input.dim(0), input.dim(1), input.dim(2), input.dim(3), input.dim(4),
             spec.out_channels, od[0], od[1], od[2],
             spec.groups, spec.in_channels / spec.groups, spec.out_channels / spec.groups,
             spec.kernel, spec.stride, spec.padding};

  const std::int64_t K = G.cols_rows(), P = G.plane();
  const std::int64_t out_row_stride = G.to * P;  // distance between output channels of one slice
  std::vector<T> out(static_cast<std::size_t>(G.n * G.co * G.to * P), T(0));
  std::vector<T> cols(static_cast<std::size_t>(K * P));
  const T* x = input.storage().data();
  const T* w = weight.storage().data();

  for (std::int64_t b = 0; b < G.n; ++b)
    for (std::int64_t g = 0; g < G.groups; ++g)
      for (std::int64_t t = 0; t < G.to; ++t) {
        im2col(G, x, b, g, t, cols.data());
        Eigen::Map<const RowMat<T>> Wg(w + g * G.co_g * K, G.co_g, K);
        Eigen::Map<const RowMat<T>> C(cols.data(), K, P);
        Eigen::Map<RowMat<T>, 0, Strided> Y(out.data() + ((b * G.co + g * G.co_g) * G.to + t) * P, G.co_g,
                                            P, Strided(out_row_stride, 1));
        Y.noalias() = Wg * C;
      }
  if (bias.defined()) {
    const auto& bd = bias.storage();
    for (std::int64_t b = 0; b < G.n; ++b)
      for (std::int64_t c = 0; c < G.co; ++c) {
        T* dst = out.data() + (b * G.co + c) * G.to * P;
        for (std::int64_t i = 0; i < G.to * P; ++i) dst[i] += bd[c];
      }
  }

  Shape out_shape{G.n, G.co, G.to, G.ho, G.wo};
  auto xn = input.node(), wn = weight.node();
  auto bn = bias.defined() ? bias.node() : nullptr;
  std::vector<Tensor<T>> inputs{input, weight};
  if (bias.defined()) inputs.push_back(bias);
  return make_result<T>(std::move(out_shape), std::move(out), inputs, [G, xn, wn, bn](detail::Node<T>& self) {
    const std::int64_t K = G.cols_rows(), P = G.plane();
    const std::int64_t stride = G.to * P;
    std::vector<T> cols(static_cast<std::size_t>(K * P));
    const T* dy = self.grad.data();
    T* dx = xn->requires_grad ? xn->ensure_grad().data() : nullptr;
    T* dw = wn->requires_grad ? wn->ensure_grad().data() : nullptr;
    for (std::int64_t b = 0; b < G.n; ++b)
      for (std::int64_t g = 0; g < G.groups; ++g)
        for (std::int64_t t = 0; t < G.to; ++t) {
          Eigen::Map<const RowMat<T>, 0, Strided> dY(dy + ((b * G.co + g * G.co_g) * G.to + t) * P, G.co_g, P,
                                                     Strided(stride, 1));
          if (dw) {
            im2col(G, xn->data.data(), b, g, t, cols.data());
            Eigen::Map<const RowMat<T>> C(cols.data(), K, P);
            Eigen::Map<RowMat<T>> dW(dw + g * G.co_g * K, G.co_g, K);
            dW.noalias() += dY * C.transpose();
          }
          if (dx) {
            Eigen::Map<const RowMat<T>> Wg(wn->data.data() + g * G.co_g * K, G.co_g, K);
            Eigen::Map<RowMat<T>> dC(cols.data(), K, P);
            dC.noalias() = Wg.transpose() * dY;
            col2im(G, cols.data(), b, g, t, dx);
          }
        }
    if (bn && bn->requires_grad) {
      auto& db = bn->ensure_grad();
      for (std::int64_t b = 0; b < G.n; ++b)
        for (std::int64_t c = 0; c < G.co; ++c) {
          const T* src = dy + (b * G.co + c) * stride;
          T acc = 0;
          for (std::int64_t i = 0; i < stride; ++i) acc += src[i];
          db[c] += acc;
        }
    }
  });
}

template <typename T>
Tensor<T> upsample_spatial(const Tensor<T>& input, std::int64_t factor) {
  if (factor < 1) throw ConfigError("upsample_spatial: factor must be >= 1, got " + std::to_string(factor));
  require_5d(input.shape(), "upsample_spatial");
  const auto& s = input.shape();
  const std::int64_t planes = s[0] * s[1] * s[2], h = s[3], w = s[4];
  const std::int64_t oh = h * factor, ow = w * factor;
  const auto& in = input.storage();
  std::vector<T> out(static_cast<std::size_t>(planes * oh * ow));
  for (std::int64_t p = 0; p < planes; ++p)
    for (std::int64_t y = 0; y < oh; ++y) {
      const T* src = in.data() + (p * h + y / factor) * w;
      T* dst = out.data() + (p * oh + y) * ow;
      for (std::int64_t x = 0; x < ow; ++x) dst[x] = src[x / factor];
    }
  auto xn = input.node();
  return make_result<T>({s[0], s[1], s[2], oh, ow}, std::move(out), {input},
                        [xn, planes, h, w, factor](detail::Node<T>& self) {
                          auto& g = xn->ensure_grad();
                          const std::int64_t oh = h * factor, ow = w * factor;
                          for (std::int64_t p = 0; p < planes; ++p)
                            for (std::int64_t y = 0; y < oh; ++y) {
                              T* dst = g.data() + (p * h + y / factor) * w;
                              const T* src = self.grad.data() + (p * oh + y) * ow;
                              for (std::int64_t x = 0; x < ow; ++x) dst[x / factor] += src[x];
                            }
                        });
}

template <typename T>
Tensor<T> avg_pool_temporal(const Tensor<T>& input, std::int64_t factor) {
  if (factor < 1) throw ConfigError("avg_pool_temporal: factor must be >= 1");
  require_5d(input.shape(), "avg_pool_temporal");
  const auto& s = input.shape();
  if (s[2] % factor != 0)
    throw ConfigError("avg_pool_temporal: temporal dim " + std::to_string(s[2]) + " not divisible by " +
                      std::to_string(factor));
  const std::int64_t nc = s[0] * s[1], t_in = s[2], t_out = t_in / factor, plane = s[3] * s[4];
  const auto& in = input.storage();
  std::vector<T> out(static_cast<std::size_t>(nc * t_out * plane), T(0));
  const T inv = T(1) / static_cast<T>(factor);
  for (std::int64_t c = 0; c < nc; ++c)
    for (std::int64_t t = 0; t < t_in; ++t) {
      const T* src = in.data() + (c * t_in + t) * plane;
      T* dst = out.data() + (c * t_out + t / factor) * plane;
      for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i] * inv;
    }
  auto xn = input.node();
  return make_result<T>({s[0], s[1], t_out, s[3], s[4]}, std::move(out), {input},
                        [xn, nc, t_in, t_out, plane, factor, inv](detail::Node<T>& self) {
                          auto& g = xn->ensure_grad();
                          for (std::int64_t c = 0; c < nc; ++c)
                            for (std::int64_t t = 0; t < t_in; ++t) {
                              T* dst = g.data() + (c * t_in + t) * plane;
                              const T* src = self.grad.data() + (c * t_out + t / factor) * plane;
                              for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i] * inv;
                            }
                        });
}

#define THTD_INSTANTIATE_CONV(T)                                                                 \
  template Tensor<T> conv3d(const Tensor<T>&, const ConvSpec&, const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> upsample_spatial(const Tensor<T>&, std::int64_t);                           \
  template Tensor<T> avg_pool_temporal(const Tensor<T>&, std::int64_t);

THTD_INSTANTIATE_CONV(float)
THTD_INSTANTIATE_CONV(double)

}  // namespace thtd
