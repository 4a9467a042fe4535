// Strided convolution and its adjoint (transposed convolution), forward and
// backward. Both are lowered to GEMM over an im2col buffer, one sample at a
// time:
//
//   conv:   Y[n] = W * col(X[n]) + b            W is [out, in*k*k]
//   convT:  Y[n] = col2im(W^T * X[n]) + b       W is [in, out*k*k]
//
// The column buffer layout is [(c*k + ky)*k + kx, oy*Wo + ox].

#include <Eigen/Core>

#include "dshift/error.hpp"
#include "dshift/tensor.hpp"

namespace dshift {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

// Geometry of an ordinary convolution from an image of `channels` x
// `height` x `width` to `out_h` x `out_w`.
struct Geometry {
  std::size_t channels, height, width;
  std::size_t kernel, stride, padding;
  std::size_t out_h, out_w;

  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return out_h * out_w; }
};

void im2col(const float* image, const Geometry& g, float* col) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.padding);
  const std::ptrdiff_t height = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t width = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    const float* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        float* row = col + ((c * g.kernel + ky) * g.kernel + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          float* dst = row + oy * g.out_w;
          if (iy < 0 || iy >= height) {
            std::fill_n(dst, g.out_w, 0.0f);
            continue;
          }
          const float* src = plane + iy * width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            dst[ox] = (ix >= 0 && ix < width) ? src[ix] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-adds the column buffer back onto the image (adjoint of im2col).
void col2im(const float* col, const Geometry& g, float* image) {
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(g.padding);
  const std::ptrdiff_t height = static_cast<std::ptrdiff_t>(g.height);
  const std::ptrdiff_t width = static_cast<std::ptrdiff_t>(g.width);
  for (std::size_t c = 0; c < g.channels; ++c) {
    float* plane = image + c * g.height * g.width;
    for (std::size_t ky = 0; ky < g.kernel; ++ky) {
      for (std::size_t kx = 0; kx < g.kernel; ++kx) {
        const float* row = col + ((c * g.kernel + ky) * g.kernel + kx) * g.cols();
        for (std::size_t oy = 0; oy < g.out_h; ++oy) {
          const std::ptrdiff_t iy =
              static_cast<std::ptrdiff_t>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= height) continue;
          const float* src = row + oy * g.out_w;
          float* dst = plane + iy * width;
          for (std::size_t ox = 0; ox < g.out_w; ++ox) {
            const std::ptrdiff_t ix =
                static_cast<std::ptrdiff_t>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

void add_bias(Tensor& out, std::span<const float> bias) {
  const std::size_t plane = out.shape().plane();
  for (std::size_t n = 0; n < out.n(); ++n) {
    for (std::size_t c = 0; c < out.c(); ++c) {
      float* p = out.raw() + (n * out.c() + c) * plane;
      const float b = bias[c];
      for (std::size_t i = 0; i < plane; ++i) p[i] += b;
    }
  }
}

std::vector<float> channel_sums(const Tensor& t) {
  std::vector<float> sums(t.c(), 0.0f);
  const std::size_t plane = t.shape().plane();
  for (std::size_t n = 0; n < t.n(); ++n) {
    for (std::size_t c = 0; c < t.c(); ++c) {
      const float* p = t.raw() + (n * t.c() + c) * plane;
      float acc = 0.0f;
      for (std::size_t i = 0; i < plane; ++i) acc += p[i];
      sums[c] += acc;
    }
  }
  return sums;
}

void check_weight(const char* op, const Tensor& weight, const ConvSpec& spec) {
  const Shape expected = spec.weight_shape();
  if (weight.n() != expected.n) {
    throw ShapeError(op, spec.transposed ? "weight in_channels" : "weight out_channels",
                     expected.n, weight.n());
  }
  if (weight.c() != expected.c) {
    throw ShapeError(op, spec.transposed ? "weight out_channels" : "weight in_channels",
                     expected.c, weight.c());
  }
  if (weight.h() != spec.kernel) throw ShapeError(op, "kernel height", spec.kernel, weight.h());
  if (weight.w() != spec.kernel) throw ShapeError(op, "kernel width", spec.kernel, weight.w());
}

void check_input(const char* op, const Tensor& input, const ConvSpec& spec) {
  if (input.c() != spec.in_channels) {
    throw ShapeError(op, "input channels", spec.in_channels, input.c());
  }
}

void check_upstream(const char* op, const Tensor& upstream, const Shape& expected) {
  const Shape& got = upstream.shape();
  if (got.n != expected.n) throw ShapeError(op, "upstream batch", expected.n, got.n);
  if (got.c != expected.c) throw ShapeError(op, "upstream channels", expected.c, got.c);
  if (got.h != expected.h) throw ShapeError(op, "upstream height", expected.h, got.h);
  if (got.w != expected.w) throw ShapeError(op, "upstream width", expected.w, got.w);
}

// Geometry of the ordinary convolution that maps `image` to `result`.
Geometry conv_geometry(std::size_t channels, const Shape& image, const Shape& result,
                       const ConvSpec& spec) {
  return Geometry{channels,    image.h,     image.w,  spec.kernel,
                  spec.stride, spec.padding, result.h, result.w};
}

}  // namespace

void ConvSpec::validate() const {
  if (kernel < 1) throw usage_error("ConvSpec: kernel must be >= 1");
  if (stride < 1) throw usage_error("ConvSpec: stride must be >= 1");
  if (in_channels < 1 || out_channels < 1) {
    throw usage_error("ConvSpec: channel counts must be >= 1");
  }
}

Shape ConvSpec::weight_shape() const {
  return transposed ? Shape{in_channels, out_channels, kernel, kernel}
                    : Shape{out_channels, in_channels, kernel, kernel};
}

std::size_t ConvSpec::output_extent(std::size_t input_extent) const {
  if (transposed) {
    if (input_extent == 0) {
      throw ShapeError("ConvSpec", "output extent", "input extent is zero");
    }
    const std::size_t grown = (input_extent - 1) * stride + kernel;
    if (grown <= 2 * padding) {
      throw ShapeError("ConvSpec", "output extent", "transposed output is empty");
    }
    return grown - 2 * padding;
  }
  const std::size_t padded = input_extent + 2 * padding;
  if (padded < kernel) {
    throw ShapeError("ConvSpec", "output extent",
                     "kernel " + std::to_string(kernel) + " exceeds padded input " +
                         std::to_string(padded));
  }
  return (padded - kernel) / stride + 1;
}

Shape ConvSpec::output_shape(const Shape& input) const {
  return Shape{input.n, out_channels, output_extent(input.h), output_extent(input.w)};
}

ConvSpec ConvSpec::adjoint() const {
  return ConvSpec{out_channels, in_channels, kernel, stride, padding, !transposed};
}

Tensor conv2d_forward(const Tensor& input, const Tensor& weight,
                      std::span<const float> bias, const ConvSpec& spec) {
  constexpr const char* op = "conv2d_forward";
  spec.validate();
  if (spec.transposed) throw usage_error("conv2d_forward: spec is transposed");
  check_input(op, input, spec);
  check_weight(op, weight, spec);
  if (bias.size() != spec.out_channels) {
    throw ShapeError(op, "bias", spec.out_channels, bias.size());
  }
  const Shape out_shape = spec.output_shape(input.shape());
  Tensor out(out_shape);
  const Geometry g = conv_geometry(spec.in_channels, input.shape(), out_shape, spec);
  std::vector<float> col(g.rows() * g.cols());
  ConstMatrixMap w(weight.raw(), static_cast<Eigen::Index>(spec.out_channels),
                   static_cast<Eigen::Index>(g.rows()));
  ConstMatrixMap c(col.data(), static_cast<Eigen::Index>(g.rows()),
                   static_cast<Eigen::Index>(g.cols()));
  for (std::size_t n = 0; n < input.n(); ++n) {
    im2col(input.sample(n).data(), g, col.data());
    MatrixMap y(out.sample(n).data(), static_cast<Eigen::Index>(spec.out_channels),
                static_cast<Eigen::Index>(g.cols()));
    y.noalias() = w * c;
  }
  add_bias(out, bias);
  return out;
}

LayerGrads conv2d_backward(const Tensor& input, const Tensor& weight,
                           const ConvSpec& spec, const Tensor& upstream_grad) {
  constexpr const char* op = "conv2d_backward";
  spec.validate();
  if (spec.transposed) throw usage_error("conv2d_backward: spec is transposed");
  check_input(op, input, spec);
  check_weight(op, weight, spec);
  const Shape out_shape = spec.output_shape(input.shape());
  check_upstream(op, upstream_grad, out_shape);

  LayerGrads grads;
  grads.d_weight = Tensor(weight.shape());
  grads.d_input = Tensor(input.shape());
  grads.d_bias = channel_sums(upstream_grad);

  const Geometry g = conv_geometry(spec.in_channels, input.shape(), out_shape, spec);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  const auto outc = static_cast<Eigen::Index>(spec.out_channels);
  std::vector<float> col(g.rows() * g.cols());
  std::vector<float> dcol(g.rows() * g.cols());
  ConstMatrixMap w(weight.raw(), outc, rows);
  MatrixMap dw(grads.d_weight.raw(), outc, rows);
  MatrixMap c(col.data(), rows, cols);
  MatrixMap dc(dcol.data(), rows, cols);
  for (std::size_t n = 0; n < input.n(); ++n) {
    ConstMatrixMap dy(upstream_grad.sample(n).data(), outc, cols);
    im2col(input.sample(n).data(), g, col.data());
    dw.noalias() += dy * c.transpose();
    dc.noalias() = w.transpose() * dy;
    col2im(dcol.data(), g, grads.d_input.sample(n).data());
  }
  return grads;
}

Tensor convtranspose2d_forward(const Tensor& input, const Tensor& weight,
                               std::span<const float> bias, const ConvSpec& spec) {
  constexpr const char* op = "convtranspose2d_forward";
  spec.validate();
  if (!spec.transposed) throw usage_error("convtranspose2d_forward: spec is not transposed");
  check_input(op, input, spec);
  check_weight(op, weight, spec);
  if (bias.size() != spec.out_channels) {
    throw ShapeError(op, "bias", spec.out_channels, bias.size());
  }
  const Shape out_shape = spec.output_shape(input.shape());
  Tensor out(out_shape);
  // The adjoint convolution maps the output image back onto the input grid.
  const Geometry g = conv_geometry(spec.out_channels, out_shape, input.shape(), spec);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  const auto inc = static_cast<Eigen::Index>(spec.in_channels);
  std::vector<float> col(g.rows() * g.cols());
  ConstMatrixMap w(weight.raw(), inc, rows);
  MatrixMap c(col.data(), rows, cols);
  for (std::size_t n = 0; n < input.n(); ++n) {
    ConstMatrixMap x(input.sample(n).data(), inc, cols);
    c.noalias() = w.transpose() * x;
    col2im(col.data(), g, out.sample(n).data());
  }
  add_bias(out, bias);
  return out;
}

LayerGrads convtranspose2d_backward(const Tensor& input, const Tensor& weight,
                                    const ConvSpec& spec, const Tensor& upstream_grad) {
  constexpr const char* op = "convtranspose2d_backward";
  spec.validate();
  if (!spec.transposed) throw usage_error("convtranspose2d_backward: spec is not transposed");
  check_input(op, input, spec);
  check_weight(op, weight, spec);
  const Shape out_shape = spec.output_shape(input.shape());
  check_upstream(op, upstream_grad, out_shape);

  LayerGrads grads;
  grads.d_weight = Tensor(weight.shape());
  grads.d_input = Tensor(input.shape());
  grads.d_bias = channel_sums(upstream_grad);

  const Geometry g = conv_geometry(spec.out_channels, out_shape, input.shape(), spec);
  const auto rows = static_cast<Eigen::Index>(g.rows());
  const auto cols = static_cast<Eigen::Index>(g.cols());
  const auto inc = static_cast<Eigen::Index>(spec.in_channels);
  std::vector<float> col(g.rows() * g.cols());
  ConstMatrixMap w(weight.raw(), inc, rows);
  MatrixMap dw(grads.d_weight.raw(), inc, rows);
  MatrixMap c(col.data(), rows, cols);
  for (std::size_t n = 0; n < input.n(); ++n) {
    ConstMatrixMap x(input.sample(n).data(), inc, cols);
    MatrixMap dx(grads.d_input.sample(n).data(), inc, cols);
    im2col(upstream_grad.sample(n).data(), g, col.data());
    dw.noalias() += x * c.transpose();
    dx.noalias() = w * c;
  }
  return grads;
}

}  // namespace dshift
