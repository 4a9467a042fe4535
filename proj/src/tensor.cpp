#include "dshift/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "dshift/error.hpp"

namespace dshift {

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" +
         std::to_string(h) + "x" + std::to_string(w);
}

Tensor::Tensor(Shape shape, float fill)
    : shape_(shape), data_(shape.numel(), fill) {}

Tensor::Tensor(Shape shape, std::vector<float> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("Tensor", "element count", shape_.numel(), data_.size());
  }
}

std::span<float> Tensor::sample(std::size_t i) {
  const std::size_t stride = shape_.c * shape_.h * shape_.w;
  return std::span<float>(data_).subspan(i * stride, stride);
}

std::span<const float> Tensor::sample(std::size_t i) const {
  const std::size_t stride = shape_.c * shape_.h * shape_.w;
  return std::span<const float>(data_).subspan(i * stride, stride);
}

void Tensor::fill(float value) { std::fill(data_.begin(), data_.end(), value); }

Tensor slice_batch(const Tensor& t, std::size_t begin, std::size_t count) {
  if (begin + count > t.n()) {
    throw ShapeError("slice_batch", "batch", t.n(), begin + count);
  }
  Shape s = t.shape();
  s.n = count;
  const std::size_t stride = s.c * s.h * s.w;
  auto first = t.values().begin() + static_cast<std::ptrdiff_t>(begin * stride);
  return Tensor(s, std::vector<float>(
                       first, first + static_cast<std::ptrdiff_t>(count * stride)));
}

Tensor gather_batch(const Tensor& t, std::span<const std::size_t> indices) {
  Shape s = t.shape();
  s.n = indices.size();
  Tensor out(s);
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= t.n()) {
      throw ShapeError("gather_batch", "batch index", t.n(), indices[i]);
    }
    auto src = t.sample(indices[i]);
    std::copy(src.begin(), src.end(), out.sample(i).begin());
  }
  return out;
}

Tensor stack(std::span<const Tensor> samples) {
  if (samples.empty()) return Tensor();
  Shape s = samples.front().shape();
  std::size_t total_n = 0;
  for (const auto& t : samples) {
    if (t.c() != s.c || t.h() != s.h || t.w() != s.w) {
      throw ShapeError("stack", "sample shape",
                       "expected " + s.str() + ", got " + t.shape().str());
    }
    total_n += t.n();
  }
  Shape out_shape{total_n, s.c, s.h, s.w};
  std::vector<float> values;
  values.reserve(out_shape.numel());
  for (const auto& t : samples) {
    values.insert(values.end(), t.values().begin(), t.values().end());
  }
  return Tensor(out_shape, std::move(values));
}

bool all_finite(const Tensor& t) {
  return std::all_of(t.values().begin(), t.values().end(),
                     [](float v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// Elementwise kernels

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  const float* x = input.raw();
  float* y = out.raw();
  for (std::size_t i = 0; i < input.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  if (input.shape() != upstream.shape()) {
    throw ShapeError("relu_backward", "upstream shape", "expected " + input.shape().str() + ", got " + upstream.shape().str());
  }
  Tensor out(input.shape());
  const float* x = input.raw();
  const float* g = upstream.raw();
  float* d = out.raw();
  for (std::size_t i = 0; i < input.size(); ++i) d[i] = x[i] > 0.0f ? g[i] : 0.0f;
  return out;
}

namespace {

constexpr float kSigmoidLow = std::numeric_limits<float>::min();
const float kSigmoidHigh = std::nextafter(1.0f, 0.0f);

inline float stable_sigmoid(float x) {
  float s;
  if (x >= 0.0f) {
    s = 1.0f / (1.0f + std::exp(-x));
  } else {
    const float e = std::exp(x);
    s = e / (1.0f + e);
  }
  return std::clamp(s, kSigmoidLow, kSigmoidHigh);
}

}  // namespace

Tensor sigmoid(const Tensor& input) {
  Tensor out(input.shape());
  const float* x = input.raw();
  float* y = out.raw();
  for (std::size_t i = 0; i < input.size(); ++i) y[i] = stable_sigmoid(x[i]);
  return out;
}

Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream) {
  if (output.shape() != upstream.shape()) {
    throw ShapeError("sigmoid_backward", "upstream shape", "expected " + output.shape().str() + ", got " + upstream.shape().str());
  }
  Tensor out(output.shape());
  const float* s = output.raw();
  const float* g = upstream.raw();
  float* d = out.raw();
  for (std::size_t i = 0; i < output.size(); ++i) d[i] = g[i] * s[i] * (1.0f - s[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Losses

LossResult mse_loss(const Tensor& prediction, const Tensor& target) {
  if (prediction.shape() != target.shape()) {
    throw ShapeError("mse_loss", "target shape", "expected " + prediction.shape().str() + ", got " + target.shape().str());
  }
  const std::size_t count = prediction.size();
  if (count == 0) throw ShapeError("mse_loss", "element count", 1, 0);
  LossResult r;
  r.grad = Tensor(prediction.shape());
  const float* p = prediction.raw();
  const float* t = target.raw();
  float* g = r.grad.raw();
  const float scale = 2.0f / static_cast<float>(count);
  double sum = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const float diff = p[i] - t[i];
    sum += static_cast<double>(diff) * diff;
    g[i] = scale * diff;
  }
  r.loss = sum / static_cast<double>(count);
  return r;
}

LossResult softmax_cross_entropy(const Tensor& logits,
                                 std::span<const int> labels) {
  const std::size_t n = logits.n();
  const std::size_t k = logits.c() * logits.h() * logits.w();
  if (labels.size() != n) {
    throw ShapeError("softmax_cross_entropy", "label count", n, labels.size());
  }
  if (n == 0 || k == 0) {
    throw ShapeError("softmax_cross_entropy", "logits", "empty logits tensor");
  }
  LossResult r;
  r.grad = Tensor(logits.shape());
  double total = 0.0;
  const float inv_n = 1.0f / static_cast<float>(n);
  std::vector<double> prob(k);
  for (std::size_t i = 0; i < n; ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= k) {
      throw ShapeError("softmax_cross_entropy", "label",
                       "label " + std::to_string(label) + " outside [0, " +
                           std::to_string(k) + ")");
    }
    auto row = logits.sample(i);
    const float peak = *std::max_element(row.begin(), row.end());
    double denom = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      prob[j] = std::exp(static_cast<double>(row[j]) - peak);
      denom += prob[j];
    }
    total += std::log(denom) - (static_cast<double>(row[label]) - peak);
    auto grad_row = r.grad.sample(i);
    for (std::size_t j = 0; j < k; ++j) {
      const double p = prob[j] / denom;
      const double onehot = static_cast<std::size_t>(label) == j ? 1.0 : 0.0;
      grad_row[j] = static_cast<float>(p - onehot) * inv_n;
    }
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------------------
// Pooling and dense head

Tensor global_avg_pool(const Tensor& input) {
  if (input.h() == 0 || input.w() == 0) {
    throw ShapeError("global_avg_pool", "spatial extent", "must be >= 1");
  }
  Tensor out(input.n(), input.c(), 1, 1);
  const std::size_t plane = input.shape().plane();
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::size_t nc = 0; nc < input.n() * input.c(); ++nc) {
    const float* src = input.raw() + nc * plane;
    float sum = 0.0f;
    for (std::size_t i = 0; i < plane; ++i) sum += src[i];
    out[nc] = sum * inv;
  }
  return out;
}

Tensor global_avg_pool_backward(const Shape& input_shape,
                                const Tensor& upstream) {
  if (upstream.n() != input_shape.n || upstream.c() != input_shape.c ||
      upstream.h() != 1 || upstream.w() != 1) {
    throw ShapeError("global_avg_pool_backward", "upstream shape",
                     "expected " +
                         Shape{input_shape.n, input_shape.c, 1, 1}.str() +
                         ", got " + upstream.shape().str());
  }
  Tensor out(input_shape);
  const std::size_t plane = input_shape.plane();
  const float inv = 1.0f / static_cast<float>(plane);
  for (std::size_t nc = 0; nc < input_shape.n * input_shape.c; ++nc) {
    const float g = upstream[nc] * inv;
    std::fill_n(out.raw() + nc * plane, plane, g);
  }
  return out;
}

namespace {

void check_dense(const char* op, const Tensor& input, const Tensor& weight) {
  if (input.h() != 1 || input.w() != 1) {
    throw ShapeError(op, "input spatial extent", 1, input.h() * input.w());
  }
  if (weight.h() != 1 || weight.w() != 1) {
    throw ShapeError(op, "weight spatial extent", 1, weight.h() * weight.w());
  }
  if (weight.c() != input.c()) {
    throw ShapeError(op, "in_features", weight.c(), input.c());
  }
}

}  // namespace

Tensor dense_forward(const Tensor& input, const Tensor& weight,
                     std::span<const float> bias) {
  check_dense("dense_forward", input, weight);
  const std::size_t k = weight.n();
  const std::size_t c = weight.c();
  if (bias.size() != k) throw ShapeError("dense_forward", "bias", k, bias.size());
  Tensor out(input.n(), k, 1, 1);
  for (std::size_t i = 0; i < input.n(); ++i) {
    auto x = input.sample(i);
    for (std::size_t o = 0; o < k; ++o) {
      const float* wrow = weight.raw() + o * c;
      float acc = bias[o];
      for (std::size_t j = 0; j < c; ++j) acc += wrow[j] * x[j];
      out.at(i, o, 0, 0) = acc;
    }
  }
  return out;
}

LayerGrads dense_backward(const Tensor& input, const Tensor& weight,
                          const Tensor& upstream_grad) {
  check_dense("dense_backward", input, weight);
  const std::size_t k = weight.n();
  const std::size_t c = weight.c();
  if (upstream_grad.n() != input.n() || upstream_grad.c() != k ||
      upstream_grad.h() != 1 || upstream_grad.w() != 1) {
    throw ShapeError("dense_backward", "upstream shape",
                     "expected " + Shape{input.n(), k, 1, 1}.str() + ", got " +
                         upstream_grad.shape().str());
  }
  LayerGrads g;
  g.d_weight = Tensor(weight.shape());
  g.d_bias.assign(k, 0.0f);
  g.d_input = Tensor(input.shape());
  for (std::size_t i = 0; i < input.n(); ++i) {
    auto x = input.sample(i);
    auto dx = g.d_input.sample(i);
    auto dy = upstream_grad.sample(i);
    for (std::size_t o = 0; o < k; ++o) {
      const float go = dy[o];
      g.d_bias[o] += go;
      float* dw = g.d_weight.raw() + o * c;
      const float* w = weight.raw() + o * c;
      for (std::size_t j = 0; j < c; ++j) {
        dw[j] += go * x[j];
        dx[j] += go * w[j];
      }
    }
  }
  return g;
}

}  // namespace dshift
