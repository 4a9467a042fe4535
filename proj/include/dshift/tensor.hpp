#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace dshift {

struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t numel() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

// Dense single-precision (N, C, H, W) array, row-major.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f);
  Tensor(Shape shape, std::vector<float> values);
  Tensor(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
         float fill = 0.0f)
      : Tensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }
  float* raw() { return data_.data(); }
  const float* raw() const { return data_.data(); }
  const std::vector<float>& values() const { return data_; }

  float& operator[](std::size_t i) { return data_[i]; }
  float operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y,
                     std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  float& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset(n, c, y, x)];
  }
  float at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset(n, c, y, x)];
  }

  // Contiguous view of sample `i` (C*H*W values).
  std::span<float> sample(std::size_t i);
  std::span<const float> sample(std::size_t i) const;

  void fill(float value);
  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

// Copies samples [begin, begin + count) of `t` into a new tensor.
Tensor slice_batch(const Tensor& t, std::size_t begin, std::size_t count);
// Gathers the given sample indices into a new batch.
Tensor gather_batch(const Tensor& t, std::span<const std::size_t> indices);
// Concatenates tensors with identical C, H, W along the batch axis.
Tensor stack(std::span<const Tensor> samples);

bool all_finite(const Tensor& t);

// Convolution geometry. Weight layout is [out, in, k, k] for ordinary
// convolution and [in, out, k, k] for the transposed variant.
struct ConvSpec {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  bool transposed = false;

  void validate() const;
  Shape weight_shape() const;
  // Output extent along one spatial axis; throws ShapeError when the result
  // would be empty.
  std::size_t output_extent(std::size_t input_extent) const;
  Shape output_shape(const Shape& input) const;
  // The spec of the adjoint operator (same weights, roles swapped).
  ConvSpec adjoint() const;
  bool operator==(const ConvSpec&) const = default;
};

struct LayerGrads {
  Tensor d_weight;
  std::vector<float> d_bias;
  Tensor d_input;
};

Tensor conv2d_forward(const Tensor& input, const Tensor& weight,
                      std::span<const float> bias, const ConvSpec& spec);
LayerGrads conv2d_backward(const Tensor& input, const Tensor& weight,
                           const ConvSpec& spec, const Tensor& upstream_grad);

Tensor convtranspose2d_forward(const Tensor& input, const Tensor& weight,
                               std::span<const float> bias,
                               const ConvSpec& spec);
LayerGrads convtranspose2d_backward(const Tensor& input, const Tensor& weight,
                                    const ConvSpec& spec,
                                    const Tensor& upstream_grad);

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

Tensor sigmoid(const Tensor& input);
// Takes the forward *output* (sigma(x)), which is what callers keep around.
Tensor sigmoid_backward(const Tensor& output, const Tensor& upstream);

struct LossResult {
  double loss = 0.0;
  Tensor grad;
};

LossResult mse_loss(const Tensor& prediction, const Tensor& target);

// `logits` is [N, K, 1, 1]; labels hold class indices in [0, K).
LossResult softmax_cross_entropy(const Tensor& logits,
                                 std::span<const int> labels);

Tensor global_avg_pool(const Tensor& input);
Tensor global_avg_pool_backward(const Shape& input_shape,
                                const Tensor& upstream);

// `weight` is [K, C, 1, 1].
Tensor dense_forward(const Tensor& input, const Tensor& weight,
                     std::span<const float> bias);
LayerGrads dense_backward(const Tensor& input, const Tensor& weight,
                          const Tensor& upstream_grad);

}  // namespace dshift
