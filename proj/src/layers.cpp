#include "dshift/layers.hpp"

#include <algorithm>
#include <cmath>

namespace dshift {

Tensor ConvLayer::forward(const Tensor& input) const {
  return spec.transposed ? convtranspose2d_forward(input, weight, bias, spec)
                         : conv2d_forward(input, weight, bias, spec);
}

LayerGrads ConvLayer::backward(const Tensor& input, const Tensor& upstream) const {
  return spec.transposed ? convtranspose2d_backward(input, weight, spec, upstream)
                         : conv2d_backward(input, weight, spec, upstream);
}

std::size_t ConvLayer::fan_in() const {
  if (!spec.transposed) return spec.in_channels * spec.kernel * spec.kernel;
  // each output pixel of a transposed convolution sees ceil(k/s)^2 input
  // positions per input channel
  const std::size_t taps = (spec.kernel + spec.stride - 1) / spec.stride;
  return spec.in_channels * taps * taps;
}

void init_fan_in(Tensor& weight, std::size_t fan_in, Rng& rng) {
  const double bound = std::sqrt(3.0) * std::sqrt(2.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<float> dist(static_cast<float>(-bound),
                                             static_cast<float>(bound));
  for (float& w : weight.data()) w = dist(rng);
}

void init_fan_in(ConvLayer& layer, Rng& rng) {
  init_fan_in(layer.weight, layer.fan_in(), rng);
  std::fill(layer.bias.begin(), layer.bias.end(), 0.0f);
}

}  // namespace dshift
