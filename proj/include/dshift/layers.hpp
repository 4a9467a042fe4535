#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dshift/random.hpp"
#include "dshift/tensor.hpp"

namespace dshift {

// A convolution (or transposed convolution) with its parameters.
struct ConvLayer {
  ConvSpec spec;
  Tensor weight;
  std::vector<float> bias;

  ConvLayer() = default;
  explicit ConvLayer(const ConvSpec& s)
      : spec(s), weight(s.weight_shape()), bias(s.out_channels, 0.0f) {}

  Tensor forward(const Tensor& input) const;
  LayerGrads backward(const Tensor& input, const Tensor& upstream) const;
  std::size_t parameter_count() const { return weight.size() + bias.size(); }
  // Number of inputs feeding one output value.
  std::size_t fan_in() const;
  bool operator==(const ConvLayer&) const = default;
};

// Zero-mean uniform weights with standard deviation sqrt(2 / fan_in); zero
// bias.
void init_fan_in(ConvLayer& layer, Rng& rng);
void init_fan_in(Tensor& weight, std::size_t fan_in, Rng& rng);

}  // namespace dshift
