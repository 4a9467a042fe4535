#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "dshift/data.hpp"
#include "dshift/error.hpp"
#include "dshift/layers.hpp"
#include "dshift/optim.hpp"

namespace dshift {

// Four-layer image-to-image regression network:
//
//   conv 3->64 (3x3, /2) -> conv 64->128 (3x3, /2)
//     -> convT 128->64 (2x2, x2) -> convT 64->3 (2x2, x2)
//
// ReLU after the first three layers, sigmoid after the last. There are no
// normalization layers.
struct ShiftNetParams {
  static constexpr std::size_t kLayers = 4;
  std::array<ConvLayer, kLayers> layers;
  // Resolution the network was trained at; 0 when unknown.
  std::size_t height = 0;
  std::size_t width = 0;

  ShiftNetParams();
  static std::array<ConvSpec, kLayers> architecture();
  std::size_t parameter_count() const;
  bool operator==(const ShiftNetParams&) const = default;
};

// Intermediate activations kept for the backward pass.
struct ShiftNetTrace {
  std::array<Tensor, ShiftNetParams::kLayers> pre;   // layer outputs before activation
  std::array<Tensor, ShiftNetParams::kLayers> post;  // after ReLU / sigmoid
};

struct ShiftNetGrads {
  std::array<LayerGrads, ShiftNetParams::kLayers> layers;
};

ShiftNetParams shifter_init(std::uint64_t seed);

// Maps a [N, 3, H, W] batch in [0, 1] to the low-quality domain. H and W
// must be divisible by 4.
Tensor shifter_forward(const ShiftNetParams& params, const Tensor& batch);
ShiftNetTrace shifter_forward_trace(const ShiftNetParams& params, const Tensor& batch);
ShiftNetGrads shifter_backward(const ShiftNetParams& params, const Tensor& batch,
                               const ShiftNetTrace& trace, const Tensor& output_grad);

struct ShifterTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  ScheduleSpec schedule = ScheduleSpec::step_decay(0.01, 0.5, 30);
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  double validation_fraction = 0.1;

  void validate() const;
};

struct ShifterHistory {
  std::vector<double> train_l2;
  std::vector<double> val_l2;  // empty without a validation split
};

struct ShifterTrainResult {
  ShiftNetParams params;
  ShifterHistory history;
};

ShifterTrainResult shifter_train(const LoadedPairs& pairs, const ShifterTrainConfig& config);
ShifterTrainResult shifter_train(const PairedImageSet& pairs, const ShifterTrainConfig& config);

// Mean squared error of the network over a set of pairs.
double shifter_l2(const ShiftNetParams& params, const Tensor& clean, const Tensor& low,
                  std::size_t batch_size = 32);

// Writes `epoch,train_l2,val_l2` rows (epoch counted from 1).
void write_loss_log(const ShifterHistory& history, const std::filesystem::path& path);

// Runs every image of `images` through the network and writes the result to
// out/<relative path>. A `.incomplete` marker holding the failure reason is
// left in `out` if processing stops early.
LabeledImageSet shift_dataset(const ShiftNetParams& params, const LabeledImageSet& images,
                              const std::filesystem::path& out);

void shifter_save(const ShiftNetParams& params, const std::filesystem::path& path);
ShiftNetParams shifter_load(const std::filesystem::path& path);

}  // namespace dshift
