#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dshift/data.hpp"
#include "dshift/layers.hpp"
#include "dshift/optim.hpp"

namespace dshift {

// Small fixed CNN: four 3x3 stride-2 conv blocks (3->16->32->64->64, ReLU),
// global average pooling, and a dense layer to K logits. Input pixels are
// mapped from [0, 1] to [-1, 1] before the first block. Layers are indexed
// 0..3 for the conv blocks and 4 for the dense head.
struct ClassifierParams {
  static constexpr std::size_t kConvBlocks = 4;
  static constexpr std::size_t kLayers = kConvBlocks + 1;

  std::array<ConvLayer, kConvBlocks> convs;
  Tensor dense_weight;  // [K, 64, 1, 1]
  std::vector<float> dense_bias;
  std::array<bool, kLayers> frozen{};
  std::vector<std::string> class_names;

  ClassifierParams() = default;
  explicit ClassifierParams(std::size_t classes);
  static std::array<ConvSpec, kConvBlocks> architecture();

  std::size_t classes() const { return dense_bias.size(); }
  std::size_t parameter_count() const;
  void freeze_prefix(std::size_t count);
  bool operator==(const ClassifierParams&) const = default;
};

ClassifierParams classifier_init(std::size_t classes, std::uint64_t seed);

struct ClassifierTrace {
  Tensor input;  // centred pixels fed to the first block
  std::array<Tensor, ClassifierParams::kConvBlocks> pre;
  std::array<Tensor, ClassifierParams::kConvBlocks> post;
  Tensor pooled;
  Tensor logits;
};

struct ClassifierGrads {
  std::array<LayerGrads, ClassifierParams::kConvBlocks> convs;
  LayerGrads dense;
  // Layers below this index received no gradient (frozen prefix).
  std::size_t first_computed = 0;
};

// Returns [N, K, 1, 1] logits.
Tensor classifier_logits(const ClassifierParams& params, const Tensor& batch);
ClassifierTrace classifier_forward_trace(const ClassifierParams& params, const Tensor& batch);
ClassifierGrads classifier_backward(const ClassifierParams& params, const ClassifierTrace& trace,
                                    const Tensor& logits_grad);
std::vector<int> predict(const ClassifierParams& params, const Tensor& batch);

// Defaults train the from-scratch desk-scale network: the cyclical range keeps
// the 100x span and 20-step ramp but sits two decades higher, with momentum,
// and nothing is frozen since there are no pretrained weights to keep.
struct ClassifierTrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  ScheduleSpec schedule = ScheduleSpec::cyclical(1e-3, 1e-1, 20);
  double momentum = 0.9;
  // Rescales the gradient of the trainable layers to at most this global L2
  // norm before each step; 0 disables.
  double grad_clip = 5.0;
  std::size_t freeze_prefix = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  double lr = 0.0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
  bool operator==(const EpochRecord&) const = default;
};

struct ClassifierTrainResult {
  ClassifierParams params;  // parameters of the selected epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 0-based index into history
};

// Trains on `train` and keeps the epoch with the best validation accuracy
// (ties broken by lower validation loss). The multi-set overload trains on the
// union of the sets, concatenated in an order that does not depend on the
// argument order.
ClassifierTrainResult classifier_train(const LoadedSet& train, const LoadedSet& val,
                                       const ClassifierTrainConfig& config);
ClassifierTrainResult classifier_train(const std::vector<LabeledImageSet>& train,
                                       const LabeledImageSet& val,
                                       const ClassifierTrainConfig& config);

struct Evaluation {
  double accuracy = 0.0;
  double loss = 0.0;
  std::size_t total = 0;
  // confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

Evaluation evaluate(const ClassifierParams& params, const LoadedSet& test);
Evaluation evaluate(const ClassifierParams& params, const LabeledImageSet& test);
// Scores a fixed list of predictions against labels.
Evaluation score_predictions(std::size_t classes, std::span<const int> labels,
                             std::span<const int> predictions);

void write_confusion_csv(const Evaluation& eval, const std::vector<std::string>& class_names,
                         const std::filesystem::path& path);

void classifier_save(const ClassifierParams& params, const std::filesystem::path& path);
ClassifierParams classifier_load(const std::filesystem::path& path);

}  // namespace dshift
