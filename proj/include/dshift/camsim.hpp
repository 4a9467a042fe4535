#pragma once

#include <array>
#include <cstdint>
#include <filesystem>

#include "dshift/data.hpp"
#include "dshift/tensor.hpp"

namespace dshift {

// Parameters of the synthetic low-quality camera. Stages run in the order
// blur -> colour matrix -> range map -> noise -> clamp -> jitter.
struct DegradationConfig {
  double gamma = 1.0;
  double black_lift = 0.0;
  double white_clip = 1.0;
  std::array<double, 9> color_matrix{1, 0, 0, 0, 1, 0, 0, 0, 1};  // row-major
  double noise_sigma = 0.0;
  double blur_sigma = 0.0;
  int jitter_px = 0;

  // Every stage is a no-op.
  static DegradationConfig identity();
  // The default "virtual camera" profile: compressed dynamic range, a warm
  // colour cast, mild sensor noise and blur, one pixel of misregistration.
  static DegradationConfig virtual_camera();

  void validate() const;
  bool operator==(const DegradationConfig&) const = default;
};

// Degrades a [1, 3, H, W] image. Deterministic in (image, config, seed).
Tensor degrade(const Tensor& image, const DegradationConfig& config, std::uint64_t seed);

// Writes (clean, degraded) pairs under out/clean and out/low with mirrored
// relative paths. Per-image seeds are derive_seed(seed, index).
PairedImageSet make_paired_set(const LabeledImageSet& clean, const DegradationConfig& config,
                               std::uint64_t seed, const std::filesystem::path& out);

// Degrades a labeled set into out/<class>/<file>, keeping labels.
LabeledImageSet degrade_set(const LabeledImageSet& labeled, const DegradationConfig& config,
                            std::uint64_t seed, const std::filesystem::path& out);

}  // namespace dshift
