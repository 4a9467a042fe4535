#include "dshift/camsim.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "dshift/error.hpp"
#include "dshift/image_io.hpp"
#include "dshift/random.hpp"

namespace fs = std::filesystem;

namespace dshift {

DegradationConfig DegradationConfig::identity() { return DegradationConfig{}; }

DegradationConfig DegradationConfig::virtual_camera() {
  DegradationConfig c;
  c.gamma = 1.6;
  c.black_lift = 0.06;
  c.white_clip = 0.92;
  // identity blended 15% toward a warm cast (red up, blue down)
  constexpr std::array<double, 9> warm{1.25, 0.10, 0.00,  //
                                       0.05, 1.00, 0.00,  //
                                       0.00, 0.10, 0.60};
  constexpr std::array<double, 9> eye{1, 0, 0, 0, 1, 0, 0, 0, 1};
  for (std::size_t i = 0; i < 9; ++i) c.color_matrix[i] = 0.85 * eye[i] + 0.15 * warm[i];
  c.noise_sigma = 0.03;
  c.blur_sigma = 0.8;
  c.jitter_px = 1;
  return c;
}

void DegradationConfig::validate() const {
  if (!(gamma > 0.0) || !std::isfinite(gamma)) throw usage_error("camera.gamma must be > 0");
  if (!(black_lift >= 0.0 && black_lift <= 0.3)) {
    throw usage_error("camera.black_lift must be in [0, 0.3]");
  }
  if (!(white_clip > 0.7 && white_clip <= 1.0)) {
    throw usage_error("camera.white_clip must be in (0.7, 1]");
  }
  for (double m : color_matrix) {
    if (!std::isfinite(m)) throw usage_error("camera.color_matrix entries must be finite");
  }
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
    throw usage_error("camera.noise_sigma must be >= 0");
  }
  if (!(blur_sigma >= 0.0) || !std::isfinite(blur_sigma)) {
    throw usage_error("camera.blur_sigma must be >= 0");
  }
  if (jitter_px < 0) throw usage_error("camera.jitter_px must be >= 0");
}

namespace {

void gaussian_blur(Tensor& image, double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<float> taps(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double v = std::exp(-0.5 * i * i / (sigma * sigma));
    taps[static_cast<std::size_t>(i + radius)] = static_cast<float>(v);
    total += v;
  }
  for (auto& t : taps) t = static_cast<float>(t / total);

  const int h = static_cast<int>(image.h());
  const int w = static_cast<int>(image.w());
  std::vector<float> tmp(image.shape().plane());
  for (std::size_t c = 0; c < image.c(); ++c) {
    float* plane = image.raw() + c * image.shape().plane();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          const int xx = std::clamp(x + k, 0, w - 1);
          acc += taps[static_cast<std::size_t>(k + radius)] * plane[y * w + xx];
        }
        tmp[static_cast<std::size_t>(y * w + x)] = acc;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float acc = 0.0f;
        for (int k = -radius; k <= radius; ++k) {
          const int yy = std::clamp(y + k, 0, h - 1);
          acc += taps[static_cast<std::size_t>(k + radius)] *
                 tmp[static_cast<std::size_t>(yy * w + x)];
        }
        plane[y * w + x] = acc;
      }
    }
  }
}

bool is_identity_matrix(const std::array<double, 9>& m) {
  return m == std::array<double, 9>{1, 0, 0, 0, 1, 0, 0, 0, 1};
}

void check_image(const Tensor& image) {
  if (image.n() != 1) throw ShapeError("degrade", "batch", 1, image.n());
  if (image.c() != 3) throw ShapeError("degrade", "channels", 3, image.c());
}

}  // namespace

Tensor degrade(const Tensor& image, const DegradationConfig& config, std::uint64_t seed) {
  check_image(image);
  config.validate();
  Tensor out = image;
  const std::size_t plane = image.shape().plane();
  float* r = out.raw();
  float* g = r + plane;
  float* b = g + plane;

  if (config.blur_sigma > 0.0) gaussian_blur(out, config.blur_sigma);

  if (!is_identity_matrix(config.color_matrix)) {
    std::array<float, 9> m{};
    for (std::size_t i = 0; i < 9; ++i) m[i] = static_cast<float>(config.color_matrix[i]);
    for (std::size_t i = 0; i < plane; ++i) {
      const float ri = r[i], gi = g[i], bi = b[i];
      r[i] = m[0] * ri + m[1] * gi + m[2] * bi;
      g[i] = m[3] * ri + m[4] * gi + m[5] * bi;
      b[i] = m[6] * ri + m[7] * gi + m[8] * bi;
    }
  }

  if (config.gamma != 1.0 || config.black_lift != 0.0 || config.white_clip != 1.0) {
    const float lift = static_cast<float>(config.black_lift);
    const float span = static_cast<float>(config.white_clip - config.black_lift);
    const float gamma = static_cast<float>(config.gamma);
    for (float& v : out.data()) {
      v = lift + span * std::pow(std::clamp(v, 0.0f, 1.0f), gamma);
    }
  }

  Rng rng(seed);
  if (config.noise_sigma > 0.0) {
    std::normal_distribution<float> noise(0.0f, static_cast<float>(config.noise_sigma));
    for (float& v : out.data()) v += noise(rng);
  }

  for (float& v : out.data()) v = std::clamp(v, 0.0f, 1.0f);

  if (config.jitter_px > 0) {
    std::uniform_int_distribution<int> offset(-config.jitter_px, config.jitter_px);
    const int dx = offset(rng);
    const int dy = offset(rng);
    if (dx != 0 || dy != 0) {
      const Tensor src = out;
      const int h = static_cast<int>(out.h());
      const int w = static_cast<int>(out.w());
      for (std::size_t c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y) {
          const int sy = std::clamp(y - dy, 0, h - 1);
          for (int x = 0; x < w; ++x) {
            const int sx = std::clamp(x - dx, 0, w - 1);
            out.at(0, c, static_cast<std::size_t>(y), static_cast<std::size_t>(x)) =
                src.at(0, c, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx));
          }
        }
      }
    }
  }
  return out;
}

PairedImageSet make_paired_set(const LabeledImageSet& clean, const DegradationConfig& config,
                               std::uint64_t seed, const fs::path& out) {
  config.validate();
  if (clean.empty()) throw data_error("make_paired_set: clean set is empty");
  PairedImageSet pairs;
  pairs.root = out;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    const Tensor image = load_image(clean.file(i));
    if (i == 0) {
      pairs.height = image.h();
      pairs.width = image.w();
    }
    const fs::path rel = clean.entries[i].path;
    write_image(image, out / "clean" / rel);
    write_image(degrade(image, config, derive_seed(seed, static_cast<std::uint64_t>(i))),
                out / "low" / rel);
    pairs.entries.emplace_back(fs::path("clean") / rel, fs::path("low") / rel);
  }
  return pairs;
}

LabeledImageSet degrade_set(const LabeledImageSet& labeled, const DegradationConfig& config,
                            std::uint64_t seed, const fs::path& out) {
  config.validate();
  LabeledImageSet result;
  result.root = out;
  result.class_names = labeled.class_names;
  result.excluded = labeled.excluded;
  for (std::size_t i = 0; i < labeled.size(); ++i) {
    const Tensor image = load_image(labeled.file(i));
    write_image(degrade(image, config, derive_seed(seed, static_cast<std::uint64_t>(i))),
                out / labeled.entries[i].path);
    result.entries.push_back(labeled.entries[i]);
  }
  return result;
}

}  // namespace dshift
