// Procedural object dataset: ten families of simple objects drawn over a
// smoothly textured background with random colour, placement, scale and
// rotation. Rendering is 4x4 supersampled.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>

#include "dshift/data.hpp"
#include "dshift/error.hpp"
#include "dshift/image_io.hpp"
#include "dshift/random.hpp"

namespace fs = std::filesystem;

namespace dshift {

namespace {

// The first five families are mutually distinctive and serve as task classes;
// the rest are used for the disjoint pair pool.
enum Family : std::size_t {
  kSquare, kRing, kStripes, kChecker, kCross,
  kTriangle, kHexagon, kDots, kStar, kCrescent
};

constexpr std::array<const char*, kShapeFamilies> kFamilyNames = {
    "square",   "ring",    "stripes", "checker", "cross",
    "triangle", "hexagon", "dots",    "star",    "crescent"};

constexpr double kPi = std::numbers::pi;

struct Point {
  double x, y;
};

std::vector<Point> regular_polygon(int sides, double inner_ratio = 1.0) {
  std::vector<Point> vertices;
  const int count = inner_ratio < 1.0 ? 2 * sides : sides;
  for (int i = 0; i < count; ++i) {
    const double angle = 2.0 * kPi * i / count - kPi / 2.0;
    const double r = (inner_ratio < 1.0 && i % 2 == 1) ? inner_ratio : 1.0;
    vertices.push_back({r * std::cos(angle), r * std::sin(angle)});
  }
  return vertices;
}

bool inside_polygon(const std::vector<Point>& poly, double x, double y) {
  bool inside = false;
  for (std::size_t i = 0, j = poly.size() - 1; i < poly.size(); j = i++) {
    const Point& a = poly[i];
    const Point& b = poly[j];
    if ((a.y > y) != (b.y > y) && x < (b.x - a.x) * (y - a.y) / (b.y - a.y) + a.x) {
      inside = !inside;
    }
  }
  return inside;
}

struct Colour {
  double r, g, b;
  double luma() const { return 0.299 * r + 0.587 * g + 0.114 * b; }
};

Colour random_colour(Rng& rng) {
  std::uniform_real_distribution<double> u(0.05, 0.95);
  return {u(rng), u(rng), u(rng)};
}

struct Scene {
  std::size_t family = 0;
  double res = 64.0;
  // object frame
  double cx = 0, cy = 0, radius = 1, angle = 0;
  // pattern parameters in pixels
  double period = 4.0;
  double phase = 0.0;
  std::vector<Point> polygon;
  Colour fg{}, bg{}, accent{};
  // background texture
  double grad_dx = 0, grad_dy = 0;
  std::array<double, 3> wave_kx{}, wave_ky{}, wave_phase{}, wave_amp{};
};

// Returns 0 for background, 1 for the object colour, 2 for the accent colour.
int classify_point(const Scene& s, double px, double py) {
  const double dx = px - s.cx;
  const double dy = py - s.cy;
  const double ca = std::cos(-s.angle);
  const double sa = std::sin(-s.angle);
  // local pixel-scale coordinates and unit-radius coordinates
  const double lx = ca * dx - sa * dy;
  const double ly = sa * dx + ca * dy;
  const double u = lx / s.radius;
  const double v = ly / s.radius;
  const double rho = std::sqrt(u * u + v * v);

  switch (s.family) {
    case kTriangle:
    case kSquare:
    case kHexagon:
    case kStar:
      return inside_polygon(s.polygon, u, v) ? 1 : 0;
    case kRing:
      return (rho <= 1.0 && rho >= 0.58) ? 1 : 0;
    case kStripes: {  // inside a disc
      if (rho > 1.0) return 0;
      const double t = std::fmod(lx + s.phase + 1000.0 * s.period, s.period);
      return t < 0.5 * s.period ? 1 : 2;
    }
    case kChecker: {  // inside a square
      if (std::abs(u) > 0.78 || std::abs(v) > 0.78) return 0;
      const long cx = static_cast<long>(std::floor((lx + s.phase) / (0.5 * s.period)));
      const long cy = static_cast<long>(std::floor((ly + s.phase) / (0.5 * s.period)));
      return ((cx + cy) % 2 == 0) ? 1 : 2;
    }
    case kCross:
      return ((std::abs(u) <= 0.3 && std::abs(v) <= 1.0) ||
              (std::abs(v) <= 0.3 && std::abs(u) <= 1.0))
                 ? 1
                 : 0;
    case kDots: {  // inside a disc
      if (rho > 1.0) return 0;
      const double gx = std::fmod(lx + s.phase + 1000.0 * s.period, s.period) - 0.5 * s.period;
      const double gy = std::fmod(ly + s.phase + 1000.0 * s.period, s.period) - 0.5 * s.period;
      return (gx * gx + gy * gy <= 0.1 * s.period * s.period) ? 1 : 2;
    }
    case kCrescent: {
      const double ou = u - 0.45;
      return (rho <= 1.0 && std::sqrt(ou * ou + v * v) > 0.82) ? 1 : 0;
    }
    default:
      return 0;
  }
}

Colour background_at(const Scene& s, double px, double py) {
  double shade = s.grad_dx * (px / s.res - 0.5) + s.grad_dy * (py / s.res - 0.5);
  for (std::size_t k = 0; k < s.wave_amp.size(); ++k) {
    shade += s.wave_amp[k] * std::sin(s.wave_kx[k] * px + s.wave_ky[k] * py + s.wave_phase[k]);
  }
  return {s.bg.r + shade, s.bg.g + shade, s.bg.b + shade};
}

Scene make_scene(std::size_t family, std::size_t resolution, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Scene s;
  s.family = family;
  s.res = static_cast<double>(resolution);

  s.bg = random_colour(rng);
  do {
    s.fg = random_colour(rng);
  } while (std::abs(s.fg.luma() - s.bg.luma()) < 0.3);
  do {
    s.accent = random_colour(rng);
  } while (std::abs(s.accent.luma() - s.fg.luma()) < 0.3);

  s.radius = s.res * (0.24 + 0.12 * unit(rng));
  const double margin = s.radius * 0.85;
  s.cx = margin + unit(rng) * (s.res - 2.0 * margin);
  s.cy = margin + unit(rng) * (s.res - 2.0 * margin);
  s.angle = 2.0 * kPi * unit(rng);
  s.period = 4.0 + 2.5 * unit(rng);
  s.phase = s.period * unit(rng);

  s.grad_dx = 0.25 * (unit(rng) - 0.5);
  s.grad_dy = 0.25 * (unit(rng) - 0.5);
  for (std::size_t k = 0; k < s.wave_amp.size(); ++k) {
    const double wavelength = s.res * (0.2 + 0.5 * unit(rng));
    const double dir = 2.0 * kPi * unit(rng);
    s.wave_kx[k] = 2.0 * kPi / wavelength * std::cos(dir);
    s.wave_ky[k] = 2.0 * kPi / wavelength * std::sin(dir);
    s.wave_phase[k] = 2.0 * kPi * unit(rng);
    s.wave_amp[k] = 0.04 * unit(rng);
  }

  switch (family) {
    case kTriangle: s.polygon = regular_polygon(3); break;
    case kSquare: s.polygon = regular_polygon(4); break;
    case kHexagon: s.polygon = regular_polygon(6); break;
    case kStar: s.polygon = regular_polygon(5, 0.45); break;
    default: break;
  }
  return s;
}

}  // namespace

std::string shape_family_name(std::size_t family) {
  if (family >= kShapeFamilies) {
    throw usage_error("shape family " + std::to_string(family) + " out of range");
  }
  return kFamilyNames[family];
}

Tensor render_shape(std::size_t family, std::size_t resolution, std::uint64_t seed) {
  if (family >= kShapeFamilies) {
    throw usage_error("shape family " + std::to_string(family) + " out of range");
  }
  if (resolution < 4) throw usage_error("resolution must be >= 4");
  const Scene s = make_scene(family, resolution, seed);
  constexpr int kSub = 4;
  Tensor image(1, 3, resolution, resolution);
  for (std::size_t y = 0; y < resolution; ++y) {
    for (std::size_t x = 0; x < resolution; ++x) {
      double r = 0, g = 0, b = 0;
      for (int sy = 0; sy < kSub; ++sy) {
        for (int sx = 0; sx < kSub; ++sx) {
          const double px = static_cast<double>(x) + (sx + 0.5) / kSub;
          const double py = static_cast<double>(y) + (sy + 0.5) / kSub;
          Colour c;
          switch (classify_point(s, px, py)) {
            case 1: c = s.fg; break;
            case 2: c = s.accent; break;
            default: c = background_at(s, px, py); break;
          }
          r += c.r;
          g += c.g;
          b += c.b;
        }
      }
      constexpr double inv = 1.0 / (kSub * kSub);
      image.at(0, 0, y, x) = static_cast<float>(std::clamp(r * inv, 0.0, 1.0));
      image.at(0, 1, y, x) = static_cast<float>(std::clamp(g * inv, 0.0, 1.0));
      image.at(0, 2, y, x) = static_cast<float>(std::clamp(b * inv, 0.0, 1.0));
    }
  }
  return image;
}

LabeledImageSet gen_shapes_dataset(const fs::path& out, const ShapesOptions& options) {
  if (options.classes < 2 || options.classes > kShapeFamilies) {
    throw usage_error("gen_shapes_dataset: classes must be in [2, 10]");
  }
  if (options.first_family + options.classes > kShapeFamilies) {
    throw usage_error("gen_shapes_dataset: family range exceeds the 10 available families");
  }
  if (options.per_class < 1) throw usage_error("gen_shapes_dataset: per_class must be >= 1");

  std::vector<std::size_t> families(options.classes);
  for (std::size_t i = 0; i < options.classes; ++i) families[i] = options.first_family + i;
  std::sort(families.begin(), families.end(), [](std::size_t a, std::size_t b) {
    return std::string(kFamilyNames[a]) < std::string(kFamilyNames[b]);
  });

  LabeledImageSet set;
  set.root = out;
  for (std::size_t label = 0; label < families.size(); ++label) {
    const std::size_t family = families[label];
    const std::string name = kFamilyNames[family];
    set.class_names.push_back(name);
    fs::create_directories(out / name);
    const std::uint64_t family_seed = derive_seed(options.seed, static_cast<std::uint64_t>(family));
    for (std::size_t j = 0; j < options.per_class; ++j) {
      char file[32];
      std::snprintf(file, sizeof file, "%05zu.png", j);
      const fs::path rel = fs::path(name) / file;
      write_image(render_shape(family, options.resolution, derive_seed(family_seed, j)),
                  out / rel);
      set.entries.push_back(ImageEntry{rel, static_cast<int>(label)});
    }
  }
  return set;
}

}  // namespace dshift
