#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "dshift/camsim.hpp"
#include "dshift/data.hpp"
#include "dshift/error.hpp"
#include "dshift/image_io.hpp"
#include "dshift/random.hpp"
#include "reference.hpp"
#include "test_util.hpp"

using namespace dshift;

namespace {

double mean_abs_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a[i]) - double(b[i]));
  return s / static_cast<double>(a.size());
}

}  // namespace

TEST_SUITE("camsim") {
  TEST_CASE("identity profile is a bit-exact fixed point") {
    Rng rng(1);
    for (int i = 0; i < 20; ++i) {
      const Tensor x = ref::random_tensor(1, 3, 16, 12, rng, 0.0f, 1.0f);
      CHECK(degrade(x, DegradationConfig::identity(), static_cast<std::uint64_t>(i)) == x);
    }
  }

  TEST_CASE("range map with gamma 2") {
    DegradationConfig c = DegradationConfig::identity();
    c.gamma = 2.0;
    const Tensor y = degrade(Tensor(1, 3, 8, 8, 0.5f), c, 0);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(0.25f).epsilon(1e-6));

    c.black_lift = 0.1;
    c.white_clip = 0.9;
    const Tensor z = degrade(Tensor(1, 3, 4, 4, 0.5f), c, 0);
    CHECK(z[0] == doctest::Approx(0.1 + 0.8 * 0.25).epsilon(1e-6));
  }

  TEST_CASE("colour matrix mixes channels per pixel") {
    DegradationConfig c = DegradationConfig::identity();
    c.color_matrix = {0, 0, 1, 0, 1, 0, 1, 0, 0};  // swap red and blue
    Tensor x(1, 3, 2, 2);
    for (std::size_t i = 0; i < 4; ++i) {
      x[i] = 0.1f;
      x[4 + i] = 0.5f;
      x[8 + i] = 0.9f;
    }
    const Tensor y = degrade(x, c, 0);
    CHECK(y[0] == doctest::Approx(0.9f));
    CHECK(y[4] == doctest::Approx(0.5f));
    CHECK(y[8] == doctest::Approx(0.1f));
  }

  TEST_CASE("noise statistics") {
    DegradationConfig c = DegradationConfig::identity();
    c.noise_sigma = 0.05;
    const Tensor x(1, 3, 64, 64, 0.5f);
    const Tensor y = degrade(x, c, 42);
    double mean = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double d = double(y[i]) - 0.5;
      mean += d;
      sq += d * d;
    }
    mean /= static_cast<double>(y.size());
    const double sd = std::sqrt(sq / static_cast<double>(y.size()) - mean * mean);
    CHECK(sd == doctest::Approx(0.05).epsilon(0.2));
    CHECK(degrade(x, c, 42) == y);
    CHECK_FALSE(degrade(x, c, 43) == y);
  }

  TEST_CASE("blur preserves a constant image and smooths an edge") {
    DegradationConfig c = DegradationConfig::identity();
    c.blur_sigma = 1.0;
    const Tensor flat(1, 3, 10, 10, 0.3f);
    const Tensor y = degrade(flat, c, 0);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(0.3f).epsilon(1e-5));
    Tensor edge(1, 3, 10, 10);
    for (std::size_t ch = 0; ch < 3; ++ch)
      for (std::size_t r = 0; r < 10; ++r)
        for (std::size_t col = 5; col < 10; ++col) edge.at(0, ch, r, col) = 1.0f;
    const Tensor b = degrade(edge, c, 0);
    CHECK(b.at(0, 0, 5, 4) > 0.05f);
    CHECK(b.at(0, 0, 5, 5) < 0.95f);
  }

  TEST_CASE("jitter translates with edge replication") {
    DegradationConfig c = DegradationConfig::identity();
    c.jitter_px = 2;
    Rng rng(3);
    const Tensor x = ref::random_tensor(1, 3, 8, 8, rng, 0.0f, 1.0f);
    bool moved = false;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor y = degrade(x, c, seed);
      CHECK(y.shape() == x.shape());
      if (!(y == x)) moved = true;
      // Every output value is one of the input values of the same channel.
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const float v = y.at(0, ch, 4, 4);
        bool found = false;
        for (std::size_t r = 0; r < 8 && !found; ++r)
          for (std::size_t col = 0; col < 8 && !found; ++col) found = x.at(0, ch, r, col) == v;
        CHECK(found);
      }
    }
    CHECK(moved);
  }

  TEST_CASE("virtual camera output stays in range and changes the image") {
    Rng rng(5);
    const Tensor x = ref::random_tensor(1, 3, 32, 32, rng, 0.0f, 1.0f);
    const Tensor y = degrade(x, DegradationConfig::virtual_camera(), 1);
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(y[i] >= 0.0f);
      CHECK(y[i] <= 1.0f);
    }
    CHECK(mean_abs_diff(x, y) > 0.01);
  }

  TEST_CASE("config validation") {
    DegradationConfig c = DegradationConfig::identity();
    CHECK_NOTHROW(c.validate());
    CHECK_NOTHROW(DegradationConfig::virtual_camera().validate());
    c.gamma = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = DegradationConfig::identity();
    c.noise_sigma = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = DegradationConfig::identity();
    c.jitter_px = -1;
    CHECK_THROWS_AS(c.validate(), Error);
    c = DegradationConfig::identity();
    c.color_matrix[4] = std::nan("");
    CHECK_THROWS_AS(c.validate(), Error);
    CHECK_THROWS_AS(degrade(Tensor(1, 1, 4, 4), DegradationConfig::identity(), 0), ShapeError);
  }

  TEST_CASE("paired and labeled set generation") {
    testutil::TempDir dir;
    ShapesOptions opt;
    opt.classes = 2;
    opt.per_class = 10;
    opt.resolution = 16;
    opt.seed = 4;
    const LabeledImageSet clean = gen_shapes_dataset(dir / "clean", opt);

    const PairedImageSet same = make_paired_set(clean, DegradationConfig::identity(), 1, dir / "id");
    CHECK(same.size() == clean.size());
    for (const auto& [c, l] : same.entries) {
      CHECK(testutil::slurp(same.root / "clean" / c) == testutil::slurp(same.root / "low" / l));
    }

    const PairedImageSet a = make_paired_set(clean, DegradationConfig::virtual_camera(), 1, dir / "a");
    const PairedImageSet b = make_paired_set(clean, DegradationConfig::virtual_camera(), 1, dir / "b");
    CHECK(testutil::tree_difference(a.root, b.root).empty());
    const PairedImageSet rescanned = scan_pairs(a.root);
    CHECK(rescanned.size() == clean.size());
    CHECK(rescanned.height == 16);

    const LabeledImageSet deg = degrade_set(clean, DegradationConfig::virtual_camera(), 2, dir / "deg");
    CHECK(deg.class_names == clean.class_names);
    CHECK(deg.class_counts() == clean.class_counts());
    std::size_t changed = 0;
    for (std::size_t i = 0; i < deg.size(); ++i) {
      CHECK(deg.entries[i].label == clean.entries[i].label);
      if (mean_abs_diff(load_image(deg.file(i)), load_image(clean.file(i))) > 0.01) ++changed;
    }
    CHECK(changed >= deg.size() * 99 / 100);

    const LabeledImageSet copy = degrade_set(clean, DegradationConfig::identity(), 2, dir / "copy");
    for (std::size_t i = 0; i < copy.size(); ++i) {
      CHECK(load_image(copy.file(i)) == load_image(clean.file(i)));
    }

    LabeledImageSet empty = clean;
    empty.entries.clear();
    CHECK_THROWS_AS(make_paired_set(empty, DegradationConfig::identity(), 1, dir / "e"), Error);
  }
}
