#include <doctest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include "dshift/classify.hpp"
#include "dshift/error.hpp"
#include "dshift/image_io.hpp"
#include "dshift/shiftnet.hpp"
#include "reference.hpp"
#include "test_util.hpp"

using namespace dshift;
namespace fs = std::filesystem;

namespace {

// Identity pairs rendered from every procedural family.
LoadedPairs identity_pairs(std::size_t count, std::size_t resolution) {
  std::vector<Tensor> images;
  for (std::size_t i = 0; i < count; ++i) {
    images.push_back(render_shape(i % kShapeFamilies, resolution, 1000 + i));
  }
  LoadedPairs pairs;
  pairs.clean = stack(images);
  pairs.low = pairs.clean;
  return pairs;
}

// Trained once and shared by the fixtures below.
const ShifterTrainResult& identity_shifter() {
  static const ShifterTrainResult result = [] {
    ShifterTrainConfig cfg;  // default 100-epoch budget
    cfg.seed = 5;
    return shifter_train(identity_pairs(200, 32), cfg);
  }();
  return result;
}

double sample_std(const std::vector<float>& v) {
  double mean = 0.0, sq = 0.0;
  for (float x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (float x : v) sq += (x - mean) * (x - mean);
  return std::sqrt(sq / static_cast<double>(v.size()));
}

}  // namespace

TEST_SUITE("shiftnet") {
  TEST_CASE("architecture") {
    const ShiftNetParams p = shifter_init(0);
    CHECK(p.parameter_count() == 109251);
    const Tensor x(2, 3, 64, 64, 0.5f);
    const ShiftNetTrace t = shifter_forward_trace(p, x);
    CHECK(t.post[0].shape() == Shape{2, 64, 32, 32});
    CHECK(t.post[1].shape() == Shape{2, 128, 16, 16});
    CHECK(t.post[2].shape() == Shape{2, 64, 32, 32});
    CHECK(t.post[3].shape() == Shape{2, 3, 64, 64});
    CHECK(shifter_forward(p, x) == t.post[3]);
    CHECK_THROWS_AS(shifter_forward(p, Tensor(1, 3, 30, 32)), ShapeError);
    CHECK_THROWS_AS(shifter_forward(p, Tensor(1, 1, 32, 32)), ShapeError);
  }

  TEST_CASE("initialization") {
    CHECK(shifter_init(3) == shifter_init(3));
    CHECK_FALSE(shifter_init(0) == shifter_init(1));
    const ShiftNetParams p = shifter_init(7);
    for (const ConvLayer& layer : p.layers) {
      const double expected = std::sqrt(2.0 / static_cast<double>(layer.fan_in()));
      CHECK(sample_std(layer.weight.values()) == doctest::Approx(expected).epsilon(0.2));
      for (float b : layer.bias) CHECK(b == 0.0f);
    }
  }

  TEST_CASE("output range") {
    ShiftNetParams zero;
    const Tensor half = shifter_forward(zero, Tensor(1, 3, 8, 8, 0.7f));
    for (std::size_t i = 0; i < half.size(); ++i) CHECK(half[i] == 0.5f);
    Rng rng(1);
    const Tensor y = shifter_forward(shifter_init(2), ref::random_tensor(3, 3, 16, 16, rng, 0.0f, 1.0f));
    for (std::size_t i = 0; i < y.size(); ++i) {
      CHECK(y[i] > 0.0f);
      CHECK(y[i] < 1.0f);
    }
  }

  TEST_CASE("backward matches finite differences on a small input") {
    const ShiftNetParams p = shifter_init(4);
    Rng rng(9);
    const Tensor x = ref::random_tensor(1, 3, 4, 4, rng, 0.0f, 1.0f);
    const Tensor target = ref::random_tensor(1, 3, 4, 4, rng, 0.0f, 1.0f);
    const ShiftNetTrace trace = shifter_forward_trace(p, x);
    const LossResult loss = mse_loss(trace.post[3], target);
    const ShiftNetGrads g = shifter_backward(p, x, trace, loss.grad);
    // Spot-check a handful of last-layer biases and first-layer weights.
    auto numeric = [&](auto&& poke) {
      ShiftNetParams q = p;
      poke(q, 1e-2f);
      const double up = mse_loss(shifter_forward(q, x), target).loss;
      q = p;
      poke(q, -1e-2f);
      const double down = mse_loss(shifter_forward(q, x), target).loss;
      return (up - down) / 2e-2;
    };
    for (std::size_t o = 0; o < 3; ++o) {
      const double n = numeric([o](ShiftNetParams& q, float d) { q.layers[3].bias[o] += d; });
      CHECK(g.layers[3].d_bias[o] == doctest::Approx(n).epsilon(2e-2).scale(1e-4));
    }
    for (std::size_t i : {0, 17, 40}) {
      const double n = numeric([i](ShiftNetParams& q, float d) { q.layers[0].weight[i] += d; });
      CHECK(g.layers[0].d_weight[i] == doctest::Approx(n).epsilon(5e-2).scale(1e-4));
    }
  }

  TEST_CASE("training configuration validation") {
    ShifterTrainConfig c;
    CHECK(c.epochs == 100);
    CHECK(c.batch_size == 32);
    CHECK(c.schedule.rate(0) == 0.01);
    CHECK(c.schedule.rate(30) == 0.005);
    CHECK_NOTHROW(c.validate());
    c.validation_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = ShifterTrainConfig{};
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), Error);

    ShifterTrainConfig ok;
    CHECK_THROWS_AS(shifter_train(identity_pairs(10, 8), ok), Error);
    LoadedPairs bad = identity_pairs(64, 8);
    bad.low = Tensor(64, 3, 4, 4);
    CHECK_THROWS_AS(shifter_train(bad, ok), ShapeError);
  }

  TEST_CASE("identity pairs are learnable") {
    const ShifterTrainResult& r = identity_shifter();
    REQUIRE(r.history.train_l2.size() == 100);
    REQUIRE(r.history.val_l2.size() == 100);
    // Within 20 epochs the training loss falls below a quarter of epoch 1.
    CHECK(r.history.train_l2[19] < 0.25 * r.history.train_l2.front());
    CHECK(r.params.height == 32);
  }

  TEST_CASE("training is deterministic") {
    ShifterTrainConfig cfg;
    cfg.epochs = 3;
    cfg.batch_size = 8;
    cfg.seed = 2;
    const LoadedPairs pairs = identity_pairs(40, 8);
    const ShifterTrainResult a = shifter_train(pairs, cfg);
    const ShifterTrainResult b = shifter_train(pairs, cfg);
    CHECK(a.history.train_l2 == b.history.train_l2);
    CHECK(a.history.val_l2 == b.history.val_l2);
    CHECK(a.params == b.params);
    cfg.seed = 3;
    CHECK(shifter_train(pairs, cfg).history.train_l2 != a.history.train_l2);
  }

  TEST_CASE("shift_dataset with the identity-trained network") {
    testutil::TempDir dir;
    ShapesOptions opt;
    opt.classes = 5;
    opt.per_class = 4;
    opt.resolution = 32;
    opt.seed = 77;
    const LabeledImageSet in = gen_shapes_dataset(dir / "in", opt);
    const LabeledImageSet out = shift_dataset(identity_shifter().params, in, dir / "out");
    CHECK(out.size() == in.size());
    CHECK(out.class_names == in.class_names);
    CHECK(out.class_counts() == in.class_counts());
    CHECK_FALSE(fs::exists(dir / "out" / ".incomplete"));
    // Periodic textures near the bottleneck's resolution limit reconstruct
    // less sharply than outlines; they get a lower per-image floor.
    const std::set<std::string> periodic{"stripes", "checker", "dots"};
    double psnr_sum = 0.0;
    for (std::size_t i = 0; i < in.size(); ++i) {
      CHECK(out.entries[i] == in.entries[i]);
      const Tensor a = load_image(in.file(i));
      const Tensor b = load_image(out.file(i));
      double mse = 0.0;
      for (std::size_t j = 0; j < a.size(); ++j) mse += (double(a[j]) - b[j]) * (double(a[j]) - b[j]);
      mse /= static_cast<double>(a.size());
      const double psnr = 10.0 * std::log10(1.0 / mse);
      psnr_sum += psnr;
      const std::string& family = in.class_names[static_cast<std::size_t>(in.entries[i].label)];
      INFO("image " << i << " (" << family << ") psnr " << psnr);
      CHECK(psnr >= (periodic.count(family) ? 20.0 : 25.0));
    }
    CHECK(psnr_sum / static_cast<double>(in.size()) >= 25.0);

    LabeledImageSet broken = in;
    testutil::write_text(dir / "in" / in.class_names[0] / "zz.png", "garbage");
    broken.entries.push_back({fs::path(in.class_names[0]) / "zz.png", 0});
    CHECK_THROWS_AS(shift_dataset(identity_shifter().params, broken, dir / "out2"), FileError);
    REQUIRE(fs::exists(dir / "out2" / ".incomplete"));
    CHECK(testutil::slurp(dir / "out2" / ".incomplete").find("zz.png") != std::string::npos);
  }

  TEST_CASE("weight files") {
    testutil::TempDir dir;
    ShiftNetParams p = shifter_init(12);
    p.height = 64;
    p.width = 48;
    shifter_save(p, dir / "w.bin");
    CHECK(shifter_load(dir / "w.bin") == p);

    const std::string bytes = testutil::slurp(dir / "w.bin");
    testutil::write_text(dir / "cut.bin", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(shifter_load(dir / "cut.bin"), Error);
    testutil::write_text(dir / "empty.bin", "");
    CHECK_THROWS_AS(shifter_load(dir / "empty.bin"), Error);
    CHECK_THROWS_AS(shifter_load(dir / "missing.bin"), FileError);

    ShiftNetParams narrow = p;
    narrow.layers[0].weight = Tensor(32, 3, 3, 3);
    narrow.layers[0].bias.assign(32, 0.0f);
    shifter_save(narrow, dir / "narrow.bin");
    CHECK_THROWS_AS(shifter_load(dir / "narrow.bin"), ArchitectureError);

    classifier_save(classifier_init(3, 1), dir / "cls.bin");
    CHECK_THROWS_AS(shifter_load(dir / "cls.bin"), ArchitectureError);
  }

  TEST_CASE("loss log") {
    testutil::TempDir dir;
    ShifterHistory h{{0.5, 0.25}, {0.6, 0.3}};
    write_loss_log(h, dir / "log.csv");
    CHECK(testutil::slurp(dir / "log.csv") == "epoch,train_l2,val_l2\n1,0.5,0.6\n2,0.25,0.3\n");
  }
}
