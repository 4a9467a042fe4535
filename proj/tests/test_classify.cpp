#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <span>

#include "dshift/classify.hpp"
#include "dshift/error.hpp"
#include "dshift/image_io.hpp"
#include "dshift/shiftnet.hpp"
#include "reference.hpp"
#include "test_util.hpp"

using namespace dshift;
namespace fs = std::filesystem;

namespace {

// Separable toy data: class k has mean brightness (k + 1) / (K + 1).
LoadedSet toy_set(std::size_t classes, std::size_t per_class, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<float> noise(-0.05f, 0.05f);
  LoadedSet s;
  s.images = Tensor(classes * per_class, 3, 16, 16);
  for (std::size_t k = 0; k < classes; ++k) {
    s.class_names.push_back("c" + std::to_string(k));
    const float level = static_cast<float>(k + 1) / static_cast<float>(classes + 1);
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t n = k * per_class + i;
      auto sample = s.images.sample(n);
      for (float& v : sample) v = level + noise(rng);
      s.labels.push_back(static_cast<int>(k));
    }
  }
  return s;
}

ClassifierTrainConfig quick_config(std::size_t epochs) {
  ClassifierTrainConfig c;
  c.epochs = epochs;
  c.batch_size = 8;
  c.seed = 1;
  return c;
}

}  // namespace

TEST_SUITE("classify") {
  TEST_CASE("architecture and initialization") {
    const ClassifierParams p = classifier_init(5, 3);
    CHECK(p.classes() == 5);
    CHECK(p == classifier_init(5, 3));
    CHECK_FALSE(p == classifier_init(5, 4));
    const Tensor logits = classifier_logits(p, Tensor(4, 3, 64, 64, 0.3f));
    CHECK(logits.shape() == Shape{4, 5, 1, 1});
    CHECK(predict(p, Tensor(2, 3, 16, 16)).size() == 2);
    CHECK_THROWS_AS(classifier_init(1, 0), Error);
    CHECK_THROWS_AS(classifier_logits(p, Tensor(1, 1, 16, 16)), ShapeError);
    for (const ConvLayer& layer : p.convs) {
      const double expected = std::sqrt(2.0 / static_cast<double>(layer.fan_in()));
      double sq = 0.0;
      for (float w : layer.weight.values()) sq += double(w) * w;
      CHECK(std::sqrt(sq / static_cast<double>(layer.weight.size())) ==
            doctest::Approx(expected).epsilon(0.2));
    }
  }

  TEST_CASE("zero parameters give a uniform softmax") {
    const ClassifierParams p(4);
    const Tensor logits = classifier_logits(p, Tensor(3, 3, 16, 16, 0.8f));
    const std::vector<int> labels{0, 2, 3};
    CHECK(softmax_cross_entropy(logits, labels).loss == doctest::Approx(std::log(4.0)));
  }

  TEST_CASE("backward matches finite differences") {
    ClassifierParams p = classifier_init(3, 8);
    for (auto& b : p.dense_bias) b = 0.1f;
    Rng rng(4);
    const Tensor x = ref::random_tensor(2, 3, 16, 16, rng, 0.0f, 1.0f);
    const std::vector<int> labels{0, 2};
    const ClassifierTrace trace = classifier_forward_trace(p, x);
    const ClassifierGrads g = classifier_backward(p, trace, softmax_cross_entropy(trace.logits, labels).grad);
    auto loss_with = [&](const ClassifierParams& q) {
      return softmax_cross_entropy(classifier_logits(q, x), labels).loss;
    };
    auto numeric = [&](auto&& poke) {
      ClassifierParams q = p;
      // Small enough not to cross ReLU kinks.
      poke(q, 1e-3f);
      const double up = loss_with(q);
      q = p;
      poke(q, -1e-3f);
      return (up - loss_with(q)) / 2e-3;
    };
    for (std::size_t i : {0, 5, 100}) {
      const double n = numeric([i](ClassifierParams& q, float d) { q.dense_weight[i] += d; });
      CHECK(g.dense.d_weight[i] == doctest::Approx(n).epsilon(2e-2).scale(1e-3));
    }
    for (std::size_t i : {0, 50, 300}) {
      const double n = numeric([i](ClassifierParams& q, float d) { q.convs[0].weight[i] += d; });
      CHECK(g.convs[0].d_weight[i] == doctest::Approx(n).epsilon(5e-2).scale(1e-3));
    }
  }

  TEST_CASE("frozen layers receive no updates") {
    const LoadedSet train = toy_set(3, 8, 1);
    const LoadedSet val = toy_set(3, 4, 2);
    ClassifierTrainConfig cfg = quick_config(2);
    cfg.freeze_prefix = ClassifierParams::kConvBlocks;
    const ClassifierTrainResult r = classifier_train(train, val, cfg);
    // Training draws its initial weights from the "init" stream of its seed.
    const ClassifierParams init = classifier_init(3, derive_seed(cfg.seed, "init"));
    for (std::size_t k = 0; k < ClassifierParams::kConvBlocks; ++k) {
      CHECK(r.params.convs[k] == init.convs[k]);
      CHECK(r.params.frozen[k]);
    }
    CHECK_FALSE(r.params.dense_weight == init.dense_weight);

    cfg.freeze_prefix = ClassifierParams::kLayers + 1;
    CHECK_THROWS_AS(classifier_train(train, val, cfg), Error);
    ClassifierParams p(3);
    CHECK_THROWS_AS(p.freeze_prefix(6), Error);
  }

  TEST_CASE("gradient clipping caps the step and keeps its direction") {
    const LoadedSet train = toy_set(3, 8, 1);
    const LoadedSet val = toy_set(3, 4, 2);
    ClassifierTrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = train.size();  // one full-batch step
    cfg.momentum = 0.0;
    cfg.schedule = ScheduleSpec::cyclical(0.5, 50.0, 20);
    cfg.seed = 21;

    const ClassifierParams init = classifier_init(3, derive_seed(cfg.seed, "init"));
    const ClassifierTrace trace = classifier_forward_trace(init, train.images);
    const ClassifierGrads g =
        classifier_backward(init, trace, softmax_cross_entropy(trace.logits, train.labels).grad);
    std::vector<double> grad;
    std::vector<double> before;
    const auto append = [](std::vector<double>& out, std::span<const float> v) {
      out.insert(out.end(), v.begin(), v.end());
    };
    for (std::size_t k = 0; k < ClassifierParams::kConvBlocks; ++k) {
      append(grad, g.convs[k].d_weight.values());
      append(grad, g.convs[k].d_bias);
      append(before, init.convs[k].weight.values());
      append(before, init.convs[k].bias);
    }
    append(grad, g.dense.d_weight.values());
    append(grad, g.dense.d_bias);
    append(before, init.dense_weight.values());
    append(before, init.dense_bias);
    double norm = 0.0;
    for (double v : grad) norm += v * v;
    norm = std::sqrt(norm);

    cfg.grad_clip = 0.1 * norm;
    const ClassifierTrainResult r = classifier_train(train, val, cfg);
    std::vector<double> after;
    for (std::size_t k = 0; k < ClassifierParams::kConvBlocks; ++k) {
      append(after, r.params.convs[k].weight.values());
      append(after, r.params.convs[k].bias);
    }
    append(after, r.params.dense_weight.values());
    append(after, r.params.dense_bias);
    REQUIRE(after.size() == grad.size());

    double step = 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < after.size(); ++i) {
      const double d = after[i] - before[i];
      step += d * d;
      dot += -d * grad[i];
    }
    step = std::sqrt(step);
    CHECK(step == doctest::Approx(0.5 * cfg.grad_clip).epsilon(1e-3));
    CHECK(dot / (step * norm) > 0.999);
  }

  TEST_CASE("training learns toy data and is deterministic") {
    const LoadedSet train = toy_set(3, 16, 3);
    const LoadedSet val = toy_set(3, 8, 4);
    const ClassifierTrainConfig cfg = quick_config(15);
    const ClassifierTrainResult a = classifier_train(train, val, cfg);
    const ClassifierTrainResult b = classifier_train(train, val, cfg);
    REQUIRE(a.history.size() == 15);
    CHECK(a.history == b.history);
    CHECK(a.params == b.params);
    CHECK(a.best_epoch < 15);
    CHECK(a.history[a.best_epoch].val_accuracy >= 0.9);
    for (const auto& rec : a.history) CHECK(rec.val_accuracy <= a.history[a.best_epoch].val_accuracy);
    CHECK(a.history[0].lr == doctest::Approx(1e-3));
    CHECK(evaluate(a.params, val).accuracy == doctest::Approx(a.history[a.best_epoch].val_accuracy));
  }

  TEST_CASE("config validation") {
    ClassifierTrainConfig c;
    CHECK_NOTHROW(c.validate());
    c.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = ClassifierTrainConfig{};
    c.grad_clip = -1.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = ClassifierTrainConfig{};
    c.batch_size = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    const LoadedSet train = toy_set(2, 4, 1);
    LoadedSet other = toy_set(2, 4, 1);
    other.class_names = {"x", "y"};
    CHECK_THROWS_AS(classifier_train(train, other, quick_config(1)), Error);
  }

  TEST_CASE("scoring and evaluation") {
    const std::vector<int> labels{0, 0, 1, 1, 2, 2};
    const Evaluation oracle = score_predictions(3, labels, labels);
    CHECK(oracle.accuracy == 1.0);
    CHECK(oracle.total == 6);
    const std::vector<int> constant(6, 1);
    const Evaluation c = score_predictions(3, labels, constant);
    CHECK(c.accuracy == doctest::Approx(1.0 / 3.0));
    std::size_t sum = 0;
    for (std::size_t t = 0; t < 3; ++t) {
      std::size_t row = 0;
      for (std::size_t v : c.confusion[t]) row += v;
      CHECK(row == 2);
      sum += row;
    }
    CHECK(sum == 6);
    CHECK(c.confusion[0][1] == 2);
    CHECK_THROWS_AS(score_predictions(3, labels, std::vector<int>(5)), ShapeError);

    const LoadedSet test = toy_set(3, 5, 9);
    ClassifierParams p = classifier_init(3, 1);
    p.class_names = test.class_names;
    const Evaluation e = evaluate(p, test);
    CHECK(e.total == 15);
    CHECK(e.accuracy >= 0.0);
    CHECK(e.accuracy <= 1.0);
    LoadedSet renamed = test;
    renamed.class_names = {"a", "b", "c"};
    CHECK_THROWS_AS(evaluate(p, renamed), Error);
    const LoadedSet two = toy_set(2, 2, 1);
    ClassifierParams q = classifier_init(3, 1);
    CHECK_THROWS_AS(evaluate(q, two), Error);

    testutil::TempDir dir;
    write_confusion_csv(c, {"a", "b", "c"}, dir / "conf.csv");
    CHECK(testutil::slurp(dir / "conf.csv").find("a,0,2,0") != std::string::npos);
  }

  TEST_CASE("weight files") {
    testutil::TempDir dir;
    ClassifierParams p = classifier_init(4, 6);
    p.class_names = {"a", "b", "c", "d"};
    p.freeze_prefix(2);
    classifier_save(p, dir / "c.bin");
    CHECK(classifier_load(dir / "c.bin") == p);
    const std::string bytes = testutil::slurp(dir / "c.bin");
    testutil::write_text(dir / "cut.bin", bytes.substr(0, bytes.size() - 10));
    CHECK_THROWS_AS(classifier_load(dir / "cut.bin"), Error);
    ShiftNetParams s;
    shifter_save(s, dir / "s.bin");
    CHECK_THROWS_AS(classifier_load(dir / "s.bin"), ArchitectureError);
  }

  TEST_CASE("joint training does not depend on the order of the sets") {
    testutil::TempDir dir;
    ShapesOptions opt;
    opt.classes = 2;
    opt.per_class = 6;
    opt.resolution = 16;
    opt.seed = 1;
    const LabeledImageSet a = gen_shapes_dataset(dir / "a", opt);
    opt.seed = 2;
    const LabeledImageSet b = gen_shapes_dataset(dir / "b", opt);
    opt.seed = 3;
    const LabeledImageSet val = gen_shapes_dataset(dir / "val", opt);
    const ClassifierTrainConfig cfg = quick_config(2);
    const ClassifierTrainResult ab = classifier_train({a, b}, val, cfg);
    const ClassifierTrainResult ba = classifier_train({b, a}, val, cfg);
    CHECK(ab.params == ba.params);
    CHECK(ab.history == ba.history);

    opt.first_family = 3;
    const LabeledImageSet other = gen_shapes_dataset(dir / "other", opt);
    CHECK_THROWS_AS(classifier_train({a, other}, val, cfg), Error);
    CHECK_THROWS_AS(classifier_train(std::vector<LabeledImageSet>{}, val, cfg), Error);
  }

  TEST_CASE("the procedural dataset is learnable from clean images") {
    testutil::TempDir dir;
    ShapesOptions opt;  // 5 classes x 400 at 64x64
    opt.seed = 11;
    const LabeledImageSet all = gen_shapes_dataset(dir / "shapes", opt);
    SplitSpec spec;
    spec.seed = 11;
    const SplitResult parts = split(all, spec);
    ClassifierTrainConfig cfg;  // default budget
    cfg.seed = 11;
    const ClassifierTrainResult r = classifier_train({parts.train}, parts.val, cfg);
    MESSAGE("clean validation accuracy " << r.history[r.best_epoch].val_accuracy);
    CHECK(r.history[r.best_epoch].val_accuracy >= 0.9);
  }
}
