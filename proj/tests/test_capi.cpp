#include <doctest.h>

#include <cmath>
#include <string>

#include "dshift/dshift.h"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

dshift_dataset* gen(const fs::path& out, size_t classes, size_t per_class, size_t resolution,
                    uint64_t seed, size_t first_family = 0) {
  dshift_gen_options o;
  dshift_gen_options_init(&o);
  o.classes = classes;
  o.per_class = per_class;
  o.resolution = resolution;
  o.seed = seed;
  o.first_family = first_family;
  dshift_dataset* set = nullptr;
  REQUIRE(dshift_gen_data(out.c_str(), &o, &set) == DSHIFT_OK);
  return set;
}

}  // namespace

TEST_CASE("capi: basics and errors") {
  dshift_set_verbosity(0);
  CHECK(std::string(dshift_version()).size() > 0);
  CHECK(dshift_shape_family_count() == 10);
  CHECK(std::string(dshift_shape_family_name(0)) == "square");
  CHECK(dshift_shape_family_name(10) == nullptr);
  CHECK(dshift_set_verbosity(5) == DSHIFT_ERR_USAGE);

  dshift_dataset* set = nullptr;
  CHECK(dshift_dataset_open("/nonexistent/folder", &set) == DSHIFT_ERR_DATA);
  CHECK(set == nullptr);
  CHECK(std::string(dshift_last_error()).find("/nonexistent/folder") != std::string::npos);
  CHECK(dshift_dataset_open(nullptr, &set) == DSHIFT_ERR_USAGE);
  CHECK(dshift_dataset_open("/tmp", nullptr) == DSHIFT_ERR_USAGE);

  dshift_gen_options o;
  dshift_gen_options_init(&o);
  CHECK(o.classes == 5);
  CHECK(o.per_class == 400);
  CHECK(o.resolution == 64);
  o.classes = 1;
  testutil::TempDir dir;
  CHECK(dshift_gen_data((dir / "x").c_str(), &o, &set) == DSHIFT_ERR_USAGE);

  dshift_shifter_options so;
  dshift_shifter_options_init(&so);
  CHECK(so.epochs == 100);
  CHECK(so.batch_size == 32);
  CHECK(so.lr == 0.01);
  CHECK(so.decay_factor == 0.5);
  CHECK(so.decay_every == 30);

  // Freeing NULL is harmless.
  dshift_dataset_free(nullptr);
  dshift_shifter_free(nullptr);
  dshift_classifier_free(nullptr);
  dshift_report_free(nullptr);
}

TEST_CASE("capi: datasets, degradation, shifting and classification") {
  dshift_set_verbosity(0);
  testutil::TempDir dir;
  dshift_dataset* clean = gen(dir / "clean", 2, 12, 16, 1);
  CHECK(dshift_dataset_size(clean) == 24);
  CHECK(dshift_dataset_class_count(clean) == 2);
  CHECK(dshift_dataset_class_size(clean, 1) == 12);
  CHECK(dshift_dataset_warning_count(clean) == 0);
  CHECK(dshift_dataset_class_name(clean, 2) == nullptr);

  dshift_camera* cam = nullptr;
  REQUIRE(dshift_camera_virtual(&cam) == DSHIFT_OK);
  size_t pairs = 0;
  REQUIRE(dshift_degrade_paired(clean, cam, 4, (dir / "pairs").c_str(), &pairs) == DSHIFT_OK);
  CHECK(pairs == 24);
  dshift_dataset* degraded = nullptr;
  REQUIRE(dshift_degrade_labeled(clean, cam, 5, (dir / "deg").c_str(), &degraded) == DSHIFT_OK);
  CHECK(dshift_dataset_size(degraded) == 24);
  dshift_camera_free(cam);

  testutil::write_text(dir / "cam.cfg", "camera.gamma = 0\n");
  CHECK(dshift_camera_load((dir / "cam.cfg").c_str(), &cam) == DSHIFT_ERR_USAGE);

  dshift_shifter_options so;
  dshift_shifter_options_init(&so);
  so.epochs = 2;
  so.batch_size = 8;
  dshift_shifter* shifter = nullptr;
  REQUIRE(dshift_shifter_train((dir / "pairs").c_str(), &so, &shifter) == DSHIFT_OK);
  CHECK(dshift_shifter_parameter_count(shifter) == 109251);
  CHECK(dshift_shifter_history_length(shifter) == 2);
  CHECK(dshift_shifter_train_l2(shifter, 0) > 0.0);
  CHECK(std::isfinite(dshift_shifter_val_l2(shifter, 1)));
  REQUIRE(dshift_shifter_save(shifter, (dir / "s.weights").c_str()) == DSHIFT_OK);
  REQUIRE(dshift_shifter_write_loss_log(shifter, (dir / "s.csv").c_str()) == DSHIFT_OK);
  dshift_shifter* loaded = nullptr;
  REQUIRE(dshift_shifter_load((dir / "s.weights").c_str(), &loaded) == DSHIFT_OK);
  CHECK(dshift_shifter_history_length(loaded) == 0);
  testutil::write_text(dir / "junk.weights", "junk");
  dshift_shifter* junk = nullptr;
  CHECK(dshift_shifter_load((dir / "junk.weights").c_str(), &junk) == DSHIFT_ERR_DATA);

  dshift_dataset* shifted = nullptr;
  REQUIRE(dshift_shift_dataset(loaded, clean, (dir / "shifted").c_str(), &shifted) == DSHIFT_OK);
  CHECK(dshift_dataset_size(shifted) == 24);

  dshift_classifier_options co;
  dshift_classifier_options_init(&co);
  CHECK(co.ramp_steps == 20);
  co.epochs = 2;
  co.batch_size = 8;
  const dshift_dataset* train[] = {clean, shifted};
  dshift_classifier* cls = nullptr;
  REQUIRE(dshift_classifier_train(train, 2, degraded, &co, &cls) == DSHIFT_OK);
  CHECK(dshift_classifier_class_count(cls) == 2);
  CHECK(dshift_classifier_history_length(cls) == 2);
  dshift_epoch_record rec;
  REQUIRE(dshift_classifier_history(cls, 0, &rec) == DSHIFT_OK);
  CHECK(rec.lr == doctest::Approx(1e-3));
  CHECK(dshift_classifier_history(cls, 5, &rec) == DSHIFT_ERR_USAGE);
  CHECK(dshift_classifier_best_epoch(cls) < 2);

  dshift_evaluation* ev = nullptr;
  REQUIRE(dshift_evaluate(cls, degraded, &ev) == DSHIFT_OK);
  CHECK(dshift_evaluation_total(ev) == 24);
  CHECK(dshift_evaluation_accuracy(ev) >= 0.0);
  CHECK(dshift_evaluation_accuracy(ev) <= 1.0);
  size_t total = 0;
  for (size_t t = 0; t < 2; ++t)
    for (size_t p = 0; p < 2; ++p) total += dshift_evaluation_confusion(ev, t, p);
  CHECK(total == 24);
  REQUIRE(dshift_evaluation_write_confusion(ev, cls, (dir / "conf.csv").c_str()) == DSHIFT_OK);
  CHECK(fs::exists(dir / "conf.csv"));
  dshift_evaluation_free(ev);

  REQUIRE(dshift_classifier_save(cls, (dir / "c.weights").c_str()) == DSHIFT_OK);
  dshift_classifier* cls2 = nullptr;
  REQUIRE(dshift_classifier_load((dir / "c.weights").c_str(), &cls2) == DSHIFT_OK);
  CHECK(std::string(dshift_classifier_class_name(cls2, 0)) == dshift_dataset_class_name(clean, 0));

  // Vocabulary mismatch.
  dshift_dataset* other = gen(dir / "other", 2, 4, 16, 1, 5);
  CHECK(dshift_evaluate(cls2, other, &ev) == DSHIFT_ERR_DATA);
  const dshift_dataset* mixed[] = {clean, other};
  dshift_classifier* bad = nullptr;
  CHECK(dshift_classifier_train(mixed, 2, clean, &co, &bad) == DSHIFT_ERR_DATA);
  CHECK(dshift_classifier_train(mixed, 0, clean, &co, &bad) == DSHIFT_ERR_USAGE);

  dshift_dataset_free(other);
  dshift_classifier_free(cls2);
  dshift_classifier_free(cls);
  dshift_dataset_free(shifted);
  dshift_shifter_free(loaded);
  dshift_shifter_free(shifter);
  dshift_dataset_free(degraded);
  dshift_dataset_free(clean);
}

TEST_CASE("capi: configuration and a tiny experiment") {
  dshift_set_verbosity(0);
  CHECK(dshift_config_key_count() > 30);
  const char* key = nullptr;
  const char* def = nullptr;
  REQUIRE(dshift_config_key(0, &key, &def, nullptr) == DSHIFT_OK);
  CHECK(std::string(key) == "seed");
  CHECK(dshift_config_key(1000, &key, nullptr, nullptr) == DSHIFT_ERR_USAGE);

  dshift_config* cfg = nullptr;
  CHECK(dshift_config_parse("nope = 1\n", &cfg) == DSHIFT_ERR_USAGE);
  REQUIRE(dshift_config_parse("data.classes = 2\ndata.per_class = 10\ndata.resolution = 16\n"
                              "data.pair_count = 20\nshifter.epochs = 1\nshifter.batch = 8\n"
                              "classifier.epochs = 1\nclassifier.batch = 8\n",
                              &cfg) == DSHIFT_OK);
  testutil::TempDir dir;
  REQUIRE(dshift_config_set(cfg, "out", (dir / "run").c_str()) == DSHIFT_OK);
  CHECK(dshift_config_set(cfg, "seed", "x") == DSHIFT_ERR_USAGE);
  CHECK(std::string(dshift_config_dump(cfg)).find("data.classes = 2") != std::string::npos);

  dshift_report* report = nullptr;
  REQUIRE(dshift_experiment_run(cfg, &report) == DSHIFT_OK);
  CHECK(dshift_report_row_count(report) == 4);
  const char* regime = nullptr;
  double c = -1, d = -1;
  REQUIRE(dshift_report_row(report, 3, &regime, &c, &d) == DSHIFT_OK);
  CHECK(std::string(regime) == "target-supervised");
  CHECK(c >= 0.0);
  CHECK(d <= 1.0);
  const int holds = dshift_report_trend_holds(report);
  CHECK((holds == 0 || holds == 1));
  CHECK(std::string(dshift_report_csv(report)).rfind("regime,", 0) == 0);
  CHECK(std::string(dshift_report_table(report)).size() > 0);
  dshift_report_free(report);

  REQUIRE(dshift_config_set(cfg, "data.clean", (dir / "missing").c_str()) == DSHIFT_OK);
  REQUIRE(dshift_config_set(cfg, "out", (dir / "run2").c_str()) == DSHIFT_OK);
  CHECK(dshift_experiment_run(cfg, &report) == DSHIFT_ERR_DATA);
  CHECK(std::string(dshift_last_error()).rfind("stage data", 0) == 0);
  dshift_config_free(cfg);
}
