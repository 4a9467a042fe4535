// extern "C" wrappers: every entry point converts exceptions into status
// codes and a thread-local message.

#include "dshift/dshift.h"

#include <cmath>
#include <limits>
#include <memory>
#include <new>
#include <string>
#include <vector>

#include "dshift/camsim.hpp"
#include "dshift/classify.hpp"
#include "dshift/config.hpp"
#include "dshift/data.hpp"
#include "dshift/error.hpp"
#include "dshift/experiment.hpp"
#include "dshift/log.hpp"
#include "dshift/shiftnet.hpp"

struct dshift_dataset {
  dshift::LabeledImageSet set;
};

struct dshift_camera {
  dshift::DegradationConfig config;
};

struct dshift_shifter {
  dshift::ShiftNetParams params;
  dshift::ShifterHistory history;
};

struct dshift_classifier {
  dshift::ClassifierParams params;
  std::vector<dshift::EpochRecord> history;
  std::size_t best_epoch = 0;
};

struct dshift_evaluation {
  dshift::Evaluation eval;
};

struct dshift_config {
  dshift::RunConfig config;
  std::string dump;
};

struct dshift_report {
  dshift::ExperimentReport report;
  std::string table;
  std::string csv;
};

namespace {

thread_local std::string last_error;

dshift_status fail(dshift_status status, const std::string& message) {
  last_error = message;
  return status;
}

// Runs `body`, translating exceptions into a status.
template <class F>
dshift_status guard(F&& body) {
  try {
    body();
    return DSHIFT_OK;
  } catch (const dshift::Error& e) {
    return fail(static_cast<dshift_status>(static_cast<int>(e.kind())), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(DSHIFT_ERR_DATA, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DSHIFT_ERR_DATA, "out of memory");
  } catch (const std::exception& e) {
    return fail(DSHIFT_ERR_TRAINING, e.what());
  } catch (...) {
    return fail(DSHIFT_ERR_TRAINING, "unknown error");
  }
}

void require(const void* ptr, const char* what) {
  if (ptr == nullptr) throw dshift::usage_error(std::string(what) + " must not be NULL");
}

dshift_dataset* wrap(dshift::LabeledImageSet set) {
  return new dshift_dataset{std::move(set)};
}

}  // namespace

extern "C" {

const char* dshift_version(void) { return "1.0.0"; }

const char* dshift_last_error(void) { return last_error.c_str(); }

dshift_status dshift_set_verbosity(int level) {
  return guard([&] {
    switch (level) {
      case 0: dshift::log::set_level(dshift::log::Level::quiet); break;
      case 1: dshift::log::set_level(dshift::log::Level::info); break;
      case 2: dshift::log::set_level(dshift::log::Level::debug); break;
      default: throw dshift::usage_error("verbosity must be 0, 1 or 2");
    }
  });
}

// ---- datasets ---------------------------------------------------------------

void dshift_gen_options_init(dshift_gen_options* options) {
  if (options == nullptr) return;
  const dshift::ShapesOptions d;
  *options = dshift_gen_options{d.classes, d.per_class, d.resolution, d.seed, d.first_family};
}

size_t dshift_shape_family_count(void) { return dshift::kShapeFamilies; }

const char* dshift_shape_family_name(size_t family) {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < dshift::kShapeFamilies; ++i) n.push_back(dshift::shape_family_name(i));
    return n;
  }();
  return family < names.size() ? names[family].c_str() : nullptr;
}

dshift_status dshift_gen_data(const char* out, const dshift_gen_options* options,
                              dshift_dataset** result) {
  return guard([&] {
    require(out, "out");
    require(result, "result");
    dshift_gen_options o;
    dshift_gen_options_init(&o);
    if (options != nullptr) o = *options;
    auto set = dshift::gen_shapes_dataset(
        out, dshift::ShapesOptions{o.classes, o.per_class, o.resolution, o.seed, o.first_family});
    *result = wrap(std::move(set));
  });
}

dshift_status dshift_dataset_open(const char* root, dshift_dataset** result) {
  return guard([&] {
    require(root, "root");
    require(result, "result");
    *result = wrap(dshift::scan_folder(root));
  });
}

void dshift_dataset_free(dshift_dataset* set) { delete set; }

size_t dshift_dataset_size(const dshift_dataset* set) { return set ? set->set.size() : 0; }

size_t dshift_dataset_class_count(const dshift_dataset* set) {
  return set ? set->set.class_names.size() : 0;
}

const char* dshift_dataset_class_name(const dshift_dataset* set, size_t index) {
  if (set == nullptr || index >= set->set.class_names.size()) return nullptr;
  return set->set.class_names[index].c_str();
}

size_t dshift_dataset_class_size(const dshift_dataset* set, size_t index) {
  if (set == nullptr || index >= set->set.class_names.size()) return 0;
  return set->set.class_counts()[index];
}

size_t dshift_dataset_warning_count(const dshift_dataset* set) {
  return set ? set->set.warnings.size() : 0;
}

const char* dshift_dataset_warning(const dshift_dataset* set, size_t index) {
  if (set == nullptr || index >= set->set.warnings.size()) return nullptr;
  return set->set.warnings[index].c_str();
}

size_t dshift_dataset_ignored_files(const dshift_dataset* set) {
  return set ? set->set.ignored_files : 0;
}

// ---- camera -----------------------------------------------------------------

dshift_status dshift_camera_virtual(dshift_camera** result) {
  return guard([&] {
    require(result, "result");
    *result = new dshift_camera{dshift::DegradationConfig::virtual_camera()};
  });
}

dshift_status dshift_camera_identity(dshift_camera** result) {
  return guard([&] {
    require(result, "result");
    *result = new dshift_camera{dshift::DegradationConfig::identity()};
  });
}

dshift_status dshift_camera_load(const char* path, dshift_camera** result) {
  return guard([&] {
    require(path, "path");
    require(result, "result");
    *result = new dshift_camera{dshift::load_camera_config(path)};
  });
}

void dshift_camera_free(dshift_camera* camera) { delete camera; }

dshift_status dshift_degrade_paired(const dshift_dataset* set, const dshift_camera* camera,
                                    uint64_t seed, const char* out, size_t* pair_count) {
  return guard([&] {
    require(set, "set");
    require(camera, "camera");
    require(out, "out");
    const auto pairs = dshift::make_paired_set(set->set, camera->config, seed, out);
    if (pair_count != nullptr) *pair_count = pairs.size();
  });
}

dshift_status dshift_degrade_labeled(const dshift_dataset* set, const dshift_camera* camera,
                                     uint64_t seed, const char* out, dshift_dataset** result) {
  return guard([&] {
    require(set, "set");
    require(camera, "camera");
    require(out, "out");
    auto degraded = dshift::degrade_set(set->set, camera->config, seed, out);
    if (result != nullptr) *result = wrap(std::move(degraded));
  });
}

// ---- shifter ----------------------------------------------------------------

void dshift_shifter_options_init(dshift_shifter_options* options) {
  if (options == nullptr) return;
  const dshift::ShifterTrainConfig d;
  *options = dshift_shifter_options{d.epochs,
                                    d.batch_size,
                                    d.schedule.base_lr,
                                    d.schedule.decay_factor,
                                    d.schedule.decay_every,
                                    d.validation_fraction,
                                    d.seed};
}

dshift_status dshift_shifter_train(const char* pairs_root, const dshift_shifter_options* options,
                                   dshift_shifter** result) {
  return guard([&] {
    require(pairs_root, "pairs_root");
    require(result, "result");
    dshift_shifter_options o;
    dshift_shifter_options_init(&o);
    if (options != nullptr) o = *options;
    dshift::ShifterTrainConfig config;
    config.epochs = o.epochs;
    config.batch_size = o.batch_size;
    config.schedule = dshift::ScheduleSpec::step_decay(o.lr, o.decay_factor, o.decay_every);
    config.validation_fraction = o.validation_fraction;
    config.seed = o.seed;
    config.validate();
    auto trained = dshift::shifter_train(dshift::scan_pairs(pairs_root), config);
    *result = new dshift_shifter{std::move(trained.params), std::move(trained.history)};
  });
}

dshift_status dshift_shifter_load(const char* path, dshift_shifter** result) {
  return guard([&] {
    require(path, "path");
    require(result, "result");
    *result = new dshift_shifter{dshift::shifter_load(path), {}};
  });
}

dshift_status dshift_shifter_save(const dshift_shifter* shifter, const char* path) {
  return guard([&] {
    require(shifter, "shifter");
    require(path, "path");
    dshift::shifter_save(shifter->params, path);
  });
}

void dshift_shifter_free(dshift_shifter* shifter) { delete shifter; }

size_t dshift_shifter_parameter_count(const dshift_shifter* shifter) {
  return shifter ? shifter->params.parameter_count() : 0;
}

size_t dshift_shifter_history_length(const dshift_shifter* shifter) {
  return shifter ? shifter->history.train_l2.size() : 0;
}

double dshift_shifter_train_l2(const dshift_shifter* shifter, size_t epoch) {
  if (shifter == nullptr || epoch >= shifter->history.train_l2.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return shifter->history.train_l2[epoch];
}

double dshift_shifter_val_l2(const dshift_shifter* shifter, size_t epoch) {
  if (shifter == nullptr || epoch >= shifter->history.val_l2.size()) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return shifter->history.val_l2[epoch];
}

dshift_status dshift_shifter_write_loss_log(const dshift_shifter* shifter, const char* path) {
  return guard([&] {
    require(shifter, "shifter");
    require(path, "path");
    dshift::write_loss_log(shifter->history, path);
  });
}

dshift_status dshift_shift_dataset(const dshift_shifter* shifter, const dshift_dataset* set,
                                   const char* out, dshift_dataset** result) {
  return guard([&] {
    require(shifter, "shifter");
    require(set, "set");
    require(out, "out");
    auto shifted = dshift::shift_dataset(shifter->params, set->set, out);
    if (result != nullptr) *result = wrap(std::move(shifted));
  });
}

// ---- classifier -------------------------------------------------------------

void dshift_classifier_options_init(dshift_classifier_options* options) {
  if (options == nullptr) return;
  const dshift::ClassifierTrainConfig d;
  *options = dshift_classifier_options{d.epochs,   d.batch_size,       d.schedule.lr_min,
                                       d.schedule.lr_max, d.schedule.ramp_steps, d.momentum,
                                       d.grad_clip,       d.freeze_prefix,     d.seed};
}

dshift_status dshift_classifier_train(const dshift_dataset* const* train, size_t train_count,
                                      const dshift_dataset* val,
                                      const dshift_classifier_options* options,
                                      dshift_classifier** result) {
  return guard([&] {
    require(train, "train");
    require(val, "val");
    require(result, "result");
    if (train_count == 0) throw dshift::usage_error("at least one training set is required");
    std::vector<dshift::LabeledImageSet> sets;
    for (size_t i = 0; i < train_count; ++i) {
      require(train[i], "train[i]");
      sets.push_back(train[i]->set);
    }
    dshift_classifier_options o;
    dshift_classifier_options_init(&o);
    if (options != nullptr) o = *options;
    dshift::ClassifierTrainConfig config;
    config.epochs = o.epochs;
    config.batch_size = o.batch_size;
    config.schedule = dshift::ScheduleSpec::cyclical(o.lr_min, o.lr_max, o.ramp_steps);
    config.momentum = o.momentum;
    config.grad_clip = o.grad_clip;
    config.freeze_prefix = o.freeze_prefix;
    config.seed = o.seed;
    auto trained = dshift::classifier_train(sets, val->set, config);
    *result = new dshift_classifier{std::move(trained.params), std::move(trained.history),
                                    trained.best_epoch};
  });
}

dshift_status dshift_classifier_load(const char* path, dshift_classifier** result) {
  return guard([&] {
    require(path, "path");
    require(result, "result");
    *result = new dshift_classifier{dshift::classifier_load(path), {}, 0};
  });
}

dshift_status dshift_classifier_save(const dshift_classifier* classifier, const char* path) {
  return guard([&] {
    require(classifier, "classifier");
    require(path, "path");
    dshift::classifier_save(classifier->params, path);
  });
}

void dshift_classifier_free(dshift_classifier* classifier) { delete classifier; }

size_t dshift_classifier_class_count(const dshift_classifier* classifier) {
  return classifier ? classifier->params.classes() : 0;
}

const char* dshift_classifier_class_name(const dshift_classifier* classifier, size_t index) {
  if (classifier == nullptr || index >= classifier->params.class_names.size()) return nullptr;
  return classifier->params.class_names[index].c_str();
}

size_t dshift_classifier_history_length(const dshift_classifier* classifier) {
  return classifier ? classifier->history.size() : 0;
}

dshift_status dshift_classifier_history(const dshift_classifier* classifier, size_t epoch,
                                        dshift_epoch_record* record) {
  return guard([&] {
    require(classifier, "classifier");
    require(record, "record");
    if (epoch >= classifier->history.size()) {
      throw dshift::usage_error("epoch " + std::to_string(epoch) + " out of range");
    }
    const auto& r = classifier->history[epoch];
    *record = dshift_epoch_record{r.lr, r.train_loss, r.train_accuracy, r.val_loss, r.val_accuracy};
  });
}

size_t dshift_classifier_best_epoch(const dshift_classifier* classifier) {
  return classifier ? classifier->best_epoch : 0;
}

dshift_status dshift_evaluate(const dshift_classifier* classifier, const dshift_dataset* test,
                              dshift_evaluation** result) {
  return guard([&] {
    require(classifier, "classifier");
    require(test, "test");
    require(result, "result");
    *result = new dshift_evaluation{dshift::evaluate(classifier->params, test->set)};
  });
}

void dshift_evaluation_free(dshift_evaluation* evaluation) { delete evaluation; }

double dshift_evaluation_accuracy(const dshift_evaluation* evaluation) {
  return evaluation ? evaluation->eval.accuracy : std::numeric_limits<double>::quiet_NaN();
}

double dshift_evaluation_loss(const dshift_evaluation* evaluation) {
  return evaluation ? evaluation->eval.loss : std::numeric_limits<double>::quiet_NaN();
}

size_t dshift_evaluation_total(const dshift_evaluation* evaluation) {
  return evaluation ? evaluation->eval.total : 0;
}

size_t dshift_evaluation_confusion(const dshift_evaluation* evaluation, size_t truth,
                                   size_t predicted) {
  if (evaluation == nullptr) return 0;
  const auto& m = evaluation->eval.confusion;
  if (truth >= m.size() || predicted >= m[truth].size()) return 0;
  return m[truth][predicted];
}

dshift_status dshift_evaluation_write_confusion(const dshift_evaluation* evaluation,
                                                const dshift_classifier* classifier,
                                                const char* path) {
  return guard([&] {
    require(evaluation, "evaluation");
    require(classifier, "classifier");
    require(path, "path");
    dshift::write_confusion_csv(evaluation->eval, classifier->params.class_names, path);
  });
}

// ---- config and experiment --------------------------------------------------

dshift_status dshift_config_default(dshift_config** result) {
  return guard([&] {
    require(result, "result");
    *result = new dshift_config{};
  });
}

dshift_status dshift_config_load(const char* path, dshift_config** result) {
  return guard([&] {
    require(path, "path");
    require(result, "result");
    *result = new dshift_config{dshift::load_config(path), {}};
  });
}

dshift_status dshift_config_parse(const char* text, dshift_config** result) {
  return guard([&] {
    require(text, "text");
    require(result, "result");
    *result = new dshift_config{dshift::parse_config(text), {}};
  });
}

void dshift_config_free(dshift_config* config) { delete config; }

dshift_status dshift_config_set(dshift_config* config, const char* key, const char* value) {
  return guard([&] {
    require(config, "config");
    require(key, "key");
    require(value, "value");
    dshift::config_set(config->config, key, value);
  });
}

const char* dshift_config_dump(dshift_config* config) {
  if (config == nullptr) return nullptr;
  config->dump = dshift::dump_config(config->config);
  return config->dump.c_str();
}

size_t dshift_config_key_count(void) { return dshift::config_keys().size(); }

dshift_status dshift_config_key(size_t index, const char** key, const char** default_value,
                                const char** description) {
  static const std::vector<dshift::ConfigKey> keys = dshift::config_keys();
  return guard([&] {
    if (index >= keys.size()) {
      throw dshift::usage_error("config key index " + std::to_string(index) + " out of range");
    }
    if (key != nullptr) *key = keys[index].key.c_str();
    if (default_value != nullptr) *default_value = keys[index].default_value.c_str();
    if (description != nullptr) *description = keys[index].description.c_str();
  });
}

dshift_status dshift_experiment_run(const dshift_config* config, dshift_report** result) {
  return guard([&] {
    require(config, "config");
    require(result, "result");
    auto report = std::make_unique<dshift_report>();
    report->report = dshift::run_experiment(config->config);
    report->table = report->report.table();
    report->csv = report->report.csv();
    *result = report.release();
  });
}

void dshift_report_free(dshift_report* report) { delete report; }

size_t dshift_report_row_count(const dshift_report* report) {
  return report ? report->report.rows.size() : 0;
}

dshift_status dshift_report_row(const dshift_report* report, size_t index, const char** regime,
                                double* clean_accuracy, double* degraded_accuracy) {
  return guard([&] {
    require(report, "report");
    if (index >= report->report.rows.size()) {
      throw dshift::usage_error("report row " + std::to_string(index) + " out of range");
    }
    const auto& row = report->report.rows[index];
    if (regime != nullptr) *regime = row.regime.c_str();
    if (clean_accuracy != nullptr) *clean_accuracy = row.clean_accuracy;
    if (degraded_accuracy != nullptr) *degraded_accuracy = row.degraded_accuracy;
  });
}

int dshift_report_trend_holds(const dshift_report* report) {
  return report != nullptr && report->report.trend_holds() ? 1 : 0;
}

const char* dshift_report_table(const dshift_report* report) {
  return report ? report->table.c_str() : nullptr;
}

const char* dshift_report_csv(const dshift_report* report) {
  return report ? report->csv.c_str() : nullptr;
}

}  // extern "C"
