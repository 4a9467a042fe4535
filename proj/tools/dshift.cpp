// dshift command-line tool. Uses only the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dshift/dshift.h"

namespace {

// Thrown to leave a command with the library's status.
struct Failure {
  dshift_status status;
};

void check(dshift_status status) {
  if (status != DSHIFT_OK) {
    std::cerr << "error: " << dshift_last_error() << "\n";
    throw Failure{status};
  }
}

[[noreturn]] void usage_failure(const std::string& message) {
  std::cerr << "error: " << message << "\n";
  throw Failure{DSHIFT_ERR_USAGE};
}

template <class T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using Dataset = std::unique_ptr<dshift_dataset, Deleter<dshift_dataset, dshift_dataset_free>>;
using Camera = std::unique_ptr<dshift_camera, Deleter<dshift_camera, dshift_camera_free>>;
using Shifter = std::unique_ptr<dshift_shifter, Deleter<dshift_shifter, dshift_shifter_free>>;
using Classifier =
    std::unique_ptr<dshift_classifier, Deleter<dshift_classifier, dshift_classifier_free>>;
using Evaluation =
    std::unique_ptr<dshift_evaluation, Deleter<dshift_evaluation, dshift_evaluation_free>>;
using Config = std::unique_ptr<dshift_config, Deleter<dshift_config, dshift_config_free>>;
using Report = std::unique_ptr<dshift_report, Deleter<dshift_report, dshift_report_free>>;

Dataset open_dataset(const std::string& root) {
  dshift_dataset* raw = nullptr;
  check(dshift_dataset_open(root.c_str(), &raw));
  Dataset set(raw);
  for (size_t i = 0; i < dshift_dataset_warning_count(set.get()); ++i) {
    std::cerr << "warning: " << dshift_dataset_warning(set.get(), i) << "\n";
  }
  return set;
}

void print_summary(const dshift_dataset* set) {
  std::cout << dshift_dataset_size(set) << " images in " << dshift_dataset_class_count(set)
            << " classes\n";
  for (size_t c = 0; c < dshift_dataset_class_count(set); ++c) {
    std::cout << "  " << dshift_dataset_class_name(set, c) << ": "
              << dshift_dataset_class_size(set, c) << "\n";
  }
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) {
    std::cerr << "error: cannot write " << path << "\n";
    throw Failure{DSHIFT_ERR_DATA};
  }
}

std::string format_accuracy(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// ---- commands ---------------------------------------------------------------

struct GenData {
  std::string out;
  dshift_gen_options options{};

  void run() {
    dshift_dataset* raw = nullptr;
    check(dshift_gen_data(out.c_str(), &options, &raw));
    Dataset set(raw);
    print_summary(set.get());
  }
};

struct Degrade {
  std::string in, out, config;
  uint64_t seed = 0;
  bool paired = false;
  bool labeled = false;

  void run() {
    if (!paired && !labeled) usage_failure("degrade needs --paired or --labeled");
    Dataset set = open_dataset(in);
    dshift_camera* raw = nullptr;
    if (config.empty()) {
      std::cerr << "notice: no --config given, using the virtual camera profile\n";
      check(dshift_camera_virtual(&raw));
    } else {
      check(dshift_camera_load(config.c_str(), &raw));
    }
    Camera camera(raw);
    if (paired) {
      size_t count = 0;
      check(dshift_degrade_paired(set.get(), camera.get(), seed, out.c_str(), &count));
      std::cout << count << " pairs written to " << out << "\n";
    } else {
      dshift_dataset* result = nullptr;
      check(dshift_degrade_labeled(set.get(), camera.get(), seed, out.c_str(), &result));
      Dataset degraded(result);
      std::cout << dshift_dataset_size(degraded.get()) << " images written to " << out << "\n";
    }
  }
};

struct TrainShifter {
  std::string pairs, out, log;
  dshift_shifter_options options{};

  void run() {
    dshift_shifter* raw = nullptr;
    check(dshift_shifter_train(pairs.c_str(), &options, &raw));
    Shifter shifter(raw);
    check(dshift_shifter_save(shifter.get(), out.c_str()));
    const std::string log_path = log.empty() ? out + ".loss.csv" : log;
    check(dshift_shifter_write_loss_log(shifter.get(), log_path.c_str()));
    const size_t n = dshift_shifter_history_length(shifter.get());
    std::cout << "trained " << n << " epochs; train L2 " << dshift_shifter_train_l2(shifter.get(), 0)
              << " -> " << dshift_shifter_train_l2(shifter.get(), n - 1);
    if (options.validation_fraction > 0.0) {
      std::cout << "; validation L2 " << dshift_shifter_val_l2(shifter.get(), 0) << " -> "
                << dshift_shifter_val_l2(shifter.get(), n - 1);
    }
    std::cout << "\nweights: " << out << "\nloss log: " << log_path << "\n";
  }
};

struct Shift {
  std::string weights, in, out;

  void run() {
    dshift_shifter* raw = nullptr;
    check(dshift_shifter_load(weights.c_str(), &raw));
    Shifter shifter(raw);
    Dataset set = open_dataset(in);
    dshift_dataset* result = nullptr;
    check(dshift_shift_dataset(shifter.get(), set.get(), out.c_str(), &result));
    Dataset shifted(result);
    std::cout << dshift_dataset_size(shifted.get()) << " images shifted into " << out << "\n";
  }
};

void report_evaluation(const dshift_classifier* classifier, const std::string& test,
                       const std::string& confusion) {
  Dataset set = open_dataset(test);
  dshift_evaluation* raw = nullptr;
  check(dshift_evaluate(classifier, set.get(), &raw));
  Evaluation eval(raw);
  std::cout << "accuracy " << format_accuracy(dshift_evaluation_accuracy(eval.get())) << " ("
            << dshift_evaluation_total(eval.get()) << " images) on " << test << "\n";
  if (!confusion.empty()) {
    check(dshift_evaluation_write_confusion(eval.get(), classifier, confusion.c_str()));
    std::cout << "confusion matrix: " << confusion << "\n";
  }
}

struct TrainClassifier {
  std::vector<std::string> train;
  std::string val, test, out, history, confusion;
  dshift_classifier_options options{};

  void run() {
    std::vector<Dataset> sets;
    std::vector<const dshift_dataset*> raw_sets;
    for (const auto& path : train) {
      sets.push_back(open_dataset(path));
      raw_sets.push_back(sets.back().get());
    }
    Dataset val_set = open_dataset(val);
    dshift_classifier* raw = nullptr;
    check(dshift_classifier_train(raw_sets.data(), raw_sets.size(), val_set.get(), &options, &raw));
    Classifier classifier(raw);
    check(dshift_classifier_save(classifier.get(), out.c_str()));

    const size_t best = dshift_classifier_best_epoch(classifier.get());
    dshift_epoch_record record{};
    check(dshift_classifier_history(classifier.get(), best, &record));
    std::cout << "best epoch " << best + 1 << " of " << dshift_classifier_history_length(classifier.get())
              << ": validation accuracy " << format_accuracy(record.val_accuracy) << "\nweights: " << out
              << "\n";
    if (!history.empty()) {
      std::string text = "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
      for (size_t e = 0; e < dshift_classifier_history_length(classifier.get()); ++e) {
        check(dshift_classifier_history(classifier.get(), e, &record));
        char line[256];
        std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g,%.17g,%.17g\n", e + 1, record.lr,
                      record.train_loss, record.train_accuracy, record.val_loss,
                      record.val_accuracy);
        text += line;
      }
      write_file(history, text);
    }
    if (!test.empty()) report_evaluation(classifier.get(), test, confusion);
  }
};

struct Eval {
  std::string weights, test, confusion;

  void run() {
    dshift_classifier* raw = nullptr;
    check(dshift_classifier_load(weights.c_str(), &raw));
    Classifier classifier(raw);
    report_evaluation(classifier.get(), test, confusion);
  }
};

struct Experiment {
  std::string config, out;
  std::vector<std::string> overrides;
  bool print_config = false;

  void run() {
    dshift_config* raw = nullptr;
    if (config.empty()) {
      check(dshift_config_default(&raw));
    } else {
      check(dshift_config_load(config.c_str(), &raw));
    }
    Config cfg(raw);
    for (const auto& item : overrides) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) usage_failure("--set expects key=value, got '" + item + "'");
      check(dshift_config_set(cfg.get(), item.substr(0, eq).c_str(), item.substr(eq + 1).c_str()));
    }
    if (!out.empty()) check(dshift_config_set(cfg.get(), "out", out.c_str()));
    if (print_config) {
      std::cout << dshift_config_dump(cfg.get());
      return;
    }
    dshift_report* report_raw = nullptr;
    check(dshift_experiment_run(cfg.get(), &report_raw));
    Report report(report_raw);
    std::cout << dshift_report_table(report.get());
  }
};

std::string keys_help() {
  std::string text = "Config keys (key = default: meaning):\n";
  for (size_t i = 0; i < dshift_config_key_count(); ++i) {
    const char* key = nullptr;
    const char* value = nullptr;
    const char* doc = nullptr;
    dshift_config_key(i, &key, &value, &doc);
    text += std::string("  ") + key + " = " + value + ": " + doc + "\n";
  }
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-shifting toolkit: synthesize low-quality training data with a learned "
               "camera model and compare classifier training regimes."};
  app.set_version_flag("--version", dshift_version());
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  bool quiet = false;
  bool debug = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress messages");
  app.add_flag("--debug", debug, "Print debug messages");

  GenData gen;
  dshift_gen_options_init(&gen.options);
  auto* gen_cmd = app.add_subcommand("gen-data", "Render the procedural object dataset");
  gen_cmd->add_option("--out", gen.out, "Output folder")->required();
  gen_cmd->add_option("--classes", gen.options.classes, "Number of object families")
      ->check(CLI::Range(2, 10));
  gen_cmd->add_option("--per-class", gen.options.per_class, "Images per class")
      ->check(CLI::PositiveNumber);
  gen_cmd->add_option("--size", gen.options.resolution, "Image side in pixels")
      ->check(CLI::Range(4, 4096));
  gen_cmd->add_option("--seed", gen.options.seed, "Random seed");
  gen_cmd->add_option("--first-family", gen.options.first_family, "Index of the first family used")
      ->check(CLI::Range(0, 9));

  Degrade degrade;
  auto* degrade_cmd = app.add_subcommand("degrade", "Pass images through the simulated camera");
  degrade_cmd->add_option("--in", degrade.in, "Labeled input folder")->required();
  degrade_cmd->add_option("--out", degrade.out, "Output folder")->required();
  degrade_cmd->add_option("--config", degrade.config,
                          "Camera profile (camera.* keys); default is the virtual camera");
  degrade_cmd->add_option("--seed", degrade.seed, "Noise and jitter seed");
  auto* paired_flag = degrade_cmd->add_flag("--paired", degrade.paired,
                                            "Write out/clean and out/low pairs");
  auto* labeled_flag =
      degrade_cmd->add_flag("--labeled", degrade.labeled, "Write a degraded labeled copy");
  paired_flag->excludes(labeled_flag);
  degrade_cmd->require_option(1, 0);

  TrainShifter train_shifter;
  dshift_shifter_options_init(&train_shifter.options);
  auto* ts_cmd = app.add_subcommand("train-shifter", "Train the domain-shifting network on pairs");
  ts_cmd->add_option("--pairs", train_shifter.pairs, "Paired folder with clean/ and low/")
      ->required();
  ts_cmd->add_option("--out", train_shifter.out, "Weight file to write")->required();
  ts_cmd->add_option("--log", train_shifter.log, "Loss log path (default <out>.loss.csv)");
  ts_cmd->add_option("--epochs", train_shifter.options.epochs, "Training epochs")
      ->check(CLI::PositiveNumber);
  ts_cmd->add_option("--batch", train_shifter.options.batch_size, "Batch size")
      ->check(CLI::PositiveNumber);
  ts_cmd->add_option("--lr", train_shifter.options.lr, "Initial Adam learning rate");
  ts_cmd->add_option("--decay", train_shifter.options.decay_factor, "Learning-rate decay factor");
  ts_cmd->add_option("--decay-every", train_shifter.options.decay_every, "Epochs between decays");
  ts_cmd->add_option("--val-fraction", train_shifter.options.validation_fraction,
                     "Share of pairs held out for validation");
  ts_cmd->add_option("--seed", train_shifter.options.seed, "Random seed");

  Shift shift;
  auto* shift_cmd = app.add_subcommand("shift", "Map a labeled folder into the target domain");
  shift_cmd->add_option("--weights", shift.weights, "Shifter weight file")->required();
  shift_cmd->add_option("--in", shift.in, "Labeled input folder")->required();
  shift_cmd->add_option("--out", shift.out, "Output folder")->required();

  TrainClassifier train_classifier;
  dshift_classifier_options_init(&train_classifier.options);
  auto* tc_cmd = app.add_subcommand("train-classifier", "Train the classifier on one or more folders");
  tc_cmd->add_option("--train", train_classifier.train,
                     "Training folder; repeat to train on the union")
      ->required();
  tc_cmd->add_option("--val", train_classifier.val, "Validation folder for model selection")
      ->required();
  tc_cmd->add_option("--out", train_classifier.out, "Weight file to write")->required();
  tc_cmd->add_option("--test", train_classifier.test, "Evaluate the selected model on this folder");
  tc_cmd->add_option("--confusion", train_classifier.confusion,
                     "Write the test confusion matrix here (needs --test)");
  tc_cmd->add_option("--history", train_classifier.history, "Write per-epoch history CSV here");
  tc_cmd->add_option("--epochs", train_classifier.options.epochs, "Training epochs")
      ->check(CLI::PositiveNumber);
  tc_cmd->add_option("--batch", train_classifier.options.batch_size, "Batch size")
      ->check(CLI::PositiveNumber);
  tc_cmd->add_option("--lr-min", train_classifier.options.lr_min, "Bottom of the cyclical ramp");
  tc_cmd->add_option("--lr-max", train_classifier.options.lr_max, "Top of the cyclical ramp");
  tc_cmd->add_option("--ramp", train_classifier.options.ramp_steps, "Epochs per ramp");
  tc_cmd->add_option("--momentum", train_classifier.options.momentum, "SGD momentum");
  tc_cmd->add_option("--clip", train_classifier.options.grad_clip,
                     "Gradient norm limit per step (0 disables)");
  tc_cmd->add_option("--freeze", train_classifier.options.freeze_prefix,
                     "Leading layers kept frozen (of 4 conv blocks + head)");
  tc_cmd->add_option("--seed", train_classifier.options.seed, "Random seed");

  Eval eval;
  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a classifier on a labeled folder");
  eval_cmd->add_option("--weights", eval.weights, "Classifier weight file")->required();
  eval_cmd->add_option("--test", eval.test, "Labeled test folder")->required();
  eval_cmd->add_option("--confusion", eval.confusion, "Write the confusion matrix CSV here");

  Experiment experiment;
  auto* exp_cmd = app.add_subcommand("experiment", "Run the four-regime comparison end to end");
  exp_cmd->add_option("--config", experiment.config, "Config file; omitted keys keep defaults");
  exp_cmd->add_option("--out", experiment.out, "Override the config's output directory");
  exp_cmd->add_option("--set", experiment.overrides, "Override one key (key=value); repeatable");
  exp_cmd->add_flag("--print-config", experiment.print_config,
                    "Print the resolved config and exit");
  exp_cmd->footer(keys_help());

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(DSHIFT_ERR_USAGE);
  }

  try {
    check(dshift_set_verbosity(debug ? 2 : quiet ? 0 : 1));
    if (*gen_cmd) gen.run();
    if (*degrade_cmd) degrade.run();
    if (*ts_cmd) train_shifter.run();
    if (*shift_cmd) shift.run();
    if (*tc_cmd) train_classifier.run();
    if (*eval_cmd) eval.run();
    if (*exp_cmd) experiment.run();
  } catch (const Failure& f) {
    return static_cast<int>(f.status);
  }
  return 0;
}
