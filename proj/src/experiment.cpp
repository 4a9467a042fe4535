#include "dshift/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dshift/error.hpp"
#include "dshift/log.hpp"
#include "dshift/random.hpp"

namespace fs = std::filesystem;

namespace dshift {

namespace {

template <class F>
auto run_stage(const std::string& name, F&& body) {
  log::info("stage " + name);
  try {
    return body();
  } catch (const Error& e) {
    throw Error(e.kind(), "stage " + name + ": " + e.what());
  } catch (const fs::filesystem_error& e) {
    throw Error(ErrorKind::data, "stage " + name + ": " + e.what());
  } catch (const std::exception& e) {
    throw Error(ErrorKind::training, "stage " + name + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw FileError(path.string(), "write failed");
}

std::string exact(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

// The same relative layout under a different root; every file must exist.
LabeledImageSet rebase(const LabeledImageSet& set, const fs::path& root) {
  LabeledImageSet out = set;
  out.root = root;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!fs::is_regular_file(out.file(i))) {
      throw FileError(out.file(i).string(), "recorded degraded copy is missing");
    }
  }
  return out;
}

// First `count` items of a seeded permutation of [0, n), in ascending order.
std::vector<std::size_t> choose(std::size_t n, std::size_t count, std::uint64_t seed) {
  auto order = permutation(n, seed);
  order.resize(std::min(count, n));
  std::sort(order.begin(), order.end());
  return order;
}

void write_history(const std::vector<EpochRecord>& history, const fs::path& path) {
  std::string text = "epoch,lr,train_loss,train_acc,val_loss,val_acc\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& r = history[e];
    text += std::to_string(e + 1) + "," + exact(r.lr) + "," + exact(r.train_loss) + "," +
            exact(r.train_accuracy) + "," + exact(r.val_loss) + "," + exact(r.val_accuracy) + "\n";
  }
  write_text(path, text);
}

struct Domains {
  LoadedSet train, val, test;
};

}  // namespace

const RegimeResult* ExperimentReport::find(const std::string& regime) const {
  for (const auto& row : rows) {
    if (row.regime == regime) return &row;
  }
  return nullptr;
}

std::vector<TrendCheck> ExperimentReport::trend() const {
  // Accuracies are count ratios; the slack only absorbs rounding.
  constexpr double kSlack = 1e-9;
  std::vector<TrendCheck> checks;
  const RegimeResult* source = find(kSourceSupervised);
  const RegimeResult* target = find(kTargetSupervised);
  const RegimeResult* zero_shot = find(kOursZeroShot);
  const RegimeResult* unsup = find(kOursUnsupervised);
  for (const RegimeResult* ours : {zero_shot, unsup}) {
    if (ours == nullptr) continue;
    checks.push_back({ours->regime + " degraded >= " + kSourceSupervised + " degraded + 0.05",
                      ours->degraded_accuracy + kSlack >= source->degraded_accuracy + 0.05});
    checks.push_back({std::string(kTargetSupervised) + " degraded >= " + ours->regime +
                          " degraded - 0.03",
                      target->degraded_accuracy + kSlack >= ours->degraded_accuracy - 0.03});
    checks.push_back({ours->regime + " clean >= " + kSourceSupervised + " clean - 0.02",
                      ours->clean_accuracy + kSlack >= source->clean_accuracy - 0.02});
  }
  if (zero_shot != nullptr && unsup != nullptr) {
    checks.push_back({std::string(kOursUnsupervised) + " degraded >= " + kOursZeroShot +
                          " degraded - 0.01",
                      unsup->degraded_accuracy + kSlack >= zero_shot->degraded_accuracy - 0.01});
  }
  return checks;
}

bool ExperimentReport::trend_holds() const {
  const auto checks = trend();
  return std::all_of(checks.begin(), checks.end(), [](const TrendCheck& c) { return c.passed; });
}

std::string ExperimentReport::table() const {
  std::ostringstream out;
  out << "Regime               Clean test  Degraded test  Train images  Best epoch\n";
  for (const auto& row : rows) {
    char line[160];
    std::snprintf(line, sizeof line, "%-20s %10s %14s %13zu %11zu\n", row.regime.c_str(),
                  fixed4(row.clean_accuracy).c_str(), fixed4(row.degraded_accuracy).c_str(),
                  row.train_images, row.best_epoch + 1);
    out << line;
  }
  out << "\nseed " << seed << "; classes " << class_names.size() << " (";
  for (std::size_t i = 0; i < class_names.size(); ++i) out << (i ? ", " : "") << class_names[i];
  out << "); split " << train_size << "/" << val_size << "/" << test_size << "\n";
  for (std::size_t i = 0; i < pair_counts.size(); ++i) {
    out << "shifter " << pair_counts[i].first << ": " << pair_counts[i].second
        << " pairs, final validation L2 " << exact(shifter_val_l2[i].second) << "\n";
  }
  out << "\ntrend:\n";
  for (const auto& check : trend()) {
    out << "  " << (check.passed ? "PASS " : "FAIL ") << check.description << "\n";
  }
  out << "verdict: " << (trend_holds() ? "PASS" : "FAIL") << "\n";
  out << "\nresolved config:\n" << resolved_config;
  return out.str();
}

std::string ExperimentReport::csv() const {
  std::string text = "regime,clean_acc,degraded_acc\n";
  for (const auto& row : rows) {
    text += row.regime + "," + exact(row.clean_accuracy) + "," + exact(row.degraded_accuracy) + "\n";
  }
  return text;
}

ExperimentReport run_experiment(const RunConfig& config) {
  config.validate();
  const fs::path out = config.out;
  const std::uint64_t seed = config.seed;

  ExperimentReport report;
  report.seed = seed;
  report.resolved_config = dump_config(config);
  run_stage("setup", [&] {
    fs::create_directories(out);
    write_text(out / "config.resolved", report.resolved_config);
  });

  // Task data: clean splits and their low-quality counterparts.
  SplitResult clean_split;
  SplitResult degraded_split;
  Domains clean, degraded;
  run_stage("data", [&] {
    LabeledImageSet full;
    if (config.clean.empty()) {
      full = gen_shapes_dataset(out / "data" / "clean",
                                ShapesOptions{config.classes, config.per_class, config.resolution,
                                              derive_seed(seed, "data"), 0});
    } else {
      full = scan_folder(config.clean);
    }
    SplitSpec spec = config.split;
    spec.seed = derive_seed(seed, "split");
    clean_split = split(full, spec);
    write_manifest(clean_split.train, out / "data" / "train.txt");
    write_manifest(clean_split.val, out / "data" / "val.txt");
    write_manifest(clean_split.test, out / "data" / "test.txt");

    if (config.degraded.empty()) {
      const fs::path root = out / "data" / "degraded";
      degraded_split.train = degrade_set(clean_split.train, config.camera,
                                         derive_seed(seed, "degrade-train"), root);
      degraded_split.val = degrade_set(clean_split.val, config.camera,
                                       derive_seed(seed, "degrade-val"), root);
      degraded_split.test = degrade_set(clean_split.test, config.camera,
                                        derive_seed(seed, "degrade-test"), root);
    } else {
      degraded_split.train = rebase(clean_split.train, config.degraded);
      degraded_split.val = rebase(clean_split.val, config.degraded);
      degraded_split.test = rebase(clean_split.test, config.degraded);
    }
    clean = {load_set(clean_split.train), load_set(clean_split.val), load_set(clean_split.test)};
    degraded = {load_set(degraded_split.train), load_set(degraded_split.val),
                load_set(degraded_split.test)};
    const Shape s = clean.train.images.shape();
    if (s.h % 4 != 0 || s.w % 4 != 0) {
      throw ShapeError("experiment", "image size", "height and width must be multiples of 4, got " +
                                                         s.str());
    }
    if (degraded.train.images.shape().h != s.h || degraded.train.images.shape().w != s.w) {
      throw ShapeError("experiment", "degraded image size",
                       "differs from the clean images (" + s.str() + ")");
    }
  });
  report.class_names = clean.train.class_names;
  report.train_size = clean.train.size();
  report.val_size = clean.val.size();
  report.test_size = clean.test.size();
  const std::size_t height = clean.train.images.h();
  const std::size_t width = clean.train.images.w();

  // Pool of pairs unrelated to the task classes, shared by both policies.
  LoadedPairs pool;
  run_stage("pair pool", [&] {
    PairedImageSet pool_set;
    if (!config.pairs.empty()) {
      pool_set = scan_pairs(config.pairs);
    } else {
      const std::size_t first = config.clean.empty() ? config.classes : 0;
      if (first >= kShapeFamilies) {
        throw usage_error("no procedural families left for the disjoint pool; set data.pairs or use fewer classes");
      }
      if (height != width) {
        throw usage_error("procedural pool needs square task images; set data.pairs");
      }
      const std::size_t families = kShapeFamilies - first;
      const std::size_t per_family = (config.pair_count + families - 1) / families;
      const LabeledImageSet source =
          gen_shapes_dataset(out / "pool" / "source",
                             ShapesOptions{families, per_family, height, derive_seed(seed, "pool"),
                                           first});
      pool_set = make_paired_set(source, config.camera, derive_seed(seed, "pool-pairs"),
                                 out / "pool" / "pairs");
    }
    if (pool_set.height != height || pool_set.width != width) {
      throw ShapeError("experiment", "pair size",
                       "pool pairs are " + std::to_string(pool_set.height) + "x" +
                           std::to_string(pool_set.width) + ", task images " +
                           std::to_string(height) + "x" + std::to_string(width));
    }
    pool = load_pairs(pool_set);
  });

  // Shifted copies of the clean train/val splits per policy.
  struct PolicyData {
    ShiftPolicy policy;
    LoadedSet train, val;
  };
  std::vector<PolicyData> shifted;
  for (ShiftPolicy policy : config.policies) {
    const std::string name = policy_name(policy);
    LoadedPairs pairs = run_stage("pairs (" + name + ")", [&] {
      std::size_t from_task = 0;
      if (policy == ShiftPolicy::unsupervised) {
        from_task = static_cast<std::size_t>(std::llround(config.unsupervised_fraction *
                                                          static_cast<double>(config.pair_count)));
        from_task = std::clamp<std::size_t>(from_task, 1, clean.train.size());
      }
      const std::size_t from_pool = config.pair_count - std::min(from_task, config.pair_count);
      const auto pool_idx = choose(pool.size(), from_pool, derive_seed(seed, "pool-" + name));
      const auto task_idx = choose(clean.train.size(), from_task, derive_seed(seed, "task-" + name));

      std::string manifest;
      for (std::size_t i : pool_idx) manifest += "pool " + std::to_string(i) + "\n";
      for (std::size_t i : task_idx) {
        manifest += "task " + clean_split.train.entries[i].path.generic_string() + "\n";
      }
      write_text(out / "pairs" / (name + ".txt"), manifest);

      const Tensor pool_clean = gather_batch(pool.clean, pool_idx);
      const Tensor pool_low = gather_batch(pool.low, pool_idx);
      if (task_idx.empty()) return LoadedPairs{pool_clean, pool_low};
      const Tensor task_clean = gather_batch(clean.train.images, task_idx);
      const Tensor task_low = gather_batch(degraded.train.images, task_idx);
      if (pool_idx.empty()) return LoadedPairs{task_clean, task_low};
      const std::vector<Tensor> c{pool_clean, task_clean};
      const std::vector<Tensor> l{pool_low, task_low};
      return LoadedPairs{stack(c), stack(l)};
    });
    report.pair_counts.emplace_back(name, pairs.size());

    const ShiftNetParams shifter = run_stage("shifter (" + name + ")", [&] {
      ShifterTrainConfig sc = config.shifter;
      sc.seed = derive_seed(seed, "shifter-" + name);
      ShifterTrainResult result = shifter_train(pairs, sc);
      shifter_save(result.params, out / "shifter" / (name + ".weights"));
      write_loss_log(result.history, out / "shifter" / (name + "_loss.csv"));
      const auto& curve = result.history.val_l2.empty() ? result.history.train_l2
                                                         : result.history.val_l2;
      report.shifter_val_l2.emplace_back(name, curve.back());
      return result.params;
    });

    run_stage("shift (" + name + ")", [&] {
      const fs::path root = out / "shifted" / name;
      const LabeledImageSet train = shift_dataset(shifter, clean_split.train, root);
      const LabeledImageSet val = shift_dataset(shifter, clean_split.val, root);
      shifted.push_back(PolicyData{policy, load_set(train), load_set(val)});
    });
  }

  // Four classifiers sharing one seed, so only their data differs.
  struct Regime {
    std::string name;
    std::vector<const LoadedSet*> train;
    std::vector<const LoadedSet*> val;
  };
  std::vector<Regime> regimes;
  regimes.push_back({kSourceSupervised, {&clean.train}, {&clean.val}});
  for (const ShiftPolicy policy : {ShiftPolicy::unsupervised, ShiftPolicy::zero_shot}) {
    for (const auto& data : shifted) {
      if (data.policy != policy) continue;
      regimes.push_back({policy == ShiftPolicy::zero_shot ? kOursZeroShot : kOursUnsupervised,
                         {&clean.train, &data.train},
                         {&clean.val, &data.val}});
    }
  }
  regimes.push_back({kTargetSupervised, {&degraded.train}, {&degraded.val}});

  ClassifierTrainConfig cc = config.classifier;
  cc.seed = derive_seed(seed, "classifier");
  for (const auto& regime : regimes) {
    report.rows.push_back(run_stage("classifier (" + regime.name + ")", [&] {
      const LoadedSet train = regime.train.size() == 1 ? *regime.train.front() : concat(regime.train);
      const LoadedSet val = regime.val.size() == 1 ? *regime.val.front() : concat(regime.val);
      const ClassifierTrainResult result = classifier_train(train, val, cc);
      const fs::path dir = out / "classifiers";
      classifier_save(result.params, dir / (regime.name + ".weights"));
      write_history(result.history, dir / (regime.name + "_history.csv"));
      const Evaluation on_clean = evaluate(result.params, clean.test);
      const Evaluation on_degraded = evaluate(result.params, degraded.test);
      write_confusion_csv(on_clean, report.class_names, dir / (regime.name + "_confusion_clean.csv"));
      write_confusion_csv(on_degraded, report.class_names,
                          dir / (regime.name + "_confusion_degraded.csv"));
      return RegimeResult{regime.name, on_clean.accuracy, on_degraded.accuracy, train.size(),
                          result.best_epoch};
    }));
  }

  run_stage("report", [&] {
    write_text(out / "report.txt", report.table());
    write_text(out / "report.csv", report.csv());
  });
  return report;
}

}  // namespace dshift
