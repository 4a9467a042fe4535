#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dshift/config.hpp"

namespace dshift {

// Regime names in report order.
inline constexpr const char* kSourceSupervised = "source-supervised";
inline constexpr const char* kOursUnsupervised = "ours-unsupervised";
inline constexpr const char* kOursZeroShot = "ours-zero-shot";
inline constexpr const char* kTargetSupervised = "target-supervised";

struct RegimeResult {
  std::string regime;
  double clean_accuracy = 0.0;
  double degraded_accuracy = 0.0;
  std::size_t train_images = 0;
  std::size_t best_epoch = 0;  // 0-based
};

// A named ordering requirement between two regimes and whether it holds.
struct TrendCheck {
  std::string description;
  bool passed = false;
};

struct ExperimentReport {
  std::vector<RegimeResult> rows;
  std::string resolved_config;
  std::uint64_t seed = 0;
  std::size_t train_size = 0;
  std::size_t val_size = 0;
  std::size_t test_size = 0;
  std::vector<std::string> class_names;
  // Pairs used by each shifter, keyed by policy name.
  std::vector<std::pair<std::string, std::size_t>> pair_counts;
  std::vector<std::pair<std::string, double>> shifter_val_l2;

  const RegimeResult* find(const std::string& regime) const;
  // Trend requirements evaluated on the regimes present.
  std::vector<TrendCheck> trend() const;
  bool trend_holds() const;

  // Aligned text table with metadata, the trend verdict and the resolved config.
  std::string table() const;
  // `regime,clean_acc,degraded_acc` rows.
  std::string csv() const;
};

// Runs the whole protocol described by `config` under config.out: data
// preparation, pair generation and shifter training per policy, shifting,
// four classifier trainings and evaluation. Writes report.txt, report.csv and
// config.resolved into config.out. A failing stage is rethrown with the stage
// name prefixed to its message; the error kind is preserved.
ExperimentReport run_experiment(const RunConfig& config);

}  // namespace dshift
