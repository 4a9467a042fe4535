#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dshift/camsim.hpp"
#include "dshift/classify.hpp"
#include "dshift/data.hpp"
#include "dshift/shiftnet.hpp"

namespace dshift {

// How the shifter's paired data relates to the classification classes.
enum class ShiftPolicy {
  zero_shot,     // pairs come only from image families disjoint from the task
  unsupervised,  // a fraction of the pairs shows task-class objects
};

std::string policy_name(ShiftPolicy policy);

// Everything needed to reproduce one experiment. Serialized as flat
// `key = value` lines; see config_keys() for the documented keys.
struct RunConfig {
  std::uint64_t seed = 0;
  std::filesystem::path out = "experiment";
  std::vector<ShiftPolicy> policies{ShiftPolicy::zero_shot, ShiftPolicy::unsupervised};

  // Labeled clean images (<class>/<file>); empty means generate procedurally.
  std::filesystem::path clean;
  // Recorded low-quality copies of `clean` with mirrored relative paths;
  // empty means synthesize them with the camera model.
  std::filesystem::path degraded;
  // Paired set (clean/ and low/) used as the disjoint pair pool; empty means
  // render unrelated procedural families and degrade them with the camera.
  std::filesystem::path pairs;

  std::size_t classes = 5;
  std::size_t per_class = 400;
  std::size_t resolution = 64;
  std::size_t pair_count = 500;
  double unsupervised_fraction = 0.2;
  SplitSpec split;

  ShifterTrainConfig shifter;
  ClassifierTrainConfig classifier;
  DegradationConfig camera = DegradationConfig::virtual_camera();

  // Desk-scale budget: fewer epochs than the library defaults so that a
  // fully-defaulted experiment finishes in minutes on one CPU core.
  RunConfig();

  void validate() const;
  bool operator==(const RunConfig&) const;
};

struct ConfigKey {
  std::string key;
  std::string default_value;
  std::string description;
};

// Every accepted key with its default and meaning, in dump order.
std::vector<ConfigKey> config_keys();

// Parses `key = value` lines over the defaults. Unknown keys, duplicate keys
// and malformed values are usage errors naming `origin` and the line.
RunConfig parse_config(std::string_view text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);

// Sets one key from its text form (no cross-field validation).
void config_set(RunConfig& config, const std::string& key, const std::string& value);

// Resolved configuration; parse_config(dump_config(c)) == c.
std::string dump_config(const RunConfig& config);

// Reads a camera profile. The file uses the same format; only `camera.` keys
// are allowed.
DegradationConfig load_camera_config(const std::filesystem::path& path);

}  // namespace dshift
