#include "dshift/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "dshift/error.hpp"

namespace fs = std::filesystem;

namespace dshift {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

// Shortest text that reads back to the same double.
std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_double(const std::string& text) {
  double v = 0.0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw usage_error("expected a number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_uint(const std::string& text) {
  std::uint64_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw usage_error("expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true") return true;
  if (text == "false") return false;
  throw usage_error("expected true or false, got '" + text + "'");
}

std::vector<std::string> split_list(const std::string& text, char sep) {
  std::vector<std::string> items;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, sep)) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

ShiftPolicy parse_policy(const std::string& text) {
  if (text == "zero-shot") return ShiftPolicy::zero_shot;
  if (text == "unsupervised") return ShiftPolicy::unsupervised;
  throw usage_error("unknown policy '" + text + "' (expected zero-shot or unsupervised)");
}

struct KeySpec {
  std::string key;
  std::string description;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define DSHIFT_SIZE_KEY(name, field, doc)                                        \
  KeySpec {                                                                      \
    name, doc, [](const RunConfig& c) { return std::to_string(c.field); },       \
        [](RunConfig& c, const std::string& v) {                                 \
          c.field = static_cast<decltype(c.field)>(parse_uint(v));               \
        }                                                                        \
  }
#define DSHIFT_DOUBLE_KEY(name, field, doc)                                      \
  KeySpec {                                                                      \
    name, doc, [](const RunConfig& c) { return format_double(c.field); },        \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(v); }    \
  }
#define DSHIFT_PATH_KEY(name, field, doc)                                        \
  KeySpec {                                                                      \
    name, doc, [](const RunConfig& c) { return c.field.string(); },              \
        [](RunConfig& c, const std::string& v) { c.field = v; }                  \
  }

const std::vector<KeySpec>& registry() {
  static const std::vector<KeySpec> keys = {
      DSHIFT_SIZE_KEY("seed", seed, "top-level seed; every stage derives its own stream from it"),
      DSHIFT_PATH_KEY("out", out, "output directory for data, weights and reports"),
      KeySpec{"policies", "comma-separated shifter policies to run: zero-shot, unsupervised",
              [](const RunConfig& c) {
                std::string s;
                for (std::size_t i = 0; i < c.policies.size(); ++i) {
                  s += (i ? "," : "") + policy_name(c.policies[i]);
                }
                return s;
              },
              [](RunConfig& c, const std::string& v) {
                c.policies.clear();
                for (const auto& item : split_list(v, ',')) c.policies.push_back(parse_policy(item));
              }},

      DSHIFT_PATH_KEY("data.clean", clean, "labeled clean image folder; empty generates the procedural set"),
      DSHIFT_PATH_KEY("data.degraded", degraded,
                      "recorded low-quality copy of data.clean; empty synthesizes it with the camera"),
      DSHIFT_PATH_KEY("data.pairs", pairs,
                      "paired folder (clean/, low/) for the disjoint pool; empty renders other families"),
      DSHIFT_SIZE_KEY("data.classes", classes, "procedural classes (task families)"),
      DSHIFT_SIZE_KEY("data.per_class", per_class, "procedural images per class"),
      DSHIFT_SIZE_KEY("data.resolution", resolution, "procedural image side in pixels (multiple of 4)"),
      DSHIFT_SIZE_KEY("data.pair_count", pair_count, "pairs used to train each shifter"),
      DSHIFT_DOUBLE_KEY("data.unsupervised_fraction", unsupervised_fraction,
                        "share of unsupervised-policy pairs drawn from the task training split"),
      DSHIFT_DOUBLE_KEY("data.train", split.train, "training fraction of each class"),
      DSHIFT_DOUBLE_KEY("data.val", split.val, "validation fraction of each class"),
      DSHIFT_DOUBLE_KEY("data.test", split.test, "test fraction of each class"),
      KeySpec{"data.stratified", "split each class separately (true) or the pooled set (false)",
              [](const RunConfig& c) { return std::string(c.split.stratified ? "true" : "false"); },
              [](RunConfig& c, const std::string& v) { c.split.stratified = parse_bool(v); }},

      DSHIFT_SIZE_KEY("shifter.epochs", shifter.epochs, "shifter training epochs"),
      DSHIFT_SIZE_KEY("shifter.batch", shifter.batch_size, "shifter batch size"),
      DSHIFT_DOUBLE_KEY("shifter.lr", shifter.schedule.base_lr, "initial Adam learning rate"),
      DSHIFT_DOUBLE_KEY("shifter.decay_factor", shifter.schedule.decay_factor,
                        "learning-rate multiplier applied every decay_every epochs"),
      DSHIFT_SIZE_KEY("shifter.decay_every", shifter.schedule.decay_every, "epochs between decays"),
      DSHIFT_DOUBLE_KEY("shifter.beta1", shifter.beta1, "Adam first-moment decay"),
      DSHIFT_DOUBLE_KEY("shifter.beta2", shifter.beta2, "Adam second-moment decay"),
      DSHIFT_DOUBLE_KEY("shifter.eps", shifter.eps, "Adam epsilon"),
      DSHIFT_DOUBLE_KEY("shifter.validation_fraction", shifter.validation_fraction,
                        "share of pairs held out to measure L2"),

      DSHIFT_SIZE_KEY("classifier.epochs", classifier.epochs, "classifier training epochs"),
      DSHIFT_SIZE_KEY("classifier.batch", classifier.batch_size, "classifier batch size"),
      DSHIFT_DOUBLE_KEY("classifier.lr_min", classifier.schedule.lr_min, "bottom of the cyclical ramp"),
      DSHIFT_DOUBLE_KEY("classifier.lr_max", classifier.schedule.lr_max, "top of the cyclical ramp"),
      DSHIFT_SIZE_KEY("classifier.ramp_steps", classifier.schedule.ramp_steps,
                      "epochs per ramp before restarting at lr_min"),
      DSHIFT_DOUBLE_KEY("classifier.momentum", classifier.momentum, "SGD momentum (0 = plain SGD)"),
      DSHIFT_DOUBLE_KEY("classifier.grad_clip", classifier.grad_clip,
                        "global gradient-norm limit per step (0 = no clipping)"),
      DSHIFT_SIZE_KEY("classifier.freeze", classifier.freeze_prefix,
                      "leading layers (of 4 conv blocks + head) kept at their initial values"),

      DSHIFT_DOUBLE_KEY("camera.gamma", camera.gamma, "range-map exponent"),
      DSHIFT_DOUBLE_KEY("camera.black_lift", camera.black_lift, "output level of black"),
      DSHIFT_DOUBLE_KEY("camera.white_clip", camera.white_clip, "output level of white"),
      KeySpec{"camera.color_matrix", "row-major 3x3 colour mixing matrix (9 numbers)",
              [](const RunConfig& c) {
                std::string s;
                for (std::size_t i = 0; i < 9; ++i) s += (i ? " " : "") + format_double(c.camera.color_matrix[i]);
                return s;
              },
              [](RunConfig& c, const std::string& v) {
                const auto items = split_list(v, ' ');
                if (items.size() != 9) {
                  throw usage_error("expected 9 numbers, got " + std::to_string(items.size()));
                }
                for (std::size_t i = 0; i < 9; ++i) c.camera.color_matrix[i] = parse_double(items[i]);
              }},
      DSHIFT_DOUBLE_KEY("camera.noise_sigma", camera.noise_sigma, "Gaussian sensor noise std-dev"),
      DSHIFT_DOUBLE_KEY("camera.blur_sigma", camera.blur_sigma, "Gaussian blur std-dev in pixels"),
      KeySpec{"camera.jitter_px", "maximum misregistration shift in pixels",
              [](const RunConfig& c) { return std::to_string(c.camera.jitter_px); },
              [](RunConfig& c, const std::string& v) {
                const std::uint64_t px = parse_uint(v);
                if (px > 1000) throw usage_error("jitter out of range");
                c.camera.jitter_px = static_cast<int>(px);
              }},
  };
  return keys;
}

#undef DSHIFT_SIZE_KEY
#undef DSHIFT_DOUBLE_KEY
#undef DSHIFT_PATH_KEY

const KeySpec* find_key(const std::string& key) {
  for (const auto& spec : registry()) {
    if (spec.key == key) return &spec;
  }
  return nullptr;
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError(path.string(), "cannot open config file");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Applies the lines of `text` to `config`. When `prefix` is non-empty every
// key must start with it.
void apply(RunConfig& config, std::string_view text, const std::string& origin,
           const std::string& prefix) {
  std::map<std::string, std::size_t> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = std::min(text.find('\n', pos), text.size());
    const std::string line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;

    const std::string where = origin + ":" + std::to_string(line_no);
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw usage_error(where + ": expected 'key = value'");
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const KeySpec* spec = find_key(key);
    if (spec == nullptr || key.rfind(prefix, 0) != 0) {
      throw usage_error(where + ": unknown key '" + key + "'");
    }
    if (auto [it, fresh] = seen.emplace(key, line_no); !fresh) {
      throw usage_error(where + ": duplicate key '" + key + "' (first set on line " +
                        std::to_string(it->second) + ")");
    }
    try {
      spec->set(config, value);
    } catch (const Error& e) {
      throw usage_error(where + ": " + key + ": " + e.what());
    }
  }
}

}  // namespace

std::string policy_name(ShiftPolicy policy) {
  return policy == ShiftPolicy::zero_shot ? "zero-shot" : "unsupervised";
}

RunConfig::RunConfig() {
  shifter.epochs = 30;
  classifier.epochs = 60;
}

void RunConfig::validate() const {
  if (policies.empty()) throw usage_error("config: policies must name at least one policy");
  for (std::size_t i = 0; i < policies.size(); ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      if (policies[i] == policies[j]) {
        throw usage_error("config: policy " + policy_name(policies[i]) + " listed twice");
      }
    }
  }
  if (out.empty()) throw usage_error("config: out must not be empty");
  if (!degraded.empty() && clean.empty()) {
    throw usage_error("config: data.degraded requires data.clean");
  }
  if (clean.empty()) {
    if (classes < 2 || classes > kShapeFamilies) {
      throw usage_error("config: data.classes must be in [2, " + std::to_string(kShapeFamilies) + "]");
    }
    if (per_class < 1) throw usage_error("config: data.per_class must be >= 1");
  }
  if (resolution < 16 || resolution % 4 != 0) {
    throw usage_error("config: data.resolution must be a multiple of 4 and >= 16");
  }
  if (pair_count < 1) throw usage_error("config: data.pair_count must be >= 1");
  if (!(unsupervised_fraction > 0.0 && unsupervised_fraction < 1.0)) {
    throw usage_error("config: data.unsupervised_fraction must be in (0, 1)");
  }
  if (!(split.val > 0.0 && split.test > 0.0)) {
    throw usage_error("config: data.val and data.test must be positive");
  }
  split.validate();
  shifter.validate();
  classifier.validate();
  camera.validate();
}

bool RunConfig::operator==(const RunConfig& other) const {
  return dump_config(*this) == dump_config(other);
}

std::vector<ConfigKey> config_keys() {
  const RunConfig defaults;
  std::vector<ConfigKey> keys;
  for (const auto& spec : registry()) {
    keys.push_back(ConfigKey{spec.key, spec.get(defaults), spec.description});
  }
  return keys;
}

RunConfig parse_config(std::string_view text, const std::string& origin) {
  RunConfig config;
  apply(config, text, origin, "");
  config.validate();
  return config;
}

RunConfig load_config(const fs::path& path) {
  return parse_config(read_text(path), path.string());
}

void config_set(RunConfig& config, const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (spec == nullptr) throw usage_error("unknown config key '" + key + "'");
  try {
    spec->set(config, trim(value));
  } catch (const Error& e) {
    throw usage_error(key + ": " + e.what());
  }
}

std::string dump_config(const RunConfig& config) {
  std::string text;
  for (const auto& spec : registry()) {
    text += spec.key + " = " + spec.get(config) + "\n";
  }
  return text;
}

DegradationConfig load_camera_config(const fs::path& path) {
  RunConfig config;
  apply(config, read_text(path), path.string(), "camera.");
  config.camera.validate();
  return config.camera;
}

}  // namespace dshift
