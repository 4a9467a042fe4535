#include "dshift/classify.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <span>
#include <sstream>

#include "dshift/error.hpp"
#include "dshift/log.hpp"
#include "dshift/random.hpp"
#include "weights_io.hpp"

namespace fs = std::filesystem;

namespace dshift {

std::array<ConvSpec, ClassifierParams::kConvBlocks> ClassifierParams::architecture() {
  return {ConvSpec{3, 16, 3, 2, 1, false}, ConvSpec{16, 32, 3, 2, 1, false},
          ConvSpec{32, 64, 3, 2, 1, false}, ConvSpec{64, 64, 3, 2, 1, false}};
}

ClassifierParams::ClassifierParams(std::size_t classes)
    : dense_weight(classes, 64, 1, 1), dense_bias(classes, 0.0f) {
  const auto specs = architecture();
  for (std::size_t i = 0; i < kConvBlocks; ++i) convs[i] = ConvLayer(specs[i]);
}

std::size_t ClassifierParams::parameter_count() const {
  std::size_t total = dense_weight.size() + dense_bias.size();
  for (const auto& c : convs) total += c.parameter_count();
  return total;
}

void ClassifierParams::freeze_prefix(std::size_t count) {
  if (count > kLayers) {
    throw usage_error("freeze_prefix " + std::to_string(count) + " exceeds the " +
                      std::to_string(kLayers) + " classifier layers");
  }
  for (std::size_t i = 0; i < kLayers; ++i) frozen[i] = i < count;
}

ClassifierParams classifier_init(std::size_t classes, std::uint64_t seed) {
  if (classes < 2) throw usage_error("classifier_init: need at least 2 classes");
  ClassifierParams params(classes);
  Rng rng(seed);
  for (auto& c : params.convs) init_fan_in(c, rng);
  init_fan_in(params.dense_weight, params.dense_weight.c(), rng);
  return params;
}

namespace {

// Pixels in [0, 1] are fed to the first block as 2x - 1.
Tensor centre_pixels(const Tensor& batch) {
  if (batch.c() != 3) throw ShapeError("classifier_forward", "channels", 3, batch.c());
  Tensor out(batch.shape());
  const float* src = batch.raw();
  float* dst = out.raw();
  for (std::size_t i = 0; i < batch.size(); ++i) dst[i] = 2.0f * src[i] - 1.0f;
  return out;
}

}  // namespace

ClassifierTrace classifier_forward_trace(const ClassifierParams& params, const Tensor& batch) {
  ClassifierTrace trace;
  trace.input = centre_pixels(batch);
  const Tensor* x = &trace.input;
  for (std::size_t i = 0; i < ClassifierParams::kConvBlocks; ++i) {
    trace.pre[i] = params.convs[i].forward(*x);
    trace.post[i] = relu(trace.pre[i]);
    x = &trace.post[i];
  }
  trace.pooled = global_avg_pool(*x);
  trace.logits = dense_forward(trace.pooled, params.dense_weight, params.dense_bias);
  return trace;
}

Tensor classifier_logits(const ClassifierParams& params, const Tensor& batch) {
  Tensor x = relu(params.convs[0].forward(centre_pixels(batch)));
  for (std::size_t i = 1; i < ClassifierParams::kConvBlocks; ++i) {
    x = relu(params.convs[i].forward(x));
  }
  return dense_forward(global_avg_pool(x), params.dense_weight, params.dense_bias);
}

ClassifierGrads classifier_backward(const ClassifierParams& params, const ClassifierTrace& trace,
                                    const Tensor& logits_grad) {
  ClassifierGrads grads;
  // nothing below the frozen prefix needs a gradient
  std::size_t first = 0;
  while (first < ClassifierParams::kLayers && params.frozen[first]) ++first;
  grads.first_computed = first;

  grads.dense = dense_backward(trace.pooled, params.dense_weight, logits_grad);
  constexpr std::size_t top = ClassifierParams::kConvBlocks - 1;
  if (first > top) return grads;
  Tensor upstream = relu_backward(
      trace.pre[top], global_avg_pool_backward(trace.post[top].shape(), grads.dense.d_input));
  for (std::size_t k = top + 1; k-- > first;) {
    const Tensor& input = k == 0 ? trace.input : trace.post[k - 1];
    grads.convs[k] = params.convs[k].backward(input, upstream);
    if (k > first) upstream = relu_backward(trace.pre[k - 1], grads.convs[k].d_input);
  }
  return grads;
}

std::vector<int> predict(const ClassifierParams& params, const Tensor& batch) {
  const Tensor logits = classifier_logits(params, batch);
  std::vector<int> out(logits.n());
  for (std::size_t i = 0; i < logits.n(); ++i) {
    auto row = logits.sample(i);
    out[i] = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

void ClassifierTrainConfig::validate() const {
  if (epochs < 1) throw usage_error("classifier: epochs must be >= 1");
  if (batch_size < 1) throw usage_error("classifier: batch_size must be >= 1");
  if (freeze_prefix > ClassifierParams::kLayers) {
    throw usage_error("classifier: freeze_prefix " + std::to_string(freeze_prefix) +
                      " exceeds the " + std::to_string(ClassifierParams::kLayers) + " layers");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw usage_error("classifier: momentum must be in [0, 1)");
  }
  if (!(grad_clip >= 0.0)) throw usage_error("classifier: grad_clip must be >= 0");
  schedule.validate();
}

Evaluation score_predictions(std::size_t classes, std::span<const int> labels,
                             std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw ShapeError("score_predictions", "prediction count", labels.size(), predictions.size());
  }
  Evaluation eval;
  eval.total = labels.size();
  eval.confusion.assign(classes, std::vector<std::size_t>(classes, 0));
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto truth = static_cast<std::size_t>(labels[i]);
    const auto guess = static_cast<std::size_t>(predictions[i]);
    if (truth >= classes || guess >= classes) {
      throw ShapeError("score_predictions", "label", "index outside the class vocabulary");
    }
    eval.confusion[truth][guess] += 1;
    correct += truth == guess;
  }
  eval.accuracy = eval.total ? static_cast<double>(correct) / static_cast<double>(eval.total) : 0.0;
  return eval;
}

namespace {

constexpr std::size_t kEvalBatch = 64;

void check_vocabulary(const ClassifierParams& params, const std::vector<std::string>& names,
                      const char* what) {
  if (!params.class_names.empty() && params.class_names != names) {
    throw data_error(std::string(what) + ": class vocabulary does not match the classifier");
  }
  if (names.size() != params.classes()) {
    throw data_error(std::string(what) + ": dataset has " + std::to_string(names.size()) +
                     " classes, classifier has " + std::to_string(params.classes()));
  }
}

}  // namespace

Evaluation evaluate(const ClassifierParams& params, const LoadedSet& test) {
  if (test.size() == 0) throw data_error("evaluate: test set is empty");
  check_vocabulary(params, test.class_names, "evaluate");
  std::vector<int> predictions;
  predictions.reserve(test.size());
  double weighted_loss = 0.0;
  for (std::size_t begin = 0; begin < test.size(); begin += kEvalBatch) {
    const std::size_t count = std::min(kEvalBatch, test.size() - begin);
    const Tensor logits = classifier_logits(params, slice_batch(test.images, begin, count));
    std::span<const int> labels(test.labels.data() + begin, count);
    weighted_loss += softmax_cross_entropy(logits, labels).loss * static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      auto row = logits.sample(i);
      predictions.push_back(static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin()));
    }
  }
  Evaluation eval = score_predictions(params.classes(), test.labels, predictions);
  eval.loss = weighted_loss / static_cast<double>(test.size());
  return eval;
}

Evaluation evaluate(const ClassifierParams& params, const LabeledImageSet& test) {
  if (test.empty()) throw data_error("evaluate: test set is empty");
  check_vocabulary(params, test.class_names, "evaluate");
  return evaluate(params, load_set(test));
}

// Global-norm clipping over the layers that will be stepped.
static void clip_gradients(const ClassifierParams& params, ClassifierGrads& grads, double max_norm) {
  std::vector<std::span<float>> blocks;
  for (std::size_t k = 0; k < ClassifierParams::kConvBlocks; ++k) {
    if (params.frozen[k]) continue;
    blocks.emplace_back(grads.convs[k].d_weight.data());
    blocks.emplace_back(grads.convs[k].d_bias);
  }
  if (!params.frozen[ClassifierParams::kConvBlocks]) {
    blocks.emplace_back(grads.dense.d_weight.data());
    blocks.emplace_back(grads.dense.d_bias);
  }
  double sq = 0.0;
  for (const auto& b : blocks) {
    for (float g : b) sq += static_cast<double>(g) * g;
  }
  const double norm = std::sqrt(sq);
  if (!(norm > max_norm)) return;
  const float scale = static_cast<float>(max_norm / norm);
  for (auto& b : blocks) {
    for (float& g : b) g *= scale;
  }
}

ClassifierTrainResult classifier_train(const LoadedSet& train, const LoadedSet& val,
                                       const ClassifierTrainConfig& config) {
  config.validate();
  if (train.size() == 0) throw data_error("classifier_train: training set is empty");
  if (val.size() == 0) throw data_error("classifier_train: validation set is empty");
  if (train.class_names != val.class_names) {
    throw data_error("classifier_train: training and validation vocabularies differ");
  }

  ClassifierParams params = classifier_init(train.class_names.size(), derive_seed(config.seed, "init"));
  params.class_names = train.class_names;
  params.freeze_prefix(config.freeze_prefix);

  // One velocity buffer per parameter block, same order as the updates below.
  std::vector<std::vector<float>> velocity;
  for (const auto& conv : params.convs) {
    velocity.emplace_back(conv.weight.size(), 0.0f);
    velocity.emplace_back(conv.bias.size(), 0.0f);
  }
  velocity.emplace_back(params.dense_weight.size(), 0.0f);
  velocity.emplace_back(params.dense_bias.size(), 0.0f);
  const double mu = config.momentum;

  ClassifierTrainResult result;
  result.params = params;
  bool have_best = false;
  double best_acc = 0.0;
  double best_loss = 0.0;

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    EpochRecord record;
    record.lr = config.schedule.rate(epoch);
    double weighted_loss = 0.0;
    std::size_t correct = 0;
    for (const auto& idx : batch_indices(train.size(), config.batch_size, config.seed, epoch)) {
      const Tensor x = gather_batch(train.images, idx);
      std::vector<int> labels;
      labels.reserve(idx.size());
      for (std::size_t i : idx) labels.push_back(train.labels[i]);

      const ClassifierTrace trace = classifier_forward_trace(params, x);
      const LossResult loss = softmax_cross_entropy(trace.logits, labels);
      if (!std::isfinite(loss.loss)) {
        throw Error(ErrorKind::training,
                    "classifier_train: loss diverged at epoch " + std::to_string(epoch + 1));
      }
      weighted_loss += loss.loss * static_cast<double>(idx.size());
      for (std::size_t i = 0; i < idx.size(); ++i) {
        auto row = trace.logits.sample(i);
        correct += (std::max_element(row.begin(), row.end()) - row.begin()) == labels[i];
      }

      ClassifierGrads grads = classifier_backward(params, trace, loss.grad);
      if (config.grad_clip > 0.0) clip_gradients(params, grads, config.grad_clip);
      for (std::size_t k = 0; k < ClassifierParams::kConvBlocks; ++k) {
        if (params.frozen[k]) continue;
        sgd_step(params.convs[k].weight.data(), grads.convs[k].d_weight.data(), velocity[2 * k],
                 record.lr, mu);
        sgd_step(params.convs[k].bias, grads.convs[k].d_bias, velocity[2 * k + 1], record.lr, mu);
      }
      if (!params.frozen[ClassifierParams::kConvBlocks]) {
        sgd_step(params.dense_weight.data(), grads.dense.d_weight.data(), velocity[8], record.lr,
                 mu);
        sgd_step(params.dense_bias, grads.dense.d_bias, velocity[9], record.lr, mu);
      }
    }
    record.train_loss = weighted_loss / static_cast<double>(train.size());
    record.train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());

    const Evaluation v = evaluate(params, val);
    record.val_loss = v.loss;
    record.val_accuracy = v.accuracy;
    result.history.push_back(record);

    if (!have_best || v.accuracy > best_acc || (v.accuracy == best_acc && v.loss < best_loss)) {
      have_best = true;
      best_acc = v.accuracy;
      best_loss = v.loss;
      result.params = params;
      result.best_epoch = epoch;
    }
    std::ostringstream msg;
    msg << "classifier epoch " << epoch + 1 << "/" << config.epochs << " lr " << record.lr
        << " loss " << record.train_loss << " acc " << record.train_accuracy << " val_loss "
        << record.val_loss << " val_acc " << record.val_accuracy;
    log::info(msg.str());
  }
  return result;
}

ClassifierTrainResult classifier_train(const std::vector<LabeledImageSet>& train,
                                       const LabeledImageSet& val,
                                       const ClassifierTrainConfig& config) {
  if (train.empty()) throw usage_error("classifier_train: no training sets given");
  for (const auto& set : train) {
    if (set.class_names != train.front().class_names) {
      throw data_error("classifier_train: training sets have different class vocabularies");
    }
  }
  if (val.class_names != train.front().class_names) {
    throw data_error("classifier_train: validation vocabulary differs from training");
  }
  // Concatenate in a canonical order so the result does not depend on the
  // order the sets were passed in.
  std::vector<const LabeledImageSet*> ordered;
  for (const auto& set : train) ordered.push_back(&set);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LabeledImageSet* a, const LabeledImageSet* b) {
                     if (a->root != b->root) return a->root < b->root;
                     return std::lexicographical_compare(
                         a->entries.begin(), a->entries.end(), b->entries.begin(),
                         b->entries.end(), [](const ImageEntry& x, const ImageEntry& y) {
                           return x.path < y.path;
                         });
                   });
  std::vector<LoadedSet> loaded;
  loaded.reserve(ordered.size());
  for (const LabeledImageSet* set : ordered) loaded.push_back(load_set(*set));
  std::vector<const LoadedSet*> parts;
  for (const auto& l : loaded) parts.push_back(&l);
  return classifier_train(concat(parts), load_set(val), config);
}

void write_confusion_csv(const Evaluation& eval, const std::vector<std::string>& class_names,
                         const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FileError(path.string(), "cannot open for writing");
  out << "true\\predicted";
  for (const auto& name : class_names) out << ',' << name;
  out << '\n';
  for (std::size_t i = 0; i < eval.confusion.size(); ++i) {
    out << (i < class_names.size() ? class_names[i] : std::to_string(i));
    for (std::size_t count : eval.confusion[i]) out << ',' << count;
    out << '\n';
  }
  if (!out) throw FileError(path.string(), "write failed");
}

namespace {

constexpr const char* kClassifierMagic = "CLASSIFIER";

// Class names travel in the whitespace-separated header; escape the
// characters that would break it.
std::string escape_name(const std::string& name) {
  std::string out;
  for (char ch : name) {
    if (ch == '%') {
      out += "%25";
    } else if (ch == ' ') {
      out += "%20";
    } else if (ch == '\n') {
      out += "%0A";
    } else if (ch == '\t') {
      out += "%09";
    } else {
      out += ch;
    }
  }
  return out;
}

std::string unescape_name(const std::string& text) {
  std::string out;
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] == '%' && i + 2 < text.size()) {
      const std::string code = text.substr(i + 1, 2);
      if (code == "25") out += '%';
      else if (code == "20") out += ' ';
      else if (code == "0A") out += '\n';
      else if (code == "09") out += '\t';
      else out += text.substr(i, 3);
      i += 2;
    } else {
      out += text[i];
    }
  }
  return out;
}

std::string conv_name(std::size_t k) { return "conv" + std::to_string(k + 1); }

}  // namespace

void classifier_save(const ClassifierParams& params, const fs::path& path) {
  detail::WeightFile file;
  file.magic = kClassifierMagic;
  file.header.push_back(std::to_string(params.classes()));
  std::string freeze;
  for (bool f : params.frozen) freeze += f ? '1' : '0';
  file.header.push_back(freeze);
  for (const auto& name : params.class_names) file.header.push_back(escape_name(name));
  for (std::size_t k = 0; k < ClassifierParams::kConvBlocks; ++k) {
    const auto& w = params.convs[k].weight;
    file.blocks.push_back({conv_name(k) + ".weight", {w.n(), w.c(), w.h(), w.w()}, w.values()});
    file.blocks.push_back({conv_name(k) + ".bias", {params.convs[k].bias.size()}, params.convs[k].bias});
  }
  file.blocks.push_back({"dense.weight", {params.dense_weight.n(), params.dense_weight.c()},
                         params.dense_weight.values()});
  file.blocks.push_back({"dense.bias", {params.dense_bias.size()}, params.dense_bias});
  detail::write_weight_file(path, file);
}

ClassifierParams classifier_load(const fs::path& path) {
  const detail::WeightFile file = detail::read_weight_file(path, kClassifierMagic);
  if (file.header.size() < 2) throw FileError(path.string(), "header must carry <K> <freeze flags>");
  std::size_t classes = 0;
  try {
    classes = std::stoul(file.header[0]);
  } catch (const std::exception&) {
    throw FileError(path.string(), "class count is not numeric");
  }
  if (classes < 2 || classes > 4096) throw FileError(path.string(), "implausible class count");
  ClassifierParams params(classes);
  const std::string& freeze = file.header[1];
  if (freeze.size() != ClassifierParams::kLayers) {
    throw ArchitectureError(path.string() + ": freeze flags cover " + std::to_string(freeze.size()) +
                            " layers, expected " + std::to_string(ClassifierParams::kLayers));
  }
  for (std::size_t i = 0; i < ClassifierParams::kLayers; ++i) params.frozen[i] = freeze[i] == '1';
  for (std::size_t i = 2; i < file.header.size(); ++i) {
    params.class_names.push_back(unescape_name(file.header[i]));
  }
  if (!params.class_names.empty() && params.class_names.size() != classes) {
    throw FileError(path.string(), "class name count does not match class count");
  }
  if (file.blocks.size() != 2 * ClassifierParams::kConvBlocks + 2) {
    throw ArchitectureError(path.string() + ": unexpected block count " +
                            std::to_string(file.blocks.size()));
  }
  for (std::size_t k = 0; k < ClassifierParams::kConvBlocks; ++k) {
    auto& conv = params.convs[k];
    const auto& w = conv.weight;
    detail::expect_block(file.blocks[2 * k], conv_name(k) + ".weight", {w.n(), w.c(), w.h(), w.w()});
    detail::expect_block(file.blocks[2 * k + 1], conv_name(k) + ".bias", {conv.bias.size()});
    conv.weight = Tensor(w.shape(), file.blocks[2 * k].values);
    conv.bias = file.blocks[2 * k + 1].values;
  }
  const auto& dw = file.blocks[2 * ClassifierParams::kConvBlocks];
  const auto& db = file.blocks[2 * ClassifierParams::kConvBlocks + 1];
  detail::expect_block(dw, "dense.weight", {classes, 64});
  detail::expect_block(db, "dense.bias", {classes});
  params.dense_weight = Tensor(params.dense_weight.shape(), dw.values);
  params.dense_bias = db.values;
  return params;
}

}  // namespace dshift
