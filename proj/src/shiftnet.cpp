#include "dshift/shiftnet.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "dshift/image_io.hpp"
#include "dshift/log.hpp"
#include "dshift/random.hpp"
#include "weights_io.hpp"

namespace fs = std::filesystem;

namespace dshift {

std::array<ConvSpec, ShiftNetParams::kLayers> ShiftNetParams::architecture() {
  return {ConvSpec{3, 64, 3, 2, 1, false}, ConvSpec{64, 128, 3, 2, 1, false},
          ConvSpec{128, 64, 2, 2, 0, true}, ConvSpec{64, 3, 2, 2, 0, true}};
}

ShiftNetParams::ShiftNetParams() {
  const auto specs = architecture();
  for (std::size_t i = 0; i < kLayers; ++i) layers[i] = ConvLayer(specs[i]);
}

std::size_t ShiftNetParams::parameter_count() const {
  std::size_t total = 0;
  for (const auto& layer : layers) total += layer.parameter_count();
  return total;
}

ShiftNetParams shifter_init(std::uint64_t seed) {
  ShiftNetParams params;
  Rng rng(seed);
  for (auto& layer : params.layers) init_fan_in(layer, rng);
  return params;
}

namespace {

void check_batch(const Tensor& batch) {
  if (batch.c() != 3) throw ShapeError("shifter_forward", "channels", 3, batch.c());
  if (batch.h() == 0 || batch.h() % 4 != 0) {
    throw ShapeError("shifter_forward", "height",
                     "must be a positive multiple of 4, got " + std::to_string(batch.h()));
  }
  if (batch.w() == 0 || batch.w() % 4 != 0) {
    throw ShapeError("shifter_forward", "width",
                     "must be a positive multiple of 4, got " + std::to_string(batch.w()));
  }
}

}  // namespace

ShiftNetTrace shifter_forward_trace(const ShiftNetParams& params, const Tensor& batch) {
  check_batch(batch);
  ShiftNetTrace trace;
  const Tensor* x = &batch;
  for (std::size_t i = 0; i < ShiftNetParams::kLayers; ++i) {
    trace.pre[i] = params.layers[i].forward(*x);
    trace.post[i] = (i + 1 < ShiftNetParams::kLayers) ? relu(trace.pre[i]) : sigmoid(trace.pre[i]);
    x = &trace.post[i];
  }
  return trace;
}

Tensor shifter_forward(const ShiftNetParams& params, const Tensor& batch) {
  check_batch(batch);
  Tensor x = params.layers[0].forward(batch);
  x = relu(x);
  x = relu(params.layers[1].forward(x));
  x = relu(params.layers[2].forward(x));
  return sigmoid(params.layers[3].forward(x));
}

ShiftNetGrads shifter_backward(const ShiftNetParams& params, const Tensor& batch,
                               const ShiftNetTrace& trace, const Tensor& output_grad) {
  ShiftNetGrads grads;
  constexpr std::size_t last = ShiftNetParams::kLayers - 1;
  Tensor upstream = sigmoid_backward(trace.post[last], output_grad);
  for (std::size_t k = ShiftNetParams::kLayers; k-- > 0;) {
    const Tensor& input = k == 0 ? batch : trace.post[k - 1];
    grads.layers[k] = params.layers[k].backward(input, upstream);
    if (k > 0) upstream = relu_backward(trace.pre[k - 1], grads.layers[k].d_input);
  }
  return grads;
}

void ShifterTrainConfig::validate() const {
  if (epochs < 1) throw usage_error("shifter: epochs must be >= 1");
  if (batch_size < 1) throw usage_error("shifter: batch_size must be >= 1");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw usage_error("shifter: validation_fraction must be in [0, 1)");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw usage_error("shifter: Adam betas must be in [0, 1)");
  }
  if (!(eps > 0.0)) throw usage_error("shifter: eps must be > 0");
  schedule.validate();
}

double shifter_l2(const ShiftNetParams& params, const Tensor& clean, const Tensor& low,
                  std::size_t batch_size) {
  if (clean.shape() != low.shape()) {
    throw ShapeError("shifter_l2", "pair shape", "expected " + clean.shape().str() + ", got " + low.shape().str());
  }
  double weighted = 0.0;
  for (std::size_t begin = 0; begin < clean.n(); begin += batch_size) {
    const std::size_t count = std::min(batch_size, clean.n() - begin);
    const Tensor prediction = shifter_forward(params, slice_batch(clean, begin, count));
    weighted += mse_loss(prediction, slice_batch(low, begin, count)).loss *
                static_cast<double>(count);
  }
  return weighted / static_cast<double>(clean.n());
}

ShifterTrainResult shifter_train(const LoadedPairs& pairs, const ShifterTrainConfig& config) {
  config.validate();
  const std::size_t total = pairs.size();
  if (total < 2 * config.batch_size) {
    throw data_error("shifter_train: need at least " + std::to_string(2 * config.batch_size) +
                     " pairs (2 x batch_size), got " + std::to_string(total));
  }
  if (pairs.low.shape() != pairs.clean.shape()) {
    throw ShapeError("shifter_train", "pair shape", "expected " + pairs.clean.shape().str() + ", got " + pairs.low.shape().str());
  }
  check_batch(pairs.clean);

  const auto order = permutation(total, derive_seed(config.seed, "validation"));
  const auto n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(total)));
  std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());
  const Tensor train_clean = gather_batch(pairs.clean, train_idx);
  const Tensor train_low = gather_batch(pairs.low, train_idx);
  const Tensor val_clean = gather_batch(pairs.clean, val_idx);
  const Tensor val_low = gather_batch(pairs.low, val_idx);

  ShifterTrainResult result;
  result.params = shifter_init(derive_seed(config.seed, "init"));
  result.params.height = pairs.clean.h();
  result.params.width = pairs.clean.w();

  // one Adam state per weight and bias block
  std::array<AdamState, 2 * ShiftNetParams::kLayers> adam;
  for (std::size_t k = 0; k < ShiftNetParams::kLayers; ++k) {
    adam[2 * k] = AdamState(result.params.layers[k].weight.size());
    adam[2 * k + 1] = AdamState(result.params.layers[k].bias.size());
  }
  for (auto& state : adam) {
    state.beta1 = config.beta1;
    state.beta2 = config.beta2;
    state.eps = config.eps;
  }

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const double lr = config.schedule.rate(epoch);
    double weighted = 0.0;
    for (const auto& idx : batch_indices(train_idx.size(), config.batch_size, config.seed, epoch)) {
      const Tensor x = gather_batch(train_clean, idx);
      const Tensor target = gather_batch(train_low, idx);
      const ShiftNetTrace trace = shifter_forward_trace(result.params, x);
      const LossResult loss = mse_loss(trace.post.back(), target);
      if (!std::isfinite(loss.loss)) {
        throw Error(ErrorKind::training,
                    "shifter_train: loss diverged at epoch " + std::to_string(epoch + 1));
      }
      weighted += loss.loss * static_cast<double>(idx.size());
      const ShiftNetGrads grads = shifter_backward(result.params, x, trace, loss.grad);
      for (std::size_t k = 0; k < ShiftNetParams::kLayers; ++k) {
        auto& layer = result.params.layers[k];
        adam_step(layer.weight.data(), grads.layers[k].d_weight.data(), adam[2 * k], lr);
        adam_step(layer.bias, grads.layers[k].d_bias, adam[2 * k + 1], lr);
      }
    }
    result.history.train_l2.push_back(weighted / static_cast<double>(train_idx.size()));
    if (!val_idx.empty()) {
      result.history.val_l2.push_back(
          shifter_l2(result.params, val_clean, val_low, config.batch_size));
    }
    std::ostringstream msg;
    msg << "shifter epoch " << epoch + 1 << "/" << config.epochs << " lr " << lr << " train_l2 "
        << result.history.train_l2.back();
    if (!val_idx.empty()) msg << " val_l2 " << result.history.val_l2.back();
    log::info(msg.str());
  }
  return result;
}

ShifterTrainResult shifter_train(const PairedImageSet& pairs, const ShifterTrainConfig& config) {
  if (pairs.size() == 0) throw data_error("shifter_train: paired set is empty");
  return shifter_train(load_pairs(pairs), config);
}

void write_loss_log(const ShifterHistory& history, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw FileError(path.string(), "cannot open for writing");
  out << "epoch,train_l2,val_l2\n";
  out << std::setprecision(9);
  for (std::size_t e = 0; e < history.train_l2.size(); ++e) {
    out << e + 1 << ',' << history.train_l2[e] << ',';
    if (e < history.val_l2.size()) out << history.val_l2[e];
    out << '\n';
  }
  if (!out) throw FileError(path.string(), "write failed");
}

LabeledImageSet shift_dataset(const ShiftNetParams& params, const LabeledImageSet& images,
                              const fs::path& out) {
  fs::create_directories(out);
  const fs::path marker = out / ".incomplete";
  {
    std::ofstream m(marker);
    m << "in progress\n";
  }
  LabeledImageSet result;
  result.root = out;
  result.class_names = images.class_names;
  result.excluded = images.excluded;
  try {
    for (std::size_t i = 0; i < images.size(); ++i) {
      const Tensor image = load_image(images.file(i));
      const Tensor shifted = shifter_forward(params, image);
      write_image(shifted, out / images.entries[i].path);
      result.entries.push_back(images.entries[i]);
    }
  } catch (const std::exception& e) {
    std::ofstream m(marker, std::ios::trunc);
    m << "failed after " << result.entries.size() << " of " << images.size()
      << " images: " << e.what() << '\n';
    throw;
  }
  fs::remove(marker);
  return result;
}

namespace {

constexpr const char* kShiftMagic = "SHIFTNET";

std::vector<std::size_t> weight_dims(const Tensor& w) { return {w.n(), w.c(), w.h(), w.w()}; }

std::string layer_name(std::size_t k) { return "layer" + std::to_string(k + 1); }

}  // namespace

void shifter_save(const ShiftNetParams& params, const fs::path& path) {
  detail::WeightFile file;
  file.magic = kShiftMagic;
  file.header = {std::to_string(params.height), std::to_string(params.width)};
  for (std::size_t k = 0; k < ShiftNetParams::kLayers; ++k) {
    const auto& layer = params.layers[k];
    file.blocks.push_back({layer_name(k) + ".weight", weight_dims(layer.weight), layer.weight.values()});
    file.blocks.push_back({layer_name(k) + ".bias", {layer.bias.size()}, layer.bias});
  }
  detail::write_weight_file(path, file);
}

ShiftNetParams shifter_load(const fs::path& path) {
  const detail::WeightFile file = detail::read_weight_file(path, kShiftMagic);
  ShiftNetParams params;
  if (file.header.size() != 2) throw FileError(path.string(), "header must carry <H> <W>");
  try {
    params.height = std::stoul(file.header[0]);
    params.width = std::stoul(file.header[1]);
  } catch (const std::exception&) {
    throw FileError(path.string(), "header resolution is not numeric");
  }
  if (file.blocks.size() != 2 * ShiftNetParams::kLayers) {
    throw ArchitectureError(path.string() + ": expected " +
                            std::to_string(2 * ShiftNetParams::kLayers) + " blocks, found " +
                            std::to_string(file.blocks.size()));
  }
  for (std::size_t k = 0; k < ShiftNetParams::kLayers; ++k) {
    auto& layer = params.layers[k];
    const auto& wb = file.blocks[2 * k];
    const auto& bb = file.blocks[2 * k + 1];
    detail::expect_block(wb, layer_name(k) + ".weight", weight_dims(layer.weight));
    detail::expect_block(bb, layer_name(k) + ".bias", {layer.bias.size()});
    layer.weight = Tensor(layer.weight.shape(), wb.values);
    layer.bias = bb.values;
  }
  return params;
}

}  // namespace dshift
