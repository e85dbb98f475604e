#include "docnmt/training.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "docnmt/data.hpp"
#include "docnmt/error.hpp"

namespace docnmt {

void adadelta_step(AdadeltaSlot& slot, std::span<double> param, std::span<const double> grad,
                   const AdadeltaConfig& config) {
  if (param.size() != grad.size()) {
    throw DimensionError("adadelta_step: parameter has " + std::to_string(param.size()) + " values, gradient " +
                         std::to_string(grad.size()));
  }
  if (slot.mean_sq_grad.empty() && slot.mean_sq_update.empty()) {
    slot.mean_sq_grad.assign(param.size(), 0.0);
    slot.mean_sq_update.assign(param.size(), 0.0);
  }
  if (slot.mean_sq_grad.size() != param.size() || slot.mean_sq_update.size() != param.size()) {
    throw DimensionError("adadelta_step: accumulator shape does not match parameter");
  }
  const double rho = config.rho, eps = config.epsilon;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double g = grad[i];
    slot.mean_sq_grad[i] = rho * slot.mean_sq_grad[i] + (1.0 - rho) * g * g;
    const double delta = -std::sqrt(slot.mean_sq_update[i] + eps) / std::sqrt(slot.mean_sq_grad[i] + eps) * g;
    slot.mean_sq_update[i] = rho * slot.mean_sq_update[i] + (1.0 - rho) * delta * delta;
    param[i] += delta;
  }
}

void Adadelta::step(ModelParams& params) {
  for (auto& [name, tensor] : params.named()) {
    adadelta_step(slots_[name], tensor->mutable_values(), tensor->grad(), config_);
  }
}

TensorFile Adadelta::to_tensor_file() const {
  TensorFile file;
  file.metadata["format"] = "docnmt-adadelta";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", config_.rho);
  file.metadata["rho"] = buf;
  std::snprintf(buf, sizeof(buf), "%.17g", config_.epsilon);
  file.metadata["epsilon"] = buf;
  for (const auto& [name, slot] : slots_) {
    const Shape shape{slot.mean_sq_grad.size()};
    file.tensors["mean_sq_grad/" + name] = StoredTensor{shape, slot.mean_sq_grad};
    file.tensors["mean_sq_update/" + name] = StoredTensor{shape, slot.mean_sq_update};
  }
  return file;
}

Adadelta Adadelta::from_tensor_file(const TensorFile& file) {
  auto fmt = file.metadata.find("format");
  if (fmt == file.metadata.end() || fmt->second != "docnmt-adadelta") {
    throw FormatError("not an optimizer state file");
  }
  AdadeltaConfig config;
  config.rho = std::stod(file.metadata.at("rho"));
  config.epsilon = std::stod(file.metadata.at("epsilon"));
  Adadelta opt(config);
  const std::string g_prefix = "mean_sq_grad/", u_prefix = "mean_sq_update/";
  for (const auto& [key, tensor] : file.tensors) {
    if (key.rfind(g_prefix, 0) == 0) {
      opt.slots_[key.substr(g_prefix.size())].mean_sq_grad = tensor.values;
    } else if (key.rfind(u_prefix, 0) == 0) {
      opt.slots_[key.substr(u_prefix.size())].mean_sq_update = tensor.values;
    } else {
      throw FormatError("unexpected optimizer entry '" + key + "'");
    }
  }
  return opt;
}

double clip_global_norm(ModelParams& params, double max_norm) {
  double total = 0.0;
  for (const auto& [name, t] : params.named()) {
    for (double g : t->grad()) total += g * g;
  }
  const double norm = std::sqrt(total);
  if (max_norm > 0.0 && norm > max_norm) {
    const double scale = max_norm / norm;
    for (auto& [name, t] : params.named()) {
      for (double& g : t->mutable_grad()) g *= scale;
    }
  }
  return norm;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train: batch size must be positive");
  if (max_epochs == 0) throw std::invalid_argument("train: max epochs must be positive");
  if (max_len == 0) throw std::invalid_argument("train: max length must be positive");
  if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("train: dropout must be in [0, 1)");
  if (adadelta.rho <= 0.0 || adadelta.rho >= 1.0 || adadelta.epsilon <= 0.0) {
    throw std::invalid_argument("train: invalid Adadelta constants");
  }
}

double mean_nll(const ModelParams& params, const std::vector<SentenceTuple>& tuples, std::size_t max_len) {
  if (tuples.empty()) throw std::invalid_argument("mean_nll: no tuples");
  NoGradGuard no_grad;
  NllOptions options;
  options.keep_trace = false;
  options.max_len = max_len;
  double total = 0.0;
  for (const auto& t : tuples) total += sentence_nll(params, t, options).loss.item();
  return total / static_cast<double>(tuples.size());
}

TrainResult train(const TrainConfig& config, const ModelDims& dims, const TrainInputs& inputs) {
  config.validate();
  if (inputs.tuples == nullptr || inputs.tuples->empty()) throw std::invalid_argument("train: no training tuples");
  const auto& tuples = *inputs.tuples;
  if (config.mode == ModelMode::isg) {
    bool any_context = false;
    for (const auto& t : tuples) any_context = any_context || !t.is_doc_start;
    if (!any_context) {
      throw std::invalid_argument("train: isg mode needs tuples with a real preceding sentence");
    }
  }

  Rng root(config.seed);
  ModelParams params;
  if (inputs.init != nullptr) {
    if (inputs.init->mode != config.mode) {
      throw std::invalid_argument("train: initial parameters are " + to_string(inputs.init->mode) +
                                  " but training mode is " + to_string(config.mode));
    }
    if (!(inputs.init->dims == dims)) throw DimensionError("train: initial parameters have different dimensions");
    params = inputs.init->clone();
  } else {
    Rng init_rng = root.split(1);
    params = ModelParams::initialize(config.mode, dims, init_rng);
  }

  TrainResult result{params, {}, 0, inputs.resume ? *inputs.resume : Adadelta(config.adadelta)};
  Rng dropout_rng = root.split(2);
  std::optional<double> best_dev;

  NllOptions options;
  options.train = config.dropout > 0.0;
  options.dropout_rate = config.dropout;
  options.dropout_rng = &dropout_rng;
  options.keep_trace = false;
  options.max_len = config.max_len;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    double epoch_loss = 0.0;
    std::size_t seen = 0;
    for (const Batch& batch : make_batches(tuples, config.batch_size, config.seed, epoch)) {
      params.zero_grad();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const SentenceTuple item = batch.item(i);
        Tensor loss = sentence_nll(params, item, options).loss;
        const double value = loss.item();
        if (!std::isfinite(value)) {
          throw NumericError("train: non-finite loss " + std::to_string(value) + " at epoch " +
                             std::to_string(epoch) + " (x length " + std::to_string(item.x.size()) +
                             ", y length " + std::to_string(item.y.size()) + ")");
        }
        backward(loss);
        epoch_loss += value;
        ++seen;
      }
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (auto& [name, t] : params.named()) {
        for (double& g : t->mutable_grad()) g *= inv;
      }
      clip_global_norm(params, config.clip_norm);
      result.optimizer.step(params);
    }
    params.zero_grad();

    EpochRecord record;
    record.epoch = epoch;
    record.mean_nll = epoch_loss / static_cast<double>(seen);
    if (inputs.dev != nullptr && !inputs.dev->empty()) record.dev_nll = mean_nll(params, *inputs.dev, config.max_len);
    record.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(record);

    const bool improved = !record.dev_nll || !best_dev || *record.dev_nll < *best_dev;
    if (improved) {
      if (record.dev_nll) best_dev = record.dev_nll;
      result.params = params.clone();
      result.best_epoch = epoch;
    }
    if (config.checkpoint_every > 0 && !config.checkpoint_path.empty() && epoch % config.checkpoint_every == 0) {
      const std::string prefix = config.checkpoint_path + ".epoch" + std::to_string(epoch);
      save_model(params, prefix);
      write_tensor_file(prefix + ".adadelta", result.optimizer.to_tensor_file());
    }
    if (inputs.on_epoch) inputs.on_epoch(record);
  }
  return result;
}

ModelParams pretrain_init(const ModelParams& baseline, const ModelDims& dims, std::uint64_t seed) {
  if (baseline.mode != ModelMode::baseline) throw std::invalid_argument("pretrain_init: expected a baseline model");
  if (!(baseline.dims == dims)) {
    throw DimensionError("pretrain_init: baseline checkpoint dimensions do not match the gated configuration");
  }
  Rng rng = Rng(seed).split(1);
  ModelParams isg = ModelParams::initialize(ModelMode::isg, dims, rng);
  auto target = isg.named();
  for (const auto& [name, source] : baseline.named()) {
    auto it = target.find(name);
    if (it == target.end()) throw FormatError("pretrain_init: baseline tensor '" + name + "' unknown to gated model");
    if (it->second->shape() != source->shape()) {
      throw DimensionError("pretrain_init: shape mismatch for '" + name + "'");
    }
    std::copy(source->values().begin(), source->values().end(), it->second->mutable_values().begin());
  }
  return isg;
}

}  // namespace docnmt
