#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "docnmt/checkpoint.hpp"
#include "docnmt/model.hpp"

namespace docnmt {

struct AdadeltaConfig {
  double rho = 0.95;
  double epsilon = 1e-6;
};

/// Running averages E[g^2] and E[dx^2] for one parameter.
struct AdadeltaSlot {
  std::vector<double> mean_sq_grad;
  std::vector<double> mean_sq_update;
};

/// In-place update of `param` from `grad`:
///   E[g^2]  <- rho E[g^2] + (1-rho) g^2
///   dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
///   param   <- param + dx
void adadelta_step(AdadeltaSlot& slot, std::span<double> param, std::span<const double> grad,
                   const AdadeltaConfig& config = {});

class Adadelta {
 public:
  explicit Adadelta(AdadeltaConfig config = {}) : config_(config) {}

  /// Applies one update to every parameter using its accumulated gradient.
  void step(ModelParams& params);

  const AdadeltaConfig& config() const { return config_; }
  const std::map<std::string, AdadeltaSlot>& slots() const { return slots_; }

  TensorFile to_tensor_file() const;
  static Adadelta from_tensor_file(const TensorFile& file);

 private:
  AdadeltaConfig config_;
  std::map<std::string, AdadeltaSlot> slots_;
};

/// Rescales all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(ModelParams& params, double max_norm);

struct TrainConfig {
  std::size_t batch_size = 80;
  std::size_t max_epochs = 10;
  std::uint64_t seed = 1;
  ModelMode mode = ModelMode::baseline;
  std::size_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string checkpoint_path;       // prefix for periodic checkpoints
  double dropout = 0.5;
  std::size_t max_len = kMaxSentenceLength;
  double clip_norm = 1.0;
  AdadeltaConfig adadelta;

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_nll = 0.0;
  std::optional<double> dev_nll;
  double seconds = 0.0;
};

struct TrainResult {
  ModelParams params;  // best by dev loss when a dev set is given, else final
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  Adadelta optimizer;
};

struct TrainInputs {
  const std::vector<SentenceTuple>* tuples = nullptr;
  const std::vector<SentenceTuple>* dev = nullptr;
  const ModelParams* init = nullptr;       // fresh initialization when null
  const Adadelta* resume = nullptr;        // optimizer state to continue from
  std::function<void(const EpochRecord&)> on_epoch;
};

TrainResult train(const TrainConfig& config, const ModelDims& dims, const TrainInputs& inputs);

/// Mean per-sentence negative log-likelihood without dropout.
double mean_nll(const ModelParams& params, const std::vector<SentenceTuple>& tuples,
                std::size_t max_len = kMaxSentenceLength);

/// Gated-mode parameters seeded from a trained baseline: every baseline tensor
/// is copied exactly and the gate-specific tensors are freshly initialized.
/// The baseline's context projection doubles as C2.
ModelParams pretrain_init(const ModelParams& baseline, const ModelDims& dims, std::uint64_t seed);

}  // namespace docnmt
