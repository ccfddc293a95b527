#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dft/model.hpp"
#include "dft/supervision.hpp"
#include "dft/syndata.hpp"

namespace dft::trainer {

enum class Method { Sft, Tft, Dft };

const char* to_string(Method m) noexcept;
Method method_from_string(const std::string& s);

enum class OptKind { Sgd, Adam };

struct OptimizerConfig {
  OptKind kind = OptKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  Method method = Method::Tft;
  supervision::SupervisionSpec supervision;
  OptimizerConfig optimizer;
  int batch_size = 32;
  int epochs = 1;
  std::uint64_t seed = 0;
  std::optional<double> grad_clip;
  int checkpoint_every = 0;   // steps between periodic checkpoints; 0 = final only
  std::string out_dir;        // empty = keep everything in memory

  /// Strict user-facing validation: a deep-supervision run must actually
  /// supervise something. Library callers may bypass it to exercise the
  /// reduction property (dft with an all-none spec == tft bit for bit).
  void validate(const model::ModelConfig& model_config) const;
};

struct StepRecord {
  int step = 0;
  double l_tft = 0.0;
  double l_lc = 0.0;
  double l_et = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;  // pre-clip global norm
  double wall_ms = 0.0;    // in-memory only; not persisted
};

struct TrainMetrics {
  std::vector<StepRecord> steps;
  /// Line-delimited records. Wall time stays out of the file so reruns are
  /// byte-identical.
  std::string as_jsonl() const;
};

enum class TrainStatus { Completed, Diverged };

struct TrainResult {
  TrainStatus status = TrainStatus::Completed;
  int steps_run = 0;
  TrainMetrics metrics;
};

/// Adam moments in named-parameter order, plus the shared step counter.
struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t t = 0;
};

AdamState make_adam_state(const model::ModelParams& params);

/// Bias-corrected moment update over the gradients currently stored in the
/// parameter tensors. Non-finite gradients abort.
void adam_step(model::ModelParams& params, AdamState& state, const OptimizerConfig& opt);
void sgd_step(model::ModelParams& params, const OptimizerConfig& opt);

/// Global-norm clipping over all parameter gradients. Returns the pre-clip
/// norm; afterwards the norm is bounded by `limit`.
double clip_grad_norm(const model::ModelParams& params, double limit);

void save_optimizer_state(const AdamState& state, const std::string& path);
AdamState load_optimizer_state(const std::string& path, const model::ModelParams& params);

/// Deterministic training: a seeded permutation per epoch, sequential
/// gradient accumulation over each batch, one optimizer step per batch.
/// Starts at start_step (for resume; epoch position is derived from it).
/// A non-finite loss or gradient stops the run with the last completed
/// step's parameters intact.
TrainResult train(const TrainConfig& config, const syndata::Dataset& dataset, model::ModelParams& params,
                  AdamState* adam_state = nullptr, int start_step = 0);

/// Steps one full run takes: epochs * ceil(train_count / batch_size).
int planned_steps(const TrainConfig& config, int train_count);

TrainConfig parse_train_config_json(const std::string& json_text, model::ModelConfig* model_out,
                                    std::string* data_path_out);

}  // namespace dft::trainer
