#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "dft/model.hpp"
#include "dft/supervision.hpp"
#include "dft/syndata.hpp"
#include "dft/trainer.hpp"

namespace dft::eval {

/// Metrics of one checkpoint on one dataset split. Hashes pin the exact
/// inputs the numbers came from; a rerun on unchanged inputs reproduces the
/// rendered report byte for byte.
struct EvalReport {
  std::string checkpoint_hash;
  std::string dataset_hash;
  std::string split;
  int examples = 0;
  double exact_match = 0.0;
  double token_accuracy = 0.0;
  std::optional<int> layer_i, layer_j;
  std::optional<double> lc_readout_accuracy;  // lens argmax at layer_i vs x_en, query positions
  std::optional<double> et_readout_accuracy;  // lens argmax at layer_j vs y_en, answer positions
  std::vector<double> alignment;              // per-layer mean parallel cosine
  int alignment_skipped = 0;

  std::string as_text() const;
  std::string as_jsonl() const;
};

struct EvalOptions {
  std::optional<int> layer_i;
  std::optional<int> layer_j;
};

EvalReport evaluate(const model::ModelParams& params, const syndata::Dataset& dataset, syndata::Split split,
                    const EvalOptions& options);

struct AlignmentCurve {
  std::vector<double> mean_cosine;  // L+1 entries
  int pairs = 0;
  int skipped = 0;  // degenerate pooled vectors
};

/// Mean cosine between mean-pooled parallel query representations, layer by
/// layer.
AlignmentCurve alignment_curve(const model::ModelParams& params,
                               std::span<const supervision::ParallelExample* const> pairs);

struct ProjectionOutput {
  std::vector<std::array<double, 2>> coords;
  std::vector<std::string> labels;
};

/// Centered PCA projection onto the top two principal components, computed
/// by a cyclic Jacobi eigensolver with a fixed sign convention (the largest
/// magnitude loading is positive). Rank-deficient inputs project onto a
/// zeroed axis rather than noise.
ProjectionOutput project_2d(const std::vector<std::vector<double>>& points,
                            const std::vector<std::string>& labels);

/// Symmetric eigen-decomposition helper behind project_2d; exposed so tests
/// can cross-check it against closed forms. Returns eigenvalues descending
/// with matching eigenvectors (rows).
void symmetric_eigen(const std::vector<double>& matrix, int n, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors);

struct AblationRowSpec {
  std::string name;
  trainer::Method method = trainer::Method::Tft;
  supervision::SupervisionSpec supervision;
};

struct SweepSpec {
  supervision::StageMode mode = supervision::StageMode::Logits;
  std::vector<int> layers;
};

struct AblationConfig {
  model::ModelConfig model;
  trainer::TrainConfig base;  // method/supervision taken from each row
  std::vector<AblationRowSpec> rows;
  std::optional<SweepSpec> sweep;  // pivot-reasoning stage sweep over layers
  syndata::Split eval_split = syndata::Split::Dev;
};

struct AblationRowResult {
  std::string name;
  EvalReport report;
};

struct SweepPoint {
  int layer = 0;
  double token_accuracy = 0.0;
  double lens_accuracy = 0.0;
};

struct AblationOutcome {
  std::string init_hash;  // every row starts from this initialization
  std::vector<AblationRowResult> rows;
  std::vector<SweepPoint> sweep;
  /// Set when the sweep includes the final layer: whether some mid-layer
  /// sweep point beats the final-layer one on answer accuracy.
  std::optional<bool> mid_layer_beats_last;

  std::string table_text() const;
  std::string rows_jsonl() const;
  std::string sweep_jsonl() const;
};

/// Trains one model per row (and per sweep layer) from a single shared
/// initialization, evaluates each on the same split, and tabulates.
AblationOutcome run_ablation(const AblationConfig& config, const syndata::Dataset& dataset);

AblationConfig parse_ablation_config_json(const std::string& json_text, std::string* data_path_out);

/// Content hash of an in-memory dataset (meta plus every entry, in order).
std::string dataset_content_hash(const syndata::Dataset& ds);

}  // namespace dft::eval
