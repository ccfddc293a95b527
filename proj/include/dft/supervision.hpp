#pragma once

#include <vector>

#include "dft/model.hpp"
#include "dft/tensor.hpp"

namespace dft::supervision {

/// One training quadruple: a target-language query/answer pair plus its
/// pivot-language ("English") parallel, aligned token for token.
struct ParallelExample {
  std::vector<int> x_tgt;
  std::vector<int> x_en;
  std::vector<int> y_tgt;
  std::vector<int> y_en;

  void validate(int vocab) const;
  int query_len() const { return static_cast<int>(x_tgt.size()); }
  int answer_len() const { return static_cast<int>(y_tgt.size()); }
};

enum class StageMode { None, Logits, Feature };

const char* to_string(StageMode m) noexcept;
StageMode stage_mode_from_string(const std::string& s);

/// Which intermediate stages to supervise and where. layer_i constrains the
/// language-conversion stage, layer_j the pivot-reasoning stage.
struct SupervisionSpec {
  StageMode lc_mode = StageMode::None;
  StageMode et_mode = StageMode::None;
  int layer_i = -1;
  int layer_j = -1;
  double weight_lc = 1.0;
  double weight_et = 1.0;

  bool lc_active() const { return lc_mode != StageMode::None; }
  bool et_active() const { return et_mode != StageMode::None; }
  bool any_active() const { return lc_active() || et_active(); }
  void validate(int n_layers) const;
};

struct LossBreakdown {
  double l_tft = 0.0;
  double l_lc = 0.0;
  double l_et = 0.0;
  double total = 0.0;
};

/// Total loss with its differentiable root. Inactive stages contribute an
/// exact 0 to the breakdown and add no nodes to the graph, so an all-none
/// spec yields the same graph as the plain target-language loss.
struct LossGraph {
  ad::Tensor total;
  LossBreakdown values;
};

/// Next-token cross-entropy on query + answer, supervised on the positions
/// that predict answer tokens only. Exposed generically so the English-only
/// baseline can reuse it on (x_en, y_en).
ad::Tensor next_token_loss(const model::ModelParams& params, std::span<const int> query,
                           std::span<const int> answer);

ad::Tensor loss_tft(const model::ModelParams& params, const ParallelExample& ex);
ad::Tensor loss_lc_logits(const model::ModelParams& params, const ParallelExample& ex, int layer_i);
ad::Tensor loss_lc_feature(const model::ModelParams& params, const ParallelExample& ex, int layer_i);
ad::Tensor loss_et_logits(const model::ModelParams& params, const ParallelExample& ex, int layer_j);
ad::Tensor loss_et_feature(const model::ModelParams& params, const ParallelExample& ex, int layer_j);

LossGraph loss_total(const model::ModelParams& params, const ParallelExample& ex,
                     const SupervisionSpec& spec);

}  // namespace dft::supervision
