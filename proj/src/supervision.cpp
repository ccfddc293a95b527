#include "dft/supervision.hpp"

#include <string>

#include "dft/error.hpp"
#include "dft/ops.hpp"

namespace dft::supervision {

using ad::Tensor;
using model::ForwardResult;
using model::ModelParams;

void ParallelExample::validate(int vocab) const {
  if (x_tgt.empty() || y_tgt.empty()) fail(ErrorKind::Value, "example has an empty segment");
  if (x_tgt.size() != x_en.size())
    fail(ErrorKind::Shape, "alignment: query lengths differ, " + std::to_string(x_tgt.size()) + " vs " +
                               std::to_string(x_en.size()));
  if (y_tgt.size() != y_en.size())
    fail(ErrorKind::Shape, "alignment: answer lengths differ, " + std::to_string(y_tgt.size()) + " vs " +
                               std::to_string(y_en.size()));
  auto check_segment = [vocab](const std::vector<int>& seg, const char* name) {
    for (int id : seg) {
      if (id < 0 || id >= vocab)
        fail(ErrorKind::Index, std::string(name) + ": token id " + std::to_string(id) + " outside vocab of " +
                                   std::to_string(vocab));
      if (id == model::kPadToken)
        fail(ErrorKind::Value, std::string(name) + ": pad token inside a segment");
    }
  };
  check_segment(x_tgt, "x_tgt");
  check_segment(x_en, "x_en");
  check_segment(y_tgt, "y_tgt");
  check_segment(y_en, "y_en");
}

const char* to_string(StageMode m) noexcept {
  switch (m) {
    case StageMode::None: return "none";
    case StageMode::Logits: return "logits";
    case StageMode::Feature: return "feature";
  }
  return "none";
}

StageMode stage_mode_from_string(const std::string& s) {
  if (s == "none") return StageMode::None;
  if (s == "logits") return StageMode::Logits;
  if (s == "feature") return StageMode::Feature;
  fail(ErrorKind::Config, "unknown supervision mode '" + s + "'");
}

void SupervisionSpec::validate(int n_layers) const {
  if (weight_lc < 0.0 || weight_et < 0.0) fail(ErrorKind::Config, "supervision weights must be >= 0");
  if (lc_active() && (layer_i <= 0 || layer_i > n_layers))
    fail(ErrorKind::Config, "layer_i " + std::to_string(layer_i) + " outside (0, " +
                                std::to_string(n_layers) + "]");
  if (et_active() && (layer_j <= 0 || layer_j > n_layers))
    fail(ErrorKind::Config, "layer_j " + std::to_string(layer_j) + " outside (0, " +
                                std::to_string(n_layers) + "]");
  if (lc_active() && et_active() && layer_i >= layer_j)
    fail(ErrorKind::Config, "layer_i must precede layer_j, got " + std::to_string(layer_i) + " >= " +
                                std::to_string(layer_j));
}

namespace {

std::vector<int> concat_ids(std::span<const int> a, std::span<const int> b) {
  std::vector<int> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

/// Logit-lens projection restricted to a row range: final normalization
/// with a detached gain, then the detached head. Row-wise ops commute with
/// the slice, so values match early_exit_logits on the same rows exactly.
Tensor lens_rows(const model::LayerActivations& acts, int layer, const ModelParams& params, int start,
                 int len) {
  const int L = acts.final_layer();
  if (layer < 0 || layer > L)
    fail(ErrorKind::Index, "lens layer " + std::to_string(layer) + " outside [0, " + std::to_string(L) + "]");
  Tensor rows = ad::row_slice(acts.h[layer], start, len);
  if (layer < L) rows = ad::rms_norm(rows, ad::detach(params.final_norm_g));
  const Tensor head = params.config.tie_output_head ? ad::transpose(params.token_emb) : params.w_out;
  return ad::matmul(rows, ad::detach(head));
}

Tensor answer_ce(const Tensor& logits, std::span<const int> query, std::span<const int> answer) {
  // Position p of the forward pass predicts token p+1; answer tokens are
  // predicted from positions query_len-1 .. n-2.
  const int q = static_cast<int>(query.size());
  const int n = q + static_cast<int>(answer.size());
  std::vector<int> targets(n, 0);
  std::vector<bool> mask(n, false);
  for (int p = q - 1; p <= n - 2; ++p) {
    targets[p] = answer[p - (q - 1)];
    mask[p] = true;
  }
  return ad::cross_entropy(logits, targets, mask);
}

struct SharedForward {
  ForwardResult tgt;      // live pass on x_tgt ++ y_tgt
  ForwardResult en;       // constant pass on x_en ++ y_en (feature modes only)
  bool has_en = false;
};

Tensor lc_logits_term(const ModelParams& params, const ParallelExample& ex, int layer_i,
                      const ForwardResult& tgt) {
  // Latent translation reads the same position it supervises: no shift.
  const int q = ex.query_len();
  Tensor logits = lens_rows(tgt.acts, layer_i, params, 0, q);
  return ad::cross_entropy(logits, ex.x_en, std::vector<bool>(q, true));
}

Tensor et_logits_term(const ModelParams& params, const ParallelExample& ex, int layer_j,
                      const ForwardResult& tgt) {
  // Next-token shift over answer-predicting positions, target swapped to
  // the pivot-language answer.
  const int q = ex.query_len();
  const int a = ex.answer_len();
  Tensor logits = lens_rows(tgt.acts, layer_j, params, q - 1, a);
  return ad::cross_entropy(logits, ex.y_en, std::vector<bool>(a, true));
}

std::vector<bool> query_mask(const ParallelExample& ex) {
  const int n = ex.query_len() + ex.answer_len();
  std::vector<bool> m(n, false);
  for (int p = 0; p < ex.query_len(); ++p) m[p] = true;
  return m;
}

std::vector<bool> answer_mask(const ParallelExample& ex) {
  const int n = ex.query_len() + ex.answer_len();
  std::vector<bool> m(n, false);
  for (int p = ex.query_len(); p < n; ++p) m[p] = true;
  return m;
}

Tensor lc_feature_term(const ParallelExample& ex, int layer_i, const SharedForward& fwd) {
  Tensor pooled_tgt = ad::mean_pool(fwd.tgt.acts.h[layer_i], query_mask(ex));
  Tensor pooled_en = ad::mean_pool(fwd.en.acts.h[layer_i], query_mask(ex));
  return ad::cosine_loss(pooled_en, pooled_tgt);
}

Tensor et_feature_term(const ParallelExample& ex, int layer_j, const SharedForward& fwd) {
  const int L = fwd.en.acts.final_layer();
  Tensor pooled_tgt = ad::mean_pool(fwd.tgt.acts.h[layer_j], answer_mask(ex));
  Tensor pooled_en = ad::mean_pool(fwd.en.acts.h[L], answer_mask(ex));
  return ad::cosine_loss(pooled_en, pooled_tgt);
}

/// The pivot-language branch only ever supplies targets, never receives
/// gradient, so it runs with the tape off.
ForwardResult english_forward(const ModelParams& params, const ParallelExample& ex) {
  ad::NoGradGuard no_grad;
  return model::forward(params, concat_ids(ex.x_en, ex.y_en));
}

}  // namespace

Tensor next_token_loss(const ModelParams& params, std::span<const int> query,
                       std::span<const int> answer) {
  if (query.empty() || answer.empty()) fail(ErrorKind::Value, "next_token_loss: empty segment");
  ForwardResult r = model::forward(params, concat_ids(query, answer));
  return answer_ce(r.logits, query, answer);
}

Tensor loss_tft(const ModelParams& params, const ParallelExample& ex) {
  return next_token_loss(params, ex.x_tgt, ex.y_tgt);
}

Tensor loss_lc_logits(const ModelParams& params, const ParallelExample& ex, int layer_i) {
  ex.validate(params.config.vocab);
  ForwardResult tgt = model::forward(params, concat_ids(ex.x_tgt, ex.y_tgt));
  return lc_logits_term(params, ex, layer_i, tgt);
}

Tensor loss_lc_feature(const ModelParams& params, const ParallelExample& ex, int layer_i) {
  ex.validate(params.config.vocab);
  SharedForward fwd{model::forward(params, concat_ids(ex.x_tgt, ex.y_tgt)), english_forward(params, ex),
                    true};
  return lc_feature_term(ex, layer_i, fwd);
}

Tensor loss_et_logits(const ModelParams& params, const ParallelExample& ex, int layer_j) {
  ex.validate(params.config.vocab);
  ForwardResult tgt = model::forward(params, concat_ids(ex.x_tgt, ex.y_tgt));
  return et_logits_term(params, ex, layer_j, tgt);
}

Tensor loss_et_feature(const ModelParams& params, const ParallelExample& ex, int layer_j) {
  ex.validate(params.config.vocab);
  SharedForward fwd{model::forward(params, concat_ids(ex.x_tgt, ex.y_tgt)), english_forward(params, ex),
                    true};
  return et_feature_term(ex, layer_j, fwd);
}

LossGraph loss_total(const ModelParams& params, const ParallelExample& ex, const SupervisionSpec& spec) {
  ex.validate(params.config.vocab);
  spec.validate(params.config.n_layers);

  SharedForward fwd;
  fwd.tgt = model::forward(params, concat_ids(ex.x_tgt, ex.y_tgt));
  if (spec.lc_mode == StageMode::Feature || spec.et_mode == StageMode::Feature) {
    fwd.en = english_forward(params, ex);
    fwd.has_en = true;
  }

  LossGraph out;
  Tensor tft = answer_ce(fwd.tgt.logits, ex.x_tgt, ex.y_tgt);
  out.values.l_tft = tft.value();
  Tensor total = tft;

  auto accumulate = [&total](const Tensor& term, double weight) {
    Tensor weighted = weight == 1.0 ? term : ad::scale(term, weight);
    total = ad::add(total, weighted);
  };

  if (spec.lc_active()) {
    Tensor lc = spec.lc_mode == StageMode::Logits ? lc_logits_term(params, ex, spec.layer_i, fwd.tgt)
                                                  : lc_feature_term(ex, spec.layer_i, fwd);
    out.values.l_lc = lc.value();
    accumulate(lc, spec.weight_lc);
  }
  if (spec.et_active()) {
    Tensor et = spec.et_mode == StageMode::Logits ? et_logits_term(params, ex, spec.layer_j, fwd.tgt)
                                                  : et_feature_term(ex, spec.layer_j, fwd);
    out.values.l_et = et.value();
    accumulate(et, spec.weight_et);
  }

  out.total = total;
  out.values.total = total.value();
  return out;
}

}  // namespace dft::supervision
