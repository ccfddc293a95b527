#include "dft/eval.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "dft/error.hpp"
#include "dft/ops.hpp"
#include "dft/util/hash.hpp"
#include "dft/util/io.hpp"

namespace dft::eval {

using json = nlohmann::ordered_json;
using model::ModelParams;
using supervision::ParallelExample;

namespace {

int argmax_row(const double* row, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

std::vector<int> concat_ids(std::span<const int> a, std::span<const int> b) {
  std::vector<int> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

std::string dataset_content_hash(const syndata::Dataset& ds) {
  Hasher h;
  h.update(std::string(syndata::to_string(ds.task)));
  h.update_u64(static_cast<std::uint64_t>(ds.vocab));
  h.update(ds.language);
  for (const auto& e : ds.entries) {
    h.update(std::string(syndata::to_string(e.split)));
    h.update(e.example.x_tgt);
    h.update(e.example.x_en);
    h.update(e.example.y_tgt);
    h.update(e.example.y_en);
  }
  return hex64(h.digest());
}

EvalReport evaluate(const ModelParams& params, const syndata::Dataset& dataset, syndata::Split split,
                    const EvalOptions& options) {
  if (dataset.vocab != params.config.vocab)
    fail(ErrorKind::Config, "vocab mismatch: dataset " + std::to_string(dataset.vocab) + ", checkpoint " +
                                std::to_string(params.config.vocab));
  const auto view = dataset.split_view(split);
  if (view.empty())
    fail(ErrorKind::Value, std::string("evaluate: split '") + syndata::to_string(split) + "' is empty");

  ad::NoGradGuard no_grad;
  EvalReport rep;
  rep.checkpoint_hash = hex64(params.content_hash());
  rep.dataset_hash = dataset_content_hash(dataset);
  rep.split = syndata::to_string(split);
  rep.examples = static_cast<int>(view.size());
  rep.layer_i = options.layer_i;
  rep.layer_j = options.layer_j;

  long em_hits = 0;
  long tok_hits = 0, tok_total = 0;
  long lc_hits = 0, lc_total = 0;
  long et_hits = 0, et_total = 0;

  for (const ParallelExample* exp : view) {
    const ParallelExample& ex = *exp;
    const int q = ex.query_len(), a = ex.answer_len();

    const std::vector<int> decoded = model::greedy_decode(params, ex.x_tgt, a);
    const int got = static_cast<int>(decoded.size()) - q;
    bool exact = got == a;
    for (int t = 0; t < a; ++t) {
      const bool hit = t < got && decoded[q + t] == ex.y_tgt[t];
      tok_hits += hit ? 1 : 0;
      ++tok_total;
      exact = exact && hit;
    }
    em_hits += exact ? 1 : 0;

    if (options.layer_i) {
      // Latent-translation readout: same-position argmax over the query.
      model::ForwardResult r = model::forward(params, ex.x_tgt);
      ad::Tensor lens = model::early_exit_logits(r.acts, *options.layer_i, params);
      for (int t = 0; t < q; ++t) {
        lc_hits += argmax_row(lens.data().data() + static_cast<long>(t) * dataset.vocab, dataset.vocab) ==
                           ex.x_en[t]
                       ? 1
                       : 0;
        ++lc_total;
      }
    }
    if (options.layer_j) {
      // Teacher-forced next-token readout over answer-predicting positions.
      model::ForwardResult r = model::forward(params, concat_ids(ex.x_tgt, ex.y_tgt));
      ad::Tensor lens = model::early_exit_logits(r.acts, *options.layer_j, params);
      for (int t = 0; t < a; ++t) {
        const int p = q - 1 + t;
        et_hits += argmax_row(lens.data().data() + static_cast<long>(p) * dataset.vocab, dataset.vocab) ==
                           ex.y_en[t]
                       ? 1
                       : 0;
        ++et_total;
      }
    }
  }

  rep.exact_match = static_cast<double>(em_hits) / rep.examples;
  rep.token_accuracy = static_cast<double>(tok_hits) / tok_total;
  if (lc_total > 0) rep.lc_readout_accuracy = static_cast<double>(lc_hits) / lc_total;
  if (et_total > 0) rep.et_readout_accuracy = static_cast<double>(et_hits) / et_total;

  AlignmentCurve curve = alignment_curve(params, view);
  rep.alignment = curve.mean_cosine;
  rep.alignment_skipped = curve.skipped;
  return rep;
}

AlignmentCurve alignment_curve(const ModelParams& params,
                               std::span<const ParallelExample* const> pairs) {
  if (pairs.empty()) fail(ErrorKind::Value, "alignment_curve: empty corpus");
  ad::NoGradGuard no_grad;
  const int L = params.config.n_layers;
  AlignmentCurve out;
  out.mean_cosine.assign(L + 1, 0.0);
  std::vector<int> counts(L + 1, 0);
  for (const ParallelExample* exp : pairs) {
    model::ForwardResult en = model::forward(params, exp->x_en);
    model::ForwardResult tgt = model::forward(params, exp->x_tgt);
    const int T = exp->query_len();
    for (int k = 0; k <= L; ++k) {
      const auto& he = en.acts.h[k];
      const auto& ht = tgt.acts.h[k];
      const int d = he.cols();
      double dot = 0.0, qa = 0.0, qb = 0.0;
      std::vector<double> pe(d, 0.0), pt(d, 0.0);
      for (int t = 0; t < T; ++t)
        for (int j = 0; j < d; ++j) {
          pe[j] += he.data()[t * d + j];
          pt[j] += ht.data()[t * d + j];
        }
      for (int j = 0; j < d; ++j) {
        pe[j] /= T;
        pt[j] /= T;
        dot += pe[j] * pt[j];
        qa += pe[j] * pe[j];
        qb += pt[j] * pt[j];
      }
      if (qa == 0.0 || qb == 0.0) {
        ++out.skipped;
        continue;
      }
      out.mean_cosine[k] += dot / std::sqrt(qa * qb);
      ++counts[k];
    }
  }
  for (int k = 0; k <= L; ++k) {
    if (counts[k] == 0) fail(ErrorKind::Value, "alignment_curve: all pairs degenerate at layer " +
                                                   std::to_string(k));
    out.mean_cosine[k] /= counts[k];
  }
  out.pairs = static_cast<int>(pairs.size());
  return out;
}

// ---------------------------------------------------------------------------
// PCA

void symmetric_eigen(const std::vector<double>& matrix, int n, std::vector<double>& eigenvalues,
                     std::vector<double>& eigenvectors) {
  // Cyclic Jacobi. a is updated in place; v accumulates rotations.
  std::vector<double> a = matrix;
  std::vector<double> v(static_cast<std::size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[i * n + i] = 1.0;

  auto off_norm = [&]() {
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) s += a[i * n + j] * a[i * n + j];
    return std::sqrt(2.0 * s);
  };
  double scale = 0.0;
  for (int i = 0; i < n; ++i) scale = std::max(scale, std::abs(a[i * n + i]));
  scale = std::max(scale, off_norm());
  const double tol = scale > 0 ? 1e-14 * scale : 0.0;

  for (int sweep = 0; sweep < 128 && off_norm() > tol; ++sweep) {
    for (int p = 0; p < n - 1; ++p) {
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[p * n + q];
        if (std::abs(apq) <= tol / n) continue;
        const double app = a[p * n + p], aqq = a[q * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < n; ++k) {
          const double akp = a[k * n + p], akq = a[k * n + q];
          a[k * n + p] = c * akp - s * akq;
          a[k * n + q] = s * akp + c * akq;
        }
        for (int k = 0; k < n; ++k) {
          const double apk = a[p * n + k], aqk = a[q * n + k];
          a[p * n + k] = c * apk - s * aqk;
          a[q * n + k] = s * apk + c * aqk;
        }
        for (int k = 0; k < n; ++k) {
          const double vkp = v[k * n + p], vkq = v[k * n + q];
          v[k * n + p] = c * vkp - s * vkq;
          v[k * n + q] = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<int> order(n);
  for (int i = 0; i < n; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](int x, int y) { return a[x * n + x] > a[y * n + y]; });
  eigenvalues.assign(n, 0.0);
  eigenvectors.assign(static_cast<std::size_t>(n) * n, 0.0);
  for (int r = 0; r < n; ++r) {
    eigenvalues[r] = a[order[r] * n + order[r]];
    for (int k = 0; k < n; ++k) eigenvectors[r * n + k] = v[k * n + order[r]];
  }
}

ProjectionOutput project_2d(const std::vector<std::vector<double>>& points,
                            const std::vector<std::string>& labels) {
  const int n = static_cast<int>(points.size());
  if (n < 3) fail(ErrorKind::Value, "project_2d: need at least 3 vectors, got " + std::to_string(n));
  if (labels.size() != points.size()) fail(ErrorKind::Contract, "project_2d: labels/points size mismatch");
  const int d = static_cast<int>(points[0].size());
  for (const auto& p : points)
    if (static_cast<int>(p.size()) != d) fail(ErrorKind::Shape, "project_2d: inconsistent vector lengths");

  std::vector<double> mean(d, 0.0);
  for (const auto& p : points)
    for (int j = 0; j < d; ++j) mean[j] += p[j];
  for (int j = 0; j < d; ++j) mean[j] /= n;

  std::vector<double> cov(static_cast<std::size_t>(d) * d, 0.0);
  for (const auto& p : points)
    for (int i = 0; i < d; ++i) {
      const double ci = p[i] - mean[i];
      for (int j = 0; j < d; ++j) cov[i * d + j] += ci * (p[j] - mean[j]);
    }
  for (double& c : cov) c /= (n - 1);

  std::vector<double> evals, evecs;
  symmetric_eigen(cov, d, evals, evecs);

  double trace = 0.0;
  for (int i = 0; i < d; ++i) trace += cov[i * d + i];
  const double floor = 1e-12 * std::max(trace, 1e-300);

  ProjectionOutput out;
  out.labels = labels;
  out.coords.assign(points.size(), {0.0, 0.0});
  for (int axis = 0; axis < 2; ++axis) {
    if (axis >= d || evals[axis] <= floor) continue;  // rank-deficient: leave zeros
    // Sign convention: the largest-magnitude loading points positive.
    int arg = 0;
    for (int k = 1; k < d; ++k)
      if (std::abs(evecs[axis * d + k]) > std::abs(evecs[axis * d + arg])) arg = k;
    const double sign = evecs[axis * d + arg] >= 0 ? 1.0 : -1.0;
    for (int r = 0; r < n; ++r) {
      double s = 0.0;
      for (int k = 0; k < d; ++k) s += (points[r][k] - mean[k]) * evecs[axis * d + k];
      out.coords[r][axis] = sign * s;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reports

std::string EvalReport::as_text() const {
  std::string out;
  out += "checkpoint " + checkpoint_hash + "\n";
  out += "dataset    " + dataset_hash + "\n";
  out += "split      " + split + "\n";
  out += strprintf("examples   %d\n", examples);
  out += strprintf("exact_match     %.6f\n", exact_match);
  out += strprintf("token_accuracy  %.6f\n", token_accuracy);
  if (lc_readout_accuracy)
    out += strprintf("lc_readout@%-3d  %.6f\n", layer_i.value_or(-1), *lc_readout_accuracy);
  if (et_readout_accuracy)
    out += strprintf("et_readout@%-3d  %.6f\n", layer_j.value_or(-1), *et_readout_accuracy);
  out += "alignment_cosine_per_layer";
  for (double c : alignment) out += strprintf(" %.6f", c);
  out += "\n";
  if (alignment_skipped > 0) out += strprintf("alignment_skipped %d\n", alignment_skipped);
  return out;
}

std::string EvalReport::as_jsonl() const {
  json j;
  j["checkpoint_hash"] = checkpoint_hash;
  j["dataset_hash"] = dataset_hash;
  j["split"] = split;
  j["examples"] = examples;
  j["exact_match"] = exact_match;
  j["token_accuracy"] = token_accuracy;
  if (layer_i) j["layer_i"] = *layer_i;
  if (layer_j) j["layer_j"] = *layer_j;
  if (lc_readout_accuracy) j["lc_readout_accuracy"] = *lc_readout_accuracy;
  if (et_readout_accuracy) j["et_readout_accuracy"] = *et_readout_accuracy;
  j["alignment"] = alignment;
  j["alignment_skipped"] = alignment_skipped;
  return j.dump() + "\n";
}

// ---------------------------------------------------------------------------
// Ablation harness

namespace {

EvalOptions options_for(const supervision::SupervisionSpec& spec) {
  EvalOptions o;
  if (spec.lc_active()) o.layer_i = spec.layer_i;
  if (spec.et_active()) o.layer_j = spec.layer_j;
  return o;
}

}  // namespace

AblationOutcome run_ablation(const AblationConfig& config, const syndata::Dataset& dataset) {
  if (config.rows.empty() && !config.sweep) fail(ErrorKind::Config, "ablation: nothing to run");
  config.model.validate();

  AblationOutcome out;
  const ModelParams init = model::init_params(config.model, config.base.seed);
  out.init_hash = hex64(init.content_hash());

  auto train_one = [&](trainer::Method method, const supervision::SupervisionSpec& spec) {
    ModelParams params = model::init_params(config.model, config.base.seed);
    if (hex64(params.content_hash()) != out.init_hash)
      fail(ErrorKind::Contract, "ablation rows must share one initialization");
    trainer::TrainConfig tc = config.base;
    tc.method = method;
    tc.supervision = spec;
    tc.out_dir.clear();
    trainer::train(tc, dataset, params);
    return params;
  };

  for (const AblationRowSpec& row : config.rows) {
    ModelParams params = train_one(row.method, row.supervision);
    AblationRowResult r;
    r.name = row.name;
    r.report = evaluate(params, dataset, config.eval_split, options_for(row.supervision));
    out.rows.push_back(std::move(r));
  }

  if (config.sweep) {
    if (config.sweep->mode == supervision::StageMode::None)
      fail(ErrorKind::Config, "sweep: mode must be logits or feature");
    for (int layer : config.sweep->layers) {
      supervision::SupervisionSpec spec;
      spec.et_mode = config.sweep->mode;
      spec.layer_j = layer;
      ModelParams params = train_one(trainer::Method::Dft, spec);
      EvalOptions o;
      o.layer_j = layer;
      EvalReport rep = evaluate(params, dataset, config.eval_split, o);
      out.sweep.push_back({layer, rep.token_accuracy, rep.et_readout_accuracy.value_or(0.0)});
    }
    const int L = config.model.n_layers;
    auto last = std::find_if(out.sweep.begin(), out.sweep.end(),
                             [L](const SweepPoint& p) { return p.layer == L; });
    if (last != out.sweep.end()) {
      double best_mid = -1.0;
      for (const SweepPoint& p : out.sweep)
        if (p.layer < L) best_mid = std::max(best_mid, p.token_accuracy);
      if (best_mid >= 0.0) out.mid_layer_beats_last = best_mid > last->token_accuracy;
    }
  }
  return out;
}

std::string AblationOutcome::table_text() const {
  std::string out = "init " + init_hash + "\n";
  out += strprintf("%-16s %-10s %-12s %-12s %-12s %-12s\n", "name", "exact", "token_acc", "lc_readout",
                   "et_readout", "dataset");
  for (const AblationRowResult& r : rows) {
    out += strprintf("%-16s %-10.4f %-12.4f %-12s %-12s %-12s\n", r.name.c_str(), r.report.exact_match,
                     r.report.token_accuracy,
                     r.report.lc_readout_accuracy ? strprintf("%.4f", *r.report.lc_readout_accuracy).c_str()
                                                  : "-",
                     r.report.et_readout_accuracy ? strprintf("%.4f", *r.report.et_readout_accuracy).c_str()
                                                  : "-",
                     r.report.dataset_hash.substr(0, 8).c_str());
  }
  if (!sweep.empty()) {
    out += strprintf("%-8s %-12s %-12s\n", "layer", "token_acc", "lens_acc");
    for (const SweepPoint& p : sweep)
      out += strprintf("%-8d %-12.4f %-12.4f\n", p.layer, p.token_accuracy, p.lens_accuracy);
    if (mid_layer_beats_last)
      out += strprintf("mid_layer_beats_last_layer %s\n", *mid_layer_beats_last ? "observed" : "not-observed");
  }
  return out;
}

std::string AblationOutcome::rows_jsonl() const {
  std::string out;
  for (const AblationRowResult& r : rows) {
    json j;
    j["name"] = r.name;
    j["init_hash"] = init_hash;
    j["report"] = json::parse(r.report.as_jsonl());
    out += j.dump() + "\n";
  }
  return out;
}

std::string AblationOutcome::sweep_jsonl() const {
  std::string out;
  for (const SweepPoint& p : sweep) {
    json j = {{"layer", p.layer},
              {"token_accuracy", p.token_accuracy},
              {"lens_accuracy", p.lens_accuracy},
              {"init_hash", init_hash}};
    out += j.dump() + "\n";
  }
  if (mid_layer_beats_last) {
    json j = {{"mid_layer_beats_last", *mid_layer_beats_last}};
    out += j.dump() + "\n";
  }
  return out;
}

AblationConfig parse_ablation_config_json(const std::string& json_text, std::string* data_path_out) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("ablation config: ") + e.what());
  }
  try {
    AblationConfig c;
    const json& m = j.at("model");
    c.model.n_layers = m.at("n_layers").get<int>();
    c.model.hidden = m.at("hidden").get<int>();
    c.model.n_heads = m.at("n_heads").get<int>();
    c.model.vocab = m.at("vocab").get<int>();
    c.model.max_seq_len = m.at("max_seq_len").get<int>();
    c.model.tie_output_head = m.value("tie_output_head", false);
    if (data_path_out) *data_path_out = j.at("data").at("path").get<std::string>();
    const std::string split = j.value("eval_split", "dev");
    if (split == "train")
      c.eval_split = syndata::Split::Train;
    else if (split == "dev")
      c.eval_split = syndata::Split::Dev;
    else if (split == "test")
      c.eval_split = syndata::Split::Test;
    else
      fail(ErrorKind::Config, "unknown eval_split '" + split + "'");

    const json& t = j.at("train");
    c.base.batch_size = t.value("batch_size", 32);
    c.base.epochs = t.value("epochs", 1);
    c.base.seed = t.value("seed", std::uint64_t{0});
    if (t.contains("grad_clip") && !t["grad_clip"].is_null()) c.base.grad_clip = t["grad_clip"].get<double>();
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      const std::string kind = o.value("kind", "adam");
      c.base.optimizer.kind = kind == "sgd" ? trainer::OptKind::Sgd : trainer::OptKind::Adam;
      c.base.optimizer.lr = o.value("lr", 1e-3);
      c.base.optimizer.beta1 = o.value("beta1", 0.9);
      c.base.optimizer.beta2 = o.value("beta2", 0.999);
      c.base.optimizer.eps = o.value("eps", 1e-8);
    }

    for (const json& row : j.value("rows", json::array())) {
      AblationRowSpec spec;
      spec.name = row.at("name").get<std::string>();
      spec.method = trainer::method_from_string(row.at("method").get<std::string>());
      if (row.contains("supervision")) {
        const json& s = row["supervision"];
        spec.supervision.lc_mode = supervision::stage_mode_from_string(s.value("lc_mode", "none"));
        spec.supervision.et_mode = supervision::stage_mode_from_string(s.value("et_mode", "none"));
        spec.supervision.layer_i = s.value("layer_i", -1);
        spec.supervision.layer_j = s.value("layer_j", -1);
        spec.supervision.weight_lc = s.value("weight_lc", 1.0);
        spec.supervision.weight_et = s.value("weight_et", 1.0);
      }
      c.rows.push_back(std::move(spec));
    }
    if (j.contains("sweep")) {
      SweepSpec s;
      s.mode = supervision::stage_mode_from_string(j["sweep"].value("mode", "logits"));
      s.layers = j["sweep"].at("layers").get<std::vector<int>>();
      c.sweep = std::move(s);
    }
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("ablation config: ") + e.what());
  }
}

}  // namespace dft::eval
