#include <doctest.h>

#include <cmath>

#include "dft/error.hpp"
#include "dft/eval.hpp"
#include "dft/model.hpp"
#include "dft/syndata.hpp"
#include "dft/trainer.hpp"
#include "dft/util/rng.hpp"

using namespace dft;
using supervision::StageMode;
using trainer::Method;

namespace {

model::ModelConfig small_config(int vocab = 64) {
  model::ModelConfig c;
  c.n_layers = 2;
  c.hidden = 32;
  c.n_heads = 2;
  c.vocab = vocab;
  c.max_seq_len = 32;
  return c;
}

syndata::Dataset kv_dataset(int train, int dev, std::uint64_t seed) {
  syndata::TaskSpec spec;
  spec.kind = syndata::TaskKind::KeyValueRecall;
  spec.vocab = 64;
  spec.payload_min = 2;
  spec.payload_max = 2;
  spec.seed = seed;
  return syndata::generate(spec, syndata::make_language(3, 64), {train, dev, 0});
}

}  // namespace

TEST_CASE("evaluate guards") {
  auto params = model::init_params(small_config(), 1);
  auto ds = kv_dataset(8, 0, 2);
  CHECK_THROWS_AS(eval::evaluate(params, ds, syndata::Split::Test, {}), Error);  // empty split

  auto mismatched = model::init_params(small_config(96), 1);
  CHECK_THROWS_AS(eval::evaluate(mismatched, ds, syndata::Split::Train, {}), Error);
}

TEST_CASE("a model overfit to its data earns exact match 1.0 on it") {
  auto ds = kv_dataset(4, 0, 3);
  trainer::TrainConfig cfg;
  cfg.method = Method::Tft;
  cfg.batch_size = 4;
  cfg.epochs = 500;
  cfg.seed = 4;
  cfg.optimizer.lr = 3e-3;
  auto params = model::init_params(small_config(), 5);
  trainer::train(cfg, ds, params);

  auto rep = eval::evaluate(params, ds, syndata::Split::Train, {});
  CHECK(rep.exact_match == 1.0);
  CHECK(rep.token_accuracy == 1.0);
  CHECK(rep.examples == 4);
  CHECK_FALSE(rep.checkpoint_hash.empty());
  CHECK_FALSE(rep.dataset_hash.empty());
}

TEST_CASE("random-init accuracy on modular-add stays within the chance bound") {
  syndata::TaskSpec spec;
  spec.kind = syndata::TaskKind::ModularAdd;
  spec.vocab = 64;
  spec.seed = 6;
  auto ds = syndata::generate(spec, syndata::make_language(3, 64), {100, 0, 0});
  auto params = model::init_params(small_config(), 7);
  auto rep = eval::evaluate(params, ds, syndata::Split::Train, {});
  // Answers range over 10 digits plus eos; chance is 1/11 per position.
  const double p = 1.0 / 11.0;
  const double sigma = std::sqrt(p * (1 - p) / (100.0 * 2));
  CHECK(rep.token_accuracy <= p + 3 * sigma);
  CHECK(rep.exact_match <= rep.token_accuracy);
}

TEST_CASE("exact match never exceeds token accuracy") {
  auto ds = kv_dataset(24, 0, 8);
  auto params = model::init_params(small_config(), 9);
  auto rep = eval::evaluate(params, ds, syndata::Split::Train, {});
  CHECK(rep.exact_match <= rep.token_accuracy);
  CHECK(rep.exact_match >= 0.0);
  CHECK(rep.token_accuracy <= 1.0);
}

TEST_CASE("alignment curve: identical languages give cosine 1 everywhere") {
  auto params = model::init_params(small_config(), 10);
  auto ds = kv_dataset(6, 0, 11);
  std::vector<supervision::ParallelExample> identical;
  std::vector<const supervision::ParallelExample*> view;
  for (const auto& e : ds.entries) {
    auto ex = e.example;
    ex.x_tgt = ex.x_en;
    ex.y_tgt = ex.y_en;
    identical.push_back(ex);
  }
  for (const auto& ex : identical) view.push_back(&ex);
  auto curve = eval::alignment_curve(params, view);
  REQUIRE(curve.mean_cosine.size() == 3);
  for (double c : curve.mean_cosine) CHECK(c == doctest::Approx(1.0).epsilon(1e-12));

  // Distinct languages stay within cosine range.
  std::vector<const supervision::ParallelExample*> raw;
  for (const auto& e : ds.entries) raw.push_back(&e.example);
  auto curve2 = eval::alignment_curve(params, raw);
  for (double c : curve2.mean_cosine) {
    CHECK(c >= -1.0 - 1e-12);
    CHECK(c <= 1.0 + 1e-12);
  }
}

TEST_CASE("evaluate reruns reproduce the rendered report byte for byte") {
  auto ds = kv_dataset(10, 0, 12);
  auto params = model::init_params(small_config(), 13);
  eval::EvalOptions opt;
  opt.layer_i = 1;
  opt.layer_j = 2;
  auto r1 = eval::evaluate(params, ds, syndata::Split::Train, opt);
  auto r2 = eval::evaluate(params, ds, syndata::Split::Train, opt);
  CHECK(r1.as_text() == r2.as_text());
  CHECK(r1.as_jsonl() == r2.as_jsonl());
  CHECK(r1.lc_readout_accuracy.has_value());
  CHECK(r1.et_readout_accuracy.has_value());
}

TEST_CASE("symmetric eigen matches the closed-form 2x2 solution") {
  // [[3, 1], [1, 2]]: eigenvalues (5 +- sqrt(5)) / 2.
  std::vector<double> m{3, 1, 1, 2};
  std::vector<double> evals, evecs;
  eval::symmetric_eigen(m, 2, evals, evecs);
  const double s5 = std::sqrt(5.0);
  CHECK(evals[0] == doctest::Approx((5 + s5) / 2).epsilon(1e-12));
  CHECK(evals[1] == doctest::Approx((5 - s5) / 2).epsilon(1e-12));
  // Eigenvector check: (A - lambda I) v = 0.
  for (int k = 0; k < 2; ++k) {
    const double vx = evecs[k * 2], vy = evecs[k * 2 + 1];
    CHECK(std::abs((3 - evals[k]) * vx + 1 * vy) < 1e-10);
    CHECK(std::abs(1 * vx + (2 - evals[k]) * vy) < 1e-10);
    CHECK(vx * vx + vy * vy == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("project_2d on collinear points zeroes the second axis") {
  std::vector<std::vector<double>> pts;
  std::vector<std::string> labels;
  for (int i = 0; i < 8; ++i) {
    pts.push_back({1.0 * i, 2.0 * i, -1.0 * i});
    labels.push_back(i % 2 ? "a" : "b");
  }
  auto out = eval::project_2d(pts, labels);
  REQUIRE(out.coords.size() == 8);
  for (const auto& c : out.coords) CHECK(std::abs(c[1]) < 1e-9);
}

TEST_CASE("project_2d orders axes by variance and is sign-deterministic") {
  Rng rng(14);
  std::vector<std::vector<double>> pts;
  std::vector<std::string> labels;
  for (int i = 0; i < 40; ++i) {
    // Anisotropic cloud: wide along one direction, narrow along another.
    const double wide = rng.normal(0.0, 3.0), narrow = rng.normal(0.0, 0.5);
    pts.push_back({wide + 0.1 * narrow, narrow, 0.2 * wide});
    labels.push_back("x");
  }
  auto out = eval::project_2d(pts, labels);
  double var1 = 0.0, var2 = 0.0;
  for (const auto& c : out.coords) {
    var1 += c[0] * c[0];
    var2 += c[1] * c[1];
  }
  CHECK(var1 >= var2);

  auto again = eval::project_2d(pts, labels);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    CHECK(out.coords[i][0] == again.coords[i][0]);
    CHECK(out.coords[i][1] == again.coords[i][1]);
  }

  std::vector<std::vector<double>> two(2, std::vector<double>{1.0, 2.0});
  CHECK_THROWS_AS(eval::project_2d(two, {"a", "b"}), Error);
}

TEST_CASE("2-D input is recovered up to rotation sign against a brute-force eigen solve") {
  Rng rng(15);
  std::vector<std::vector<double>> pts;
  std::vector<std::string> labels;
  for (int i = 0; i < 30; ++i) {
    pts.push_back({rng.normal(0.0, 2.0), rng.normal(0.0, 0.7)});
    labels.push_back("p");
  }
  auto out = eval::project_2d(pts, labels);

  // Brute-force closed-form 2x2 covariance eigen solve.
  double mx = 0, my = 0;
  for (auto& p : pts) {
    mx += p[0];
    my += p[1];
  }
  mx /= pts.size();
  my /= pts.size();
  double a = 0, b = 0, c = 0;
  for (auto& p : pts) {
    a += (p[0] - mx) * (p[0] - mx);
    b += (p[0] - mx) * (p[1] - my);
    c += (p[1] - my) * (p[1] - my);
  }
  a /= pts.size() - 1;
  b /= pts.size() - 1;
  c /= pts.size() - 1;
  const double tr = a + c, det = a * c - b * b;
  const double l1 = tr / 2 + std::sqrt(tr * tr / 4 - det);
  double vx = b, vy = l1 - a;  // eigenvector of the top eigenvalue
  const double norm = std::sqrt(vx * vx + vy * vy);
  vx /= norm;
  vy /= norm;
  if (std::abs(vx) >= std::abs(vy) ? vx < 0 : vy < 0) {
    vx = -vx;
    vy = -vy;
  }
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const double expect = (pts[i][0] - mx) * vx + (pts[i][1] - my) * vy;
    CHECK(out.coords[i][0] == doctest::Approx(expect).epsilon(1e-8));
  }
}

TEST_CASE("ablation harness trains rows from one init and tabulates") {
  eval::AblationConfig cfg;
  cfg.model = small_config();
  cfg.base.batch_size = 8;
  cfg.base.epochs = 30;
  cfg.base.seed = 16;
  cfg.base.optimizer.lr = 3e-3;
  cfg.eval_split = syndata::Split::Dev;

  cfg.rows.push_back({"tft", Method::Tft, {}});
  eval::AblationRowSpec lc;
  lc.name = "lc-logits";
  lc.method = Method::Dft;
  lc.supervision.lc_mode = StageMode::Logits;
  lc.supervision.layer_i = 1;
  cfg.rows.push_back(lc);

  eval::SweepSpec sweep;
  sweep.mode = StageMode::Logits;
  sweep.layers = {1, 2};
  cfg.sweep = sweep;

  auto ds = kv_dataset(32, 8, 17);
  auto outcome = eval::run_ablation(cfg, ds);
  REQUIRE(outcome.rows.size() == 2);
  CHECK(outcome.rows[0].name == "tft");
  CHECK_FALSE(outcome.init_hash.empty());
  REQUIRE(outcome.sweep.size() == 2);
  CHECK(outcome.sweep[0].layer == 1);
  CHECK(outcome.sweep[1].layer == 2);
  REQUIRE(outcome.mid_layer_beats_last.has_value());  // sweep includes the final layer

  // Determinism: the same grid reruns to identical tables.
  auto outcome2 = eval::run_ablation(cfg, ds);
  CHECK(outcome.table_text() == outcome2.table_text());
  CHECK(outcome.rows_jsonl() == outcome2.rows_jsonl());
  CHECK(outcome.sweep_jsonl() == outcome2.sweep_jsonl());

  // Single-row grid degenerates to evaluate on a trained model.
  eval::AblationConfig single = cfg;
  single.rows = {cfg.rows[0]};
  single.sweep.reset();
  auto one = eval::run_ablation(single, ds);
  CHECK(one.rows.size() == 1);
  CHECK(one.rows[0].report.examples == 8);
}
