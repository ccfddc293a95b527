#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dft/entropy.hpp"
#include "dft/error.hpp"
#include "dft/model.hpp"
#include "dft/util/rng.hpp"

using namespace dft;

namespace {

model::ModelConfig micro_config() {
  model::ModelConfig c;
  c.n_layers = 3;
  c.hidden = 16;
  c.n_heads = 2;
  c.vocab = 32;
  c.max_seq_len = 16;
  return c;
}

std::vector<std::vector<int>> random_corpus(int count, int len, int vocab, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::vector<int>> corpus(count);
  for (auto& seq : corpus) {
    seq.resize(len);
    for (int& t : seq) t = 2 + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - 2)));
  }
  return corpus;
}

}  // namespace

TEST_CASE("uniform logits give exactly ln V at every layer") {
  auto params = model::init_params(micro_config(), 1);
  for (double& w : params.w_out.mutable_data()) w = 0.0;
  auto corpus = random_corpus(4, 8, 32, 2);
  auto prof = entropy::profile(params, corpus);
  const double lnV = std::log(32.0);
  REQUIRE(prof.per_layer.size() == 4);
  for (double e : prof.per_layer) CHECK(std::abs(e - lnV) < 1e-9);
}

TEST_CASE("freshly initialized model stays near maximum entropy everywhere") {
  auto params = model::init_params(micro_config(), 3);
  auto corpus = random_corpus(32, 10, 32, 4);
  auto prof = entropy::profile(params, corpus);
  const double lnV = std::log(32.0);
  for (double e : prof.per_layer) {
    CHECK(e > 0.9 * lnV);
    CHECK(e <= lnV + 1e-9);
  }
}

TEST_CASE("a collapsed head drives entropy to zero at every layer") {
  auto params = model::init_params(micro_config(), 5);
  // Two huge antipodal columns: whichever sign the state sum takes, one
  // column dominates the softmax.
  auto w = params.w_out.mutable_data();
  const int V = 32, d = 16;
  for (int r = 0; r < d; ++r)
    for (int c = 0; c < V; ++c) w[r * V + c] = c == 3 ? 1e8 : (c == 4 ? -1e8 : 0.0);
  auto corpus = random_corpus(4, 8, 32, 6);
  auto prof = entropy::profile(params, corpus);
  for (double e : prof.per_layer) CHECK(e < 1e-6);
}

TEST_CASE("entropy values are bounded by [0, ln V]") {
  auto params = model::init_params(micro_config(), 7);
  auto corpus = random_corpus(8, 12, 32, 8);
  auto prof = entropy::profile(params, corpus);
  const double lnV = std::log(32.0);
  for (double e : prof.per_layer) {
    CHECK(e >= -1e-9);
    CHECK(e <= lnV + 1e-9);
  }
  for (const auto& row : prof.per_layer_per_position)
    for (double e : row) {
      CHECK(e >= -1e-9);
      CHECK(e <= lnV + 1e-9);
    }
}

TEST_CASE("profile is invariant to corpus permutation, bit for bit") {
  auto params = model::init_params(micro_config(), 9);
  auto corpus = random_corpus(12, 9, 32, 10);
  auto prof = entropy::profile(params, corpus);
  std::vector<std::vector<int>> shuffled = corpus;
  Rng rng(11);
  rng.shuffle(shuffled);
  REQUIRE(shuffled != corpus);
  auto prof2 = entropy::profile(params, shuffled);
  CHECK(prof.per_layer == prof2.per_layer);
  CHECK(prof.per_layer_per_position == prof2.per_layer_per_position);
}

TEST_CASE("profile rejects an empty corpus") {
  auto params = model::init_params(micro_config(), 12);
  std::vector<std::vector<int>> empty;
  CHECK_THROWS_AS(entropy::profile(params, empty), Error);
}

TEST_CASE("drop detector reproduces the hand-traced fixture") {
  const std::vector<double> curve{5, 5, 2, 2, 2, 0.5, 0.5};
  auto drops = entropy::detect_drops(curve);
  REQUIRE(drops.size() == 2);
  CHECK(drops[0].layer == 2);
  CHECK(drops[0].magnitude == doctest::Approx(3.0).epsilon(1e-15));
  CHECK(drops[1].layer == 5);
  CHECK(drops[1].magnitude == doctest::Approx(1.5).epsilon(1e-15));
}

TEST_CASE("drop detector edge curves") {
  CHECK(entropy::detect_drops(std::vector<double>{4, 4, 4, 4, 4}).empty());       // flat
  CHECK(entropy::detect_drops(std::vector<double>{5, 4, 3, 2, 1}).empty());       // strict linear decline
  CHECK(entropy::detect_drops(std::vector<double>{1, 2, 3, 4, 5}).empty());       // increasing
  CHECK_THROWS_AS(entropy::detect_drops(std::vector<double>{1, 2}), Error);       // too few layers
}

TEST_CASE("critical-layer suggestion from the fixture curve") {
  const std::vector<double> curve{5, 5, 2, 2, 2, 0.5, 0.5};
  auto [i, j] = entropy::suggest_critical_layers(curve);
  CHECK(i == 2);
  CHECK(j == 4);
}

TEST_CASE("plateaus of length one put the onset right before the drop") {
  // Drops at 1 and 3; the plateau between them is the single layer 2.
  const std::vector<double> curve{6, 3, 3, 1, 1};
  auto [i, j] = entropy::suggest_critical_layers(curve);
  CHECK(i == 1);
  CHECK(j == 2);
}

TEST_CASE("deep two-stage shape: early conversion, reasoning until 15") {
  // 33-point curve shaped like a large decoder's account: a first drop
  // finishing at layer 2, a long plateau, a second drop starting after 15.
  std::vector<double> curve(33, 4.0);
  curve[0] = curve[1] = 8.0;
  for (int k = 16; k < 33; ++k) curve[k] = 2.0;
  auto [i, j] = entropy::suggest_critical_layers(curve);
  CHECK(i == 2);
  CHECK(j == 15);
}

TEST_CASE("suggestion refuses curves without two-drop structure") {
  const std::vector<double> one_drop{5, 5, 1, 1, 1, 1};
  try {
    entropy::suggest_critical_layers(one_drop);
    CHECK(false);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Value);
    const std::string msg = e.what();
    CHECK(msg.find("insufficient structure") != std::string::npos);
    CHECK(msg.find("profile:") != std::string::npos);  // raw profile attached
  }
}

TEST_CASE("annotate fills drops and suggestions when present") {
  entropy::EntropyProfile prof;
  prof.per_layer = {5, 5, 2, 2, 2, 0.5, 0.5};
  entropy::annotate(prof);
  CHECK(prof.drops.size() == 2);
  REQUIRE(prof.suggested_i.has_value());
  REQUIRE(prof.suggested_j.has_value());
  CHECK(*prof.suggested_i == 2);
  CHECK(*prof.suggested_j == 4);
  CHECK(*prof.suggested_i < *prof.suggested_j);

  entropy::EntropyProfile flat;
  flat.per_layer = {3, 3, 3, 3};
  entropy::annotate(flat);
  CHECK(flat.drops.empty());
  CHECK_FALSE(flat.suggested_i.has_value());

  const std::string text = entropy::profile_as_text(prof);
  CHECK(text.find("suggested i=2 j=4") != std::string::npos);
  const std::string none_text = entropy::profile_as_text(flat);
  CHECK(none_text.find("insufficient structure") != std::string::npos);
}

TEST_CASE("heatmap export covers layers by positions") {
  auto params = model::init_params(micro_config(), 13);
  auto corpus = random_corpus(3, 6, 32, 14);
  auto prof = entropy::profile(params, corpus);
  const std::string csv = entropy::heatmap_as_csv(prof);
  CHECK(csv.find("layer,pos0,pos1") != std::string::npos);
  // One header plus L+1 rows.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 4);
}
