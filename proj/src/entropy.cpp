#include "dft/entropy.hpp"

#include <algorithm>
#include <cmath>

#include "dft/error.hpp"
#include "dft/kernels.hpp"
#include "dft/ops.hpp"
#include "dft/util/io.hpp"

namespace dft::entropy {

namespace {

double row_entropy(const double* p, int n) {
  double h = 0.0;
  for (int j = 0; j < n; ++j)
    if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
  return h;
}

struct SeqContribution {
  std::vector<int> tokens;             // sort key
  std::vector<std::vector<double>> entropies;  // [L+1][T]
};

}  // namespace

EntropyProfile profile(const model::ModelParams& params, std::span<const std::vector<int>> corpus) {
  if (corpus.empty()) fail(ErrorKind::Value, "entropy profile: empty corpus");
  ad::NoGradGuard no_grad;
  const int L = params.config.n_layers;
  const int V = params.config.vocab;

  std::vector<SeqContribution> contributions;
  contributions.reserve(corpus.size());
  for (const std::vector<int>& seq : corpus) {
    model::ForwardResult r = model::forward(params, seq);
    const int T = static_cast<int>(seq.size());
    SeqContribution c;
    c.tokens = seq;
    c.entropies.resize(L + 1);
    std::vector<double> probs(static_cast<std::size_t>(T) * V);
    for (int k = 0; k <= L; ++k) {
      ad::Tensor logits = model::early_exit_logits(r.acts, k, params);
      kernels::softmax_rows(logits.data().data(), probs.data(), T, V);
      c.entropies[k].resize(T);
      for (int t = 0; t < T; ++t) c.entropies[k][t] = row_entropy(probs.data() + static_cast<long>(t) * V, V);
    }
    contributions.push_back(std::move(c));
  }

  // Reduce in content order, not corpus order, so a permuted corpus yields
  // a bit-identical profile.
  std::sort(contributions.begin(), contributions.end(),
            [](const SeqContribution& a, const SeqContribution& b) { return a.tokens < b.tokens; });

  EntropyProfile out;
  out.per_layer.assign(L + 1, 0.0);
  std::size_t max_pos = 0;
  for (const SeqContribution& c : contributions) max_pos = std::max(max_pos, c.entropies[0].size());
  out.per_layer_per_position.assign(L + 1, std::vector<double>(max_pos, 0.0));
  out.position_counts.assign(max_pos, 0);

  long total_positions = 0;
  for (const SeqContribution& c : contributions) {
    total_positions += static_cast<long>(c.entropies[0].size());
    for (std::size_t t = 0; t < c.entropies[0].size(); ++t) ++out.position_counts[t];
  }
  for (int k = 0; k <= L; ++k) {
    double sum = 0.0;
    for (const SeqContribution& c : contributions) {
      for (std::size_t t = 0; t < c.entropies[k].size(); ++t) {
        sum += c.entropies[k][t];
        out.per_layer_per_position[k][t] += c.entropies[k][t];
      }
    }
    out.per_layer[k] = sum / static_cast<double>(total_positions);
    for (std::size_t t = 0; t < max_pos; ++t)
      if (out.position_counts[t] > 0) out.per_layer_per_position[k][t] /= out.position_counts[t];
  }
  return out;
}

std::vector<Drop> detect_drops(std::span<const double> per_layer, int window, double min_drop_fraction) {
  const int n = static_cast<int>(per_layer.size());
  if (n < 3) fail(ErrorKind::Value, "detect_drops: need at least 3 layers, got " + std::to_string(n));
  if (window < 1 || window >= n) fail(ErrorKind::Contract, "detect_drops: invalid window");

  double lo = per_layer[0], hi = per_layer[0];
  for (double e : per_layer) {
    lo = std::min(lo, e);
    hi = std::max(hi, e);
  }
  const double threshold = min_drop_fraction * (hi - lo);

  // mag[k] = e[k-window] - e[k], defined for k in [window, n).
  std::vector<double> mag(n, 0.0);
  for (int k = window; k < n; ++k) mag[k] = per_layer[k - window] - per_layer[k];

  std::vector<Drop> drops;
  for (int k = window; k < n; ++k) {
    const bool left_ok = k == window || mag[k] > mag[k - 1];
    const bool right_ok = k == n - 1 || mag[k] > mag[k + 1];
    if (left_ok && right_ok && mag[k] > threshold) drops.push_back({k, mag[k]});
  }
  std::stable_sort(drops.begin(), drops.end(),
                   [](const Drop& a, const Drop& b) { return a.magnitude > b.magnitude; });
  return drops;
}

std::pair<int, int> suggest_critical_layers(std::span<const double> per_layer, int window,
                                            double min_drop_fraction) {
  const std::vector<Drop> drops = detect_drops(per_layer, window, min_drop_fraction);
  auto render = [&per_layer]() {
    std::string s = "profile:";
    for (double e : per_layer) s += " " + strprintf("%.4f", e);
    return s;
  };
  if (drops.size() < 2)
    fail(ErrorKind::Value, "insufficient structure: found " + std::to_string(drops.size()) +
                               " entropy drop(s), need 2; " + render());
  Drop first = drops[0], second = drops[1];
  if (second.layer < first.layer) std::swap(first, second);
  const int i = first.layer;
  const int j = second.layer - window;  // last plateau layer before the second drop begins
  if (i >= j)
    fail(ErrorKind::Value, "insufficient structure: drops at layers " + std::to_string(first.layer) +
                               " and " + std::to_string(second.layer) + " leave no plateau between stages; " +
                               render());
  return {i, j};
}

void annotate(EntropyProfile& profile, int window, double min_drop_fraction) {
  profile.drops = detect_drops(profile.per_layer, window, min_drop_fraction);
  profile.suggested_i.reset();
  profile.suggested_j.reset();
  if (profile.drops.size() >= 2) {
    try {
      auto [i, j] = suggest_critical_layers(profile.per_layer, window, min_drop_fraction);
      profile.suggested_i = i;
      profile.suggested_j = j;
    } catch (const Error&) {
      // Structure too weak for a suggestion; the profile itself stands.
    }
  }
}

std::string profile_as_text(const EntropyProfile& profile) {
  std::string out = "layer mean_entropy drop_magnitude\n";
  for (std::size_t k = 0; k < profile.per_layer.size(); ++k) {
    double mag = 0.0;
    for (const Drop& d : profile.drops)
      if (d.layer == static_cast<int>(k)) mag = d.magnitude;
    out += strprintf("%zu %.12f %.12f\n", k, profile.per_layer[k], mag);
  }
  if (profile.suggested_i && profile.suggested_j)
    out += strprintf("suggested i=%d j=%d\n", *profile.suggested_i, *profile.suggested_j);
  else
    out += "suggested none (insufficient structure)\n";
  return out;
}

std::string heatmap_as_csv(const EntropyProfile& profile) {
  std::string out = "layer";
  for (std::size_t t = 0; t < profile.position_counts.size(); ++t)
    out += strprintf(",pos%zu", t);
  out += "\n";
  for (std::size_t k = 0; k < profile.per_layer_per_position.size(); ++k) {
    out += strprintf("%zu", k);
    for (double v : profile.per_layer_per_position[k]) out += strprintf(",%.12f", v);
    out += "\n";
  }
  return out;
}

}  // namespace dft::entropy
