#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dft/model.hpp"

namespace dft::entropy {

struct Drop {
  int layer = 0;
  double magnitude = 0.0;
};

/// Mean Shannon entropy (nats) of the logit-lens distribution per layer,
/// averaged over every position of every corpus sequence. Values live in
/// [0, ln V]. The per-position matrix backs the heatmap export.
struct EntropyProfile {
  std::vector<double> per_layer;                        // L+1 entries
  std::vector<std::vector<double>> per_layer_per_position;  // [L+1][max_pos] means
  std::vector<int> position_counts;                     // sequences covering each position
  std::vector<Drop> drops;                              // sorted by magnitude, descending
  std::optional<int> suggested_i;
  std::optional<int> suggested_j;
};

EntropyProfile profile(const model::ModelParams& params, std::span<const std::vector<int>> corpus);

/// Drop at layer k is e[k-window] - e[k]; reported when it is a strict
/// local maximum of that difference and exceeds min_drop_fraction of the
/// curve's dynamic range. Sorted by magnitude, largest first.
std::vector<Drop> detect_drops(std::span<const double> per_layer, int window = 1,
                               double min_drop_fraction = 0.1);

/// From the two largest drops, in depth order: i is the layer where the
/// first completes; j is the last plateau layer before the second begins
/// (its layer minus the window). Throws Error(Value) with the profile
/// rendered into the message when the curve lacks that structure.
std::pair<int, int> suggest_critical_layers(std::span<const double> per_layer, int window = 1,
                                            double min_drop_fraction = 0.1);

/// Fills drops and, when the structure is there, the suggested layers.
void annotate(EntropyProfile& profile, int window = 1, double min_drop_fraction = 0.1);

/// One record per layer: "layer mean_entropy drop_magnitude".
std::string profile_as_text(const EntropyProfile& profile);
/// CSV heatmap, layers as rows and positions as columns.
std::string heatmap_as_csv(const EntropyProfile& profile);

}  // namespace dft::entropy
