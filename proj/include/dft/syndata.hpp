#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dft/supervision.hpp"

namespace dft::syndata {

// Vocabulary layout shared by every task: ids 0/1 are pad/eos, 2 is the
// query terminator, 3..12 the ten digits. Everything above is content.
constexpr int kSepToken = 2;
constexpr int kDigitBase = 3;  // digit d is token kDigitBase + d
constexpr int kReservedTokens = 13;

/// A synthetic language: a permutation of content-token ids. Reserved
/// tokens map to themselves; content tokens never do (the permutation is a
/// single cycle), so parallel sequences differ at every content position.
struct LanguageMap {
  std::string name;
  std::vector<int> map;  // size vocab; map[id] = image of id

  int apply(int id) const;
  std::vector<int> apply(std::span<const int> ids) const;
  LanguageMap inverse() const;
};

LanguageMap identity_language(int vocab);
LanguageMap make_language(std::uint64_t seed, int vocab, std::string name = "");

enum class TaskKind { Copy, Reverse, KeyValueRecall, ModularAdd };

const char* to_string(TaskKind kind) noexcept;
TaskKind task_from_string(const std::string& s);

struct TaskSpec {
  TaskKind kind = TaskKind::KeyValueRecall;
  int vocab = 256;
  // Payload size range: content tokens for copy/reverse, key-value pairs
  // for recall. Ignored by modular-add (fixed 2-digit queries).
  int payload_min = 2;
  int payload_max = 4;
  int max_total_len = 64;  // query + answer budget, markers included
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Split { Train, Dev, Test };
const char* to_string(Split s) noexcept;

struct SplitSizes {
  int train = 0;
  int dev = 0;
  int test = 0;
  int total() const { return train + dev + test; }
};

struct Dataset {
  struct Entry {
    supervision::ParallelExample example;
    Split split = Split::Train;
  };
  TaskKind task = TaskKind::KeyValueRecall;
  int vocab = 0;
  std::string language;
  std::vector<Entry> entries;

  std::vector<const supervision::ParallelExample*> split_view(Split s) const;
  int count(Split s) const;
};

/// Deterministic generation: example k is drawn from an rng seeded by
/// (spec.seed, k); split assignment hashes only the English content so the
/// same underlying example can never land in two splits.
Dataset generate(const TaskSpec& spec, const LanguageMap& language, const SplitSizes& sizes);

// Line-delimited file: one meta line, then one example per line with the
// four token arrays and a split tag. Order-preserving; parse failures name
// the line.
void write_dataset(const Dataset& ds, const std::string& path);
Dataset read_dataset(const std::string& path);

}  // namespace dft::syndata
