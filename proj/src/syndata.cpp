#include "dft/syndata.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dft/error.hpp"
#include "dft/util/hash.hpp"
#include "dft/util/rng.hpp"

namespace dft::syndata {

using json = nlohmann::ordered_json;
using supervision::ParallelExample;

int LanguageMap::apply(int id) const {
  if (id < 0 || id >= static_cast<int>(map.size()))
    fail(ErrorKind::Index, "language map: id " + std::to_string(id) + " outside vocab");
  return map[id];
}

std::vector<int> LanguageMap::apply(std::span<const int> ids) const {
  std::vector<int> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(apply(id));
  return out;
}

LanguageMap LanguageMap::inverse() const {
  LanguageMap inv;
  inv.name = name + "-inverse";
  inv.map.assign(map.size(), 0);
  for (std::size_t i = 0; i < map.size(); ++i) inv.map[map[i]] = static_cast<int>(i);
  return inv;
}

LanguageMap identity_language(int vocab) {
  LanguageMap m;
  m.name = "en";
  m.map.resize(vocab);
  std::iota(m.map.begin(), m.map.end(), 0);
  return m;
}

LanguageMap make_language(std::uint64_t seed, int vocab, std::string name) {
  if (vocab <= kReservedTokens + 1)
    fail(ErrorKind::Config, "vocab of " + std::to_string(vocab) + " leaves no room for content tokens");
  LanguageMap m = identity_language(vocab);
  m.name = name.empty() ? "tgt-" + std::to_string(seed) : std::move(name);
  // Single-cycle permutation of the content range only; reserved ids stay
  // fixed and no content token maps to itself.
  std::vector<int> content(vocab - kReservedTokens);
  std::iota(content.begin(), content.end(), kReservedTokens);
  Rng rng(Rng::mix(seed, 0x6c616e67));
  rng.cyclic_shuffle(content);
  for (int i = kReservedTokens; i < vocab; ++i) m.map[i] = content[i - kReservedTokens];
  return m;
}

const char* to_string(TaskKind kind) noexcept {
  switch (kind) {
    case TaskKind::Copy: return "copy";
    case TaskKind::Reverse: return "reverse";
    case TaskKind::KeyValueRecall: return "kv";
    case TaskKind::ModularAdd: return "modadd";
  }
  return "kv";
}

TaskKind task_from_string(const std::string& s) {
  if (s == "copy") return TaskKind::Copy;
  if (s == "reverse") return TaskKind::Reverse;
  if (s == "kv") return TaskKind::KeyValueRecall;
  if (s == "modadd") return TaskKind::ModularAdd;
  fail(ErrorKind::Config, "unknown task '" + s + "'");
}

const char* to_string(Split s) noexcept {
  switch (s) {
    case Split::Train: return "train";
    case Split::Dev: return "dev";
    case Split::Test: return "test";
  }
  return "train";
}

void TaskSpec::validate() const {
  if (vocab <= kReservedTokens + 1) fail(ErrorKind::Config, "vocab too small for content tokens");
  if (payload_min < 1 || payload_max < payload_min) fail(ErrorKind::Config, "invalid payload range");
  // Worst-case lengths with markers (sep, eos).
  int qmax = 0, amax = 0;
  switch (kind) {
    case TaskKind::Copy:
    case TaskKind::Reverse:
      qmax = payload_max + 1;
      amax = payload_max + 1;
      break;
    case TaskKind::KeyValueRecall:
      qmax = 2 * payload_max + 2;
      amax = 2;
      break;
    case TaskKind::ModularAdd:
      qmax = 3;
      amax = 2;
      break;
  }
  if (qmax + amax > max_total_len)
    fail(ErrorKind::Config, "payload range exceeds the max_total_len budget of " +
                                std::to_string(max_total_len));
}

std::vector<const ParallelExample*> Dataset::split_view(Split s) const {
  std::vector<const ParallelExample*> out;
  for (const Entry& e : entries)
    if (e.split == s) out.push_back(&e.example);
  return out;
}

int Dataset::count(Split s) const {
  int n = 0;
  for (const Entry& e : entries) n += e.split == s ? 1 : 0;
  return n;
}

namespace {

int rand_content(Rng& rng, int vocab) {
  return kReservedTokens + static_cast<int>(rng.below(static_cast<std::uint64_t>(vocab - kReservedTokens)));
}

/// English-analog (x_en, y_en) pair for one task instance.
void sample_pair(const TaskSpec& spec, Rng& rng, std::vector<int>& x, std::vector<int>& y) {
  x.clear();
  y.clear();
  switch (spec.kind) {
    case TaskKind::Copy:
    case TaskKind::Reverse: {
      const int p = static_cast<int>(rng.range(spec.payload_min, spec.payload_max));
      std::vector<int> payload;
      for (int i = 0; i < p; ++i) payload.push_back(rand_content(rng, spec.vocab));
      x = payload;
      x.push_back(kSepToken);
      y = payload;
      if (spec.kind == TaskKind::Reverse) std::reverse(y.begin(), y.end());
      y.push_back(model::kEosToken);
      break;
    }
    case TaskKind::KeyValueRecall: {
      const int pairs = static_cast<int>(rng.range(spec.payload_min, spec.payload_max));
      std::vector<int> keys;
      while (static_cast<int>(keys.size()) < pairs) {
        const int k = rand_content(rng, spec.vocab);
        if (std::find(keys.begin(), keys.end(), k) == keys.end()) keys.push_back(k);
      }
      std::vector<int> values;
      for (int i = 0; i < pairs; ++i) values.push_back(rand_content(rng, spec.vocab));
      for (int i = 0; i < pairs; ++i) {
        x.push_back(keys[i]);
        x.push_back(values[i]);
      }
      const int probe = static_cast<int>(rng.below(static_cast<std::uint64_t>(pairs)));
      x.push_back(keys[probe]);
      x.push_back(kSepToken);
      y = {values[probe], model::kEosToken};
      break;
    }
    case TaskKind::ModularAdd: {
      const int a = static_cast<int>(rng.below(10));
      const int b = static_cast<int>(rng.below(10));
      x = {kDigitBase + a, kDigitBase + b, kSepToken};
      y = {kDigitBase + (a + b) % 10, model::kEosToken};
      break;
    }
  }
}

Split split_for_content(std::span<const int> x_en, std::span<const int> y_en, const SplitSizes& sizes) {
  Hasher h;
  h.update(x_en);
  h.update_u64(0x73706c6974);  // segment separator
  h.update(y_en);
  const double frac = static_cast<double>(h.digest() >> 11) * 0x1.0p-53;
  const double total = sizes.total();
  const double t_train = sizes.train / total;
  const double t_dev = (sizes.train + sizes.dev) / total;
  if (frac < t_train) return Split::Train;
  if (frac < t_dev) return Split::Dev;
  return Split::Test;
}

}  // namespace

Dataset generate(const TaskSpec& spec, const LanguageMap& language, const SplitSizes& sizes) {
  spec.validate();
  if (static_cast<int>(language.map.size()) != spec.vocab)
    fail(ErrorKind::Config, "language map vocab does not match task vocab");
  if (sizes.total() <= 0) fail(ErrorKind::Config, "requested dataset is empty");

  Dataset ds;
  ds.task = spec.kind;
  ds.vocab = spec.vocab;
  ds.language = language.name;

  int need_train = sizes.train, need_dev = sizes.dev, need_test = sizes.test;
  const long cap = 256L * sizes.total() + 4096;
  std::vector<int> x_en, y_en;
  for (long idx = 0; idx < cap && (need_train > 0 || need_dev > 0 || need_test > 0); ++idx) {
    Rng rng(Rng::mix(spec.seed, static_cast<std::uint64_t>(idx)));
    sample_pair(spec, rng, x_en, y_en);
    const Split s = split_for_content(x_en, y_en, sizes);
    int* need = s == Split::Train ? &need_train : s == Split::Dev ? &need_dev : &need_test;
    if (*need <= 0) continue;
    --*need;
    Dataset::Entry e;
    e.split = s;
    e.example.x_en = x_en;
    e.example.y_en = y_en;
    e.example.x_tgt = language.apply(x_en);
    e.example.y_tgt = language.apply(y_en);
    e.example.validate(spec.vocab);
    ds.entries.push_back(std::move(e));
  }
  if (need_train > 0 || need_dev > 0 || need_test > 0)
    fail(ErrorKind::Value, "could not fill all splits; task space too small for the requested sizes");
  return ds;
}

void write_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write dataset " + path);
  json meta;
  meta["meta"] = {{"version", 1},
                  {"task", to_string(ds.task)},
                  {"vocab", ds.vocab},
                  {"language", ds.language},
                  {"train", ds.count(Split::Train)},
                  {"dev", ds.count(Split::Dev)},
                  {"test", ds.count(Split::Test)}};
  out << meta.dump() << "\n";
  for (const Dataset::Entry& e : ds.entries) {
    json line = {{"split", to_string(e.split)},
                 {"x_tgt", e.example.x_tgt},
                 {"x_en", e.example.x_en},
                 {"y_tgt", e.example.y_tgt},
                 {"y_en", e.example.y_en}};
    out << line.dump() << "\n";
  }
  if (!out) fail(ErrorKind::Io, "short write to dataset " + path);
}

namespace {

Split split_from_string(const std::string& s, long line_no) {
  if (s == "train") return Split::Train;
  if (s == "dev") return Split::Dev;
  if (s == "test") return Split::Test;
  fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": unknown split '" + s + "'");
}

}  // namespace

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open dataset " + path);
  Dataset ds;
  std::string line;
  long line_no = 0;
  bool have_meta = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_meta) {
        if (!j.contains("meta")) fail(ErrorKind::Parse, "line 1: missing meta record");
        const json& m = j["meta"];
        ds.task = task_from_string(m.at("task").get<std::string>());
        ds.vocab = m.at("vocab").get<int>();
        ds.language = m.at("language").get<std::string>();
        have_meta = true;
        continue;
      }
      Dataset::Entry e;
      e.split = split_from_string(j.at("split").get<std::string>(), line_no);
      e.example.x_tgt = j.at("x_tgt").get<std::vector<int>>();
      e.example.x_en = j.at("x_en").get<std::vector<int>>();
      e.example.y_tgt = j.at("y_tgt").get<std::vector<int>>();
      e.example.y_en = j.at("y_en").get<std::vector<int>>();
      e.example.validate(ds.vocab);
      ds.entries.push_back(std::move(e));
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_meta) fail(ErrorKind::Parse, "line 1: dataset file is empty");
  return ds;
}

}  // namespace dft::syndata
