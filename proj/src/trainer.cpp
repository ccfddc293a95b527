#include "dft/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "dft/error.hpp"
#include "dft/util/io.hpp"
#include "dft/util/rng.hpp"

namespace dft::trainer {

using json = nlohmann::ordered_json;
using model::ModelParams;

const char* to_string(Method m) noexcept {
  switch (m) {
    case Method::Sft: return "sft";
    case Method::Tft: return "tft";
    case Method::Dft: return "dft";
  }
  return "tft";
}

Method method_from_string(const std::string& s) {
  if (s == "sft") return Method::Sft;
  if (s == "tft") return Method::Tft;
  if (s == "dft") return Method::Dft;
  fail(ErrorKind::Config, "unknown method '" + s + "'");
}

void TrainConfig::validate(const model::ModelConfig& model_config) const {
  if (batch_size < 1 || epochs < 1) fail(ErrorKind::Config, "batch_size and epochs must be >= 1");
  if (optimizer.lr <= 0.0) fail(ErrorKind::Config, "learning rate must be positive");
  if (grad_clip && *grad_clip <= 0.0) fail(ErrorKind::Config, "grad clip must be positive");
  supervision.validate(model_config.n_layers);
  if (method == Method::Dft && !supervision.any_active())
    fail(ErrorKind::Config, "method dft requires at least one active supervision stage");
  if (method != Method::Dft && supervision.any_active())
    fail(ErrorKind::Config, "supervision stages require method dft");
}

std::string TrainMetrics::as_jsonl() const {
  std::string out;
  for (const StepRecord& r : steps) {
    json j = {{"step", r.step},   {"l_tft", r.l_tft},         {"l_lc", r.l_lc},
              {"l_et", r.l_et},   {"total", r.total},         {"grad_norm", r.grad_norm}};
    out += j.dump();
    out += "\n";
  }
  return out;
}

AdamState make_adam_state(const ModelParams& params) {
  AdamState s;
  for (const auto& [name, t] : params.named()) {
    s.m.emplace_back(t.numel(), 0.0);
    s.v.emplace_back(t.numel(), 0.0);
  }
  return s;
}

namespace {

bool finite(double x) { return std::isfinite(x); }

double global_grad_norm(const ModelParams& params) {
  double ss = 0.0;
  for (const auto& [name, t] : params.named()) {
    if (!t.has_grad()) continue;
    for (double g : t.grad()) ss += g * g;
  }
  return std::sqrt(ss);
}

void scale_grads(const ModelParams& params, double factor) {
  for (const auto& [name, t] : params.named()) {
    if (!t.has_grad()) continue;
    for (double& g : t.grad_buffer()) g *= factor;
  }
}

}  // namespace

void adam_step(ModelParams& params, AdamState& state, const OptimizerConfig& opt) {
  auto named = params.named();
  if (state.m.size() != named.size()) fail(ErrorKind::Contract, "adam state does not match parameters");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(state.t));
  for (std::size_t p = 0; p < named.size(); ++p) {
    auto& t = named[p].second;
    auto data = t.mutable_data();
    std::vector<double>& m = state.m[p];
    std::vector<double>& v = state.v[p];
    const bool has_grad = t.has_grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = has_grad ? t.grad()[i] : 0.0;
      if (!finite(g)) fail(ErrorKind::Value, "non-finite gradient in " + named[p].first);
      m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g;
      v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      data[i] -= opt.lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
  }
}

double clip_grad_norm(const ModelParams& params, double limit) {
  if (limit <= 0.0) fail(ErrorKind::Contract, "clip limit must be positive");
  const double norm = global_grad_norm(params);
  if (norm > limit) scale_grads(params, limit / norm);
  return norm;
}

void sgd_step(ModelParams& params, const OptimizerConfig& opt) {
  auto named = params.named();
  for (auto& [name, t] : named) {
    if (!t.has_grad()) continue;
    auto data = t.mutable_data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = t.grad()[i];
      if (!finite(g)) fail(ErrorKind::Value, "non-finite gradient in " + name);
      data[i] -= opt.lr * g;
    }
  }
}

// ---------------------------------------------------------------------------
// Optimizer state container

namespace {

constexpr char kOptMagic[8] = {'D', 'F', 'T', 'O', 'P', 'T', '0', '1'};

template <typename T>
void put(std::string& buf, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.append(b, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) fail(ErrorKind::Parse, "optimizer state truncated");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

void put_vec(std::string& buf, const std::vector<double>& v) {
  put<std::uint64_t>(buf, v.size());
  buf.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

std::vector<double> take_vec(const std::string& buf, std::size_t& off) {
  const auto n = take<std::uint64_t>(buf, off);
  if (off + n * sizeof(double) > buf.size()) fail(ErrorKind::Parse, "optimizer state truncated");
  std::vector<double> v(n);
  std::memcpy(v.data(), buf.data() + off, n * sizeof(double));
  off += n * sizeof(double);
  return v;
}

}  // namespace

void save_optimizer_state(const AdamState& state, const std::string& path) {
  std::string buf;
  buf.append(kOptMagic, sizeof(kOptMagic));
  put<std::uint32_t>(buf, 1);  // version
  put<std::int64_t>(buf, state.t);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(state.m.size()));
  for (std::size_t p = 0; p < state.m.size(); ++p) {
    put_vec(buf, state.m[p]);
    put_vec(buf, state.v[p]);
  }
  write_file(path, buf);
}

AdamState load_optimizer_state(const std::string& path, const ModelParams& params) {
  const std::string buf = read_file(path);
  std::size_t off = 0;
  if (buf.size() < sizeof(kOptMagic) || std::memcmp(buf.data(), kOptMagic, sizeof(kOptMagic)) != 0)
    fail(ErrorKind::Parse, "not an optimizer state file: " + path);
  off = sizeof(kOptMagic);
  const auto version = take<std::uint32_t>(buf, off);
  if (version != 1) fail(ErrorKind::Parse, "optimizer state version " + std::to_string(version) + " unsupported");
  AdamState s;
  s.t = take<std::int64_t>(buf, off);
  const auto count = take<std::uint32_t>(buf, off);
  const auto named = params.named();
  if (count != named.size()) fail(ErrorKind::Parse, "optimizer state does not match parameter count");
  for (std::uint32_t p = 0; p < count; ++p) {
    s.m.push_back(take_vec(buf, off));
    s.v.push_back(take_vec(buf, off));
    if (s.m.back().size() != named[p].second.numel() || s.v.back().size() != named[p].second.numel())
      fail(ErrorKind::Parse, "optimizer state tensor size mismatch at " + named[p].first);
  }
  if (off != buf.size()) fail(ErrorKind::Parse, "optimizer state has trailing bytes");
  return s;
}

// ---------------------------------------------------------------------------
// Training loop

namespace {

supervision::LossGraph example_loss(const TrainConfig& config, const ModelParams& params,
                                    const supervision::ParallelExample& ex) {
  using supervision::LossGraph;
  switch (config.method) {
    case Method::Sft: {
      LossGraph g;
      g.total = supervision::next_token_loss(params, ex.x_en, ex.y_en);
      g.values.l_tft = g.total.value();
      g.values.total = g.values.l_tft;
      return g;
    }
    case Method::Tft: {
      static const supervision::SupervisionSpec kNone{};
      return supervision::loss_total(params, ex, kNone);
    }
    case Method::Dft:
      return supervision::loss_total(params, ex, config.supervision);
  }
  fail(ErrorKind::Contract, "unreachable method");
}

// Stateless per-epoch permutation: resuming at step k only needs k itself,
// no carried RNG state.
std::vector<int> epoch_order(std::uint64_t seed, int epoch, int n) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng epoch_rng(Rng::mix(seed, 0x65706f6368ULL + static_cast<std::uint64_t>(epoch)));
  epoch_rng.shuffle(order);
  return order;
}

}  // namespace

int planned_steps(const TrainConfig& config, int train_count) {
  const int per_epoch = (train_count + config.batch_size - 1) / config.batch_size;
  return config.epochs * per_epoch;
}

TrainResult train(const TrainConfig& config, const syndata::Dataset& dataset, ModelParams& params,
                  AdamState* adam_state, int start_step) {
  const auto train_view = dataset.split_view(syndata::Split::Train);
  const int n = static_cast<int>(train_view.size());
  if (n == 0) fail(ErrorKind::Value, "train: dataset has no training examples");
  config.supervision.validate(params.config.n_layers);

  AdamState local_state;
  AdamState* state = adam_state;
  if (config.optimizer.kind == OptKind::Adam && state == nullptr) {
    local_state = make_adam_state(params);
    state = &local_state;
  }

  const int steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const int total_steps = config.epochs * steps_per_epoch;
  if (start_step < 0 || start_step > total_steps) fail(ErrorKind::Contract, "invalid resume step");

  TrainResult result;
  result.steps_run = start_step;

  const bool checkpointing = !config.out_dir.empty();
  auto checkpoint_path = [&config](int step) {
    return config.out_dir + "/step" + std::to_string(step) + ".ckpt";
  };

  for (int step = start_step; step < total_steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    const int epoch = step / steps_per_epoch;
    const int batch_index = step % steps_per_epoch;
    const std::vector<int> order = epoch_order(config.seed, epoch, n);
    const int lo = batch_index * config.batch_size;
    const int hi = std::min(n, lo + config.batch_size);

    params.zero_grads();
    double sum_tft = 0.0, sum_lc = 0.0, sum_et = 0.0, sum_total = 0.0;
    for (int b = lo; b < hi; ++b) {
      const supervision::ParallelExample& ex = *train_view[order[b]];
      supervision::LossGraph g = example_loss(config, params, ex);
      if (!std::isfinite(g.values.total)) {
        result.status = TrainStatus::Diverged;
        result.steps_run = step;
        return result;  // params still hold the last completed step
      }
      ad::backward(g.total);
      sum_tft += g.values.l_tft;
      sum_lc += g.values.l_lc;
      sum_et += g.values.l_et;
      sum_total += g.values.total;
    }
    const int batch_n = hi - lo;
    scale_grads(params, 1.0 / batch_n);

    const double norm =
        config.grad_clip ? clip_grad_norm(params, *config.grad_clip) : global_grad_norm(params);
    if (!std::isfinite(norm)) {
      result.status = TrainStatus::Diverged;
      result.steps_run = step;
      return result;
    }

    if (config.optimizer.kind == OptKind::Adam)
      adam_step(params, *state, config.optimizer);
    else
      sgd_step(params, config.optimizer);

    StepRecord rec;
    rec.step = step + 1;
    rec.l_tft = sum_tft / batch_n;
    rec.l_lc = sum_lc / batch_n;
    rec.l_et = sum_et / batch_n;
    rec.total = sum_total / batch_n;
    rec.grad_norm = norm;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.metrics.steps.push_back(rec);
    result.steps_run = step + 1;

    if (checkpointing && config.checkpoint_every > 0 && (step + 1) % config.checkpoint_every == 0 &&
        step + 1 < total_steps) {
      model::save_checkpoint(params, checkpoint_path(step + 1));
      if (config.optimizer.kind == OptKind::Adam)
        save_optimizer_state(*state, checkpoint_path(step + 1) + ".opt");
    }
  }

  if (checkpointing) {
    model::save_checkpoint(params, config.out_dir + "/final.ckpt");
    if (config.optimizer.kind == OptKind::Adam)
      save_optimizer_state(*state, config.out_dir + "/final.ckpt.opt");
  }
  return result;
}

TrainConfig parse_train_config_json(const std::string& json_text, model::ModelConfig* model_out,
                                    std::string* data_path_out) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("config: ") + e.what());
  }
  try {
    TrainConfig c;
    if (model_out) {
      const json& m = j.at("model");
      model_out->n_layers = m.at("n_layers").get<int>();
      model_out->hidden = m.at("hidden").get<int>();
      model_out->n_heads = m.at("n_heads").get<int>();
      model_out->vocab = m.at("vocab").get<int>();
      model_out->max_seq_len = m.at("max_seq_len").get<int>();
      model_out->tie_output_head = m.value("tie_output_head", false);
    }
    if (data_path_out) *data_path_out = j.at("data").at("path").get<std::string>();
    c.method = method_from_string(j.at("method").get<std::string>());
    if (j.contains("supervision")) {
      const json& s = j["supervision"];
      c.supervision.lc_mode = supervision::stage_mode_from_string(s.value("lc_mode", "none"));
      c.supervision.et_mode = supervision::stage_mode_from_string(s.value("et_mode", "none"));
      c.supervision.layer_i = s.value("layer_i", -1);
      c.supervision.layer_j = s.value("layer_j", -1);
      c.supervision.weight_lc = s.value("weight_lc", 1.0);
      c.supervision.weight_et = s.value("weight_et", 1.0);
    }
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      const std::string kind = o.value("kind", "adam");
      if (kind == "adam")
        c.optimizer.kind = OptKind::Adam;
      else if (kind == "sgd")
        c.optimizer.kind = OptKind::Sgd;
      else
        fail(ErrorKind::Config, "unknown optimizer '" + kind + "'");
      c.optimizer.lr = o.value("lr", 1e-3);
      c.optimizer.beta1 = o.value("beta1", 0.9);
      c.optimizer.beta2 = o.value("beta2", 0.999);
      c.optimizer.eps = o.value("eps", 1e-8);
    }
    const json& t = j.at("train");
    c.batch_size = t.value("batch_size", 32);
    c.epochs = t.value("epochs", 1);
    c.seed = t.value("seed", std::uint64_t{0});
    if (t.contains("grad_clip") && !t["grad_clip"].is_null()) c.grad_clip = t["grad_clip"].get<double>();
    c.checkpoint_every = t.value("checkpoint_every", 0);
    return c;
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, std::string("config: ") + e.what());
  }
}

}  // namespace dft::trainer
