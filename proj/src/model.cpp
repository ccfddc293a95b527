#include "dft/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "dft/error.hpp"
#include "dft/ops.hpp"
#include "dft/util/hash.hpp"
#include "dft/util/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace dft::model {

using ad::Tensor;

void ModelConfig::validate() const {
  if (n_layers < 1 || hidden < 1 || n_heads < 1 || vocab < 1 || max_seq_len < 1)
    fail(ErrorKind::Config, "model config counts must be >= 1");
  if (hidden % n_heads != 0) fail(ErrorKind::Config, "hidden size must be divisible by head count");
  if (vocab <= kEosToken) fail(ErrorKind::Config, "vocab must include pad and eos tokens");
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("token_emb", token_emb);
  out.emplace_back("pos_emb", pos_emb);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    const LayerParams& lp = layers[l];
    out.emplace_back(p + "attn_norm_g", lp.attn_norm_g);
    out.emplace_back(p + "wq", lp.wq);
    out.emplace_back(p + "bq", lp.bq);
    out.emplace_back(p + "wk", lp.wk);
    out.emplace_back(p + "bk", lp.bk);
    out.emplace_back(p + "wv", lp.wv);
    out.emplace_back(p + "bv", lp.bv);
    out.emplace_back(p + "wo", lp.wo);
    out.emplace_back(p + "bo", lp.bo);
    out.emplace_back(p + "ffn_norm_g", lp.ffn_norm_g);
    out.emplace_back(p + "w1", lp.w1);
    out.emplace_back(p + "b1", lp.b1);
    out.emplace_back(p + "w2", lp.w2);
    out.emplace_back(p + "b2", lp.b2);
  }
  out.emplace_back("final_norm_g", final_norm_g);
  if (!config.tie_output_head) out.emplace_back("w_out", w_out);
  return out;
}

std::size_t ModelParams::param_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : named()) n += t.numel();
  return n;
}

void ModelParams::zero_grads() const {
  for (const auto& [name, t] : named()) t.zero_grad();
}

std::uint64_t ModelParams::content_hash() const {
  Hasher h;
  for (const auto& [name, t] : named()) {
    h.update(name);
    h.update_u64(hash_doubles(t.data()));
  }
  return h.digest();
}

namespace {

Tensor normal_tensor(std::vector<int> shape, Rng& rng, double stddev) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (double& x : t.mutable_data()) x = rng.normal(0.0, stddev);
  return t;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  constexpr double kInitStd = 0.02;
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  p.init_seed = seed;
  const int d = config.hidden, f = config.ffn_hidden();
  p.token_emb = normal_tensor({config.vocab, d}, rng, kInitStd);
  p.pos_emb = normal_tensor({config.max_seq_len, d}, rng, kInitStd);
  for (int l = 0; l < config.n_layers; ++l) {
    LayerParams lp;
    lp.attn_norm_g = Tensor::full({d}, 1.0, true);
    lp.wq = normal_tensor({d, d}, rng, kInitStd);
    lp.bq = Tensor::zeros({d}, true);
    lp.wk = normal_tensor({d, d}, rng, kInitStd);
    lp.bk = Tensor::zeros({d}, true);
    lp.wv = normal_tensor({d, d}, rng, kInitStd);
    lp.bv = Tensor::zeros({d}, true);
    lp.wo = normal_tensor({d, d}, rng, kInitStd);
    lp.bo = Tensor::zeros({d}, true);
    lp.ffn_norm_g = Tensor::full({d}, 1.0, true);
    lp.w1 = normal_tensor({d, f}, rng, kInitStd);
    lp.b1 = Tensor::zeros({f}, true);
    lp.w2 = normal_tensor({f, d}, rng, kInitStd);
    lp.b2 = Tensor::zeros({d}, true);
    p.layers.push_back(std::move(lp));
  }
  p.final_norm_g = Tensor::full({d}, 1.0, true);
  if (!config.tie_output_head) p.w_out = normal_tensor({d, config.vocab}, rng, kInitStd);
  return p;
}

namespace {

Tensor head_weight(const ModelParams& p) {
  return p.config.tie_output_head ? ad::transpose(p.token_emb) : p.w_out;
}

void check_tokens(const ModelParams& p, std::span<const int> tokens) {
  if (tokens.empty()) fail(ErrorKind::Value, "forward: empty token sequence");
  if (static_cast<int>(tokens.size()) > p.config.max_seq_len)
    fail(ErrorKind::Length, "sequence of " + std::to_string(tokens.size()) + " exceeds max_seq_len " +
                                std::to_string(p.config.max_seq_len));
  for (int id : tokens)
    if (id < 0 || id >= p.config.vocab)
      fail(ErrorKind::Index,
           "token id " + std::to_string(id) + " outside vocab of " + std::to_string(p.config.vocab));
}

}  // namespace

ForwardResult forward(const ModelParams& params, std::span<const int> tokens) {
  check_tokens(params, tokens);
  const ModelConfig& cfg = params.config;
  const int T = static_cast<int>(tokens.size());
  const int dh = cfg.head_dim();
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));

  ForwardResult r;
  Tensor x = ad::add(ad::embedding_lookup(params.token_emb, tokens), ad::row_slice(params.pos_emb, 0, T));
  r.acts.h.push_back(x);

  for (int l = 0; l < cfg.n_layers; ++l) {
    const LayerParams& lp = params.layers[l];
    Tensor a_in = ad::rms_norm(x, lp.attn_norm_g);
    Tensor q = ad::add_bias(ad::matmul(a_in, lp.wq), lp.bq);
    Tensor k = ad::add_bias(ad::matmul(a_in, lp.wk), lp.bk);
    Tensor v = ad::add_bias(ad::matmul(a_in, lp.wv), lp.bv);
    std::vector<Tensor> heads;
    heads.reserve(cfg.n_heads);
    for (int h = 0; h < cfg.n_heads; ++h) {
      Tensor qh = ad::col_slice(q, h * dh, dh);
      Tensor kh = ad::col_slice(k, h * dh, dh);
      Tensor vh = ad::col_slice(v, h * dh, dh);
      Tensor scores = ad::causal_mask(ad::scale(ad::matmul(qh, ad::transpose(kh)), att_scale));
      heads.push_back(ad::matmul(ad::softmax(scores), vh));
    }
    Tensor attn = ad::add_bias(ad::matmul(ad::concat_cols(heads), lp.wo), lp.bo);
    x = ad::add(x, attn);

    Tensor m_in = ad::rms_norm(x, lp.ffn_norm_g);
    Tensor m = ad::add_bias(ad::matmul(ad::silu(ad::add_bias(ad::matmul(m_in, lp.w1), lp.b1)), lp.w2), lp.b2);
    x = ad::add(x, m);

    if (l + 1 < cfg.n_layers) r.acts.h.push_back(x);
  }

  Tensor final_state = ad::rms_norm(x, params.final_norm_g);
  r.acts.h.push_back(final_state);
  r.logits = ad::matmul(final_state, head_weight(params));
  return r;
}

ad::Tensor early_exit_logits(const LayerActivations& acts, int layer, const ModelParams& params) {
  const int L = acts.final_layer();
  if (layer < 0 || layer > L)
    fail(ErrorKind::Index, "early_exit_logits: layer " + std::to_string(layer) + " outside [0, " +
                               std::to_string(L) + "]");
  Tensor state =
      layer == L ? acts.h[layer] : ad::rms_norm(acts.h[layer], ad::detach(params.final_norm_g));
  return ad::matmul(state, ad::detach(head_weight(params)));
}

std::vector<int> greedy_decode(const ModelParams& params, std::span<const int> prompt, int max_new,
                               std::optional<int> at_layer) {
  if (prompt.empty()) fail(ErrorKind::Value, "greedy_decode: empty prompt");
  ad::NoGradGuard no_grad;
  std::vector<int> seq(prompt.begin(), prompt.end());
  for (int step = 0; step < max_new; ++step) {
    if (static_cast<int>(seq.size()) >= params.config.max_seq_len) break;
    ForwardResult r = forward(params, seq);
    Tensor logits = at_layer ? early_exit_logits(r.acts, *at_layer, params) : r.logits;
    const int V = logits.cols();
    const double* last = logits.data().data() + static_cast<long>(logits.rows() - 1) * V;
    int best = 0;
    for (int j = 1; j < V; ++j)
      if (last[j] > last[best]) best = j;
    seq.push_back(best);
    if (best == kEosToken) break;
  }
  return seq;
}

// ---------------------------------------------------------------------------
// Checkpoint I/O

namespace {

constexpr char kCkptMagic[8] = {'D', 'F', 'T', 'C', 'K', 'P', 'T', '1'};
constexpr std::uint32_t kCkptVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  buf.append(b, sizeof(T));
}

template <typename T>
T take(const std::string& buf, std::size_t& off) {
  if (off + sizeof(T) > buf.size()) fail(ErrorKind::Parse, "checkpoint truncated");
  T v;
  std::memcpy(&v, buf.data() + off, sizeof(T));
  off += sizeof(T);
  return v;
}

}  // namespace

void save_checkpoint(const ModelParams& params, const std::string& path) {
  std::string buf;
  buf.append(kCkptMagic, sizeof(kCkptMagic));
  put<std::uint32_t>(buf, kCkptVersion);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.config.n_layers));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.config.hidden));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.config.n_heads));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.config.vocab));
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.config.max_seq_len));
  put<std::uint8_t>(buf, params.config.tie_output_head ? 1 : 0);
  put<std::uint64_t>(buf, params.init_seed);
  const auto named = params.named();
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(named.size()));
  for (const auto& [name, t] : named) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(name.size()));
    buf.append(name);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.ndim()));
    for (int e : t.shape()) put<std::uint32_t>(buf, static_cast<std::uint32_t>(e));
    const char* raw = reinterpret_cast<const char*>(t.data().data());
    buf.append(raw, t.numel() * sizeof(double));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::Io, "cannot write checkpoint " + path);
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) fail(ErrorKind::Io, "short write to checkpoint " + path);
}

ModelParams load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Io, "cannot open checkpoint " + path);
  std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::size_t off = 0;
  if (buf.size() < sizeof(kCkptMagic) || std::memcmp(buf.data(), kCkptMagic, sizeof(kCkptMagic)) != 0)
    fail(ErrorKind::Parse, "not a checkpoint file: " + path);
  off = sizeof(kCkptMagic);
  const auto version = take<std::uint32_t>(buf, off);
  if (version != kCkptVersion)
    fail(ErrorKind::Parse, "checkpoint version " + std::to_string(version) + " unsupported (expected " +
                               std::to_string(kCkptVersion) + ")");
  ModelConfig cfg;
  cfg.n_layers = static_cast<int>(take<std::uint32_t>(buf, off));
  cfg.hidden = static_cast<int>(take<std::uint32_t>(buf, off));
  cfg.n_heads = static_cast<int>(take<std::uint32_t>(buf, off));
  cfg.vocab = static_cast<int>(take<std::uint32_t>(buf, off));
  cfg.max_seq_len = static_cast<int>(take<std::uint32_t>(buf, off));
  cfg.tie_output_head = take<std::uint8_t>(buf, off) != 0;
  const std::uint64_t seed = take<std::uint64_t>(buf, off);

  // Rebuild the parameter skeleton, then overwrite tensor contents by name.
  ModelParams params = init_params(cfg, seed);
  const auto named = params.named();
  const auto count = take<std::uint32_t>(buf, off);
  if (count != named.size())
    fail(ErrorKind::Parse, "checkpoint tensor count " + std::to_string(count) + " does not match config");
  for (const auto& [name, t] : named) {
    const auto name_len = take<std::uint32_t>(buf, off);
    if (off + name_len > buf.size()) fail(ErrorKind::Parse, "checkpoint truncated");
    const std::string got(buf.data() + off, name_len);
    off += name_len;
    if (got != name)
      fail(ErrorKind::Parse, "checkpoint tensor '" + got + "' does not match expected '" + name + "'");
    const auto ndim = take<std::uint32_t>(buf, off);
    std::vector<int> shape;
    for (std::uint32_t i = 0; i < ndim; ++i) shape.push_back(static_cast<int>(take<std::uint32_t>(buf, off)));
    if (shape != t.shape()) fail(ErrorKind::Parse, "checkpoint tensor '" + name + "' has unexpected shape");
    const std::size_t bytes = t.numel() * sizeof(double);
    if (off + bytes > buf.size()) fail(ErrorKind::Parse, "checkpoint truncated in tensor '" + name + "'");
    std::memcpy(const_cast<double*>(t.data().data()), buf.data() + off, bytes);
    off += bytes;
  }
  if (off != buf.size()) fail(ErrorKind::Parse, "checkpoint has trailing bytes");
  return params;
}

}  // namespace dft::model
