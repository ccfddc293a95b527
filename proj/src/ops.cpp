#include "dft/ops.hpp"

#include <cmath>
#include <string>

#include "dft/error.hpp"
#include "dft/kernels.hpp"

namespace dft::ad {

namespace {

std::string shape_str(const std::vector<int>& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

bool wants_grad(const Tensor& t) { return grad_enabled() && t.requires_grad(); }

/// Builds an op node when gradients are live, a plain constant otherwise.
Tensor make_op(std::vector<int> shape, std::vector<double> data, std::vector<Tensor> parents,
               const char* name, std::function<void(Node&)> backward) {
  bool rg = false;
  for (const Tensor& p : parents) rg = rg || wants_grad(p);
  if (!rg) return Tensor::from(std::move(shape), std::move(data), false);
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = true;
  n->op = name;
  n->parents.reserve(parents.size());
  for (Tensor& p : parents) n->parents.push_back(p.handle());
  n->backward = std::move(backward);
  return Tensor(std::move(n));
}

void expect_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    fail(ErrorKind::Shape,
         std::string(op) + ": operand shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
             " differ");
}

void expect_2d(const Tensor& t, const char* op) {
  if (t.ndim() != 2) fail(ErrorKind::Shape, std::string(op) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "add");
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] + b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, "add", [](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_buffer(pa);
      for (std::size_t i = 0; i < o.numel(); ++i) g[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_buffer(pb);
      for (std::size_t i = 0; i < o.numel(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "sub");
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] - b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, "sub", [](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_buffer(pa);
      for (std::size_t i = 0; i < o.numel(); ++i) g[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_buffer(pb);
      for (std::size_t i = 0; i < o.numel(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  expect_same_shape(a, b, "mul");
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] * b.data()[i];
  return make_op(a.shape(), std::move(out), {a, b}, "mul", [](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_buffer(pa);
      for (std::size_t i = 0; i < o.numel(); ++i) g[i] += o.grad[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_buffer(pb);
      for (std::size_t i = 0; i < o.numel(); ++i) g[i] += o.grad[i] * pa.data[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  const std::size_t n = a.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = a.data()[i] * s;
  return make_op(a.shape(), std::move(out), {a}, "scale", [s](Node& o) {
    Node& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    auto& g = grad_buffer(pa);
    for (std::size_t i = 0; i < o.numel(); ++i) g[i] += o.grad[i] * s;
  });
}

Tensor add_bias(const Tensor& m, const Tensor& bias) {
  expect_2d(m, "add_bias");
  if (bias.ndim() != 1 || bias.shape()[0] != m.cols())
    fail(ErrorKind::Shape, "add_bias: bias " + shape_str(bias.shape()) + " does not match trailing dim of " +
                               shape_str(m.shape()));
  const int r = m.rows(), c = m.cols();
  std::vector<double> out(m.numel());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[i * c + j] = m.data()[i * c + j] + bias.data()[j];
  return make_op(m.shape(), std::move(out), {m, bias}, "add_bias", [r, c](Node& o) {
    Node& pm = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pm.requires_grad) {
      auto& g = grad_buffer(pm);
      for (std::size_t i = 0; i < o.numel(); ++i) g[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_buffer(pb);
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) g[j] += o.grad[i * c + j];
    }
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return make_op({1}, {acc}, {a}, "sum", [](Node& o) {
    Node& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    auto& g = grad_buffer(pa);
    const double go = o.grad[0];
    for (double& gi : g) gi += go;
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  expect_2d(a, "matmul");
  expect_2d(b, "matmul");
  if (a.cols() != b.rows())
    fail(ErrorKind::Shape,
         "matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(static_cast<std::size_t>(m) * n);
  kernels::matmul_nn(a.data().data(), b.data().data(), out.data(), m, k, n, false);
  return make_op({m, n}, std::move(out), {a, b}, "matmul", [m, k, n](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_buffer(pa);
      // dA[m,k] += dC[m,n] * B[k,n]^T
      kernels::matmul_nt(o.grad.data(), pb.data.data(), g.data(), m, n, k, true);
    }
    if (pb.requires_grad) {
      auto& g = grad_buffer(pb);
      // dB[k,n] += A[m,k]^T * dC[m,n]
      kernels::matmul_tn(pa.data.data(), o.grad.data(), g.data(), k, m, n, true);
    }
  });
}

Tensor transpose(const Tensor& a) {
  expect_2d(a, "transpose");
  const int r = a.rows(), c = a.cols();
  std::vector<double> out(a.numel());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(j) * r + i] = a.data()[i * c + j];
  return make_op({c, r}, std::move(out), {a}, "transpose", [r, c](Node& o) {
    Node& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    auto& g = grad_buffer(pa);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) g[i * c + j] += o.grad[static_cast<std::size_t>(j) * r + i];
  });
}

Tensor softmax(const Tensor& x, int axis) {
  const int nd = x.ndim();
  if (!(axis == -1 || axis == nd - 1))
    fail(ErrorKind::Contract, "softmax: only the last axis is supported");
  const int cols = x.shape()[nd - 1];
  const int rows = static_cast<int>(x.numel()) / cols;
  std::vector<double> out(x.numel());
  kernels::softmax_rows(x.data().data(), out.data(), rows, cols);
  return make_op(x.shape(), std::move(out), {x}, "softmax", [rows, cols](Node& o) {
    Node& pa = *o.parents[0];
    if (!pa.requires_grad) return;
    auto& g = grad_buffer(pa);
    for (int i = 0; i < rows; ++i) {
      const double* y = o.data.data() + static_cast<long>(i) * cols;
      const double* gy = o.grad.data() + static_cast<long>(i) * cols;
      double dot = 0.0;
      for (int j = 0; j < cols; ++j) dot += gy[j] * y[j];
      double* gx = g.data() + static_cast<long>(i) * cols;
      for (int j = 0; j < cols; ++j) gx[j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets, const std::vector<bool>& mask) {
  expect_2d(logits, "cross_entropy");
  const int rows = logits.rows(), vocab = logits.cols();
  if (static_cast<int>(targets.size()) != rows || static_cast<int>(mask.size()) != rows)
    fail(ErrorKind::Shape, "cross_entropy: targets/mask length must equal logit rows");
  int count = 0;
  for (int t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    ++count;
    if (targets[t] < 0 || targets[t] >= vocab)
      fail(ErrorKind::Index,
           "cross_entropy: target id " + std::to_string(targets[t]) + " outside vocab of " +
               std::to_string(vocab));
  }
  if (count == 0) fail(ErrorKind::Value, "cross_entropy: empty supervision mask");

  // Probabilities are kept for the backward rule.
  std::vector<double> probs(logits.numel());
  kernels::softmax_rows(logits.data().data(), probs.data(), rows, vocab);
  double loss = 0.0;
  for (int t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    const double* x = logits.data().data() + static_cast<long>(t) * vocab;
    double mx = x[0];
    for (int j = 1; j < vocab; ++j)
      if (x[j] > mx) mx = x[j];
    double se = 0.0;
    for (int j = 0; j < vocab; ++j) se += std::exp(x[j] - mx);
    loss += mx + std::log(se) - x[targets[t]];
  }
  loss /= count;

  std::vector<int> tgt(targets.begin(), targets.end());
  std::vector<bool> msk = mask;
  return make_op({1}, {loss}, {logits}, "cross_entropy",
                 [rows, vocab, count, probs = std::move(probs), tgt = std::move(tgt),
                  msk = std::move(msk)](Node& o) {
                   Node& pl = *o.parents[0];
                   if (!pl.requires_grad) return;
                   auto& g = grad_buffer(pl);
                   const double go = o.grad[0] / count;
                   for (int t = 0; t < rows; ++t) {
                     if (!msk[t]) continue;
                     const double* p = probs.data() + static_cast<long>(t) * vocab;
                     double* gx = g.data() + static_cast<long>(t) * vocab;
                     for (int j = 0; j < vocab; ++j) gx[j] += go * p[j];
                     gx[tgt[t]] -= go;
                   }
                 });
}

Tensor cosine_loss(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 1 || b.ndim() != 1) fail(ErrorKind::Shape, "cosine_loss: expects 1-D vectors");
  expect_same_shape(a, b, "cosine_loss");
  const std::size_t n = a.numel();
  double dot = 0.0, qa = 0.0, qb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    dot += a.data()[i] * b.data()[i];
    qa += a.data()[i] * a.data()[i];
    qb += b.data()[i] * b.data()[i];
  }
  if (qa == 0.0 || qb == 0.0) fail(ErrorKind::Value, "cosine_loss: degenerate zero-norm vector");
  // Single sqrt of the product: identical operands give exactly cos == 1.
  const double denom = std::sqrt(qa * qb);
  const double loss = 1.0 - dot / denom;
  return make_op({1}, {loss}, {a, b}, "cosine_loss", [n, dot, qa, qb, denom](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    const double go = o.grad[0];
    if (pa.requires_grad) {
      auto& g = grad_buffer(pa);
      const double s = dot / (qa * denom);
      for (std::size_t i = 0; i < n; ++i) g[i] += go * (s * pa.data[i] - pb.data[i] / denom);
    }
    if (pb.requires_grad) {
      auto& g = grad_buffer(pb);
      const double s = dot / (qb * denom);
      for (std::size_t i = 0; i < n; ++i) g[i] += go * (s * pb.data[i] - pa.data[i] / denom);
    }
  });
}

Tensor mean_pool(const Tensor& h, const std::vector<bool>& mask) {
  expect_2d(h, "mean_pool");
  const int rows = h.rows(), cols = h.cols();
  if (static_cast<int>(mask.size()) != rows)
    fail(ErrorKind::Shape, "mean_pool: mask length must equal rows");
  int count = 0;
  for (bool m : mask) count += m ? 1 : 0;
  if (count == 0) fail(ErrorKind::Value, "mean_pool: empty selection");
  std::vector<double> out(cols, 0.0);
  for (int t = 0; t < rows; ++t) {
    if (!mask[t]) continue;
    for (int j = 0; j < cols; ++j) out[j] += h.data()[t * cols + j];
  }
  for (int j = 0; j < cols; ++j) out[j] /= count;
  std::vector<bool> msk = mask;
  return make_op({cols}, std::move(out), {h}, "mean_pool",
                 [rows, cols, count, msk = std::move(msk)](Node& o) {
                   Node& ph = *o.parents[0];
                   if (!ph.requires_grad) return;
                   auto& g = grad_buffer(ph);
                   for (int t = 0; t < rows; ++t) {
                     if (!msk[t]) continue;
                     for (int j = 0; j < cols; ++j) g[t * cols + j] += o.grad[j] / count;
                   }
                 });
}

Tensor rms_norm(const Tensor& x, const Tensor& gain, double eps) {
  expect_2d(x, "rms_norm");
  if (gain.ndim() != 1 || gain.shape()[0] != x.cols())
    fail(ErrorKind::Shape, "rms_norm: gain " + shape_str(gain.shape()) + " does not match trailing dim of " +
                               shape_str(x.shape()));
  const int rows = x.rows(), cols = x.cols();
  std::vector<double> out(x.numel());
  std::vector<double> inv_rms(rows);
  kernels::rmsnorm_rows(x.data().data(), gain.data().data(), out.data(), inv_rms.data(), rows, cols, eps);
  return make_op(x.shape(), std::move(out), {x, gain}, "rms_norm",
                 [rows, cols, inv_rms = std::move(inv_rms)](Node& o) {
                   Node& px = *o.parents[0];
                   Node& pg = *o.parents[1];
                   if (px.requires_grad) {
                     auto& g = grad_buffer(px);
                     for (int t = 0; t < rows; ++t) {
                       const double inv = inv_rms[t];
                       const double* xr = px.data.data() + static_cast<long>(t) * cols;
                       const double* gy = o.grad.data() + static_cast<long>(t) * cols;
                       double dot = 0.0;  // sum_j gy_j * gain_j * u_j with u = x * inv
                       for (int j = 0; j < cols; ++j) dot += gy[j] * pg.data[j] * xr[j] * inv;
                       double* gx = g.data() + static_cast<long>(t) * cols;
                       for (int j = 0; j < cols; ++j)
                         gx[j] += inv * (gy[j] * pg.data[j] - xr[j] * inv * dot / cols);
                     }
                   }
                   if (pg.requires_grad) {
                     auto& g = grad_buffer(pg);
                     for (int t = 0; t < rows; ++t) {
                       const double inv = inv_rms[t];
                       const double* xr = px.data.data() + static_cast<long>(t) * cols;
                       const double* gy = o.grad.data() + static_cast<long>(t) * cols;
                       for (int j = 0; j < cols; ++j) g[j] += gy[j] * xr[j] * inv;
                     }
                   }
                 });
}

Tensor embedding_lookup(const Tensor& table, std::span<const int> ids) {
  expect_2d(table, "embedding_lookup");
  const int vocab = table.rows(), dim = table.cols();
  const int rows = static_cast<int>(ids.size());
  if (rows == 0) fail(ErrorKind::Value, "embedding_lookup: empty id sequence");
  std::vector<double> out(static_cast<std::size_t>(rows) * dim);
  for (int t = 0; t < rows; ++t) {
    if (ids[t] < 0 || ids[t] >= vocab)
      fail(ErrorKind::Index,
           "embedding_lookup: id " + std::to_string(ids[t]) + " outside table of " + std::to_string(vocab));
    const double* src = table.data().data() + static_cast<long>(ids[t]) * dim;
    std::copy(src, src + dim, out.begin() + static_cast<long>(t) * dim);
  }
  std::vector<int> idv(ids.begin(), ids.end());
  return make_op({rows, dim}, std::move(out), {table}, "embedding_lookup",
                 [rows, dim, idv = std::move(idv)](Node& o) {
                   Node& pt = *o.parents[0];
                   if (!pt.requires_grad) return;
                   auto& g = grad_buffer(pt);
                   for (int t = 0; t < rows; ++t) {
                     double* dst = g.data() + static_cast<long>(idv[t]) * dim;
                     const double* src = o.grad.data() + static_cast<long>(t) * dim;
                     for (int j = 0; j < dim; ++j) dst[j] += src[j];
                   }
                 });
}

Tensor row_slice(const Tensor& x, int start, int len) {
  expect_2d(x, "row_slice");
  if (start < 0 || len <= 0 || start + len > x.rows())
    fail(ErrorKind::Index, "row_slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                               ") outside " + shape_str(x.shape()));
  const int cols = x.cols();
  std::vector<double> out(static_cast<std::size_t>(len) * cols);
  std::copy(x.data().begin() + static_cast<long>(start) * cols,
            x.data().begin() + static_cast<long>(start + len) * cols, out.begin());
  return make_op({len, cols}, std::move(out), {x}, "row_slice", [start, len, cols](Node& o) {
    Node& px = *o.parents[0];
    if (!px.requires_grad) return;
    auto& g = grad_buffer(px);
    for (int t = 0; t < len; ++t)
      for (int j = 0; j < cols; ++j) g[(start + t) * cols + j] += o.grad[t * cols + j];
  });
}

Tensor col_slice(const Tensor& x, int start, int len) {
  expect_2d(x, "col_slice");
  if (start < 0 || len <= 0 || start + len > x.cols())
    fail(ErrorKind::Index, "col_slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                               ") outside " + shape_str(x.shape()));
  const int rows = x.rows(), cols = x.cols();
  std::vector<double> out(static_cast<std::size_t>(rows) * len);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < len; ++j) out[i * len + j] = x.data()[i * cols + start + j];
  return make_op({rows, len}, std::move(out), {x}, "col_slice", [rows, cols, start, len](Node& o) {
    Node& px = *o.parents[0];
    if (!px.requires_grad) return;
    auto& g = grad_buffer(px);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < len; ++j) g[i * cols + start + j] += o.grad[i * len + j];
  });
}

Tensor concat_rows(const Tensor& a, const Tensor& b) {
  expect_2d(a, "concat_rows");
  expect_2d(b, "concat_rows");
  if (a.cols() != b.cols())
    fail(ErrorKind::Shape,
         "concat_rows: column counts differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  const int ra = a.rows(), rb = b.rows(), cols = a.cols();
  std::vector<double> out;
  out.reserve(a.numel() + b.numel());
  out.insert(out.end(), a.data().begin(), a.data().end());
  out.insert(out.end(), b.data().begin(), b.data().end());
  return make_op({ra + rb, cols}, std::move(out), {a, b}, "concat_rows", [ra, rb, cols](Node& o) {
    Node& pa = *o.parents[0];
    Node& pb = *o.parents[1];
    if (pa.requires_grad) {
      auto& g = grad_buffer(pa);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (pb.requires_grad) {
      auto& g = grad_buffer(pb);
      const std::size_t off = static_cast<std::size_t>(ra) * cols;
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[off + i];
    }
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) fail(ErrorKind::Contract, "concat_cols: no inputs");
  const int rows = parts[0].rows();
  int total = 0;
  for (const Tensor& p : parts) {
    expect_2d(p, "concat_cols");
    if (p.rows() != rows) fail(ErrorKind::Shape, "concat_cols: row counts differ");
    total += p.cols();
  }
  std::vector<double> out(static_cast<std::size_t>(rows) * total);
  std::vector<int> widths;
  int off = 0;
  for (const Tensor& p : parts) {
    const int c = p.cols();
    widths.push_back(c);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < c; ++j) out[static_cast<std::size_t>(i) * total + off + j] = p.data()[i * c + j];
    off += c;
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_op({rows, total}, std::move(out), std::move(parents), "concat_cols",
                 [rows, total, widths = std::move(widths)](Node& o) {
                   int off2 = 0;
                   for (std::size_t p = 0; p < o.parents.size(); ++p) {
                     Node& pp = *o.parents[p];
                     const int c = widths[p];
                     if (pp.requires_grad) {
                       auto& g = grad_buffer(pp);
                       for (int i = 0; i < rows; ++i)
                         for (int j = 0; j < c; ++j)
                           g[i * c + j] += o.grad[static_cast<std::size_t>(i) * total + off2 + j];
                     }
                     off2 += c;
                   }
                 });
}

Tensor causal_mask(const Tensor& scores) {
  expect_2d(scores, "causal_mask");
  if (scores.rows() != scores.cols())
    fail(ErrorKind::Shape, "causal_mask: expects square scores, got " + shape_str(scores.shape()));
  const int n = scores.rows();
  constexpr double kNegInf = -1e30;
  std::vector<double> out(scores.numel());
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) out[i * n + j] = j <= i ? scores.data()[i * n + j] : kNegInf;
  return make_op(scores.shape(), std::move(out), {scores}, "causal_mask", [n](Node& o) {
    Node& ps = *o.parents[0];
    if (!ps.requires_grad) return;
    auto& g = grad_buffer(ps);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) g[i * n + j] += o.grad[i * n + j];
  });
}

Tensor silu(const Tensor& x) {
  const std::size_t n = x.numel();
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = 1.0 / (1.0 + std::exp(-x.data()[i]));
    out[i] = x.data()[i] * s;
  }
  return make_op(x.shape(), std::move(out), {x}, "silu", [n](Node& o) {
    Node& px = *o.parents[0];
    if (!px.requires_grad) return;
    auto& g = grad_buffer(px);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = 1.0 / (1.0 + std::exp(-px.data[i]));
      g[i] += o.grad[i] * s * (1.0 + px.data[i] * (1.0 - s));
    }
  });
}

Tensor detach(const Tensor& x) {
  if (!grad_enabled() || !x.requires_grad()) return x;
  std::vector<double> copy(x.data().begin(), x.data().end());
  return Tensor::from(x.shape(), std::move(copy), false);
}

}  // namespace dft::ad
