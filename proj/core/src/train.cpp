#include "vti/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <string>
#include <thread>

#include "vti/detail/gemm.hpp"
#include "vti/errors.hpp"
#include "vti/rng.hpp"

namespace vti {

namespace {

using detail::gemm;
using detail::gemm_acc;
using detail::gemm_acc_at;
using detail::gemm_acc_bt;

constexpr double kLnEps = 1e-5;

template <class S>
S gelu(S x) {
  return S(0.5) * x * (S(1) + std::erf(x * S(0.70710678118654752440)));
}

template <class S>
S gelu_grad(S x) {
  const S phi = std::exp(S(-0.5) * x * x) * S(1.0 / std::sqrt(2.0 * std::numbers::pi));
  const S Phi = S(0.5) * (S(1) + std::erf(x * S(0.70710678118654752440)));
  return Phi + x * phi;
}

template <class S>
void ln_forward(const S* x, S* out, std::size_t n, std::size_t d, const S* g, const S* b) {
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = x + i * d;
    S* orow = out + i * d;
    S mean = S(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (std::size_t j = 0; j < d; ++j) {
      const S c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + S(kLnEps));
    for (std::size_t j = 0; j < d; ++j) orow[j] = (row[j] - mean) * inv * g[j] + b[j];
  }
}

// dy -> dx for layer norm; accumulates gain/bias grads.
template <class S>
void ln_backward(const S* x, const S* dy, S* dx, std::size_t n, std::size_t d, const S* g,
                 S* dg, S* db, std::vector<S>& xhat_buf, std::vector<S>& dxh_buf) {
  if (xhat_buf.size() < d) xhat_buf.resize(d);
  if (dxh_buf.size() < d) dxh_buf.resize(d);
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = x + i * d;
    const S* dyr = dy + i * d;
    S* dxr = dx + i * d;
    S mean = S(0);
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<S>(d);
    S var = S(0);
    for (std::size_t j = 0; j < d; ++j) {
      const S c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<S>(d);
    const S inv = S(1) / std::sqrt(var + S(kLnEps));
    S m1 = S(0), m2 = S(0);
    for (std::size_t j = 0; j < d; ++j) {
      xhat_buf[j] = (row[j] - mean) * inv;
      dg[j] += dyr[j] * xhat_buf[j];
      db[j] += dyr[j];
      dxh_buf[j] = dyr[j] * g[j];
      m1 += dxh_buf[j];
      m2 += dxh_buf[j] * xhat_buf[j];
    }
    m1 /= static_cast<S>(d);
    m2 /= static_cast<S>(d);
    for (std::size_t j = 0; j < d; ++j) {
      dxr[j] += inv * (dxh_buf[j] - m1 - xhat_buf[j] * m2);
    }
  }
}

template <class S>
void add_bias(S* x, const S* b, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    S* row = x + i * d;
    for (std::size_t j = 0; j < d; ++j) row[j] += b[j];
  }
}

template <class S>
void bias_grad(const S* dy, S* db, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    const S* row = dy + i * d;
    for (std::size_t j = 0; j < d; ++j) db[j] += row[j];
  }
}

struct BlockIdx {
  int ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
};

struct NetIdx {
  int patch_w, patch_b, enc_pos, proj_w, proj_b, tok, dec_pos, lnf_g, lnf_b, head_w, head_b;
  std::vector<BlockIdx> enc, dec;
};

NetIdx resolve_indices(const ParamLayout& layout, const ModelConfig& c) {
  auto idx = [&](const std::string& name) {
    const int i = layout.index_of(name);
    if (i < 0) throw ValueError("missing parameter entry: " + name);
    return i;
  };
  NetIdx n;
  n.patch_w = idx("enc.patch.w");
  n.patch_b = idx("enc.patch.b");
  n.enc_pos = idx("enc.pos");
  n.proj_w = idx("proj.w");
  n.proj_b = idx("proj.b");
  n.tok = idx("dec.tok");
  n.dec_pos = idx("dec.pos");
  n.lnf_g = idx("dec.ln_f.g");
  n.lnf_b = idx("dec.ln_f.b");
  n.head_w = idx("head.w");
  n.head_b = idx("head.b");
  auto block = [&](const std::string& p) {
    BlockIdx b;
    b.ln1_g = idx(p + ".ln1.g");
    b.ln1_b = idx(p + ".ln1.b");
    b.wq = idx(p + ".attn.wq");
    b.bq = idx(p + ".attn.bq");
    b.wk = idx(p + ".attn.wk");
    b.bk = idx(p + ".attn.bk");
    b.wv = idx(p + ".attn.wv");
    b.bv = idx(p + ".attn.bv");
    b.wo = idx(p + ".attn.wo");
    b.bo = idx(p + ".attn.bo");
    b.ln2_g = idx(p + ".ln2.g");
    b.ln2_b = idx(p + ".ln2.b");
    b.w1 = idx(p + ".mlp.w1");
    b.b1 = idx(p + ".mlp.b1");
    b.w2 = idx(p + ".mlp.w2");
    b.b2 = idx(p + ".mlp.b2");
    return b;
  };
  for (int l = 0; l < c.enc_layers; ++l) n.enc.push_back(block("enc." + std::to_string(l)));
  for (int l = 0; l < c.dec_layers; ++l) n.dec.push_back(block("dec." + std::to_string(l)));
  return n;
}

template <class S>
struct LayerCache {
  std::vector<S> x_in, a, q, k, v, probs, ctx, x1, b, m1, g;
  void resize(std::size_t n, std::size_t d, std::size_t heads, std::size_t hidden) {
    x_in.resize(n * d);
    a.resize(n * d);
    q.resize(n * d);
    k.resize(n * d);
    v.resize(n * d);
    probs.resize(heads * n * n);
    ctx.resize(n * d);
    x1.resize(n * d);
    b.resize(n * d);
    m1.resize(n * hidden);
    g.resize(n * hidden);
  }
};

template <class S>
struct Workspace {
  std::vector<LayerCache<S>> enc, dec;
  std::vector<S> patches, x_enc, v_emb, x_dec, hf, logits, probs_out;
  std::vector<S> d_x, d_a, d_q, d_k, d_v, d_ctx, d_m1, d_hidden, xhat, dxh;
};

template <class S>
struct Net {
  const ModelConfig* c;
  const ParamLayout* layout;
  NetIdx idx;
  const S* w;

  const S* at(int entry) const { return w + layout->entries[entry].offset; }
};

template <class S>
void layer_forward(const Net<S>& net, const BlockIdx& bi, LayerCache<S>& cache, S* x,
                   std::size_t n, std::size_t d, std::size_t heads, std::size_t hidden,
                   bool causal) {
  const std::size_t hd = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(hd));
  cache.resize(n, d, heads, hidden);
  std::memcpy(cache.x_in.data(), x, n * d * sizeof(S));

  ln_forward(x, cache.a.data(), n, d, net.at(bi.ln1_g), net.at(bi.ln1_b));
  gemm(cache.a.data(), net.at(bi.wq), cache.q.data(), n, d, d);
  add_bias(cache.q.data(), net.at(bi.bq), n, d);
  gemm(cache.a.data(), net.at(bi.wk), cache.k.data(), n, d, d);
  add_bias(cache.k.data(), net.at(bi.bk), n, d);
  gemm(cache.a.data(), net.at(bi.wv), cache.v.data(), n, d, d);
  add_bias(cache.v.data(), net.at(bi.bv), n, d);

  std::fill(cache.ctx.begin(), cache.ctx.end(), S(0));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    S* probs = cache.probs.data() + h * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t valid = causal ? i + 1 : n;
      const S* qi = cache.q.data() + i * d + off;
      S* prow = probs + i * n;
      S mx = -std::numeric_limits<S>::infinity();
      for (std::size_t j = 0; j < valid; ++j) {
        const S* kj = cache.k.data() + j * d + off;
        S s = S(0);
        for (std::size_t cI = 0; cI < hd; ++cI) s += qi[cI] * kj[cI];
        prow[j] = s * scale;
        mx = std::max(mx, prow[j]);
      }
      S denom = S(0);
      for (std::size_t j = 0; j < valid; ++j) {
        prow[j] = std::exp(prow[j] - mx);
        denom += prow[j];
      }
      const S inv = S(1) / denom;
      S* ci = cache.ctx.data() + i * d + off;
      for (std::size_t j = 0; j < valid; ++j) {
        prow[j] *= inv;
        const S* vj = cache.v.data() + j * d + off;
        for (std::size_t cI = 0; cI < hd; ++cI) ci[cI] += prow[j] * vj[cI];
      }
      for (std::size_t j = valid; j < n; ++j) prow[j] = S(0);
    }
  }

  // x1 = x + ctx Wo + bo
  std::memcpy(cache.x1.data(), x, n * d * sizeof(S));
  gemm_acc(cache.ctx.data(), net.at(bi.wo), cache.x1.data(), n, d, d);
  add_bias(cache.x1.data(), net.at(bi.bo), n, d);

  ln_forward(cache.x1.data(), cache.b.data(), n, d, net.at(bi.ln2_g), net.at(bi.ln2_b));
  gemm(cache.b.data(), net.at(bi.w1), cache.m1.data(), n, d, hidden);
  add_bias(cache.m1.data(), net.at(bi.b1), n, hidden);
  for (std::size_t i = 0; i < n * hidden; ++i) cache.g[i] = gelu(cache.m1[i]);

  std::memcpy(x, cache.x1.data(), n * d * sizeof(S));
  gemm_acc(cache.g.data(), net.at(bi.w2), x, n, hidden, d);
  add_bias(x, net.at(bi.b2), n, d);
}

template <class S>
void layer_backward(const Net<S>& net, const BlockIdx& bi, const LayerCache<S>& cache, S* grads,
                    S* dx, std::size_t n, std::size_t d, std::size_t heads, std::size_t hidden,
                    bool causal, Workspace<S>& ws) {
  const std::size_t hd = d / heads;
  const S scale = S(1) / std::sqrt(static_cast<S>(hd));
  auto g_at = [&](int entry) { return grads + net.layout->entries[entry].offset; };

  // dx arrives as dL/d(layer output). MLP branch first.
  ws.d_hidden.assign(n * hidden, S(0));
  gemm_acc_bt(dx, net.at(bi.w2), ws.d_hidden.data(), n, d, hidden);  // d_g = dx W2^T
  gemm_acc_at(cache.g.data(), dx, g_at(bi.w2), n, hidden, d);        // dW2 += g^T dx
  bias_grad(dx, g_at(bi.b2), n, d);
  for (std::size_t i = 0; i < n * hidden; ++i) {
    ws.d_hidden[i] *= gelu_grad(cache.m1[i]);  // d_m1
  }
  ws.d_a.assign(n * d, S(0));
  gemm_acc_bt(ws.d_hidden.data(), net.at(bi.w1), ws.d_a.data(), n, hidden, d);  // d_b
  gemm_acc_at(cache.b.data(), ws.d_hidden.data(), g_at(bi.w1), n, d, hidden);
  bias_grad(ws.d_hidden.data(), g_at(bi.b1), n, hidden);
  // d_x1 = dx (residual) + LN2 backward of d_b
  ln_backward(cache.x1.data(), ws.d_a.data(), dx, n, d, net.at(bi.ln2_g), g_at(bi.ln2_g),
              g_at(bi.ln2_b), ws.xhat, ws.dxh);

  // Attention branch: dx now holds d_x1.
  ws.d_ctx.assign(n * d, S(0));
  gemm_acc_bt(dx, net.at(bi.wo), ws.d_ctx.data(), n, d, d);  // d_ctx = d_x1 Wo^T
  gemm_acc_at(cache.ctx.data(), dx, g_at(bi.wo), n, d, d);
  bias_grad(dx, g_at(bi.bo), n, d);

  ws.d_q.assign(n * d, S(0));
  ws.d_k.assign(n * d, S(0));
  ws.d_v.assign(n * d, S(0));
  std::vector<S>& dp = ws.d_m1;  // reuse, sized n below
  dp.resize(n);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    const S* probs = cache.probs.data() + h * n * n;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t valid = causal ? i + 1 : n;
      const S* prow = probs + i * n;
      const S* dci = ws.d_ctx.data() + i * d + off;
      // d_p and softmax backward
      S dot = S(0);
      for (std::size_t j = 0; j < valid; ++j) {
        const S* vj = cache.v.data() + j * d + off;
        S acc = S(0);
        for (std::size_t cI = 0; cI < hd; ++cI) acc += dci[cI] * vj[cI];
        dp[j] = acc;
        dot += acc * prow[j];
      }
      for (std::size_t j = 0; j < valid; ++j) {
        const S ds = prow[j] * (dp[j] - dot) * scale;
        const S* kj = cache.k.data() + j * d + off;
        const S* qi = cache.q.data() + i * d + off;
        S* dqi = ws.d_q.data() + i * d + off;
        S* dkj = ws.d_k.data() + j * d + off;
        for (std::size_t cI = 0; cI < hd; ++cI) {
          dqi[cI] += ds * kj[cI];
          dkj[cI] += ds * qi[cI];
        }
        S* dvj = ws.d_v.data() + j * d + off;
        for (std::size_t cI = 0; cI < hd; ++cI) dvj[cI] += prow[j] * dci[cI];
      }
    }
  }

  ws.d_a.assign(n * d, S(0));
  gemm_acc_bt(ws.d_q.data(), net.at(bi.wq), ws.d_a.data(), n, d, d);
  gemm_acc_bt(ws.d_k.data(), net.at(bi.wk), ws.d_a.data(), n, d, d);
  gemm_acc_bt(ws.d_v.data(), net.at(bi.wv), ws.d_a.data(), n, d, d);
  gemm_acc_at(cache.a.data(), ws.d_q.data(), g_at(bi.wq), n, d, d);
  gemm_acc_at(cache.a.data(), ws.d_k.data(), g_at(bi.wk), n, d, d);
  gemm_acc_at(cache.a.data(), ws.d_v.data(), g_at(bi.wv), n, d, d);
  bias_grad(ws.d_q.data(), g_at(bi.bq), n, d);
  bias_grad(ws.d_k.data(), g_at(bi.bk), n, d);
  bias_grad(ws.d_v.data(), g_at(bi.bv), n, d);

  // d_x = d_x1 (residual, already in dx) + LN1 backward of d_a
  ln_backward(cache.x_in.data(), ws.d_a.data(), dx, n, d, net.at(bi.ln1_g), g_at(bi.ln1_g),
              g_at(bi.ln1_b), ws.xhat, ws.dxh);
}

/// Forward + optional backward for one example. Returns mean next-token
/// cross-entropy over its predicted positions; grads (same flat layout as
/// weights) are accumulated when non-null.
template <class S>
double example_loss(const Net<S>& net, const TrainingExample& ex, S* grads, Workspace<S>& ws) {
  const ModelConfig& c = *net.c;
  const auto T = static_cast<std::size_t>(c.vision_tokens());
  const auto Dv = static_cast<std::size_t>(c.enc_dim);
  const auto Dd = static_cast<std::size_t>(c.dec_dim);
  const auto P = static_cast<std::size_t>(c.patch_size);
  const std::size_t px = static_cast<std::size_t>(c.image_w) / P;
  const auto pdim = static_cast<std::size_t>(c.patch_dim());
  const std::size_t S_text = ex.tokens.size();
  if (S_text < 2) throw ValueError("training example needs at least 2 tokens");
  if (T + S_text > static_cast<std::size_t>(c.max_seq)) {
    throw SequenceLengthError("training example exceeds max sequence");
  }
  for (int id : ex.tokens) {
    if (id < 0 || id >= c.vocab_size) throw ValueError("training token id out of range");
  }
  const std::size_t N = T + S_text;
  const std::size_t enc_hidden = Dv * static_cast<std::size_t>(c.enc_mlp_ratio);
  const std::size_t dec_hidden = Dd * static_cast<std::size_t>(c.dec_mlp_ratio);

  ws.enc.resize(c.enc_layers);
  ws.dec.resize(c.dec_layers);

  // Patchify.
  ws.patches.resize(T * pdim);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t pr = t / px, pc = t % px;
    S* dst = ws.patches.data() + t * pdim;
    std::size_t k = 0;
    for (std::size_t y = 0; y < P; ++y) {
      for (std::size_t x = 0; x < P; ++x) {
        for (std::size_t ch = 0; ch < Image::kChannels; ++ch) {
          dst[k++] = static_cast<S>(ex.image.at(pr * P + y, pc * P + x, ch));
        }
      }
    }
  }

  ws.x_enc.resize(T * Dv);
  gemm(ws.patches.data(), net.at(net.idx.patch_w), ws.x_enc.data(), T, pdim, Dv);
  add_bias(ws.x_enc.data(), net.at(net.idx.patch_b), T, Dv);
  {
    const S* pos = net.at(net.idx.enc_pos);
    for (std::size_t i = 0; i < T * Dv; ++i) ws.x_enc[i] += pos[i];
  }
  for (int l = 0; l < c.enc_layers; ++l) {
    layer_forward(net, net.idx.enc[l], ws.enc[l], ws.x_enc.data(), T, Dv, c.enc_heads, enc_hidden,
                  /*causal=*/false);
  }

  ws.v_emb.resize(T * Dd);
  gemm(ws.x_enc.data(), net.at(net.idx.proj_w), ws.v_emb.data(), T, Dv, Dd);
  add_bias(ws.v_emb.data(), net.at(net.idx.proj_b), T, Dd);

  ws.x_dec.resize(N * Dd);
  {
    const S* pos = net.at(net.idx.dec_pos);
    const S* tokw = net.at(net.idx.tok);
    for (std::size_t i = 0; i < T * Dd; ++i) ws.x_dec[i] = ws.v_emb[i] + pos[i];
    for (std::size_t s = 0; s < S_text; ++s) {
      const S* emb = tokw + static_cast<std::size_t>(ex.tokens[s]) * Dd;
      const S* prow = pos + (T + s) * Dd;
      S* row = ws.x_dec.data() + (T + s) * Dd;
      for (std::size_t j = 0; j < Dd; ++j) row[j] = emb[j] + prow[j];
    }
  }
  for (int l = 0; l < c.dec_layers; ++l) {
    layer_forward(net, net.idx.dec[l], ws.dec[l], ws.x_dec.data(), N, Dd, c.dec_heads, dec_hidden,
                  /*causal=*/true);
  }

  const std::size_t n_pred = S_text - 1;
  ws.hf.resize(S_text * Dd);
  ln_forward(ws.x_dec.data() + T * Dd, ws.hf.data(), S_text, Dd, net.at(net.idx.lnf_g),
             net.at(net.idx.lnf_b));
  const auto V = static_cast<std::size_t>(c.vocab_size);
  ws.logits.resize(S_text * V);
  gemm(ws.hf.data(), net.at(net.idx.head_w), ws.logits.data(), S_text, Dd, V);
  add_bias(ws.logits.data(), net.at(net.idx.head_b), S_text, V);

  // Softmax cross-entropy over predicted positions (token s predicts s+1).
  ws.probs_out.assign(S_text * V, S(0));
  double loss = 0.0;
  for (std::size_t s = 0; s < n_pred; ++s) {
    const S* row = ws.logits.data() + s * V;
    S* prow = ws.probs_out.data() + s * V;
    S mx = row[0];
    for (std::size_t j = 1; j < V; ++j) mx = std::max(mx, row[j]);
    S denom = S(0);
    for (std::size_t j = 0; j < V; ++j) {
      prow[j] = std::exp(row[j] - mx);
      denom += prow[j];
    }
    const S inv = S(1) / denom;
    for (std::size_t j = 0; j < V; ++j) prow[j] *= inv;
    const auto target = static_cast<std::size_t>(ex.tokens[s + 1]);
    loss -= std::log(std::max(static_cast<double>(prow[target]), 1e-45));
  }
  loss /= static_cast<double>(n_pred);
  if (grads == nullptr) return loss;

  auto g_at = [&](int entry) { return grads + net.layout->entries[entry].offset; };

  // d_logits = (p - onehot) / n_pred; rows past the last prediction are 0.
  std::vector<S>& d_logits = ws.probs_out;
  const S scale = S(1) / static_cast<S>(n_pred);
  for (std::size_t s = 0; s < n_pred; ++s) {
    S* row = d_logits.data() + s * V;
    row[static_cast<std::size_t>(ex.tokens[s + 1])] -= S(1);
    for (std::size_t j = 0; j < V; ++j) row[j] *= scale;
  }

  ws.d_x.assign(N * Dd, S(0));
  {
    // head and final LN
    std::vector<S>& d_hf = ws.d_ctx;
    d_hf.assign(S_text * Dd, S(0));
    gemm_acc_bt(d_logits.data(), net.at(net.idx.head_w), d_hf.data(), S_text, V, Dd);
    gemm_acc_at(ws.hf.data(), d_logits.data(), g_at(net.idx.head_w), S_text, Dd, V);
    bias_grad(d_logits.data(), g_at(net.idx.head_b), S_text, V);
    ln_backward(ws.x_dec.data() + T * Dd, d_hf.data(), ws.d_x.data() + T * Dd, S_text, Dd,
                net.at(net.idx.lnf_g), g_at(net.idx.lnf_g), g_at(net.idx.lnf_b), ws.xhat, ws.dxh);
  }

  for (int l = c.dec_layers - 1; l >= 0; --l) {
    layer_backward(net, net.idx.dec[l], ws.dec[l], grads, ws.d_x.data(), N, Dd, c.dec_heads,
                   dec_hidden, /*causal=*/true, ws);
  }

  // Split embedding gradients.
  {
    S* d_pos = g_at(net.idx.dec_pos);
    for (std::size_t i = 0; i < N * Dd; ++i) d_pos[i] += ws.d_x[i];
    S* d_tok = g_at(net.idx.tok);
    for (std::size_t s = 0; s < S_text; ++s) {
      S* dst = d_tok + static_cast<std::size_t>(ex.tokens[s]) * Dd;
      const S* src = ws.d_x.data() + (T + s) * Dd;
      for (std::size_t j = 0; j < Dd; ++j) dst[j] += src[j];
    }
  }

  // Projector.
  std::vector<S>& d_xenc = ws.d_a;
  d_xenc.assign(T * Dv, S(0));
  gemm_acc_bt(ws.d_x.data(), net.at(net.idx.proj_w), d_xenc.data(), T, Dd, Dv);
  gemm_acc_at(ws.x_enc.data(), ws.d_x.data(), g_at(net.idx.proj_w), T, Dv, Dd);
  bias_grad(ws.d_x.data(), g_at(net.idx.proj_b), T, Dd);

  std::vector<S>& d_x_enc = ws.d_x;
  d_x_enc.assign(T * Dv, S(0));
  std::memcpy(d_x_enc.data(), d_xenc.data(), T * Dv * sizeof(S));
  for (int l = c.enc_layers - 1; l >= 0; --l) {
    layer_backward(net, net.idx.enc[l], ws.enc[l], grads, d_x_enc.data(), T, Dv, c.enc_heads,
                   enc_hidden, /*causal=*/false, ws);
  }

  {
    S* d_pos = g_at(net.idx.enc_pos);
    for (std::size_t i = 0; i < T * Dv; ++i) d_pos[i] += d_x_enc[i];
    gemm_acc_at(ws.patches.data(), d_x_enc.data(), g_at(net.idx.patch_w), T, pdim, Dv);
    bias_grad(d_x_enc.data(), g_at(net.idx.patch_b), T, Dv);
  }
  return loss;
}

template <class S>
Net<S> make_net(const ModelConfig& c, const ParamLayout& layout, const S* w) {
  Net<S> net;
  net.c = &c;
  net.layout = &layout;
  net.idx = resolve_indices(layout, c);
  net.w = w;
  return net;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  const unsigned hw = std::thread::hardware_concurrency();
  return static_cast<int>(std::clamp(hw, 1u, 8u));
}

}  // namespace

double dataset_loss(const ModelConfig& config, const ModelParams& params,
                    std::span<const TrainingExample> dataset) {
  const Net<float> net = make_net<float>(config, params.layout(), params.flat().data());
  Workspace<float> ws;
  double total = 0.0;
  for (const auto& ex : dataset) total += example_loss<float>(net, ex, nullptr, ws);
  return dataset.empty() ? 0.0 : total / static_cast<double>(dataset.size());
}

TrainResult train(const ModelConfig& config, const std::vector<TrainingExample>& dataset,
                  const TrainOptions& options) {
  config.validate();
  if (dataset.empty()) throw ValueError("train: empty dataset");
  if (options.epochs < 0 || options.batch_size < 1) throw ValueError("train: bad options");

  ModelParams params = ModelParams::init(config, options.seed);
  const ParamLayout& layout = params.layout();
  const std::size_t P = layout.total;

  std::vector<float> m(P, 0.0f), v(P, 0.0f);
  TrainResult result;
  const int threads = resolve_threads(options.threads);

  // Fixed-size example blocks; block partials are folded left-to-right, so
  // the sum (and every checkpoint) is identical for any thread count.
  constexpr int kBlock = 4;
  std::vector<std::vector<float>> block_grads;
  std::vector<Workspace<float>> workspaces(threads);

  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    std::vector<std::size_t> order(dataset.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(mix_seed(options.seed ^ 0x5u, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle_rng.bounded(i)]);
    }

    double epoch_loss_sum = 0.0;
    std::size_t epoch_examples = 0;

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      const std::size_t batch_n = stop - start;
      const std::size_t n_blocks = (batch_n + kBlock - 1) / kBlock;

      std::vector<float> grad_sum(P, 0.0f);
      std::vector<double> block_loss(n_blocks, 0.0);
      if (block_grads.size() < std::min<std::size_t>(n_blocks, static_cast<std::size_t>(threads))) {
        block_grads.resize(std::min<std::size_t>(n_blocks, static_cast<std::size_t>(threads)));
      }

      const Net<float> net = make_net<float>(config, layout, params.flat().data());

      for (std::size_t wave = 0; wave < n_blocks; wave += threads) {
        const std::size_t wave_n = std::min<std::size_t>(threads, n_blocks - wave);
        auto run_block = [&](std::size_t slot, std::size_t block) {
          auto& g = block_grads[slot];
          g.assign(P, 0.0f);
          double loss = 0.0;
          const std::size_t b0 = start + block * kBlock;
          const std::size_t b1 = std::min(stop, b0 + kBlock);
          for (std::size_t e = b0; e < b1; ++e) {
            loss += example_loss<float>(net, dataset[order[e]], g.data(), workspaces[slot]);
          }
          block_loss[block] = loss;
        };
        if (wave_n == 1) {
          run_block(0, wave);
        } else {
          std::vector<std::thread> pool;
          pool.reserve(wave_n);
          for (std::size_t t = 0; t < wave_n; ++t) {
            pool.emplace_back(run_block, t, wave + t);
          }
          for (auto& th : pool) th.join();
        }
        for (std::size_t t = 0; t < wave_n; ++t) {
          const auto& g = block_grads[t];
          for (std::size_t i = 0; i < P; ++i) grad_sum[i] += g[i];
        }
      }

      double batch_loss = 0.0;
      for (double l : block_loss) batch_loss += l;
      epoch_loss_sum += batch_loss;
      epoch_examples += batch_n;

      // Adam step on the batch-mean gradient.
      ++step;
      const auto inv_n = static_cast<float>(1.0 / static_cast<double>(batch_n));
      const auto b1 = static_cast<float>(options.beta1);
      const auto b2 = static_cast<float>(options.beta2);
      const auto corr1 = static_cast<float>(1.0 - std::pow(options.beta1, step));
      const auto corr2 = static_cast<float>(1.0 - std::pow(options.beta2, step));
      const auto lr = static_cast<float>(options.lr);
      const auto eps = static_cast<float>(options.eps);
      float* w = params.flat().data();
      for (std::size_t i = 0; i < P; ++i) {
        const float g = grad_sum[i] * inv_n;
        m[i] = b1 * m[i] + (1.0f - b1) * g;
        v[i] = b2 * v[i] + (1.0f - b2) * g * g;
        const float mhat = m[i] / corr1;
        const float vhat = v[i] / corr2;
        w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }

    const double epoch_loss = epoch_loss_sum / static_cast<double>(epoch_examples);
    if (!std::isfinite(epoch_loss)) {
      throw DivergenceError("train: non-finite loss at epoch " + std::to_string(epoch), epoch);
    }
    result.epoch_loss.push_back(epoch_loss);
  }

  result.params = std::move(params);
  return result;
}

namespace detail {

std::vector<double> params_to_f64(const ModelParams& params) {
  std::vector<double> out(params.flat().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = params.flat()[i];
  return out;
}

double loss_f64(const ModelConfig& config, const std::vector<double>& weights,
                const TrainingExample& example) {
  const ParamLayout layout = ParamLayout::make(config);
  const Net<double> net = make_net<double>(config, layout, weights.data());
  Workspace<double> ws;
  return example_loss<double>(net, example, nullptr, ws);
}

double loss_and_grad_f64(const ModelConfig& config, const std::vector<double>& weights,
                         const TrainingExample& example, std::vector<double>& grads) {
  const ParamLayout layout = ParamLayout::make(config);
  grads.assign(layout.total, 0.0);
  const Net<double> net = make_net<double>(config, layout, weights.data());
  Workspace<double> ws;
  return example_loss<double>(net, example, grads.data(), ws);
}

}  // namespace detail

}  // namespace vti
