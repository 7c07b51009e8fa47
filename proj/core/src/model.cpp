#include "vti/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "vti/detail/gemm.hpp"
#include "vti/errors.hpp"
#include "vti/rng.hpp"
#include "vti/vocab.hpp"

namespace vti {

namespace {

constexpr float kLnEps = 1e-5f;

void layer_norm_rows(const float* x, float* out, std::size_t n, std::size_t d, const float* gain,
                     const float* bias) {
  for (std::size_t i = 0; i < n; ++i) {
    const float* row = x + i * d;
    float* orow = out + i * d;
    float mean = 0.0f;
    for (std::size_t j = 0; j < d; ++j) mean += row[j];
    mean /= static_cast<float>(d);
    float var = 0.0f;
    for (std::size_t j = 0; j < d; ++j) {
      const float c = row[j] - mean;
      var += c * c;
    }
    var /= static_cast<float>(d);
    const float inv = 1.0f / std::sqrt(var + kLnEps);
    for (std::size_t j = 0; j < d; ++j) orow[j] = (row[j] - mean) * inv * gain[j] + bias[j];
  }
}

void linear(const float* x, const float* w, const float* b, float* out, std::size_t n,
            std::size_t din, std::size_t dout) {
  detail::gemm(x, w, out, n, din, dout);
  for (std::size_t i = 0; i < n; ++i) {
    float* row = out + i * dout;
    for (std::size_t j = 0; j < dout; ++j) row[j] += b[j];
  }
}

void gelu_inplace(float* x, std::size_t n) {
  constexpr float kInvSqrt2 = 0.70710678118654752440f;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 0.5f * x[i] * (1.0f + std::erf(x[i] * kInvSqrt2));
  }
}

struct LayerRefs {
  const float *ln1_g, *ln1_b;
  const float *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
  const float *ln2_g, *ln2_b;
  const float *w1, *b1, *w2, *b2;
};

LayerRefs layer_refs(const ModelParams& p, const std::string& prefix) {
  auto get = [&](const char* suffix) { return p.entry(prefix + suffix).data(); };
  LayerRefs r;
  r.ln1_g = get(".ln1.g");
  r.ln1_b = get(".ln1.b");
  r.wq = get(".attn.wq");
  r.bq = get(".attn.bq");
  r.wk = get(".attn.wk");
  r.bk = get(".attn.bk");
  r.wv = get(".attn.wv");
  r.bv = get(".attn.bv");
  r.wo = get(".attn.wo");
  r.bo = get(".attn.bo");
  r.ln2_g = get(".ln2.g");
  r.ln2_b = get(".ln2.b");
  r.w1 = get(".mlp.w1");
  r.b1 = get(".mlp.b1");
  r.w2 = get(".mlp.w2");
  r.b2 = get(".mlp.b2");
  return r;
}

// Residual pre-norm block: x += attn(ln1(x)); x += mlp(ln2(x)).
// When attn_rows != nullptr, softmax rows for positions >= record_from are
// stored as [H, n - record_from, n] with masked keys set to 0.
void run_layer(float* x, std::size_t n, std::size_t d, std::size_t heads, std::size_t hidden,
               const LayerRefs& w, bool causal, float* attn_rows, std::size_t record_from,
               std::vector<float>& scratch) {
  const std::size_t hd = d / heads;
  const float scale = 1.0f / std::sqrt(static_cast<float>(hd));

  // scratch layout: a | q | k | v | ctx | probs | mlp_hidden
  const std::size_t need = 5 * n * d + n + hidden * n;
  if (scratch.size() < need) scratch.resize(need);
  float* a = scratch.data();
  float* q = a + n * d;
  float* k = q + n * d;
  float* v = k + n * d;
  float* ctx = v + n * d;
  float* probs = ctx + n * d;
  float* mlp = probs + n;

  layer_norm_rows(x, a, n, d, w.ln1_g, w.ln1_b);
  linear(a, w.wq, w.bq, q, n, d, d);
  linear(a, w.wk, w.bk, k, n, d, d);
  linear(a, w.wv, w.bv, v, n, d, d);

  std::memset(ctx, 0, n * d * sizeof(float));
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * hd;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t valid = causal ? i + 1 : n;
      const float* qi = q + i * d + off;
      float mx = -std::numeric_limits<float>::infinity();
      for (std::size_t j = 0; j < valid; ++j) {
        const float* kj = k + j * d + off;
        float s = 0.0f;
        for (std::size_t c = 0; c < hd; ++c) s += qi[c] * kj[c];
        probs[j] = s * scale;
        mx = std::max(mx, probs[j]);
      }
      float denom = 0.0f;
      for (std::size_t j = 0; j < valid; ++j) {
        probs[j] = std::exp(probs[j] - mx);
        denom += probs[j];
      }
      const float inv = 1.0f / denom;
      float* ci = ctx + i * d + off;
      for (std::size_t j = 0; j < valid; ++j) {
        const float p = probs[j] * inv;
        probs[j] = p;
        const float* vj = v + j * d + off;
        for (std::size_t c = 0; c < hd; ++c) ci[c] += p * vj[c];
      }
      if (attn_rows != nullptr && i >= record_from) {
        float* row = attn_rows + (h * (n - record_from) + (i - record_from)) * n;
        for (std::size_t j = 0; j < valid; ++j) row[j] = probs[j];
        for (std::size_t j = valid; j < n; ++j) row[j] = 0.0f;
      }
    }
  }

  linear(ctx, w.wo, w.bo, a, n, d, d);
  for (std::size_t i = 0; i < n * d; ++i) x[i] += a[i];

  layer_norm_rows(x, a, n, d, w.ln2_g, w.ln2_b);
  linear(a, w.w1, w.b1, mlp, n, d, hidden);
  gelu_inplace(mlp, n * hidden);
  linear(mlp, w.w2, w.b2, ctx, n, hidden, d);
  for (std::size_t i = 0; i < n * d; ++i) x[i] += ctx[i];
}

/// Sum matching hook deltas into one combined buffer, then add it once.
/// Summing first keeps opposite hooks an exact no-op and makes application
/// independent of hook list order up to float addition order.
void apply_hooks(std::span<const Hook> hooks, Hook::Site site, int layer, float* x,
                 std::size_t n_positions, std::size_t d, std::size_t pos_offset,
                 std::vector<float>& combined) {
  bool any = false;
  for (const Hook& h : hooks) {
    if (h.site != site || h.layer != layer) continue;
    if (!any) {
      combined.assign(n_positions * d, 0.0f);
      any = true;
    }
    auto add_at = [&](std::size_t pos) {
      if (pos >= n_positions) throw HookError("hook position out of range");
      const float* src;
      if (h.delta.rank() == 2) {
        if (h.delta.dim(0) < n_positions || h.delta.dim(1) != d) {
          throw HookError("hook delta table shape mismatch");
        }
        src = h.delta.data() + pos * d;
      } else {
        if (h.delta.size() != d) throw HookError("hook delta width mismatch");
        src = h.delta.data();
      }
      float* dst = combined.data() + pos * d;
      for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
    };
    switch (h.where) {
      case Hook::Where::AllTokens:
        for (std::size_t pos = 0; pos < n_positions; ++pos) add_at(pos);
        break;
      case Hook::Where::LastToken:
        add_at(n_positions - 1);
        break;
      case Hook::Where::Tokens:
        for (int pos : h.token_positions) add_at(static_cast<std::size_t>(pos));
        break;
    }
  }
  if (!any) return;
  for (std::size_t pos = 0; pos < n_positions; ++pos) {
    float* dst = x + (pos_offset + pos) * d;
    const float* src = combined.data() + pos * d;
    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
  }
}

struct DecoderPass {
  Tensor logits;  // [S, vocab]
  HiddenTrace trace;  // decoder fields only
};

DecoderPass run_decoder(const ModelConfig& c, const ModelParams& params,
                        const Tensor& vision_embeddings, std::span<const int> tokens,
                        std::span<const Hook> hooks) {
  const auto T = static_cast<std::size_t>(c.vision_tokens());
  const auto Dd = static_cast<std::size_t>(c.dec_dim);
  if (vision_embeddings.rank() != 2 || vision_embeddings.dim(0) != T ||
      vision_embeddings.dim(1) != Dd) {
    throw ShapeError("decoder: vision embeddings must be [T, dec_dim]");
  }
  if (tokens.empty()) throw SequenceLengthError("decoder: empty text sequence");
  const std::size_t S = tokens.size();
  if (T + S > static_cast<std::size_t>(c.max_seq)) {
    throw SequenceLengthError("decoder: sequence exceeds max length");
  }
  for (int id : tokens) {
    if (id < 0 || id >= c.vocab_size) throw ValueError("decoder: token id out of range");
  }

  const std::size_t N = T + S;
  std::vector<float> x(N * Dd);
  const float* pos = params.entry("dec.pos").data();
  const float* tokw = params.entry("dec.tok").data();
  const float* vis = vision_embeddings.data();
  for (std::size_t i = 0; i < T * Dd; ++i) x[i] = vis[i] + pos[i];
  for (std::size_t s = 0; s < S; ++s) {
    const float* emb = tokw + static_cast<std::size_t>(tokens[s]) * Dd;
    const float* prow = pos + (T + s) * Dd;
    float* row = x.data() + (T + s) * Dd;
    for (std::size_t j = 0; j < Dd; ++j) row[j] = emb[j] + prow[j];
  }

  DecoderPass out;
  out.trace.decoder_states = Tensor({static_cast<std::size_t>(c.dec_layers), S, Dd});
  out.trace.decoder_states_post = Tensor({static_cast<std::size_t>(c.dec_layers), S, Dd});
  out.trace.attention.reserve(c.dec_layers);

  std::vector<float> scratch, combined;
  for (int l = 0; l < c.dec_layers; ++l) {
    Tensor attn({static_cast<std::size_t>(c.dec_heads), S, N});
    const LayerRefs w = layer_refs(params, "dec." + std::to_string(l));
    run_layer(x.data(), N, Dd, c.dec_heads, Dd * c.dec_mlp_ratio, w, /*causal=*/true, attn.data(),
              T, scratch);
    out.trace.attention.push_back(std::move(attn));
    std::memcpy(out.trace.decoder_states.data() + static_cast<std::size_t>(l) * S * Dd,
                x.data() + T * Dd, S * Dd * sizeof(float));
    apply_hooks(hooks, Hook::Site::DecoderLayer, l, x.data(), S, Dd, T, combined);
    std::memcpy(out.trace.decoder_states_post.data() + static_cast<std::size_t>(l) * S * Dd,
                x.data() + T * Dd, S * Dd * sizeof(float));
  }

  std::vector<float> hf(S * Dd);
  layer_norm_rows(x.data() + T * Dd, hf.data(), S, Dd, params.entry("dec.ln_f.g").data(),
                  params.entry("dec.ln_f.b").data());
  out.logits = Tensor({S, static_cast<std::size_t>(c.vocab_size)});
  linear(hf.data(), params.entry("head.w").data(), params.entry("head.b").data(),
         out.logits.data(), S, Dd, c.vocab_size);
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (channels != 3) throw ValueError("model config: channels must be 3");
  if (patch_size <= 0 || image_h % patch_size != 0 || image_w % patch_size != 0) {
    throw ValueError("model config: patch_size must divide image dims");
  }
  if (enc_dim <= 0 || enc_heads <= 0 || enc_dim % enc_heads != 0) {
    throw ValueError("model config: enc_dim must be divisible by enc_heads");
  }
  if (dec_dim <= 0 || dec_heads <= 0 || dec_dim % dec_heads != 0) {
    throw ValueError("model config: dec_dim must be divisible by dec_heads");
  }
  if (enc_layers < 1 || dec_layers < 1) throw ValueError("model config: need >= 1 layer");
  if (enc_mlp_ratio < 1 || dec_mlp_ratio < 1) throw ValueError("model config: mlp ratio >= 1");
  if (vocab_size < 4) throw ValueError("model config: vocab too small");
  if (max_seq <= vision_tokens()) {
    throw ValueError("model config: max_seq must exceed vision token count");
  }
}

ParamLayout ParamLayout::make(const ModelConfig& c) {
  c.validate();
  ParamLayout layout;
  auto add = [&](std::string name, std::vector<std::size_t> dims, char init) {
    Entry e;
    e.name = std::move(name);
    e.dims = std::move(dims);
    e.size = Tensor::shape_product(e.dims);
    e.offset = layout.total;
    e.init = init;
    layout.total += e.size;
    layout.entries.push_back(std::move(e));
  };
  const auto T = static_cast<std::size_t>(c.vision_tokens());
  const auto Dv = static_cast<std::size_t>(c.enc_dim);
  const auto Dd = static_cast<std::size_t>(c.dec_dim);

  add("enc.patch.w", {static_cast<std::size_t>(c.patch_dim()), Dv}, 'n');
  add("enc.patch.b", {Dv}, 'z');
  add("enc.pos", {T, Dv}, 'n');
  auto add_block = [&](const std::string& prefix, std::size_t d, std::size_t hidden) {
    add(prefix + ".ln1.g", {d}, 'o');
    add(prefix + ".ln1.b", {d}, 'z');
    add(prefix + ".attn.wq", {d, d}, 'n');
    add(prefix + ".attn.bq", {d}, 'z');
    add(prefix + ".attn.wk", {d, d}, 'n');
    add(prefix + ".attn.bk", {d}, 'z');
    add(prefix + ".attn.wv", {d, d}, 'n');
    add(prefix + ".attn.bv", {d}, 'z');
    add(prefix + ".attn.wo", {d, d}, 'n');
    add(prefix + ".attn.bo", {d}, 'z');
    add(prefix + ".ln2.g", {d}, 'o');
    add(prefix + ".ln2.b", {d}, 'z');
    add(prefix + ".mlp.w1", {d, hidden}, 'n');
    add(prefix + ".mlp.b1", {hidden}, 'z');
    add(prefix + ".mlp.w2", {hidden, d}, 'n');
    add(prefix + ".mlp.b2", {d}, 'z');
  };
  for (int l = 0; l < c.enc_layers; ++l) {
    add_block("enc." + std::to_string(l), Dv, Dv * static_cast<std::size_t>(c.enc_mlp_ratio));
  }
  add("proj.w", {Dv, Dd}, 'n');
  add("proj.b", {Dd}, 'z');
  add("dec.tok", {static_cast<std::size_t>(c.vocab_size), Dd}, 'n');
  add("dec.pos", {static_cast<std::size_t>(c.max_seq), Dd}, 'n');
  for (int l = 0; l < c.dec_layers; ++l) {
    add_block("dec." + std::to_string(l), Dd, Dd * static_cast<std::size_t>(c.dec_mlp_ratio));
  }
  add("dec.ln_f.g", {Dd}, 'o');
  add("dec.ln_f.b", {Dd}, 'z');
  add("head.w", {Dd, static_cast<std::size_t>(c.vocab_size)}, 'n');
  add("head.b", {static_cast<std::size_t>(c.vocab_size)}, 'z');
  return layout;
}

int ParamLayout::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].name == name) return static_cast<int>(i);
  }
  return -1;
}

ModelParams::ModelParams(const ModelConfig& config)
    : layout_(ParamLayout::make(config)), flat_(layout_.total, 0.0f) {}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  Rng rng(seed);
  for (const auto& e : p.layout_.entries) {
    float* dst = p.flat_.data() + e.offset;
    switch (e.init) {
      case 'n':
        for (std::size_t i = 0; i < e.size; ++i) dst[i] = static_cast<float>(rng.normal() * 0.02);
        break;
      case 'o':
        for (std::size_t i = 0; i < e.size; ++i) dst[i] = 1.0f;
        break;
      default:
        break;
    }
  }
  return p;
}

std::span<float> ModelParams::entry(int index) {
  const auto& e = layout_.entries[index];
  return {flat_.data() + e.offset, e.size};
}

std::span<const float> ModelParams::entry(int index) const {
  const auto& e = layout_.entries[index];
  return {flat_.data() + e.offset, e.size};
}

std::span<const float> ModelParams::entry(std::string_view name) const {
  const int i = layout_.index_of(name);
  if (i < 0) throw ValueError("unknown parameter entry: " + std::string(name));
  return entry(i);
}

void validate_hooks(const ModelConfig& config, std::span<const Hook> hooks) {
  for (const Hook& h : hooks) {
    const bool vision = h.site == Hook::Site::VisionLayer;
    const int layers = vision ? config.enc_layers : config.dec_layers;
    const auto d = static_cast<std::size_t>(vision ? config.enc_dim : config.dec_dim);
    if (h.layer < 0 || h.layer >= layers) throw HookError("hook layer out of range");
    if (h.delta.rank() == 2) {
      if (!vision || h.delta.dim(0) != static_cast<std::size_t>(config.vision_tokens()) ||
          h.delta.dim(1) != d) {
        throw HookError("hook delta table shape mismatch");
      }
    } else if (h.delta.rank() == 1) {
      if (h.delta.size() != d) throw HookError("hook delta width mismatch");
    } else {
      throw HookError("hook delta must be rank 1 or 2");
    }
    if (h.where == Hook::Where::Tokens) {
      const int limit = vision ? config.vision_tokens() : config.max_seq;
      for (int p : h.token_positions) {
        if (p < 0 || p >= limit) throw HookError("hook position out of range");
      }
    }
  }
}

Model::Model(ModelConfig config, ModelParams params)
    : config_(config), params_(std::move(params)) {
  config_.validate();
  const ParamLayout expected = ParamLayout::make(config_);
  if (params_.layout().total != expected.total ||
      params_.layout().entries.size() != expected.entries.size()) {
    throw ShapeError("model: parameter layout does not match config");
  }
}

Model::EncodeResult Model::encode_image(const Image& image, std::span<const Hook> hooks) const {
  const auto& c = config_;
  if (image.height != static_cast<std::size_t>(c.image_h) ||
      image.width != static_cast<std::size_t>(c.image_w)) {
    throw ShapeError("encode_image: image dims do not match config");
  }
  validate_hooks(c, hooks);

  const auto T = static_cast<std::size_t>(c.vision_tokens());
  const auto Dv = static_cast<std::size_t>(c.enc_dim);
  const auto Dd = static_cast<std::size_t>(c.dec_dim);
  const auto P = static_cast<std::size_t>(c.patch_size);
  const std::size_t px = static_cast<std::size_t>(c.image_w) / P;
  const auto pdim = static_cast<std::size_t>(c.patch_dim());

  // Patchify in (y, x, channel) order within each patch.
  std::vector<float> patches(T * pdim);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t pr = t / px, pc = t % px;
    float* dst = patches.data() + t * pdim;
    std::size_t k = 0;
    for (std::size_t y = 0; y < P; ++y) {
      for (std::size_t x = 0; x < P; ++x) {
        for (std::size_t ch = 0; ch < Image::kChannels; ++ch) {
          dst[k++] = image.at(pr * P + y, pc * P + x, ch);
        }
      }
    }
  }

  std::vector<float> x(T * Dv);
  linear(patches.data(), params_.entry("enc.patch.w").data(), params_.entry("enc.patch.b").data(),
         x.data(), T, pdim, Dv);
  const float* pos = params_.entry("enc.pos").data();
  for (std::size_t i = 0; i < T * Dv; ++i) x[i] += pos[i];

  EncodeResult res;
  res.trace.vision_states = Tensor({static_cast<std::size_t>(c.enc_layers), T, Dv});
  res.trace.vision_states_post = Tensor({static_cast<std::size_t>(c.enc_layers), T, Dv});

  std::vector<float> scratch, combined;
  for (int l = 0; l < c.enc_layers; ++l) {
    const LayerRefs w = layer_refs(params_, "enc." + std::to_string(l));
    run_layer(x.data(), T, Dv, c.enc_heads, Dv * static_cast<std::size_t>(c.enc_mlp_ratio), w,
              /*causal=*/false, nullptr, 0, scratch);
    std::memcpy(res.trace.vision_states.data() + static_cast<std::size_t>(l) * T * Dv, x.data(),
                T * Dv * sizeof(float));
    apply_hooks(hooks, Hook::Site::VisionLayer, l, x.data(), T, Dv, 0, combined);
    std::memcpy(res.trace.vision_states_post.data() + static_cast<std::size_t>(l) * T * Dv,
                x.data(), T * Dv * sizeof(float));
  }

  res.embeddings = Tensor({T, Dd});
  linear(x.data(), params_.entry("proj.w").data(), params_.entry("proj.b").data(),
         res.embeddings.data(), T, Dv, Dd);
  return res;
}

Model::DecodeResult Model::decode_step(const Tensor& vision_embeddings,
                                       std::span<const int> prefix,
                                       std::span<const Hook> hooks) const {
  validate_hooks(config_, hooks);
  DecoderPass pass = run_decoder(config_, params_, vision_embeddings, prefix, hooks);
  DecodeResult out;
  const std::size_t vocab = pass.logits.dim(1);
  const std::size_t last = pass.logits.dim(0) - 1;
  std::vector<float> logits(pass.logits.data() + last * vocab,
                            pass.logits.data() + (last + 1) * vocab);
  out.logits = Tensor({vocab}, std::move(logits));
  out.trace = std::move(pass.trace);
  return out;
}

Model::ForcedResult Model::forward_teacher_forced(const Image& image, std::span<const int> tokens,
                                                  std::span<const Hook> hooks) const {
  validate_hooks(config_, hooks);
  EncodeResult enc = encode_image(image, hooks);
  DecoderPass pass = run_decoder(config_, params_, enc.embeddings, tokens, hooks);
  ForcedResult out;
  out.logits = std::move(pass.logits);
  out.trace = std::move(pass.trace);
  out.trace.vision_states = std::move(enc.trace.vision_states);
  out.trace.vision_states_post = std::move(enc.trace.vision_states_post);
  return out;
}

int argmax_lowest(std::span<const float> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

Model::GenerateResult Model::generate(const Image& image, std::span<const int> prompt,
                                      std::span<const Hook> hooks, int max_new) const {
  if (prompt.empty()) throw SequenceLengthError("generate: empty prompt");
  if (max_new < 0) throw ValueError("generate: max_new must be >= 0");
  validate_hooks(config_, hooks);

  EncodeResult enc = encode_image(image, hooks);
  GenerateResult res;
  res.vision_trace = std::move(enc.trace);

  std::vector<int> seq(prompt.begin(), prompt.end());
  for (int step = 0; step < max_new; ++step) {
    DecoderPass pass = run_decoder(config_, params_, enc.embeddings, seq, hooks);
    const std::size_t vocab = pass.logits.dim(1);
    const std::size_t last = pass.logits.dim(0) - 1;
    const int next =
        argmax_lowest(std::span<const float>(pass.logits.data() + last * vocab, vocab));
    res.step_traces.push_back(std::move(pass.trace));
    if (next == tok::kEos) break;
    res.tokens.push_back(next);
    seq.push_back(next);
  }
  return res;
}

std::uint64_t params_fingerprint(const ModelConfig& config, const ModelParams& params) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&](const void* ptr, std::size_t len) {
    const auto* bytes = static_cast<const unsigned char*>(ptr);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ull;
    }
  };
  const int ints[] = {config.image_h,    config.image_w, config.channels,  config.patch_size,
                      config.enc_layers, config.enc_dim, config.enc_heads, config.enc_mlp_ratio,
                      config.dec_layers, config.dec_dim, config.dec_heads, config.dec_mlp_ratio,
                      config.vocab_size, config.max_seq};
  mix(ints, sizeof(ints));
  mix(params.flat().data(), params.flat().size() * sizeof(float));
  return h;
}

}  // namespace vti
