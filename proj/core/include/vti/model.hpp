#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vti/image.hpp"
#include "vti/tensor.hpp"

namespace vti {

/// Architecture of the toy vision encoder + causal text decoder.
struct ModelConfig {
  int image_h = 32;
  int image_w = 32;
  int channels = 3;
  int patch_size = 4;

  int enc_layers = 4;
  int enc_dim = 32;
  int enc_heads = 4;
  int enc_mlp_ratio = 4;

  int dec_layers = 4;
  int dec_dim = 64;
  int dec_heads = 4;
  int dec_mlp_ratio = 4;

  int vocab_size = 64;
  int max_seq = 128;

  int vision_tokens() const { return (image_h / patch_size) * (image_w / patch_size); }
  int patch_dim() const { return patch_size * patch_size * channels; }
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Flat parameter store with a fixed, documented entry order. The same
/// order drives initialization, Adam state, checkpoint serialization and
/// gradient checks.
struct ParamLayout {
  struct Entry {
    std::string name;
    std::vector<std::size_t> dims;
    std::size_t offset = 0;
    std::size_t size = 0;
    char init = 'z';  // 'n' normal(0, 0.02^2), 'z' zero, 'o' one
  };
  std::vector<Entry> entries;
  std::size_t total = 0;

  static ParamLayout make(const ModelConfig& config);
  int index_of(std::string_view name) const;  // -1 when absent
};

class ModelParams {
 public:
  ModelParams() = default;
  explicit ModelParams(const ModelConfig& config);

  /// Weight matrices and embeddings drawn N(0, 0.02^2) from the seed,
  /// biases zero, layer-norm gains one.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  const ParamLayout& layout() const { return layout_; }
  std::span<float> flat() { return flat_; }
  std::span<const float> flat() const { return flat_; }
  std::span<float> entry(int index);
  std::span<const float> entry(int index) const;
  std::span<const float> entry(std::string_view name) const;

 private:
  ParamLayout layout_;
  std::vector<float> flat_;
};

/// Additive latent edit. The delta is added to the named layer's output
/// immediately after it is recorded in the trace, before the next layer
/// consumes it. A rank-2 [T, D] delta is a per-token table; a rank-1 [D]
/// delta is broadcast over the targeted positions. Decoder positions are
/// text-token indices (vision tokens are never decoder targets).
struct Hook {
  enum class Site { VisionLayer, DecoderLayer };
  enum class Where { AllTokens, LastToken, Tokens };

  Site site = Site::VisionLayer;
  int layer = 0;
  Where where = Where::AllTokens;
  std::vector<int> token_positions;  // used when where == Tokens
  Tensor delta;
};

/// Recorded states from one forward pass. *_states hold the layer outputs
/// before hooks were applied; *_states_post hold what the next layer
/// actually consumed. Attention maps cover text-query rows over the
/// concatenated [vision | text] key axis.
struct HiddenTrace {
  Tensor vision_states;       // [L_v, T, D_v]
  Tensor vision_states_post;  // [L_v, T, D_v]
  Tensor decoder_states;      // [L_d, S, D_d]
  Tensor decoder_states_post;
  std::vector<Tensor> attention;  // per decoder layer: [H, S, S+T]
};

class Model {
 public:
  Model(ModelConfig config, ModelParams params);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }

  struct EncodeResult {
    Tensor embeddings;  // [T, D_d], projector output
    HiddenTrace trace;
  };
  EncodeResult encode_image(const Image& image, std::span<const Hook> hooks = {}) const;

  struct DecodeResult {
    Tensor logits;  // [vocab], next-token logits at the last position
    HiddenTrace trace;
  };
  DecodeResult decode_step(const Tensor& vision_embeddings, std::span<const int> prefix,
                           std::span<const Hook> hooks = {}) const;

  struct ForcedResult {
    Tensor logits;  // [S, vocab], next-token logits at every text position
    HiddenTrace trace;
  };
  /// Teacher-forced pass over a full known sequence (hidden-state reads).
  ForcedResult forward_teacher_forced(const Image& image, std::span<const int> tokens,
                                      std::span<const Hook> hooks = {}) const;

  struct GenerateResult {
    std::vector<int> tokens;  // newly generated tokens (EOS excluded)
    HiddenTrace vision_trace;
    std::vector<HiddenTrace> step_traces;
  };
  /// Greedy decode until EOS or max_new tokens; ties break to the lowest
  /// token id.
  GenerateResult generate(const Image& image, std::span<const int> prompt,
                          std::span<const Hook> hooks, int max_new) const;

 private:
  ModelConfig config_;
  ModelParams params_;
};

void validate_hooks(const ModelConfig& config, std::span<const Hook> hooks);

/// Greedy argmax with lowest-index tie break.
int argmax_lowest(std::span<const float> values);

/// FNV-1a over the serialized parameter payload; stable identity for
/// checkpoint provenance.
std::uint64_t params_fingerprint(const ModelConfig& config, const ModelParams& params);

}  // namespace vti
