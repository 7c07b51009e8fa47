#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

#include "vti/image.hpp"
#include "vti/vocab.hpp"

namespace vti {

/// (shape, color) identity of a drawable object.
struct ObjectId {
  int shape = 0;
  int color = 0;
  friend bool operator==(const ObjectId&, const ObjectId&) = default;
  friend auto operator<=>(const ObjectId&, const ObjectId&) = default;
};

struct SceneObject {
  ObjectId id;
  int cell_row = 0;  // 4x4 grid
  int cell_col = 0;
};

/// Up to four objects on a 4x4 grid over the 32x32 canvas. Cells and
/// (shape, color) identities are unique within a scene.
struct Scene {
  std::vector<SceneObject> objects;
  std::uint64_t seed = 0;

  bool contains(ObjectId id) const;
  void validate() const;
};

constexpr int kGridCells = 4;
constexpr int kCellPixels = 8;
constexpr int kCanvasPixels = kGridCells * kCellPixels;

/// Trigger -> companion co-occurrence pairs plus the probability that a
/// training caption mentions the absent companion when the trigger is
/// present. This is what makes the trained toy model hallucinate.
struct BiasSpec {
  struct CoPair {
    ObjectId trigger;
    ObjectId companion;
  };
  std::vector<CoPair> co_pairs;
  double p_bias = 0.5;

  static BiasSpec default_bias();
};

struct CaptionPair {
  Scene scene;
  std::vector<int> clean;         // caption tokens x
  std::vector<int> hallucinated;  // caption tokens x~ (superset of clean mentions)
  std::vector<ObjectId> injected_objects;
};

/// 1-4 objects drawn uniformly: distinct cells, distinct identities.
Scene random_scene(std::uint64_t seed);

/// Deterministic raster: filled colored glyphs on a black background.
Image render_scene(const Scene& scene);

/// Canonical caption, objects in row-major cell order:
/// "a {color} {shape} and a {color} {shape} ." / "nothing ." when empty.
std::vector<int> caption(const Scene& scene);

/// Object mentions in caption order ("a {color} {shape}" groups).
std::vector<ObjectId> parse_objects(std::span<const int> tokens);

/// Clean caption plus exactly one absent object appended in-template.
/// Prefers an absent companion of a present trigger; falls back to a
/// random absent object. Throws GenerationError when no object is absent.
CaptionPair hallucinated_caption(const Scene& scene, const BiasSpec& bias, std::uint64_t seed);

/// Mention counts over a caption corpus, indexed by ObjectId.
class ObjectCounts {
 public:
  ObjectCounts() : counts_{} {}
  void add(ObjectId id, int n = 1) { counts_[index(id)] += n; }
  int count(ObjectId id) const { return counts_[index(id)]; }
  static int index(ObjectId id) { return id.shape * tok::kNumColors + id.color; }
  static ObjectId from_index(int i) { return {i / tok::kNumColors, i % tok::kNumColors}; }
  static constexpr int kNumIds = tok::kNumShapes * tok::kNumColors;

 private:
  std::array<int, kNumIds> counts_;
};

enum class PopeMode { Random, Popular, Adversarial };
std::string_view pope_mode_name(PopeMode mode);

struct PopeQuestion {
  std::vector<int> tokens;  // "is there a {color} {shape} ?"
  bool gold_yes = false;
  bool fallback = false;  // negative sampling fell back to random
};

/// Balanced yes/no probes: ceil(k/2) positives over present objects,
/// floor(k/2) negatives drawn per mode (random / popular / adversarial).
std::vector<PopeQuestion> pope_questions(const Scene& scene, PopeMode mode, const BiasSpec& bias,
                                         int k, const ObjectCounts& corpus_counts,
                                         std::uint64_t seed);

struct TrainExampleTokens {
  std::uint64_t scene_seed = 0;
  std::vector<int> tokens;  // full text sequence incl. BOS prompt and EOS
  bool corrupted = false;
};

struct Dataset {
  std::vector<Scene> train_scenes;
  std::vector<TrainExampleTokens> train;  // caption + QA sequences
  std::vector<Scene> eval_scenes;
  std::vector<CaptionPair> pool;  // direction-extraction pairs
  ObjectCounts counts;            // mention counts over final train captions
  BiasSpec bias;
};

struct DatasetSpec {
  int n_scenes = 400;
  BiasSpec bias = BiasSpec::default_bias();
  std::uint64_t seed = 7;
  int pool_size = 50;
  int eval_size = 200;
  int qa_per_scene = 2;  // yes/no training questions per scene
};

/// Splits by scene index: [pool | eval | train], all seeds disjoint.
/// Train captions are bias-corrupted with probability p_bias.
Dataset build_dataset(const DatasetSpec& spec);

// Prompt builders shared by training data, generation and extraction.
std::vector<int> caption_prompt();                          // <bos> describe .
std::vector<int> question_prompt(const PopeQuestion& q);    // <bos> is there ... ?
std::vector<int> teacher_forced_sequence(std::span<const int> caption_tokens);

}  // namespace vti
