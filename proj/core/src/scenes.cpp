#include "vti/scenes.hpp"

#include <algorithm>
#include <cstdint>

#include "vti/errors.hpp"
#include "vti/rng.hpp"

namespace vti {

namespace {

// 8x8 glyph bitmaps, MSB = leftmost pixel. The square fills its cell.
constexpr std::array<std::array<std::uint8_t, 8>, 12> kGlyphs = {{
    {0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF, 0xFF},  // square
    {0x3C, 0x7E, 0xFF, 0xFF, 0xFF, 0xFF, 0x7E, 0x3C},  // circle
    {0x18, 0x18, 0x3C, 0x3C, 0x7E, 0x7E, 0xFF, 0xFF},  // triangle
    {0x18, 0x3C, 0x7E, 0xFF, 0xFF, 0x7E, 0x3C, 0x18},  // diamond
    {0x18, 0x18, 0xFF, 0x7E, 0x3C, 0x7E, 0x66, 0xC3},  // star
    {0x18, 0x18, 0x18, 0xFF, 0xFF, 0x18, 0x18, 0x18},  // cross
    {0x66, 0xFF, 0xFF, 0xFF, 0x7E, 0x3C, 0x18, 0x00},  // heart
    {0x3C, 0x7E, 0xE7, 0xC3, 0xC3, 0xE7, 0x7E, 0x3C},  // ring
    {0x3C, 0x78, 0xF0, 0xE0, 0xE0, 0xF0, 0x78, 0x3C},  // moon
    {0x18, 0x1C, 0xFE, 0xFF, 0xFE, 0x1C, 0x18, 0x00},  // arrow
    {0x00, 0x00, 0x00, 0xFF, 0xFF, 0x00, 0x00, 0x00},  // bar
    {0x00, 0x00, 0x3C, 0x3C, 0x3C, 0x3C, 0x00, 0x00},  // dot
}};

constexpr std::array<std::array<float, 3>, 6> kColorValues = {{
    {1.0f, 0.0f, 0.0f},  // red
    {0.0f, 1.0f, 0.0f},  // green
    {0.0f, 0.0f, 1.0f},  // blue
    {1.0f, 1.0f, 0.0f},  // yellow
    {0.5f, 0.0f, 1.0f},  // purple
    {1.0f, 0.5f, 0.0f},  // orange
}};

std::vector<ObjectId> absent_objects(const Scene& scene) {
  std::vector<ObjectId> out;
  out.reserve(ObjectCounts::kNumIds);
  for (int i = 0; i < ObjectCounts::kNumIds; ++i) {
    const ObjectId id = ObjectCounts::from_index(i);
    if (!scene.contains(id)) out.push_back(id);
  }
  return out;
}

/// Absent companions of present triggers, in co_pair order.
std::vector<ObjectId> bias_candidates(const Scene& scene, const BiasSpec& bias) {
  std::vector<ObjectId> out;
  for (const auto& pair : bias.co_pairs) {
    if (scene.contains(pair.trigger) && !scene.contains(pair.companion)) {
      out.push_back(pair.companion);
    }
  }
  return out;
}

void append_object_clause(std::vector<int>& tokens, ObjectId id) {
  tokens.push_back(tok::kA);
  tokens.push_back(tok::color_token(id.color));
  tokens.push_back(tok::shape_token(id.shape));
}

}  // namespace

bool Scene::contains(ObjectId id) const {
  return std::any_of(objects.begin(), objects.end(),
                     [&](const SceneObject& o) { return o.id == id; });
}

void Scene::validate() const {
  if (objects.size() > 4) throw ValueError("scene: at most 4 objects");
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const auto& o = objects[i];
    if (o.id.shape < 0 || o.id.shape >= tok::kNumShapes || o.id.color < 0 ||
        o.id.color >= tok::kNumColors) {
      throw ValueError("scene: shape/color id out of range");
    }
    if (o.cell_row < 0 || o.cell_row >= kGridCells || o.cell_col < 0 ||
        o.cell_col >= kGridCells) {
      throw ValueError("scene: cell out of range");
    }
    for (std::size_t j = i + 1; j < objects.size(); ++j) {
      if (objects[j].cell_row == o.cell_row && objects[j].cell_col == o.cell_col) {
        throw ValueError("scene: duplicate cell");
      }
      if (objects[j].id == o.id) throw ValueError("scene: duplicate object identity");
    }
  }
}

BiasSpec BiasSpec::default_bias() {
  // shape ids: 0 square, 1 circle, 2 triangle, 3 diamond, 4 star, 5 cross,
  //            6 heart, 7 ring, 8 moon, 9 arrow, 10 bar, 11 dot
  // color ids: 0 red, 1 green, 2 blue, 3 yellow, 4 purple, 5 orange
  BiasSpec b;
  b.co_pairs = {
      {{0, 0}, {1, 2}},   // red square -> blue circle
      {{2, 1}, {4, 3}},   // green triangle -> yellow star
      {{6, 2}, {7, 0}},   // blue heart -> red ring
      {{3, 3}, {5, 1}},   // yellow diamond -> green cross
      {{8, 4}, {9, 5}},   // purple moon -> orange arrow
      {{10, 5}, {11, 4}}  // orange bar -> purple dot
  };
  b.p_bias = 0.5;
  return b;
}

Scene random_scene(std::uint64_t seed) {
  Rng rng(seed);
  Scene scene;
  scene.seed = seed;
  const int n = 1 + static_cast<int>(rng.bounded(4));
  const auto cells = rng.sample_without_replacement(kGridCells * kGridCells, n);
  const auto ids = rng.sample_without_replacement(ObjectCounts::kNumIds, n);
  for (int i = 0; i < n; ++i) {
    SceneObject o;
    o.id = ObjectCounts::from_index(static_cast<int>(ids[i]));
    o.cell_row = static_cast<int>(cells[i]) / kGridCells;
    o.cell_col = static_cast<int>(cells[i]) % kGridCells;
    scene.objects.push_back(o);
  }
  scene.validate();
  return scene;
}

Image render_scene(const Scene& scene) {
  scene.validate();
  Image img = Image::zeros(kCanvasPixels, kCanvasPixels);
  for (const auto& o : scene.objects) {
    const auto& glyph = kGlyphs[o.id.shape];
    const auto& rgb = kColorValues[o.id.color];
    const std::size_t y0 = static_cast<std::size_t>(o.cell_row) * kCellPixels;
    const std::size_t x0 = static_cast<std::size_t>(o.cell_col) * kCellPixels;
    for (int y = 0; y < kCellPixels; ++y) {
      for (int x = 0; x < kCellPixels; ++x) {
        if ((glyph[y] >> (7 - x)) & 1u) {
          for (std::size_t c = 0; c < Image::kChannels; ++c) {
            img.at(y0 + y, x0 + x, c) = rgb[c];
          }
        }
      }
    }
  }
  return img;
}

std::vector<int> caption(const Scene& scene) {
  scene.validate();
  std::vector<SceneObject> ordered = scene.objects;
  std::sort(ordered.begin(), ordered.end(), [](const SceneObject& a, const SceneObject& b) {
    if (a.cell_row != b.cell_row) return a.cell_row < b.cell_row;
    return a.cell_col < b.cell_col;
  });
  std::vector<int> out;
  if (ordered.empty()) {
    out.push_back(tok::kNothing);
  } else {
    for (std::size_t i = 0; i < ordered.size(); ++i) {
      if (i > 0) out.push_back(tok::kAnd);
      append_object_clause(out, ordered[i].id);
    }
  }
  out.push_back(tok::kPeriod);
  return out;
}

std::vector<ObjectId> parse_objects(std::span<const int> tokens) {
  std::vector<ObjectId> out;
  for (std::size_t i = 0; i + 2 < tokens.size() + 0u; ++i) {
    if (tokens[i] == tok::kA && tok::is_color_token(tokens[i + 1]) &&
        tok::is_shape_token(tokens[i + 2])) {
      out.push_back(
          {tokens[i + 2] - tok::kShape0, tokens[i + 1] - tok::kColor0});
      i += 2;
    }
  }
  return out;
}

CaptionPair hallucinated_caption(const Scene& scene, const BiasSpec& bias, std::uint64_t seed) {
  CaptionPair pair;
  pair.scene = scene;
  pair.clean = caption(scene);

  Rng rng(seed);
  ObjectId injected;
  const auto candidates = bias_candidates(scene, bias);
  if (!candidates.empty()) {
    injected = candidates[rng.bounded(candidates.size())];
  } else {
    const auto absent = absent_objects(scene);
    if (absent.empty()) throw GenerationError("hallucinated_caption: no absent object available");
    injected = absent[rng.bounded(absent.size())];
  }

  pair.hallucinated = pair.clean;
  pair.hallucinated.pop_back();  // drop '.'
  if (!scene.objects.empty()) {
    pair.hallucinated.push_back(tok::kAnd);
  } else {
    pair.hallucinated.pop_back();  // drop 'nothing' too
  }
  append_object_clause(pair.hallucinated, injected);
  pair.hallucinated.push_back(tok::kPeriod);
  pair.injected_objects.push_back(injected);
  return pair;
}

std::string_view pope_mode_name(PopeMode mode) {
  switch (mode) {
    case PopeMode::Random: return "random";
    case PopeMode::Popular: return "popular";
    case PopeMode::Adversarial: return "adversarial";
  }
  throw ValueError("unknown pope mode");
}

std::vector<PopeQuestion> pope_questions(const Scene& scene, PopeMode mode, const BiasSpec& bias,
                                         int k, const ObjectCounts& corpus_counts,
                                         std::uint64_t seed) {
  if (k < 1) throw ValueError("pope_questions: k >= 1 required");
  Rng rng(seed);
  const int n_pos = (k + 1) / 2;
  const int n_neg = k / 2;

  const auto absent = absent_objects(scene);
  const auto adversarial = bias_candidates(scene, bias);

  std::vector<PopeQuestion> out;
  out.reserve(k);
  auto make_question = [](ObjectId id, bool yes, bool fallback) {
    PopeQuestion q;
    q.tokens = {tok::kIs, tok::kThere, tok::kA, tok::color_token(id.color),
                tok::shape_token(id.shape), tok::kQuestion};
    q.gold_yes = yes;
    q.fallback = fallback;
    return q;
  };

  int adv_cursor = 0;
  for (int i = 0; i < n_pos + n_neg; ++i) {
    const bool want_positive = (i % 2 == 0) ? (i / 2 < n_pos) : false;
    const bool positive = want_positive || (i % 2 == 1 && i / 2 >= n_neg);
    if (positive) {
      if (scene.objects.empty()) {
        // No positives exist; emit a random negative, flagged.
        out.push_back(make_question(absent[rng.bounded(absent.size())], false, true));
      } else {
        const auto& o = scene.objects[(i / 2) % scene.objects.size()];
        out.push_back(make_question(o.id, true, false));
      }
      continue;
    }
    switch (mode) {
      case PopeMode::Random:
        out.push_back(make_question(absent[rng.bounded(absent.size())], false, false));
        break;
      case PopeMode::Popular: {
        ObjectId best{};
        int best_count = -1;
        for (const ObjectId id : absent) {
          const int c = corpus_counts.count(id);
          if (c > best_count) {
            best_count = c;
            best = id;
          }
        }
        out.push_back(make_question(best, false, false));
        break;
      }
      case PopeMode::Adversarial:
        if (adversarial.empty()) {
          out.push_back(make_question(absent[rng.bounded(absent.size())], false, true));
        } else {
          out.push_back(make_question(adversarial[adv_cursor % adversarial.size()], false, false));
          ++adv_cursor;
        }
        break;
    }
  }
  return out;
}

std::vector<int> caption_prompt() { return {tok::kBos, tok::kDescribe, tok::kPeriod}; }

std::vector<int> question_prompt(const PopeQuestion& q) {
  std::vector<int> out{tok::kBos};
  out.insert(out.end(), q.tokens.begin(), q.tokens.end());
  return out;
}

std::vector<int> teacher_forced_sequence(std::span<const int> caption_tokens) {
  std::vector<int> out = caption_prompt();
  out.insert(out.end(), caption_tokens.begin(), caption_tokens.end());
  return out;
}

Dataset build_dataset(const DatasetSpec& spec) {
  if (spec.n_scenes < spec.pool_size + spec.eval_size) {
    throw ValueError("build_dataset: n_scenes must cover pool_size + eval_size");
  }
  if (spec.pool_size < 0 || spec.eval_size < 0 || spec.qa_per_scene < 0) {
    throw ValueError("build_dataset: negative split size");
  }
  if (!(spec.bias.p_bias >= 0.0 && spec.bias.p_bias <= 1.0)) {
    throw ValueError("build_dataset: p_bias must be in [0, 1]");
  }

  Dataset ds;
  ds.bias = spec.bias;

  std::vector<Scene> scenes;
  scenes.reserve(spec.n_scenes);
  for (int i = 0; i < spec.n_scenes; ++i) {
    scenes.push_back(random_scene(mix_seed(spec.seed, static_cast<std::uint64_t>(i))));
  }

  for (int i = 0; i < spec.pool_size; ++i) {
    ds.pool.push_back(
        hallucinated_caption(scenes[i], spec.bias, mix_seed(spec.seed ^ 0xB1A5ull, i)));
  }
  for (int i = spec.pool_size; i < spec.pool_size + spec.eval_size; ++i) {
    ds.eval_scenes.push_back(scenes[i]);
  }

  for (int i = spec.pool_size + spec.eval_size; i < spec.n_scenes; ++i) {
    const Scene& scene = scenes[i];
    ds.train_scenes.push_back(scene);
    Rng rng(mix_seed(spec.seed ^ 0xC0C0ull, i));

    TrainExampleTokens cap;
    cap.scene_seed = scene.seed;
    std::vector<int> text = caption(scene);
    if (!bias_candidates(scene, spec.bias).empty() && rng.uniform01() < spec.bias.p_bias) {
      text = hallucinated_caption(scene, spec.bias, rng.next_u64()).hallucinated;
      cap.corrupted = true;
    }
    for (const ObjectId id : parse_objects(text)) ds.counts.add(id);
    cap.tokens = teacher_forced_sequence(text);
    cap.tokens.push_back(tok::kEos);
    ds.train.push_back(std::move(cap));

    // Yes/no pairs teach the answering mode; adversarial "no" answers are
    // bias-corrupted so object co-occurrence leaks into QA as well.
    for (int qi = 0; qi < spec.qa_per_scene; ++qi) {
      TrainExampleTokens qa;
      qa.scene_seed = scene.seed;
      const bool positive = (qi % 2 == 0) && !scene.objects.empty();
      ObjectId asked;
      bool answer_yes;
      if (positive) {
        asked = scene.objects[rng.bounded(scene.objects.size())].id;
        answer_yes = true;
      } else {
        const auto adversarial = bias_candidates(scene, spec.bias);
        if (!adversarial.empty() && rng.uniform01() < 0.5) {
          asked = adversarial[rng.bounded(adversarial.size())];
          answer_yes = rng.uniform01() < spec.bias.p_bias;
          qa.corrupted = answer_yes;
        } else {
          const auto absent = absent_objects(scene);
          asked = absent[rng.bounded(absent.size())];
          answer_yes = false;
        }
      }
      qa.tokens = {tok::kBos,  tok::kIs,
                   tok::kThere, tok::kA,
                   tok::color_token(asked.color), tok::shape_token(asked.shape),
                   tok::kQuestion, answer_yes ? tok::kYes : tok::kNo,
                   tok::kPeriod, tok::kEos};
      ds.train.push_back(std::move(qa));
    }
  }
  return ds;
}

}  // namespace vti
