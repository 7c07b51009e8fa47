#include "vti/vocab.hpp"

#include <array>

#include "vti/errors.hpp"

namespace vti {

namespace {

constexpr std::array<std::string_view, 6> kColors = {"red",    "green",  "blue",
                                                     "yellow", "purple", "orange"};
constexpr std::array<std::string_view, 12> kShapes = {"square", "circle", "triangle", "diamond",
                                                      "star",   "cross",  "heart",    "ring",
                                                      "moon",   "arrow",  "bar",      "dot"};
constexpr std::array<std::string_view, 4> kCounts = {"one", "two", "three", "four"};

const std::array<std::string, tok::kVocabSize>& table() {
  static const std::array<std::string, tok::kVocabSize> t = [] {
    std::array<std::string, tok::kVocabSize> v;
    v[tok::kPad] = "<pad>";
    v[tok::kBos] = "<bos>";
    v[tok::kEos] = "<eos>";
    v[tok::kPeriod] = ".";
    v[tok::kQuestion] = "?";
    v[tok::kA] = "a";
    v[tok::kAnd] = "and";
    v[tok::kIs] = "is";
    v[tok::kThere] = "there";
    v[tok::kNothing] = "nothing";
    v[tok::kYes] = "yes";
    v[tok::kNo] = "no";
    v[tok::kDescribe] = "describe";
    for (int i = 0; i < tok::kNumColors; ++i) v[tok::kColor0 + i] = kColors[i];
    for (int i = 0; i < tok::kNumShapes; ++i) v[tok::kShape0 + i] = kShapes[i];
    for (int i = 0; i < tok::kNumCounts; ++i) v[tok::kCount0 + i] = kCounts[i];
    for (int i = tok::kCount0 + tok::kNumCounts; i < tok::kVocabSize; ++i) {
      v[i] = "<r" + std::to_string(i) + ">";
    }
    return v;
  }();
  return t;
}

}  // namespace

std::string_view token_text(int id) {
  if (id < 0 || id >= tok::kVocabSize) throw ValueError("token id out of range");
  return table()[id];
}

int token_id(std::string_view word) {
  const auto& t = table();
  for (int i = 0; i < tok::kVocabSize; ++i) {
    if (t[i] == word) return i;
  }
  return -1;
}

std::string detokenize(std::span<const int> tokens) {
  std::string out;
  for (int id : tokens) {
    if (!out.empty()) out += ' ';
    out += token_text(id);
  }
  return out;
}

std::vector<int> tokenize(std::string_view text) {
  std::vector<int> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && text[i] == ' ') ++i;
    std::size_t j = i;
    while (j < text.size() && text[j] != ' ') ++j;
    if (j > i) {
      const int id = token_id(text.substr(i, j - i));
      if (id < 0) throw ValueError("tokenize: unknown word '" + std::string(text.substr(i, j - i)) + "'");
      out.push_back(id);
    }
    i = j;
  }
  return out;
}

std::string_view color_name(int color) {
  if (color < 0 || color >= tok::kNumColors) throw ValueError("color id out of range");
  return kColors[color];
}

std::string_view shape_name(int shape) {
  if (shape < 0 || shape >= tok::kNumShapes) throw ValueError("shape id out of range");
  return kShapes[shape];
}

}  // namespace vti
