#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vti {

// Fixed word-level vocabulary of exactly 64 tokens. Captions and questions
// are built from these and parse back exactly, which keeps object
// extraction for the metrics a lookup rather than a matching problem.
namespace tok {
constexpr int kPad = 0;
constexpr int kBos = 1;
constexpr int kEos = 2;
constexpr int kPeriod = 3;
constexpr int kQuestion = 4;
constexpr int kA = 5;
constexpr int kAnd = 6;
constexpr int kIs = 7;
constexpr int kThere = 8;
constexpr int kNothing = 9;
constexpr int kYes = 10;
constexpr int kNo = 11;
constexpr int kDescribe = 12;
constexpr int kColor0 = 13;
constexpr int kNumColors = 6;
constexpr int kShape0 = 19;
constexpr int kNumShapes = 12;
constexpr int kCount0 = 31;
constexpr int kNumCounts = 4;
constexpr int kVocabSize = 64;

inline int color_token(int color) { return kColor0 + color; }
inline int shape_token(int shape) { return kShape0 + shape; }
inline bool is_color_token(int id) { return id >= kColor0 && id < kColor0 + kNumColors; }
inline bool is_shape_token(int id) { return id >= kShape0 && id < kShape0 + kNumShapes; }
}  // namespace tok

std::string_view token_text(int id);
/// Token id for a word, -1 if unknown.
int token_id(std::string_view word);

std::string detokenize(std::span<const int> tokens);
/// Whitespace-split tokenize; throws ValueError on unknown words.
std::vector<int> tokenize(std::string_view text);

std::string_view color_name(int color);
std::string_view shape_name(int shape);

}  // namespace vti
