#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "vti/image.hpp"

namespace vti {

enum class PerturbKind { PatchMask, GaussianNoise, GaussianBlur, Brightness, Elastic };

constexpr std::array<PerturbKind, 5> kAllPerturbKinds = {
    PerturbKind::PatchMask, PerturbKind::GaussianNoise, PerturbKind::GaussianBlur,
    PerturbKind::Brightness, PerturbKind::Elastic};

std::string_view perturb_kind_name(PerturbKind kind);
PerturbKind perturb_kind_from_name(std::string_view name);

/// One corruption draw. The seed fully determines the realized corruption.
struct PerturbationSpec {
  PerturbKind kind = PerturbKind::GaussianNoise;
  double mask_ratio = 0.99;       // patch_mask, (0, 1]
  int patch_size = 4;             // patch_mask, must divide image dims
  double noise_sigma = 0.1;       // gaussian_noise
  double blur_sigma = 1.0;        // gaussian_blur
  double brightness_delta = 0.2;  // brightness, delta drawn from [-b, +b]
  double elastic_alpha = 8.0;     // elastic, displacement scale in pixels
  double elastic_sigma = 4.0;     // elastic, field smoothing
  std::uint64_t seed = 0;

  static PerturbationSpec make(PerturbKind kind, std::uint64_t seed) {
    PerturbationSpec s;
    s.kind = kind;
    s.seed = seed;
    return s;
  }
};

/// m binary pixel masks [H, W], each zeroing exactly
/// round(mask_ratio * num_patches) patches drawn without replacement from
/// one seed-derived stream. patch_size must divide both image dims.
std::vector<Tensor> make_mask_set(std::size_t height, std::size_t width, double mask_ratio,
                                  int patch_size, int m, std::uint64_t seed);

/// Apply the corruption described by spec. Deterministic in (image, spec);
/// output values are clamped to [0, 1].
Image perturb(const Image& image, const PerturbationSpec& spec);

}  // namespace vti
