#include "vti/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "vti/errors.hpp"
#include "vti/rng.hpp"

namespace vti {

namespace {

// Symmetric reflection (edge duplicated): -1 -> 0, n -> n-1.
inline std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - i - 1;
  }
  return i;
}

std::vector<float> gaussian_kernel(double sigma) {
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> w(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    w[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += w[i + radius];
  }
  std::vector<float> out(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] = static_cast<float>(w[i] / total);
  return out;
}

// Separable convolution over one channel plane [H, W] with reflect padding.
void blur_plane(const float* src, float* dst, std::size_t h, std::size_t w,
                const std::vector<float>& kernel) {
  const int radius = static_cast<int>(kernel.size() / 2);
  std::vector<float> tmp(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k) {
        const std::ptrdiff_t xx = reflect(static_cast<std::ptrdiff_t>(x) + k,
                                          static_cast<std::ptrdiff_t>(w));
        acc += kernel[k + radius] * src[y * w + xx];
      }
      tmp[y * w + x] = acc;
    }
  }
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      float acc = 0.0f;
      for (int k = -radius; k <= radius; ++k) {
        const std::ptrdiff_t yy = reflect(static_cast<std::ptrdiff_t>(y) + k,
                                          static_cast<std::ptrdiff_t>(h));
        acc += kernel[k + radius] * tmp[yy * w + x];
      }
      dst[y * w + x] = acc;
    }
  }
}

void clamp_image(Image& img) {
  for (float& v : img.data.values()) v = std::clamp(v, 0.0f, 1.0f);
}

Image apply_patch_mask(const Image& image, const PerturbationSpec& spec) {
  const auto masks =
      make_mask_set(image.height, image.width, spec.mask_ratio, spec.patch_size, 1, spec.seed);
  Image out = image;
  const Tensor& mask = masks[0];
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t x = 0; x < image.width; ++x) {
      const float m = mask.at2(y, x);
      for (std::size_t c = 0; c < Image::kChannels; ++c) out.at(y, x, c) *= m;
    }
  }
  return out;
}

Image apply_noise(const Image& image, const PerturbationSpec& spec) {
  Image out = image;
  Rng rng(spec.seed);
  for (float& v : out.data.values()) {
    v += static_cast<float>(rng.normal() * spec.noise_sigma);
  }
  clamp_image(out);
  return out;
}

Image apply_blur(const Image& image, const PerturbationSpec& spec) {
  if (!(spec.blur_sigma > 0.0)) return image;
  const auto kernel = gaussian_kernel(spec.blur_sigma);
  Image out = image;
  const std::size_t h = image.height, w = image.width;
  std::vector<float> plane(h * w), blurred(h * w);
  for (std::size_t c = 0; c < Image::kChannels; ++c) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) plane[y * w + x] = image.at(y, x, c);
    blur_plane(plane.data(), blurred.data(), h, w, kernel);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(y, x, c) = blurred[y * w + x];
  }
  clamp_image(out);
  return out;
}

Image apply_brightness(const Image& image, const PerturbationSpec& spec) {
  Rng rng(spec.seed);
  const float delta =
      static_cast<float>(rng.uniform(-spec.brightness_delta, spec.brightness_delta));
  Image out = image;
  for (float& v : out.data.values()) v += delta;
  clamp_image(out);
  return out;
}

Image apply_elastic(const Image& image, const PerturbationSpec& spec) {
  const std::size_t h = image.height, w = image.width;
  Rng rng(spec.seed);
  std::vector<float> dx(h * w), dy(h * w);
  for (std::size_t i = 0; i < h * w; ++i) dx[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  for (std::size_t i = 0; i < h * w; ++i) dy[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  if (spec.elastic_sigma > 0.0) {
    const auto kernel = gaussian_kernel(spec.elastic_sigma);
    std::vector<float> tmp(h * w);
    blur_plane(dx.data(), tmp.data(), h, w, kernel);
    dx.swap(tmp);
    blur_plane(dy.data(), tmp.data(), h, w, kernel);
    dy.swap(tmp);
  }

  Image out = Image::zeros(h, w);
  const auto alpha = static_cast<float>(spec.elastic_alpha);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const float sx = std::clamp(static_cast<float>(x) + alpha * dx[y * w + x], 0.0f,
                                  static_cast<float>(w - 1));
      const float sy = std::clamp(static_cast<float>(y) + alpha * dy[y * w + x], 0.0f,
                                  static_cast<float>(h - 1));
      const auto x0 = static_cast<std::size_t>(sx);
      const auto y0 = static_cast<std::size_t>(sy);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const std::size_t y1 = std::min(y0 + 1, h - 1);
      const float fx = sx - static_cast<float>(x0);
      const float fy = sy - static_cast<float>(y0);
      for (std::size_t c = 0; c < Image::kChannels; ++c) {
        const float v00 = image.at(y0, x0, c), v01 = image.at(y0, x1, c);
        const float v10 = image.at(y1, x0, c), v11 = image.at(y1, x1, c);
        const float top = v00 + fx * (v01 - v00);
        const float bot = v10 + fx * (v11 - v10);
        out.at(y, x, c) = top + fy * (bot - top);
      }
    }
  }
  clamp_image(out);
  return out;
}

}  // namespace

std::string_view perturb_kind_name(PerturbKind kind) {
  switch (kind) {
    case PerturbKind::PatchMask: return "patch_mask";
    case PerturbKind::GaussianNoise: return "gaussian_noise";
    case PerturbKind::GaussianBlur: return "gaussian_blur";
    case PerturbKind::Brightness: return "brightness";
    case PerturbKind::Elastic: return "elastic";
  }
  throw SpecError("unknown perturbation kind");
}

PerturbKind perturb_kind_from_name(std::string_view name) {
  for (PerturbKind k : kAllPerturbKinds) {
    if (perturb_kind_name(k) == name) return k;
  }
  throw SpecError("unknown perturbation kind: " + std::string(name));
}

std::vector<Tensor> make_mask_set(std::size_t height, std::size_t width, double mask_ratio,
                                  int patch_size, int m, std::uint64_t seed) {
  if (!(mask_ratio > 0.0 && mask_ratio <= 1.0)) {
    throw SpecError("make_mask_set: mask_ratio must be in (0, 1]");
  }
  if (m < 1) throw SpecError("make_mask_set: need m >= 1");
  if (patch_size <= 0 || height % patch_size != 0 || width % patch_size != 0) {
    throw ShapeError("make_mask_set: patch_size must divide image dimensions");
  }
  const std::size_t py = height / patch_size;
  const std::size_t px = width / patch_size;
  const auto num_patches = static_cast<std::uint32_t>(py * px);
  const auto masked =
      static_cast<std::uint32_t>(std::lround(mask_ratio * static_cast<double>(num_patches)));

  Rng rng(seed);
  std::vector<Tensor> masks;
  masks.reserve(m);
  for (int i = 0; i < m; ++i) {
    Tensor mask({height, width});
    for (float& v : mask.values()) v = 1.0f;
    for (std::uint32_t p : rng.sample_without_replacement(num_patches, masked)) {
      const std::size_t row = (p / px) * patch_size;
      const std::size_t col = (p % px) * patch_size;
      for (std::size_t y = row; y < row + patch_size; ++y) {
        for (std::size_t x = col; x < col + patch_size; ++x) mask.at2(y, x) = 0.0f;
      }
    }
    masks.push_back(std::move(mask));
  }
  return masks;
}

Image perturb(const Image& image, const PerturbationSpec& spec) {
  switch (spec.kind) {
    case PerturbKind::PatchMask: return apply_patch_mask(image, spec);
    case PerturbKind::GaussianNoise:
      if (!(spec.noise_sigma >= 0.0)) throw SpecError("perturb: noise_sigma must be >= 0");
      if (spec.noise_sigma == 0.0) return image;
      return apply_noise(image, spec);
    case PerturbKind::GaussianBlur: return apply_blur(image, spec);
    case PerturbKind::Brightness: return apply_brightness(image, spec);
    case PerturbKind::Elastic: return apply_elastic(image, spec);
  }
  throw SpecError("perturb: unknown kind");
}

}  // namespace vti
