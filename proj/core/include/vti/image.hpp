#pragma once

#include "vti/tensor.hpp"

namespace vti {

/// H x W x 3 raster with values in [0, 1]. from_tensor clamps into range.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  Tensor data;  // [H, W, 3]

  static Image zeros(std::size_t h, std::size_t w);
  static Image from_tensor(Tensor t);

  float at(std::size_t y, std::size_t x, std::size_t c) const { return data.at3(y, x, c); }
  float& at(std::size_t y, std::size_t x, std::size_t c) { return data.at3(y, x, c); }

  static constexpr std::size_t kChannels = 3;
};

}  // namespace vti
