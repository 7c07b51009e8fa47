#include "vti/image.hpp"

#include <algorithm>

#include "vti/errors.hpp"

namespace vti {

Image Image::zeros(std::size_t h, std::size_t w) {
  Image img;
  img.height = h;
  img.width = w;
  img.data = Tensor({h, w, kChannels});
  return img;
}

Image Image::from_tensor(Tensor t) {
  if (t.rank() != 3 || t.dim(2) != kChannels) {
    throw ShapeError("image: tensor must be [H, W, 3]");
  }
  for (float& v : t.values()) v = std::clamp(v, 0.0f, 1.0f);
  Image img;
  img.height = t.dim(0);
  img.width = t.dim(1);
  img.data = std::move(t);
  return img;
}

}  // namespace vti
