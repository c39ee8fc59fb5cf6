#pragma once

#include <cstdint>
#include <vector>

#include "delnet/random.hpp"
#include "delnet/tensor.hpp"

namespace delnet {

/// He-uniform kernel init, bound sqrt(6 / fan_in).
Tensor he_uniform(Shape kernel_shape, CounterRng& rng);

/// Small convolutional encoder/decoder producing the shared feature map.
///
///   encode: conv3x3(3→C) → relu → conv3x3(C→C)
///   decode: image + conv3x3(C→3)   (global residual, no bias)
/// The decoder kernel is drawn He-uniform and scaled by this factor.
inline constexpr double kDecoderInitScale = 0.1;

class MiniBackbone {
 public:
  MiniBackbone() = default;
  MiniBackbone(std::size_t width, std::uint64_t seed);

  Tensor encode(const Tensor& image) const;
  Tensor decode(const Tensor& features, const Tensor& image) const;
  Tensor forward(const Tensor& image) const { return decode(encode(image), image); }

  std::size_t width() const { return width_; }

  /// Parameters in a fixed order: enc1_w, enc1_b, enc2_w, enc2_b, dec_w.
  std::vector<Tensor> parameters() const;
  void set_parameters(const std::vector<Tensor>& params);
  void set_trainable(bool trainable);
  /// Independent copy with gradients disabled.
  MiniBackbone frozen_copy() const;

 private:
  std::size_t width_ = 0;
  Tensor enc1_w_, enc1_b_, enc2_w_, enc2_b_, dec_w_;
};

}  // namespace delnet
