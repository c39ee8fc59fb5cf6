#include "delnet/backbone.hpp"

#include <cmath>

#include "delnet/error.hpp"
#include "delnet/ops.hpp"

namespace delnet {

Tensor he_uniform(Shape kernel_shape, CounterRng& rng) {
  const std::size_t fan_in = kernel_shape.at(1) * kernel_shape.at(2) * kernel_shape.at(3);
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> data(shape_numel(kernel_shape));
  for (auto& v : data) v = rng.uniform(-bound, bound);
  return Tensor::from_data(std::move(kernel_shape), std::move(data), true);
}

MiniBackbone::MiniBackbone(std::size_t width, std::uint64_t seed) : width_(width) {
  if (width == 0) {
    throw ConfigError("backbone width must be positive");
  }
  CounterRng rng(seed, stream_key(0xb4c6b0e5ull));
  enc1_w_ = he_uniform({width, 3, 3, 3}, rng);
  enc1_b_ = Tensor::zeros({width}, true);
  enc2_w_ = he_uniform({width, width, 3, 3}, rng);
  enc2_b_ = Tensor::zeros({width}, true);
  dec_w_ = he_uniform({3, width, 3, 3}, rng);
  for (auto& v : dec_w_.mutable_data()) v *= kDecoderInitScale;
}

Tensor MiniBackbone::encode(const Tensor& image) const {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw ShapeError("encode expects N x 3 x H x W, got " + shape_string(image.shape()));
  }
  Tensor h = relu(conv2d(image, enc1_w_, enc1_b_, Padding::Same));
  return conv2d(h, enc2_w_, enc2_b_, Padding::Same);
}

Tensor MiniBackbone::decode(const Tensor& features, const Tensor& image) const {
  if (features.rank() != 4 || image.rank() != 4 || features.dim(0) != image.dim(0) ||
      features.dim(2) != image.dim(2) || features.dim(3) != image.dim(3) ||
      features.dim(1) != width_ || image.dim(1) != 3) {
    throw ShapeError("decode: features " + shape_string(features.shape()) +
                     " inconsistent with image " + shape_string(image.shape()));
  }
  return add(image, conv2d(features, dec_w_, Tensor{}, Padding::Same));
}

std::vector<Tensor> MiniBackbone::parameters() const {
  return {enc1_w_, enc1_b_, enc2_w_, enc2_b_, dec_w_};
}

void MiniBackbone::set_parameters(const std::vector<Tensor>& params) {
  if (params.size() != 5) {
    throw ShapeError("backbone expects 5 parameter tensors");
  }
  const auto current = parameters();
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].shape() != current[i].shape()) {
      throw ShapeError("backbone parameter " + std::to_string(i) + " has shape " +
                       shape_string(params[i].shape()) + ", expected " +
                       shape_string(current[i].shape()));
    }
  }
  enc1_w_ = params[0];
  enc1_b_ = params[1];
  enc2_w_ = params[2];
  enc2_b_ = params[3];
  dec_w_ = params[4];
}

void MiniBackbone::set_trainable(bool trainable) {
  for (auto& p : {&enc1_w_, &enc1_b_, &enc2_w_, &enc2_b_, &dec_w_}) {
    if (p->requires_grad() != trainable) p->set_requires_grad(trainable);
  }
}

MiniBackbone MiniBackbone::frozen_copy() const {
  MiniBackbone copy = *this;
  std::vector<Tensor> params;
  for (const auto& p : parameters()) params.push_back(p.detach());
  copy.set_parameters(params);
  return copy;
}

}  // namespace delnet
