#include "delnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "delnet/error.hpp"

namespace delnet {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMatrix>;
using ConstMatMap = Eigen::Map<const RowMatrix>;

using BackwardFn = std::function<void(detail::Node&)>;

// Builds an interior node. The tape is only recorded when some parent
// requires grad.
Tensor make_result(const char* op, Shape shape, std::vector<double> data,
                   std::vector<std::shared_ptr<detail::Node>> parents, BackwardFn backward) {
  check_finite(data, op);
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool needs = std::any_of(parents.begin(), parents.end(),
                           [](const auto& p) { return p->requires_grad; });
  if (needs) {
    node->requires_grad = true;
    node->parents = std::move(parents);
    node->backward = std::move(backward);
  }
  return Tensor::from_node(std::move(node));
}


void accumulate(detail::Node& target, std::size_t i, double g) {
  if (target.requires_grad) {
    target.grad[i] += g;
  }
}

enum class Broadcast { None, LeftScalar, RightScalar };

Broadcast broadcast_kind(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() == b.shape()) return Broadcast::None;
  if (b.numel() == 1) return Broadcast::RightScalar;
  if (a.numel() == 1) return Broadcast::LeftScalar;
  throw ShapeError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                   shape_string(b.shape()));
}

// Shared driver for binary elementwise ops. `fwd(x, y)` gives the value,
// `dfdx(x, y)` and `dfdy(x, y)` the partial derivatives.
template <class F, class Dx, class Dy>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, F fwd, Dx dfdx, Dy dfdy) {
  auto kind = broadcast_kind(a, b, op);
  const Shape& out_shape = kind == Broadcast::LeftScalar ? b.shape() : a.shape();
  std::size_t n = shape_numel(out_shape);
  auto ad = a.data();
  auto bd = b.data();
  auto ia = [kind](std::size_t i) { return kind == Broadcast::LeftScalar ? 0 : i; };
  auto ib = [kind](std::size_t i) { return kind == Broadcast::RightScalar ? 0 : i; };
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = fwd(ad[ia(i)], bd[ib(i)]);
  }
  return make_result(op, out_shape, std::move(out), {a.node(), b.node()},
                     [kind, ia, ib, dfdx, dfdy](detail::Node& self) {
                       auto& pa = *self.parents[0];
                       auto& pb = *self.parents[1];
                       for (std::size_t i = 0; i < self.data.size(); ++i) {
                         double x = pa.data[ia(i)];
                         double y = pb.data[ib(i)];
                         accumulate(pa, ia(i), self.grad[i] * dfdx(x, y));
                         accumulate(pb, ib(i), self.grad[i] * dfdy(x, y));
                       }
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; }, [](double x, double y) { return -x / (y * y); });
}

Tensor scale(const Tensor& a, double factor) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] * factor;
  return make_result("scale", a.shape(), std::move(out), {a.node()},
                     [factor](detail::Node& self) {
                       auto& p = *self.parents[0];
                       for (std::size_t i = 0; i < self.grad.size(); ++i) {
                         p.grad[i] += self.grad[i] * factor;
                       }
                     });
}

Tensor add_scalar(const Tensor& a, double value) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] + value;
  return make_result("add_scalar", a.shape(), std::move(out), {a.node()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) p.grad[i] += self.grad[i];
  });
}

Tensor relu(const Tensor& a) {
  auto ad = a.data();
  std::vector<double> out(ad.size());
  for (std::size_t i = 0; i < ad.size(); ++i) out[i] = ad[i] > 0.0 ? ad[i] : 0.0;
  return make_result("relu", a.shape(), std::move(out), {a.node()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (p.data[i] > 0.0) p.grad[i] += self.grad[i];
    }
  });
}

Tensor abs_sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += std::abs(v);
  return make_result("abs_sum", {1}, {total}, {a.node()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    double g = self.grad[0];
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      double x = p.data[i];
      p.grad[i] += x > 0.0 ? g : (x < 0.0 ? -g : 0.0);
    }
  });
}

Tensor sum(const Tensor& a) {
  double total = 0.0;
  for (double v : a.data()) total += v;
  return make_result("sum", {1}, {total}, {a.node()}, [](detail::Node& self) {
    auto& p = *self.parents[0];
    for (auto& g : p.grad) g += self.grad[0];
  });
}

Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / static_cast<double>(a.numel())); }

Tensor l1_mean(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("l1_mean: shape mismatch " + shape_string(a.shape()) + " vs " +
                     shape_string(b.shape()));
  }
  return scale(abs_sum(sub(a, b)), 1.0 / static_cast<double>(a.numel()));
}

Tensor frobenius_norm(std::span<const Tensor> operands) {
  if (operands.empty()) {
    throw ShapeError("frobenius_norm: no operands");
  }
  double squares = 0.0;
  std::vector<std::shared_ptr<detail::Node>> parents;
  for (const auto& t : operands) {
    for (double v : t.data()) squares += v * v;
    parents.push_back(t.node());
  }
  double norm = std::sqrt(squares);
  return make_result("frobenius_norm", {1}, {norm}, std::move(parents),
                     [norm](detail::Node& self) {
                       if (norm == 0.0) return;
                       double g = self.grad[0] / norm;
                       for (auto& p : self.parents) {
                         if (!p->requires_grad) continue;
                         for (std::size_t i = 0; i < p->data.size(); ++i) {
                           p->grad[i] += g * p->data[i];
                         }
                       }
                     });
}

Tensor frobenius_norm(const Tensor& a) { return frobenius_norm(std::span<const Tensor>(&a, 1)); }

Tensor population_std(std::span<const Tensor> scalars) {
  if (scalars.empty()) {
    throw ShapeError("population_std: empty list");
  }
  std::vector<std::shared_ptr<detail::Node>> parents;
  double m = 0.0;
  for (const auto& s : scalars) {
    m += s.item();
    parents.push_back(s.node());
  }
  const double n = static_cast<double>(scalars.size());
  m /= n;
  double var = 0.0;
  for (const auto& s : scalars) {
    double d = s.item() - m;
    var += d * d;
  }
  var /= n;
  double sd = std::sqrt(var);
  return make_result("population_std", {1}, {sd}, std::move(parents),
                     [sd, m, n](detail::Node& self) {
                       if (sd == 0.0) return;
                       // d sd / d x_i = (x_i - mean) / (n sd)
                       for (auto& p : self.parents) {
                         if (p->requires_grad) {
                           p->grad[0] += self.grad[0] * (p->data[0] - m) / (n * sd);
                         }
                       }
                     });
}

namespace {

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, k, pad, ho, wo;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& kernel, const Tensor& bias,
                           Padding padding) {
  if (input.rank() != 4) {
    throw ShapeError("conv2d: input must be NCHW, got " + shape_string(input.shape()));
  }
  if (kernel.rank() != 4 || kernel.dim(2) != kernel.dim(3)) {
    throw ShapeError("conv2d: kernel must be OIkk, got " + shape_string(kernel.shape()));
  }
  ConvGeometry g{};
  g.n = input.dim(0);
  g.cin = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.cout = kernel.dim(0);
  g.k = kernel.dim(2);
  if (kernel.dim(1) != g.cin) {
    throw ShapeError("conv2d: input has " + std::to_string(g.cin) + " channels, kernel expects " +
                     std::to_string(kernel.dim(1)));
  }
  if (g.k != 1 && g.k != 3) {
    throw ShapeError("conv2d: kernel size must be 1 or 3, got " + std::to_string(g.k));
  }
  if (bias.defined() && (bias.rank() != 1 || bias.dim(0) != g.cout)) {
    throw ShapeError("conv2d: bias must have " + std::to_string(g.cout) + " elements");
  }
  g.pad = (padding == Padding::Same) ? g.k / 2 : 0;
  if (g.h + 2 * g.pad < g.k || g.w + 2 * g.pad < g.k) {
    throw ShapeError("conv2d: input " + shape_string(input.shape()) + " smaller than kernel");
  }
  g.ho = g.h + 2 * g.pad - g.k + 1;
  g.wo = g.w + 2 * g.pad - g.k + 1;
  return g;
}

// Unfolds one sample (Cin×H×W) into a (Cin·k·k)×(Ho·Wo) column matrix.
void im2col(const ConvGeometry& g, const double* src, double* col) {
  const std::size_t spatial = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        double* row = col + ((c * g.k + ky) * g.k + kx) * spatial;
        for (std::size_t y = 0; y < g.ho; ++y) {
          const long iy = static_cast<long>(y + ky) - static_cast<long>(g.pad);
          for (std::size_t x = 0; x < g.wo; ++x) {
            const long ix = static_cast<long>(x + kx) - static_cast<long>(g.pad);
            bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long>(g.h) &&
                          ix < static_cast<long>(g.w);
            row[y * g.wo + x] = inside ? src[(c * g.h + iy) * g.w + ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* dst) {
  const std::size_t spatial = g.ho * g.wo;
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t ky = 0; ky < g.k; ++ky) {
      for (std::size_t kx = 0; kx < g.k; ++kx) {
        const double* row = col + ((c * g.k + ky) * g.k + kx) * spatial;
        for (std::size_t y = 0; y < g.ho; ++y) {
          const long iy = static_cast<long>(y + ky) - static_cast<long>(g.pad);
          if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
          for (std::size_t x = 0; x < g.wo; ++x) {
            const long ix = static_cast<long>(x + kx) - static_cast<long>(g.pad);
            if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
            dst[(c * g.h + iy) * g.w + ix] += row[y * g.wo + x];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, Padding padding) {
  const ConvGeometry g = conv_geometry(input, kernel, bias, padding);
  check_finite(input.data(), "conv2d input");
  const std::size_t patch = g.cin * g.k * g.k;
  const std::size_t spatial = g.ho * g.wo;
  const std::size_t in_stride = g.cin * g.h * g.w;
  const std::size_t out_stride = g.cout * spatial;
  const bool direct = g.k == 1;

  std::vector<double> out(g.n * out_stride);
  std::vector<double> col(direct ? 0 : patch * spatial);
  ConstMatMap weights(kernel.data().data(), g.cout, patch);
  for (std::size_t s = 0; s < g.n; ++s) {
    const double* src = input.data().data() + s * in_stride;
    if (!direct) im2col(g, src, col.data());
    ConstMatMap cols(direct ? src : col.data(), patch, spatial);
    MatMap dst(out.data() + s * out_stride, g.cout, spatial);
    dst.noalias() = weights * cols;
    if (bias.defined()) {
      for (std::size_t o = 0; o < g.cout; ++o) dst.row(o).array() += bias.data()[o];
    }
  }

  std::vector<std::shared_ptr<detail::Node>> parents{input.node(), kernel.node()};
  if (bias.defined()) parents.push_back(bias.node());
  const bool has_bias = bias.defined();
  Shape out_shape{g.n, g.cout, g.ho, g.wo};
  return make_result(
      "conv2d", out_shape, std::move(out), std::move(parents),
      [g, patch, spatial, in_stride, out_stride, direct, has_bias](detail::Node& self) {
        auto& in = *self.parents[0];
        auto& ker = *self.parents[1];
        detail::Node* b = has_bias ? self.parents[2].get() : nullptr;
        ConstMatMap weights(ker.data.data(), g.cout, patch);
        std::vector<double> col(direct ? 0 : patch * spatial);
        std::vector<double> dcol(patch * spatial);
        for (std::size_t s = 0; s < g.n; ++s) {
          ConstMatMap dout(self.grad.data() + s * out_stride, g.cout, spatial);
          const double* src = in.data.data() + s * in_stride;
          if (ker.requires_grad) {
            if (!direct) im2col(g, src, col.data());
            ConstMatMap cols(direct ? src : col.data(), patch, spatial);
            MatMap dw(ker.grad.data(), g.cout, patch);
            dw.noalias() += dout * cols.transpose();
          }
          if (b && b->requires_grad) {
            for (std::size_t o = 0; o < g.cout; ++o) b->grad[o] += dout.row(o).sum();
          }
          if (in.requires_grad) {
            if (direct) {
              MatMap din(in.grad.data() + s * in_stride, patch, spatial);
              din.noalias() += weights.transpose() * dout;
            } else {
              MatMap dc(dcol.data(), patch, spatial);
              dc.noalias() = weights.transpose() * dout;
              col2im_add(g, dcol.data(), in.grad.data() + s * in_stride);
            }
          }
        }
      });
}

Tensor instance_norm(const Tensor& input, double eps) {
  if (input.rank() != 4) {
    throw ShapeError("instance_norm: input must be NCHW, got " + shape_string(input.shape()));
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t m = input.dim(2) * input.dim(3);
  auto x = input.data();
  std::vector<double> out(x.size());
  std::vector<double> inv_std(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = x.data() + p * m;
    double mu = 0.0;
    for (std::size_t i = 0; i < m; ++i) mu += src[i];
    mu /= static_cast<double>(m);
    double var = 0.0;
    for (std::size_t i = 0; i < m; ++i) var += (src[i] - mu) * (src[i] - mu);
    var /= static_cast<double>(m);
    inv_std[p] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < m; ++i) out[p * m + i] = (src[i] - mu) * inv_std[p];
  }
  return make_result("instance_norm", input.shape(), std::move(out), {input.node()},
                     [planes, m, inv_std = std::move(inv_std)](detail::Node& self) {
                       auto& in = *self.parents[0];
                       const double dm = static_cast<double>(m);
                       for (std::size_t p = 0; p < planes; ++p) {
                         const double* xhat = self.data.data() + p * m;
                         const double* dy = self.grad.data() + p * m;
                         double mean_dy = 0.0;
                         double mean_dy_xhat = 0.0;
                         for (std::size_t i = 0; i < m; ++i) {
                           mean_dy += dy[i];
                           mean_dy_xhat += dy[i] * xhat[i];
                         }
                         mean_dy /= dm;
                         mean_dy_xhat /= dm;
                         double* dx = in.grad.data() + p * m;
                         for (std::size_t i = 0; i < m; ++i) {
                           dx[i] += inv_std[p] * (dy[i] - mean_dy - xhat[i] * mean_dy_xhat);
                         }
                       }
                     });
}

Tensor global_avg_pool(const Tensor& input) {
  if (input.rank() != 4) {
    throw ShapeError("global_avg_pool: input must be NCHW, got " + shape_string(input.shape()));
  }
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t m = input.dim(2) * input.dim(3);
  auto x = input.data();
  std::vector<double> out(planes);
  for (std::size_t p = 0; p < planes; ++p) {
    double acc = 0.0;
    for (std::size_t i = 0; i < m; ++i) acc += x[p * m + i];
    out[p] = acc / static_cast<double>(m);
  }
  return make_result("global_avg_pool", {input.dim(0), input.dim(1)}, std::move(out),
                     {input.node()}, [planes, m](detail::Node& self) {
                       auto& in = *self.parents[0];
                       for (std::size_t p = 0; p < planes; ++p) {
                         double g = self.grad[p] / static_cast<double>(m);
                         for (std::size_t i = 0; i < m; ++i) in.grad[p * m + i] += g;
                       }
                     });
}

Tensor weighted_sum(std::span<const Tensor> operands, std::span<const double> weights) {
  if (operands.empty() || operands.size() != weights.size()) {
    throw ShapeError("weighted_sum: need one weight per operand");
  }
  const Shape& shape = operands[0].shape();
  std::vector<double> out(shape_numel(shape), 0.0);
  std::vector<std::shared_ptr<detail::Node>> parents;
  for (std::size_t k = 0; k < operands.size(); ++k) {
    if (operands[k].shape() != shape) {
      throw ShapeError("weighted_sum: operand " + std::to_string(k) + " has shape " +
                       shape_string(operands[k].shape()) + ", expected " + shape_string(shape));
    }
    auto d = operands[k].data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += weights[k] * d[i];
    parents.push_back(operands[k].node());
  }
  std::vector<double> w(weights.begin(), weights.end());
  return make_result("weighted_sum", shape, std::move(out), std::move(parents),
                     [w = std::move(w)](detail::Node& self) {
                       for (std::size_t k = 0; k < self.parents.size(); ++k) {
                         auto& p = *self.parents[k];
                         if (!p.requires_grad) continue;
                         for (std::size_t i = 0; i < self.grad.size(); ++i) {
                           p.grad[i] += w[k] * self.grad[i];
                         }
                       }
                     });
}

Tensor clamp_detached(const Tensor& a, double lo, double hi) {
  std::vector<double> out(a.data().begin(), a.data().end());
  for (auto& v : out) v = std::clamp(v, lo, hi);
  return Tensor::from_data(a.shape(), std::move(out));
}

}  // namespace delnet
