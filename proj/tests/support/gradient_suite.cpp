#include <array>

#include "delnet/backbone.hpp"
#include "delnet/experts.hpp"
#include "delnet/losses.hpp"
#include "delnet/ops.hpp"
#include "gradcheck.hpp"

namespace delnet::testing {

namespace {

struct Case {
  std::string name;
  // Draws fresh inputs for one instance and returns the function under test.
  std::function<std::pair<ScalarFn, std::vector<Tensor>>(CounterRng&)> make;
};

// Fixed random linear functional, so vector-valued ops reduce to a scalar
// whose gradient is sensitive to every output entry.
ScalarFn projected(std::function<Tensor(const std::vector<Tensor>&)> op, Shape out_shape,
                   CounterRng& rng) {
  Tensor w = random_tensor(std::move(out_shape), rng, -1.0, 1.0, 0.0, false);
  return [op = std::move(op), w](const std::vector<Tensor>& in) { return sum(mul(op(in), w)); };
}

std::vector<Tensor> params_as_inputs(const std::vector<Tensor>& params, CounterRng& rng,
                                     double spread) {
  std::vector<Tensor> out;
  for (const auto& p : params) out.push_back(random_tensor(p.shape(), rng, -spread, spread));
  return out;
}

Adapter adapter_from(const std::vector<Tensor>& in, std::size_t offset) {
  Adapter a;
  a.set_parameters({in[offset], in[offset + 1], in[offset + 2], in[offset + 3]});
  return a;
}

std::vector<Case> suite() {
  std::vector<Case> cases;
  auto unary = [&](std::string name, auto op, Shape shape, double margin = 0.0) {
    cases.push_back({name, [op, shape, margin](CounterRng& rng) {
                       std::vector<Tensor> in{random_tensor(shape, rng, -1.0, 1.0, margin)};
                       return std::pair{projected([op](auto& v) { return op(v[0]); }, shape, rng), in};
                     }});
  };
  auto binary = [&](std::string name, auto op, Shape shape, double lo_b = -1.0, double hi_b = 1.0) {
    cases.push_back({name, [op, shape, lo_b, hi_b](CounterRng& rng) {
                       std::vector<Tensor> in{random_tensor(shape, rng),
                                              random_tensor(shape, rng, lo_b, hi_b)};
                       return std::pair{
                           projected([op](auto& v) { return op(v[0], v[1]); }, shape, rng), in};
                     }});
  };
  auto scalar_out = [&](std::string name, auto op, Shape shape, double margin = 0.0) {
    cases.push_back({name, [op, shape, margin](CounterRng& rng) {
                       std::vector<Tensor> in{random_tensor(shape, rng, -1.0, 1.0, margin)};
                       return std::pair{ScalarFn([op](auto& v) { return op(v[0]); }), in};
                     }});
  };

  binary("add", [](auto& a, auto& b) { return add(a, b); }, {2, 3});
  binary("sub", [](auto& a, auto& b) { return sub(a, b); }, {2, 3});
  binary("mul", [](auto& a, auto& b) { return mul(a, b); }, {2, 3});
  binary("div", [](auto& a, auto& b) { return div(a, b); }, {2, 3}, 0.5, 1.5);
  cases.push_back({"add_broadcast", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({2, 3}, rng), random_tensor({1}, rng)};
                     return std::pair{projected([](auto& v) { return add(v[0], v[1]); }, {2, 3}, rng), in};
                   }});
  unary("scale", [](auto& a) { return scale(a, 1.7); }, {5});
  unary("add_scalar", [](auto& a) { return add_scalar(a, -0.3); }, {5});
  unary("relu", [](auto& a) { return relu(a); }, {3, 4}, 1e-3);
  scalar_out("abs_sum", [](auto& a) { return abs_sum(a); }, {3, 4}, 1e-3);
  scalar_out("sum", [](auto& a) { return sum(a); }, {3, 4});
  scalar_out("mean", [](auto& a) { return mean(a); }, {3, 4});
  scalar_out("frobenius_norm", [](auto& a) { return frobenius_norm(a); }, {2, 2, 3});
  cases.push_back({"l1_mean", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({2, 5}, rng), random_tensor({2, 5}, rng)};
                     return std::pair{ScalarFn([](auto& v) { return l1_mean(v[0], v[1]); }), in};
                   }});
  cases.push_back({"frobenius_norm_joint", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({2, 3}, rng), random_tensor({4}, rng)};
                     return std::pair{ScalarFn([](auto& v) { return frobenius_norm(std::span(v)); }), in};
                   }});
  cases.push_back({"population_std", [](CounterRng& rng) {
                     std::vector<Tensor> in;
                     for (int i = 0; i < 4; ++i) in.push_back(random_tensor({1}, rng));
                     return std::pair{ScalarFn([](auto& v) { return population_std(std::span(v)); }), in};
                   }});
  cases.push_back({"conv2d_3x3_same", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({1, 4, 8, 8}, rng),
                                            random_tensor({8, 4, 3, 3}, rng),
                                            random_tensor({8}, rng)};
                     return std::pair{projected([](auto& v) {
                                        return conv2d(v[0], v[1], v[2], Padding::Same);
                                      }, {1, 8, 8, 8}, rng), in};
                   }});
  cases.push_back({"conv2d_3x3_valid", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({2, 3, 6, 6}, rng),
                                            random_tensor({5, 3, 3, 3}, rng)};
                     return std::pair{projected([](auto& v) {
                                        return conv2d(v[0], v[1], Tensor{}, Padding::Valid);
                                      }, {2, 5, 4, 4}, rng), in};
                   }});
  cases.push_back({"conv2d_1x1", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({2, 4, 5, 5}, rng),
                                            random_tensor({3, 4, 1, 1}, rng),
                                            random_tensor({3}, rng)};
                     return std::pair{projected([](auto& v) {
                                        return conv2d(v[0], v[1], v[2], Padding::Same);
                                      }, {2, 3, 5, 5}, rng), in};
                   }});
  unary("instance_norm", [](auto& a) { return instance_norm(a); }, {2, 3, 4, 4});
  cases.push_back({"global_avg_pool", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({2, 3, 4, 4}, rng)};
                     return std::pair{projected([](auto& v) { return global_avg_pool(v[0]); }, {2, 3}, rng), in};
                   }});
  cases.push_back({"weighted_sum", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({2, 3}, rng), random_tensor({2, 3}, rng),
                                            random_tensor({2, 3}, rng)};
                     return std::pair{projected([](auto& v) {
                                        const std::array<double, 3> w{0.2, 0.5, 0.3};
                                        return weighted_sum(std::span(v), w);
                                      }, {2, 3}, rng), in};
                   }});

  cases.push_back({"encode_decode", [](CounterRng& rng) {
                     const MiniBackbone init(4, rng.next_u64());
                     std::vector<Tensor> in{random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0)};
                     for (auto& p : params_as_inputs(init.parameters(), rng, 0.5)) in.push_back(p);
                     return std::pair{projected([](auto& v) {
                                        MiniBackbone bb(4, 0);
                                        bb.set_parameters({v[1], v[2], v[3], v[4], v[5]});
                                        return bb.decode(bb.encode(v[0]), v[0]);
                                      }, {1, 3, 6, 6}, rng), in};
                   }});
  cases.push_back({"adapter", [](CounterRng& rng) {
                     CounterRng init_rng(rng.next_u64(), 1);
                     const Adapter init(8, 4, init_rng);
                     std::vector<Tensor> in{random_tensor({1, 8, 5, 5}, rng)};
                     for (auto& p : params_as_inputs(init.parameters(), rng, 0.5)) in.push_back(p);
                     return std::pair{projected([](auto& v) {
                                        return adapter_from(v, 1).forward(v[0]);
                                      }, {1, 8, 5, 5}, rng), in};
                   }});

  cases.push_back({"reconstruction_loss", [](CounterRng& rng) {
                     std::vector<Tensor> in{random_tensor({1, 3, 4, 4}, rng, 0.0, 1.0),
                                            random_tensor({1, 3, 4, 4}, rng, 0.0, 1.0, 0.0, false)};
                     return std::pair{ScalarFn([](auto& v) { return reconstruction_loss(v[0], v[1]); }), in};
                   }});
  cases.push_back({"contrast_loss", [](CounterRng& rng) {
                     auto phi = std::make_shared<MiniBackbone>(4, rng.next_u64());
                     std::vector<Tensor> in{
                         random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0),
                         random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0, 0.0, false),
                         random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0, 0.0, false)};
                     return std::pair{ScalarFn([phi](auto& v) {
                                        return contrast_loss(v[0], v[1], v[2], phi->frozen_copy());
                                      }), in};
                   }});
  cases.push_back({"distillation_loss", [](CounterRng& rng) {
                     auto phi = std::make_shared<MiniBackbone>(4, rng.next_u64());
                     std::vector<Tensor> in{
                         random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0),
                         random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0, 0.0, false),
                         random_tensor({1, 3, 6, 6}, rng, 0.0, 1.0, 0.0, false)};
                     return std::pair{ScalarFn([phi](auto& v) {
                                        return distillation_loss(v[0], v[1], v[2], phi->frozen_copy(), 0.1);
                                      }), in};
                   }});
  cases.push_back({"projection_loss", [](CounterRng& rng) {
                     const Projector init(8, rng.next_u64());
                     std::vector<Tensor> in{random_tensor({2, 8, 4, 4}, rng, -1.0, 1.0, 0.0, false),
                                            random_tensor({2, 8, 4, 4}, rng)};
                     // The teacher path reuses these weights behind a stop-gradient.
                     for (auto& p : params_as_inputs(init.parameters(), rng, 0.5)) {
                       in.push_back(p.detach());
                     }
                     return std::pair{ScalarFn([](auto& v) {
                                        Projector proj(8, 0);
                                        proj.set_parameters({v[2], v[3], v[4], v[5]});
                                        return projection_loss(v[0], v[1], proj);
                                      }), in};
                   }});
  cases.push_back({"adapter_regularization", [](CounterRng& rng) {
                     CounterRng init_rng(rng.next_u64(), 2);
                     const Adapter init(8, 4, init_rng);
                     std::vector<Tensor> in;
                     for (int k = 0; k < 2; ++k) {
                       for (auto& p : params_as_inputs(init.parameters(), rng, 0.5)) in.push_back(p);
                     }
                     return std::pair{ScalarFn([](auto& v) {
                                        const Adapter a = adapter_from(v, 0), b = adapter_from(v, 4);
                                        const std::array<const Adapter*, 2> both{&a, &b};
                                        return adapter_regularization(both);
                                      }), in};
                   }});
  cases.push_back({"diversity_loss", [](CounterRng& rng) {
                     std::vector<Tensor> in;
                     for (int i = 0; i < 3; ++i) in.push_back(random_tensor({1}, rng, 0.0, 1.0));
                     return std::pair{ScalarFn([](auto& v) { return diversity_loss(std::span(v)); }), in};
                   }});
  cases.push_back({"total_loss", [](CounterRng& rng) {
                     std::vector<Tensor> in;
                     for (int i = 0; i < 6; ++i) in.push_back(random_tensor({1}, rng, 0.0, 1.0));
                     return std::pair{ScalarFn([](auto& v) {
                                        LossParts parts{v[0], v[1], v[2], v[3], v[4], v[5]};
                                        return total_loss(parts, LossToggles{}, LossWeights{}, 37, 100).value;
                                      }), in};
                   }});
  return cases;
}

}  // namespace

std::vector<SuiteRow> run_gradient_suite(std::size_t instances, std::uint64_t seed) {
  std::vector<SuiteRow> rows;
  std::uint64_t key = 0;
  for (const auto& c : suite()) {
    CounterRng rng(seed, stream_key(++key));
    SuiteRow row{c.name, instances, 0.0};
    for (std::size_t i = 0; i < instances; ++i) {
      auto [fn, inputs] = c.make(rng);
      row.max_error = std::max(row.max_error, gradcheck(fn, inputs).max_error);
    }
    rows.push_back(row);
  }
  return rows;
}

}  // namespace delnet::testing
