#include <doctest.h>

#include <cmath>
#include <cstring>

#include "oodrl/checkpoint.hpp"
#include "oodrl/error.hpp"
#include "oodrl/nn.hpp"
#include "support/gradcheck.hpp"

using namespace oodrl;
using nn::Matrix;
using nn::Vector;

namespace {

nn::Network identity_net(std::size_t dim, nn::Stochastic st = {}) {
  auto spec = nn::NetworkSpec::mlp({dim, dim, dim}, nn::Activation::identity, {}, st);
  std::vector<Matrix> w = {Matrix::Identity(dim, dim), Matrix::Identity(dim, dim)};
  std::vector<Vector> b = {Vector::Zero(dim), Vector::Zero(dim)};
  return nn::Network(spec, w, b);
}

}  // namespace

TEST_CASE("init_network is deterministic and shape-consistent") {
  auto spec = nn::NetworkSpec::mlp({2, 1}, nn::Activation::relu);
  auto a = nn::init_network(spec, 7);
  auto b = nn::init_network(spec, 7);
  CHECK(a.weights()[0] == b.weights()[0]);
  CHECK(a.biases()[0] == b.biases()[0]);

  auto big = nn::init_network(nn::NetworkSpec::mlp({4, 64, 64, 2}, nn::Activation::relu), 1);
  REQUIRE(big.weights().size() == 3);
  CHECK(big.weights()[0].rows() == 64);
  CHECK(big.weights()[0].cols() == 4);
  CHECK(big.weights()[1].rows() == 64);
  CHECK(big.weights()[1].cols() == 64);
  CHECK(big.weights()[2].rows() == 2);
  CHECK(big.weights()[2].cols() == 64);
}

TEST_CASE("Glorot-uniform weights are centred and bounded") {
  // 1000 x 100 layer: 10^5 scalars drawn from U(-b, b).
  auto net = nn::init_network(nn::NetworkSpec::mlp({1000, 100}, nn::Activation::identity), 99);
  const Matrix& w = net.weights()[0];
  const double bound = std::sqrt(6.0 / 1100.0);
  CHECK(w.maxCoeff() <= bound);
  CHECK(w.minCoeff() >= -bound);
  const double n = static_cast<double>(w.size());
  const double std_err = bound / std::sqrt(3.0) / std::sqrt(n);
  CHECK(std::abs(w.mean()) < 3.0 * std_err);
}

TEST_CASE("invalid specs are rejected") {
  CHECK_THROWS_AS(nn::init_network(nn::NetworkSpec::mlp({3}, nn::Activation::relu), 0),
                  SpecError);
  CHECK_THROWS_AS(nn::init_network(nn::NetworkSpec::mlp({3, 2}, nn::Activation::relu, {},
                                                        nn::Stochastic::dropout(1.0)),
                                   0),
                  SpecError);
  CHECK_THROWS_AS(nn::init_network(nn::NetworkSpec::mlp({3, 2}, nn::Activation::relu,
                                                        nn::OutputActivation::tanh_scaled(0.0)),
                                   0),
                  SpecError);
}

TEST_CASE("forward: identity network and shape errors") {
  auto net = identity_net(2);
  std::vector<double> in = {1.0, 2.0};
  Vector out = nn::predict(net, in, nn::StochasticMode::deterministic());
  CHECK(out(0) == 1.0);
  CHECK(out(1) == 2.0);

  std::vector<double> bad = {1.0, 2.0, 3.0};
  CHECK_THROWS_AS(nn::predict(net, bad, nn::StochasticMode::deterministic()), ShapeError);
}

TEST_CASE("forward: rate 0 sampled equals deterministic; deterministic ignores the rate") {
  Rng rng(3);
  for (auto st : {nn::Stochastic::dropout(0.0), nn::Stochastic::dropconnect(0.0)}) {
    auto net = nn::init_network(nn::NetworkSpec::mlp({3, 8, 8, 2}, nn::Activation::tanh, {}, st), 5);
    Matrix x = Matrix::Random(3, 4);
    CHECK(nn::predict(net, x, nn::StochasticMode::sampled(rng)) ==
          nn::predict(net, x, nn::StochasticMode::deterministic()));
  }
  // Same weights, rate 0.4 vs rate 0: deterministic outputs are bit-identical.
  auto spec = nn::NetworkSpec::mlp({3, 8, 2}, nn::Activation::relu, {}, nn::Stochastic::dropout(0.4));
  auto with_rate = nn::init_network(spec, 11);
  auto spec0 = spec;
  spec0.stochastic = nn::Stochastic::dropout(0.0);
  nn::Network without(spec0, with_rate.weights(), with_rate.biases());
  Matrix x = Matrix::Random(3, 5);
  CHECK(nn::predict(with_rate, x, nn::StochasticMode::deterministic()) ==
        nn::predict(without, x, nn::StochasticMode::deterministic()));
}

TEST_CASE("inverted scaling preserves the expectation of linear networks") {
  const int samples = 100000;
  for (auto st : {nn::Stochastic::dropout(0.5), nn::Stochastic::dropconnect(0.5)}) {
    auto net = nn::init_network(
        nn::NetworkSpec::mlp({3, 6, 2}, nn::Activation::identity, {}, st), 21);
    std::vector<double> in = {0.7, -1.2, 0.4};
    const Vector det = nn::predict(net, in, nn::StochasticMode::deterministic());
    Rng rng(77);
    Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
    for (int k = 0; k < samples; ++k) {
      const Vector y = nn::predict(net, in, nn::StochasticMode::sampled(rng));
      sum += y;
      sq += y.cwiseProduct(y);
    }
    const Vector mean = sum / samples;
    for (int i = 0; i < 2; ++i) {
      const double var = (sq(i) - samples * mean(i) * mean(i)) / (samples - 1);
      const double se = std::sqrt(var / samples);
      CHECK(std::abs(mean(i) - det(i)) < 3.0 * se);
    }
  }
}

TEST_CASE("forward is deterministic for a fixed mask stream") {
  auto net = nn::init_network(nn::NetworkSpec::mlp({4, 16, 3}, nn::Activation::relu, {},
                                                   nn::Stochastic::dropconnect(0.3)),
                              8);
  Matrix x = Matrix::Random(4, 2);
  Rng r1(123), r2(123);
  CHECK(nn::predict(net, x, nn::StochasticMode::sampled(r1)) ==
        nn::predict(net, x, nn::StochasticMode::sampled(r2)));
}

TEST_CASE("backward matches central finite differences") {
  Rng rng(2024);
  int checked_specs = 0;
  for (std::size_t i = 0; i < 30; ++i) {
    auto spec = testing::random_small_spec(rng, i);
    auto net = nn::init_network(spec, 1000 + i);
    Matrix x;
    nn::MaskSet masks;
    if (!testing::draw_smooth_batch(net, nullptr, rng, 3, x, masks)) continue;
    auto fwd = nn::forward(net, x, nn::StochasticMode::frozen(masks));
    Matrix coeff = Matrix::Random(fwd.output.rows(), fwd.output.cols());
    auto grads = nn::backward(net, fwd.tape, coeff);
    auto rep = testing::finite_difference_check(net, x, masks, coeff, grads);
    CHECK(rep.max_rel_error < 1e-4);
    ++checked_specs;
  }
  CHECK(checked_specs >= 25);
}

TEST_CASE("backward analytic cases") {
  SUBCASE("zero output gradient gives zero gradients") {
    auto net = nn::init_network(nn::NetworkSpec::mlp({3, 5, 2}, nn::Activation::tanh), 4);
    Matrix x = Matrix::Random(3, 2);
    auto fwd = nn::forward(net, x, nn::StochasticMode::deterministic());
    auto g = nn::backward(net, fwd.tape, Matrix::Zero(2, 2));
    CHECK(g.global_norm() == 0.0);
    CHECK(g.input.isZero(0.0));
  }
  SUBCASE("single linear neuron: dL/dw = output_grad * x") {
    auto spec = nn::NetworkSpec::mlp({3, 1}, nn::Activation::identity);
    nn::Network net(spec, {Matrix::Constant(1, 3, 0.5)}, {Vector::Zero(1)});
    Matrix x(3, 1);
    x << 1.5, -2.0, 0.25;
    auto fwd = nn::forward(net, x, nn::StochasticMode::deterministic());
    Matrix g(1, 1);
    g << 0.8;
    auto grads = nn::backward(net, fwd.tape, g);
    for (int j = 0; j < 3; ++j) CHECK(grads.weights[0](0, j) == 0.8 * x(j, 0));
    CHECK(grads.biases[0](0) == 0.8);
  }
}

TEST_CASE("stale tapes are rejected") {
  auto net = nn::init_network(nn::NetworkSpec::mlp({2, 4, 1}, nn::Activation::relu), 1);
  Matrix x = Matrix::Random(2, 1);
  auto fwd = nn::forward(net, x, nn::StochasticMode::deterministic());
  net.weight(0)(0, 0) += 1.0;
  CHECK_THROWS_AS(nn::backward(net, fwd.tape, Matrix::Ones(1, 1)), UsageError);
  CHECK_THROWS_AS(nn::backward(net, nn::Tape{}, Matrix::Ones(1, 1)), UsageError);
}

TEST_CASE("adam_step") {
  auto spec = nn::NetworkSpec::mlp({3, 4, 2}, nn::Activation::relu);
  SUBCASE("zero gradients leave parameters unchanged") {
    auto net = nn::init_network(spec, 3);
    const auto before = net;
    auto state = nn::AdamState::for_network(net);
    CHECK(nn::adam_step(net, nn::Gradients::zeros_like(net), state, 1e-3) ==
          nn::StepOutcome::applied);
    for (std::size_t l = 0; l < 2; ++l) {
      CHECK(net.weights()[l] == before.weights()[l]);
      CHECK(net.biases()[l] == before.biases()[l]);
    }
  }
  SUBCASE("first step moves each parameter by about -lr * sign(g)") {
    auto net = nn::init_network(spec, 3);
    const auto before = net;
    auto state = nn::AdamState::for_network(net);
    auto g = nn::Gradients::zeros_like(net);
    Rng rng(5);
    for (auto& w : g.weights)
      for (Eigen::Index i = 0; i < w.size(); ++i) w(i) = rng.uniform(-2.0, 2.0);
    const double lr = 0.01;
    nn::adam_step(net, g, state, lr);
    for (std::size_t l = 0; l < 2; ++l)
      for (Eigen::Index i = 0; i < g.weights[l].size(); ++i) {
        const double gi = g.weights[l](i);
        const double delta = net.weights()[l](i) - before.weights()[l](i);
        // Hand-evaluated t=1 recurrence: m_hat = g, v_hat = g^2.
        CHECK(delta == doctest::Approx(-lr * gi / (std::abs(gi) + 1e-8)).epsilon(1e-9));
        CHECK(std::abs(delta + lr * (gi > 0 ? 1 : -1)) < 1e-9);
      }
  }
  SUBCASE("identical nets and grads give identical results") {
    auto a = nn::init_network(spec, 9);
    auto b = nn::init_network(spec, 9);
    auto sa = nn::AdamState::for_network(a), sb = nn::AdamState::for_network(b);
    auto g = nn::Gradients::zeros_like(a);
    g.weights[1].setConstant(0.3);
    nn::adam_step(a, g, sa, 1e-3);
    nn::adam_step(b, g, sb, 1e-3);
    CHECK(a.weights()[1] == b.weights()[1]);
  }
  SUBCASE("non-finite gradients are reported and skipped") {
    auto net = nn::init_network(spec, 3);
    const auto before = net;
    auto state = nn::AdamState::for_network(net);
    auto g = nn::Gradients::zeros_like(net);
    g.weights[0](0, 0) = std::nan("");
    CHECK(nn::adam_step(net, g, state, 1e-3) == nn::StepOutcome::skipped_nonfinite);
    CHECK(state.t == 0);
    CHECK(net.weights()[0] == before.weights()[0]);
  }
}

TEST_CASE("clip_global_norm caps the norm") {
  auto net = nn::init_network(nn::NetworkSpec::mlp({2, 2}, nn::Activation::identity), 0);
  auto g = nn::Gradients::zeros_like(net);
  g.weights[0].setConstant(10.0);
  const double before = nn::clip_global_norm(g, 10.0);
  CHECK(before == doctest::Approx(20.0));
  CHECK(g.global_norm() == doctest::Approx(10.0));
}

TEST_CASE("clones are value-independent") {
  auto net = nn::init_network(nn::NetworkSpec::mlp({3, 4, 2}, nn::Activation::relu), 12);
  auto copy = nn::clone(net);
  Matrix x = Matrix::Random(3, 2);
  CHECK(nn::predict(copy, x, nn::StochasticMode::deterministic()) ==
        nn::predict(net, x, nn::StochasticMode::deterministic()));
  CHECK(copy.spec() == net.spec());
  const Matrix original = net.weights()[0];
  copy.weight(0).setZero();
  CHECK(net.weights()[0] == original);
}

TEST_CASE("soft_update endpoints") {
  auto spec = nn::NetworkSpec::mlp({3, 4, 1}, nn::Activation::relu);
  auto online = nn::init_network(spec, 1);
  auto target = nn::init_network(spec, 2);
  const auto original = target;
  nn::soft_update(target, online, 0.0);
  CHECK(target.weights()[0] == original.weights()[0]);
  nn::soft_update(target, online, 1.0);
  CHECK(target.weights()[0] == online.weights()[0]);
  CHECK(target.biases()[1] == online.biases()[1]);
}

TEST_CASE("checkpoint byte layout and round trip") {
  auto spec = nn::NetworkSpec::mlp({3, 4, 2}, nn::Activation::tanh,
                                   nn::OutputActivation::tanh_scaled(2.0),
                                   nn::Stochastic::dropconnect(0.2));
  auto net = nn::init_network(spec, 17);
  auto ckpt = make_checkpoint(net, 17, {{"algorithm", "ddpg"}});
  const std::string bytes = encode_checkpoint(ckpt);
  REQUIRE(bytes.size() > 12);
  CHECK(bytes.substr(0, 4) == "ORLB");
  CHECK(static_cast<unsigned char>(bytes[4]) == 1);
  CHECK(bytes[5] == 0);
  const std::uint32_t header_len = static_cast<unsigned char>(bytes[8]) |
                                   (static_cast<unsigned char>(bytes[9]) << 8) |
                                   (static_cast<unsigned char>(bytes[10]) << 16) |
                                   (static_cast<unsigned char>(bytes[11]) << 24);
  const auto header = nlohmann::json::parse(bytes.substr(12, header_len));
  CHECK(header.at("seed") == 17);
  CHECK(header.at("training").at("algorithm") == "ddpg");
  CHECK(bytes.size() == 12 + header_len + 4 * net.parameter_count());

  // First payload float is W0(0,0) as little-endian float32.
  float first;
  std::memcpy(&first, bytes.data() + 12 + header_len, 4);
  CHECK(first == static_cast<float>(net.weights()[0](0, 0)));

  auto back = decode_checkpoint(bytes);
  CHECK(back.network.spec() == spec);
  CHECK(back.network.weights()[1] == ckpt.network.weights()[1]);
  CHECK(encode_checkpoint(back) == bytes);

  CHECK_THROWS_AS(decode_checkpoint("XXXX" + bytes.substr(4)), DataError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 1)), DataError);
}
