#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "isatcr/nn.hpp"
#include "isatcr/rng.hpp"

using namespace isatcr;

namespace {

Eigen::MatrixXd random_states(Rng& rng, int dim, int batch) {
  Eigen::MatrixXd s(dim, batch);
  for (int c = 0; c < batch; ++c)
    for (int r = 0; r < dim; ++r) s(r, c) = rng.uniform(-1.0, 1.0);
  return s;
}

// Central finite differences over every parameter of a small network.
double fd_check_max_rel_err(QNet& net, const Eigen::MatrixXd& states, const std::vector<int>& actions,
                            const Eigen::VectorXd& targets, double h) {
  QNet::Gradients grads;
  net.loss_and_gradients(states, actions, targets, &grads);
  auto pblocks = net.param_blocks();
  auto gblocks = grads.blocks(net.config().dueling);
  double worst = 0.0;
  for (std::size_t blk = 0; blk < pblocks.size(); ++blk) {
    auto [p, n] = pblocks[blk];
    auto [g, gn] = gblocks[blk];
    REQUIRE(n == gn);
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      const double saved = p[i];
      p[i] = saved + h;
      const double lp = net.loss_and_gradients(states, actions, targets, nullptr);
      p[i] = saved - h;
      const double lm = net.loss_and_gradients(states, actions, targets, nullptr);
      p[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double denom = std::max({std::abs(fd), std::abs(g[i]), 1e-3});
      worst = std::max(worst, std::abs(fd - g[i]) / denom);
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("dueling combination is exact on a hand-built case") {
  // V = 2, advantages [1,0,-1,0,0] (mean 0) -> Q = [3,2,1,2,2]
  Rng rng(1);
  NetConfig cfg;
  cfg.in_dim = 2;
  cfg.hidden_width = 2;
  cfg.hidden_layers = 1;
  cfg.actions = 5;
  QNet net(cfg, rng);
  // zero the hidden stack so the top activation is exactly the bias
  net.hidden_weights()[0].setZero();
  net.hidden_biases()[0] << 1.0, 0.0;  // top activation = (1, 0)
  net.value_weights().setConstant(0.0);
  net.value_weights()(0, 0) = 2.0;  // V = 2
  net.value_bias().setZero();
  net.advantage_weights().setZero();
  net.advantage_weights().col(0) << 1.0, 0.0, -1.0, 0.0, 0.0;
  net.advantage_bias().setZero();

  const Eigen::VectorXd q = net.q_values(Eigen::VectorXd::Zero(2));
  CHECK(q(0) == Catch::Approx(3.0));
  CHECK(q(1) == Catch::Approx(2.0));
  CHECK(q(2) == Catch::Approx(1.0));
  CHECK(q(3) == Catch::Approx(2.0));
  CHECK(q(4) == Catch::Approx(2.0));
}

TEST_CASE("equal advantages collapse to the value and constants cancel") {
  Rng rng(2);
  NetConfig cfg;
  cfg.in_dim = 6;
  cfg.hidden_width = 8;
  cfg.actions = 5;
  QNet net(cfg, rng);
  const Eigen::VectorXd s = random_states(rng, 6, 1).col(0);
  const Eigen::VectorXd q0 = net.q_values(s);

  // adding a constant to every advantage output leaves Q unchanged
  net.advantage_bias().array() += 3.7;
  const Eigen::VectorXd q1 = net.q_values(s);
  for (int a = 0; a < 5; ++a) CHECK(q1(a) == Catch::Approx(q0(a)).margin(1e-12));

  // advantages forced equal: Q equals V for every action
  net.advantage_weights().setZero();
  net.advantage_bias().setConstant(0.3);
  const Eigen::VectorXd q2 = net.q_values(s);
  for (int a = 1; a < 5; ++a) CHECK(q2(a) == Catch::Approx(q2(0)).margin(1e-12));
}

TEST_CASE("analytic gradients match central finite differences on a 64-8-8 toy net") {
  Rng rng(3);
  NetConfig cfg;
  cfg.in_dim = 64;
  cfg.hidden_width = 8;
  cfg.hidden_layers = 2;
  cfg.actions = 5;
  QNet net(cfg, rng);
  const int batch = 6;
  const Eigen::MatrixXd states = random_states(rng, 64, batch);
  std::vector<int> actions;
  Eigen::VectorXd targets(batch);
  for (int i = 0; i < batch; ++i) {
    actions.push_back(static_cast<int>(rng.uniform_int(5)));
    targets(i) = rng.uniform(-1.0, 1.0);
  }
  CHECK(fd_check_max_rel_err(net, states, actions, targets, 1e-4) < 1e-4);
}

TEST_CASE("gradient check also passes without the dueling head") {
  Rng rng(4);
  NetConfig cfg;
  cfg.in_dim = 12;
  cfg.hidden_width = 6;
  cfg.hidden_layers = 2;
  cfg.actions = 5;
  cfg.dueling = false;
  QNet net(cfg, rng);
  const int batch = 5;
  const Eigen::MatrixXd states = random_states(rng, 12, batch);
  std::vector<int> actions;
  Eigen::VectorXd targets(batch);
  for (int i = 0; i < batch; ++i) {
    actions.push_back(static_cast<int>(rng.uniform_int(5)));
    targets(i) = rng.uniform(-1.0, 1.0);
  }
  CHECK(fd_check_max_rel_err(net, states, actions, targets, 1e-4) < 1e-4);
}

TEST_CASE("zero residual gives zero loss and zero gradients") {
  Rng rng(5);
  NetConfig cfg;
  cfg.in_dim = 8;
  cfg.hidden_width = 4;
  QNet net(cfg, rng);
  const Eigen::MatrixXd states = random_states(rng, 8, 3);
  const Eigen::MatrixXd q = net.q_batch(states);
  std::vector<int> actions{0, 2, 4};
  Eigen::VectorXd targets(3);
  for (int i = 0; i < 3; ++i) targets(i) = q(actions[static_cast<std::size_t>(i)], i);
  QNet::Gradients grads;
  const double loss = net.loss_and_gradients(states, actions, targets, &grads);
  CHECK(loss == Catch::Approx(0.0).margin(1e-18));
  for (auto [g, n] : grads.blocks(true))
    for (std::ptrdiff_t i = 0; i < n; ++i) CHECK(g[i] == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("a single descent step reduces the residual on a one-sample batch") {
  Rng rng(6);
  NetConfig cfg;
  cfg.in_dim = 4;
  cfg.hidden_width = 4;
  QNet net(cfg, rng);
  Adam opt(1e-3);
  const Eigen::MatrixXd s = random_states(rng, 4, 1);
  const std::vector<int> actions{2};
  Eigen::VectorXd target(1);
  target(0) = net.q_values(s.col(0))(2) + 1.0;

  const double before = std::abs(net.q_values(s.col(0))(2) - target(0));
  QNet::Gradients grads;
  net.loss_and_gradients(s, actions, target, &grads);
  opt.step(net, grads);
  const double after = std::abs(net.q_values(s.col(0))(2) - target(0));
  CHECK(after < before);
}

TEST_CASE("target copy makes the networks identical until the next sync") {
  Rng rng(7);
  NetConfig cfg;
  cfg.in_dim = 8;
  cfg.hidden_width = 8;
  QNet online(cfg, rng), target(cfg, rng);
  target.copy_from(online);
  const Eigen::VectorXd s = random_states(rng, 8, 1).col(0);
  const Eigen::VectorXd qa = online.q_values(s);
  const Eigen::VectorXd qb = target.q_values(s);
  for (int a = 0; a < 5; ++a) CHECK(qa(a) == qb(a));

  // training the online net leaves the target untouched
  Adam opt(1e-2);
  QNet::Gradients grads;
  Eigen::VectorXd t1(1);
  t1(0) = 10.0;
  online.loss_and_gradients(s, {0}, t1, &grads);
  opt.step(online, grads);
  const Eigen::VectorXd qb2 = target.q_values(s);
  for (int a = 0; a < 5; ++a) CHECK(qb2(a) == qb(a));
  CHECK(online.q_values(s)(0) != qa(0));
}

TEST_CASE("adam follows the reference update on a quadratic") {
  // single parameter, constant gradient 1: after one step the parameter
  // moves by exactly -lr (bias-corrected moments cancel at t=1)
  Rng rng(8);
  NetConfig cfg;
  cfg.in_dim = 1;
  cfg.hidden_width = 1;
  cfg.hidden_layers = 1;
  cfg.actions = 1;
  cfg.dueling = false;
  QNet net(cfg, rng);
  auto blocks = net.param_blocks();
  std::vector<double> before;
  for (auto [p, n] : blocks)
    for (std::ptrdiff_t i = 0; i < n; ++i) before.push_back(p[i]);

  QNet::Gradients g;
  net.allocate_like(g);
  for (auto [p, n] : g.blocks(false))
    for (std::ptrdiff_t i = 0; i < n; ++i) p[i] = 1.0;
  Adam opt(0.05);
  opt.step(net, g);

  std::size_t k = 0;
  const double eps_shift = 0.05 * (1.0 / (1.0 + 1e-8));
  for (auto [p, n] : net.param_blocks())
    for (std::ptrdiff_t i = 0; i < n; ++i) {
      CHECK(p[i] == Catch::Approx(before[k] - eps_shift).margin(1e-9));
      ++k;
    }
}
