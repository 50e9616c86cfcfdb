#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include "isatcr/rng.hpp"

namespace isatcr {

struct NetConfig {
  int in_dim = 64;
  int hidden_width = 256;
  int hidden_layers = 2;
  int actions = 5;
  bool dueling = true;
  double leaky_slope = 0.01;  // negative-input slope magnitude

  bool operator==(const NetConfig&) const = default;
};

// Dense feedforward Q-network with an optional dueling value/advantage head
// pair. The dueling combination is exact:
//   Q(s,a) = V(s) + A(s,a) - mean_a' A(s,a')
// Forward and backward passes are hand-written; Eigen supplies the products.
class QNet {
 public:
  struct Gradients {
    std::vector<Eigen::MatrixXd> w;
    std::vector<Eigen::VectorXd> b;
    Eigen::MatrixXd wv, wa;
    Eigen::VectorXd bv, ba;

    std::vector<std::pair<double*, std::ptrdiff_t>> blocks(bool dueling) {
      std::vector<std::pair<double*, std::ptrdiff_t>> out;
      for (std::size_t l = 0; l < w.size(); ++l) {
        out.emplace_back(w[l].data(), w[l].size());
        out.emplace_back(b[l].data(), b[l].size());
      }
      if (dueling) {
        out.emplace_back(wv.data(), wv.size());
        out.emplace_back(bv.data(), bv.size());
      }
      out.emplace_back(wa.data(), wa.size());
      out.emplace_back(ba.data(), ba.size());
      return out;
    }
  };

  QNet() = default;

  QNet(const NetConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.hidden_layers < 1) throw std::invalid_argument("QNet: need at least one hidden layer");
    int in = cfg.in_dim;
    for (int l = 0; l < cfg.hidden_layers; ++l) {
      w_.push_back(init_matrix(cfg.hidden_width, in, std::sqrt(2.0 / in), rng));
      b_.push_back(Eigen::VectorXd::Zero(cfg.hidden_width));
      in = cfg.hidden_width;
    }
    const double head_scale = std::sqrt(1.0 / in);
    wa_ = init_matrix(cfg.actions, in, head_scale, rng);
    ba_ = Eigen::VectorXd::Zero(cfg.actions);
    if (cfg.dueling) {
      wv_ = init_matrix(1, in, head_scale, rng);
      bv_ = Eigen::VectorXd::Zero(1);
    }
  }

  const NetConfig& config() const { return cfg_; }

  // Q-values for a batch; states are columns.
  Eigen::MatrixXd q_batch(const Eigen::MatrixXd& states) const {
    std::vector<Eigen::MatrixXd> acts;
    return forward(states, &acts);
  }

  Eigen::VectorXd q_values(const Eigen::VectorXd& state) const {
    if (state.size() != cfg_.in_dim) throw std::invalid_argument("QNet: bad state dimension");
    Eigen::MatrixXd q = q_batch(state);
    if (!q.allFinite()) throw std::runtime_error("QNet: non-finite activations");
    return q.col(0);
  }

  // Mean squared TD error over the batch, plus parameter gradients.
  double loss_and_gradients(const Eigen::MatrixXd& states, const std::vector<int>& actions,
                            const Eigen::VectorXd& targets, Gradients* grads) const {
    const int batch = static_cast<int>(states.cols());
    if (static_cast<int>(actions.size()) != batch || targets.size() != batch)
      throw std::invalid_argument("QNet: batch size mismatch");

    std::vector<Eigen::MatrixXd> acts;  // acts[0]=input, acts[l+1]=hidden activation l
    Eigen::MatrixXd q = forward(states, &acts);

    Eigen::VectorXd residual(batch);
    for (int i = 0; i < batch; ++i) residual(i) = q(actions[static_cast<std::size_t>(i)], i) - targets(i);
    const double loss = residual.squaredNorm() / batch;
    if (grads == nullptr) return loss;

    allocate_like(*grads);
    const Eigen::MatrixXd& top = acts.back();
    Eigen::MatrixXd d_top;
    if (cfg_.dueling) {
      Eigen::MatrixXd d_adv = Eigen::MatrixXd::Zero(cfg_.actions, batch);
      Eigen::RowVectorXd d_val(batch);
      for (int i = 0; i < batch; ++i) {
        const double g = 2.0 * residual(i) / batch;
        d_val(i) = g;
        for (int a = 0; a < cfg_.actions; ++a)
          d_adv(a, i) = g * (((a == actions[static_cast<std::size_t>(i)]) ? 1.0 : 0.0) - 1.0 / cfg_.actions);
      }
      grads->wv = d_val * top.transpose();
      grads->bv(0) = d_val.sum();
      grads->wa = d_adv * top.transpose();
      grads->ba = d_adv.rowwise().sum();
      d_top = wv_.transpose() * d_val + wa_.transpose() * d_adv;
    } else {
      Eigen::MatrixXd d_q = Eigen::MatrixXd::Zero(cfg_.actions, batch);
      for (int i = 0; i < batch; ++i)
        d_q(actions[static_cast<std::size_t>(i)], i) = 2.0 * residual(i) / batch;
      grads->wa = d_q * top.transpose();
      grads->ba = d_q.rowwise().sum();
      d_top = wa_.transpose() * d_q;
    }

    const double slope = cfg_.leaky_slope;
    for (int l = cfg_.hidden_layers - 1; l >= 0; --l) {
      const std::size_t li = static_cast<std::size_t>(l);
      Eigen::MatrixXd gate =
          acts[li + 1].unaryExpr([slope](double a) { return a > 0.0 ? 1.0 : slope; });
      Eigen::MatrixXd d_z = d_top.cwiseProduct(gate);
      grads->w[li] = d_z * acts[li].transpose();
      grads->b[li] = d_z.rowwise().sum();
      if (l > 0) d_top = w_[li].transpose() * d_z;
    }
    return loss;
  }

  void copy_from(const QNet& other) {
    cfg_ = other.cfg_;
    w_ = other.w_;
    b_ = other.b_;
    wv_ = other.wv_;
    bv_ = other.bv_;
    wa_ = other.wa_;
    ba_ = other.ba_;
  }

  void allocate_like(Gradients& g) const {
    g.w.resize(w_.size());
    g.b.resize(b_.size());
    for (std::size_t l = 0; l < w_.size(); ++l) {
      g.w[l].setZero(w_[l].rows(), w_[l].cols());
      g.b[l].setZero(b_[l].size());
    }
    if (cfg_.dueling) {
      g.wv.setZero(1, w_.empty() ? cfg_.in_dim : cfg_.hidden_width);
      g.bv.setZero(1);
    }
    g.wa.setZero(wa_.rows(), wa_.cols());
    g.ba.setZero(ba_.size());
  }

  // Flat views over all trainable parameters, in a fixed order shared with
  // Gradients::blocks. The optimizer and the checkpoint format rely on it.
  std::vector<std::pair<double*, std::ptrdiff_t>> param_blocks() {
    std::vector<std::pair<double*, std::ptrdiff_t>> out;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      out.emplace_back(w_[l].data(), w_[l].size());
      out.emplace_back(b_[l].data(), b_[l].size());
    }
    if (cfg_.dueling) {
      out.emplace_back(wv_.data(), wv_.size());
      out.emplace_back(bv_.data(), bv_.size());
    }
    out.emplace_back(wa_.data(), wa_.size());
    out.emplace_back(ba_.data(), ba_.size());
    return out;
  }

  std::ptrdiff_t param_count() {
    std::ptrdiff_t n = 0;
    for (auto& [p, sz] : param_blocks()) n += sz;
    return n;
  }

  std::vector<Eigen::MatrixXd>& hidden_weights() { return w_; }
  std::vector<Eigen::VectorXd>& hidden_biases() { return b_; }
  Eigen::MatrixXd& value_weights() { return wv_; }
  Eigen::VectorXd& value_bias() { return bv_; }
  Eigen::MatrixXd& advantage_weights() { return wa_; }
  Eigen::VectorXd& advantage_bias() { return ba_; }
  const std::vector<Eigen::MatrixXd>& hidden_weights() const { return w_; }
  const std::vector<Eigen::VectorXd>& hidden_biases() const { return b_; }
  const Eigen::MatrixXd& value_weights() const { return wv_; }
  const Eigen::VectorXd& value_bias() const { return bv_; }
  const Eigen::MatrixXd& advantage_weights() const { return wa_; }
  const Eigen::VectorXd& advantage_bias() const { return ba_; }

 private:
  Eigen::MatrixXd forward(const Eigen::MatrixXd& states, std::vector<Eigen::MatrixXd>* acts) const {
    acts->clear();
    acts->push_back(states);
    Eigen::MatrixXd h = states;
    for (std::size_t l = 0; l < w_.size(); ++l) {
      Eigen::MatrixXd z = (w_[l] * h).colwise() + b_[l];
      h = z.array().max(0.0).matrix() + cfg_.leaky_slope * z.array().min(0.0).matrix();
      acts->push_back(h);
    }
    Eigen::MatrixXd adv = (wa_ * h).colwise() + ba_;
    if (!cfg_.dueling) return adv;
    Eigen::RowVectorXd val = (wv_ * h).row(0) + Eigen::RowVectorXd::Constant(h.cols(), bv_(0));
    Eigen::RowVectorXd adv_mean = adv.colwise().mean();
    return (adv.rowwise() - adv_mean).rowwise() + val;
  }

  static Eigen::MatrixXd init_matrix(int rows, int cols, double sigma, Rng& rng) {
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) m(r, c) = rng.normal(0.0, sigma);
    return m;
  }

  NetConfig cfg_;
  std::vector<Eigen::MatrixXd> w_;
  std::vector<Eigen::VectorXd> b_;
  Eigen::MatrixXd wv_, wa_;
  Eigen::VectorXd bv_, ba_;
};

// Adaptive-moment gradient descent, non-amsgrad variant.
class Adam {
 public:
  explicit Adam(double lr = 2e-4, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(QNet& net, QNet::Gradients& grads) {
    auto params = net.param_blocks();
    auto gblocks = grads.blocks(net.config().dueling);
    if (params.size() != gblocks.size()) throw std::logic_error("Adam: block mismatch");
    if (m_.size() == 0) {
      std::ptrdiff_t n = 0;
      for (auto& [p, sz] : params) n += sz;
      m_.setZero(n);
      v_.setZero(n);
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    std::ptrdiff_t off = 0;
    for (std::size_t blk = 0; blk < params.size(); ++blk) {
      auto [p, n] = params[blk];
      auto [g, gn] = gblocks[blk];
      if (n != gn) throw std::logic_error("Adam: gradient shape mismatch");
      Eigen::Map<Eigen::ArrayXd> pm(p, n);
      Eigen::Map<const Eigen::ArrayXd> gm(g, n);
      auto m = m_.segment(off, n);
      auto v = v_.segment(off, n);
      m = beta1_ * m + (1.0 - beta1_) * gm;
      v = beta2_ * v + (1.0 - beta2_) * gm.square();
      pm -= lr_ * (m / bc1) / ((v / bc2).sqrt() + eps_);
      off += n;
    }
  }

  int steps() const { return t_; }
  double learning_rate() const { return lr_; }
  Eigen::ArrayXd& first_moment() { return m_; }
  Eigen::ArrayXd& second_moment() { return v_; }
  void restore_step_count(int t) { t_ = t; }

 private:
  double lr_, beta1_, beta2_, eps_;
  int t_ = 0;
  Eigen::ArrayXd m_, v_;
};

}  // namespace isatcr
