#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <json.hpp>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "isatcr/nn.hpp"
#include "isatcr/rng.hpp"
#include "isatcr/simcore.hpp"

namespace isatcr {

inline constexpr int kAgentStateDim = 64;
inline constexpr double kDemandNorm = 3e11;  // 75 MB at 4000 FLOP/byte

// 64-number DRL input: self feature (4), four neighbor representations
// (4x12), per-direction transmission queue info (4), destination direction
// vector (4), task state (4). Dead directions carry the documented fills:
// fault-padded representation, edge info 1, hop entry 2.
inline Eigen::VectorXd encode_state(const DecisionContext& ctx) {
  Eigen::VectorXd v(kAgentStateDim);
  const auto self = ctx.self.as_array();
  for (int c = 0; c < 4; ++c) v(c) = self[static_cast<std::size_t>(c)];
  for (int d = 0; d < 4; ++d)
    for (int c = 0; c < kGraphRepDim; ++c)
      v(4 + 12 * d + c) = ctx.reps[static_cast<std::size_t>(d)][static_cast<std::size_t>(c)];
  for (int d = 0; d < 4; ++d)
    v(52 + d) = ctx.dir_live[static_cast<std::size_t>(d)]
                    ? ctx.edge_queue_norm[static_cast<std::size_t>(d)]
                    : 1.0;
  for (int d = 0; d < 4; ++d) {
    const int h = ctx.nbr_hops[static_cast<std::size_t>(d)];
    v(56 + d) = (ctx.dir_live[static_cast<std::size_t>(d)] && h != HopField::kUnreachable)
                    ? static_cast<double>(h) / ctx.diameter
                    : 2.0;
  }
  const Task& t = *ctx.task;
  v(60) = t.current_size() / ctx.storage_cap;
  v(61) = t.demand_flop / kDemandNorm;
  v(62) = t.out_bytes / ctx.storage_cap;
  v(63) = t.computed ? 1.0 : 0.0;
  return v;
}

// ---- reward ----------------------------------------------------------------

struct RewardParams {
  double beta_s = 1.0;   // successful delivery bonus
  double beta_d = 0.05;  // delay penalty weight
  double beta_l = 1.0;   // loss penalty
  double beta_m = 0.25;  // storage-reserve penalty
};

enum class TransitionKind { delivered, lost, step };

// Delivery and loss count the whole elapsed time since birth; a normal step
// counts only the time since the previous decision, unless the satellite sits
// above its storage reserve, which re-counts from birth with the extra
// penalty. Implemented exactly as specified.
inline double reward(TransitionKind kind, bool computed, double t_b, double t_tau, double t_last,
                     bool storage_exceeded, const RewardParams& p = {}) {
  switch (kind) {
    case TransitionKind::delivered: return (computed ? p.beta_s : 0.0) + p.beta_d * (t_b - t_tau);
    case TransitionKind::lost: return -p.beta_l + p.beta_d * (t_b - t_tau);
    case TransitionKind::step:
      return storage_exceeded ? -p.beta_m + p.beta_d * (t_b - t_tau) : p.beta_d * (t_last - t_tau);
  }
  throw std::invalid_argument("reward: unknown transition kind");
}

// ---- exploration -----------------------------------------------------------

struct ExplorationSchedule {
  double start = 0.9;
  double decay = 0.999;
  double floor = 0.02;
  double p_heuristic = 0.5;
  double heuristic_compute_prob = 0.3;

  double epsilon(int epoch) const { return std::max(floor, start * std::pow(decay, epoch)); }
};

// Masked action selection. Computed tasks may only pick transmission
// directions; with every direction dead the caller must wait and retry.
// Exploration mixes a heuristic branch (compute with a configured
// probability for uncomputed tasks, otherwise the min-hop live neighbor)
// with uniform choice over valid actions.
inline int select_action(const QNet& net, const Eigen::VectorXd& state, bool computed,
                         const std::array<bool, 4>& live, const std::array<int, 4>& hops, double eps,
                         double p_heuristic, double heuristic_compute_prob, Rng& rng) {
  std::array<int, 5> valid{};
  int n_valid = 0;
  for (int d = 0; d < 4; ++d)
    if (live[static_cast<std::size_t>(d)]) valid[static_cast<std::size_t>(n_valid++)] = d;
  if (!computed) valid[static_cast<std::size_t>(n_valid++)] = Action::kComputeIndex;
  if (n_valid == 0) return -1;  // computed task, all directions dead

  const bool explore = rng.uniform() < eps;
  if (explore) {
    if (rng.uniform() < p_heuristic) {
      if (!computed && rng.uniform() < heuristic_compute_prob) return Action::kComputeIndex;
      int best = -1, best_h = std::numeric_limits<int>::max();
      for (int d = 0; d < 4; ++d) {
        if (!live[static_cast<std::size_t>(d)]) continue;
        const int h = hops[static_cast<std::size_t>(d)];
        if (h != HopField::kUnreachable && h < best_h) {
          best_h = h;
          best = d;
        }
      }
      if (best >= 0) return best;
      // no reachable neighbor: fall through to a uniform valid choice
    }
    return valid[static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(n_valid)))];
  }

  const Eigen::VectorXd q = net.q_values(state);
  int best = valid[0];
  for (int i = 1; i < n_valid; ++i) {
    const int a = valid[static_cast<std::size_t>(i)];
    if (q(a) > q(best)) best = a;
  }
  return best;
}

// Target value with the computed-flag mask on the bootstrap maximum.
inline double td_target(const QNet& target_net, double r, const Eigen::VectorXd& s2,
                        bool next_computed, bool terminal, double gamma = 0.99) {
  if (terminal) return r;
  const Eigen::VectorXd q = target_net.q_values(s2);
  const int limit = next_computed ? 4 : 5;
  double best = q(0);
  for (int a = 1; a < limit; ++a) best = std::max(best, q(a));
  return r + gamma * best;
}

// ---- replay ----------------------------------------------------------------

struct Transition {
  std::vector<float> s, s2;
  int a = 0;
  float r = 0.0f;
  bool next_computed = false;
  bool terminal = false;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity = 200000) : capacity_(capacity) {}

  void push(Transition t) {
    if (data_.size() < capacity_) {
      data_.push_back(std::move(t));
    } else {
      data_[head_] = std::move(t);  // FIFO eviction
      head_ = (head_ + 1) % capacity_;
    }
  }

  std::size_t size() const { return data_.size(); }
  const Transition& at(std::size_t i) const { return data_[i]; }

  // uniform sample without replacement within the batch
  std::vector<const Transition*> sample(std::size_t batch, Rng& rng) const {
    if (batch > data_.size()) throw std::invalid_argument("replay: batch larger than buffer");
    if (index_scratch_.size() != data_.size()) {
      index_scratch_.resize(data_.size());
      for (std::size_t i = 0; i < data_.size(); ++i) index_scratch_[i] = i;
    }
    std::vector<const Transition*> out;
    out.reserve(batch);
    for (std::size_t i = 0; i < batch; ++i) {
      const std::size_t j =
          i + static_cast<std::size_t>(rng.uniform_int(static_cast<std::uint64_t>(data_.size() - i)));
      std::swap(index_scratch_[i], index_scratch_[j]);
      out.push_back(&data_[index_scratch_[i]]);
    }
    return out;
  }

 private:
  std::size_t capacity_;
  std::size_t head_ = 0;
  std::vector<Transition> data_;
  mutable std::vector<std::size_t> index_scratch_;
};

// One adaptive-moment step on the mean squared TD error of a batch.
inline double train_step(QNet& online, const QNet& target, Adam& opt,
                         const std::vector<const Transition*>& batch, double gamma) {
  const int dim = online.config().in_dim;
  const int b = static_cast<int>(batch.size());
  Eigen::MatrixXd s(dim, b), s2(dim, b);
  std::vector<int> actions(static_cast<std::size_t>(b));
  for (int i = 0; i < b; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    for (int c = 0; c < dim; ++c) {
      s(c, i) = t.s[static_cast<std::size_t>(c)];
      s2(c, i) = t.terminal ? 0.0 : t.s2[static_cast<std::size_t>(c)];
    }
    actions[static_cast<std::size_t>(i)] = t.a;
  }
  const Eigen::MatrixXd q2 = target.q_batch(s2);
  Eigen::VectorXd y(b);
  for (int i = 0; i < b; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    if (t.terminal) {
      y(i) = t.r;
      continue;
    }
    const int limit = t.next_computed ? 4 : 5;
    double best = q2(0, i);
    for (int a = 1; a < limit; ++a) best = std::max(best, q2(a, i));
    y(i) = t.r + gamma * best;
  }
  QNet::Gradients grads;
  const double loss = online.loss_and_gradients(s, actions, y, &grads);
  if (!std::isfinite(loss)) throw std::runtime_error("training diverged: non-finite loss");
  opt.step(online, grads);
  return loss;
}

// ---- policies --------------------------------------------------------------

using StateEncoder = std::function<Eigen::VectorXd(const DecisionContext&)>;

// Greedy execution of a trained network (epsilon = 0), shared by every
// satellite of the constellation.
class GreedyPolicy : public Policy {
 public:
  GreedyPolicy(const QNet& net, StateEncoder encoder) : net_(&net), encoder_(std::move(encoder)) {}

  Action decide(const DecisionContext& ctx) override {
    const Eigen::VectorXd s = encoder_(ctx);
    ctx.sim->instrumentation().record_state_width(static_cast<int>(s.size()));
    Rng unused(0);
    const int a = select_action(*net_, s, ctx.task->computed, ctx.dir_live, ctx.nbr_hops,
                                /*eps=*/0.0, 0.0, 0.0, unused);
    return a < 0 ? Action::wait() : Action{a};
  }

 private:
  const QNet* net_;
  StateEncoder encoder_;
};

// Rollout policy: epsilon-greedy selection with the heuristic branch, plus
// transition recording. A pending (S, A) pair resolves at the task's next
// decision (step reward) or at its terminal event (delivery or loss).
class TrainingPolicy : public Policy {
 public:
  TrainingPolicy(const QNet& net, StateEncoder encoder, ReplayBuffer& buffer, Rng rng,
                 RewardParams rewards = {})
      : net_(&net), encoder_(std::move(encoder)), buffer_(&buffer), rng_(rng), rewards_(rewards) {}

  void set_epsilon(double eps) { eps_ = eps; }
  void set_heuristic(double p_h, double compute_prob) {
    p_heuristic_ = p_h;
    heuristic_compute_prob_ = compute_prob;
  }

  void begin_episode() {
    pending_.clear();
    reward_sum_ = 0.0;
    reward_count_ = 0;
  }
  double mean_reward() const { return reward_count_ ? reward_sum_ / reward_count_ : 0.0; }
  long transition_count() const { return reward_count_; }

  Action decide(const DecisionContext& ctx) override {
    const Eigen::VectorXd s = encoder_(ctx);
    ctx.sim->instrumentation().record_state_width(static_cast<int>(s.size()));
    const Task& task = *ctx.task;

    auto it = pending_.find(task.id);
    if (it != pending_.end()) {
      const double r = reward(TransitionKind::step, task.computed, task.birth_s, ctx.now,
                              it->second.t, ctx.storage_above_reserve, rewards_);
      commit(it->second, r, s, task.computed, false);
      pending_.erase(it);
    }

    const int a = select_action(*net_, s, task.computed, ctx.dir_live, ctx.nbr_hops, eps_,
                                p_heuristic_, heuristic_compute_prob_, rng_);
    if (a < 0) return Action::wait();
    Pending p;
    p.s.assign(s.data(), s.data() + s.size());
    p.a = a;
    p.t = ctx.now;
    pending_[task.id] = std::move(p);
    return Action{a};
  }

  void on_terminal(const Task& task, bool delivered, double t) override {
    auto it = pending_.find(task.id);
    if (it == pending_.end()) return;
    const double r = reward(delivered ? TransitionKind::delivered : TransitionKind::lost,
                            task.computed, task.birth_s, t, it->second.t, false, rewards_);
    commit(it->second, r, Eigen::VectorXd(), task.computed, true);
    pending_.erase(it);
  }

 private:
  struct Pending {
    std::vector<float> s;
    int a = 0;
    double t = 0.0;
  };

  void commit(const Pending& p, double r, const Eigen::VectorXd& s2, bool next_computed,
              bool terminal) {
    Transition tr;
    tr.s = p.s;
    if (!terminal) tr.s2.assign(s2.data(), s2.data() + s2.size());
    else tr.s2.assign(p.s.size(), 0.0f);
    tr.a = p.a;
    tr.r = static_cast<float>(r);
    tr.next_computed = next_computed;
    tr.terminal = terminal;
    buffer_->push(std::move(tr));
    reward_sum_ += r;
    ++reward_count_;
  }

  const QNet* net_;
  StateEncoder encoder_;
  ReplayBuffer* buffer_;
  Rng rng_;
  RewardParams rewards_;
  double eps_ = 0.9;
  double p_heuristic_ = 0.5;
  double heuristic_compute_prob_ = 0.3;
  std::unordered_map<int, Pending> pending_;
  double reward_sum_ = 0.0;
  long reward_count_ = 0;
};

// ---- training orchestration -------------------------------------------------

struct TrainSettings {
  int epochs = 6000;
  double epoch_duration_s = 20.0;
  int iters_per_epoch = 64;
  int batch_size = 1024;
  int buffer_capacity = 200000;
  double lr = 2e-4;
  double gamma = 0.99;
  ExplorationSchedule exploration;
  int target_sync_period = 10;
  RewardParams rewards;
};

struct EpochStats {
  int epoch = 0;
  double mean_reward = 0.0;
  double mean_loss = 0.0;
  double epsilon = 0.0;
};

// The training loop: per epoch, roll one seeded episode storing every
// per-decision transition from all satellites into the shared buffer, then
// run the configured number of gradient iterations; decay epsilon per epoch
// and copy the online parameters to the target network periodically.
class Trainer {
 public:
  Trainer(SimConfig sim_cfg, TrainSettings settings, NetConfig net_cfg, StateEncoder encoder,
          std::uint64_t master_seed)
      : sim_cfg_(std::move(sim_cfg)),
        settings_(settings),
        encoder_(std::move(encoder)),
        buffer_(static_cast<std::size_t>(settings.buffer_capacity)),
        master_seed_(master_seed),
        opt_(settings.lr) {
    Rng init = Rng::stream(master_seed, 6);
    online_ = QNet(net_cfg, init);
    target_ = online_;
    policy_ = std::make_unique<TrainingPolicy>(online_, encoder_, buffer_,
                                               Rng::stream(master_seed, 5), settings.rewards);
    policy_->set_heuristic(settings.exploration.p_heuristic,
                           settings.exploration.heuristic_compute_prob);
  }

  // Runs `n` further epochs, appending per-epoch statistics to the curve.
  const std::vector<EpochStats>& run(int n) {
    for (int i = 0; i < n; ++i) run_epoch();
    return curve_;
  }

  void run_epoch() {
    const int epoch = epoch_;
    const double eps = settings_.exploration.epsilon(epoch);
    policy_->set_epsilon(eps);
    policy_->begin_episode();

    std::uint64_t s = master_seed_;
    const std::uint64_t epoch_seed = splitmix64(s) ^ (0xa0761d6478bd642fULL * (epoch + 1));
    Simulator sim(sim_cfg_, *policy_, epoch_seed);
    sim.run_until(settings_.epoch_duration_s);

    double loss_sum = 0.0;
    int loss_n = 0;
    if (buffer_.size() >= static_cast<std::size_t>(settings_.batch_size)) {
      Rng sample_rng = Rng::stream(master_seed_, 7, static_cast<std::uint64_t>(epoch));
      for (int it = 0; it < settings_.iters_per_epoch; ++it) {
        const auto batch = buffer_.sample(static_cast<std::size_t>(settings_.batch_size), sample_rng);
        loss_sum += train_step(online_, target_, opt_, batch, settings_.gamma);
        ++loss_n;
      }
    }

    ++epoch_;
    if (settings_.target_sync_period > 0 && epoch_ % settings_.target_sync_period == 0)
      target_.copy_from(online_);
    curve_.push_back({epoch, policy_->mean_reward(), loss_n ? loss_sum / loss_n : 0.0, eps});
  }

  int epoch() const { return epoch_; }
  double epsilon_now() const { return settings_.exploration.epsilon(epoch_); }
  QNet& online() { return online_; }
  const QNet& online() const { return online_; }
  QNet& target() { return target_; }
  ReplayBuffer& buffer() { return buffer_; }
  Adam& optimizer() { return opt_; }
  const std::vector<EpochStats>& curve() const { return curve_; }
  void set_epoch(int e) { epoch_ = e; }

 private:
  SimConfig sim_cfg_;
  TrainSettings settings_;
  StateEncoder encoder_;
  ReplayBuffer buffer_;
  std::uint64_t master_seed_;
  QNet online_, target_;
  Adam opt_;
  std::unique_ptr<TrainingPolicy> policy_;
  std::vector<EpochStats> curve_;
  int epoch_ = 0;
};

// ---- checkpoint container ----------------------------------------------------

inline nlohmann::json matrix_to_json(const Eigen::MatrixXd& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));  // row-major
  j["data"] = std::move(data);
  return j;
}

inline Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  Eigen::MatrixXd m(j.at("rows").get<Eigen::Index>(), j.at("cols").get<Eigen::Index>());
  const auto& data = j.at("data");
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = data.at(k++).get<double>();
  return m;
}

inline nlohmann::json net_to_json(const QNet& net) {
  nlohmann::json j;
  const NetConfig& c = net.config();
  j["config"] = {{"in_dim", c.in_dim},   {"hidden_width", c.hidden_width},
                 {"hidden_layers", c.hidden_layers}, {"actions", c.actions},
                 {"dueling", c.dueling}, {"leaky_slope", c.leaky_slope}};
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < net.hidden_weights().size(); ++l) {
    nlohmann::json layer;
    layer["w"] = matrix_to_json(net.hidden_weights()[l]);
    layer["b"] = std::vector<double>(net.hidden_biases()[l].data(),
                                     net.hidden_biases()[l].data() + net.hidden_biases()[l].size());
    layers.push_back(std::move(layer));
  }
  j["hidden"] = std::move(layers);
  if (c.dueling) {
    j["value_w"] = matrix_to_json(net.value_weights());
    j["value_b"] = std::vector<double>(net.value_bias().data(),
                                       net.value_bias().data() + net.value_bias().size());
  }
  j["adv_w"] = matrix_to_json(net.advantage_weights());
  j["adv_b"] = std::vector<double>(net.advantage_bias().data(),
                                   net.advantage_bias().data() + net.advantage_bias().size());
  return j;
}

inline QNet net_from_json(const nlohmann::json& j) {
  NetConfig c;
  const auto& jc = j.at("config");
  c.in_dim = jc.at("in_dim").get<int>();
  c.hidden_width = jc.at("hidden_width").get<int>();
  c.hidden_layers = jc.at("hidden_layers").get<int>();
  c.actions = jc.at("actions").get<int>();
  c.dueling = jc.at("dueling").get<bool>();
  c.leaky_slope = jc.at("leaky_slope").get<double>();
  Rng dummy(1);
  QNet net(c, dummy);
  const auto& layers = j.at("hidden");
  for (std::size_t l = 0; l < net.hidden_weights().size(); ++l) {
    net.hidden_weights()[l] = matrix_from_json(layers.at(l).at("w"));
    const auto b = layers.at(l).at("b").get<std::vector<double>>();
    net.hidden_biases()[l] = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  if (c.dueling) {
    net.value_weights() = matrix_from_json(j.at("value_w"));
    const auto b = j.at("value_b").get<std::vector<double>>();
    net.value_bias() = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  }
  net.advantage_weights() = matrix_from_json(j.at("adv_w"));
  const auto b = j.at("adv_b").get<std::vector<double>>();
  net.advantage_bias() = Eigen::Map<const Eigen::VectorXd>(b.data(), static_cast<Eigen::Index>(b.size()));
  return net;
}

// Versioned checkpoint with weights, optimizer moments, epoch and epsilon.
inline nlohmann::json checkpoint_to_json(Trainer& trainer, const std::string& policy_kind) {
  nlohmann::json j;
  j["format_version"] = 1;
  j["policy_kind"] = policy_kind;
  j["epoch"] = trainer.epoch();
  j["epsilon"] = trainer.epsilon_now();
  j["net"] = net_to_json(trainer.online());
  j["target_net"] = net_to_json(trainer.target());
  nlohmann::json adam;
  adam["t"] = trainer.optimizer().steps();
  adam["m"] = std::vector<double>(
      trainer.optimizer().first_moment().data(),
      trainer.optimizer().first_moment().data() + trainer.optimizer().first_moment().size());
  adam["v"] = std::vector<double>(
      trainer.optimizer().second_moment().data(),
      trainer.optimizer().second_moment().data() + trainer.optimizer().second_moment().size());
  j["adam"] = std::move(adam);
  return j;
}

inline void checkpoint_restore(Trainer& trainer, const nlohmann::json& j) {
  if (j.at("format_version").get<int>() != 1)
    throw std::invalid_argument("checkpoint: unsupported format version");
  trainer.online() = net_from_json(j.at("net"));
  trainer.target() = net_from_json(j.at("target_net"));
  trainer.set_epoch(j.at("epoch").get<int>());
  const auto& adam = j.at("adam");
  trainer.optimizer().restore_step_count(adam.at("t").get<int>());
  const auto m = adam.at("m").get<std::vector<double>>();
  const auto v = adam.at("v").get<std::vector<double>>();
  trainer.optimizer().first_moment() =
      Eigen::Map<const Eigen::ArrayXd>(m.data(), static_cast<Eigen::Index>(m.size()));
  trainer.optimizer().second_moment() =
      Eigen::Map<const Eigen::ArrayXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace isatcr
