#include "hal/policy.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "hal/io.hpp"
#include "hal/rng.hpp"

namespace hal {
namespace {

void fail(const std::string& msg) { throw std::runtime_error("policy: " + msg); }

constexpr double kProbClampLo = 1e-6;
constexpr double kProbClampHi = 1.0 - 1e-6;

struct Slot {
  int index;
  const Vec* obs;
  std::vector<Transition> path;
};

}  // namespace

PolicyNet make_policy_net(int obs_dim, int hidden, std::uint64_t seed) {
  if (obs_dim < 1 || hidden < 1) fail("policy dimensions must be positive");
  PolicyNet net;
  net.obs_dim = obs_dim;
  net.spec.input = {1, 1, 2 * obs_dim};
  net.spec.layers = {dense(hidden), relu(), dense(hidden), relu(), dense(2), softmax()};
  net.spec.embedding_layer = 2;
  net.params = init_params(net.spec, seed);
  // zero final layer: symmetric [0.5, 0.5] before any update
  net.params.tensors[net.params.tensors.size() - 2].setZero();
  net.params.tensors[net.params.tensors.size() - 1].setZero();
  net.adam = make_adam_state(net.params);
  return net;
}

Vec policy_prob(const PolicyNet& policy, const Vec& left, const Vec& right) {
  if (left.size() != policy.obs_dim || right.size() != policy.obs_dim)
    fail("observation dimension mismatch");
  Vec state(2 * policy.obs_dim);
  state.head(policy.obs_dim) = left;
  state.tail(policy.obs_dim) = right;
  auto fwd = forward(policy.spec, policy.params, state.transpose(), Mode::Eval, 0);
  return fwd.output.row(0).transpose();
}

Trajectory run_tournament(const MatchFn& match, const std::vector<int>& indices,
                          const std::vector<Vec>& observations, std::uint64_t seed,
                          SelectMode mode) {
  if (indices.empty()) fail("tournament needs at least one candidate");
  if (indices.size() != observations.size()) fail("index and observation counts differ");

  auto rng = make_rng(mix(seed, salt::kTournament));
  std::vector<int> order(indices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  shuffle_vec(order, rng);

  std::vector<Slot> round;
  round.reserve(order.size());
  for (int slot : order)
    round.push_back({indices[static_cast<std::size_t>(slot)],
                     &observations[static_cast<std::size_t>(slot)],
                     {}});

  int comparisons = 0;
  while (round.size() > 1) {
    std::vector<Slot> next;
    next.reserve(round.size() / 2 + 1);
    std::size_t i = 0;
    for (; i + 1 < round.size(); i += 2) {
      Slot& l = round[i];
      Slot& r = round[i + 1];
      Vec p = match(*l.obs, *r.obs);
      if (p.size() != 2) fail("match must return two probabilities");
      int action;
      if (mode == SelectMode::Sample) {
        action = uniform_real(rng) < p(0) ? 0 : 1;
      } else {
        action = p(1) > p(0) ? 1 : 0;
      }
      ++comparisons;
      Slot& winner = action == 0 ? l : r;
      Vec state(l.obs->size() + r.obs->size());
      state.head(l.obs->size()) = *l.obs;
      state.tail(r.obs->size()) = *r.obs;
      winner.path.push_back({std::move(state), action,
                             std::clamp(p(action), kProbClampLo, kProbClampHi),
                             static_cast<int>(winner.path.size())});
      next.push_back(std::move(winner));
    }
    if (i < round.size()) next.push_back(std::move(round[i]));  // bye
    round = std::move(next);
  }

  Trajectory traj;
  traj.winner = round[0].index;
  traj.transitions = std::move(round[0].path);
  traj.comparisons = comparisons;
  return traj;
}

Trajectory run_tournament(const PolicyNet& policy, const std::vector<int>& indices,
                          const std::vector<Vec>& observations, std::uint64_t seed,
                          SelectMode mode) {
  MatchFn match = [&policy](const Vec& left, const Vec& right) {
    return policy_prob(policy, left, right);
  };
  return run_tournament(match, indices, observations, seed, mode);
}

SelectionResult select_batch(const PolicyNet& policy, const PoolState& pool,
                             const ImageStore& store, const Classifier& clf,
                             const ClassStats& stats, int b, int n_mc,
                             std::uint64_t seed, SelectMode mode,
                             const FeatureToggles& toggles) {
  if (b < 1) fail("batch size must be positive");
  if (pool.unlabeled.size() < static_cast<std::size_t>(b))
    fail("unlabeled pool smaller than the batch");

  auto obs = observe_pool(pool.unlabeled, store, clf, stats, n_mc,
                          mix(seed, salt::kObserve), toggles);
  std::vector<Vec> flats(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) flats[i] = obs[i].flatten();

  std::vector<std::size_t> remaining(obs.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;

  SelectionResult out;
  for (int k = 0; k < b; ++k) {
    std::vector<int> idx;
    std::vector<Vec> cand;
    idx.reserve(remaining.size());
    cand.reserve(remaining.size());
    for (std::size_t slot : remaining) {
      idx.push_back(pool.unlabeled[slot]);
      cand.push_back(flats[slot]);
    }
    auto traj = run_tournament(policy, idx, cand, mix(seed, static_cast<std::uint64_t>(k)),
                               mode);
    out.indices.push_back(traj.winner);
    for (std::size_t i = 0; i < remaining.size(); ++i)
      if (pool.unlabeled[remaining[i]] == traj.winner) {
        remaining.erase(remaining.begin() + static_cast<long>(i));
        break;
      }
    out.trajectories.push_back(std::move(traj));
  }
  return out;
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity_ < 1) fail("replay capacity must be positive");
}

void ReplayBuffer::push(ReplayEntry entry) {
  if (!std::isfinite(entry.reward)) fail("non-finite reward");
  for (const auto& t : entry.trajectories)
    for (const auto& tr : t.transitions)
      if (tr.behavior_prob <= 0.0 || tr.behavior_prob > 1.0)
        fail("behavior probability outside (0, 1]");
  entries_.push_back(std::move(entry));
  while (entries_.size() > capacity_) entries_.pop_front();
}

std::size_t ReplayBuffer::trajectory_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.trajectories.size();
  return n;
}

double ReplayBuffer::mean_reward() const {
  if (entries_.empty()) return 0.0;
  double s = 0.0;
  for (const auto& e : entries_) s += e.reward;
  return s / static_cast<double>(entries_.size());
}

std::pair<Params, double> pg_gradient(const PolicyNet& policy, const ReplayBuffer& buffer,
                                      double gamma, ClipRange clip, double baseline) {
  if (buffer.empty()) fail("replay buffer is empty");
  if (clip.lo > clip.hi) fail("clip range inverted");

  std::set<int> episodes;
  long n_rows = 0;
  for (const auto& e : buffer.entries()) {
    episodes.insert(e.episode);
    for (const auto& t : e.trajectories)
      n_rows += static_cast<long>(t.transitions.size());
  }
  double inv_n = 1.0 / static_cast<double>(episodes.size());

  Params grads = zeros_like(policy.params);
  if (n_rows == 0) return {std::move(grads), 0.0};

  long in_dim = policy.spec.input.size();
  Mat states(n_rows, in_dim);
  std::vector<int> actions(static_cast<std::size_t>(n_rows));
  std::vector<double> discounted(static_cast<std::size_t>(n_rows));
  std::vector<double> behavior(static_cast<std::size_t>(n_rows));
  long row = 0;
  for (const auto& e : buffer.entries())
    for (const auto& t : e.trajectories) {
      auto len = static_cast<long>(t.transitions.size());
      for (long k = 0; k < len; ++k) {
        const auto& tr = t.transitions[static_cast<std::size_t>(k)];
        if (tr.state.size() != in_dim) fail("stored state width mismatch");
        states.row(row) = tr.state.transpose();
        actions[static_cast<std::size_t>(row)] = tr.action;
        discounted[static_cast<std::size_t>(row)] =
            std::pow(gamma, static_cast<double>(len - 1 - k)) * (e.reward - baseline);
        behavior[static_cast<std::size_t>(row)] = tr.behavior_prob;
        ++row;
      }
    }

  auto fwd = forward(policy.spec, policy.params, states, Mode::Eval, 0);
  Mat loss_grad = Mat::Zero(n_rows, 2);
  double loss = 0.0;
  for (long r = 0; r < n_rows; ++r) {
    int a = actions[static_cast<std::size_t>(r)];
    double pa = std::max(fwd.output(r, a), 1e-12);
    double corr = std::clamp(pa / behavior[static_cast<std::size_t>(r)], clip.lo, clip.hi);
    double weight = inv_n * discounted[static_cast<std::size_t>(r)] * corr;
    loss += weight * -std::log(pa);
    loss_grad(r, a) = -weight / pa;
  }
  grads = backward(policy.spec, policy.params, fwd.cache, loss_grad);
  return {std::move(grads), loss};
}

double pg_update(PolicyNet& policy, const ReplayBuffer& buffer, double lr, double gamma,
                 ClipRange clip, double baseline) {
  auto [grads, loss] = pg_gradient(policy, buffer, gamma, clip, baseline);
  adam_step(policy.params, grads, policy.adam, lr);
  return loss;
}

void export_replay_csv(const ReplayBuffer& buffer, const std::string& path) {
  CsvTable table;
  table.header = {"episode", "step", "depth", "action", "behavior_prob", "reward"};
  for (const auto& e : buffer.entries())
    for (const auto& t : e.trajectories)
      for (const auto& tr : t.transitions)
        table.rows.push_back({std::to_string(e.episode), std::to_string(e.step),
                              std::to_string(tr.depth), std::to_string(tr.action),
                              format_double(tr.behavior_prob), format_double(e.reward)});
  write_csv(path, table);
}

void save_policy(const PolicyNet& policy, const std::string& path) {
  save_checkpoint(path, policy.spec, policy.params);
}

PolicyNet load_policy(const std::string& path) {
  auto [spec, params] = load_checkpoint(path);
  PolicyNet net;
  if (spec.input.size() % 2 != 0) fail("policy checkpoint input width must be even");
  net.obs_dim = spec.input.size() / 2;
  net.spec = std::move(spec);
  net.params = std::move(params);
  net.adam = make_adam_state(net.params);
  return net;
}

}  // namespace hal
