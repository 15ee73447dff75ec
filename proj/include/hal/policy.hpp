#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hal/classifier.hpp"
#include "hal/features.hpp"
#include "hal/nn.hpp"
#include "hal/types.hpp"

namespace hal {

struct PolicyNet {
  ModelSpec spec;
  Params params;
  AdamState adam;
  int obs_dim = 0;  // one observation; the net input is a left/right pair
};

// dense 2*obs_dim -> hidden -> hidden -> 2 softmax; the final layer starts
// at zero so an untrained policy answers [0.5, 0.5] for every pair
PolicyNet make_policy_net(int obs_dim, int hidden, std::uint64_t seed);

// raw softmax over {left wins, right wins}; no clamping here
Vec policy_prob(const PolicyNet& policy, const Vec& left, const Vec& right);

struct Transition {
  Vec state;  // concat(left, right)
  int action = 0;
  double behavior_prob = 0.5;  // clamped to [1e-6, 1-1e-6] at storage
  int depth = 0;               // position along the winner path, leaf first
};

struct Trajectory {
  int winner = -1;  // pool index
  std::vector<Transition> transitions;
  int comparisons = 0;
};

enum class SelectMode { Sample, Greedy };

// two-entry probability vector for (left wins, right wins)
using MatchFn = std::function<Vec(const Vec& left, const Vec& right)>;

// seeded shuffle, then single-elimination rounds; odd rounds give the
// trailing candidate a bye; greedy mode takes argmax with ties toward
// action 0; exactly M-1 matches are played
Trajectory run_tournament(const MatchFn& match, const std::vector<int>& indices,
                          const std::vector<Vec>& observations, std::uint64_t seed,
                          SelectMode mode);
Trajectory run_tournament(const PolicyNet& policy, const std::vector<int>& indices,
                          const std::vector<Vec>& observations, std::uint64_t seed,
                          SelectMode mode);

struct SelectionResult {
  std::vector<int> indices;
  std::vector<Trajectory> trajectories;
};

// b sequential tournaments over the unlabeled pool, each winner removed
// before the next; observations are built once and shared
SelectionResult select_batch(const PolicyNet& policy, const PoolState& pool,
                             const ImageStore& store, const Classifier& clf,
                             const ClassStats& stats, int b, int n_mc,
                             std::uint64_t seed, SelectMode mode,
                             const FeatureToggles& toggles = {});

struct ReplayEntry {
  int episode = 0, step = 0;
  double reward = 0.0;
  std::vector<Trajectory> trajectories;
};

class ReplayBuffer {
 public:
  explicit ReplayBuffer(std::size_t capacity);
  void push(ReplayEntry entry);  // evicts oldest entries once full
  const std::deque<ReplayEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t trajectory_count() const;
  bool empty() const { return entries_.empty(); }
  double mean_reward() const;

 private:
  std::size_t capacity_;
  std::deque<ReplayEntry> entries_;
};

struct ClipRange {
  double lo = 0.1, hi = 10.0;
};

// gradient of the negated objective
//   (1/N) sum_episodes sum_trajectories sum_t log pi(a|s) * G_t * corr,
// G_t = gamma^(len-1-t) * (r - baseline), corr the clipped ratio of current
// to stored behavior probability, held constant under differentiation;
// N counts distinct episodes in the buffer
std::pair<Params, double> pg_gradient(const PolicyNet& policy, const ReplayBuffer& buffer,
                                      double gamma, ClipRange clip,
                                      double baseline = 0.0);

// one Adam ascent step; returns the pre-step loss
double pg_update(PolicyNet& policy, const ReplayBuffer& buffer, double lr, double gamma,
                 ClipRange clip, double baseline = 0.0);

void export_replay_csv(const ReplayBuffer& buffer, const std::string& path);

void save_policy(const PolicyNet& policy, const std::string& path);
PolicyNet load_policy(const std::string& path);

}  // namespace hal
