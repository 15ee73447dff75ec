#pragma once

#include <cstdint>
#include <vector>

#include "hal/baselines.hpp"
#include "hal/classifier.hpp"
#include "hal/data.hpp"
#include "hal/features.hpp"
#include "hal/policy.hpp"
#include "hal/types.hpp"

namespace hal {

enum class ModelKind { Conv, Mlp };

struct EpisodeConfig {
  int episodes = 50;
  int steps = 10;
  int batch = 10;
  int pool_size = 2000;  // 0 keeps the whole store
  int n_labeled = 50;
  int n_val = 1000;
  double gamma = 0.9998;
  double policy_lr = 1e-3;
  int n_mc = 10;
  ClassifierConfig clf;  // its seed and mode are derived per episode
  RetrainMode retrain = RetrainMode::Scratch;
  Representation representation = Representation::Mean;
  FeatureToggles toggles;
  ModelKind model = ModelKind::Conv;
  int policy_hidden = 64;
  int replay_capacity = 1000;  // episode-step entries
  ClipRange clip;
  bool baseline_subtract = false;
  std::uint64_t seed = 1;
  int repeats = 15;

  void validate() const;  // sizes positive, pool covers steps*batch
};

struct LearningCurve {
  std::vector<long> labels;
  std::vector<double> accuracy;
};

struct EpisodeResult {
  std::vector<double> rewards;
  LearningCurve curve;
  std::vector<std::vector<Trajectory>> step_trajectories;
  std::vector<std::vector<int>> step_indices;
  double initial_accuracy = 0.0, final_accuracy = 0.0;
};

// class-balanced subsample of m items; m == 0 or m >= n keeps the store
ImageStore stratified_subsample(const ImageStore& store, int m, std::uint64_t seed);

ModelSpec classifier_spec(const EpisodeConfig& cfg, const ImageStore& store);

// one active-learning episode: fresh splits and classifier from seed, then
// steps of (stats -> select -> reveal labels -> retrain -> reward); the
// reward is the validation accuracy gain on a fixed validation split
EpisodeResult run_episode(const EpisodeConfig& cfg, const PolicyNet& policy,
                          const ImageStore& store, std::uint64_t seed, SelectMode mode);

enum class BaselineMethod { Random, Entropy, Dbal, Kcenter };

EpisodeResult run_baseline_episode(const EpisodeConfig& cfg, BaselineMethod method,
                                   const ImageStore& store, std::uint64_t seed);

struct PolicyTrainResult {
  PolicyNet policy;
  std::vector<std::vector<double>> episode_rewards;  // per episode, per step
  std::vector<double> losses;
};

// episodes in sample mode, each followed by one policy-gradient step on the
// replay buffer
PolicyTrainResult train_policy(const EpisodeConfig& cfg, const ImageStore& store);

// mean accuracy over the label range, linearly interpolated (trapezoid),
// normalized against a random-query curve and the full-pool accuracy:
// (ALC - A_rand) / (a_max - A_rand); exact 0 for curve == rand_curve and
// exact 1 for a curve constant at a_max
double alc_norm(const LearningCurve& curve, const LearningCurve& rand_curve,
                double a_max);

// full-pool accuracy for this seed's splits: trains once on labeled plus
// unlabeled and evaluates on the validation split
double full_pool_accuracy(const EpisodeConfig& cfg, const ImageStore& store,
                          std::uint64_t seed);

std::uint64_t repeat_seed(const EpisodeConfig& cfg, int repeat);

struct AblationRow {
  Representation representation;
  int repeat = 0;
  double alc = 0.0;
  LearningCurve rand_curve;  // matched seeds make this identical across rows
};

// trains one policy per (representation, repeat) pair with matched seeds and
// scores its greedy curve against the shared random curve
std::vector<AblationRow> run_ablation_representation(const EpisodeConfig& cfg,
                                                     const ImageStore& store);

struct TransferCurves {
  int repeat = 0;
  LearningCurve transferred;  // source-trained policy on the target domain
  LearningCurve fresh;        // target-trained policy on the target domain
  LearningCurve source_ref;   // source-trained policy on the source domain
};

// both domains pass through the color-blend canonicalization, so blend 0
// makes target and source bitwise equal
std::vector<TransferCurves> run_transfer(const EpisodeConfig& cfg,
                                         const ImageStore& gray_source, double blend,
                                         std::uint64_t field_seed);

struct DuplicatedRepeat {
  int repeat = 0;
  double policy_alc = 0.0, random_alc = 0.0;
  double policy_dup_fraction = 0.0, random_dup_fraction = 0.0;
  LearningCurve policy_curve, random_curve;
  std::vector<std::vector<int>> policy_indices, random_indices;
  std::vector<Provenance> provenance;  // of the repeat's pool
};

struct DuplicatedResult {
  PolicyNet policy;
  std::vector<DuplicatedRepeat> repeats;
};

// trains a policy on one duplicated pool, then scores it against random
// querying on freshly duplicated pools, one per repeat seed
DuplicatedResult run_duplicated(const EpisodeConfig& cfg, const ImageStore& base,
                                double dup_fraction, double noise_sigma);

}  // namespace hal
