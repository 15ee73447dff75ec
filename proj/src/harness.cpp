#include "hal/harness.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

#include "hal/rng.hpp"

namespace hal {
namespace {

void fail(const std::string& msg) { throw std::runtime_error("harness: " + msg); }

void check_curve(const LearningCurve& c) {
  if (c.labels.size() != c.accuracy.size()) fail("curve arrays differ in length");
  if (c.labels.size() < 2) fail("curve needs at least two points");
  for (std::size_t i = 1; i < c.labels.size(); ++i)
    if (c.labels[i] <= c.labels[i - 1]) fail("curve labels must strictly increase");
  for (double a : c.accuracy)
    if (a < 0.0 || a > 1.0) fail("accuracy outside [0, 1]");
}

// twice the trapezoid area, kept unhalved so the edge cases stay exact
double trap_raw(const LearningCurve& c) {
  double s = 0.0;
  for (std::size_t i = 1; i < c.labels.size(); ++i)
    s += static_cast<double>(c.labels[i] - c.labels[i - 1]) *
         (c.accuracy[i] + c.accuracy[i - 1]);
  return s;
}

QueryResult baseline_query(const EpisodeConfig& cfg, BaselineMethod method,
                           const PoolState& pool, const ImageStore& store,
                           const Classifier& clf, std::uint64_t step_seed) {
  switch (method) {
    case BaselineMethod::Random:
      return random_query(pool, cfg.batch, mix(step_seed, salt::kTournament));
    case BaselineMethod::Entropy:
      return entropy_query(pool, store, clf, cfg.batch);
    case BaselineMethod::Dbal:
      return dbal_query(pool, store, clf, cfg.batch, cfg.n_mc,
                        mix(step_seed, salt::kMc));
    case BaselineMethod::Kcenter:
      return kcenter_query(pool, store, clf, cfg.batch);
  }
  fail("unknown baseline method");
  return {};
}

struct EpisodeScaffold {
  PoolState pool;
  Classifier clf;
};

EpisodeScaffold start_episode(const EpisodeConfig& cfg, const ImageStore& store,
                              std::uint64_t seed) {
  EpisodeScaffold s{make_splits(store, cfg.n_labeled, cfg.n_val, seed), {}};
  ClassifierConfig cc = cfg.clf;
  cc.seed = mix(seed, salt::kClassifier);
  cc.mode = cfg.retrain;
  s.clf = make_classifier(classifier_spec(cfg, store), cc);
  return s;
}

template <typename SelectFn>
EpisodeResult episode_loop(const EpisodeConfig& cfg, const ImageStore& store,
                           std::uint64_t seed, SelectFn&& select) {
  cfg.validate();
  auto sc = start_episode(cfg, store, seed);
  EpisodeResult res;
  train_classifier(sc.clf, sc.pool, store);
  double acc = evaluate(sc.clf, sc.pool.validation, store);
  res.initial_accuracy = acc;
  res.curve.labels.push_back(static_cast<long>(sc.pool.labeled.size()));
  res.curve.accuracy.push_back(acc);

  for (int s = 0; s < cfg.steps; ++s) {
    std::uint64_t step_seed = mix(mix(seed, salt::kStep), static_cast<std::uint64_t>(s));
    auto [indices, trajectories] = select(sc.clf, sc.pool, step_seed);
    sc.pool.move_to_labeled(indices);
    train_classifier(sc.clf, sc.pool, store);
    double acc_after = evaluate(sc.clf, sc.pool.validation, store);
    res.rewards.push_back(acc_after - acc);
    acc = acc_after;
    res.curve.labels.push_back(static_cast<long>(sc.pool.labeled.size()));
    res.curve.accuracy.push_back(acc);
    res.step_indices.push_back(std::move(indices));
    res.step_trajectories.push_back(std::move(trajectories));
  }
  res.final_accuracy = acc;
  return res;
}

}  // namespace

void EpisodeConfig::validate() const {
  if (episodes < 1 || steps < 1 || batch < 1 || n_labeled < 1 || n_val < 1 ||
      n_mc < 1 || policy_hidden < 1 || replay_capacity < 1 || repeats < 1)
    fail("all sizes must be positive");
  if (pool_size < 0) fail("negative pool size");
  if (pool_size > 0 && pool_size < steps * batch)
    fail("pool smaller than the query budget");
  if (gamma <= 0.0 || gamma > 1.0) fail("gamma must lie in (0, 1]");
  if (policy_lr <= 0.0) fail("policy lr must be positive");
  if (clip.lo > clip.hi || clip.lo < 0.0) fail("bad correction clip range");
}

ImageStore stratified_subsample(const ImageStore& store, int m, std::uint64_t seed) {
  store.validate();
  for (auto p : store.provenance)
    if (p == Provenance::Duplicate)
      fail("subsample the base store before synthesizing copies");
  if (m == 0 || m >= store.n()) return store;
  int L = store.n_classes;
  if (m % L != 0) fail("subsample size must be a multiple of the class count");
  int per_class = m / L;

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(L));
  for (int i = 0; i < store.n(); ++i)
    by_class[static_cast<std::size_t>(store.labels(i))].push_back(i);

  auto rng = make_rng(mix(seed, salt::kPool));
  std::vector<int> chosen;
  for (int c = 0; c < L; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(idx.size()) < per_class)
      fail("class " + std::to_string(c) + " too small for the subsample");
    shuffle_vec(idx, rng);
    chosen.insert(chosen.end(), idx.begin(), idx.begin() + per_class);
  }
  std::sort(chosen.begin(), chosen.end());

  ImageStore out;
  out.channels = store.channels;
  out.height = store.height;
  out.width = store.width;
  out.n_classes = L;
  out.images.resize(m, store.images.cols());
  out.labels.resize(m);
  out.provenance.resize(static_cast<std::size_t>(m));
  for (int r = 0; r < m; ++r) {
    int i = chosen[static_cast<std::size_t>(r)];
    out.images.row(r) = store.images.row(i);
    out.labels(r) = store.labels(i);
    out.provenance[static_cast<std::size_t>(r)] = store.provenance[static_cast<std::size_t>(i)];
  }
  return out;
}

ModelSpec classifier_spec(const EpisodeConfig& cfg, const ImageStore& store) {
  Shape input{store.channels, store.height, store.width};
  return cfg.model == ModelKind::Conv ? conv_spec(input, store.n_classes)
                                      : mlp_spec(input, store.n_classes);
}

EpisodeResult run_episode(const EpisodeConfig& cfg, const PolicyNet& policy,
                          const ImageStore& store, std::uint64_t seed, SelectMode mode) {
  if (policy.obs_dim != Observation::dim(store.n_classes))
    fail("policy observation width does not match the store");
  return episode_loop(
      cfg, store, seed,
      [&](const Classifier& clf, const PoolState& pool, std::uint64_t step_seed) {
        auto stats = class_stats(clf, pool, store, cfg.representation);
        auto sel = select_batch(policy, pool, store, clf, stats, cfg.batch, cfg.n_mc,
                                step_seed, mode, cfg.toggles);
        return std::pair(sel.indices, sel.trajectories);
      });
}

EpisodeResult run_baseline_episode(const EpisodeConfig& cfg, BaselineMethod method,
                                   const ImageStore& store, std::uint64_t seed) {
  return episode_loop(
      cfg, store, seed,
      [&](const Classifier& clf, const PoolState& pool, std::uint64_t step_seed) {
        auto q = baseline_query(cfg, method, pool, store, clf, step_seed);
        return std::pair(q.indices, std::vector<Trajectory>{});
      });
}

PolicyTrainResult train_policy(const EpisodeConfig& cfg, const ImageStore& store) {
  cfg.validate();
  PolicyTrainResult out{make_policy_net(Observation::dim(store.n_classes),
                                        cfg.policy_hidden, mix(cfg.seed, salt::kPolicy)),
                        {},
                        {}};
  ReplayBuffer buffer(static_cast<std::size_t>(cfg.replay_capacity));
  for (int ep = 0; ep < cfg.episodes; ++ep) {
    std::uint64_t ep_seed = mix(mix(cfg.seed, salt::kEpisode), static_cast<std::uint64_t>(ep));
    auto res = run_episode(cfg, out.policy, store, ep_seed, SelectMode::Sample);
    for (int s = 0; s < cfg.steps; ++s)
      buffer.push({ep, s, res.rewards[static_cast<std::size_t>(s)],
                   res.step_trajectories[static_cast<std::size_t>(s)]});
    double baseline = cfg.baseline_subtract ? buffer.mean_reward() : 0.0;
    out.losses.push_back(
        pg_update(out.policy, buffer, cfg.policy_lr, cfg.gamma, cfg.clip, baseline));
    out.episode_rewards.push_back(std::move(res.rewards));
  }
  return out;
}

double alc_norm(const LearningCurve& curve, const LearningCurve& rand_curve,
                double a_max) {
  check_curve(curve);
  check_curve(rand_curve);
  if (curve.labels != rand_curve.labels) fail("curves use different label grids");
  if (a_max < 0.0 || a_max > 1.0) fail("full-pool accuracy outside [0, 1]");
  double range = static_cast<double>(curve.labels.back() - curve.labels.front());
  double raw_c = trap_raw(curve);
  double raw_r = trap_raw(rand_curve);
  double denom = 2.0 * range * a_max - raw_r;
  if (denom <= 0.0) fail("degenerate normalization: random curve reaches a_max");
  return (raw_c - raw_r) / denom;
}

double full_pool_accuracy(const EpisodeConfig& cfg, const ImageStore& store,
                          std::uint64_t seed) {
  cfg.validate();
  PoolState pool = make_splits(store, cfg.n_labeled, cfg.n_val, seed);
  pool.labeled.insert(pool.labeled.end(), pool.unlabeled.begin(), pool.unlabeled.end());
  std::sort(pool.labeled.begin(), pool.labeled.end());
  pool.unlabeled.clear();
  ClassifierConfig cc = cfg.clf;
  cc.seed = mix(seed, salt::kClassifier);
  cc.mode = RetrainMode::Scratch;
  Classifier clf = make_classifier(classifier_spec(cfg, store), cc);
  train_classifier(clf, pool, store);
  return evaluate(clf, pool.validation, store);
}

std::uint64_t repeat_seed(const EpisodeConfig& cfg, int repeat) {
  return mix(mix(cfg.seed, salt::kRepeat), static_cast<std::uint64_t>(repeat));
}

std::vector<AblationRow> run_ablation_representation(const EpisodeConfig& cfg,
                                                     const ImageStore& store) {
  constexpr Representation kReps[] = {Representation::Mean, Representation::Median,
                                      Representation::Mode, Representation::Max,
                                      Representation::Min};
  std::map<std::uint64_t, double> a_max_cache;
  std::vector<AblationRow> rows;
  for (Representation rep : kReps) {
    EpisodeConfig rcfg = cfg;
    rcfg.representation = rep;
    for (int r = 0; r < cfg.repeats; ++r) {
      std::uint64_t rs = repeat_seed(cfg, r);
      rcfg.seed = rs;
      auto trained = train_policy(rcfg, store);
      std::uint64_t es = mix(rs, salt::kEval);
      auto pol = run_episode(rcfg, trained.policy, store, es, SelectMode::Greedy);
      auto rnd = run_baseline_episode(rcfg, BaselineMethod::Random, store, es);
      auto [it, fresh] = a_max_cache.try_emplace(es, 0.0);
      if (fresh) it->second = full_pool_accuracy(rcfg, store, es);
      rows.push_back({rep, r, alc_norm(pol.curve, rnd.curve, it->second),
                      std::move(rnd.curve)});
    }
  }
  return rows;
}

std::vector<TransferCurves> run_transfer(const EpisodeConfig& cfg,
                                         const ImageStore& gray_source, double blend,
                                         std::uint64_t field_seed) {
  ImageStore source = make_domain_shift(gray_source, 0.0, field_seed);
  ImageStore target = make_domain_shift(gray_source, blend, field_seed);
  PolicyNet on_source = train_policy(cfg, source).policy;
  PolicyNet on_target = train_policy(cfg, target).policy;

  std::vector<TransferCurves> out;
  for (int r = 0; r < cfg.repeats; ++r) {
    std::uint64_t es = mix(repeat_seed(cfg, r), salt::kEval);
    TransferCurves tc;
    tc.repeat = r;
    tc.transferred = run_episode(cfg, on_source, target, es, SelectMode::Greedy).curve;
    tc.fresh = run_episode(cfg, on_target, target, es, SelectMode::Greedy).curve;
    tc.source_ref = run_episode(cfg, on_source, source, es, SelectMode::Greedy).curve;
    out.push_back(std::move(tc));
  }
  return out;
}

DuplicatedResult run_duplicated(const EpisodeConfig& cfg, const ImageStore& base,
                                double dup_fraction, double noise_sigma) {
  ImageStore train_store =
      make_duplicated_pool(base, dup_fraction, noise_sigma, mix(cfg.seed, salt::kDup));
  DuplicatedResult out{train_policy(cfg, train_store).policy, {}};

  auto dup_share = [](const std::vector<std::vector<int>>& picks,
                      const std::vector<Provenance>& prov) {
    long dup = 0, total = 0;
    for (const auto& step : picks)
      for (int i : step) {
        total += 1;
        if (prov[static_cast<std::size_t>(i)] == Provenance::Duplicate) dup += 1;
      }
    return total == 0 ? 0.0 : static_cast<double>(dup) / static_cast<double>(total);
  };

  for (int r = 0; r < cfg.repeats; ++r) {
    std::uint64_t rs = repeat_seed(cfg, r);
    ImageStore dstore =
        make_duplicated_pool(base, dup_fraction, noise_sigma, mix(rs, salt::kDup));
    std::uint64_t es = mix(rs, salt::kEval);
    auto pol = run_episode(cfg, out.policy, dstore, es, SelectMode::Greedy);
    auto rnd = run_baseline_episode(cfg, BaselineMethod::Random, dstore, es);
    double a_max = full_pool_accuracy(cfg, dstore, es);
    DuplicatedRepeat rep;
    rep.repeat = r;
    rep.policy_alc = alc_norm(pol.curve, rnd.curve, a_max);
    rep.random_alc = alc_norm(rnd.curve, rnd.curve, a_max);
    rep.policy_dup_fraction = dup_share(pol.step_indices, dstore.provenance);
    rep.random_dup_fraction = dup_share(rnd.step_indices, dstore.provenance);
    rep.policy_curve = std::move(pol.curve);
    rep.random_curve = std::move(rnd.curve);
    rep.policy_indices = std::move(pol.step_indices);
    rep.random_indices = std::move(rnd.step_indices);
    rep.provenance = dstore.provenance;
    out.repeats.push_back(std::move(rep));
  }
  return out;
}

}  // namespace hal
