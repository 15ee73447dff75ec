#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "hal/io.hpp"
#include "hal/policy.hpp"
#include "hal/rng.hpp"
#include "synth.hpp"

using namespace hal;

namespace {

// deterministic comparison: higher scalar score wins outright
const MatchFn kArgmaxMatch = [](const Vec& l, const Vec& r) {
  Vec p(2);
  if (l(0) > r(0)) {
    p << 1.0, 0.0;
  } else {
    p << 0.0, 1.0;
  }
  return p;
};

std::vector<Vec> scalar_obs(const std::vector<double>& scores) {
  std::vector<Vec> obs;
  for (double s : scores) {
    Vec v(1);
    v << s;
    obs.push_back(v);
  }
  return obs;
}

ReplayEntry one_transition_entry(int episode, int step, const Vec& state, int action,
                                 double behavior, double reward) {
  Trajectory traj;
  traj.winner = 0;
  traj.transitions.push_back({state, action, behavior, 0});
  traj.comparisons = 1;
  ReplayEntry e;
  e.episode = episode;
  e.step = step;
  e.reward = reward;
  e.trajectories = {traj};
  return e;
}

}  // namespace

TEST_CASE("untrained policy answers a coin flip") {
  auto policy = make_policy_net(4, 8, 3);
  CHECK(policy.obs_dim == 4);
  auto rng = make_rng(1);
  for (int i = 0; i < 5; ++i) {
    Vec l(4), r(4);
    for (int k = 0; k < 4; ++k) {
      l(k) = uniform_real(rng);
      r(k) = uniform_real(rng);
    }
    Vec p = policy_prob(policy, l, r);
    CHECK(p(0) == 0.5);
    CHECK(p(1) == 0.5);
  }
  Vec bad(3);
  bad.setZero();
  Vec ok(4);
  ok.setZero();
  CHECK_THROWS(policy_prob(policy, bad, ok));
}

TEST_CASE("tournament winner matches brute-force argmax") {
  auto rng = make_rng(77);
  for (int m : {1, 2, 3, 4, 5, 6, 7, 8, 9, 12, 13, 16, 17, 32, 33}) {
    std::vector<double> scores;
    std::vector<int> indices;
    for (int i = 0; i < m; ++i) {
      scores.push_back(uniform_real(rng));
      indices.push_back(100 + i);
    }
    auto obs = scalar_obs(scores);
    int best = 100 + static_cast<int>(std::max_element(scores.begin(), scores.end()) -
                                      scores.begin());
    double best_score = *std::max_element(scores.begin(), scores.end());

    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      auto traj = run_tournament(kArgmaxMatch, indices, obs, seed, SelectMode::Greedy);
      CHECK(traj.winner == best);
      CHECK(traj.comparisons == m - 1);
      if (m == 1) CHECK(traj.transitions.empty());
      int max_depth = static_cast<int>(std::ceil(std::log2(std::max(m, 1))));
      CHECK(static_cast<int>(traj.transitions.size()) <= max_depth);
      if (m >= 2) CHECK(traj.transitions.size() >= 1);
      for (std::size_t t = 0; t < traj.transitions.size(); ++t) {
        const auto& tr = traj.transitions[t];
        CHECK(tr.depth == static_cast<int>(t));
        CHECK(tr.state.size() == 2);
        // the eventual winner won every match on its path
        CHECK(tr.state(tr.action) == best_score);
        CHECK(tr.behavior_prob == 1.0 - 1e-6);
      }
      // a deterministic match makes sampling and greedy agree
      auto sampled = run_tournament(kArgmaxMatch, indices, obs, seed, SelectMode::Sample);
      CHECK(sampled.winner == best);
    }
  }
}

TEST_CASE("powers of two play a full bracket") {
  auto obs = scalar_obs({0.1, 0.9, 0.4, 0.3, 0.8, 0.2, 0.6, 0.7});
  std::vector<int> idx{0, 1, 2, 3, 4, 5, 6, 7};
  auto traj = run_tournament(kArgmaxMatch, idx, obs, 5, SelectMode::Greedy);
  CHECK(traj.winner == 1);
  CHECK(traj.transitions.size() == 3);
  CHECK(traj.comparisons == 7);
}

TEST_CASE("sampling follows the match probabilities") {
  Vec p(2);
  p << 0.75, 0.25;
  MatchFn fixed = [&p](const Vec&, const Vec&) { return p; };
  auto obs = scalar_obs({0.0, 1.0});
  std::vector<int> idx{10, 20};

  int left_wins = 0;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    auto traj = run_tournament(fixed, idx, obs, seed, SelectMode::Sample);
    REQUIRE(traj.transitions.size() == 1);
    const auto& tr = traj.transitions[0];
    CHECK(tr.behavior_prob == (tr.action == 0 ? 0.75 : 0.25));
    left_wins += tr.action == 0;
  }
  CHECK(left_wins > 400 * 0.65);
  CHECK(left_wins < 400 * 0.85);
}

TEST_CASE("tournaments are seeded") {
  Vec half(2);
  half << 0.5, 0.5;
  MatchFn coin = [&half](const Vec&, const Vec&) { return half; };
  std::vector<double> scores;
  std::vector<int> idx;
  for (int i = 0; i < 8; ++i) {
    scores.push_back(0.1 * i);
    idx.push_back(i);
  }
  auto obs = scalar_obs(scores);

  auto a = run_tournament(coin, idx, obs, 9, SelectMode::Sample);
  auto b = run_tournament(coin, idx, obs, 9, SelectMode::Sample);
  CHECK(a.winner == b.winner);
  REQUIRE(a.transitions.size() == b.transitions.size());
  for (std::size_t t = 0; t < a.transitions.size(); ++t)
    CHECK(a.transitions[t].state == b.transitions[t].state);

  std::set<int> winners;
  for (std::uint64_t seed = 0; seed < 30; ++seed)
    winners.insert(run_tournament(coin, idx, obs, seed, SelectMode::Sample).winner);
  CHECK(winners.size() > 1);
}

TEST_CASE("policy overload equals the explicit match closure") {
  auto policy = make_policy_net(2, 8, 4);
  policy.params = init_params(policy.spec, 11);  // non-degenerate probabilities
  auto rng = make_rng(2);
  std::vector<Vec> obs;
  std::vector<int> idx;
  for (int i = 0; i < 7; ++i) {
    Vec v(2);
    v << uniform_real(rng), uniform_real(rng);
    obs.push_back(v);
    idx.push_back(i);
  }
  MatchFn closure = [&policy](const Vec& l, const Vec& r) {
    return policy_prob(policy, l, r);
  };
  auto a = run_tournament(policy, idx, obs, 3, SelectMode::Sample);
  auto b = run_tournament(closure, idx, obs, 3, SelectMode::Sample);
  CHECK(a.winner == b.winner);
  REQUIRE(a.transitions.size() == b.transitions.size());
  for (std::size_t t = 0; t < a.transitions.size(); ++t) {
    CHECK(a.transitions[t].behavior_prob == b.transitions[t].behavior_prob);
    CHECK(a.transitions[t].action == b.transitions[t].action);
  }
}

TEST_CASE("tournament rejects malformed inputs") {
  auto obs = scalar_obs({0.5});
  CHECK_THROWS(run_tournament(kArgmaxMatch, {}, {}, 0, SelectMode::Greedy));
  CHECK_THROWS(run_tournament(kArgmaxMatch, {1, 2}, obs, 0, SelectMode::Greedy));
  MatchFn broken = [](const Vec&, const Vec&) { return Vec::Ones(3); };
  CHECK_THROWS(
      run_tournament(broken, {1, 2}, scalar_obs({0.1, 0.2}), 0, SelectMode::Greedy));
}

TEST_CASE("batch selection removes each winner before the next round") {
  auto store = synth::make_store(60, 2, 6, 6, 50);
  auto pool = make_splits(store, 10, 20, 3);
  ClassifierConfig ccfg;
  ccfg.epochs = 2;
  ccfg.seed = 4;
  auto clf = make_classifier(mlp_spec({1, 6, 6}, 2), ccfg);
  train_classifier(clf, pool, store);
  auto stats = class_stats(clf, pool, store);
  auto policy = make_policy_net(Observation::dim(2), 8, 1);

  int u = static_cast<int>(pool.unlabeled.size());
  auto sel = select_batch(policy, pool, store, clf, stats, 4, 3, 21, SelectMode::Sample);
  REQUIRE(sel.indices.size() == 4);
  REQUIRE(sel.trajectories.size() == 4);
  std::set<int> uniq(sel.indices.begin(), sel.indices.end());
  CHECK(uniq.size() == 4);
  for (int k = 0; k < 4; ++k) {
    CHECK(sel.trajectories[static_cast<std::size_t>(k)].winner ==
          sel.indices[static_cast<std::size_t>(k)]);
    CHECK(sel.trajectories[static_cast<std::size_t>(k)].comparisons == u - k - 1);
    CHECK(std::count(pool.unlabeled.begin(), pool.unlabeled.end(),
                     sel.indices[static_cast<std::size_t>(k)]) == 1);
  }

  auto again = select_batch(policy, pool, store, clf, stats, 4, 3, 21, SelectMode::Sample);
  CHECK(again.indices == sel.indices);

  CHECK_THROWS(select_batch(policy, pool, store, clf, stats, u + 1, 3, 21,
                            SelectMode::Sample));
}

TEST_CASE("replay buffer evicts oldest entries and validates pushes") {
  ReplayBuffer buffer(3);
  CHECK(buffer.empty());
  CHECK(buffer.mean_reward() == 0.0);

  Vec state(2);
  state << 0.1, 0.2;
  for (int e = 0; e < 6; ++e)
    buffer.push(one_transition_entry(e, 0, state, 0, 0.5, static_cast<double>(e)));
  CHECK(buffer.size() == 3);
  CHECK(buffer.entries().front().episode == 3);
  CHECK(buffer.trajectory_count() == 3);
  CHECK(buffer.mean_reward() == doctest::Approx(4.0));

  CHECK_THROWS(buffer.push(one_transition_entry(9, 0, state, 0, 0.5,
                                                std::nan(""))));
  CHECK_THROWS(buffer.push(one_transition_entry(9, 0, state, 0, 0.0, 1.0)));
  CHECK_THROWS(buffer.push(one_transition_entry(9, 0, state, 0, 1.5, 1.0)));
  CHECK_THROWS(ReplayBuffer(0));
}

TEST_CASE("gradient loss normalizes by distinct episodes") {
  auto policy = make_policy_net(1, 4, 7);  // zero final layer: every prob is 0.5
  Vec state(2);
  state << 0.3, 0.9;
  double ln2 = std::log(2.0);

  ReplayBuffer one(10);
  one.push(one_transition_entry(0, 0, state, 0, 0.5, 1.0));
  auto [g1, l1] = pg_gradient(policy, one, 1.0, {});
  CHECK(l1 == doctest::Approx(ln2));

  // a second distinct episode doubles mass and the normalizer: loss unchanged
  ReplayBuffer two(10);
  two.push(one_transition_entry(0, 0, state, 0, 0.5, 1.0));
  two.push(one_transition_entry(1, 0, state, 0, 0.5, 1.0));
  auto [g2, l2] = pg_gradient(policy, two, 1.0, {});
  CHECK(l2 == doctest::Approx(l1));

  // two steps of the same episode share the normalizer: loss doubles
  ReplayBuffer steps(10);
  steps.push(one_transition_entry(0, 0, state, 0, 0.5, 1.0));
  steps.push(one_transition_entry(0, 1, state, 0, 0.5, 1.0));
  auto [g3, l3] = pg_gradient(policy, steps, 1.0, {});
  CHECK(l3 == doctest::Approx(2.0 * l1));
}

TEST_CASE("discounting weights the root-most transition highest") {
  auto policy = make_policy_net(1, 4, 7);
  Vec sa(2), sb(2);
  sa << 0.1, 0.2;
  sb << 0.5, 0.6;
  Trajectory traj;
  traj.winner = 0;
  traj.transitions.push_back({sa, 0, 0.5, 0});
  traj.transitions.push_back({sb, 1, 0.5, 1});
  traj.comparisons = 2;
  ReplayEntry e;
  e.episode = 0;
  e.reward = 1.0;
  e.trajectories = {traj};
  ReplayBuffer buffer(4);
  buffer.push(e);

  double gamma = 0.25;
  auto [g, loss] = pg_gradient(policy, buffer, gamma, {});
  CHECK(loss == doctest::Approx((1.0 + gamma) * std::log(2.0)));
}

TEST_CASE("importance correction is clipped") {
  auto policy = make_policy_net(1, 4, 7);
  Vec state(2);
  state << 0.3, 0.9;
  ReplayBuffer buffer(4);
  buffer.push(one_transition_entry(0, 0, state, 0, 0.5, 1.0));

  // current-to-behavior ratio is exactly 1; a clip floor above 1 bites
  auto [g, loss] = pg_gradient(policy, buffer, 1.0, {2.0, 3.0});
  CHECK(loss == doctest::Approx(2.0 * std::log(2.0)));
  auto [g2, loss2] = pg_gradient(policy, buffer, 1.0, {0.1, 0.5});
  CHECK(loss2 == doctest::Approx(0.5 * std::log(2.0)));
}

TEST_CASE("gradient matches finite differences when the clip saturates") {
  auto policy = make_policy_net(3, 6, 13);
  policy.params = init_params(policy.spec, 29);

  auto rng = make_rng(4);
  ReplayBuffer buffer(8);
  for (int ep = 0; ep < 2; ++ep) {
    ReplayEntry e;
    e.episode = ep;
    e.step = 0;
    e.reward = ep == 0 ? 0.7 : -0.4;
    for (int t = 0; t < 2; ++t) {
      Trajectory traj;
      traj.winner = t;
      int len = t == 0 ? 2 : 1;
      for (int k = 0; k < len; ++k) {
        Vec s(6);
        for (int j = 0; j < 6; ++j) s(j) = uniform_real(rng) - 0.5;
        // tiny stored probability saturates the ratio at the upper clip,
        // making the surrogate loss differentiable in the parameters alone
        traj.transitions.push_back({s, (k + t) % 2, 1e-6, k});
      }
      traj.comparisons = len;
      e.trajectories.push_back(traj);
    }
    buffer.push(e);
  }

  double gamma = 0.9, baseline = 0.1;
  ClipRange clip;
  auto [grads, loss] = pg_gradient(policy, buffer, gamma, clip, baseline);
  CHECK(std::isfinite(loss));

  double h = 1e-5;
  for (std::size_t ti = 0; ti < policy.params.tensors.size(); ++ti) {
    Mat& tensor = policy.params.tensors[ti];
    for (long r = 0; r < tensor.rows(); ++r)
      for (long c = 0; c < tensor.cols(); ++c) {
        double keep = tensor(r, c);
        tensor(r, c) = keep + h;
        double up = pg_gradient(policy, buffer, gamma, clip, baseline).second;
        tensor(r, c) = keep - h;
        double down = pg_gradient(policy, buffer, gamma, clip, baseline).second;
        tensor(r, c) = keep;
        double fd = (up - down) / (2.0 * h);
        double an = grads.tensors[ti](r, c);
        double scale = std::max({std::abs(fd), std::abs(an), 1e-6});
        CHECK(std::abs(fd - an) / scale < 1e-4);
      }
  }
}

TEST_CASE("updates push probability toward rewarded actions") {
  Vec state(2);
  state << 0.2, 0.7;
  Vec left = state.head(1), right = state.tail(1);

  auto up = make_policy_net(1, 8, 5);
  ReplayBuffer pos(4);
  pos.push(one_transition_entry(0, 0, state, 0, 0.5, 1.0));
  double loss = pg_update(up, pos, 0.05, 1.0, {});
  CHECK(loss == doctest::Approx(std::log(2.0)));
  CHECK(policy_prob(up, left, right)(0) > 0.5);

  auto down = make_policy_net(1, 8, 5);
  ReplayBuffer neg(4);
  neg.push(one_transition_entry(0, 0, state, 0, 0.5, -1.0));
  pg_update(down, neg, 0.05, 1.0, {});
  CHECK(policy_prob(down, left, right)(0) < 0.5);
}

TEST_CASE("a baseline equal to every reward freezes the policy") {
  Vec state(2);
  state << 0.4, 0.1;
  auto policy = make_policy_net(1, 8, 9);
  auto before = policy.params;
  ReplayBuffer buffer(4);
  buffer.push(one_transition_entry(0, 0, state, 0, 0.5, 0.3));
  buffer.push(one_transition_entry(1, 0, state, 1, 0.5, 0.3));
  pg_update(policy, buffer, 0.05, 1.0, {}, buffer.mean_reward());
  for (std::size_t i = 0; i < before.tensors.size(); ++i)
    CHECK(policy.params.tensors[i] == before.tensors[i]);
}

TEST_CASE("empty trajectories contribute nothing") {
  auto policy = make_policy_net(1, 4, 2);
  ReplayBuffer buffer(4);
  ReplayEntry e;
  e.episode = 0;
  e.reward = 0.5;
  Trajectory lone;
  lone.winner = 3;
  e.trajectories = {lone};  // single-candidate tournament: no matches
  buffer.push(e);
  auto [grads, loss] = pg_gradient(policy, buffer, 1.0, {});
  CHECK(loss == 0.0);
  for (const auto& t : grads.tensors) CHECK(t.cwiseAbs().maxCoeff() == 0.0);

  ReplayBuffer empty(4);
  CHECK_THROWS(pg_gradient(policy, empty, 1.0, {}));
}

TEST_CASE("replay export writes one row per transition") {
  ReplayBuffer buffer(8);
  Vec state(2);
  state << 0.2, 0.6;
  buffer.push(one_transition_entry(0, 2, state, 1, 0.25, 0.5));
  buffer.push(one_transition_entry(1, 0, state, 0, 0.75, -0.25));

  auto dir = std::filesystem::temp_directory_path() / "hal_policy";
  std::filesystem::create_directories(dir);
  auto path = (dir / "replay.csv").string();
  export_replay_csv(buffer, path);
  auto table = read_csv(path);
  CHECK(table.header ==
        std::vector<std::string>{"episode", "step", "depth", "action",
                                 "behavior_prob", "reward"});
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0] == std::vector<std::string>{"0", "2", "0", "1", "0.25", "0.5"});
  CHECK(table.rows[1][5] == "-0.25");
}

TEST_CASE("policy checkpoints restore probabilities") {
  auto policy = make_policy_net(5, 8, 3);
  policy.params = init_params(policy.spec, 31);
  auto dir = std::filesystem::temp_directory_path() / "hal_policy";
  std::filesystem::create_directories(dir);
  auto path = (dir / "policy.ckpt").string();
  save_policy(policy, path);

  auto back = load_policy(path);
  CHECK(back.obs_dim == 5);
  auto rng = make_rng(8);
  Vec l(5), r(5);
  for (int k = 0; k < 5; ++k) {
    l(k) = uniform_real(rng);
    r(k) = uniform_real(rng);
  }
  CHECK(policy_prob(back, l, r) == policy_prob(policy, l, r));

  // odd input widths cannot split into a left/right pair
  ModelSpec odd;
  odd.input = {1, 1, 5};
  odd.layers = {dense(2), softmax()};
  odd.embedding_layer = 0;
  auto params = init_params(odd, 1);
  auto bad = (dir / "odd.ckpt").string();
  save_checkpoint(bad, odd, params);
  CHECK_THROWS(load_policy(bad));
}
