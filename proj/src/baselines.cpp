#include "hal/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hal/features.hpp"
#include "hal/rng.hpp"

namespace hal {
namespace {

void fail(const std::string& msg) { throw std::runtime_error("baselines: " + msg); }

void check_pool(const PoolState& pool, int b) {
  if (b < 1) fail("batch size must be positive");
  if (pool.unlabeled.size() < static_cast<std::size_t>(b))
    fail("unlabeled pool smaller than the batch");
}

// stable top-b by (score desc, pool index asc)
QueryResult top_by_score(const std::vector<int>& indices,
                         const std::vector<double>& scores, int b) {
  std::vector<std::size_t> order(indices.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) {
    if (scores[a] != scores[c]) return scores[a] > scores[c];
    return indices[a] < indices[c];
  });
  QueryResult out;
  for (int k = 0; k < b; ++k) {
    out.indices.push_back(indices[order[static_cast<std::size_t>(k)]]);
    out.scores.push_back(scores[order[static_cast<std::size_t>(k)]]);
  }
  return out;
}

}  // namespace

QueryResult random_query(const PoolState& pool, int b, std::uint64_t seed) {
  check_pool(pool, b);
  auto rng = make_rng(seed);
  std::vector<int> order(pool.unlabeled);
  shuffle_vec(order, rng);
  QueryResult out;
  out.indices.assign(order.begin(), order.begin() + b);
  out.scores.assign(static_cast<std::size_t>(b), 0.0);
  return out;
}

QueryResult entropy_query(const PoolState& pool, const ImageStore& store,
                          const Classifier& clf, int b) {
  check_pool(pool, b);
  std::vector<double> scores(pool.unlabeled.size());
  constexpr std::size_t kBlock = 256;
  for (std::size_t lo = 0; lo < pool.unlabeled.size(); lo += kBlock) {
    std::size_t hi = std::min(pool.unlabeled.size(), lo + kBlock);
    Mat batch(static_cast<long>(hi - lo), store.images.cols());
    for (std::size_t i = lo; i < hi; ++i)
      batch.row(static_cast<long>(i - lo)) = store.images.row(pool.unlabeled[i]);
    auto fwd = forward(clf.spec, clf.params, batch, Mode::Eval, 0);
    for (long r = 0; r < fwd.output.rows(); ++r) {
      double h = 0.0;
      for (long c = 0; c < fwd.output.cols(); ++c)
        if (fwd.output(r, c) > 0.0) h -= fwd.output(r, c) * std::log(fwd.output(r, c));
      scores[lo + static_cast<std::size_t>(r)] = h;
    }
  }
  return top_by_score(pool.unlabeled, scores, b);
}

QueryResult dbal_query(const PoolState& pool, const ImageStore& store,
                       const Classifier& clf, int b, int n_mc, std::uint64_t seed) {
  check_pool(pool, b);
  std::vector<double> scores(pool.unlabeled.size());
  for (std::size_t i = 0; i < pool.unlabeled.size(); ++i) {
    int idx = pool.unlabeled[i];
    auto mc = mc_dropout_predict(clf, store.images.row(idx).transpose(), n_mc,
                                 mix(seed, static_cast<std::uint64_t>(idx)));
    scores[i] = mutual_information(mc.clean, mc.noisy);
  }
  return top_by_score(pool.unlabeled, scores, b);
}

QueryResult kcenter_query(const PoolState& pool, const ImageStore& store,
                          const Classifier& clf, int b) {
  check_pool(pool, b);
  if (pool.labeled.empty()) fail("labeled set is empty");

  Mat lab = embed_all(clf, pool.labeled, store);
  Mat unl = embed_all(clf, pool.unlabeled, store);

  std::vector<double> min_d2(pool.unlabeled.size(),
                             std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < pool.unlabeled.size(); ++i)
    for (long r = 0; r < lab.rows(); ++r) {
      double d2 = (unl.row(static_cast<long>(i)) - lab.row(r)).squaredNorm();
      min_d2[i] = std::min(min_d2[i], d2);
    }

  std::vector<bool> taken(pool.unlabeled.size(), false);
  QueryResult out;
  for (int k = 0; k < b; ++k) {
    std::size_t best = 0;
    bool found = false;
    for (std::size_t i = 0; i < pool.unlabeled.size(); ++i) {
      if (taken[i]) continue;
      if (!found || min_d2[i] > min_d2[best] ||
          (min_d2[i] == min_d2[best] && pool.unlabeled[i] < pool.unlabeled[best])) {
        best = i;
        found = true;
      }
    }
    taken[best] = true;
    out.indices.push_back(pool.unlabeled[best]);
    out.scores.push_back(std::sqrt(min_d2[best]));
    for (std::size_t i = 0; i < pool.unlabeled.size(); ++i) {
      if (taken[i]) continue;
      double d2 =
          (unl.row(static_cast<long>(i)) - unl.row(static_cast<long>(best))).squaredNorm();
      min_d2[i] = std::min(min_d2[i], d2);
    }
  }
  return out;
}

}  // namespace hal
