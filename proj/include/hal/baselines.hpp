#pragma once

#include <cstdint>
#include <vector>

#include "hal/classifier.hpp"
#include "hal/types.hpp"

namespace hal {

struct QueryResult {
  std::vector<int> indices;  // distinct, drawn from the unlabeled pool
  std::vector<double> scores;
};

QueryResult random_query(const PoolState& pool, int b, std::uint64_t seed);

// descending predictive entropy (natural log), ties toward lower pool index
QueryResult entropy_query(const PoolState& pool, const ImageStore& store,
                          const Classifier& clf, int b);

// descending mutual information over n_mc dropout passes; item i uses seed
// mix(seed, pool-index i)
QueryResult dbal_query(const PoolState& pool, const ImageStore& store,
                       const Classifier& clf, int b, int n_mc, std::uint64_t seed);

// greedy farthest-first in embedding space against labeled plus already
// selected items
QueryResult kcenter_query(const PoolState& pool, const ImageStore& store,
                          const Classifier& clf, int b);

}  // namespace hal
