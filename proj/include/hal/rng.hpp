#pragma once

#include <cstdint>
#include <random>

namespace hal {

// splitmix64 finalizer; decorrelates derived seeds even for small inputs
inline std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9e3779b97f4a7c15ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

// uniform in [0, n); n > 0
inline int uniform_index(std::mt19937_64& rng, int n) {
  return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng));
}

inline double uniform_real(std::mt19937_64& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

template <typename T>
void shuffle_vec(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
    std::swap(v[i - 1], v[j]);
  }
}

// stream salts for deriving independent rngs from one run seed
namespace salt {
inline constexpr std::uint64_t kSplit = 0x53504c49;
inline constexpr std::uint64_t kInit = 0x494e4954;
inline constexpr std::uint64_t kTrain = 0x5452414e;
inline constexpr std::uint64_t kDropout = 0x44524f50;
inline constexpr std::uint64_t kTournament = 0x544f5552;
inline constexpr std::uint64_t kObserve = 0x4f425356;
inline constexpr std::uint64_t kEpisode = 0x45504953;
inline constexpr std::uint64_t kStep = 0x53544550;
inline constexpr std::uint64_t kMc = 0x4d43;
inline constexpr std::uint64_t kField = 0x464c44;
inline constexpr std::uint64_t kRepeat = 0x52505400;
inline constexpr std::uint64_t kClassifier = 0x434c46;
inline constexpr std::uint64_t kPolicy = 0x504f4c;
inline constexpr std::uint64_t kPool = 0x504f4f4c;
inline constexpr std::uint64_t kEval = 0x4556414c;
inline constexpr std::uint64_t kDup = 0x445550;
}  // namespace salt

}  // namespace hal
