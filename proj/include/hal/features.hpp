#pragma once

#include <cstdint>
#include <vector>

#include "hal/classifier.hpp"
#include "hal/types.hpp"

namespace hal {

enum class Representation { Mean, Median, Mode, Max, Min };

struct ClassStats {
  int n_classes = 0, embed_dim = 0;
  std::vector<int> counts;
  Mat centers;  // L x f_n, the chosen representation statistic
  Mat sigmas;   // L x f_n, stddev about the mean (m-1 denominator)
  std::vector<Vec> spectra;  // eigenvalues of the class covariance, sum-normalized
  std::vector<bool> degenerate;  // m_c < 2 or total variance < 1e-12
};

// embeds every labeled item once; the representation only swaps the center
// statistic, covariance and stddev always use the arithmetic mean
ClassStats class_stats(const Classifier& clf, const PoolState& pool,
                       const ImageStore& store,
                       Representation rep = Representation::Mean);

// 1 - max normalized eigenvalue per class; 0 for degenerate classes
Vec bias_aware(const ClassStats& stats);

// H(clean) - mean_i H(noisy_i), natural log, 0*log0 = 0
double mutual_information(const Vec& clean, const Mat& noisy);

// component c = (1/f_n) * sum_d (e_d - mu_cd)^2 / (2 sigma_cd^2 + eps)
Vec diversity(const Vec& embedding, const ClassStats& stats);

inline constexpr int kHogGrid = 4, kHogBins = 9, kHogDim = kHogGrid * kHogGrid * kHogBins;

// unsigned-orientation HOG over a 4x4 cell grid, central differences,
// magnitude voting, whole descriptor L2-normalized (zero stays zero);
// multi-channel images enter as their channel mean
Vec hog_prior(const Vec& image, int channels, int height, int width);

struct FeatureToggles {
  bool bias_aware = true, diversity = true, prior = true;
};

struct Observation {
  double uncertainty = 0.0;
  Vec diversity;   // L
  Vec prior;       // kHogDim
  Vec bias_aware;  // L

  Vec flatten() const;
  static int dim(int n_classes) { return 1 + 2 * n_classes + kHogDim; }
};

// disabled toggles zero their slot so the observation length never changes
Observation observe(const Vec& x, const Classifier& clf, const ClassStats& stats,
                    int n_mc, std::uint64_t seed, const FeatureToggles& toggles = {});

// item i uses seed mix(step_seed, indices[i]); batched internally but equal
// to per-item observe() calls
std::vector<Observation> observe_pool(const std::vector<int>& indices,
                                      const ImageStore& store, const Classifier& clf,
                                      const ClassStats& stats, int n_mc,
                                      std::uint64_t step_seed,
                                      const FeatureToggles& toggles = {});

}  // namespace hal
