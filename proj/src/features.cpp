#include "hal/features.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "hal/rng.hpp"

namespace hal {
namespace {

void fail(const std::string& msg) { throw std::runtime_error("features: " + msg); }

double entropy(const Vec& p) {
  double h = 0.0;
  for (long i = 0; i < p.size(); ++i)
    if (p(i) > 0.0) h -= p(i) * std::log(p(i));
  return h;
}

void check_prob_row(const Vec& p) {
  if (p.minCoeff() < 0.0) fail("negative probability");
  if (std::abs(p.sum() - 1.0) > 1e-6) fail("probability row does not sum to 1");
}

double center_stat(std::vector<double>& v, Representation rep) {
  switch (rep) {
    case Representation::Mean: {
      double s = 0.0;
      for (double x : v) s += x;
      return s / static_cast<double>(v.size());
    }
    case Representation::Median: {
      std::sort(v.begin(), v.end());
      std::size_t m = v.size() / 2;
      return v.size() % 2 == 1 ? v[m] : 0.5 * (v[m - 1] + v[m]);
    }
    case Representation::Mode: {
      // densest of 16 equal bins over the class range, lowest bin on ties
      auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
      double lo = *lo_it, hi = *hi_it;
      if (hi - lo < 1e-12) return lo;
      constexpr int kBins = 16;
      int counts[kBins] = {0};
      for (double x : v) {
        int b = std::min(kBins - 1, static_cast<int>((x - lo) / (hi - lo) * kBins));
        counts[b] += 1;
      }
      int best = 0;
      for (int b = 1; b < kBins; ++b)
        if (counts[b] > counts[best]) best = b;
      return lo + (best + 0.5) * (hi - lo) / kBins;
    }
    case Representation::Max:
      return *std::max_element(v.begin(), v.end());
    case Representation::Min:
      return *std::min_element(v.begin(), v.end());
  }
  fail("unknown representation");
  return 0.0;
}

}  // namespace

ClassStats class_stats(const Classifier& clf, const PoolState& pool,
                       const ImageStore& store, Representation rep) {
  if (pool.labeled.empty()) fail("labeled set is empty");
  int L = store.n_classes;
  int fn = clf.embed_dim();
  Mat emb = embed_all(clf, pool.labeled, store);

  ClassStats st;
  st.n_classes = L;
  st.embed_dim = fn;
  st.counts.assign(static_cast<std::size_t>(L), 0);
  st.centers = Mat::Zero(L, fn);
  st.sigmas = Mat::Zero(L, fn);
  st.spectra.resize(static_cast<std::size_t>(L));
  st.degenerate.assign(static_cast<std::size_t>(L), true);

  std::vector<std::vector<long>> rows(static_cast<std::size_t>(L));
  for (std::size_t i = 0; i < pool.labeled.size(); ++i)
    rows[static_cast<std::size_t>(store.labels(pool.labeled[i]))].push_back(
        static_cast<long>(i));

  for (int c = 0; c < L; ++c) {
    const auto& ridx = rows[static_cast<std::size_t>(c)];
    int m = static_cast<int>(ridx.size());
    st.counts[static_cast<std::size_t>(c)] = m;
    if (m == 0) continue;

    Mat cls(m, fn);
    for (int r = 0; r < m; ++r) cls.row(r) = emb.row(ridx[static_cast<std::size_t>(r)]);
    Vec mean = cls.colwise().mean().transpose();

    std::vector<double> dimvals(static_cast<std::size_t>(m));
    for (int d = 0; d < fn; ++d) {
      for (int r = 0; r < m; ++r) dimvals[static_cast<std::size_t>(r)] = cls(r, d);
      st.centers(c, d) = center_stat(dimvals, rep);
    }
    if (m < 2) continue;

    Mat centered = cls.rowwise() - mean.transpose();
    Mat cov = centered.transpose() * centered / static_cast<double>(m - 1);
    st.sigmas.row(c) = cov.diagonal().array().sqrt().transpose();
    double total = cov.trace();
    if (total < 1e-12) continue;

    Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
    if (eig.info() != Eigen::Success) fail("eigendecomposition failed");
    Vec ev = eig.eigenvalues().cwiseMax(0.0);
    st.spectra[static_cast<std::size_t>(c)] = ev / ev.sum();
    st.degenerate[static_cast<std::size_t>(c)] = false;
  }
  return st;
}

Vec bias_aware(const ClassStats& stats) {
  Vec ba = Vec::Zero(stats.n_classes);
  for (int c = 0; c < stats.n_classes; ++c)
    if (!stats.degenerate[static_cast<std::size_t>(c)])
      ba(c) = 1.0 - stats.spectra[static_cast<std::size_t>(c)].maxCoeff();
  return ba;
}

double mutual_information(const Vec& clean, const Mat& noisy) {
  if (noisy.rows() < 1) fail("need at least one stochastic pass");
  if (noisy.cols() != clean.size()) fail("class count mismatch");
  check_prob_row(clean);
  double noisy_h = 0.0;
  for (long r = 0; r < noisy.rows(); ++r) {
    Vec row = noisy.row(r).transpose();
    check_prob_row(row);
    noisy_h += entropy(row);
  }
  return entropy(clean) - noisy_h / static_cast<double>(noisy.rows());
}

Vec diversity(const Vec& embedding, const ClassStats& stats) {
  if (embedding.size() != stats.embed_dim) fail("embedding width mismatch");
  constexpr double kEps = 1e-8;
  Vec d = Vec::Zero(stats.n_classes);
  for (int c = 0; c < stats.n_classes; ++c) {
    if (stats.degenerate[static_cast<std::size_t>(c)]) continue;
    double acc = 0.0;
    for (int k = 0; k < stats.embed_dim; ++k) {
      double diff = embedding(k) - stats.centers(c, k);
      double s = stats.sigmas(c, k);
      acc += diff * diff / (2.0 * s * s + kEps);
    }
    d(c) = acc / static_cast<double>(stats.embed_dim);
  }
  return d;
}

Vec hog_prior(const Vec& image, int channels, int height, int width) {
  if (channels <= 0 || height < kHogGrid || width < kHogGrid)
    fail("image smaller than the cell grid");
  if (image.size() != static_cast<long>(channels) * height * width)
    fail("image size mismatch");

  long px = static_cast<long>(height) * width;
  Vec gray(px);
  for (long p = 0; p < px; ++p) {
    double s = 0.0;
    for (int c = 0; c < channels; ++c) s += image(c * px + p);
    gray(p) = s / channels;
  }

  Vec out = Vec::Zero(kHogDim);
  constexpr double kPi = 3.14159265358979323846;
  for (int y = 1; y < height - 1; ++y)
    for (int x = 1; x < width - 1; ++x) {
      double gx = 0.5 * (gray(static_cast<long>(y) * width + x + 1) -
                         gray(static_cast<long>(y) * width + x - 1));
      double gy = 0.5 * (gray(static_cast<long>(y + 1) * width + x) -
                         gray(static_cast<long>(y - 1) * width + x));
      double mag = std::hypot(gx, gy);
      if (mag == 0.0) continue;
      double ang = std::atan2(gy, gx);
      if (ang < 0.0) ang += kPi;
      if (ang >= kPi) ang -= kPi;
      int bin = std::min(kHogBins - 1, static_cast<int>(ang / (kPi / kHogBins)));
      int cy = std::min(kHogGrid - 1, y * kHogGrid / height);
      int cx = std::min(kHogGrid - 1, x * kHogGrid / width);
      out((cy * kHogGrid + cx) * kHogBins + bin) += mag;
    }
  double norm = out.norm();
  if (norm > 0.0) out /= norm;
  return out;
}

Vec Observation::flatten() const {
  Vec v(1 + diversity.size() + prior.size() + bias_aware.size());
  v(0) = uncertainty;
  v.segment(1, diversity.size()) = diversity;
  v.segment(1 + diversity.size(), prior.size()) = prior;
  v.tail(bias_aware.size()) = bias_aware;
  return v;
}

Observation observe(const Vec& x, const Classifier& clf, const ClassStats& stats,
                    int n_mc, std::uint64_t seed, const FeatureToggles& toggles) {
  auto mc = mc_dropout_predict(clf, x, n_mc, seed);
  const Shape& in = clf.spec.input;
  Observation o;
  o.uncertainty = mutual_information(mc.clean, mc.noisy);
  o.diversity = toggles.diversity ? diversity(embed(clf, x), stats)
                                  : Vec::Zero(stats.n_classes);
  o.prior = toggles.prior ? hog_prior(x, in.c, in.h, in.w) : Vec::Zero(kHogDim);
  o.bias_aware = toggles.bias_aware ? bias_aware(stats) : Vec::Zero(stats.n_classes);
  return o;
}

std::vector<Observation> observe_pool(const std::vector<int>& indices,
                                      const ImageStore& store, const Classifier& clf,
                                      const ClassStats& stats, int n_mc,
                                      std::uint64_t step_seed,
                                      const FeatureToggles& toggles) {
  if (n_mc < 1) fail("need at least one stochastic pass");
  const Shape& in = clf.spec.input;
  Vec ba = toggles.bias_aware ? bias_aware(stats) : Vec::Zero(stats.n_classes);
  std::vector<Observation> out(indices.size());

  constexpr std::size_t kBlock = 256;
  for (std::size_t lo = 0; lo < indices.size(); lo += kBlock) {
    std::size_t hi = std::min(indices.size(), lo + kBlock);
    long nb = static_cast<long>(hi - lo);
    Mat batch(nb, store.images.cols());
    for (long r = 0; r < nb; ++r)
      batch.row(r) = store.images.row(indices[lo + static_cast<std::size_t>(r)]);

    auto clean = forward(clf.spec, clf.params, batch, Mode::Eval, 0);
    std::vector<Mat> noisy(static_cast<std::size_t>(nb),
                           Mat(n_mc, clf.n_classes()));
    std::vector<std::uint64_t> row_seeds(static_cast<std::size_t>(nb));
    for (int p = 0; p < n_mc; ++p) {
      for (long r = 0; r < nb; ++r)
        row_seeds[static_cast<std::size_t>(r)] = mix(
            mix(step_seed,
                static_cast<std::uint64_t>(indices[lo + static_cast<std::size_t>(r)])),
            static_cast<std::uint64_t>(p));
      auto pass = forward_rows(clf.spec, clf.params, batch, Mode::Train, row_seeds);
      for (long r = 0; r < nb; ++r)
        noisy[static_cast<std::size_t>(r)].row(p) = pass.output.row(r);
    }

    for (long r = 0; r < nb; ++r) {
      Observation& o = out[lo + static_cast<std::size_t>(r)];
      o.uncertainty = mutual_information(clean.output.row(r).transpose(),
                                         noisy[static_cast<std::size_t>(r)]);
      o.diversity = toggles.diversity
                        ? diversity(clean.embedding.row(r).transpose(), stats)
                        : Vec::Zero(stats.n_classes);
      o.prior = toggles.prior
                    ? hog_prior(batch.row(r).transpose(), in.c, in.h, in.w)
                    : Vec::Zero(kHogDim);
      o.bias_aware = ba;
    }
  }
  return out;
}

}  // namespace hal
