#include "hal/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>
#include <stdexcept>

#include "hal/rng.hpp"

namespace hal {
namespace {

void fail(const std::string& msg) { throw std::runtime_error("data: " + msg); }

std::uint32_t read_u32_be(std::istream& in, const std::string& what) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) fail("truncated " + what);
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

void write_u32_be(std::ostream& out, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v >> 24),
                        static_cast<unsigned char>(v >> 16),
                        static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<char*>(b), 4);
}

}  // namespace

void ImageStore::validate() const {
  if (channels <= 0 || height <= 0 || width <= 0) fail("store shape must be positive");
  if (n_classes < 2) fail("store needs at least two classes");
  if (images.cols() != dim()) fail("image width does not match shape");
  if (labels.size() != images.rows()) fail("label count mismatch");
  if (provenance.size() != static_cast<std::size_t>(images.rows()))
    fail("provenance count mismatch");
  if (!source.empty()) {
    if (source.size() != static_cast<std::size_t>(images.rows()))
      fail("source count mismatch");
    for (std::size_t i = 0; i < source.size(); ++i) {
      if (source[i] < -1 || source[i] >= n()) fail("source row out of range");
      if (provenance[i] == Provenance::Duplicate && source[i] < 0)
        fail("duplicate row lacks a source");
    }
  }
  if (images.size() > 0 && (images.minCoeff() < 0.0 || images.maxCoeff() > 1.0))
    fail("pixel outside [0, 1]");
  for (long i = 0; i < labels.size(); ++i)
    if (labels(i) < 0 || labels(i) >= n_classes) fail("label out of range");
}

void PoolState::move_to_labeled(const std::vector<int>& picks) {
  for (int p : picks) {
    auto it = std::find(unlabeled.begin(), unlabeled.end(), p);
    if (it == unlabeled.end()) fail("pick is not in the unlabeled pool");
    unlabeled.erase(it);
    labeled.push_back(p);
  }
}

bool PoolState::disjoint() const {
  std::set<int> seen;
  for (const auto* part : {&labeled, &unlabeled, &validation})
    for (int i : *part)
      if (!seen.insert(i).second) return false;
  return true;
}

ImageStore load_idx(const std::string& images_path, const std::string& labels_path) {
  std::ifstream fi(images_path, std::ios::binary);
  if (!fi) fail("cannot open " + images_path);
  if (read_u32_be(fi, "image header") != 2051u) fail("bad image magic in " + images_path);
  std::uint32_t n = read_u32_be(fi, "image header");
  std::uint32_t h = read_u32_be(fi, "image header");
  std::uint32_t w = read_u32_be(fi, "image header");
  if (h == 0 || w == 0) fail("zero image dimensions in " + images_path);

  std::ifstream fl(labels_path, std::ios::binary);
  if (!fl) fail("cannot open " + labels_path);
  if (read_u32_be(fl, "label header") != 2049u) fail("bad label magic in " + labels_path);
  std::uint32_t nl = read_u32_be(fl, "label header");
  if (nl != n) fail("image and label counts disagree");
  if (n == 0) fail("empty dataset");

  ImageStore store;
  store.channels = 1;
  store.height = static_cast<int>(h);
  store.width = static_cast<int>(w);
  store.images.resize(n, static_cast<long>(h) * w);
  store.labels.resize(n);
  store.provenance.assign(n, Provenance::Original);

  std::vector<unsigned char> row(static_cast<std::size_t>(h) * w);
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!fi.read(reinterpret_cast<char*>(row.data()), static_cast<long>(row.size())))
      fail("truncated image data in " + images_path);
    for (std::size_t j = 0; j < row.size(); ++j)
      store.images(i, static_cast<long>(j)) = row[j] / 255.0;
  }
  std::vector<unsigned char> lab(n);
  if (!fl.read(reinterpret_cast<char*>(lab.data()), static_cast<long>(n)))
    fail("truncated label data in " + labels_path);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    store.labels(i) = lab[i];
    max_label = std::max(max_label, static_cast<int>(lab[i]));
  }
  store.n_classes = max_label + 1;
  store.validate();
  return store;
}

void write_idx(const ImageStore& store, const std::string& images_path,
               const std::string& labels_path) {
  if (store.channels != 1) fail("idx export supports single-channel stores only");
  std::ofstream fi(images_path, std::ios::binary);
  if (!fi) fail("cannot write " + images_path);
  write_u32_be(fi, 2051u);
  write_u32_be(fi, static_cast<std::uint32_t>(store.n()));
  write_u32_be(fi, static_cast<std::uint32_t>(store.height));
  write_u32_be(fi, static_cast<std::uint32_t>(store.width));
  for (int i = 0; i < store.n(); ++i)
    for (long j = 0; j < store.images.cols(); ++j) {
      auto v = static_cast<unsigned char>(
          std::lround(std::clamp(store.images(i, j), 0.0, 1.0) * 255.0));
      fi.put(static_cast<char>(v));
    }
  std::ofstream fl(labels_path, std::ios::binary);
  if (!fl) fail("cannot write " + labels_path);
  write_u32_be(fl, 2049u);
  write_u32_be(fl, static_cast<std::uint32_t>(store.n()));
  for (int i = 0; i < store.n(); ++i) fl.put(static_cast<char>(store.labels(i)));
}

PoolState make_splits(const ImageStore& store, int n_labeled, int n_val,
                      std::uint64_t seed) {
  store.validate();
  int L = store.n_classes;
  if (n_labeled <= 0) fail("labeled seed set must be nonempty");
  if (n_labeled % L != 0) fail("labeled size must be a multiple of the class count");
  if (n_val < 0) fail("negative validation size");
  int per_class = n_labeled / L;

  // synthetic copies are query candidates only: they never serve as the
  // labeled seed or as validation ground truth
  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(L));
  std::vector<int> copies;
  for (int i = 0; i < store.n(); ++i) {
    if (store.provenance[static_cast<std::size_t>(i)] == Provenance::Duplicate) {
      if (store.source.empty() || store.source[static_cast<std::size_t>(i)] < 0)
        fail("duplicate rows need source tracking for splits");
      copies.push_back(i);
    } else {
      by_class[static_cast<std::size_t>(store.labels(i))].push_back(i);
    }
  }

  auto rng = make_rng(mix(seed, salt::kSplit));
  PoolState pool;
  std::vector<int> rest;
  for (int c = 0; c < L; ++c) {
    auto& idx = by_class[static_cast<std::size_t>(c)];
    if (static_cast<int>(idx.size()) < per_class)
      fail("class " + std::to_string(c) + " has too few non-duplicate items for the labeled split");
    shuffle_vec(idx, rng);
    pool.labeled.insert(pool.labeled.end(), idx.begin(), idx.begin() + per_class);
    rest.insert(rest.end(), idx.begin() + per_class, idx.end());
  }
  std::sort(pool.labeled.begin(), pool.labeled.end());
  std::sort(rest.begin(), rest.end());
  if (static_cast<int>(rest.size()) < n_val)
    fail("not enough non-duplicate items for the validation split");
  shuffle_vec(rest, rng);
  pool.validation.assign(rest.begin(), rest.begin() + n_val);
  pool.unlabeled.assign(rest.begin() + n_val, rest.end());
  // a copy of a seed or validation row would leak ground truth into the
  // pool, so only copies of pool rows stay queryable
  std::vector<char> queryable(static_cast<std::size_t>(store.n()), 0);
  for (int i : pool.unlabeled) queryable[static_cast<std::size_t>(i)] = 1;
  for (int i : copies)
    if (queryable[static_cast<std::size_t>(store.source[static_cast<std::size_t>(i)])])
      pool.unlabeled.push_back(i);
  std::sort(pool.validation.begin(), pool.validation.end());
  std::sort(pool.unlabeled.begin(), pool.unlabeled.end());
  return pool;
}

ImageStore make_duplicated_pool(const ImageStore& store, double dup_fraction,
                                double noise_sigma, std::uint64_t seed) {
  store.validate();
  if (dup_fraction < 0.0 || dup_fraction >= 1.0) fail("dup fraction must lie in [0, 1)");
  if (noise_sigma < 0.0) fail("negative noise sigma");
  int N = store.n();
  int L = store.n_classes;
  int n_dup = static_cast<int>(std::llround(dup_fraction * N));
  int n_keep = N - n_dup;
  if (n_keep <= 0) fail("dup fraction leaves no originals");

  auto rng = make_rng(seed);
  std::vector<int> order(static_cast<std::size_t>(N));
  std::iota(order.begin(), order.end(), 0);
  shuffle_vec(order, rng);
  std::vector<int> kept(order.begin(), order.begin() + n_keep);
  std::sort(kept.begin(), kept.end());

  std::vector<std::vector<int>> kept_by_class(static_cast<std::size_t>(L));
  for (int i : kept) kept_by_class[static_cast<std::size_t>(store.labels(i))].push_back(i);

  // class-uniform duplicate budget, remainder spread over the low classes
  std::vector<int> budget(static_cast<std::size_t>(L), n_dup / L);
  for (int c = 0; c < n_dup % L; ++c) budget[static_cast<std::size_t>(c)] += 1;

  ImageStore out;
  out.channels = store.channels;
  out.height = store.height;
  out.width = store.width;
  out.n_classes = L;
  out.images.resize(N, store.images.cols());
  out.labels.resize(N);
  out.provenance.assign(static_cast<std::size_t>(N), Provenance::Original);
  out.source.assign(static_cast<std::size_t>(N), -1);

  // kept items occupy the leading rows, so a source's output row is its
  // position in the kept order
  std::vector<int> kept_row(static_cast<std::size_t>(N), -1);
  int row = 0;
  for (int i : kept) {
    out.images.row(row) = store.images.row(i);
    out.labels(row) = store.labels(i);
    kept_row[static_cast<std::size_t>(i)] = row;
    ++row;
  }
  std::normal_distribution<double> noise(0.0, noise_sigma);
  for (int c = 0; c < L; ++c) {
    const auto& src = kept_by_class[static_cast<std::size_t>(c)];
    if (budget[static_cast<std::size_t>(c)] > 0 && src.empty())
      fail("no retained items of class " + std::to_string(c) + " to duplicate");
    for (int d = 0; d < budget[static_cast<std::size_t>(c)]; ++d) {
      int i = src[static_cast<std::size_t>(uniform_index(rng, static_cast<int>(src.size())))];
      for (long j = 0; j < store.images.cols(); ++j) {
        double v = store.images(i, j) + (noise_sigma > 0.0 ? noise(rng) : 0.0);
        out.images(row, j) = std::clamp(v, 0.0, 1.0);
      }
      out.labels(row) = store.labels(i);
      out.provenance[static_cast<std::size_t>(row)] = Provenance::Duplicate;
      out.source[static_cast<std::size_t>(row)] = kept_row[static_cast<std::size_t>(i)];
      ++row;
    }
  }
  if (row != N) fail("duplicate budget does not fill the pool");
  out.validate();
  return out;
}

Mat color_field(int height, int width, std::mt19937_64& rng) {
  constexpr int kGrid = 4;
  double grid[3][kGrid][kGrid];
  for (int c = 0; c < 3; ++c)
    for (int gy = 0; gy < kGrid; ++gy)
      for (int gx = 0; gx < kGrid; ++gx) grid[c][gy][gx] = uniform_real(rng);

  Mat field(3, static_cast<long>(height) * width);
  for (int y = 0; y < height; ++y) {
    double fy = height > 1 ? double(y) * (kGrid - 1) / (height - 1) : 0.0;
    int y0 = std::min(static_cast<int>(fy), kGrid - 2);
    double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      double fx = width > 1 ? double(x) * (kGrid - 1) / (width - 1) : 0.0;
      int x0 = std::min(static_cast<int>(fx), kGrid - 2);
      double tx = fx - x0;
      for (int c = 0; c < 3; ++c) {
        double top = grid[c][y0][x0] * (1 - tx) + grid[c][y0][x0 + 1] * tx;
        double bot = grid[c][y0 + 1][x0] * (1 - tx) + grid[c][y0 + 1][x0 + 1] * tx;
        field(c, static_cast<long>(y) * width + x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return field;
}

ImageStore make_domain_shift(const ImageStore& store, double blend_strength,
                             std::uint64_t seed) {
  store.validate();
  if (store.channels != 1) fail("domain shift expects grayscale input");
  if (blend_strength < 0.0 || blend_strength > 1.0) fail("blend must lie in [0, 1]");

  ImageStore out;
  out.channels = 3;
  out.height = store.height;
  out.width = store.width;
  out.n_classes = store.n_classes;
  long px = store.images.cols();
  out.images.resize(store.n(), 3 * px);
  out.labels = store.labels;
  out.provenance.assign(static_cast<std::size_t>(store.n()), Provenance::Shifted);

  auto rng = make_rng(mix(seed, salt::kField));
  for (int i = 0; i < store.n(); ++i) {
    Mat field = color_field(store.height, store.width, rng);
    for (long p = 0; p < px; ++p) {
      double g = store.images(i, p);
      for (int c = 0; c < 3; ++c)
        out.images(i, c * px + p) =
            (1.0 - blend_strength) * g + blend_strength * std::abs(g - field(c, p));
    }
  }
  out.validate();
  return out;
}

ImageStore downsample(const ImageStore& store, int factor) {
  store.validate();
  if (factor <= 0) fail("downsample factor must be positive");
  if (factor == 1) return store;
  if (store.height % factor != 0 || store.width % factor != 0)
    fail("downsample factor must divide both image sides");

  ImageStore out;
  out.channels = store.channels;
  out.height = store.height / factor;
  out.width = store.width / factor;
  out.n_classes = store.n_classes;
  out.images.resize(store.n(), static_cast<long>(out.dim()));
  out.labels = store.labels;
  out.provenance = store.provenance;
  out.source = store.source;  // rows keep their positions

  double inv = 1.0 / (factor * factor);
  for (int i = 0; i < store.n(); ++i)
    for (int c = 0; c < store.channels; ++c)
      for (int oy = 0; oy < out.height; ++oy)
        for (int ox = 0; ox < out.width; ++ox) {
          double acc = 0.0;
          for (int dy = 0; dy < factor; ++dy)
            for (int dx = 0; dx < factor; ++dx)
              acc += store.images(
                  i, (static_cast<long>(c) * store.height + oy * factor + dy) * store.width +
                         ox * factor + dx);
          out.images(i, (static_cast<long>(c) * out.height + oy) * out.width + ox) =
              acc * inv;
        }
  out.validate();
  return out;
}

}  // namespace hal
