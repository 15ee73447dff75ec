#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "hal/data.hpp"
#include "hal/rng.hpp"
#include "synth.hpp"

using namespace hal;

namespace {

std::string temp_dir(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / (std::string("hal_data_") + tag);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace

TEST_CASE("idx round trip preserves pixels and labels") {
  auto store = synth::make_store(60, 3, 8, 8, 42);
  auto dir = temp_dir("roundtrip");
  write_idx(store, dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
  auto back = load_idx(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
  CHECK(back.n() == 60);
  CHECK(back.height == 8);
  CHECK(back.width == 8);
  CHECK(back.n_classes == 3);
  CHECK(back.labels == store.labels);
  // quantization to bytes moves pixels by at most half a step
  CHECK((back.images - store.images).cwiseAbs().maxCoeff() <= 0.5 / 255.0 + 1e-12);
}

TEST_CASE("idx loader rejects malformed files") {
  auto dir = temp_dir("badidx");
  auto img = dir + "/i", lab = dir + "/l";
  auto store = synth::make_store(10, 2, 4, 4, 1);
  write_idx(store, img, lab);

  SUBCASE("wrong image magic") {
    std::fstream f(img, std::ios::in | std::ios::out | std::ios::binary);
    f.put(9);
    f.close();
    CHECK_THROWS_WITH_AS(load_idx(img, lab), doctest::Contains("magic"),
                         std::runtime_error);
  }
  SUBCASE("count mismatch") {
    auto small = synth::make_store(8, 2, 4, 4, 1);
    write_idx(small, dir + "/i2", dir + "/l2");
    CHECK_THROWS_WITH_AS(load_idx(img, dir + "/l2"), doctest::Contains("disagree"),
                         std::runtime_error);
  }
  SUBCASE("truncated images") {
    std::filesystem::resize_file(img, 16 + 10 * 16 - 3);
    CHECK_THROWS_WITH_AS(load_idx(img, lab), doctest::Contains("truncated"),
                         std::runtime_error);
  }
}

TEST_CASE("splits are balanced, disjoint, and seeded") {
  auto store = synth::make_store(200, 4, 6, 6, 7);
  auto pool = make_splits(store, 20, 60, 5);
  CHECK(pool.labeled.size() == 20);
  CHECK(pool.validation.size() == 60);
  CHECK(pool.unlabeled.size() == 120);
  CHECK(pool.disjoint());

  int per_class[4] = {0, 0, 0, 0};
  for (int i : pool.labeled) per_class[store.labels(i)] += 1;
  for (int c = 0; c < 4; ++c) CHECK(per_class[c] == 5);

  auto pool2 = make_splits(store, 20, 60, 5);
  CHECK(pool.labeled == pool2.labeled);
  CHECK(pool.validation == pool2.validation);
  auto pool3 = make_splits(store, 20, 60, 6);
  CHECK(pool.labeled != pool3.labeled);

  CHECK_THROWS(make_splits(store, 0, 60, 5));
  CHECK_THROWS(make_splits(store, 18, 60, 5));   // not a multiple of 4
  CHECK_THROWS(make_splits(store, 20, 200, 5));  // validation too large
}

TEST_CASE("splits keep duplicate rows out of the seed and validation") {
  auto store = synth::make_store(120, 2, 5, 5, 21);
  auto dup = make_duplicated_pool(store, 0.5, 0.05, 3);  // 60 originals, 60 copies
  auto pool = make_splits(dup, 4, 20, 9);
  CHECK(pool.disjoint());
  for (int i : pool.labeled)
    CHECK(dup.provenance[static_cast<std::size_t>(i)] == Provenance::Original);
  for (int i : pool.validation)
    CHECK(dup.provenance[static_cast<std::size_t>(i)] == Provenance::Original);

  // every queryable copy points at a queryable source; copies of seed or
  // validation rows are dropped from the pool entirely
  std::vector<char> in_pool(static_cast<std::size_t>(dup.n()), 0);
  for (int i : pool.unlabeled) in_pool[static_cast<std::size_t>(i)] = 1;
  int kept_copies = 0, dropped_copies = 0;
  for (int i = 0; i < dup.n(); ++i) {
    if (dup.provenance[static_cast<std::size_t>(i)] != Provenance::Duplicate) continue;
    int src = dup.source[static_cast<std::size_t>(i)];
    if (in_pool[static_cast<std::size_t>(i)]) {
      ++kept_copies;
      CHECK(in_pool[static_cast<std::size_t>(src)] == 1);
    } else {
      ++dropped_copies;
      CHECK(in_pool[static_cast<std::size_t>(src)] == 0);
    }
  }
  CHECK(kept_copies + dropped_copies == 60);
  CHECK(kept_copies > 0);
  CHECK(dropped_copies > 0);  // the 24 seed/validation rows attract some copies

  // 60 originals minus the seed leaves 56, too few for a 60-item validation set
  CHECK_THROWS(make_splits(dup, 4, 60, 9));
}

TEST_CASE("pool moves preserve conservation") {
  auto store = synth::make_store(40, 2, 4, 4, 3);
  auto pool = make_splits(store, 4, 10, 1);
  auto total = pool.labeled.size() + pool.unlabeled.size();
  std::vector<int> picks(pool.unlabeled.begin(), pool.unlabeled.begin() + 3);
  pool.move_to_labeled(picks);
  CHECK(pool.labeled.size() + pool.unlabeled.size() == total);
  CHECK(pool.disjoint());
  CHECK_THROWS(pool.move_to_labeled(picks));  // already labeled
}

TEST_CASE("duplicated pool keeps size, labels, and class-uniform copies") {
  auto store = synth::make_store(100, 4, 6, 6, 11);
  auto dup = make_duplicated_pool(store, 0.3, 0.05, 9);
  CHECK(dup.n() == 100);
  CHECK(dup.n_classes == 4);

  int n_dup = 0;
  int per_class[4] = {0, 0, 0, 0};
  for (int i = 0; i < dup.n(); ++i)
    if (dup.provenance[static_cast<std::size_t>(i)] == Provenance::Duplicate) {
      ++n_dup;
      per_class[dup.labels(i)] += 1;
    }
  CHECK(n_dup == 30);
  int lo = *std::min_element(per_class, per_class + 4);
  int hi = *std::max_element(per_class, per_class + 4);
  CHECK(hi - lo <= 1);
  CHECK(dup.images.minCoeff() >= 0.0);
  CHECK(dup.images.maxCoeff() <= 1.0);

  auto again = make_duplicated_pool(store, 0.3, 0.05, 9);
  CHECK(dup.images == again.images);

  CHECK_THROWS(make_duplicated_pool(store, 1.0, 0.05, 9));
  CHECK_THROWS(make_duplicated_pool(store, -0.1, 0.05, 9));
}

TEST_CASE("duplicates copy retained items up to noise") {
  auto store = synth::make_store(60, 2, 5, 5, 13);
  auto dup = make_duplicated_pool(store, 0.5, 0.0, 4);
  // zero noise: every duplicate row equals some original row exactly
  for (int i = 0; i < dup.n(); ++i) {
    if (dup.provenance[static_cast<std::size_t>(i)] != Provenance::Duplicate) continue;
    bool found = false;
    for (int j = 0; j < store.n(); ++j)
      if (dup.images.row(i) == store.images.row(j) &&
          dup.labels(i) == store.labels(j)) {
        found = true;
        break;
      }
    CHECK(found);
  }
}

TEST_CASE("domain shift blends against a smooth field") {
  auto store = synth::make_store(12, 2, 8, 8, 21);
  auto shifted = make_domain_shift(store, 0.4, 77);
  CHECK(shifted.channels == 3);
  CHECK(shifted.n() == 12);
  CHECK(shifted.labels == store.labels);
  CHECK(shifted.provenance[0] == Provenance::Shifted);
  CHECK(shifted.images.minCoeff() >= 0.0);
  CHECK(shifted.images.maxCoeff() <= 1.0);

  auto zero = make_domain_shift(store, 0.0, 77);
  long px = store.images.cols();
  for (int c = 0; c < 3; ++c)
    CHECK(zero.images.middleCols(c * px, px) == store.images);

  auto again = make_domain_shift(store, 0.4, 77);
  CHECK(shifted.images == again.images);
  auto other = make_domain_shift(store, 0.4, 78);
  CHECK(shifted.images != other.images);
}

TEST_CASE("color field interpolates its corner grid") {
  auto rng = make_rng(5);
  Mat field = color_field(9, 9, rng);
  CHECK(field.rows() == 3);
  CHECK(field.cols() == 81);
  CHECK(field.minCoeff() >= 0.0);
  CHECK(field.maxCoeff() <= 1.0);
  // corners hit grid nodes; midpoints stay inside the hull of neighbors
  for (int c = 0; c < 3; ++c) {
    double corner = field(c, 0);
    CHECK(corner >= 0.0);
    CHECK(corner <= 1.0);
  }
}

TEST_CASE("downsample averages blocks") {
  ImageStore store;
  store.channels = 1;
  store.height = 4;
  store.width = 4;
  store.n_classes = 2;
  store.images.resize(2, 16);
  store.images.setZero();
  store.images(0, 0) = 1.0;  // one bright pixel in the top-left 2x2 block
  store.labels.resize(2);
  store.labels << 0, 1;
  store.provenance.assign(2, Provenance::Original);

  auto small = downsample(store, 2);
  CHECK(small.height == 2);
  CHECK(small.width == 2);
  CHECK(small.images(0, 0) == doctest::Approx(0.25));
  CHECK(small.images(0, 1) == 0.0);
  CHECK_THROWS(downsample(store, 3));
}

TEST_CASE("store validation catches bad shapes") {
  auto store = synth::make_store(10, 2, 4, 4, 2);
  store.images(0, 0) = 1.5;
  CHECK_THROWS(store.validate());
  store.images(0, 0) = 0.5;
  store.labels(0) = 7;
  CHECK_THROWS(store.validate());
}
