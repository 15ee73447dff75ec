#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "hal/types.hpp"

namespace hal {

enum class Provenance : std::uint8_t { Original, Duplicate, Shifted };

struct ImageStore {
  int channels = 1, height = 0, width = 0;
  int n_classes = 0;
  Mat images;  // n x (channels*height*width), values in [0, 1]
  IVec labels;
  std::vector<Provenance> provenance;
  std::vector<int> source;  // copy rows point at their source row; -1 otherwise;
                            // empty means no copies are tracked

  int n() const { return static_cast<int>(images.rows()); }
  int dim() const { return channels * height * width; }
  void validate() const;  // throws on shape, range, or label violations
};

struct PoolState {
  std::vector<int> labeled, unlabeled, validation;

  // removes picks from the unlabeled pool, preserving its order; throws if
  // any pick is absent
  void move_to_labeled(const std::vector<int>& picks);
  bool disjoint() const;
};

// IDX pair as written by the usual digit datasets: big-endian, magic 2051
// for images (scaled to [0,1]) and 2049 for labels
ImageStore load_idx(const std::string& images_path, const std::string& labels_path);

void write_idx(const ImageStore& store, const std::string& images_path,
               const std::string& labels_path);

// balanced labeled seed set (n_labeled/L per class), then a validation draw;
// the rest stays unlabeled; rows tagged duplicate are query candidates only:
// they never enter the seed or the validation set, and a copy whose source
// row lands in the seed or validation set is dropped from the pool entirely,
// so ground truth never leaks into the queryable pool
PoolState make_splits(const ImageStore& store, int n_labeled, int n_val,
                      std::uint64_t seed);

// replaces a dup_fraction share of the pool with noisy copies of retained
// items, class-uniform up to a remainder of one; each copy records its
// source row in the output store
ImageStore make_duplicated_pool(const ImageStore& store, double dup_fraction,
                                double noise_sigma, std::uint64_t seed);

// blends each grayscale image against a per-image random smooth color field:
// out_c = (1-blend)*gray + blend*|gray - field_c|; blend 0 keeps pixel values
ImageStore make_domain_shift(const ImageStore& store, double blend_strength,
                             std::uint64_t seed);

// smooth field in [0,1]: bilinear upsample of a random 4x4 RGB grid
Mat color_field(int height, int width, std::mt19937_64& rng);

// average pooling by an integer factor that divides both sides
ImageStore downsample(const ImageStore& store, int factor);

}  // namespace hal
