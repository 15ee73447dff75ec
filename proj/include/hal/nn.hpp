#pragma once

#include <cstdint>
#include <vector>

#include "hal/types.hpp"

namespace hal {

enum class LayerKind { Conv2d, MaxPool, Dense, Relu, Dropout, Softmax };

struct LayerSpec {
  LayerKind kind;
  int out_channels = 0;  // Conv2d
  int kernel = 0;        // Conv2d and MaxPool window (stride == window)
  int units = 0;         // Dense
  double rate = 0.0;     // Dropout keep-complement, in [0, 1)
};

inline LayerSpec conv2d(int out_channels, int kernel) {
  return {LayerKind::Conv2d, out_channels, kernel, 0, 0.0};
}
inline LayerSpec maxpool(int window) { return {LayerKind::MaxPool, 0, window, 0, 0.0}; }
inline LayerSpec dense(int units) { return {LayerKind::Dense, 0, 0, units, 0.0}; }
inline LayerSpec relu() { return {LayerKind::Relu, 0, 0, 0, 0.0}; }
inline LayerSpec dropout(double rate) { return {LayerKind::Dropout, 0, 0, 0, rate}; }
inline LayerSpec softmax() { return {LayerKind::Softmax, 0, 0, 0, 0.0}; }

struct Shape {
  int c = 1, h = 1, w = 1;
  int size() const { return c * h * w; }
  bool flat() const { return c == 1 && h == 1; }
};

struct ModelSpec {
  Shape input;
  std::vector<LayerSpec> layers;
  int embedding_layer = -1;  // index into layers; its output is the embedding
};

// output shape after each layer, [0] is the input; throws on any mismatch
std::vector<Shape> layer_shapes(const ModelSpec& spec);

// throws unless shapes compose and the embedding layer output is flat
void validate_spec(const ModelSpec& spec);

int output_dim(const ModelSpec& spec);
int embedding_dim(const ModelSpec& spec);

struct Params {
  std::vector<Mat> tensors;  // weight then bias per parameterized layer, in layer order
  long count() const;
  bool all_finite() const;
  void set_zero();
};

Params zeros_like(const Params& p);

// Glorot uniform weights, zero biases
Params init_params(const ModelSpec& spec, std::uint64_t seed);

enum class Mode { Eval, Train };

struct ForwardCache {
  Mode mode = Mode::Eval;
  std::vector<Mat> acts;                     // acts[0] is the batch input
  std::vector<Mat> dropout_masks;            // per layer, empty when unused
  std::vector<Eigen::MatrixXi> pool_argmax;  // per layer, flat input offsets
};

struct ForwardResult {
  Mat output;     // batch x output_dim
  Mat embedding;  // batch x embedding_dim
  ForwardCache cache;
};

// row r of the batch draws its dropout masks from mix(seed, r), so a
// single-row forward with the same derived seed reproduces it exactly
ForwardResult forward(const ModelSpec& spec, const Params& params, const Mat& batch,
                      Mode mode, std::uint64_t seed);

// same, with one mask seed supplied per row
ForwardResult forward_rows(const ModelSpec& spec, const Params& params, const Mat& batch,
                           Mode mode, const std::vector<std::uint64_t>& row_seeds);

// gradient of sum_i loss(out_i) given d loss / d out as loss_grad
Params backward(const ModelSpec& spec, const Params& params, const ForwardCache& cache,
                const Mat& loss_grad);

struct AdamState {
  std::vector<Mat> m, v;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

AdamState make_adam_state(const Params& params);

void adam_step(Params& params, const Params& grads, AdamState& state, double lr);

// mean cross-entropy over rows; probs rows must sum to 1
double cross_entropy(const Mat& probs, const IVec& labels);

// d(mean CE)/d(probs) for a softmax output consumed by backward()
Mat cross_entropy_grad(const Mat& probs, const IVec& labels);

}  // namespace hal
