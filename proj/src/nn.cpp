#include "hal/nn.hpp"

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "hal/rng.hpp"

namespace hal {
namespace {

void fail(const std::string& msg) { throw std::runtime_error("nn: " + msg); }

// flat offsets into one sample for every (patch element, output position) pair
Eigen::MatrixXi conv_offsets(const Shape& in, int k) {
  int oh = in.h - k + 1, ow = in.w - k + 1;
  Eigen::MatrixXi map(in.c * k * k, oh * ow);
  for (int ic = 0; ic < in.c; ++ic)
    for (int ky = 0; ky < k; ++ky)
      for (int kx = 0; kx < k; ++kx) {
        int r = (ic * k + ky) * k + kx;
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            map(r, oy * ow + ox) = (ic * in.h + oy + ky) * in.w + (ox + kx);
      }
  return map;
}

struct ParamDims {
  std::vector<std::pair<long, long>> dims;  // rows, cols per tensor
};

ParamDims expected_dims(const ModelSpec& spec) {
  auto shapes = layer_shapes(spec);
  ParamDims out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto& in = shapes[i];
    if (l.kind == LayerKind::Conv2d) {
      out.dims.emplace_back(l.out_channels, in.c * l.kernel * l.kernel);
      out.dims.emplace_back(l.out_channels, 1);
    } else if (l.kind == LayerKind::Dense) {
      out.dims.emplace_back(l.units, in.size());
      out.dims.emplace_back(l.units, 1);
    }
  }
  return out;
}

void check_params(const ModelSpec& spec, const Params& params) {
  auto exp = expected_dims(spec);
  if (params.tensors.size() != exp.dims.size()) fail("parameter tensor count mismatch");
  for (std::size_t i = 0; i < exp.dims.size(); ++i) {
    if (params.tensors[i].rows() != exp.dims[i].first ||
        params.tensors[i].cols() != exp.dims[i].second)
      fail("parameter tensor shape mismatch");
  }
  if (!params.all_finite()) fail("non-finite parameter detected");
}

Mat dropout_mask(double rate, long rows, long cols,
                 const std::vector<std::uint64_t>& row_seeds, int layer_index) {
  Mat mask(rows, cols);
  double scale = 1.0 / (1.0 - rate);
  for (long r = 0; r < rows; ++r) {
    auto rng = make_rng(mix(mix(row_seeds[static_cast<std::size_t>(r)], salt::kDropout),
                            static_cast<std::uint64_t>(layer_index)));
    for (long c = 0; c < cols; ++c)
      mask(r, c) = uniform_real(rng) >= rate ? scale : 0.0;
  }
  return mask;
}

}  // namespace

std::vector<Shape> layer_shapes(const ModelSpec& spec) {
  if (spec.input.c <= 0 || spec.input.h <= 0 || spec.input.w <= 0)
    fail("input shape must be positive");
  std::vector<Shape> shapes{spec.input};
  for (const auto& l : spec.layers) {
    Shape in = shapes.back();
    Shape out = in;
    switch (l.kind) {
      case LayerKind::Conv2d:
        if (l.out_channels <= 0 || l.kernel <= 0) fail("conv needs positive channels and kernel");
        if (in.h < l.kernel || in.w < l.kernel) fail("conv kernel exceeds input");
        out = {l.out_channels, in.h - l.kernel + 1, in.w - l.kernel + 1};
        break;
      case LayerKind::MaxPool:
        if (l.kernel <= 0) fail("pool needs positive window");
        if (in.h % l.kernel != 0 || in.w % l.kernel != 0) fail("pool window must divide input");
        out = {in.c, in.h / l.kernel, in.w / l.kernel};
        break;
      case LayerKind::Dense:
        if (l.units <= 0) fail("dense needs positive units");
        out = {1, 1, l.units};
        break;
      case LayerKind::Relu:
        break;
      case LayerKind::Dropout:
        if (l.rate < 0.0 || l.rate >= 1.0) fail("dropout rate must lie in [0, 1)");
        break;
      case LayerKind::Softmax:
        if (!in.flat()) fail("softmax input must be flat");
        break;
    }
    shapes.push_back(out);
  }
  return shapes;
}

void validate_spec(const ModelSpec& spec) {
  auto shapes = layer_shapes(spec);
  if (spec.layers.empty()) fail("model needs at least one layer");
  if (spec.embedding_layer < 0 ||
      spec.embedding_layer >= static_cast<int>(spec.layers.size()))
    fail("embedding layer out of range");
  if (!shapes[static_cast<std::size_t>(spec.embedding_layer) + 1].flat())
    fail("embedding output must be flat");
}

int output_dim(const ModelSpec& spec) { return layer_shapes(spec).back().size(); }

int embedding_dim(const ModelSpec& spec) {
  validate_spec(spec);
  return layer_shapes(spec)[static_cast<std::size_t>(spec.embedding_layer) + 1].size();
}

long Params::count() const {
  long n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

bool Params::all_finite() const {
  for (const auto& t : tensors)
    if (!t.allFinite()) return false;
  return true;
}

void Params::set_zero() {
  for (auto& t : tensors) t.setZero();
}

Params zeros_like(const Params& p) {
  Params out;
  out.tensors.reserve(p.tensors.size());
  for (const auto& t : p.tensors) out.tensors.push_back(Mat::Zero(t.rows(), t.cols()));
  return out;
}

Params init_params(const ModelSpec& spec, std::uint64_t seed) {
  validate_spec(spec);
  auto shapes = layer_shapes(spec);
  auto rng = make_rng(mix(seed, salt::kInit));
  Params out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    const auto& in = shapes[i];
    long fan_in = 0, fan_out = 0, rows = 0, cols = 0;
    if (l.kind == LayerKind::Conv2d) {
      rows = l.out_channels;
      cols = static_cast<long>(in.c) * l.kernel * l.kernel;
      fan_in = cols;
      fan_out = static_cast<long>(l.out_channels) * l.kernel * l.kernel;
    } else if (l.kind == LayerKind::Dense) {
      rows = l.units;
      cols = in.size();
      fan_in = cols;
      fan_out = rows;
    } else {
      continue;
    }
    double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    Mat w(rows, cols);
    for (long r = 0; r < rows; ++r)
      for (long c = 0; c < cols; ++c) w(r, c) = dist(rng);
    out.tensors.push_back(std::move(w));
    out.tensors.push_back(Mat::Zero(rows, 1));
  }
  return out;
}

ForwardResult forward_rows(const ModelSpec& spec, const Params& params, const Mat& batch,
                           Mode mode, const std::vector<std::uint64_t>& row_seeds) {
  validate_spec(spec);
  check_params(spec, params);
  auto shapes = layer_shapes(spec);
  if (batch.rows() == 0) fail("empty batch");
  if (batch.cols() != spec.input.size()) fail("batch width does not match input shape");
  if (mode == Mode::Train && row_seeds.size() != static_cast<std::size_t>(batch.rows()))
    fail("one mask seed required per row");

  long B = batch.rows();
  ForwardCache cache;
  cache.mode = mode;
  cache.acts.reserve(spec.layers.size() + 1);
  cache.acts.push_back(batch);
  cache.dropout_masks.resize(spec.layers.size());
  cache.pool_argmax.resize(spec.layers.size());

  std::size_t pi = 0;  // next parameter tensor
  for (std::size_t li = 0; li < spec.layers.size(); ++li) {
    const auto& l = spec.layers[li];
    const Shape& in = shapes[li];
    const Shape& os = shapes[li + 1];
    const Mat& x = cache.acts.back();
    Mat y;
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const Mat& w = params.tensors[pi];
        const Mat& b = params.tensors[pi + 1];
        pi += 2;
        auto map = conv_offsets(in, l.kernel);
        long pr = map.rows(), pc = map.cols();
        y.resize(B, os.size());
        Mat patches(pr, pc);
        for (long s = 0; s < B; ++s) {
          for (long r = 0; r < pr; ++r)
            for (long c = 0; c < pc; ++c) patches(r, c) = x(s, map(r, c));
          Mat out = w * patches;
          out.colwise() += b.col(0);
          for (int oc = 0; oc < os.c; ++oc)
            for (long p = 0; p < pc; ++p) y(s, oc * pc + p) = out(oc, p);
        }
        break;
      }
      case LayerKind::MaxPool: {
        int k = l.kernel;
        y.resize(B, os.size());
        Eigen::MatrixXi arg(B, os.size());
        for (long s = 0; s < B; ++s)
          for (int c = 0; c < in.c; ++c)
            for (int oy = 0; oy < os.h; ++oy)
              for (int ox = 0; ox < os.w; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int dy = 0; dy < k; ++dy)
                  for (int dx = 0; dx < k; ++dx) {
                    int idx = (c * in.h + oy * k + dy) * in.w + ox * k + dx;
                    double v = x(s, idx);
                    if (v > best) {
                      best = v;
                      best_idx = idx;
                    }
                  }
                int oidx = (c * os.h + oy) * os.w + ox;
                y(s, oidx) = best;
                arg(s, oidx) = best_idx;
              }
        cache.pool_argmax[li] = std::move(arg);
        break;
      }
      case LayerKind::Dense: {
        const Mat& w = params.tensors[pi];
        const Mat& b = params.tensors[pi + 1];
        pi += 2;
        // plain loop keeps each row's accumulation order independent of the
        // batch it rides in, so batched and single-row forwards agree bitwise
        y.resize(B, w.rows());
        for (long s = 0; s < B; ++s)
          for (long u = 0; u < w.rows(); ++u) {
            double acc = b(u, 0);
            for (long j = 0; j < w.cols(); ++j) acc += w(u, j) * x(s, j);
            y(s, u) = acc;
          }
        break;
      }
      case LayerKind::Relu:
        y = x.cwiseMax(0.0);
        break;
      case LayerKind::Dropout: {
        if (mode == Mode::Eval || l.rate == 0.0) {
          y = x;
        } else {
          Mat mask = dropout_mask(l.rate, B, x.cols(), row_seeds, static_cast<int>(li));
          y = x.cwiseProduct(mask);
          cache.dropout_masks[li] = std::move(mask);
        }
        break;
      }
      case LayerKind::Softmax: {
        y.resize(B, x.cols());
        for (long s = 0; s < B; ++s) {
          Vec row = x.row(s).transpose();
          double m = row.maxCoeff();
          Vec e = (row.array() - m).exp();
          y.row(s) = (e / e.sum()).transpose();
        }
        break;
      }
    }
    cache.acts.push_back(std::move(y));
  }

  ForwardResult res;
  res.output = cache.acts.back();
  res.embedding = cache.acts[static_cast<std::size_t>(spec.embedding_layer) + 1];
  res.cache = std::move(cache);
  return res;
}

ForwardResult forward(const ModelSpec& spec, const Params& params, const Mat& batch,
                      Mode mode, std::uint64_t seed) {
  std::vector<std::uint64_t> row_seeds;
  if (mode == Mode::Train) {
    row_seeds.resize(static_cast<std::size_t>(batch.rows()));
    for (long r = 0; r < batch.rows(); ++r)
      row_seeds[static_cast<std::size_t>(r)] = mix(seed, static_cast<std::uint64_t>(r));
  }
  return forward_rows(spec, params, batch, mode, row_seeds);
}

Params backward(const ModelSpec& spec, const Params& params, const ForwardCache& cache,
                const Mat& loss_grad) {
  validate_spec(spec);
  check_params(spec, params);
  auto shapes = layer_shapes(spec);
  if (cache.acts.size() != spec.layers.size() + 1) fail("cache does not match spec");
  if (loss_grad.rows() != cache.acts.back().rows() ||
      loss_grad.cols() != cache.acts.back().cols())
    fail("loss grad shape mismatch");

  Params grads = zeros_like(params);
  // parameter tensor offset per layer
  std::vector<std::size_t> poff(spec.layers.size(), 0);
  {
    std::size_t pi = 0;
    for (std::size_t li = 0; li < spec.layers.size(); ++li) {
      poff[li] = pi;
      auto k = spec.layers[li].kind;
      if (k == LayerKind::Conv2d || k == LayerKind::Dense) pi += 2;
    }
  }

  long B = loss_grad.rows();
  Mat g = loss_grad;
  for (int li = static_cast<int>(spec.layers.size()) - 1; li >= 0; --li) {
    const auto& l = spec.layers[static_cast<std::size_t>(li)];
    const Shape& in = shapes[static_cast<std::size_t>(li)];
    const Shape& os = shapes[static_cast<std::size_t>(li) + 1];
    const Mat& x = cache.acts[static_cast<std::size_t>(li)];
    const Mat& y = cache.acts[static_cast<std::size_t>(li) + 1];
    switch (l.kind) {
      case LayerKind::Conv2d: {
        const Mat& w = params.tensors[poff[static_cast<std::size_t>(li)]];
        Mat& dw = grads.tensors[poff[static_cast<std::size_t>(li)]];
        Mat& db = grads.tensors[poff[static_cast<std::size_t>(li)] + 1];
        auto map = conv_offsets(in, l.kernel);
        long pr = map.rows(), pc = map.cols();
        Mat gx = Mat::Zero(B, in.size());
        Mat patches(pr, pc), dy(os.c, pc);
        for (long s = 0; s < B; ++s) {
          for (long r = 0; r < pr; ++r)
            for (long c = 0; c < pc; ++c) patches(r, c) = x(s, map(r, c));
          for (int oc = 0; oc < os.c; ++oc)
            for (long p = 0; p < pc; ++p) dy(oc, p) = g(s, oc * pc + p);
          dw.noalias() += dy * patches.transpose();
          db.col(0) += dy.rowwise().sum();
          Mat dp = w.transpose() * dy;
          for (long r = 0; r < pr; ++r)
            for (long c = 0; c < pc; ++c) gx(s, map(r, c)) += dp(r, c);
        }
        g = std::move(gx);
        break;
      }
      case LayerKind::MaxPool: {
        const auto& arg = cache.pool_argmax[static_cast<std::size_t>(li)];
        Mat gx = Mat::Zero(B, in.size());
        for (long s = 0; s < B; ++s)
          for (long o = 0; o < arg.cols(); ++o) gx(s, arg(s, o)) += g(s, o);
        g = std::move(gx);
        break;
      }
      case LayerKind::Dense: {
        const Mat& w = params.tensors[poff[static_cast<std::size_t>(li)]];
        Mat& dw = grads.tensors[poff[static_cast<std::size_t>(li)]];
        Mat& db = grads.tensors[poff[static_cast<std::size_t>(li)] + 1];
        dw.noalias() += g.transpose() * x;
        db.col(0) += g.colwise().sum().transpose();
        g = g * w;
        break;
      }
      case LayerKind::Relu:
        g = g.cwiseProduct((x.array() > 0.0).cast<double>().matrix());
        break;
      case LayerKind::Dropout: {
        const Mat& mask = cache.dropout_masks[static_cast<std::size_t>(li)];
        if (mask.size() > 0) g = g.cwiseProduct(mask);
        break;
      }
      case LayerKind::Softmax: {
        Mat gx(B, g.cols());
        for (long s = 0; s < B; ++s) {
          double dot = g.row(s).dot(y.row(s));
          gx.row(s) = y.row(s).cwiseProduct((g.row(s).array() - dot).matrix());
        }
        g = std::move(gx);
        break;
      }
    }
  }
  return grads;
}

AdamState make_adam_state(const Params& params) {
  AdamState s;
  s.m = zeros_like(params).tensors;
  s.v = zeros_like(params).tensors;
  return s;
}

void adam_step(Params& params, const Params& grads, AdamState& state, double lr) {
  if (params.tensors.size() != grads.tensors.size() ||
      params.tensors.size() != state.m.size())
    fail("adam state does not match parameters");
  state.t += 1;
  double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * grads.tensors[i];
    state.v[i] = state.beta2 * state.v[i] +
                 (1.0 - state.beta2) * grads.tensors[i].cwiseProduct(grads.tensors[i]);
    Mat mhat = state.m[i] / bc1;
    Mat vhat = state.v[i] / bc2;
    params.tensors[i].array() -= lr * mhat.array() / (vhat.array().sqrt() + state.eps);
  }
}

double cross_entropy(const Mat& probs, const IVec& labels) {
  if (probs.rows() != labels.size()) fail("label count mismatch");
  double total = 0.0;
  for (long r = 0; r < probs.rows(); ++r) {
    int y = labels(r);
    if (y < 0 || y >= probs.cols()) fail("label out of range");
    total += -std::log(std::max(probs(r, y), 1e-12));
  }
  return total / static_cast<double>(probs.rows());
}

Mat cross_entropy_grad(const Mat& probs, const IVec& labels) {
  if (probs.rows() != labels.size()) fail("label count mismatch");
  Mat g = Mat::Zero(probs.rows(), probs.cols());
  double inv = 1.0 / static_cast<double>(probs.rows());
  for (long r = 0; r < probs.rows(); ++r) {
    int y = labels(r);
    if (y < 0 || y >= probs.cols()) fail("label out of range");
    g(r, y) = -inv / std::max(probs(r, y), 1e-12);
  }
  return g;
}

}  // namespace hal
