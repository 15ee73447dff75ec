#include "hal/classifier.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

#include "hal/io.hpp"
#include "hal/rng.hpp"

namespace hal {
namespace {

void fail(const std::string& msg) { throw std::runtime_error("classifier: " + msg); }

constexpr std::size_t kEvalBlock = 256;

Mat gather_rows(const ImageStore& store, const std::vector<int>& indices,
                std::size_t lo, std::size_t hi) {
  Mat batch(static_cast<long>(hi - lo), store.images.cols());
  for (std::size_t i = lo; i < hi; ++i) {
    int idx = indices[i];
    if (idx < 0 || idx >= store.n()) fail("index outside the store");
    batch.row(static_cast<long>(i - lo)) = store.images.row(idx);
  }
  return batch;
}

}  // namespace

ModelSpec conv_spec(Shape input, int n_classes) {
  if (n_classes < 2) fail("need at least two classes");
  ModelSpec spec;
  spec.input = input;
  if (input.h >= 24 && input.w >= 24) {
    spec.layers = {conv2d(6, 5), relu(), maxpool(2), conv2d(16, 5), relu(), maxpool(2),
                   dense(64),    relu(), dropout(0.5), dense(n_classes), softmax()};
  } else {
    spec.layers = {conv2d(6, 5), relu(), maxpool(2),   conv2d(16, 3),    relu(),
                   dense(64),    relu(), dropout(0.5), dense(n_classes), softmax()};
  }
  for (std::size_t i = 0; i < spec.layers.size(); ++i)
    if (spec.layers[i].kind == LayerKind::Dense && spec.layers[i].units == 64)
      spec.embedding_layer = static_cast<int>(i);
  validate_spec(spec);
  return spec;
}

ModelSpec mlp_spec(Shape input, int n_classes, int embed_dim, double drop) {
  if (n_classes < 2) fail("need at least two classes");
  ModelSpec spec;
  spec.input = input;
  spec.layers = {dense(embed_dim), relu(), dropout(drop), dense(n_classes), softmax()};
  spec.embedding_layer = 0;
  validate_spec(spec);
  return spec;
}

Classifier make_classifier(ModelSpec spec, ClassifierConfig cfg) {
  validate_spec(spec);
  if (cfg.epochs < 0 || cfg.finetune_epochs < 0) fail("negative epoch count");
  if (cfg.batch < 1) fail("batch size must be positive");
  Classifier clf;
  clf.spec = std::move(spec);
  clf.params = init_params(clf.spec, cfg.seed);
  clf.adam = make_adam_state(clf.params);
  clf.cfg = cfg;
  return clf;
}

double train_classifier(Classifier& clf, const PoolState& pool, const ImageStore& store) {
  if (pool.labeled.empty()) fail("labeled set is empty");
  if (store.n_classes != clf.n_classes()) fail("class count mismatch");

  int epochs;
  std::uint64_t stream;
  if (clf.cfg.mode == RetrainMode::Scratch) {
    clf.params = init_params(clf.spec, clf.cfg.seed);
    clf.adam = make_adam_state(clf.params);
    clf.train_calls = 0;
    epochs = clf.cfg.epochs;
    stream = mix(clf.cfg.seed, salt::kTrain);
  } else {
    epochs = clf.train_calls == 0 ? clf.cfg.epochs : clf.cfg.finetune_epochs;
    stream = mix(mix(clf.cfg.seed, salt::kTrain),
                 static_cast<std::uint64_t>(clf.train_calls));
  }
  clf.train_calls += 1;

  int n = static_cast<int>(pool.labeled.size());
  int bsize = std::min(clf.cfg.batch, n);
  std::vector<int> order(pool.labeled);
  auto rng = make_rng(stream);
  double last_epoch_loss = 0.0;

  for (int e = 0; e < epochs; ++e) {
    shuffle_vec(order, rng);
    double loss_sum = 0.0;
    for (int lo = 0; lo < n; lo += bsize) {
      int hi = std::min(n, lo + bsize);
      Mat batch(hi - lo, store.images.cols());
      IVec labels(hi - lo);
      for (int i = lo; i < hi; ++i) {
        batch.row(i - lo) = store.images.row(order[static_cast<std::size_t>(i)]);
        labels(i - lo) = store.labels(order[static_cast<std::size_t>(i)]);
      }
      std::uint64_t batch_seed = mix(mix(stream, static_cast<std::uint64_t>(e)),
                                     static_cast<std::uint64_t>(lo));
      auto fwd = forward(clf.spec, clf.params, batch, Mode::Train, batch_seed);
      loss_sum += cross_entropy(fwd.output, labels) * (hi - lo);
      auto grads = backward(clf.spec, clf.params, fwd.cache,
                            cross_entropy_grad(fwd.output, labels));
      adam_step(clf.params, grads, clf.adam, clf.cfg.lr);
    }
    last_epoch_loss = loss_sum / n;
  }
  return last_epoch_loss;
}

double evaluate(const Classifier& clf, const std::vector<int>& indices,
                const ImageStore& store) {
  if (indices.empty()) fail("empty evaluation set");
  long correct = 0;
  for (std::size_t lo = 0; lo < indices.size(); lo += kEvalBlock) {
    std::size_t hi = std::min(indices.size(), lo + kEvalBlock);
    Mat batch = gather_rows(store, indices, lo, hi);
    auto fwd = forward(clf.spec, clf.params, batch, Mode::Eval, 0);
    for (long r = 0; r < fwd.output.rows(); ++r) {
      int best = 0;
      for (int c = 1; c < clf.n_classes(); ++c)
        if (fwd.output(r, c) > fwd.output(r, best)) best = c;
      if (best == store.labels(indices[lo + static_cast<std::size_t>(r)])) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

Vec embed(const Classifier& clf, const Vec& x) {
  if (x.size() != clf.spec.input.size()) fail("input shape mismatch");
  auto fwd = forward(clf.spec, clf.params, x.transpose(), Mode::Eval, 0);
  return fwd.embedding.row(0).transpose();
}

Mat embed_all(const Classifier& clf, const std::vector<int>& indices,
              const ImageStore& store) {
  Mat out(static_cast<long>(indices.size()), clf.embed_dim());
  for (std::size_t lo = 0; lo < indices.size(); lo += kEvalBlock) {
    std::size_t hi = std::min(indices.size(), lo + kEvalBlock);
    Mat batch = gather_rows(store, indices, lo, hi);
    auto fwd = forward(clf.spec, clf.params, batch, Mode::Eval, 0);
    out.middleRows(static_cast<long>(lo), static_cast<long>(hi - lo)) = fwd.embedding;
  }
  return out;
}

McPrediction mc_dropout_predict(const Classifier& clf, const Vec& x, int n_passes,
                                std::uint64_t seed) {
  if (n_passes < 1) fail("need at least one stochastic pass");
  if (x.size() != clf.spec.input.size()) fail("input shape mismatch");
  McPrediction out;
  auto clean = forward(clf.spec, clf.params, x.transpose(), Mode::Eval, 0);
  out.clean = clean.output.row(0).transpose();

  Mat batch(n_passes, x.size());
  std::vector<std::uint64_t> row_seeds(static_cast<std::size_t>(n_passes));
  for (int p = 0; p < n_passes; ++p) {
    batch.row(p) = x.transpose();
    row_seeds[static_cast<std::size_t>(p)] = mix(seed, static_cast<std::uint64_t>(p));
  }
  auto noisy = forward_rows(clf.spec, clf.params, batch, Mode::Train, row_seeds);
  out.noisy = noisy.output;
  return out;
}

void save_classifier(const Classifier& clf, const std::string& path) {
  save_checkpoint(path, clf.spec, clf.params);
}

Classifier load_classifier(const std::string& path, ClassifierConfig cfg) {
  auto [spec, params] = load_checkpoint(path);
  Classifier clf;
  clf.spec = std::move(spec);
  clf.params = std::move(params);
  clf.adam = make_adam_state(clf.params);
  clf.cfg = cfg;
  return clf;
}

}  // namespace hal
