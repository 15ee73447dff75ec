#pragma once

#include <cstdint>
#include <vector>

#include "hal/data.hpp"
#include "hal/nn.hpp"
#include "hal/types.hpp"

namespace hal {

enum class RetrainMode { Scratch, Finetune };

struct ClassifierConfig {
  int epochs = 30;
  int finetune_epochs = 10;
  int batch = 32;  // effective batch is min(batch, labeled size)
  double lr = 1e-3;
  RetrainMode mode = RetrainMode::Scratch;
  std::uint64_t seed = 0;
};

struct Classifier {
  ModelSpec spec;
  Params params;
  AdamState adam;
  ClassifierConfig cfg;
  long train_calls = 0;

  int n_classes() const { return output_dim(spec); }
  int embed_dim() const { return embedding_dim(spec); }
};

// conv stack ending in a flat embedding; the 28x28 form is
// conv(6,5)-relu-pool(2)-conv(16,5)-relu-pool(2)-dense(64)-relu-drop(.5)-dense(L),
// smaller inputs swap the second conv for a 3x3 so the stack still composes
ModelSpec conv_spec(Shape input, int n_classes);

ModelSpec mlp_spec(Shape input, int n_classes, int embed_dim = 64, double drop = 0.5);

Classifier make_classifier(ModelSpec spec, ClassifierConfig cfg);

// scratch mode reinitializes from cfg.seed every call (same data, same seed,
// same weights); finetune keeps weights and optimizer state and trains for
// finetune_epochs; returns the final-epoch mean cross-entropy
double train_classifier(Classifier& clf, const PoolState& pool, const ImageStore& store);

// accuracy with argmax ties resolved toward the lowest class index
double evaluate(const Classifier& clf, const std::vector<int>& indices,
                const ImageStore& store);

Vec embed(const Classifier& clf, const Vec& x);
Mat embed_all(const Classifier& clf, const std::vector<int>& indices,
              const ImageStore& store);

struct McPrediction {
  Vec clean;  // dropout off
  Mat noisy;  // one row per stochastic pass
};

McPrediction mc_dropout_predict(const Classifier& clf, const Vec& x, int n_passes,
                                std::uint64_t seed);

void save_classifier(const Classifier& clf, const std::string& path);
// restores spec and params; optimizer state and call counter start fresh
Classifier load_classifier(const std::string& path, ClassifierConfig cfg);

}  // namespace hal
