#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "hal/rng.hpp"

namespace hal::synth {

ImageStore make_store(int n, int n_classes, int height, int width, std::uint64_t seed) {
  ImageStore store;
  store.channels = 1;
  store.height = height;
  store.width = width;
  store.n_classes = n_classes;
  store.images.resize(n, static_cast<long>(height) * width);
  store.labels.resize(n);
  store.provenance.assign(static_cast<std::size_t>(n), Provenance::Original);

  auto rng = make_rng(seed);
  constexpr double kPi = 3.14159265358979323846;
  for (int i = 0; i < n; ++i) {
    int label = i % n_classes;
    store.labels(i) = label;
    double angle = kPi * label / n_classes;
    double dx = std::cos(angle), dy = std::sin(angle);
    double cy = height / 2.0 + (uniform_real(rng) - 0.5) * height * 0.25;
    double cx = width / 2.0 + (uniform_real(rng) - 0.5) * width * 0.25;
    double thick = 0.8 + uniform_real(rng) * 0.8;
    double len = height * (0.25 + uniform_real(rng) * 0.15);
    double amp = 0.55 + uniform_real(rng) * 0.45;
    double noise = 0.04 + uniform_real(rng) * 0.22;
    std::normal_distribution<double> pix(0.0, noise);
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) {
        double ry = y - cy, rx = x - cx;
        double along = rx * dx + ry * dy;
        double across = -rx * dy + ry * dx;
        double v = amp * std::exp(-(across * across) / (2.0 * thick * thick)) *
                   std::exp(-(along * along) / (2.0 * len * len));
        v += pix(rng);
        store.images(i, static_cast<long>(y) * width + x) = std::clamp(v, 0.0, 1.0);
      }
  }
  store.validate();
  return store;
}

void write_fixture(const ImageStore& store, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_idx(store, dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
}

}  // namespace hal::synth
