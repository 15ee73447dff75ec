#pragma once

#include <cstdint>
#include <string>

#include "hal/data.hpp"

namespace hal::synth {

// oriented-bar classes: class c draws a soft bar at angle pi*c/L with
// per-sample jitter, amplitude, and pixel noise, so samples vary in
// difficulty while classes stay learnable from a few examples
ImageStore make_store(int n, int n_classes, int height, int width, std::uint64_t seed);

// writes an idx pair a CLI run can consume from dir
void write_fixture(const ImageStore& store, const std::string& dir);

}  // namespace hal::synth
