#pragma once

// Deterministic synthetic corpus for end-to-end runs and demos: each class
// lights a Gaussian blob in its own quadrant of a noisy dark frame, so a
// working classifier separates the classes and a faithful heatmap points at
// the blob's quadrant.

#include <cstdint>
#include <string>
#include <vector>

#include "dualstream/image.hpp"

namespace dualstream {

struct SyntheticConfig {
  int classes = 4;     // 2..4, mapped to quadrants TL, TR, BL, BR
  int per_class = 40;
  int image_size = 64;
  uint64_t seed = 0;
};

// Class c's blob center: quadrant (c%2, c/2), jittered a few pixels per image.
std::vector<ImageSample> make_synthetic_samples(const SyntheticConfig& cfg);

// Center of the quadrant that class c lives in, in pixel coordinates.
void synthetic_quadrant(int cls, int image_size, int* x0, int* y0, int* x1, int* y1);

}  // namespace dualstream
