#include "dualstream/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace dualstream {

void synthetic_quadrant(int cls, int image_size, int* x0, int* y0, int* x1, int* y1) {
  const int half = image_size / 2;
  *x0 = (cls % 2) * half;
  *y0 = (cls / 2) * half;
  *x1 = *x0 + half;
  *y1 = *y0 + half;
}

std::vector<ImageSample> make_synthetic_samples(const SyntheticConfig& cfg) {
  if (cfg.classes < 2 || cfg.classes > 4)
    throw UsageError("synthetic: classes must be between 2 and 4 (one quadrant each)");
  if (cfg.per_class < 1) throw UsageError("synthetic: per_class must be >= 1");
  if (cfg.image_size < 16 || cfg.image_size % 2 != 0)
    throw UsageError("synthetic: image_size must be even and >= 16");

  const int size = cfg.image_size;
  const double sigma = size / 8.0;         // ~8px at 64
  const double jitter = size / 16.0;       // ~4px at 64
  const double amplitude = 190.0;
  const double background = 25.0;

  std::vector<ImageSample> samples;
  samples.reserve(static_cast<size_t>(cfg.classes) * cfg.per_class);
  for (int c = 0; c < cfg.classes; ++c) {
    int qx0, qy0, qx1, qy1;
    synthetic_quadrant(c, size, &qx0, &qy0, &qx1, &qy1);
    // Anchor slightly off the quadrant center toward the image corner, so the
    // blob sits deep inside its quadrant instead of hugging the center lines.
    const double shift = size / 8.0;
    const double qcx = (qx0 + qx1 - 1) / 2.0 + (qx0 == 0 ? -shift : shift);
    const double qcy = (qy0 + qy1 - 1) / 2.0 + (qy0 == 0 ? -shift : shift);
    for (int i = 0; i < cfg.per_class; ++i) {
      Rng rng(mix_seed(mix_seed(cfg.seed, static_cast<uint64_t>(c)),
                       static_cast<uint64_t>(i)));
      const double cx = qcx + rng.uniform(-jitter, jitter);
      const double cy = qcy + rng.uniform(-jitter, jitter);

      Image img = make_image(size, size, 0);
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x) {
          const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
          const double v = background + amplitude * std::exp(-d2 / (2.0 * sigma * sigma)) +
                           rng.normal() * 4.0;
          img.pixels[static_cast<size_t>(y) * size + x] =
              static_cast<uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }

      char idbuf[64];
      std::snprintf(idbuf, sizeof(idbuf), "class%d_%04d", c, i);
      ImageSample s;
      s.id = idbuf;
      s.label = c;
      s.image = std::move(img);
      s.source_id = s.id;
      s.chain = "synthetic";
      samples.push_back(std::move(s));
    }
  }
  return samples;
}

}  // namespace dualstream
