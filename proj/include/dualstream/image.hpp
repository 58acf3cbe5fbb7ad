#pragma once

// Grayscale image pipeline: resize, CLAHE, non-local-means denoising,
// normalization, and the augmentation transforms. Integer stages keep pixels
// in [0,255]; conversion to float happens only at normalization. Every
// stochastic step is a pure function of (input, seed).

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dualstream/common.hpp"

namespace dualstream {

struct Image {
  int width = 0;
  int height = 0;
  int channels = 1;  // grayscale throughout this pipeline
  std::vector<uint8_t> pixels;  // row-major

  uint8_t at(int x, int y) const { return pixels[static_cast<size_t>(y) * width + x]; }
  uint8_t& at(int x, int y) { return pixels[static_cast<size_t>(y) * width + x]; }
};

inline Image make_image(int width, int height, uint8_t fill = 0) {
  if (width <= 0 || height <= 0) throw Error("make_image: non-positive dimensions");
  Image img;
  img.width = width;
  img.height = height;
  img.pixels.assign(static_cast<size_t>(width) * height, fill);
  return img;
}

inline void check_image(const Image& img, const char* what) {
  if (img.width <= 0 || img.height <= 0)
    throw Error(std::string(what) + ": zero-sized image");
  if (img.channels != 1) throw Error(std::string(what) + ": expected grayscale input");
  if (img.pixels.size() != static_cast<size_t>(img.width) * img.height)
    throw Error(std::string(what) + ": pixel buffer does not match dimensions");
}

struct FloatImage {
  int width = 0;
  int height = 0;
  int channels = 1;
  std::vector<float> data;
};

// Per-channel statistics of pixel/255, computed from the training split only.
struct NormalizationStats {
  double mean = 0.0;
  double stddev = 1.0;
};

// ---------------------------------------------------------------------------
// Geometric and intensity transforms
// ---------------------------------------------------------------------------

// Bilinear resampling with the half-pixel-center convention:
// src = (dst + 0.5) * in/out - 0.5, values rounded half up. Downscaling a
// [0,0;255,255] 2x2 block to 1x1 therefore yields 128.
Image resize_bilinear(const Image& img, int out_w, int out_h);

// Contrast-limited adaptive histogram equalization. Per-tile histograms are
// clipped at clip_limit * npix/256 with the excess redistributed uniformly;
// per-tile maps m[v] = round(255*cdf[v]/npix) are blended bilinearly between
// tile centers. Tile grid is clamped so every tile is at least one pixel.
Image clahe(const Image& img, double clip_limit = 2.0, int tiles_x = 8, int tiles_y = 8);

// Non-local means with per-offset integral images over a replicate-padded
// frame. Patch distance d2 = SSD/patch_area; weights exp(-max(d2-2*sigma^2,0)/h^2)
// with sigma fixed to 0 here, so w = exp(-d2/h^2). Windows are odd,
// template <= search.
Image nl_means_denoise(const Image& img, double h = 10.0, int template_window = 7,
                       int search_window = 21);

Image hflip(const Image& img);

// Rotation about the image center, bilinear sampling, same output dims;
// samples that inverse-map outside the source are filled with 0 (black).
Image rotate_about_center(const Image& img, double degrees);

// out = clip(alpha*in + beta, 0, 255), rounded half up.
Image brightness_contrast(const Image& img, double alpha, double beta);

// out = (pixel/255 - mean)/stddev.
FloatImage normalize(const Image& img, const NormalizationStats& stats);

// Population mean/std of pixel/255 over all pixels of all images (two-pass).
NormalizationStats compute_normalization_stats(const std::vector<Image>& images);

struct PreprocessConfig {
  int resize_to = 224;
  double clahe_clip_limit = 2.0;
  int clahe_tiles = 8;
  double nlm_h = 10.0;
  int nlm_template_window = 7;
  int nlm_search_window = 21;
};

// resize -> CLAHE -> denoise, in that order.
Image preprocess_image(const Image& img, const PreprocessConfig& cfg);

namespace detail {
// The per-tile CLAHE map, exposed so tests can compare 1x1-tile CLAHE against
// a direct clipped-histogram-equalization reference.
std::array<uint8_t, 256> clahe_equalization_map(const std::array<double, 256>& hist,
                                                int64_t npix, double clip_limit);
}  // namespace detail

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

struct ImageSample {
  std::string id;
  int label = -1;
  Image image;
  std::string source_id;  // for originals, the sample's own id
  std::string chain;      // human-readable transform chain ("original" for sources)
};

struct AugmentConfig {
  double flip_probability = 0.5;
  double rotation_degrees = 10.0;
  double contrast_alpha = 1.2;
  double brightness_beta = 15.0;
  int64_t target_total = 6020;
  uint64_t seed = 0;
};

// Splits `total` across classes proportionally to `counts` by the
// largest-remainder rule; the result sums to `total` exactly and each share
// is within 1 of the exact proportion.
std::vector<int64_t> proportional_allocation(const std::vector<int64_t>& counts,
                                             int64_t total);

// Originals are kept verbatim; extra samples are generated per class up to
// the proportional target, cycling over that class's sources in order. The
// transform for a source's n-th generated item cycles flip -> rotate ->
// affine (flip then rotate) -> brightness/contrast, with the per-item seed
// derived from (config seed, source id, n).
std::vector<ImageSample> augment_dataset(const std::vector<ImageSample>& sources,
                                         const AugmentConfig& cfg);

}  // namespace dualstream
