#include "dualstream/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace dualstream {

namespace {

constexpr double kPi = 3.14159265358979323846;

inline uint8_t round_clip_u8(double v) {
  double r = std::floor(v + 0.5);
  if (r < 0.0) return 0;
  if (r > 255.0) return 255;
  return static_cast<uint8_t>(r);
}

inline double bilinear_at(const Image& img, double sx, double sy) {
  int x0 = static_cast<int>(std::floor(sx));
  int y0 = static_cast<int>(std::floor(sy));
  int x1 = std::min(x0 + 1, img.width - 1);
  int y1 = std::min(y0 + 1, img.height - 1);
  double fx = sx - x0;
  double fy = sy - y0;
  double top = (1.0 - fx) * img.at(x0, y0) + fx * img.at(x1, y0);
  double bot = (1.0 - fx) * img.at(x0, y1) + fx * img.at(x1, y1);
  return (1.0 - fy) * top + fy * bot;
}

}  // namespace

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  check_image(img, "resize_bilinear");
  if (out_w <= 0 || out_h <= 0) throw Error("resize_bilinear: non-positive output size");
  Image out = make_image(out_w, out_h);
  const double sx_scale = static_cast<double>(img.width) / out_w;
  const double sy_scale = static_cast<double>(img.height) / out_h;
  for (int y = 0; y < out_h; ++y) {
    double sy = (y + 0.5) * sy_scale - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(img.height - 1));
    for (int x = 0; x < out_w; ++x) {
      double sx = (x + 0.5) * sx_scale - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(img.width - 1));
      out.at(x, y) = round_clip_u8(bilinear_at(img, sx, sy));
    }
  }
  return out;
}

namespace detail {

std::array<uint8_t, 256> clahe_equalization_map(const std::array<double, 256>& hist,
                                                int64_t npix, double clip_limit) {
  const double clip = clip_limit * static_cast<double>(npix) / 256.0;
  std::array<double, 256> clipped;
  double excess = 0.0;
  for (int v = 0; v < 256; ++v) {
    if (hist[static_cast<size_t>(v)] > clip) {
      excess += hist[static_cast<size_t>(v)] - clip;
      clipped[static_cast<size_t>(v)] = clip;
    } else {
      clipped[static_cast<size_t>(v)] = hist[static_cast<size_t>(v)];
    }
  }
  const double bonus = excess / 256.0;
  std::array<uint8_t, 256> map;
  double cdf = 0.0;
  for (int v = 0; v < 256; ++v) {
    cdf += clipped[static_cast<size_t>(v)] + bonus;
    map[static_cast<size_t>(v)] = round_clip_u8(255.0 * cdf / static_cast<double>(npix));
  }
  return map;
}

}  // namespace detail

Image clahe(const Image& img, double clip_limit, int tiles_x, int tiles_y) {
  check_image(img, "clahe");
  if (clip_limit <= 0) throw Error("clahe: clip limit must be positive");
  if (tiles_x < 1 || tiles_y < 1) throw Error("clahe: tile grid must be at least 1x1");
  const int tx = std::min(tiles_x, img.width);
  const int ty = std::min(tiles_y, img.height);

  std::vector<std::array<uint8_t, 256>> maps(static_cast<size_t>(tx) * ty);
  std::vector<double> cx(static_cast<size_t>(tx)), cy(static_cast<size_t>(ty));
  for (int j = 0; j < ty; ++j) {
    const int y0 = static_cast<int>(static_cast<int64_t>(j) * img.height / ty);
    const int y1 = static_cast<int>(static_cast<int64_t>(j + 1) * img.height / ty);
    cy[static_cast<size_t>(j)] = (y0 + y1 - 1) / 2.0;
    for (int i = 0; i < tx; ++i) {
      const int x0 = static_cast<int>(static_cast<int64_t>(i) * img.width / tx);
      const int x1 = static_cast<int>(static_cast<int64_t>(i + 1) * img.width / tx);
      if (j == 0) cx[static_cast<size_t>(i)] = (x0 + x1 - 1) / 2.0;
      std::array<double, 256> hist{};
      for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x) hist[img.at(x, y)] += 1.0;
      const int64_t npix = static_cast<int64_t>(x1 - x0) * (y1 - y0);
      maps[static_cast<size_t>(j) * tx + i] =
          detail::clahe_equalization_map(hist, npix, clip_limit);
    }
  }

  // Per-axis blend index and weight toward the next tile center.
  auto axis_blend = [](const std::vector<double>& centers, int pos, int& idx, double& t) {
    const int n = static_cast<int>(centers.size());
    if (n == 1) {
      idx = 0;
      t = 0.0;
      return;
    }
    int i = 0;
    while (i + 2 < n && pos >= centers[static_cast<size_t>(i + 1)]) ++i;
    idx = i;
    t = (pos - centers[static_cast<size_t>(i)]) /
        (centers[static_cast<size_t>(i + 1)] - centers[static_cast<size_t>(i)]);
    t = std::clamp(t, 0.0, 1.0);
  };

  Image out = make_image(img.width, img.height);
  for (int y = 0; y < img.height; ++y) {
    int jy;
    double wy;
    axis_blend(cy, y, jy, wy);
    const int jy1 = std::min(jy + 1, ty - 1);
    for (int x = 0; x < img.width; ++x) {
      int ix;
      double wx;
      axis_blend(cx, x, ix, wx);
      const int ix1 = std::min(ix + 1, tx - 1);
      const uint8_t v = img.at(x, y);
      const double m00 = maps[static_cast<size_t>(jy) * tx + ix][v];
      const double m01 = maps[static_cast<size_t>(jy) * tx + ix1][v];
      const double m10 = maps[static_cast<size_t>(jy1) * tx + ix][v];
      const double m11 = maps[static_cast<size_t>(jy1) * tx + ix1][v];
      const double blended =
          (1.0 - wy) * ((1.0 - wx) * m00 + wx * m01) + wy * ((1.0 - wx) * m10 + wx * m11);
      out.at(x, y) = round_clip_u8(blended);
    }
  }
  return out;
}

Image nl_means_denoise(const Image& img, double h, int template_window, int search_window) {
  check_image(img, "nl_means_denoise");
  if (h <= 0) throw Error("nl_means_denoise: h must be positive");
  if (template_window < 1 || search_window < 1 || template_window % 2 == 0 ||
      search_window % 2 == 0)
    throw Error("nl_means_denoise: windows must be odd and positive");
  if (template_window > search_window)
    throw Error("nl_means_denoise: template window exceeds search window");

  const int tr = template_window / 2;
  const int sr = search_window / 2;
  const int R = tr + sr;
  const int W = img.width, H = img.height;
  const int Wp = W + 2 * R, Hp = H + 2 * R;

  // Replicate-padded copy.
  std::vector<float> pad(static_cast<size_t>(Wp) * Hp);
  for (int y = 0; y < Hp; ++y) {
    const int sy = std::clamp(y - R, 0, H - 1);
    for (int x = 0; x < Wp; ++x) {
      const int sx = std::clamp(x - R, 0, W - 1);
      pad[static_cast<size_t>(y) * Wp + x] = img.at(sx, sy);
    }
  }

  const double inv_h2 = 1.0 / (h * h);
  const double patch_area = static_cast<double>(template_window) * template_window;
  std::vector<double> num(static_cast<size_t>(W) * H, 0.0);
  std::vector<double> den(static_cast<size_t>(W) * H, 0.0);
  std::vector<double> diff2(static_cast<size_t>(Wp) * Hp);
  // Integral image with a zero top row and left column.
  std::vector<double> integ(static_cast<size_t>(Wp + 1) * (Hp + 1));

  for (int dy = -sr; dy <= sr; ++dy) {
    for (int dx = -sr; dx <= sr; ++dx) {
      const int x_lo = std::max(0, -dx), x_hi = Wp - 1 - std::max(0, dx);
      const int y_lo = std::max(0, -dy), y_hi = Hp - 1 - std::max(0, dy);
      std::fill(diff2.begin(), diff2.end(), 0.0);
      for (int y = y_lo; y <= y_hi; ++y)
        for (int x = x_lo; x <= x_hi; ++x) {
          const double d = static_cast<double>(pad[static_cast<size_t>(y) * Wp + x]) -
                           pad[static_cast<size_t>(y + dy) * Wp + (x + dx)];
          diff2[static_cast<size_t>(y) * Wp + x] = d * d;
        }
      for (int y = 0; y <= Hp; ++y) integ[static_cast<size_t>(y) * (Wp + 1)] = 0.0;
      for (int x = 0; x <= Wp; ++x) integ[static_cast<size_t>(x)] = 0.0;
      for (int y = 1; y <= Hp; ++y) {
        double row = 0.0;
        for (int x = 1; x <= Wp; ++x) {
          row += diff2[static_cast<size_t>(y - 1) * Wp + (x - 1)];
          integ[static_cast<size_t>(y) * (Wp + 1) + x] =
              integ[static_cast<size_t>(y - 1) * (Wp + 1) + x] + row;
        }
      }
      for (int y = 0; y < H; ++y) {
        const int py = y + R;
        for (int x = 0; x < W; ++x) {
          const int px = x + R;
          const int ax = px - tr, ay = py - tr;      // patch upper-left, inclusive
          const int bx = px + tr + 1, by = py + tr + 1;  // exclusive
          const double ssd = integ[static_cast<size_t>(by) * (Wp + 1) + bx] -
                             integ[static_cast<size_t>(ay) * (Wp + 1) + bx] -
                             integ[static_cast<size_t>(by) * (Wp + 1) + ax] +
                             integ[static_cast<size_t>(ay) * (Wp + 1) + ax];
          const double d2 = ssd / patch_area;
          const double w = std::exp(-d2 * inv_h2);
          num[static_cast<size_t>(y) * W + x] +=
              w * pad[static_cast<size_t>(py + dy) * Wp + (px + dx)];
          den[static_cast<size_t>(y) * W + x] += w;
        }
      }
    }
  }

  Image out = make_image(W, H);
  for (int y = 0; y < H; ++y)
    for (int x = 0; x < W; ++x)
      out.at(x, y) = round_clip_u8(num[static_cast<size_t>(y) * W + x] /
                                   den[static_cast<size_t>(y) * W + x]);
  return out;
}

Image hflip(const Image& img) {
  check_image(img, "hflip");
  Image out = make_image(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) out.at(x, y) = img.at(img.width - 1 - x, y);
  return out;
}

Image rotate_about_center(const Image& img, double degrees) {
  check_image(img, "rotate_about_center");
  const double rad = degrees * kPi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  Image out = make_image(img.width, img.height);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = cx + c * dx + s * dy;
      const double sy = cy - s * dx + c * dy;
      if (sx < 0.0 || sx > img.width - 1 || sy < 0.0 || sy > img.height - 1) continue;
      out.at(x, y) = round_clip_u8(bilinear_at(img, sx, sy));
    }
  return out;
}

Image brightness_contrast(const Image& img, double alpha, double beta) {
  check_image(img, "brightness_contrast");
  if (alpha <= 0) throw Error("brightness_contrast: alpha must be positive");
  Image out = make_image(img.width, img.height);
  for (size_t i = 0; i < img.pixels.size(); ++i)
    out.pixels[i] = round_clip_u8(alpha * img.pixels[i] + beta);
  return out;
}

FloatImage normalize(const Image& img, const NormalizationStats& stats) {
  check_image(img, "normalize");
  if (stats.stddev <= 0) throw Error("normalize: stddev must be positive");
  FloatImage out;
  out.width = img.width;
  out.height = img.height;
  out.channels = 1;
  out.data.resize(img.pixels.size());
  for (size_t i = 0; i < img.pixels.size(); ++i)
    out.data[i] =
        static_cast<float>((img.pixels[i] / 255.0 - stats.mean) / stats.stddev);
  return out;
}

NormalizationStats compute_normalization_stats(const std::vector<Image>& images) {
  if (images.empty()) throw DataError("compute_normalization_stats: no images");
  int64_t count = 0;
  double sum = 0.0;
  for (const auto& img : images) {
    check_image(img, "compute_normalization_stats");
    for (uint8_t p : img.pixels) sum += p / 255.0;
    count += static_cast<int64_t>(img.pixels.size());
  }
  const double mean = sum / static_cast<double>(count);
  double sq = 0.0;
  for (const auto& img : images)
    for (uint8_t p : img.pixels) {
      const double d = p / 255.0 - mean;
      sq += d * d;
    }
  const double stddev = std::sqrt(sq / static_cast<double>(count));
  // Accumulation round-off can leave ~1e-19 where the true variance is zero.
  if (stddev <= 1e-9)
    throw DataError("compute_normalization_stats: zero variance (constant corpus)");
  return {mean, stddev};
}

Image preprocess_image(const Image& img, const PreprocessConfig& cfg) {
  Image out = resize_bilinear(img, cfg.resize_to, cfg.resize_to);
  out = clahe(out, cfg.clahe_clip_limit, cfg.clahe_tiles, cfg.clahe_tiles);
  out = nl_means_denoise(out, cfg.nlm_h, cfg.nlm_template_window, cfg.nlm_search_window);
  return out;
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

std::vector<int64_t> proportional_allocation(const std::vector<int64_t>& counts,
                                             int64_t total) {
  if (counts.empty()) throw Error("proportional_allocation: no classes");
  int64_t n = 0;
  for (int64_t c : counts) {
    if (c < 0) throw Error("proportional_allocation: negative count");
    n += c;
  }
  if (n == 0) throw Error("proportional_allocation: empty corpus");
  std::vector<int64_t> share(counts.size());
  std::vector<std::pair<int64_t, size_t>> rema;  // (-remainder, index) for stable order
  int64_t assigned = 0;
  for (size_t i = 0; i < counts.size(); ++i) {
    share[i] = total * counts[i] / n;
    assigned += share[i];
    rema.emplace_back(-(total * counts[i] % n), i);
  }
  std::sort(rema.begin(), rema.end());
  for (int64_t k = 0; k < total - assigned; ++k) share[rema[static_cast<size_t>(k)].second] += 1;
  return share;
}

namespace {

std::string format_angle(double deg) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", deg);
  return buf;
}

ImageSample generate_augmented(const ImageSample& src, int64_t item_index,
                               const AugmentConfig& cfg) {
  Rng rng(mix_seed(mix_seed(cfg.seed, fnv1a64(src.id)), static_cast<uint64_t>(item_index)));
  ImageSample out;
  out.label = src.label;
  out.source_id = src.id;
  out.id = src.id + "_a" + std::to_string(item_index);
  switch (item_index % 4) {
    case 0: {
      const bool applied = rng.uniform() < cfg.flip_probability;
      out.image = applied ? hflip(src.image) : src.image;
      out.chain = applied ? "flip(applied)" : "flip(identity)";
      break;
    }
    case 1: {
      const double deg = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees);
      out.image = rotate_about_center(src.image, deg);
      out.chain = "rotate(" + format_angle(deg) + ")";
      break;
    }
    case 2: {
      const bool applied = rng.uniform() < cfg.flip_probability;
      const double deg = rng.uniform(-cfg.rotation_degrees, cfg.rotation_degrees);
      out.image = rotate_about_center(applied ? hflip(src.image) : src.image, deg);
      out.chain = std::string("affine(flip=") + (applied ? "1" : "0") + ",rotate=" +
                  format_angle(deg) + ")";
      break;
    }
    default: {
      out.image = brightness_contrast(src.image, cfg.contrast_alpha, cfg.brightness_beta);
      out.chain = "brightness_contrast(alpha=" + format_angle(cfg.contrast_alpha) +
                  ",beta=" + format_angle(cfg.brightness_beta) + ")";
      break;
    }
  }
  return out;
}

}  // namespace

std::vector<ImageSample> augment_dataset(const std::vector<ImageSample>& sources,
                                         const AugmentConfig& cfg) {
  if (sources.empty()) throw DataError("augment_dataset: empty source set");
  if (cfg.flip_probability < 0 || cfg.flip_probability > 1)
    throw Error("augment_dataset: flip probability outside [0,1]");
  if (cfg.contrast_alpha <= 0) throw Error("augment_dataset: contrast alpha must be positive");
  if (cfg.target_total < static_cast<int64_t>(sources.size()))
    throw Error("augment_dataset: target_total below source count");

  int max_label = -1;
  for (const auto& s : sources) {
    if (s.label < 0) throw DataError("augment_dataset: sample '" + s.id + "' has no label");
    max_label = std::max(max_label, s.label);
  }
  std::vector<int64_t> class_counts(static_cast<size_t>(max_label) + 1, 0);
  std::vector<std::vector<size_t>> by_class(static_cast<size_t>(max_label) + 1);
  for (size_t i = 0; i < sources.size(); ++i) {
    class_counts[static_cast<size_t>(sources[i].label)] += 1;
    by_class[static_cast<size_t>(sources[i].label)].push_back(i);
  }

  const auto targets = proportional_allocation(class_counts, cfg.target_total);

  std::vector<ImageSample> out;
  out.reserve(static_cast<size_t>(cfg.target_total));
  for (const auto& s : sources) {
    ImageSample copy = s;
    if (copy.source_id.empty()) copy.source_id = copy.id;
    if (copy.chain.empty()) copy.chain = "original";
    out.push_back(std::move(copy));
  }
  for (size_t cls = 0; cls < by_class.size(); ++cls) {
    const auto& members = by_class[cls];
    const int64_t extras = targets[cls] - class_counts[cls];
    for (int64_t e = 0; e < extras; ++e) {
      const auto& src = sources[members[static_cast<size_t>(e) % members.size()]];
      const int64_t per_source_index = e / static_cast<int64_t>(members.size());
      out.push_back(generate_augmented(src, per_source_index, cfg));
    }
  }
  return out;
}

}  // namespace dualstream
