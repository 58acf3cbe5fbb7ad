#pragma once

// Per-stream class activation maps. For a chosen stream and class, the class
// logit is backpropagated to that stream's final feature map A; each channel
// gets the spatial mean of its gradient as a weight, the weighted channel sum
// is rectified, max-normalized (an all-zero map stays zero), and bilinearly
// upsampled to input resolution. Overlays tint the original grayscale image
// with a blue-to-red ramp; pixels with zero activation keep their gray value.

#include <string>
#include <vector>

#include "dualstream/image.hpp"
#include "dualstream/image_io.hpp"
#include "dualstream/model.hpp"

namespace dualstream {

enum class Stream { mobile, dense };

const char* stream_name(Stream s);

// relu(sum_k alpha_k A_k) with alpha_k the spatial mean of the k-th gradient
// channel, then divided by the max when the max is positive. Exposed for
// direct oracle testing of the arithmetic.
std::vector<float> gradcam_combine(const std::vector<float>& map_values,
                                   const std::vector<float>& map_grads, int channels, int h,
                                   int w);

// Bilinear upsample with the half-pixel-center convention shared with the
// image resizer, without the 8-bit rounding.
std::vector<float> upsample_bilinear(const std::vector<float>& src, int src_w, int src_h,
                                     int dst_w, int dst_h);

struct GradCam {
  Stream stream = Stream::mobile;
  int cls = 0;
  int map_w = 0, map_h = 0;        // feature-map resolution
  std::vector<float> weights;      // alpha_k per channel
  std::vector<float> map;          // normalized cam at map resolution
  std::vector<float> heat;         // upsampled to input resolution, in [0,1]
  int input_w = 0, input_h = 0;
  int max_x = 0, max_y = 0;        // argmax of heat, first hit in row-major order
  float max_value = 0.0f;
};

// Heatmap for one sample (x must be 1 x C x H x W); eval-mode forward.
GradCam compute_gradcam(FusionModel& model, const Tensor& x, Stream stream, int cls);

// (1-alpha)*gray + alpha*ramp(t) per channel where heat t > 0; untouched gray
// where t == 0. Ramp: red = 255t, green = 0, blue = 255(1-t).
RgbImage overlay_heatmap(const Image& gray, const std::vector<float>& heat,
                         double alpha = 0.4);

struct ExplainRecord {
  std::string sample_id;
  std::string stream;
  int predicted_class = 0;
  std::string class_name;
  std::string file;     // PNG filename relative to the output directory
  int max_x = 0, max_y = 0;
  float max_value = 0.0f;
};

// For every sample: predict, then render both streams' heatmaps for the
// predicted class as {id}_{stream}_{class}.png overlays in out_dir.
std::vector<ExplainRecord> write_explanations(FusionModel& model,
                                              const std::vector<ImageSample>& samples,
                                              const NormalizationStats& stats,
                                              const std::vector<std::string>& class_names,
                                              const std::string& out_dir, double alpha = 0.4);

}  // namespace dualstream
