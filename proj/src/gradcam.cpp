#include "dualstream/gradcam.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace dualstream {

const char* stream_name(Stream s) { return s == Stream::mobile ? "mobile" : "dense"; }

std::vector<float> gradcam_combine(const std::vector<float>& map_values,
                                   const std::vector<float>& map_grads, int channels, int h,
                                   int w) {
  const size_t plane = static_cast<size_t>(h) * w;
  if (map_values.size() != plane * channels || map_grads.size() != map_values.size())
    throw Error("gradcam_combine: buffer sizes do not match channels*h*w");

  std::vector<float> cam(plane, 0.0f);
  for (int k = 0; k < channels; ++k) {
    double acc = 0;
    for (size_t i = 0; i < plane; ++i) acc += map_grads[k * plane + i];
    const float alpha = static_cast<float>(acc / static_cast<double>(plane));
    for (size_t i = 0; i < plane; ++i) cam[i] += alpha * map_values[k * plane + i];
  }
  float peak = 0.0f;
  for (auto& v : cam) {
    v = std::max(v, 0.0f);
    peak = std::max(peak, v);
  }
  if (peak > 0.0f)
    for (auto& v : cam) v /= peak;
  return cam;
}

std::vector<float> upsample_bilinear(const std::vector<float>& src, int src_w, int src_h,
                                     int dst_w, int dst_h) {
  if (src_w < 1 || src_h < 1 || dst_w < 1 || dst_h < 1)
    throw Error("upsample_bilinear: extents must be positive");
  if (src.size() != static_cast<size_t>(src_w) * src_h)
    throw Error("upsample_bilinear: buffer does not match extents");
  std::vector<float> dst(static_cast<size_t>(dst_w) * dst_h);
  const double sx = static_cast<double>(src_w) / dst_w;
  const double sy = static_cast<double>(src_h) / dst_h;
  for (int y = 0; y < dst_h; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src_h - 1));
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, src_h - 1);
    const double wy = fy - y0;
    for (int x = 0; x < dst_w; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src_w - 1));
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, src_w - 1);
      const double wx = fx - x0;
      const double top = src[y0 * src_w + x0] * (1 - wx) + src[y0 * src_w + x1] * wx;
      const double bot = src[y1 * src_w + x0] * (1 - wx) + src[y1 * src_w + x1] * wx;
      dst[static_cast<size_t>(y) * dst_w + x] = static_cast<float>(top * (1 - wy) + bot * wy);
    }
  }
  return dst;
}

GradCam compute_gradcam(FusionModel& model, const Tensor& x, Stream stream, int cls) {
  if (x.ndim() != 4 || x.dim(0) != 1)
    throw Error("compute_gradcam: expects a single sample, got " + shape_str(x.shape()));
  if (cls < 0 || cls >= model.config.num_classes)
    throw Error("compute_gradcam: class " + std::to_string(cls) + " outside [0," +
                std::to_string(model.config.num_classes) + ")");

  Tape<float> tape;
  auto out = model.forward(&tape, x, /*training=*/false);
  Tensor target = pick(&tape, out.logits, cls);
  tape.backward(target);

  const Tensor& map = stream == Stream::mobile ? out.mobile_map : out.dense_map;
  const int channels = map.dim(1), mh = map.dim(2), mw = map.dim(3);

  GradCam cam;
  cam.stream = stream;
  cam.cls = cls;
  cam.map_w = mw;
  cam.map_h = mh;
  cam.input_h = x.dim(2);
  cam.input_w = x.dim(3);

  const size_t plane = static_cast<size_t>(mh) * mw;
  cam.weights.resize(channels);
  for (int k = 0; k < channels; ++k) {
    double acc = 0;
    for (size_t i = 0; i < plane; ++i) acc += map.grad()[k * plane + i];
    cam.weights[k] = static_cast<float>(acc / static_cast<double>(plane));
  }
  cam.map = gradcam_combine(map.values(), map.grad(), channels, mh, mw);
  cam.heat = upsample_bilinear(cam.map, mw, mh, cam.input_w, cam.input_h);

  cam.max_value = 0.0f;
  for (int y = 0; y < cam.input_h; ++y)
    for (int xpos = 0; xpos < cam.input_w; ++xpos) {
      const float v = cam.heat[static_cast<size_t>(y) * cam.input_w + xpos];
      if (v > cam.max_value) {
        cam.max_value = v;
        cam.max_x = xpos;
        cam.max_y = y;
      }
    }
  return cam;
}

RgbImage overlay_heatmap(const Image& gray, const std::vector<float>& heat, double alpha) {
  check_image(gray, "overlay_heatmap");
  if (heat.size() != gray.pixels.size())
    throw Error("overlay_heatmap: heatmap size does not match the image");
  if (alpha < 0.0 || alpha > 1.0) throw Error("overlay_heatmap: alpha must be in [0,1]");

  RgbImage out;
  out.width = gray.width;
  out.height = gray.height;
  out.pixels.resize(static_cast<size_t>(gray.width) * gray.height * 3);
  for (size_t i = 0; i < heat.size(); ++i) {
    const double g = gray.pixels[i];
    const double t = std::clamp(static_cast<double>(heat[i]), 0.0, 1.0);
    double r, gg, b;
    if (t <= 0.0) {
      r = gg = b = g;  // untouched grayscale where there is no activation
    } else {
      r = (1 - alpha) * g + alpha * (255.0 * t);
      gg = (1 - alpha) * g;
      b = (1 - alpha) * g + alpha * (255.0 * (1.0 - t));
    }
    out.pixels[i * 3 + 0] = static_cast<uint8_t>(std::clamp(std::floor(r + 0.5), 0.0, 255.0));
    out.pixels[i * 3 + 1] = static_cast<uint8_t>(std::clamp(std::floor(gg + 0.5), 0.0, 255.0));
    out.pixels[i * 3 + 2] = static_cast<uint8_t>(std::clamp(std::floor(b + 0.5), 0.0, 255.0));
  }
  return out;
}

std::vector<ExplainRecord> write_explanations(FusionModel& model,
                                              const std::vector<ImageSample>& samples,
                                              const NormalizationStats& stats,
                                              const std::vector<std::string>& class_names,
                                              const std::string& out_dir, double alpha) {
  if (static_cast<int>(class_names.size()) != model.config.num_classes)
    throw DataError("explain: " + std::to_string(class_names.size()) +
                    " class names for a " + std::to_string(model.config.num_classes) +
                    "-class model");
  std::filesystem::create_directories(out_dir);

  std::vector<ExplainRecord> records;
  for (const auto& s : samples) {
    FloatImage f = normalize(s.image, stats);
    Tensor x = Tensor::zeros({1, 1, f.height, f.width});
    std::copy(f.data.begin(), f.data.end(), x.values().begin());

    auto out = model.forward(nullptr, x, false);
    const float* logits = out.logits.values().data();
    int predicted = 0;
    for (int c = 1; c < model.config.num_classes; ++c)
      if (logits[c] > logits[predicted]) predicted = c;

    for (Stream stream : {Stream::mobile, Stream::dense}) {
      GradCam cam = compute_gradcam(model, x, stream, predicted);
      RgbImage overlay = overlay_heatmap(s.image, cam.heat, alpha);
      ExplainRecord rec;
      rec.sample_id = s.id;
      rec.stream = stream_name(stream);
      rec.predicted_class = predicted;
      rec.class_name = class_names[predicted];
      rec.file = s.id + "_" + rec.stream + "_" + rec.class_name + ".png";
      rec.max_x = cam.max_x;
      rec.max_y = cam.max_y;
      rec.max_value = cam.max_value;
      save_png_rgb(overlay, (std::filesystem::path(out_dir) / rec.file).string());
      records.push_back(std::move(rec));
    }
  }
  return records;
}

}  // namespace dualstream
