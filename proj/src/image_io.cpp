#include "dualstream/image_io.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace dualstream {

Image load_image(const std::string& path) {
  cv::Mat m = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw DataError("load_image: cannot read '" + path + "'");
  Image img = make_image(m.cols, m.rows);
  for (int y = 0; y < m.rows; ++y) {
    const uint8_t* row = m.ptr<uint8_t>(y);
    std::copy_n(row, m.cols, img.pixels.data() + static_cast<size_t>(y) * m.cols);
  }
  return img;
}

void save_png(const Image& img, const std::string& path) {
  check_image(img, "save_png");
  cv::Mat m(img.height, img.width, CV_8UC1);
  for (int y = 0; y < img.height; ++y)
    std::copy_n(img.pixels.data() + static_cast<size_t>(y) * img.width, img.width,
                m.ptr<uint8_t>(y));
  if (!cv::imwrite(path, m)) throw DataError("save_png: cannot write '" + path + "'");
}

void save_png_rgb(const RgbImage& img, const std::string& path) {
  if (img.width <= 0 || img.height <= 0 ||
      img.pixels.size() != static_cast<size_t>(img.width) * img.height * 3)
    throw Error("save_png_rgb: bad image buffer");
  cv::Mat m(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    uint8_t* row = m.ptr<uint8_t>(y);
    const uint8_t* src = img.pixels.data() + static_cast<size_t>(y) * img.width * 3;
    for (int x = 0; x < img.width; ++x) {
      row[3 * x + 0] = src[3 * x + 2];  // BGR on the codec side
      row[3 * x + 1] = src[3 * x + 1];
      row[3 * x + 2] = src[3 * x + 0];
    }
  }
  if (!cv::imwrite(path, m)) throw DataError("save_png_rgb: cannot write '" + path + "'");
}

}  // namespace dualstream
