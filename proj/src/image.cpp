#include "darkdeblur/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "darkdeblur/errors.hpp"

namespace darkdeblur {

Image::Image(int channels, int height, int width, float fill)
    : channels_(channels), height_(height), width_(width) {
  if (channels <= 0 || height <= 0 || width <= 0) {
    throw InputError("image dimensions must be positive");
  }
  pixels_.assign(static_cast<std::size_t>(channels) * height * width, fill);
}

Image Image::crop(int y, int x, int h, int w) const {
  if (y < 0 || x < 0 || h <= 0 || w <= 0 || y + h > height_ || x + w > width_) {
    throw InputError("crop window outside image " + shape_string(*this));
  }
  Image out(channels_, h, w);
  for (int c = 0; c < channels_; ++c) {
    for (int r = 0; r < h; ++r) {
      const auto src = plane(c).subspan(static_cast<std::size_t>(y + r) * width_ + x, w);
      std::copy(src.begin(), src.end(), &out.at(c, r, 0));
    }
  }
  return out;
}

Image Image::clamped() const {
  Image out = *this;
  for (float& v : out.pixels_) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

std::string shape_string(const Image& img) {
  return std::to_string(img.channels()) + "x" + std::to_string(img.height()) + "x" +
         std::to_string(img.width());
}

void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw InputError(std::string(what) + ": shape mismatch " + shape_string(a) + " vs " +
                     shape_string(b));
  }
}

Image load_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw InputError("cannot decode image: " + path.string());
  Image out(3, bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = row[x][2 - c] / 255.0f;
    }
  }
  return out;
}

void save_image(const Image& img, const std::filesystem::path& path) {
  if (img.channels() != 1 && img.channels() != 3) {
    throw InputError("only 1- or 3-channel images can be saved");
  }
  const auto to_byte = [](float v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
  };
  cv::Mat mat(img.height(), img.width(), img.channels() == 3 ? CV_8UC3 : CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = mat.ptr<unsigned char>(y);
    for (int x = 0; x < img.width(); ++x) {
      if (img.channels() == 3) {
        for (int c = 0; c < 3; ++c) row[3 * x + (2 - c)] = to_byte(img.at(c, y, x));
      } else {
        row[x] = to_byte(img.at(0, y, x));
      }
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), mat)) {
    throw InputError("cannot write image: " + path.string());
  }
}

std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  if (!std::filesystem::is_directory(dir)) return out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png" || ext == ".jpg" || ext == ".jpeg") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace darkdeblur
