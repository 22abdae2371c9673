#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <string>

#include <unistd.h>

#include <opencv2/imgproc.hpp>

#include "darkdeblur/image.hpp"
#include "darkdeblur/rng.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline darkdeblur::Image random_image(int c, int h, int w, std::uint64_t seed, float lo = 0.0f,
                                      float hi = 1.0f) {
  darkdeblur::Rng rng(seed);
  darkdeblur::Image img(c, h, w);
  for (float& v : img.data()) v = static_cast<float>(rng.uniform(lo, hi));
  return img;
}

/// Flat background with random filled rectangles, circles and lines: strong
/// edges, like a cluttered indoor scene.
inline darkdeblur::Image scene_image(int h, int w, std::uint64_t seed) {
  darkdeblur::Rng rng(seed);
  const auto pick = [&](int n) { return static_cast<int>(rng.uniform_index(n)); };
  const auto colour = [&] { return cv::Scalar(pick(256), pick(256), pick(256)); };
  cv::Mat mat(h, w, CV_8UC3, cv::Scalar(pick(80), pick(80), pick(80)));
  for (int k = 0; k < 12; ++k) {
    const cv::Point a(pick(w), pick(h));
    const cv::Point b(pick(w), pick(h));
    switch (pick(3)) {
      case 0: cv::rectangle(mat, a, b, colour(), cv::FILLED); break;
      case 1: cv::circle(mat, a, 4 + pick(std::max(1, std::min(h, w) / 4)), colour(), cv::FILLED); break;
      default: cv::line(mat, a, b, colour(), 1 + pick(3)); break;
    }
  }
  darkdeblur::Image img(3, h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = mat.at<cv::Vec3b>(y, x)[c] / 255.0f;
  return img;
}

/// Scene shapes over smooth multi-scale noise: plenty of corners and blobs
/// for keypoint detectors.
inline darkdeblur::Image textured_image(int h, int w, std::uint64_t seed) {
  darkdeblur::Image img = scene_image(h, w, seed);
  darkdeblur::Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  for (int cell : {24, 9}) {
    cv::Mat coarse(h / cell + 2, w / cell + 2, CV_32FC1);
    for (int y = 0; y < coarse.rows; ++y)
      for (int x = 0; x < coarse.cols; ++x) coarse.at<float>(y, x) = static_cast<float>(rng.uniform(-0.2, 0.2));
    cv::Mat fine;
    cv::resize(coarse, fine, cv::Size(w, h), 0, 0, cv::INTER_CUBIC);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          float& v = img.at(c, y, x);
          v = std::clamp(v + fine.at<float>(y, x) * (c + 1) / 3.0f, 0.0f, 1.0f);
        }
  }
  return img;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "t") {
    static std::atomic<int> counter{0};
    path_ = fs::temp_directory_path() /
            ("darkdeblur_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

}  // namespace testsupport
