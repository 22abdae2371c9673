#pragma once

#include <opencv2/imgproc.hpp>

#include "darkdeblur/data.hpp"
#include "darkdeblur/rng.hpp"

namespace testsupport {

/// Forward-warps `img` by `h` (output(h p) = img(p)), same frame size.
inline darkdeblur::Image warp(const darkdeblur::Image& img, const cv::Mat& h) {
  std::vector<cv::Mat> planes;
  for (int c = 0; c < img.channels(); ++c) {
    cv::Mat p(img.height(), img.width(), CV_32FC1);
    std::copy(img.plane(c).begin(), img.plane(c).end(), p.ptr<float>());
    cv::Mat out;
    cv::warpPerspective(p, out, h, p.size(), cv::INTER_LINEAR, cv::BORDER_REFLECT_101);
    planes.push_back(out);
  }
  darkdeblur::Image out(img.channels(), img.height(), img.width());
  for (int c = 0; c < img.channels(); ++c) {
    std::copy(planes[c].ptr<float>(), planes[c].ptr<float>() + out.plane(c).size(),
              out.plane(c).begin());
  }
  return out;
}

/// Rotation <= 15 deg and scale within 10% about the centre, translation
/// within 5% of the width.
inline cv::Mat random_homography(int h, int w, darkdeblur::Rng& rng) {
  const double angle = rng.uniform(-15.0, 15.0);
  const double scale = rng.uniform(0.9, 1.1);
  cv::Mat a = cv::getRotationMatrix2D(cv::Point2f(w / 2.0f, h / 2.0f), angle, scale);
  a.at<double>(0, 2) += rng.uniform(-0.05, 0.05) * w;
  a.at<double>(1, 2) += rng.uniform(-0.05, 0.05) * w;
  cv::Mat hm = cv::Mat::eye(3, 3, CV_64F);
  a.copyTo(hm(cv::Rect(0, 0, 3, 2)));
  hm.at<double>(2, 0) = rng.uniform(-2e-5, 2e-5);
  hm.at<double>(2, 1) = rng.uniform(-2e-5, 2e-5);
  return hm;
}

/// Mean distance between where `estimated` and `truth` send a grid of
/// points covering the frame.
inline double grid_reprojection_error(const darkdeblur::Homography& estimated, const cv::Mat& truth,
                                      int h, int w) {
  double total = 0.0;
  int n = 0;
  for (int y = 0; y <= h; y += h / 8)
    for (int x = 0; x <= w; x += w / 8) {
      const auto p = darkdeblur::apply_homography(estimated, {double(x), double(y)});
      const double z = truth.at<double>(2, 0) * x + truth.at<double>(2, 1) * y + truth.at<double>(2, 2);
      const double tx = (truth.at<double>(0, 0) * x + truth.at<double>(0, 1) * y + truth.at<double>(0, 2)) / z;
      const double ty = (truth.at<double>(1, 0) * x + truth.at<double>(1, 1) * y + truth.at<double>(1, 2)) / z;
      total += std::hypot(p.x - tx, p.y - ty);
      ++n;
    }
  return total / n;
}

}  // namespace testsupport
