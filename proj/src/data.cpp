#include "darkdeblur/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stack>

#include <opencv2/calib3d.hpp>
#include <opencv2/features2d.hpp>
#include <opencv2/imgproc.hpp>

#include "darkdeblur/errors.hpp"
#include "darkdeblur/log.hpp"

namespace darkdeblur {

// ---------------------------------------------------------------------------
// Patches
// ---------------------------------------------------------------------------

void PatchSpec::validate() const {
  if (size <= 0) throw ConfigError("patch size must be > 0");
  if (stride < 1) throw ConfigError("patch stride must be >= 1");
}

std::vector<PatchOrigin> patch_grid(int height, int width, const PatchSpec& spec) {
  spec.validate();
  std::vector<PatchOrigin> out;
  for (int y = 0; y + spec.size <= height; y += spec.stride)
    for (int x = 0; x + spec.size <= width; x += spec.stride) out.push_back({y, x});
  return out;
}

std::vector<Image> extract_patches(const Image& img, const PatchSpec& spec) {
  std::vector<Image> out;
  for (const auto& o : patch_grid(img.height(), img.width(), spec)) {
    out.push_back(img.crop(o.y, o.x, spec.size, spec.size));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Alignment
// ---------------------------------------------------------------------------

namespace {

cv::Mat to_gray8(const Image& img) {
  cv::Mat out(img.height(), img.width(), CV_8UC1);
  for (int y = 0; y < img.height(); ++y) {
    auto* row = out.ptr<unsigned char>(y);
    for (int x = 0; x < img.width(); ++x) {
      float v = img.channels() == 3
                    ? 0.299f * img.at(0, y, x) + 0.587f * img.at(1, y, x) + 0.114f * img.at(2, y, x)
                    : img.at(0, y, x);
      row[x] = static_cast<unsigned char>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
    }
  }
  return out;
}

cv::Mat to_mat(const Image& img) {
  std::vector<cv::Mat> planes;
  for (int c = 0; c < img.channels(); ++c) {
    planes.emplace_back(img.height(), img.width(), CV_32FC1,
                        const_cast<float*>(img.plane(c).data()));
  }
  cv::Mat out;
  cv::merge(planes, out);
  return out;
}

Image from_mat(const cv::Mat& mat) {
  std::vector<cv::Mat> planes;
  cv::split(mat, planes);
  Image out(static_cast<int>(planes.size()), mat.rows, mat.cols);
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < mat.rows; ++y) {
      const float* row = planes[c].ptr<float>(y);
      std::copy(row, row + mat.cols, &out.at(c, y, 0));
    }
  }
  return out;
}

// Largest axis-aligned all-true rectangle in a binary mask (histogram/stack).
Rect largest_rectangle(const cv::Mat& mask) {
  Rect best;
  std::vector<int> heights(mask.cols, 0);
  for (int y = 0; y < mask.rows; ++y) {
    const auto* row = mask.ptr<unsigned char>(y);
    for (int x = 0; x < mask.cols; ++x) heights[x] = row[x] ? heights[x] + 1 : 0;
    std::vector<int> stack;
    for (int x = 0; x <= mask.cols; ++x) {
      const int h = x < mask.cols ? heights[x] : 0;
      while (!stack.empty() && heights[stack.back()] >= h) {
        const int top = heights[stack.back()];
        stack.pop_back();
        const int left = stack.empty() ? 0 : stack.back() + 1;
        const Rect candidate{left, y - top + 1, x - left, top};
        if (candidate.area() > best.area()) best = candidate;
      }
      stack.push_back(x);
    }
  }
  return best;
}

}  // namespace

Point2 apply_homography(const Homography& h, Point2 p) {
  const double w = h[2][0] * p.x + h[2][1] * p.y + h[2][2];
  return {(h[0][0] * p.x + h[0][1] * p.y + h[0][2]) / w,
          (h[1][0] * p.x + h[1][1] * p.y + h[1][2]) / w};
}

AlignedPair align_pair(const Image& blurry, const Image& sharp, const AlignmentOptions& options) {
  if (blurry.channels() != sharp.channels()) {
    throw InputError("align_pair: channel count mismatch");
  }
  auto sift = cv::SIFT::create();
  std::vector<cv::KeyPoint> kp_blurry, kp_sharp;
  cv::Mat desc_blurry, desc_sharp;
  sift->detectAndCompute(to_gray8(blurry), cv::noArray(), kp_blurry, desc_blurry);
  sift->detectAndCompute(to_gray8(sharp), cv::noArray(), kp_sharp, desc_sharp);
  if (kp_blurry.size() < 2 || kp_sharp.size() < 2) {
    throw AlignmentError("align_pair: too few keypoints detected");
  }

  cv::BFMatcher matcher(cv::NORM_L2);
  std::vector<std::vector<cv::DMatch>> knn;
  matcher.knnMatch(desc_blurry, desc_sharp, knn, 2);
  std::vector<cv::Point2f> pts_blurry, pts_sharp;
  for (const auto& m : knn) {
    if (m.size() == 2 && m[0].distance < options.ratio_test * m[1].distance) {
      pts_blurry.push_back(kp_blurry[m[0].queryIdx].pt);
      pts_sharp.push_back(kp_sharp[m[0].trainIdx].pt);
    }
  }
  if (static_cast<int>(pts_blurry.size()) < std::max(4, options.min_inliers)) {
    throw AlignmentError("align_pair: only " + std::to_string(pts_blurry.size()) +
                         " confident matches");
  }

  std::vector<unsigned char> inlier_mask;
  cv::Mat h = cv::findHomography(pts_blurry, pts_sharp, cv::RANSAC, options.ransac_threshold,
                                 inlier_mask, 2000, 0.995);
  if (h.empty()) throw AlignmentError("align_pair: homography estimation failed");
  h /= h.at<double>(2, 2);

  AlignmentResult result;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) result.homography[r][c] = h.at<double>(r, c);
  result.match_count = static_cast<int>(pts_blurry.size());
  double err_sum = 0.0;
  for (std::size_t i = 0; i < pts_blurry.size(); ++i) {
    if (!inlier_mask[i]) continue;
    const Point2 mapped = apply_homography(result.homography, {pts_blurry[i].x, pts_blurry[i].y});
    err_sum += std::hypot(mapped.x - pts_sharp[i].x, mapped.y - pts_sharp[i].y);
    ++result.inlier_count;
  }
  if (result.inlier_count < std::max(4, options.min_inliers)) {
    throw AlignmentError("align_pair: only " + std::to_string(result.inlier_count) +
                         " RANSAC inliers");
  }
  result.mean_reprojection_error = err_sum / result.inlier_count;
  result.low_confidence = result.mean_reprojection_error > options.low_confidence_error;

  const cv::Size frame(blurry.width(), blurry.height());
  cv::Mat warped;
  cv::warpPerspective(to_mat(sharp), warped, h, frame, cv::INTER_LINEAR | cv::WARP_INVERSE_MAP,
                      cv::BORDER_CONSTANT, cv::Scalar::all(0));
  cv::Mat coverage;
  cv::warpPerspective(cv::Mat::ones(sharp.height(), sharp.width(), CV_32FC1), coverage, h, frame,
                      cv::INTER_LINEAR | cv::WARP_INVERSE_MAP, cv::BORDER_CONSTANT, 0);
  cv::Mat valid = coverage >= 1.0f - 1e-5f;

  result.crop = largest_rectangle(valid);
  if (result.crop.area() == 0) throw AlignmentError("align_pair: images do not overlap");
  const Rect& c = result.crop;
  const Point2 corners[4] = {{double(c.x), double(c.y)},
                             {double(c.x + c.width - 1), double(c.y)},
                             {double(c.x + c.width - 1), double(c.y + c.height - 1)},
                             {double(c.x), double(c.y + c.height - 1)}};
  for (int i = 0; i < 4; ++i) result.sharp_footprint[i] = apply_homography(result.homography, corners[i]);

  Image aligned_sharp = from_mat(warped).clamped();
  return {blurry.crop(c.y, c.x, c.height, c.width), aligned_sharp.crop(c.y, c.x, c.height, c.width),
          result};
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

namespace {

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

}  // namespace

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open manifest " + path.string());
  DatasetManifest manifest;
  const auto base = path.parent_path();
  manifest.source = std::filesystem::absolute(path).parent_path().filename().string();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line[0] == '#') {
      const std::string body = trim(line.substr(1));
      const auto colon = body.find(':');
      if (colon != std::string::npos) {
        const std::string key = trim(body.substr(0, colon));
        const std::string value = trim(body.substr(colon + 1));
        if (key == "split") manifest.split = value;
        if (key == "source") manifest.source = value;
      }
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos || line.find('\t', tab + 1) != std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(line_no) +
                        ": expected 'blurry<TAB>sharp'");
    }
    ManifestEntry entry{line.substr(0, tab), line.substr(tab + 1)};
    for (auto* p : {&entry.blurry, &entry.sharp}) {
      if (p->is_relative()) *p = base / *p;
      if (!std::filesystem::exists(*p)) {
        throw ConfigError(path.string() + ":" + std::to_string(line_no) + ": missing file " +
                          p->string());
      }
    }
    manifest.entries.push_back(std::move(entry));
  }
  return manifest;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest " + path.string());
  const auto base = std::filesystem::absolute(path).parent_path();
  const auto rel = [&](const std::filesystem::path& p) {
    const auto r = std::filesystem::absolute(p).lexically_relative(base);
    return (r.empty() || *r.begin() == "..") ? p.string() : r.string();
  };
  out << "# split: " << split << "\n# source: " << source << "\n";
  for (const auto& e : entries) out << rel(e.blurry) << '\t' << rel(e.sharp) << '\n';
}

// ---------------------------------------------------------------------------
// Training stream
// ---------------------------------------------------------------------------

TrainingStream::TrainingStream(std::vector<Source> sources, PatchSpec spec, SynthConfig synth,
                               bool synthesize, int batch_size, std::uint64_t seed)
    : sources_(std::move(sources)),
      spec_(spec),
      synth_(synth),
      synthesize_(synthesize),
      batch_size_(batch_size),
      seed_(seed) {
  spec_.validate();
  if (synthesize_) synth_.validate();
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
  for (const auto& s : sources_) {
    patch_count_ += patch_grid(s.sharp.height(), s.sharp.width(), spec_).size();
  }
  if (patch_count_ == 0) {
    throw ConfigError("training data is empty: no source yields a " + std::to_string(spec_.size) +
                      "px patch");
  }
}

TrainingStream TrainingStream::from_sharp_images(std::vector<Image> sharp, PatchSpec spec,
                                                 SynthConfig synth, int batch_size,
                                                 std::uint64_t seed) {
  std::vector<Source> sources;
  for (auto& img : sharp) sources.push_back({std::move(img), {}});
  return TrainingStream(std::move(sources), spec, synth, true, batch_size, seed);
}

TrainingStream TrainingStream::from_pairs(std::vector<std::pair<Image, Image>> blurry_sharp,
                                          PatchSpec spec, int batch_size, std::uint64_t seed) {
  std::vector<Source> sources;
  for (auto& [blurry, sharp] : blurry_sharp) {
    require_same_shape(blurry, sharp, "training pair");
    sources.push_back({std::move(sharp), std::move(blurry)});
  }
  return TrainingStream(std::move(sources), spec, {}, false, batch_size, seed);
}

TrainingStream TrainingStream::from_sharp_dir(const std::filesystem::path& dir, PatchSpec spec,
                                              SynthConfig synth, int batch_size,
                                              std::uint64_t seed) {
  std::vector<Image> images;
  for (const auto& path : list_images(dir)) {
    try {
      images.push_back(load_image(path));
    } catch (const InputError& e) {
      log_warning(std::string("skipping ") + e.what());
    }
  }
  if (images.empty()) throw ConfigError("no readable images in " + dir.string());
  return from_sharp_images(std::move(images), spec, synth, batch_size, seed);
}

TrainingStream TrainingStream::from_manifest(const DatasetManifest& manifest, PatchSpec spec,
                                             int batch_size, std::uint64_t seed) {
  std::vector<std::pair<Image, Image>> pairs;
  for (const auto& entry : manifest.entries) {
    try {
      Image blurry = load_image(entry.blurry);
      Image sharp = load_image(entry.sharp);
      if (!blurry.same_shape(sharp)) {
        log_warning("skipping " + entry.id() + ": blurry/sharp sizes differ");
        continue;
      }
      pairs.emplace_back(std::move(blurry), std::move(sharp));
    } catch (const InputError& e) {
      log_warning(std::string("skipping ") + e.what());
    }
  }
  if (pairs.empty()) throw ConfigError("manifest contains no readable pairs");
  return from_pairs(std::move(pairs), spec, batch_size, seed);
}

TrainingStream TrainingStream::open(const std::filesystem::path& source, PatchSpec spec,
                                    SynthConfig synth, int batch_size, std::uint64_t seed) {
  if (std::filesystem::is_directory(source)) {
    return from_sharp_dir(source, spec, synth, batch_size, seed);
  }
  if (!std::filesystem::exists(source)) {
    throw ConfigError("data source does not exist: " + source.string());
  }
  return from_manifest(DatasetManifest::load(source), spec, batch_size, seed);
}

std::size_t TrainingStream::batches_per_epoch() const {
  return (patch_count_ + batch_size_ - 1) / batch_size_;
}

TrainingStream::EpochData TrainingStream::build_epoch(std::uint64_t epoch) const {
  EpochData data;
  data.epoch = epoch;
  if (synthesize_) {
    const std::uint64_t synth_seed = Rng::derive_seed(seed_, 2 * epoch + 1);
    for (std::size_t i = 0; i < sources_.size(); ++i) {
      Rng rng(Rng::derive_seed(synth_seed, i));
      auto pair = synthesize_pair(sources_[i].sharp, synth_, rng);
      data.blurred.push_back(std::move(pair.blurry));
    }
  }
  for (std::size_t i = 0; i < sources_.size(); ++i) {
    for (const auto& o : patch_grid(sources_[i].sharp.height(), sources_[i].sharp.width(), spec_)) {
      data.order.push_back({i, o});
    }
  }
  Rng shuffle(Rng::derive_seed(seed_, 2 * epoch));
  for (std::size_t k = data.order.size(); k > 1; --k) {
    std::swap(data.order[k - 1], data.order[shuffle.uniform_index(k)]);
  }
  return data;
}

Batch TrainingStream::assemble(const EpochData& data, std::uint64_t batch) const {
  Batch out;
  const std::size_t begin = batch * batch_size_;
  const std::size_t end = std::min(data.order.size(), begin + batch_size_);
  for (std::size_t k = begin; k < end; ++k) {
    const auto& ref = data.order[k];
    const Image& blurry = synthesize_ ? data.blurred[ref.source] : sources_[ref.source].blurry;
    const Image& sharp = sources_[ref.source].sharp;
    out.blurry.push_back(blurry.crop(ref.origin.y, ref.origin.x, spec_.size, spec_.size));
    out.sharp.push_back(sharp.crop(ref.origin.y, ref.origin.x, spec_.size, spec_.size));
  }
  return out;
}

Batch TrainingStream::next() {
  if (!have_current_ || current_.epoch != position_.epoch) {
    current_ = build_epoch(position_.epoch);
    have_current_ = true;
  }
  Batch batch = assemble(current_, position_.batch);
  if (++position_.batch >= batches_per_epoch()) {
    ++position_.epoch;
    position_.batch = 0;
  }
  return batch;
}

std::vector<Batch> TrainingStream::epoch_batches(std::uint64_t epoch) const {
  const EpochData data = build_epoch(epoch);
  std::vector<Batch> out;
  for (std::uint64_t b = 0; b < batches_per_epoch(); ++b) out.push_back(assemble(data, b));
  return out;
}

void TrainingStream::seek(StreamPosition pos) {
  if (pos.batch >= batches_per_epoch()) throw ConfigError("stream position out of range");
  position_ = pos;
}

}  // namespace darkdeblur
