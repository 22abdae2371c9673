#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "darkdeblur/blur_synth.hpp"
#include "darkdeblur/image.hpp"

namespace darkdeblur {

// ---------------------------------------------------------------------------
// Patches
// ---------------------------------------------------------------------------

struct PatchSpec {
  int size = 128;
  int stride = 128;

  void validate() const;
};

struct PatchOrigin {
  int y = 0;
  int x = 0;
};

/// Row-major top-left corners of every full patch; trailing partial patches
/// are dropped.
std::vector<PatchOrigin> patch_grid(int height, int width, const PatchSpec& spec);

/// Empty when the image is smaller than one patch.
std::vector<Image> extract_patches(const Image& img, const PatchSpec& spec);

// ---------------------------------------------------------------------------
// Real-pair alignment
// ---------------------------------------------------------------------------

using Homography = std::array<std::array<double, 3>, 3>;

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  long long area() const { return static_cast<long long>(width) * height; }
};

struct AlignmentOptions {
  double ratio_test = 0.75;
  double ransac_threshold = 3.0;
  int min_inliers = 4;
  /// Mean inlier reprojection error (px) above which a result is flagged.
  double low_confidence_error = 1.0;
};

struct AlignmentResult {
  /// Maps blurry-frame pixel coordinates to sharp-frame coordinates
  /// (aligned_sharp(p) = sharp(H p)); H[2][2] == 1.
  Homography homography{};
  int match_count = 0;
  int inlier_count = 0;
  double mean_reprojection_error = 0.0;
  /// Common crop, in blurry-frame coordinates (the aligned sharp image shares
  /// this frame).
  Rect crop;
  /// The crop's corners mapped into the original sharp image.
  std::array<Point2, 4> sharp_footprint{};
  bool low_confidence = false;
};

struct AlignedPair {
  Image blurry;
  Image sharp;
  AlignmentResult result;
};

/// SIFT keypoints + ratio-test matching + RANSAC homography. The sharp image
/// is warped into the blurry frame (the blurry input is never resampled) and
/// both are cropped to the largest axis-aligned rectangle where the warped
/// sharp image is fully defined. Throws AlignmentError with fewer than
/// `min_inliers` confident matches.
AlignedPair align_pair(const Image& blurry, const Image& sharp,
                       const AlignmentOptions& options = {});

/// Applies H to a point (with perspective divide).
Point2 apply_homography(const Homography& h, Point2 p);

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
  std::filesystem::path blurry;
  std::filesystem::path sharp;

  /// Identifier used in reports: the blurry file name.
  std::string id() const { return blurry.filename().string(); }
};

/// One `blurry<TAB>sharp` record per line. Lines starting with '#' are
/// comments; `# split: <tag>` and `# source: <name>` set metadata. Relative
/// paths resolve against the manifest's directory.
class DatasetManifest {
 public:
  std::vector<ManifestEntry> entries;
  std::string split = "test";
  std::string source;

  /// Throws ConfigError on malformed records or missing files.
  static DatasetManifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

// ---------------------------------------------------------------------------
// Training stream
// ---------------------------------------------------------------------------

struct Batch {
  std::vector<Image> blurry;
  std::vector<Image> sharp;

  std::size_t size() const { return sharp.size(); }
};

struct StreamPosition {
  std::uint64_t epoch = 0;
  std::uint64_t batch = 0;

  friend bool operator==(const StreamPosition&, const StreamPosition&) = default;
};

/// Shuffled, seeded patch batches. The contents and order of epoch e are a
/// pure function of (seed, e): the patch order is a Fisher-Yates shuffle
/// seeded from (seed, e), and sharp-only sources are re-blurred each epoch
/// with one kernel per source image seeded from (seed, e, image index).
/// The final partial batch of an epoch is kept.
class TrainingStream {
 public:
  /// Every image in `dir` is a sharp source, blurred on the fly.
  static TrainingStream from_sharp_dir(const std::filesystem::path& dir, PatchSpec spec,
                                       SynthConfig synth, int batch_size, std::uint64_t seed);
  /// Real pairs; both sides are patched on the same grid.
  static TrainingStream from_manifest(const DatasetManifest& manifest, PatchSpec spec,
                                      int batch_size, std::uint64_t seed);
  /// `sharp_dir` if it is a directory, otherwise a manifest file.
  static TrainingStream open(const std::filesystem::path& source, PatchSpec spec,
                             SynthConfig synth, int batch_size, std::uint64_t seed);

  static TrainingStream from_sharp_images(std::vector<Image> sharp, PatchSpec spec,
                                          SynthConfig synth, int batch_size,
                                          std::uint64_t seed);
  static TrainingStream from_pairs(std::vector<std::pair<Image, Image>> blurry_sharp,
                                   PatchSpec spec, int batch_size, std::uint64_t seed);

  /// Next batch, rolling over into the next epoch when one is exhausted.
  Batch next();

  /// All batches of one epoch (does not move the cursor).
  std::vector<Batch> epoch_batches(std::uint64_t epoch) const;

  StreamPosition position() const { return position_; }
  void seek(StreamPosition pos);

  std::size_t patches_per_epoch() const { return patch_count_; }
  std::size_t batches_per_epoch() const;
  int batch_size() const { return batch_size_; }
  std::uint64_t seed() const { return seed_; }

 private:
  struct Source {
    Image sharp;
    Image blurry;  // empty for sharp-only sources
  };
  struct PatchRef {
    std::size_t source;
    PatchOrigin origin;
  };
  struct EpochData {
    std::uint64_t epoch = 0;
    std::vector<Image> blurred;  // per source, only when synthesizing
    std::vector<PatchRef> order;
  };

  TrainingStream(std::vector<Source> sources, PatchSpec spec, SynthConfig synth,
                 bool synthesize, int batch_size, std::uint64_t seed);

  EpochData build_epoch(std::uint64_t epoch) const;
  Batch assemble(const EpochData& data, std::uint64_t batch) const;

  std::vector<Source> sources_;
  PatchSpec spec_;
  SynthConfig synth_;
  bool synthesize_;
  int batch_size_;
  std::uint64_t seed_;
  std::size_t patch_count_ = 0;
  StreamPosition position_;
  EpochData current_;
  bool have_current_ = false;
};

}  // namespace darkdeblur
