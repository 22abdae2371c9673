#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "darkdeblur/image.hpp"
#include "darkdeblur/rng.hpp"

namespace darkdeblur {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Camera-shake path in kernel coordinates: (0, 0) is the kernel's centre
/// pixel, units are pixels.
struct MotionTrajectory {
  std::vector<Point2> positions;

  /// Largest per-axis extent (max - min).
  double span() const;
};

/// Square, non-negative point-spread function with unit mass.
class BlurKernel {
 public:
  static constexpr int kMinSize = 3;
  static constexpr int kMaxSize = 65;

  /// Validates the invariants (odd size in [3, 65], weights >= 0, sum 1).
  BlurKernel(int size, std::vector<float> weights);

  /// Single unit tap at the centre.
  static BlurKernel delta(int size);

  int size() const { return size_; }
  int radius() const { return size_ / 2; }
  float at(int row, int col) const { return weights_[row * size_ + col]; }
  const std::vector<float>& weights() const { return weights_; }
  double sum() const;

  /// Kernel as a greyscale image, peak rescaled to 1, for inspection.
  Image to_image() const;

 private:
  int size_;
  std::vector<float> weights_;
};

struct SynthConfig {
  int canvas_size = 31;
  int traj_samples = 250;
  double impulse_prob = 0.005;
  double inertia = 0.7;
  /// Standard deviation of the per-step velocity perturbation, in pixels.
  double max_anxiety = 0.005 * 31;
  std::array<double, 2> noise_sigma_range{0.0, 0.02};
  std::uint64_t seed = 0;

  /// Throws ConfigError on violated invariants.
  void validate() const;

  /// Point trajectory and no noise: synthesis becomes the identity.
  static SynthConfig degenerate();
};

/// First-order Markov camera walk. Velocity starts at zero and evolves as
/// v <- inertia * v + N(0, max_anxiety^2) per axis; with probability
/// impulse_prob per step the velocity is turned by a random angle in
/// [90, 270] degrees and doubled (a jerk). The path is centred on its
/// bounding box and shrunk, if needed, to fit inside the canvas.
MotionTrajectory sample_trajectory(const SynthConfig& cfg, Rng& rng);

/// Bilinear splat of every trajectory sample onto a size x size grid, then
/// normalised to unit sum. Positions must lie within the canvas; violating
/// that is a caller bug (std::logic_error).
BlurKernel rasterize_kernel(const MotionTrajectory& traj, int size);

/// Per-channel 2D convolution with reflect-101 borders. Throws InputError if
/// the kernel is larger than the image.
Image apply_blur(const Image& sharp, const BlurKernel& kernel);

/// Additive N(0, sigma^2) per element, clamped to [0, 1]. sigma == 0 returns
/// the input without consuming randomness.
Image add_noise(const Image& img, double sigma, Rng& rng);

struct SynthesizedPair {
  Image blurry;
  Image sharp;
  BlurKernel kernel;
  double noise_sigma = 0.0;
};

/// trajectory -> kernel -> blur -> noise (sigma uniform in the configured range).
SynthesizedPair synthesize_pair(const Image& sharp, const SynthConfig& cfg, Rng& rng);

}  // namespace darkdeblur
