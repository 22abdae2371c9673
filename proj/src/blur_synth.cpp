#include "darkdeblur/blur_synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

#include "darkdeblur/errors.hpp"

namespace darkdeblur {

double MotionTrajectory::span() const {
  if (positions.empty()) return 0.0;
  auto [min_x, max_x] = std::minmax_element(
      positions.begin(), positions.end(), [](auto a, auto b) { return a.x < b.x; });
  auto [min_y, max_y] = std::minmax_element(
      positions.begin(), positions.end(), [](auto a, auto b) { return a.y < b.y; });
  return std::max(max_x->x - min_x->x, max_y->y - min_y->y);
}

BlurKernel::BlurKernel(int size, std::vector<float> weights)
    : size_(size), weights_(std::move(weights)) {
  if (size_ % 2 == 0 || size_ < kMinSize || size_ > kMaxSize) {
    throw ConfigError("blur kernel size must be odd and in [3, 65], got " +
                      std::to_string(size_));
  }
  if (weights_.size() != static_cast<std::size_t>(size_) * size_) {
    throw ConfigError("blur kernel weight count does not match size");
  }
  if (std::any_of(weights_.begin(), weights_.end(), [](float w) { return !(w >= 0.0f); })) {
    throw ConfigError("blur kernel weights must be non-negative");
  }
  if (std::abs(sum() - 1.0) > 1e-6) throw ConfigError("blur kernel must sum to 1");
}

BlurKernel BlurKernel::delta(int size) {
  std::vector<float> w(static_cast<std::size_t>(size) * size, 0.0f);
  w[(size / 2) * size + size / 2] = 1.0f;
  return BlurKernel(size, std::move(w));
}

double BlurKernel::sum() const {
  return std::accumulate(weights_.begin(), weights_.end(), 0.0);
}

Image BlurKernel::to_image() const {
  Image out(1, size_, size_);
  const float peak = *std::max_element(weights_.begin(), weights_.end());
  for (int r = 0; r < size_; ++r)
    for (int c = 0; c < size_; ++c) out.at(0, r, c) = at(r, c) / peak;
  return out;
}

void SynthConfig::validate() const {
  if (canvas_size % 2 == 0 || canvas_size < BlurKernel::kMinSize ||
      canvas_size > BlurKernel::kMaxSize) {
    throw ConfigError("canvas_size must be odd and in [3, 65]");
  }
  if (traj_samples < 2) throw ConfigError("traj_samples must be >= 2");
  if (!(impulse_prob >= 0.0 && impulse_prob <= 1.0)) {
    throw ConfigError("impulse_prob must lie in [0, 1]");
  }
  if (!(inertia >= 0.0 && inertia <= 1.0)) throw ConfigError("inertia must lie in [0, 1]");
  if (!(max_anxiety >= 0.0)) throw ConfigError("max_anxiety must be >= 0");
  if (!(noise_sigma_range[0] >= 0.0 && noise_sigma_range[0] <= noise_sigma_range[1])) {
    throw ConfigError("noise_sigma_range must satisfy 0 <= min <= max");
  }
}

SynthConfig SynthConfig::degenerate() {
  SynthConfig cfg;
  cfg.impulse_prob = 0.0;
  cfg.max_anxiety = 0.0;
  cfg.noise_sigma_range = {0.0, 0.0};
  return cfg;
}

MotionTrajectory sample_trajectory(const SynthConfig& cfg, Rng& rng) {
  cfg.validate();
  MotionTrajectory traj;
  traj.positions.reserve(cfg.traj_samples);

  Point2 pos;
  Point2 vel;
  traj.positions.push_back(pos);
  for (int i = 1; i < cfg.traj_samples; ++i) {
    vel.x = cfg.inertia * vel.x + cfg.max_anxiety * rng.normal();
    vel.y = cfg.inertia * vel.y + cfg.max_anxiety * rng.normal();
    if (cfg.impulse_prob > 0.0 && rng.bernoulli(cfg.impulse_prob)) {
      const double turn = std::numbers::pi * rng.uniform(0.5, 1.5);
      const double c = std::cos(turn);
      const double s = std::sin(turn);
      vel = {2.0 * (c * vel.x - s * vel.y), 2.0 * (s * vel.x + c * vel.y)};
    }
    pos.x += vel.x;
    pos.y += vel.y;
    traj.positions.push_back(pos);
  }

  double min_x = pos.x, max_x = pos.x, min_y = pos.y, max_y = pos.y;
  for (const auto& p : traj.positions) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double cx = 0.5 * (min_x + max_x);
  const double cy = 0.5 * (min_y + max_y);
  const double span = std::max(max_x - min_x, max_y - min_y);
  const double limit = cfg.canvas_size - 1;
  // Shrink slightly below the limit so rounding never pushes a sample off
  // the canvas.
  const double scale = span > limit ? (limit / span) * (1.0 - 1e-9) : 1.0;
  for (auto& p : traj.positions) {
    p.x = (p.x - cx) * scale;
    p.y = (p.y - cy) * scale;
  }
  return traj;
}

BlurKernel rasterize_kernel(const MotionTrajectory& traj, int size) {
  if (traj.positions.empty()) throw std::logic_error("empty trajectory");
  const double center = (size - 1) / 2.0;
  std::vector<double> acc(static_cast<std::size_t>(size) * size, 0.0);
  const auto splat = [&](int r, int c, double w) {
    if (w == 0.0) return;
    acc[static_cast<std::size_t>(r) * size + c] += w;
  };
  for (const auto& p : traj.positions) {
    const double px = p.x + center;
    const double py = p.y + center;
    if (!(px >= 0.0 && py >= 0.0 && px <= size - 1 && py <= size - 1)) {
      throw std::logic_error("trajectory sample outside the kernel canvas");
    }
    const int x0 = static_cast<int>(std::floor(px));
    const int y0 = static_cast<int>(std::floor(py));
    const double fx = px - x0;
    const double fy = py - y0;
    splat(y0, x0, (1 - fx) * (1 - fy));
    if (fx > 0) splat(y0, x0 + 1, fx * (1 - fy));
    if (fy > 0) splat(y0 + 1, x0, (1 - fx) * fy);
    if (fx > 0 && fy > 0) splat(y0 + 1, x0 + 1, fx * fy);
  }
  const double total = std::accumulate(acc.begin(), acc.end(), 0.0);
  std::vector<float> weights(acc.size());
  std::transform(acc.begin(), acc.end(), weights.begin(),
                 [&](double w) { return static_cast<float>(w / total); });
  return BlurKernel(size, std::move(weights));
}

namespace {

int reflect101(int i, int n) {
  if (i < 0) return -i;
  if (i >= n) return 2 * (n - 1) - i;
  return i;
}

}  // namespace

Image apply_blur(const Image& sharp, const BlurKernel& kernel) {
  if (kernel.size() > sharp.height() || kernel.size() > sharp.width()) {
    throw InputError("blur kernel (" + std::to_string(kernel.size()) +
                     ") larger than image " + shape_string(sharp));
  }
  struct Tap {
    int dy, dx;
    double w;
  };
  std::vector<Tap> taps;
  const int r = kernel.radius();
  for (int i = 0; i < kernel.size(); ++i)
    for (int j = 0; j < kernel.size(); ++j)
      if (kernel.at(i, j) != 0.0f) taps.push_back({i - r, j - r, kernel.at(i, j)});

  const int h = sharp.height();
  const int w = sharp.width();
  Image out(sharp.channels(), h, w);
  std::vector<double> acc(static_cast<std::size_t>(h) * w);
  for (int c = 0; c < sharp.channels(); ++c) {
    const auto src = sharp.plane(c);
    std::fill(acc.begin(), acc.end(), 0.0);
    // out(y, x) = sum_k K(k) * in((y, x) - k), k relative to the kernel centre.
    for (const Tap& t : taps) {
      for (int y = 0; y < h; ++y) {
        const int sy = reflect101(y - t.dy, h);
        const float* row = src.data() + static_cast<std::size_t>(sy) * w;
        double* dst = acc.data() + static_cast<std::size_t>(y) * w;
        for (int x = 0; x < w; ++x) dst[x] += t.w * row[reflect101(x - t.dx, w)];
      }
    }
    auto plane = out.plane(c);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      plane[i] = std::clamp(static_cast<float>(acc[i]), 0.0f, 1.0f);
    }
  }
  return out;
}

Image add_noise(const Image& img, double sigma, Rng& rng) {
  if (sigma < 0.0) throw InputError("noise sigma must be >= 0");
  if (sigma == 0.0) return img;
  Image out = img;
  for (float& v : out.data()) {
    v = std::clamp(static_cast<float>(v + sigma * rng.normal()), 0.0f, 1.0f);
  }
  return out;
}

SynthesizedPair synthesize_pair(const Image& sharp, const SynthConfig& cfg, Rng& rng) {
  const MotionTrajectory traj = sample_trajectory(cfg, rng);
  BlurKernel kernel = rasterize_kernel(traj, cfg.canvas_size);
  const double sigma = rng.uniform(cfg.noise_sigma_range[0], cfg.noise_sigma_range[1]);
  Image blurry = add_noise(apply_blur(sharp, kernel), sigma, rng);
  return {std::move(blurry), sharp, std::move(kernel), sigma};
}

}  // namespace darkdeblur
