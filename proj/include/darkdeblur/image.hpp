#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace darkdeblur {

/// Floating-point image, channels x height x width (planar), values nominally
/// in [0, 1]. Colour images are RGB in that channel order.
class Image {
 public:
  Image() = default;
  Image(int channels, int height, int width, float fill = 0.0f);

  int channels() const { return channels_; }
  int height() const { return height_; }
  int width() const { return width_; }
  std::size_t size() const { return pixels_.size(); }
  bool empty() const { return pixels_.empty(); }

  float& at(int c, int y, int x) { return pixels_[index(c, y, x)]; }
  float at(int c, int y, int x) const { return pixels_[index(c, y, x)]; }

  std::span<float> data() { return pixels_; }
  std::span<const float> data() const { return pixels_; }

  std::span<float> plane(int c) {
    return std::span<float>(pixels_).subspan(plane_offset(c), plane_size());
  }
  std::span<const float> plane(int c) const {
    return std::span<const float>(pixels_).subspan(plane_offset(c), plane_size());
  }

  bool same_shape(const Image& other) const {
    return channels_ == other.channels_ && height_ == other.height_ &&
           width_ == other.width_;
  }

  /// Copy of the rectangle [y, y+h) x [x, x+w); throws InputError when it
  /// leaves the image.
  Image crop(int y, int x, int h, int w) const;

  /// Values clamped into [0, 1].
  Image clamped() const;

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t plane_size() const {
    return static_cast<std::size_t>(height_) * width_;
  }
  std::size_t plane_offset(int c) const { return c * plane_size(); }
  std::size_t index(int c, int y, int x) const {
    return plane_offset(c) + static_cast<std::size_t>(y) * width_ + x;
  }

  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> pixels_;
};

std::string shape_string(const Image& img);

/// Throws InputError unless both images share a shape.
void require_same_shape(const Image& a, const Image& b, const char* what);

/// Decodes an 8-bit PNG/JPEG (grey or colour) into a 3-channel RGB image in
/// [0, 1] (value / 255, no gamma linearisation). Throws InputError on failure.
Image load_image(const std::filesystem::path& path);

/// Encodes as 8-bit; values are clamped and rounded to the nearest level.
/// Single-channel images are written as greyscale.
void save_image(const Image& img, const std::filesystem::path& path);

/// Image files (png/jpg/jpeg) directly inside `dir`, sorted by filename.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

}  // namespace darkdeblur
