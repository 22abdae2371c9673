#pragma once

#include <stdexcept>
#include <string>

namespace darkdeblur {

// Bad user-supplied data: wrong shapes, unreadable images, malformed files.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Inconsistent or missing configuration (widths, weights files, empty datasets).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Too few confident keypoint matches to estimate a homography.
class AlignmentError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Numerical integrity failures (NaN/Inf in outputs or losses).
class IntegrityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace darkdeblur
