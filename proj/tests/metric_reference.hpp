#pragma once

#include <array>
#include <cstdint>
#include <utility>

#include "darkdeblur/metrics.hpp"

namespace metricref {

// CIEDE2000 reference pairs (Sharma, Wu and Dalal test set): Lab1, Lab2, dE.
struct ColourPair {
  darkdeblur::Lab first;
  darkdeblur::Lab second;
  double delta_e;
};

inline constexpr std::array<ColourPair, 34> kCiede2000Pairs{{
    {{50, 2.6772, -79.7751}, {50, 0, -82.7485}, 2.0425},
    {{50, 3.1571, -77.2803}, {50, 0, -82.7485}, 2.8615},
    {{50, 2.8361, -74.0200}, {50, 0, -82.7485}, 3.4412},
    {{50, -1.3802, -84.2814}, {50, 0, -82.7485}, 1.0000},
    {{50, -1.1848, -84.8006}, {50, 0, -82.7485}, 1.0000},
    {{50, -0.9009, -85.5211}, {50, 0, -82.7485}, 1.0000},
    {{50, 0, 0}, {50, -1, 2}, 2.3669},
    {{50, -1, 2}, {50, 0, 0}, 2.3669},
    {{50, 2.49, -0.001}, {50, -2.49, 0.0009}, 7.1792},
    {{50, 2.49, -0.001}, {50, -2.49, 0.0010}, 7.1792},
    {{50, 2.49, -0.001}, {50, -2.49, 0.0011}, 7.2195},
    {{50, 2.49, -0.001}, {50, -2.49, 0.0012}, 7.2195},
    {{50, -0.001, 2.49}, {50, 0.0009, -2.49}, 4.8045},
    {{50, -0.001, 2.49}, {50, 0.0010, -2.49}, 4.8045},
    {{50, -0.001, 2.49}, {50, 0.0011, -2.49}, 4.7461},
    {{50, 2.5, 0}, {50, 0, -2.5}, 4.3065},
    {{50, 2.5, 0}, {73, 25, -18}, 27.1492},
    {{50, 2.5, 0}, {61, -5, 29}, 22.8977},
    {{50, 2.5, 0}, {56, -27, -3}, 31.9030},
    {{50, 2.5, 0}, {58, 24, 15}, 19.4535},
    {{50, 2.5, 0}, {50, 3.1736, 0.5854}, 1.0000},
    {{50, 2.5, 0}, {50, 3.2972, 0}, 1.0000},
    {{50, 2.5, 0}, {50, 1.8634, 0.5757}, 1.0000},
    {{50, 2.5, 0}, {50, 3.2592, 0.3350}, 1.0000},
    {{60.2574, -34.0099, 36.2677}, {60.4626, -34.1751, 39.4387}, 1.2644},
    {{63.0109, -31.0961, -5.8663}, {62.8187, -29.7946, -4.0864}, 1.2630},
    {{61.2901, 3.7196, -5.3901}, {61.4292, 2.2480, -4.9620}, 1.8731},
    {{35.0831, -44.1164, 3.7933}, {35.0232, -40.0716, 1.5901}, 1.8645},
    {{22.7233, 20.0904, -46.6940}, {23.0331, 14.9730, -42.5619}, 2.0373},
    {{36.4612, 47.8580, 18.3852}, {36.2715, 50.5065, 21.2231}, 1.4146},
    {{90.8027, -2.0831, 1.4410}, {91.1528, -1.6435, 0.0447}, 1.4441},
    {{90.9257, -0.5406, -0.9208}, {88.6381, -0.8985, -0.7239}, 1.5381},
    {{6.7747, -0.2908, -2.4247}, {5.8714, -0.0985, -2.2286}, 0.6377},
    {{2.0776, 0.0795, -1.1350}, {0.9033, -0.0636, -0.5514}, 0.9082},
}};

// Frozen scikit-image SSIM (Gaussian weights, sigma 1.5, population
// covariance), PSNR and colour-science CIEDE2000 means for LCG image pairs;
// see tests/reference/make_metric_reference.py. delta_e < 0 means grey.
struct FrozenCase {
  std::uint64_t seed;
  int channels, height, width;
  double ssim, psnr, delta_e;
};

inline constexpr std::array<FrozenCase, 5> kFrozen{{
    {1, 3, 32, 40, 0.892760706611878, 17.4148550294778, 14.098170499306},
    {2, 1, 11, 11, 0.918545581792444, 17.7883981584536, -1},
    {3, 3, 24, 17, 0.889918274744702, 17.3987941622349, 14.1864052426807},
    {4, 3, 48, 48, 0.891931769657669, 17.3487987603495, 14.2899754577008},
    {5, 1, 13, 29, 0.892790659706424, 17.1325505757471, -1},
}};

inline std::pair<darkdeblur::Image, darkdeblur::Image> lcg_pair(const FrozenCase& fc) {
  std::uint64_t state = fc.seed;
  const auto next = [&] {
    state = state * 6364136223846793005ULL + 1442695040888963407ULL;
    return state;
  };
  darkdeblur::Image a(fc.channels, fc.height, fc.width);
  darkdeblur::Image b(fc.channels, fc.height, fc.width);
  for (int c = 0; c < fc.channels; ++c)
    for (int y = 0; y < fc.height; ++y)
      for (int x = 0; x < fc.width; ++x) {
        const long k = static_cast<long>(next() >> 56);
        const long d = static_cast<long>(next() >> 57) - 64;
        const long kb = std::min(255L, std::max(0L, k + d));
        a.at(c, y, x) = static_cast<float>(k / 255.0);
        b.at(c, y, x) = static_cast<float>(kb / 255.0);
      }
  return {a, b};
}

}  // namespace metricref
