#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "darkdeblur/image.hpp"

namespace darkdeblur {

class DatasetManifest;

inline constexpr double kPsnrCap = 100.0;

/// 10 log10(1 / MSE) over all channels, capped at 100 dB (identical images).
double psnr(const Image& a, const Image& b);

/// Mean local SSIM: 11x11 Gaussian window (sigma 1.5) evaluated at every
/// position where it fits inside the image, C1 = 0.01^2, C2 = 0.03^2,
/// computed per channel and averaged. Throws InputError below 11x11.
double ssim(const Image& a, const Image& b);

struct Lab {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;
};

/// sRGB in [0,1] -> CIELAB under D65 (sRGB transfer decode, IEC 61966-2-1
/// matrix, white point taken from the same matrix so white maps to a=b=0).
Lab srgb_to_lab(double r, double g, double b);

/// CIEDE2000 colour difference with kL = kC = kH = 1.
double ciede2000(const Lab& first, const Lab& second);

/// Mean per-pixel CIEDE2000 of two sRGB images.
double delta_e(const Image& a, const Image& b);

struct MetricRecord {
  std::string image_id;
  double psnr = 0.0;
  double ssim = 0.0;
  double delta_e = 0.0;
};

MetricRecord score_pair(std::string image_id, const Image& restored, const Image& reference);

struct EvalFailure {
  std::string image_id;
  std::string reason;
};

/// Full-scale reference results quoted alongside desk-scale reports; they are
/// not targets for anything this toolkit trains.
struct ReportedReference {
  std::string method;
  std::string dataset;
  double psnr = 0.0;
  double ssim = 0.0;
  double delta_e = 0.0;
};

const std::vector<ReportedReference>& reported_references();

struct EvalReport {
  std::string dataset;
  std::string method;
  std::vector<MetricRecord> records;
  std::vector<EvalFailure> failures;
  double mean_psnr = 0.0;
  double mean_ssim = 0.0;
  double mean_delta_e = 0.0;

  /// Sorts records/failures by image_id and recomputes the means.
  void finalize();

  /// Machine-readable report (JSON text).
  std::string to_json() const;

  /// Plain-text table: method x dataset x PSNR / SSIM / DeltaE.
  std::string to_table() const;
};

/// Produces the restored image for a blurry input.
using Restorer = std::function<Image(const Image& blurry)>;

/// Runs `restore` on every manifest entry and scores it against the sharp side.
EvalReport evaluate(const Restorer& restore, const DatasetManifest& manifest,
                    const std::string& method);

/// Scores pre-computed outputs: for each entry the output is the file in
/// `outputs_dir` named like the blurry input. Missing or unreadable outputs
/// become failure rows.
EvalReport evaluate_outputs(const std::filesystem::path& outputs_dir,
                            const DatasetManifest& manifest, const std::string& method);

}  // namespace darkdeblur
