#include "darkdeblur/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "json.hpp"

#include "darkdeblur/data.hpp"
#include "darkdeblur/errors.hpp"

namespace darkdeblur {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double total = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * kWindowSigma * kWindowSigma));
    total += g[i];
  }
  for (double& v : g) v /= total;
  return g;
}

// Separable "valid" filtering of an h x w plane.
std::vector<double> filter_valid(const std::vector<double>& src, int h, int w) {
  static const auto g = gaussian_window();
  const int oh = h - kWindow + 1;
  const int ow = w - kWindow + 1;
  std::vector<double> rows(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * src[static_cast<std::size_t>(y) * w + x + k];
      rows[static_cast<std::size_t>(y) * ow + x] = s;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int k = 0; k < kWindow; ++k) s += g[k] * rows[static_cast<std::size_t>(y + k) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  return out;
}

double ssim_plane(std::span<const float> a, std::span<const float> b, int h, int w) {
  const std::size_t n = a.size();
  std::vector<double> pa(n), pb(n), aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    pa[i] = a[i];
    pb[i] = b[i];
    aa[i] = pa[i] * pa[i];
    bb[i] = pb[i] * pb[i];
    ab[i] = pa[i] * pb[i];
  }
  const auto mu_a = filter_valid(pa, h, w);
  const auto mu_b = filter_valid(pb, h, w);
  const auto e_aa = filter_valid(aa, h, w);
  const auto e_bb = filter_valid(bb, h, w);
  const auto e_ab = filter_valid(ab, h, w);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i];
    const double mb = mu_b[i];
    const double var_a = e_aa[i] - ma * ma;
    const double var_b = e_bb[i] - mb * mb;
    const double cov = e_ab[i] - ma * mb;
    total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
             ((ma * ma + mb * mb + kC1) * (var_a + var_b + kC2));
  }
  return total / static_cast<double>(mu_a.size());
}

double srgb_decode(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3 * delta * delta) + 4.0 / 29.0;
}

constexpr double kSrgbToXyz[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                     {0.2126729, 0.7151522, 0.0721750},
                                     {0.0193339, 0.1191920, 0.9503041}};

double deg(double rad) { return rad * 180.0 / std::numbers::pi; }
double rad(double degrees) { return degrees * std::numbers::pi / 180.0; }

}  // namespace

double psnr(const Image& a, const Image& b) {
  require_same_shape(a, b, "psnr");
  const auto da = a.data();
  const auto db = b.data();
  double sum = 0.0;
  for (std::size_t i = 0; i < da.size(); ++i) {
    const double d = static_cast<double>(da[i]) - db[i];
    sum += d * d;
  }
  const double mse = sum / static_cast<double>(da.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Image& a, const Image& b) {
  require_same_shape(a, b, "ssim");
  if (a.height() < kWindow || a.width() < kWindow) {
    throw InputError("ssim: image " + shape_string(a) + " smaller than the 11x11 window");
  }
  double total = 0.0;
  for (int c = 0; c < a.channels(); ++c) {
    total += ssim_plane(a.plane(c), b.plane(c), a.height(), a.width());
  }
  return total / a.channels();
}

Lab srgb_to_lab(double r, double g, double b) {
  const double lin[3] = {srgb_decode(r), srgb_decode(g), srgb_decode(b)};
  double xyz[3];
  double white[3];
  for (int i = 0; i < 3; ++i) {
    xyz[i] = kSrgbToXyz[i][0] * lin[0] + kSrgbToXyz[i][1] * lin[1] + kSrgbToXyz[i][2] * lin[2];
    white[i] = kSrgbToXyz[i][0] + kSrgbToXyz[i][1] + kSrgbToXyz[i][2];
  }
  const double fx = lab_f(xyz[0] / white[0]);
  const double fy = lab_f(xyz[1] / white[1]);
  const double fz = lab_f(xyz[2] / white[2]);
  return {116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

double ciede2000(const Lab& first, const Lab& second) {
  const double c1 = std::hypot(first.a, first.b);
  const double c2 = std::hypot(second.a, second.b);
  const double c_bar7 = std::pow((c1 + c2) / 2.0, 7.0);
  const double g = 0.5 * (1.0 - std::sqrt(c_bar7 / (c_bar7 + std::pow(25.0, 7.0))));
  const double a1p = (1.0 + g) * first.a;
  const double a2p = (1.0 + g) * second.a;
  const double c1p = std::hypot(a1p, first.b);
  const double c2p = std::hypot(a2p, second.b);

  const auto hue = [](double b, double ap) {
    if (b == 0.0 && ap == 0.0) return 0.0;
    double h = deg(std::atan2(b, ap));
    return h < 0.0 ? h + 360.0 : h;
  };
  const double h1p = hue(first.b, a1p);
  const double h2p = hue(second.b, a2p);

  // Hue differences that are exactly 180 degrees in exact arithmetic can land
  // a few ulps either side after atan2; snap them so the tie branch is taken.
  double diff = h2p - h1p;
  if (std::abs(std::abs(diff) - 180.0) < 1e-9) diff = std::copysign(180.0, diff);

  const double dLp = second.L - first.L;
  const double dCp = c2p - c1p;
  double dhp = 0.0;
  if (c1p * c2p != 0.0) {
    if (std::abs(diff) <= 180.0) {
      dhp = diff;
    } else if (diff > 180.0) {
      dhp = diff - 360.0;
    } else {
      dhp = diff + 360.0;
    }
  }
  const double dHp = 2.0 * std::sqrt(c1p * c2p) * std::sin(rad(dhp / 2.0));

  const double l_bar = (first.L + second.L) / 2.0;
  const double c_bar_p = (c1p + c2p) / 2.0;
  double h_bar = h1p + h2p;
  if (c1p * c2p != 0.0) {
    if (std::abs(diff) <= 180.0) {
      h_bar = (h1p + h2p) / 2.0;
    } else if (h1p + h2p < 360.0) {
      h_bar = (h1p + h2p + 360.0) / 2.0;
    } else {
      h_bar = (h1p + h2p - 360.0) / 2.0;
    }
  }

  const double t = 1.0 - 0.17 * std::cos(rad(h_bar - 30.0)) + 0.24 * std::cos(rad(2.0 * h_bar)) +
                   0.32 * std::cos(rad(3.0 * h_bar + 6.0)) -
                   0.20 * std::cos(rad(4.0 * h_bar - 63.0));
  const double d_theta = 30.0 * std::exp(-std::pow((h_bar - 275.0) / 25.0, 2.0));
  const double c_bar_p7 = std::pow(c_bar_p, 7.0);
  const double rc = 2.0 * std::sqrt(c_bar_p7 / (c_bar_p7 + std::pow(25.0, 7.0)));
  const double l50 = (l_bar - 50.0) * (l_bar - 50.0);
  const double sl = 1.0 + 0.015 * l50 / std::sqrt(20.0 + l50);
  const double sc = 1.0 + 0.045 * c_bar_p;
  const double sh = 1.0 + 0.015 * c_bar_p * t;
  const double rt = -std::sin(rad(2.0 * d_theta)) * rc;

  const double tl = dLp / sl;
  const double tc = dCp / sc;
  const double th = dHp / sh;
  return std::sqrt(tl * tl + tc * tc + th * th + rt * tc * th);
}

double delta_e(const Image& a, const Image& b) {
  require_same_shape(a, b, "delta_e");
  if (a.channels() != 3) throw InputError("delta_e: expected 3-channel sRGB images");
  double total = 0.0;
  for (int y = 0; y < a.height(); ++y)
    for (int x = 0; x < a.width(); ++x) {
      const Lab la = srgb_to_lab(a.at(0, y, x), a.at(1, y, x), a.at(2, y, x));
      const Lab lb = srgb_to_lab(b.at(0, y, x), b.at(1, y, x), b.at(2, y, x));
      total += ciede2000(la, lb);
    }
  return total / (static_cast<double>(a.height()) * a.width());
}

MetricRecord score_pair(std::string image_id, const Image& restored, const Image& reference) {
  return {std::move(image_id), psnr(restored, reference), ssim(restored, reference),
          delta_e(restored, reference)};
}

const std::vector<ReportedReference>& reported_references() {
  static const std::vector<ReportedReference> refs = {
      {"DarkDeblurNet", "ExDark", 34.56, 0.9146, 1.78},
      {"DarkDeblurNet", "DarkShake", 25.39, 0.8401, 3.75},
  };
  return refs;
}

void EvalReport::finalize() {
  std::sort(records.begin(), records.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  std::sort(failures.begin(), failures.end(),
            [](const auto& a, const auto& b) { return a.image_id < b.image_id; });
  mean_psnr = mean_ssim = mean_delta_e = 0.0;
  if (records.empty()) return;
  for (const auto& r : records) {
    mean_psnr += r.psnr;
    mean_ssim += r.ssim;
    mean_delta_e += r.delta_e;
  }
  const double n = static_cast<double>(records.size());
  mean_psnr /= n;
  mean_ssim /= n;
  mean_delta_e /= n;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["dataset"] = dataset;
  j["method"] = method;
  j["delta_e_formula"] = "CIEDE2000";
  j["count"] = records.size();
  j["mean_psnr"] = mean_psnr;
  j["mean_ssim"] = mean_ssim;
  j["mean_delta_e"] = mean_delta_e;
  j["records"] = nlohmann::ordered_json::array();
  for (const auto& r : records) {
    j["records"].push_back(
        {{"image_id", r.image_id}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"delta_e", r.delta_e}});
  }
  j["failures"] = nlohmann::ordered_json::array();
  for (const auto& f : failures) {
    j["failures"].push_back({{"image_id", f.image_id}, {"reason", f.reason}});
  }
  j["reported_full_scale"] = nlohmann::ordered_json::array();
  for (const auto& ref : reported_references()) {
    j["reported_full_scale"].push_back({{"method", ref.method},
                                        {"dataset", ref.dataset},
                                        {"psnr", ref.psnr},
                                        {"ssim", ref.ssim},
                                        {"delta_e", ref.delta_e}});
  }
  return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
  std::ostringstream out;
  const auto row = [&](const std::string& m, const std::string& d, double p, double s, double e,
                       const std::string& note) {
    out << std::left << std::setw(24) << m << std::setw(14) << d << std::right << std::fixed
        << std::setprecision(2) << std::setw(9) << p << std::setprecision(4) << std::setw(9) << s
        << std::setprecision(2) << std::setw(9) << e << "  " << note << "\n";
  };
  out << std::left << std::setw(24) << "Method" << std::setw(14) << "Dataset" << std::right
      << std::setw(9) << "PSNR^" << std::setw(9) << "SSIM^" << std::setw(9) << "DeltaEv"
      << "\n";
  row(method, dataset, mean_psnr, mean_ssim, mean_delta_e,
      std::to_string(records.size()) + " images" +
          (failures.empty() ? "" : ", " + std::to_string(failures.size()) + " failed"));
  for (const auto& ref : reported_references()) {
    row(ref.method, ref.dataset, ref.psnr, ref.ssim, ref.delta_e, "(reported, full-scale)");
  }
  return out.str();
}

EvalReport evaluate(const Restorer& restore, const DatasetManifest& manifest,
                    const std::string& method) {
  EvalReport report;
  report.dataset = manifest.source;
  report.method = method;
  for (const auto& entry : manifest.entries) {
    try {
      const Image blurry = load_image(entry.blurry);
      const Image sharp = load_image(entry.sharp);
      report.records.push_back(score_pair(entry.id(), restore(blurry), sharp));
    } catch (const std::exception& e) {
      report.failures.push_back({entry.id(), e.what()});
    }
  }
  report.finalize();
  return report;
}

EvalReport evaluate_outputs(const std::filesystem::path& outputs_dir,
                            const DatasetManifest& manifest, const std::string& method) {
  EvalReport report;
  report.dataset = manifest.source;
  report.method = method;
  for (const auto& entry : manifest.entries) {
    const auto output = outputs_dir / entry.blurry.filename();
    if (!std::filesystem::exists(output)) {
      report.failures.push_back({entry.id(), "missing output " + output.string()});
      continue;
    }
    try {
      report.records.push_back(score_pair(entry.id(), load_image(output), load_image(entry.sharp)));
    } catch (const std::exception& e) {
      report.failures.push_back({entry.id(), e.what()});
    }
  }
  report.finalize();
  return report;
}

}  // namespace darkdeblur
