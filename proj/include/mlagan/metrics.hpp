#pragma once

// Full-reference image quality: MSE, PSNR and global SSIM.

#include <cmath>
#include <cstddef>
#include <functional>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mlagan/error.hpp"
#include "mlagan/tensor.hpp"

namespace mlagan {

inline constexpr double kPsnrCsvCap = 100.0;

template <typename T>
double mse(const Tensor<T>& x, const Tensor<T>& y) {
  require_same_shape(x, y, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = static_cast<double>(x[i]) - static_cast<double>(y[i]);
    s += d * d;
  }
  return s / static_cast<double>(x.size());
}

/// 10 log10(L^2 / MSE); +infinity when the images are identical.
inline double psnr_from_mse(double m, double peak = 1.0) {
  if (!(peak > 0.0)) throw UsageError("psnr: peak must be positive");
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

template <typename T>
double psnr(const Tensor<T>& x, const Tensor<T>& y, double peak = 1.0) {
  return psnr_from_mse(mse(x, y), peak);
}

struct SsimConstants {
  double c1, c2, c3;

  static SsimConstants for_peak(double peak = 1.0) {
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    return {c1, c2, c2 / 2.0};
  }
};

/// Whole-image SSIM per channel (population statistics), averaged over channels.
/// Rank-2 inputs are treated as a single channel.
template <typename T>
double ssim(const Tensor<T>& x, const Tensor<T>& y, const SsimConstants& k = SsimConstants::for_peak()) {
  require_same_shape(x, y, "ssim");
  if (!(k.c1 > 0 && k.c2 > 0 && k.c3 > 0)) throw UsageError("ssim: constants must be positive");
  if (x.rank() != 2 && x.rank() != 3) throw DimensionError("ssim: expected [H x W] or [C x H x W]");
  const std::size_t channels = x.rank() == 3 ? x.dim(0) : 1;
  const std::size_t n = x.size() / channels;
  double total = 0.0;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* px = x.ptr() + c * n;
    const T* py = y.ptr() + c * n;
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
      mx += px[i];
      my += py[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cov = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dx = px[i] - mx, dy = py[i] - my;
      vx += dx * dx;
      vy += dy * dy;
      cov += dx * dy;
    }
    vx /= static_cast<double>(n);
    vy /= static_cast<double>(n);
    cov /= static_cast<double>(n);
    const double sx = std::sqrt(vx), sy = std::sqrt(vy);
    const double l = (2 * mx * my + k.c1) / (mx * mx + my * my + k.c1);
    const double con = (2 * sx * sy + k.c2) / (vx + vy + k.c2);
    const double s = (cov + k.c3) / (sx * sy + k.c3);
    total += l * con * s;
  }
  return total / static_cast<double>(channels);
}

struct ImageScore {
  std::string id;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

struct MetricReport {
  std::vector<ImageScore> images;
  double mean_psnr = 0.0;  // infinite values capped at kPsnrCsvCap
  double mean_ssim = 0.0;
  std::size_t count = 0;
  std::size_t capped = 0;
  std::vector<std::string> notes;

  void finalize() {
    if (images.empty()) throw UsageError("metric report: no images evaluated");
    double ps = 0, ss = 0;
    capped = 0;
    for (const auto& s : images) {
      if (std::isinf(s.psnr_db)) ++capped;
      ps += std::isinf(s.psnr_db) ? kPsnrCsvCap : s.psnr_db;
      ss += s.ssim;
    }
    count = images.size();
    mean_psnr = ps / static_cast<double>(count);
    mean_ssim = ss / static_cast<double>(count);
    if (capped) {
      notes.push_back(std::to_string(capped) + " identical pair(s): PSNR capped at " +
                      std::to_string(static_cast<int>(kPsnrCsvCap)) + " dB in the mean");
    }
  }
};

template <typename T>
struct EvalPair {
  std::string id;
  const Tensor<T>* cloudy;
  const Tensor<T>* clear;
};

/// Scores restore(cloudy) against clear, or the raw cloudy input when restore is empty.
template <typename T>
MetricReport evaluate_pairs(const std::vector<EvalPair<T>>& pairs,
                            const std::function<Tensor<T>(const Tensor<T>&)>& restore = {},
                            double peak = 1.0) {
  if (pairs.empty()) throw UsageError("evaluate_pairs: empty pair set");
  MetricReport r;
  const SsimConstants k = SsimConstants::for_peak(peak);
  for (const auto& p : pairs) {
    const Tensor<T> candidate = restore ? restore(*p.cloudy) : *p.cloudy;
    r.images.push_back({p.id, psnr(candidate, *p.clear, peak), ssim(candidate, *p.clear, k)});
  }
  r.finalize();
  return r;
}

inline std::string format_psnr(double db) {
  if (std::isinf(db)) return "inf";
  std::ostringstream os;
  os << std::setprecision(10) << db;
  return os.str();
}

inline void write_report_csv(const MetricReport& r, std::ostream& out) {
  out << "id,psnr_db,ssim\n";
  out << std::setprecision(10);
  for (const auto& s : r.images) out << s.id << ',' << format_psnr(s.psnr_db) << ',' << s.ssim << '\n';
  out << "mean," << r.mean_psnr << ',' << r.mean_ssim << '\n';
  for (const auto& n : r.notes) out << "# " << n << '\n';
}

}  // namespace mlagan
