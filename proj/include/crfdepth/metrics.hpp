#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>

#include "crfdepth/error.hpp"
#include "crfdepth/io.hpp"

namespace crfdepth {

struct EvalResult {
  double rmse = 0.0;
  double mae = 0.0;
  double rel = 0.0;
  double log10 = 0.0;
  long n_evaluated = 0;
};

struct CropRect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
};

enum class RelDenominator { kPrediction, kGroundTruth };

struct EvalOptions {
  double cap = 80.0;
  std::optional<CropRect> crop;
  RelDenominator rel_denominator = RelDenominator::kPrediction;
};

// Evaluates over pixels valid in `gt` (and inside the crop). Predictions are
// clamped to [1/256, cap]; an invalid prediction therefore counts as the
// smallest representable depth.
inline EvalResult evaluate(const DepthImage& pred, const DepthImage& gt, const EvalOptions& opt = {}) {
  if (pred.width != gt.width || pred.height != gt.height) {
    throw ValidationError("metrics", "prediction and ground truth sizes differ");
  }
  if (!(opt.cap > 0.0)) throw ValidationError("metrics", "cap must be > 0");
  int x0 = 0, y0 = 0, x1 = gt.width, y1 = gt.height;
  if (opt.crop) {
    x0 = std::max(0, opt.crop->x);
    y0 = std::max(0, opt.crop->y);
    x1 = std::min(gt.width, opt.crop->x + opt.crop->width);
    y1 = std::min(gt.height, opt.crop->y + opt.crop->height);
  }
  const double lo = 1.0 / kDepthScale;
  double se = 0.0, ae = 0.0, re = 0.0, le = 0.0;
  long n = 0;
  for (int r = y0; r < y1; ++r) {
    for (int c = x0; c < x1; ++c) {
      const auto p = static_cast<std::size_t>(r) * gt.width + c;
      if (!gt.valid[p]) continue;
      const double d = gt.depth[p];
      const double dh = std::clamp(pred.valid[p] ? pred.depth[p] : 0.0, lo, opt.cap);
      const double err = dh - d;
      se += err * err;
      ae += std::abs(err);
      re += std::abs(err) / (opt.rel_denominator == RelDenominator::kPrediction ? dh : d);
      le += std::abs(std::log10(dh) - std::log10(d));
      ++n;
    }
  }
  if (n == 0) throw ValidationError("metrics", "no valid ground-truth pixels in the evaluation region");
  const double inv = 1.0 / static_cast<double>(n);
  return {std::sqrt(se * inv), ae * inv, re * inv, le * inv, n};
}

inline EvalResult unit_scale(const EvalResult& r, double factor) {
  if (!(factor > 0.0)) throw ValidationError("metrics", "unit factor must be > 0");
  EvalResult out = r;
  out.rmse *= factor;
  out.mae *= factor;
  return out;
}

inline std::string format_record(const EvalResult& r) {
  char buf[192];
  std::snprintf(buf, sizeof(buf), "rmse=%.6f mae=%.6f rel=%.6f log10=%.6f n=%ld", r.rmse, r.mae, r.rel,
                r.log10, r.n_evaluated);
  return buf;
}

inline constexpr const char* kCsvHeader = "param,value,rmse,mae,rel,log10,n";

inline std::string format_csv_row(const std::string& param, const std::string& value, const EvalResult& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s,%s,%.6f,%.6f,%.6f,%.6f,%ld", param.c_str(), value.c_str(), r.rmse,
                r.mae, r.rel, r.log10, r.n_evaluated);
  return buf;
}

}  // namespace crfdepth
