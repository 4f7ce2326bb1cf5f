#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "crfdepth/error.hpp"
#include "crfdepth/png.hpp"

namespace crfdepth {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

// Rectified-camera calibration in the KITTI raw convention.
//   y = p_rect * r_rect * t_velo_cam * x   (x homogeneous, LiDAR frame)
struct CalibrationSet {
  Eigen::Matrix<double, 3, 4> p_rect = Eigen::Matrix<double, 3, 4>::Identity();
  Eigen::Matrix4d r_rect = Eigen::Matrix4d::Identity();
  Eigen::Matrix4d t_velo_cam = Eigen::Matrix4d::Identity();

  // LiDAR frame to rectified camera frame (metric).
  Eigen::Matrix4d velo_to_rect() const { return r_rect * t_velo_cam; }

  double fu() const { return p_rect(0, 0); }
  double fv() const { return p_rect(1, 1); }
  double cu() const { return p_rect(0, 2); }
  double cv() const { return p_rect(1, 2); }
};

struct RawPointCloud {
  std::vector<Eigen::Vector3d> points;
  std::vector<double> reflectance;  // empty, or aligned with points

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;  // row-major RGB

  RgbImage() = default;
  RgbImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, 0) {}

  std::size_t index(int col, int row) const {
    return (static_cast<std::size_t>(row) * width + col) * 3;
  }
};

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;        // meters, 0 where invalid
  std::vector<std::uint8_t> valid;  // 1 = valid

  DepthImage() = default;
  DepthImage(int w, int h)
      : width(w),
        height(h),
        depth(static_cast<std::size_t>(w) * h, 0.0),
        valid(static_cast<std::size_t>(w) * h, 0) {}

  std::size_t size() const { return depth.size(); }

  void set(std::size_t i, double d) {
    if (std::isfinite(d) && d > 0.0) {
      depth[i] = d;
      valid[i] = 1;
    } else {
      depth[i] = 0.0;
      valid[i] = 0;
    }
  }

  bool operator==(const DepthImage&) const = default;
};

enum class SolverMethod { kCgs, kCg };
enum class Preconditioner { kNone, kJacobi };

struct RunConfig {
  int n_superpixels = 5500;
  double compactness = 10.0;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double delta = 1.0;
  double sigma_d = 30.0;  // colour units (0..255 per channel)
  double sigma_p = 1.0;   // meters
  double sigma_i = 1.0;
  double solver_tol = 1e-8;
  int solver_max_iter = 10000;
  double depth_cap = 80.0;
  double subsample_fraction = 1.0;
  int normal_k = 10;
  SolverMethod solver = SolverMethod::kCgs;
  Preconditioner preconditioner = Preconditioner::kNone;

  bool operator==(const RunConfig&) const = default;
};

// ---------------------------------------------------------------------------
// File helpers
// ---------------------------------------------------------------------------

inline std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("io", "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("io", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Write-then-rename so readers never observe a partial file.
inline void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("io", "cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("io", "write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void write_file_atomic(const std::filesystem::path& path, std::string_view text) {
  write_file_atomic(path, std::span<const std::uint8_t>(
                              reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::optional<double> to_double(std::string_view token) {
  double v = 0.0;
  const auto* first = token.data();
  const auto* last = token.data() + token.size();
  if (!token.empty() && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    const auto start = i;
    while (i < s.size() && !std::isspace(static_cast<unsigned char>(s[i]))) ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

inline double orthonormality_defect(const Eigen::Matrix3d& r) {
  return (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Calibration
// ---------------------------------------------------------------------------

inline constexpr double kOrthonormalTolerance = 1e-6;

// Parses the concatenation of `calib_cam_to_cam.txt` and
// `calib_velo_to_cam.txt`. Only the required keys are tokenized, so
// free-text entries such as `calib_time` are tolerated.
inline CalibrationSet parse_calibration(std::string_view text,
                                        std::string_view projection_key = "P_rect_02") {
  struct Wanted {
    std::string key;
    std::size_t count;
    std::vector<double> values;
    bool seen = false;
  };
  std::vector<Wanted> wanted = {{std::string(projection_key), 12, {}},
                                {"R_rect_00", 9, {}},
                                {"R", 9, {}},
                                {"T", 3, {}}};

  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    const auto raw = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    const auto line = detail::trim(raw);
    if (line.empty()) continue;
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) {
      throw ParseError("io", "line " + std::to_string(line_no) + ": expected 'key: values'", line_no);
    }
    const auto key = detail::trim(line.substr(0, colon));
    auto it = std::find_if(wanted.begin(), wanted.end(), [&](const Wanted& w) { return w.key == key; });
    if (it == wanted.end()) continue;
    if (it->seen) {
      throw FormatError("io", "duplicate calibration key " + it->key);
    }
    it->seen = true;
    for (auto token : detail::split_ws(line.substr(colon + 1))) {
      auto v = detail::to_double(token);
      if (!v) {
        throw ParseError("io",
                         "line " + std::to_string(line_no) + ": non-numeric token '" +
                             std::string(token) + "' for key " + it->key,
                         line_no);
      }
      it->values.push_back(*v);
    }
    if (it->values.size() != it->count) {
      throw ParseError("io",
                       "line " + std::to_string(line_no) + ": key " + it->key + " expects " +
                           std::to_string(it->count) + " values, got " +
                           std::to_string(it->values.size()),
                       line_no);
    }
  }
  for (const auto& w : wanted) {
    if (!w.seen) throw FormatError("io", "missing calibration key " + w.key);
  }

  CalibrationSet calib;
  const auto& p = wanted[0].values;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) calib.p_rect(r, c) = p[static_cast<std::size_t>(r * 4 + c)];

  calib.r_rect = Eigen::Matrix4d::Identity();
  const auto& rr = wanted[1].values;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) calib.r_rect(r, c) = rr[static_cast<std::size_t>(r * 3 + c)];

  calib.t_velo_cam = Eigen::Matrix4d::Identity();
  const auto& rv = wanted[2].values;
  const auto& tv = wanted[3].values;
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) calib.t_velo_cam(r, c) = rv[static_cast<std::size_t>(r * 3 + c)];
    calib.t_velo_cam(r, 3) = tv[static_cast<std::size_t>(r)];
  }

  if (detail::orthonormality_defect(calib.r_rect.topLeftCorner<3, 3>()) > kOrthonormalTolerance) {
    throw ValidationError("io", "R_rect_00 is not orthonormal");
  }
  if (detail::orthonormality_defect(calib.t_velo_cam.topLeftCorner<3, 3>()) > kOrthonormalTolerance) {
    throw ValidationError("io", "velo-to-cam R is not orthonormal");
  }
  if (calib.p_rect(2, 0) != 0.0 || calib.p_rect(2, 1) != 0.0 || calib.p_rect(2, 2) != 1.0) {
    throw ValidationError("io", std::string(projection_key) + " third row must start with 0 0 1");
  }
  return calib;
}

inline CalibrationSet load_calibration(std::span<const std::filesystem::path> paths,
                                       std::string_view projection_key = "P_rect_02") {
  std::string text;
  for (const auto& p : paths) {
    text += read_text_file(p);
    text += '\n';
  }
  return parse_calibration(text, projection_key);
}

// Emits a calibration in the same text layout parse_calibration reads.
inline std::string write_calibration(const CalibrationSet& calib,
                                     std::string_view projection_key = "P_rect_02") {
  std::string out;
  char buf[64];
  auto put = [&](double v) {
    std::snprintf(buf, sizeof(buf), " %.17g", v);
    out += buf;
  };
  out += projection_key;
  out += ':';
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) put(calib.p_rect(r, c));
  out += "\nR_rect_00:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put(calib.r_rect(r, c));
  out += "\nR:";
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) put(calib.t_velo_cam(r, c));
  out += "\nT:";
  for (int r = 0; r < 3; ++r) put(calib.t_velo_cam(r, 3));
  out += '\n';
  return out;
}

// ---------------------------------------------------------------------------
// Point clouds: little-endian float32 (x, y, z, reflectance) records
// ---------------------------------------------------------------------------

namespace detail {

inline float load_le_float(const std::uint8_t* p) {
  std::uint32_t u = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                    (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
  return std::bit_cast<float>(u);
}

inline void store_le_float(float f, std::vector<std::uint8_t>& out) {
  const auto u = std::bit_cast<std::uint32_t>(f);
  for (int s = 0; s < 32; s += 8) out.push_back(static_cast<std::uint8_t>((u >> s) & 0xff));
}

}  // namespace detail

inline RawPointCloud read_point_cloud(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 16 != 0) {
    throw FormatError("io", "point cloud byte length " + std::to_string(bytes.size()) +
                                " is not a multiple of 16");
  }
  RawPointCloud cloud;
  const std::size_t n = bytes.size() / 16;
  cloud.points.reserve(n);
  cloud.reflectance.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = bytes.data() + 16 * i;
    const double x = detail::load_le_float(rec);
    const double y = detail::load_le_float(rec + 4);
    const double z = detail::load_le_float(rec + 8);
    const double r = detail::load_le_float(rec + 12);
    if (!std::isfinite(x) || !std::isfinite(y) || !std::isfinite(z)) {
      throw FormatError("io", "non-finite coordinate in point record " + std::to_string(i));
    }
    cloud.points.emplace_back(x, y, z);
    cloud.reflectance.push_back(r);
  }
  return cloud;
}

inline std::vector<std::uint8_t> write_point_cloud(const RawPointCloud& cloud) {
  std::vector<std::uint8_t> out;
  out.reserve(cloud.size() * 16);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& p = cloud.points[i];
    detail::store_le_float(static_cast<float>(p.x()), out);
    detail::store_le_float(static_cast<float>(p.y()), out);
    detail::store_le_float(static_cast<float>(p.z()), out);
    detail::store_le_float(i < cloud.reflectance.size() ? static_cast<float>(cloud.reflectance[i]) : 0.f,
                           out);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

inline constexpr double kDepthScale = 256.0;

inline DepthImage read_depth_png(std::span<const std::uint8_t> bytes) {
  const auto raw = png::decode(bytes);
  if (raw.palette || raw.channels != 1 || raw.bit_depth != 16) {
    throw FormatError("io", "depth PNG must be single-channel 16-bit");
  }
  DepthImage img(raw.width, raw.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const auto v = raw.samples[i];
    if (v != 0) {
      img.depth[i] = v / kDepthScale;
      img.valid[i] = 1;
    }
  }
  return img;
}

// Depths are quantized to 1/256 m; values past 65535/256 m saturate.
inline std::vector<std::uint8_t> write_depth_png(const DepthImage& img) {
  std::vector<std::uint16_t> samples(img.size(), 0);
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (!img.valid[i]) continue;
    const double v = std::round(img.depth[i] * kDepthScale);
    samples[i] = static_cast<std::uint16_t>(std::clamp(v, 1.0, 65535.0));
  }
  return png::encode(img.width, img.height, 1, 16, samples);
}

inline RgbImage read_rgb_png(std::span<const std::uint8_t> bytes) {
  const auto raw = png::decode(bytes);
  RgbImage img(raw.width, raw.height);
  const int shift = raw.bit_depth == 16 ? 8 : 0;
  const std::size_t n = static_cast<std::size_t>(raw.width) * raw.height;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* s = raw.samples.data() + i * raw.channels;
    for (int c = 0; c < 3; ++c) {
      // gray and gray+alpha replicate the first channel
      const int src = raw.channels >= 3 ? c : 0;
      img.pixels[i * 3 + c] = static_cast<std::uint8_t>(s[src] >> shift);
    }
  }
  return img;
}

inline std::vector<std::uint8_t> write_rgb_png(const RgbImage& img) {
  std::vector<std::uint16_t> samples(img.pixels.begin(), img.pixels.end());
  return png::encode(img.width, img.height, 3, 8, samples);
}

inline std::vector<std::uint8_t> write_gray8_png(int width, int height,
                                                 std::span<const std::uint8_t> values) {
  std::vector<std::uint16_t> samples(values.begin(), values.end());
  return png::encode(width, height, 1, 8, samples);
}

inline std::vector<std::uint8_t> write_gray16_png(int width, int height,
                                                  std::span<const std::uint16_t> values) {
  return png::encode(width, height, 1, 16, values);
}

// ---------------------------------------------------------------------------
// Run configuration: flat `key = value` text, `#` comments
// ---------------------------------------------------------------------------

inline void validate_config(const RunConfig& c) {
  auto fail = [](const std::string& what) { throw ValidationError("io", "config: " + what); };
  auto unit = [&](double v, const char* name) {
    if (!(v >= 0.0 && v <= 1.0)) fail(std::string(name) + " must lie in [0, 1]");
  };
  unit(c.alpha, "alpha");
  unit(c.beta, "beta");
  unit(c.gamma, "gamma");
  unit(c.delta, "delta");
  if (!(c.alpha > 0.0)) fail("alpha must be > 0 (the system is singular without the data term)");
  if (c.n_superpixels < 4) fail("n_superpixels must be >= 4");
  if (!(c.compactness > 0.0)) fail("compactness must be > 0");
  if (!(c.sigma_d > 0.0)) fail("sigma_d must be > 0");
  if (!(c.sigma_p > 0.0)) fail("sigma_p must be > 0");
  if (!(c.sigma_i > 0.0)) fail("sigma_i must be > 0");
  if (!(c.solver_tol > 0.0)) fail("solver_tol must be > 0");
  if (c.solver_max_iter < 1) fail("solver_max_iter must be >= 1");
  if (!(c.depth_cap > 0.0)) fail("depth_cap must be > 0");
  if (!(c.subsample_fraction > 0.0 && c.subsample_fraction <= 1.0)) {
    fail("subsample_fraction must lie in (0, 1]");
  }
  if (c.normal_k < 3) fail("normal_k must be >= 3");
}

inline RunConfig load_config(std::string_view text) {
  RunConfig cfg;
  int line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;

    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ParseError("io", "config line " + std::to_string(line_no) + ": expected 'key = value'",
                       line_no);
    }
    const std::string key(detail::trim(line.substr(0, eq)));
    const auto value = detail::trim(line.substr(eq + 1));
    const auto where = "config line " + std::to_string(line_no) + ": ";

    auto real = [&]() {
      auto v = detail::to_double(value);
      if (!v) throw ParseError("io", where + "'" + key + "' expects a number", line_no);
      return *v;
    };
    auto integer = [&]() {
      const double v = real();
      if (v != std::floor(v) || std::abs(v) > 2e9) {
        throw ParseError("io", where + "'" + key + "' expects an integer", line_no);
      }
      return static_cast<int>(v);
    };

    if (key == "n_superpixels") cfg.n_superpixels = integer();
    else if (key == "compactness") cfg.compactness = real();
    else if (key == "alpha") cfg.alpha = real();
    else if (key == "beta") cfg.beta = real();
    else if (key == "gamma") cfg.gamma = real();
    else if (key == "delta") cfg.delta = real();
    else if (key == "sigma_d") cfg.sigma_d = real();
    else if (key == "sigma_p") cfg.sigma_p = real();
    else if (key == "sigma_i") cfg.sigma_i = real();
    else if (key == "solver_tol") cfg.solver_tol = real();
    else if (key == "solver_max_iter") cfg.solver_max_iter = integer();
    else if (key == "depth_cap") cfg.depth_cap = real();
    else if (key == "subsample_fraction") cfg.subsample_fraction = real();
    else if (key == "normal_k") cfg.normal_k = integer();
    else if (key == "solver") {
      if (value == "cgs") cfg.solver = SolverMethod::kCgs;
      else if (value == "cg") cfg.solver = SolverMethod::kCg;
      else throw ParseError("io", where + "solver must be 'cgs' or 'cg'", line_no);
    } else if (key == "preconditioner") {
      if (value == "none") cfg.preconditioner = Preconditioner::kNone;
      else if (value == "jacobi") cfg.preconditioner = Preconditioner::kJacobi;
      else throw ParseError("io", where + "preconditioner must be 'none' or 'jacobi'", line_no);
    } else {
      throw FormatError("io", where + "unknown key '" + key + "'");
    }
  }
  validate_config(cfg);
  return cfg;
}

inline std::string write_config(const RunConfig& c) {
  std::string out;
  char buf[96];
  auto real = [&](const char* k, double v) {
    std::snprintf(buf, sizeof(buf), "%s = %.17g\n", k, v);
    out += buf;
  };
  auto integer = [&](const char* k, int v) {
    std::snprintf(buf, sizeof(buf), "%s = %d\n", k, v);
    out += buf;
  };
  integer("n_superpixels", c.n_superpixels);
  real("compactness", c.compactness);
  real("alpha", c.alpha);
  real("beta", c.beta);
  real("gamma", c.gamma);
  real("delta", c.delta);
  real("sigma_d", c.sigma_d);
  real("sigma_p", c.sigma_p);
  real("sigma_i", c.sigma_i);
  real("solver_tol", c.solver_tol);
  integer("solver_max_iter", c.solver_max_iter);
  real("depth_cap", c.depth_cap);
  real("subsample_fraction", c.subsample_fraction);
  integer("normal_k", c.normal_k);
  out += c.solver == SolverMethod::kCgs ? "solver = cgs\n" : "solver = cg\n";
  out += c.preconditioner == Preconditioner::kNone ? "preconditioner = none\n"
                                                   : "preconditioner = jacobi\n";
  return out;
}

}  // namespace crfdepth
