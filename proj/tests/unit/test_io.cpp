#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <random>

#include "crfdepth/io.hpp"

using namespace crfdepth;

namespace {

const char* kIdentityCalib =
    "P_rect_02: 1 0 0 0 0 1 0 0 0 0 1 0\n"
    "R_rect_00: 1 0 0 0 1 0 0 0 1\n"
    "R: 1 0 0 0 1 0 0 0 1\n"
    "T: 0 0 0\n";

// Values as printed in a KITTI raw drive's calib_cam_to_cam.txt and
// calib_velo_to_cam.txt (2011_09_26).
const char* kKittiCamToCam =
    "calib_time: 09-Jan-2012 13:57:47\n"
    "corner_dist: 9.950000e-02\n"
    "R_rect_00: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 "
    "7.402527e-03 4.351614e-03 9.999631e-01\n"
    "P_rect_00: 7.215377e+02 0.000000e+00 6.095593e+02 0.000000e+00 0.000000e+00 7.215377e+02 "
    "1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00\n"
    "P_rect_02: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 "
    "1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03\n";
const char* kKittiVeloToCam =
    "calib_time: 15-Mar-2012 11:37:16\n"
    "R: 7.533745e-03 -9.999714e-01 -6.166020e-04 1.480249e-02 7.280733e-04 -9.998902e-01 "
    "9.998621e-01 7.523790e-03 1.480755e-02\n"
    "T: -4.069766e-03 -7.631618e-02 -2.717806e-01\n"
    "delta_f: 0.000000e+00 0.000000e+00\n"
    "delta_c: 0.000000e+00 0.000000e+00\n";

std::vector<std::uint8_t> float_bytes(std::initializer_list<float> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  std::size_t k = 0;
  for (float f : values) {
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    for (int b = 0; b < 4; ++b) out[k++] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return out;
}

}  // namespace

TEST(Calibration, IdentityParsesToIdentityMatrices) {
  const auto c = parse_calibration(kIdentityCalib);
  EXPECT_TRUE(c.p_rect.isApprox(Eigen::Matrix<double, 3, 4>::Identity()));
  EXPECT_TRUE(c.r_rect.isIdentity());
  EXPECT_TRUE(c.t_velo_cam.isIdentity());
}

TEST(Calibration, KittiFilesConcatenated) {
  const auto c = parse_calibration(std::string(kKittiCamToCam) + kKittiVeloToCam);
  EXPECT_DOUBLE_EQ(c.fu(), 721.5377);
  EXPECT_DOUBLE_EQ(c.cu(), 609.5593);
  EXPECT_DOUBLE_EQ(c.cv(), 172.854);
  EXPECT_DOUBLE_EQ(c.p_rect(0, 3), 44.85728);
  EXPECT_DOUBLE_EQ(c.r_rect(0, 1), 9.837760e-03);
  EXPECT_DOUBLE_EQ(c.r_rect(3, 3), 1.0);
  EXPECT_DOUBLE_EQ(c.r_rect(0, 3), 0.0);
  EXPECT_DOUBLE_EQ(c.t_velo_cam(1, 3), -7.631618e-02);
  EXPECT_DOUBLE_EQ(c.t_velo_cam(2, 0), 9.998621e-01);
  EXPECT_DOUBLE_EQ(c.t_velo_cam(3, 3), 1.0);
}

TEST(Calibration, ProjectionKeySelectsCamera) {
  const auto c = parse_calibration(std::string(kKittiCamToCam) + kKittiVeloToCam, "P_rect_00");
  EXPECT_DOUBLE_EQ(c.p_rect(0, 3), 0.0);
}

TEST(Calibration, MissingRectRotationNamesTheKey) {
  const std::string text = "P_rect_02: 1 0 0 0 0 1 0 0 0 0 1 0\nR: 1 0 0 0 1 0 0 0 1\nT: 0 0 0\n";
  try {
    parse_calibration(text);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find("R_rect_00"), std::string::npos);
    EXPECT_EQ(e.module(), "io");
  }
}

TEST(Calibration, WrongValueCountReportsLine) {
  const std::string text = "P_rect_02: 1 0 0 0 0 1 0 0 0 0 1 0\nR_rect_00: 1 0 0 0 1 0 0 0\nR: 1 0 0 0 1 0 0 0 1\nT: 0 0 0\n";
  try {
    parse_calibration(text);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2);
  }
}

TEST(Calibration, NonNumericTokenIsParseError) {
  const std::string text = "P_rect_02: 1 0 0 0 0 1 0 0 0 0 1 0\nR_rect_00: 1 0 0 0 1 0 0 0 1\nR: 1 0 0 0 1 0 0 0 1\nT: 0 zero 0\n";
  EXPECT_THROW(parse_calibration(text), ParseError);
}

TEST(Calibration, NonOrthonormalRotationRejected) {
  const std::string text = "P_rect_02: 1 0 0 0 0 1 0 0 0 0 1 0\nR_rect_00: 1 0 0 0 1 0 0 0 1.01\nR: 1 0 0 0 1 0 0 0 1\nT: 0 0 0\n";
  EXPECT_THROW(parse_calibration(text), ValidationError);
}

TEST(Calibration, WriteParseRoundTrip) {
  const auto c = parse_calibration(std::string(kKittiCamToCam) + kKittiVeloToCam);
  const auto back = parse_calibration(write_calibration(c));
  EXPECT_EQ(back.p_rect, c.p_rect);
  EXPECT_EQ(back.r_rect, c.r_rect);
  EXPECT_EQ(back.t_velo_cam, c.t_velo_cam);
}

TEST(PointCloud, SixteenBytesIsOnePoint) {
  const auto cloud = read_point_cloud(float_bytes({1.5f, -2.0f, 3.25f, 0.5f}));
  ASSERT_EQ(cloud.size(), 1u);
  EXPECT_EQ(cloud.points[0], Eigen::Vector3d(1.5, -2.0, 3.25));
  EXPECT_EQ(cloud.reflectance[0], 0.5);
}

TEST(PointCloud, EmptyFileIsEmptyCloud) {
  EXPECT_TRUE(read_point_cloud({}).empty());
}

TEST(PointCloud, LengthNotMultipleOfSixteenRejected) {
  const std::vector<std::uint8_t> bytes(17, 0);
  EXPECT_THROW(read_point_cloud(bytes), FormatError);
}

TEST(PointCloud, RoundTripPreservesFloat32Values) {
  std::mt19937 gen(3);
  std::uniform_real_distribution<float> u(-80.f, 80.f);
  RawPointCloud cloud;
  for (int i = 0; i < 100; ++i) {
    cloud.points.emplace_back(u(gen), u(gen), u(gen));
    cloud.reflectance.push_back(static_cast<float>(i) / 100.f);
  }
  const auto bytes = write_point_cloud(cloud);
  EXPECT_EQ(bytes.size(), 1600u);
  const auto back = read_point_cloud(bytes);
  ASSERT_EQ(back.size(), cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    EXPECT_EQ(back.points[i], cloud.points[i]);
    EXPECT_EQ(back.reflectance[i], cloud.reflectance[i]);
  }
}

TEST(DepthPng, SampleScaleIs256PerMeter) {
  const std::vector<std::uint16_t> samples{0, 25600, 256, 1};
  const auto img = read_depth_png(png::encode(2, 2, 1, 16, samples));
  EXPECT_FALSE(img.valid[0]);
  EXPECT_EQ(img.depth[0], 0.0);
  EXPECT_DOUBLE_EQ(img.depth[1], 100.0);
  EXPECT_DOUBLE_EQ(img.depth[2], 1.0);
  EXPECT_DOUBLE_EQ(img.depth[3], 1.0 / 256.0);
}

TEST(DepthPng, EightBitRejected) {
  const std::vector<std::uint16_t> samples{1, 2, 3, 4};
  EXPECT_THROW(read_depth_png(png::encode(2, 2, 1, 8, samples)), FormatError);
}

TEST(DepthPng, WriteReadWriteIsByteIdentical) {
  DepthImage img(7, 5);
  for (std::size_t i = 0; i < img.size(); ++i) {
    if (i % 3 != 0) img.set(i, 0.37 * static_cast<double>(i) + 0.01);
  }
  const auto bytes = write_depth_png(img);
  const auto back = read_depth_png(bytes);
  EXPECT_EQ(write_depth_png(back), bytes);
  for (std::size_t i = 0; i < img.size(); ++i) {
    EXPECT_EQ(back.valid[i], img.valid[i]);
    EXPECT_NEAR(back.depth[i], img.depth[i], 0.5 / 256.0 + 1e-12);
  }
}

TEST(RgbPng, RoundTrip) {
  RgbImage img(4, 3);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 7);
  const auto back = read_rgb_png(write_rgb_png(img));
  EXPECT_EQ(back.width, 4);
  EXPECT_EQ(back.height, 3);
  EXPECT_EQ(back.pixels, img.pixels);
}

TEST(Config, EmptyTextGivesDefaults) {
  const auto c = load_config("");
  EXPECT_EQ(c, RunConfig{});
  EXPECT_EQ(c.n_superpixels, 5500);
  EXPECT_EQ(c.sigma_d, 30.0);
  EXPECT_EQ(c.depth_cap, 80.0);
  EXPECT_EQ(c.solver_tol, 1e-8);
  EXPECT_EQ(c.solver_max_iter, 10000);
}

TEST(Config, AlphaZeroIsValidationError) {
  EXPECT_THROW(load_config("alpha = 0\n"), ValidationError);
}

TEST(Config, OutOfRangeWeightIsValidationError) {
  EXPECT_THROW(load_config("gamma = 1.5\n"), ValidationError);
  EXPECT_THROW(load_config("beta = -0.1\n"), ValidationError);
}

TEST(Config, UnknownKeyRejected) {
  EXPECT_THROW(load_config("gama = 0.5\n"), FormatError);
}

TEST(Config, CommentsAndWhitespace) {
  const auto c = load_config("# header\n  beta=0.25   # trailing\n\nn_superpixels = 800\n");
  EXPECT_EQ(c.beta, 0.25);
  EXPECT_EQ(c.n_superpixels, 800);
}

TEST(Config, RandomConfigsRoundTrip) {
  std::mt19937_64 gen(11);
  std::uniform_real_distribution<double> w(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    RunConfig c;
    c.n_superpixels = 4 + static_cast<int>(gen() % 10000);
    c.compactness = 0.5 + 40 * w(gen);
    c.alpha = 0.01 + 0.99 * w(gen);
    c.beta = w(gen);
    c.gamma = w(gen);
    c.delta = w(gen);
    c.sigma_d = 1 + 100 * w(gen);
    c.sigma_p = 0.1 + 5 * w(gen);
    c.sigma_i = 0.1 + 3 * w(gen);
    c.solver_tol = std::pow(10.0, -12 + 8 * w(gen));
    c.solver_max_iter = 1 + static_cast<int>(gen() % 50000);
    c.depth_cap = 1 + 200 * w(gen);
    c.subsample_fraction = 0.01 + 0.99 * w(gen);
    c.solver = trial % 2 ? SolverMethod::kCg : SolverMethod::kCgs;
    c.preconditioner = trial % 3 ? Preconditioner::kNone : Preconditioner::kJacobi;
    EXPECT_EQ(load_config(write_config(c)), c) << write_config(c);
  }
}

TEST(Files, AtomicWriteLeavesNoTemporary) {
  const auto dir = std::filesystem::temp_directory_path() / "crfdepth_io_atomic";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  write_file_atomic(dir / "a.txt", std::string_view("hello\n"));
  EXPECT_EQ(read_text_file(dir / "a.txt"), "hello\n");
  std::size_t n = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++n;
  EXPECT_EQ(n, 1u);
  std::filesystem::remove_all(dir);
}
