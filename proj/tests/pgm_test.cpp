#include <gtest/gtest.h>

#include <cmath>
#include <string>

#include "cgan/pgm.hpp"
#include "pgm_support.hpp"

namespace cgan {
namespace {

using cgan::testing::read_pgm;

TEST(PgmGrid, TenByTenLayoutIs302Square) {
  GridLayout g;
  EXPECT_EQ(g.width(), 10u * 28u + 11u * 2u);
  EXPECT_EQ(g.height(), 302u);
  const auto img = read_pgm(encode_pgm_grid(Tensor<double>({100, 784}), g));
  EXPECT_EQ(img.width, 302u);
  EXPECT_EQ(img.height, 302u);
  EXPECT_EQ(img.maxval, 255u);
  EXPECT_EQ(img.pixels.size(), 302u * 302u);
}

TEST(PgmGrid, HeaderIsCanonical) {
  GridLayout g;
  g.cols = 3;
  const std::string bytes = encode_pgm_grid(Tensor<double>({30, 784}), g);
  EXPECT_EQ(bytes.substr(0, 14), "P5\n92 302\n255\n");
  EXPECT_EQ(bytes.size(), 14u + 92u * 302u);
}

TEST(PgmGrid, CellsLandInRowMajorOrderWithBlackGutters) {
  // Cell (r, c) filled with a value unique to it; gutters must stay 0.
  GridLayout g;
  g.cols = 4;
  Tensor<double> images({40, 784});
  for (std::size_t i = 0; i < 40; ++i) {
    for (std::size_t p = 0; p < 784; ++p) images(i, p) = static_cast<double>(i + 1) / 255.0;
  }
  const auto img = read_pgm(encode_pgm_grid(images, g));
  ASSERT_EQ(img.width, 4u * 30u + 2u);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      const bool gutter_x = x % 30 < 2, gutter_y = y % 30 < 2;
      const std::uint8_t v = img.at(x, y);
      if (gutter_x || gutter_y) {
        ASSERT_EQ(v, 0) << x << "," << y;
      } else {
        ASSERT_EQ(v, (y / 30) * 4 + (x / 30) + 1) << x << "," << y;
      }
    }
  }
}

TEST(PgmGrid, PixelsWithinACellFollowImageRowMajor) {
  GridLayout g;
  g.rows = 1;
  g.cols = 1;
  Tensor<double> images({1, 784});
  for (std::size_t p = 0; p < 784; ++p) images[p] = static_cast<double>(p % 256) / 255.0;
  const auto img = read_pgm(encode_pgm_grid(images, g));
  for (std::size_t y = 0; y < 28; ++y) {
    for (std::size_t x = 0; x < 28; ++x) EXPECT_EQ(img.at(2 + x, 2 + y), (y * 28 + x) % 256);
  }
}

TEST(PgmGrid, RoundsValueTimes255AndClamps) {
  GridLayout g;
  g.rows = 1;
  g.cols = 1;
  Tensor<double> images({1, 784});
  const double values[] = {0.0, 1.0, 0.5, 0.2, 0.7 / 255.0, 0.3 / 255.0, -0.4, 1.7};
  const int expect[] = {0, 255, 128, 51, 1, 0, 0, 255};
  for (std::size_t i = 0; i < 8; ++i) images[i] = values[i];
  const auto img = read_pgm(encode_pgm_grid(images, g));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_EQ(img.at(2 + i, 2), expect[i]) << "value " << values[i];
}

TEST(PgmGrid, RejectsWrongImageCount) {
  EXPECT_THROW(encode_pgm_grid(Tensor<double>({99, 784}), GridLayout{}), DimensionError);
  EXPECT_THROW(encode_pgm_grid(Tensor<double>({100, 783}), GridLayout{}), DimensionError);
}

TEST(ReadPgm, RejectsMalformedFiles) {
  EXPECT_THROW(read_pgm("P2\n1 1\n255\n\x01"), std::runtime_error);
  EXPECT_THROW(read_pgm("P5\n2 2\n255\n\x01"), std::runtime_error);
  EXPECT_THROW(read_pgm("P5\n1 1\n\n"), std::runtime_error);
}

TEST(MetricsSvg, OnePolylinePerSeriesAndFiniteCoordinates) {
  std::vector<std::map<std::string, double>> records;
  for (int s = 1; s <= 20; ++s) {
    std::map<std::string, double> r{{"step", s},        {"d_loss", 1.0 / s}, {"g_loss", s * 0.1},
                                    {"d_real", 0.6},    {"d_fake", 0.4}};
    if (s % 5 == 0) r["val_ll"] = r["best_ll"] = -100.0 + s;
    records.push_back(r);
  }
  const std::string svg = metrics_svg(records);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);
  std::size_t lines = 0;
  for (auto p = svg.find("<polyline"); p != std::string::npos; p = svg.find("<polyline", p + 1)) ++lines;
  EXPECT_EQ(lines, 6u);
  EXPECT_EQ(svg.find("nan"), std::string::npos);
  EXPECT_EQ(svg.find("inf"), std::string::npos);
}

}  // namespace
}  // namespace cgan
