#include "doctest.h"

#include "cxr/error.hpp"
#include "cxr/hashing.hpp"
#include "cxr/imageproc.hpp"

#include <array>
#include <cmath>
#include <numbers>

using namespace cxr;

namespace {

ImageTensor random_image(int h, int w, std::uint64_t seed) {
  SplitMix64 rng(seed);
  ImageTensor img(h, w);
  for (auto& v : img.data()) v = static_cast<float>(rng.uniform());
  return img;
}

using Mat3 = std::array<std::array<double, 3>, 3>;

Mat3 mul(const Mat3& a, const Mat3& b) {
  Mat3 r{};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) r[i][j] += a[i][k] * b[k][j];
  return r;
}

/// Cofactor inverse of a homogeneous 3x3 matrix.
Mat3 inv(const Mat3& m) {
  const double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                     m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                     m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
  Mat3 r{};
  r[0][0] = (m[1][1] * m[2][2] - m[1][2] * m[2][1]) / det;
  r[0][1] = (m[0][2] * m[2][1] - m[0][1] * m[2][2]) / det;
  r[0][2] = (m[0][1] * m[1][2] - m[0][2] * m[1][1]) / det;
  r[1][0] = (m[1][2] * m[2][0] - m[1][0] * m[2][2]) / det;
  r[1][1] = (m[0][0] * m[2][2] - m[0][2] * m[2][0]) / det;
  r[1][2] = (m[0][2] * m[1][0] - m[0][0] * m[1][2]) / det;
  r[2][0] = (m[1][0] * m[2][1] - m[1][1] * m[2][0]) / det;
  r[2][1] = (m[0][1] * m[2][0] - m[0][0] * m[2][1]) / det;
  r[2][2] = (m[0][0] * m[1][1] - m[0][1] * m[1][0]) / det;
  return r;
}

/// Oracle source->output matrix: center, flip, rotate, shear, uncenter.
Mat3 oracle_forward(const AugmentDraw& d, int w, int h) {
  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double t = d.rotation_deg * std::numbers::pi / 180.0;
  const Mat3 to_c{{{1, 0, -cx}, {0, 1, -cy}, {0, 0, 1}}};
  const Mat3 from_c{{{1, 0, cx}, {0, 1, cy}, {0, 0, 1}}};
  const Mat3 flip{{{d.flip_x ? -1.0 : 1.0, 0, 0}, {0, d.flip_y ? -1.0 : 1.0, 0}, {0, 0, 1}}};
  const Mat3 rot{{{std::cos(t), -std::sin(t), 0}, {std::sin(t), std::cos(t), 0}, {0, 0, 1}}};
  const Mat3 shear{{{1, d.shear_x, 0}, {d.shear_y, 1, 0}, {0, 0, 1}}};
  return mul(from_c, mul(shear, mul(rot, mul(flip, to_c))));
}

/// Zero-padded bilinear sample, written independently of warp_affine.
double oracle_sample(const ImageTensor& img, double x, double y, int c) {
  auto px = [&](int yy, int xx) -> double {
    if (xx < 0 || yy < 0 || xx >= img.width() || yy >= img.height()) return 0.0;
    return img.at(yy, xx, c);
  };
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  return px(y0, x0) * (1 - fx) * (1 - fy) + px(y0, x0 + 1) * fx * (1 - fy) + px(y0 + 1, x0) * (1 - fx) * fy +
         px(y0 + 1, x0 + 1) * fx * fy;
}

}  // namespace

TEST_CASE("decode_resize shape contract") {
  const auto png = encode_png(random_image(448, 448, 1));
  const auto img = decode_resize(png, 224);
  CHECK(img.height() == 224);
  CHECK(img.width() == 224);
  CHECK(img.channels() == 3);
  CHECK(img.size() == 224u * 224u * 3u);
  CHECK(img.all_finite());
}

TEST_CASE("uniform mid-gray stays mid-gray after resize") {
  for (int side : {17, 100, 333}) {
    ImageTensor gray(side, side + 5, 128.0f / 255.0f);
    const auto img = decode_resize(encode_png(gray, true), 224);
    for (float v : img.data()) REQUIRE(std::abs(v - 0.5f) <= 1.0f / 255.0f);
  }
}

TEST_CASE("2x2 checkerboard upscaled to 4x4 matches the bilinear table") {
  // Source taps at pixel-centre aligned coordinates {0, .25, .75, 1} in
  // both axes; v(sy,sx) = (1-sy)(1-sx) + sy*sx.
  const double expected[4][4] = {{1.0, 0.75, 0.25, 0.0},
                                 {0.75, 0.625, 0.375, 0.25},
                                 {0.25, 0.375, 0.625, 0.75},
                                 {0.0, 0.25, 0.75, 1.0}};
  ImageTensor board(2, 2);
  for (int c = 0; c < 3; ++c) {
    board.at(0, 0, c) = 1.0f;
    board.at(1, 1, c) = 1.0f;
  }
  const auto up = resize_bilinear(board, 4, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x)
      for (int c = 0; c < 3; ++c) CHECK(up.at(y, x, c) == doctest::Approx(expected[y][x]).epsilon(1e-7));

  // Same result through the PNG path.
  const auto via_png = decode_resize(encode_png(board, true), 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(via_png.at(y, x, 0) == doctest::Approx(expected[y][x]).epsilon(1e-7));
}

TEST_CASE("decoder handles JPEG, grayscale and RGBA inputs") {
  const auto jpg = decode_image(read_file_bytes(CXR_FIXTURES "/solid_40x30.jpg"));
  CHECK(jpg.width() == 40);
  CHECK(jpg.height() == 30);
  CHECK(jpg.at(10, 10, 0) == doctest::Approx(200.0 / 255).epsilon(0.02));
  CHECK(jpg.at(10, 10, 1) == doctest::Approx(100.0 / 255).epsilon(0.03));
  CHECK(jpg.at(10, 10, 2) == doctest::Approx(50.0 / 255).epsilon(0.05));

  const auto gray = decode_image(read_file_bytes(CXR_FIXTURES "/gray_20.png"));
  CHECK(gray.at(3, 4, 0) == gray.at(3, 4, 2));
  CHECK(gray.at(3, 4, 1) == doctest::Approx(128.0 / 255));

  const auto rgba = decode_image(read_file_bytes(CXR_FIXTURES "/rgba_8.png"));
  CHECK(rgba.at(0, 0, 0) == 1.0f);
  CHECK(rgba.at(0, 0, 1) == 0.0f);
}

TEST_CASE("decode errors") {
  const std::vector<std::uint8_t> junk{1, 2, 3, 4, 5, 6, 7, 8};
  CHECK_THROWS_AS(decode_image(junk), Error);
  CHECK_THROWS_AS(decode_image(std::span<const std::uint8_t>{}), Error);
  CHECK_THROWS_AS(decode_resize(encode_png(ImageTensor(4, 4, 0.5f)), 0), Error);
}

TEST_CASE("augment: disabled config is the identity") {
  const auto img = random_image(32, 24, 5);
  AugmentConfig cfg;
  cfg.enabled = false;
  SplitMix64 rng(1);
  CHECK(augment(img, cfg, rng) == img);
}

TEST_CASE("augment: zero probabilities and ranges is the identity") {
  const auto img = random_image(31, 40, 6);
  AugmentConfig cfg{true, 0.0, 0.0, 0.0, 0.0};
  SplitMix64 rng(2);
  CHECK(augment(img, cfg, rng) == img);
}

TEST_CASE("augment: same seed gives bit-identical output") {
  const auto img = random_image(64, 64, 7);
  AugmentConfig cfg;  // default ranges
  SplitMix64 a(77), b(77);
  const auto out_a = augment(img, cfg, a);
  const auto out_b = augment(img, cfg, b);
  CHECK(out_a == out_b);
  CHECK_FALSE(out_a == img);
}

TEST_CASE("augment: horizontal flip is an involution") {
  const auto img = random_image(20, 33, 8);
  AugmentConfig cfg{true, 1.0, 0.0, 0.0, 0.0};
  SplitMix64 rng(3);
  const auto once = augment(img, cfg, rng);
  CHECK(once.at(4, 0, 1) == img.at(4, 32, 1));
  CHECK(augment(once, cfg, rng) == img);

  AugmentConfig vflip{true, 0.0, 1.0, 0.0, 0.0};
  const auto v = augment(img, vflip, rng);
  CHECK(v.at(0, 5, 2) == img.at(19, 5, 2));
  CHECK(augment(v, vflip, rng) == img);
}

TEST_CASE("rotation +10 degrees: pre-images match the matrix oracle") {
  const int w = 50, h = 40;
  const auto img = random_image(h, w, 9);
  AugmentDraw d;
  d.rotation_deg = 10.0;
  const auto inverse = forward_transform(d, w, h).inverse();
  const Mat3 oracle_inv = inv(oracle_forward(d, w, h));

  // Closed form for a pure rotation about the centre.
  const double t = 10.0 * std::numbers::pi / 180.0, cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const auto out = apply_augment(img, d);
  for (int y = 0; y < h; y += 3) {
    for (int x = 0; x < w; x += 3) {
      const auto [sx, sy] = inverse.apply(x, y);
      CHECK(std::abs(sx - (oracle_inv[0][0] * x + oracle_inv[0][1] * y + oracle_inv[0][2])) < 1e-6);
      CHECK(std::abs(sy - (oracle_inv[1][0] * x + oracle_inv[1][1] * y + oracle_inv[1][2])) < 1e-6);
      CHECK(std::abs(sx - (cx + std::cos(t) * (x - cx) + std::sin(t) * (y - cy))) < 1e-6);
      CHECK(std::abs(sy - (cy - std::sin(t) * (x - cx) + std::cos(t) * (y - cy))) < 1e-6);
      for (int c = 0; c < 3; ++c) CHECK(out.at(y, x, c) == doctest::Approx(oracle_sample(img, sx, sy, c)).epsilon(1e-6));
    }
  }
}

TEST_CASE("composite draws match the composed matrix oracle") {
  SplitMix64 rng(10);
  AugmentConfig cfg;
  for (int trial = 0; trial < 50; ++trial) {
    const auto d = draw_augment(cfg, rng);
    CHECK(std::abs(d.rotation_deg) <= 10.0);
    CHECK(std::abs(d.shear_x) <= 0.3);
    CHECK(std::abs(d.shear_y) <= 0.3);
    const auto fwd = forward_transform(d, 64, 48);
    const auto o = oracle_forward(d, 64, 48);
    for (double x : {0.0, 13.0, 63.0})
      for (double y : {0.0, 20.0, 47.0}) {
        const auto p = fwd.apply(x, y);
        CHECK(std::abs(p[0] - (o[0][0] * x + o[0][1] * y + o[0][2])) < 1e-9);
        CHECK(std::abs(p[1] - (o[1][0] * x + o[1][1] * y + o[1][2])) < 1e-9);
        const auto back = fwd.inverse().apply(p[0], p[1]);
        CHECK(back[0] == doctest::Approx(x).epsilon(1e-9));
        CHECK(back[1] == doctest::Approx(y).epsilon(1e-9));
      }
  }
}

TEST_CASE("property: augmentation preserves shape and finiteness") {
  SplitMix64 rng(11);
  for (int trial = 0; trial < 30; ++trial) {
    const int h = 8 + static_cast<int>(rng.below(40)), w = 8 + static_cast<int>(rng.below(40));
    const auto img = random_image(h, w, rng.next());
    AugmentConfig cfg{true, rng.uniform(), rng.uniform(), rng.uniform(0, 45), rng.uniform(0, 1)};
    const auto out = augment(img, cfg, rng);
    CHECK(out.height() == h);
    CHECK(out.width() == w);
    CHECK(out.all_finite());
    for (float v : out.data()) REQUIRE((v >= 0.0f && v <= 1.0f + 1e-6f));
  }
}

TEST_CASE("augment config validation") {
  SplitMix64 rng(0);
  const ImageTensor img(4, 4, 0.5f);
  CHECK_THROWS_AS(augment(img, AugmentConfig{true, 1.5, 0, 0, 0}, rng), Error);
  CHECK_THROWS_AS(augment(img, AugmentConfig{true, 0.5, -0.1, 0, 0}, rng), Error);
  CHECK_THROWS_AS(augment(img, AugmentConfig{true, 0.5, 0.5, -1, 0}, rng), Error);
  CHECK_THROWS_AS(augment(img, AugmentConfig{true, 0.5, 0.5, 0, -0.3}, rng), Error);
}

TEST_CASE("normalize") {
  const auto img = random_image(9, 7, 12);
  CHECK(normalize(img, {0, 0, 0}, {1, 1, 1}) == img);

  const ImageTensor half(5, 5, 0.5f);
  const auto zeroed = normalize(half, {0.5f, 0.5f, 0.5f}, {0.5f, 0.5f, 0.5f});
  for (float v : zeroed.data()) CHECK(v == 0.0f);

  const ChannelStats mean{0.485f, 0.456f, 0.406f}, sd{0.229f, 0.224f, 0.225f};
  const auto back = denormalize(normalize(img, mean, sd), mean, sd);
  for (std::size_t i = 0; i < img.size(); ++i) CHECK(std::abs(back.data()[i] - img.data()[i]) <= 1e-6);

  CHECK_THROWS_AS(normalize(img, mean, {0.2f, 0.0f, 0.2f}), Error);
}
