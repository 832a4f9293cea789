#include "cxr/imageproc.hpp"
#include "cxr/error.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>

namespace cxr {

ImageTensor::ImageTensor(int height, int width, float fill)
    : height_(height), width_(width),
      data_(static_cast<std::size_t>(std::max(height, 0)) * std::max(width, 0) * kChannels, fill) {
  if (height < 0 || width < 0) throw Error(ErrorKind::InvalidArgument, "negative image dimension");
}

ImageTensor::ImageTensor(int height, int width, std::vector<float> data)
    : height_(height), width_(width), data_(std::move(data)) {
  if (height < 0 || width < 0 ||
      data_.size() != static_cast<std::size_t>(height) * width * kChannels)
    throw Error(ErrorKind::ShapeMismatch, "image data length does not match height*width*3");
}

bool ImageTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

ImageTensor decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw Error(ErrorKind::Decode, "empty image buffer");
  const cv::Mat buf(1, static_cast<int>(bytes.size()), CV_8U, const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat m = cv::imdecode(buf, cv::IMREAD_UNCHANGED);
  if (m.empty()) throw Error(ErrorKind::Decode, "bytes are not a decodable PNG/JPEG image");
  if (m.rows == 0 || m.cols == 0) throw Error(ErrorKind::Decode, "zero-pixel image");

  double scale = 1.0;
  switch (m.depth()) {
    case CV_8U: scale = 1.0 / 255.0; break;
    case CV_16U: scale = 1.0 / 65535.0; break;
    default: throw Error(ErrorKind::Decode, "unsupported pixel depth");
  }

  const int ch = m.channels();
  if (ch != 1 && ch != 3 && ch != 4) throw Error(ErrorKind::Decode, "unsupported channel count");

  cv::Mat f;
  m.convertTo(f, CV_MAKETYPE(CV_32F, ch), scale);

  ImageTensor out(f.rows, f.cols);
  for (int y = 0; y < f.rows; ++y) {
    const float* row = f.ptr<float>(y);
    for (int x = 0; x < f.cols; ++x) {
      const float* px = row + static_cast<std::ptrdiff_t>(x) * ch;
      if (ch == 1) {
        out.at(y, x, 0) = out.at(y, x, 1) = out.at(y, x, 2) = px[0];
      } else {
        // OpenCV decodes to BGR(A).
        out.at(y, x, 0) = px[2];
        out.at(y, x, 1) = px[1];
        out.at(y, x, 2) = px[0];
      }
    }
  }
  return out;
}

ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width) {
  if (out_height <= 0 || out_width <= 0) throw Error(ErrorKind::InvalidArgument, "resize target must be positive");
  if (img.empty()) throw Error(ErrorKind::InvalidArgument, "cannot resize an empty image");

  const double sy = static_cast<double>(img.height()) / out_height;
  const double sx = static_cast<double>(img.width()) / out_width;

  struct Tap {
    int i0, i1;
    double w1;
  };
  auto taps = [](int out_n, int in_n, double scale) {
    std::vector<Tap> t(out_n);
    for (int o = 0; o < out_n; ++o) {
      double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in_n - 1));
      const int i0 = static_cast<int>(std::floor(s));
      const int i1 = std::min(i0 + 1, in_n - 1);
      t[o] = {i0, i1, s - i0};
    }
    return t;
  };
  const auto ty = taps(out_height, img.height(), sy);
  const auto tx = taps(out_width, img.width(), sx);

  ImageTensor out(out_height, out_width);
  for (int y = 0; y < out_height; ++y) {
    const auto& vy = ty[y];
    for (int x = 0; x < out_width; ++x) {
      const auto& vx = tx[x];
      for (int c = 0; c < ImageTensor::kChannels; ++c) {
        const double top = img.at(vy.i0, vx.i0, c) * (1.0 - vx.w1) + img.at(vy.i0, vx.i1, c) * vx.w1;
        const double bot = img.at(vy.i1, vx.i0, c) * (1.0 - vx.w1) + img.at(vy.i1, vx.i1, c) * vx.w1;
        out.at(y, x, c) = static_cast<float>(top * (1.0 - vy.w1) + bot * vy.w1);
      }
    }
  }
  return out;
}

ImageTensor decode_resize(std::span<const std::uint8_t> bytes, int side) {
  if (side <= 0) throw Error(ErrorKind::InvalidArgument, "side must be positive");
  auto img = decode_image(bytes);
  if (img.height() == side && img.width() == side) return img;
  return resize_bilinear(img, side, side);
}

std::vector<std::uint8_t> encode_png(const ImageTensor& img, bool grayscale) {
  if (img.empty()) throw Error(ErrorKind::InvalidArgument, "cannot encode an empty image");
  const int ch = grayscale ? 1 : 3;
  cv::Mat m(img.height(), img.width(), CV_MAKETYPE(CV_8U, ch));
  for (int y = 0; y < img.height(); ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < img.width(); ++x) {
      for (int c = 0; c < ch; ++c) {
        const int src_c = grayscale ? 0 : 2 - c;  // RGB -> BGR
        const float v = std::clamp(img.at(y, x, src_c), 0.0f, 1.0f);
        row[x * ch + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
      }
    }
  }
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", m, out)) throw Error(ErrorKind::Io, "PNG encoding failed");
  return out;
}

Affine2x3 Affine2x3::after(const Affine2x3& first) const {
  return {a * first.a + b * first.d, a * first.b + b * first.e, a * first.c + b * first.f + c,
          d * first.a + e * first.d, d * first.b + e * first.e, d * first.c + e * first.f + f};
}

Affine2x3 Affine2x3::inverse() const {
  const double det = a * e - b * d;
  if (det == 0.0 || !std::isfinite(det)) throw Error(ErrorKind::InvalidArgument, "singular affine map");
  const double ia = e / det, ib = -b / det, id = -d / det, ie = a / det;
  return {ia, ib, -(ia * c + ib * f), id, ie, -(id * c + ie * f)};
}

void AugmentConfig::validate() const {
  auto prob_ok = [](double p) { return std::isfinite(p) && p >= 0.0 && p <= 1.0; };
  auto range_ok = [](double r) { return std::isfinite(r) && r >= 0.0; };
  if (!prob_ok(flip_x_prob) || !prob_ok(flip_y_prob))
    throw Error(ErrorKind::InvalidArgument, "augment flip probabilities must lie in [0,1]");
  if (!range_ok(rotation_range_deg) || !range_ok(shear_range))
    throw Error(ErrorKind::InvalidArgument, "augment ranges must be finite and >= 0");
}

AugmentDraw draw_augment(const AugmentConfig& cfg, SplitMix64& rng) {
  AugmentDraw d;
  d.flip_x = rng.bernoulli(cfg.flip_x_prob);
  d.flip_y = rng.bernoulli(cfg.flip_y_prob);
  d.rotation_deg = rng.uniform(-cfg.rotation_range_deg, cfg.rotation_range_deg);
  d.shear_x = rng.uniform(-cfg.shear_range, cfg.shear_range);
  d.shear_y = rng.uniform(-cfg.shear_range, cfg.shear_range);
  return d;
}

Affine2x3 forward_transform(const AugmentDraw& draw, int width, int height) {
  const double cx = (width - 1) / 2.0;
  const double cy = (height - 1) / 2.0;
  const Affine2x3 to_center{1, 0, -cx, 0, 1, -cy};
  const Affine2x3 from_center{1, 0, cx, 0, 1, cy};
  const Affine2x3 flip{draw.flip_x ? -1.0 : 1.0, 0, 0, 0, draw.flip_y ? -1.0 : 1.0, 0};
  const double t = draw.rotation_deg * std::numbers::pi / 180.0;
  const Affine2x3 rot{std::cos(t), -std::sin(t), 0, std::sin(t), std::cos(t), 0};
  const Affine2x3 shear{1, draw.shear_x, 0, draw.shear_y, 1, 0};
  return from_center.after(shear.after(rot.after(flip.after(to_center))));
}

ImageTensor warp_affine(const ImageTensor& img, const Affine2x3& inverse_map) {
  const int h = img.height(), w = img.width();
  ImageTensor out(h, w);
  auto tap = [&](int y, int x, int c) -> double {
    return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : img.at(y, x, c);
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto [sx, sy] = inverse_map.apply(x, y);
      if (!(sx > -1.0 && sy > -1.0 && sx < w && sy < h)) continue;
      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
      const double wx = sx - fx0, wy = sy - fy0;
      for (int c = 0; c < ImageTensor::kChannels; ++c) {
        double v;
        if (wx == 0.0 && wy == 0.0) {
          v = tap(y0, x0, c);
        } else {
          const double top = tap(y0, x0, c) * (1.0 - wx) + tap(y0, x0 + 1, c) * wx;
          const double bot = tap(y0 + 1, x0, c) * (1.0 - wx) + tap(y0 + 1, x0 + 1, c) * wx;
          v = top * (1.0 - wy) + bot * wy;
        }
        out.at(y, x, c) = static_cast<float>(v);
      }
    }
  }
  return out;
}

ImageTensor apply_augment(const ImageTensor& img, const AugmentDraw& draw) {
  return warp_affine(img, forward_transform(draw, img.width(), img.height()).inverse());
}

ImageTensor augment(const ImageTensor& img, const AugmentConfig& cfg, SplitMix64& rng) {
  cfg.validate();
  if (!cfg.enabled) return img;
  return apply_augment(img, draw_augment(cfg, rng));
}

namespace {
void check_std(const ChannelStats& std) {
  for (float s : std)
    if (!(s > 0.0f) || !std::isfinite(s)) throw Error(ErrorKind::InvalidArgument, "normalization std must be > 0");
}
}  // namespace

ImageTensor normalize(const ImageTensor& img, const ChannelStats& mean, const ChannelStats& std) {
  check_std(std);
  ImageTensor out = img;
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = i % ImageTensor::kChannels;
    d[i] = (d[i] - mean[c]) / std[c];
  }
  return out;
}

ImageTensor denormalize(const ImageTensor& img, const ChannelStats& mean, const ChannelStats& std) {
  check_std(std);
  ImageTensor out = img;
  auto d = out.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto c = i % ImageTensor::kChannels;
    d[i] = d[i] * std[c] + mean[c];
  }
  return out;
}

}  // namespace cxr
