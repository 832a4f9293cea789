#pragma once

#include "cxr/rng.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace cxr {

/// Row-major HWC image with three channels. Values are in [0,1] until
/// normalize() is applied.
class ImageTensor {
 public:
  static constexpr int kChannels = 3;

  ImageTensor() = default;
  ImageTensor(int height, int width, float fill = 0.0f);
  ImageTensor(int height, int width, std::vector<float> data);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return kChannels; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float& at(int y, int x, int c) { return data_[index(y, x, c)]; }
  float at(int y, int x, int c) const { return data_[index(y, x, c)]; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  bool all_finite() const;
  bool operator==(const ImageTensor&) const = default;

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * kChannels + c;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// Decodes PNG or JPEG bytes at native resolution. Grayscale is replicated
/// to three channels; alpha is dropped; 16-bit input is scaled by 1/65535.
ImageTensor decode_image(std::span<const std::uint8_t> bytes);

/// Bilinear resampling with pixel-center alignment:
/// src = (dst + 0.5) * in/out - 0.5, clamped to the source edge.
ImageTensor resize_bilinear(const ImageTensor& img, int out_height, int out_width);

/// decode_image followed by a square bilinear resize to `side`.
ImageTensor decode_resize(std::span<const std::uint8_t> bytes, int side);

/// 8-bit PNG. When `grayscale` is set only channel 0 is written.
std::vector<std::uint8_t> encode_png(const ImageTensor& img, bool grayscale = false);

/// x' = a*x + b*y + c,  y' = d*x + e*y + f   (pixel-index coordinates,
/// x to the right, y down).
struct Affine2x3 {
  double a = 1, b = 0, c = 0;
  double d = 0, e = 1, f = 0;

  std::array<double, 2> apply(double x, double y) const { return {a * x + b * y + c, d * x + e * y + f}; }
  /// (*this) after `first`.
  Affine2x3 after(const Affine2x3& first) const;
  Affine2x3 inverse() const;
};

struct AugmentConfig {
  bool enabled = true;
  double flip_x_prob = 0.5;
  double flip_y_prob = 0.5;
  double rotation_range_deg = 10.0;
  double shear_range = 0.3;

  /// Throws Error{InvalidArgument} if a probability is outside [0,1] or a
  /// range is negative or non-finite.
  void validate() const;
};

/// One concrete draw of the random augmentation parameters.
struct AugmentDraw {
  bool flip_x = false;  // mirror columns: x -> (W-1) - x
  bool flip_y = false;  // mirror rows:    y -> (H-1) - y
  double rotation_deg = 0.0;
  double shear_x = 0.0;  // x' = x + shear_x * y
  double shear_y = 0.0;  // y' = y + shear_y * x
};

/// Consumes exactly five values from `rng` regardless of the config, so
/// the stream position does not depend on the probabilities.
AugmentDraw draw_augment(const AugmentConfig& cfg, SplitMix64& rng);

/// Source-to-output map for a draw: flip x, flip y, rotate, shear, all
/// about the image center ((W-1)/2, (H-1)/2).
Affine2x3 forward_transform(const AugmentDraw& draw, int width, int height);

/// Resamples `img` so output(x,y) = img(inverse_map(x,y)), bilinear, with
/// zeros outside the source.
ImageTensor warp_affine(const ImageTensor& img, const Affine2x3& inverse_map);

ImageTensor apply_augment(const ImageTensor& img, const AugmentDraw& draw);

/// Draws and applies one augmentation. Returns the input unchanged when
/// cfg.enabled is false (no values are drawn in that case).
ImageTensor augment(const ImageTensor& img, const AugmentConfig& cfg, SplitMix64& rng);

using ChannelStats = std::array<float, 3>;

/// (value - mean[c]) / std[c]. Throws if any std <= 0.
ImageTensor normalize(const ImageTensor& img, const ChannelStats& mean, const ChannelStats& std);
ImageTensor denormalize(const ImageTensor& img, const ChannelStats& mean, const ChannelStats& std);

}  // namespace cxr
