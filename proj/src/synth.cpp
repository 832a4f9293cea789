#include "cxr/synth.hpp"
#include "cxr/error.hpp"
#include "cxr/hashing.hpp"
#include "cxr/imageproc.hpp"
#include "cxr/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace cxr {

namespace {

ImageTensor render(Label label, std::uint64_t seed, const SynthOptions& opts) {
  SplitMix64 rng(seed);
  const int s = opts.side;
  const double cx = rng.uniform(0.35, 0.65) * s;
  const double cy = (label == Label::Positive ? rng.uniform(0.18, 0.32) : rng.uniform(0.68, 0.82)) * s;
  const double radius = rng.uniform(0.07, 0.11) * s;
  const double amplitude = rng.uniform(0.55, 0.75);
  const double base = rng.uniform(0.08, 0.16);

  ImageTensor img(s, s);
  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const double dx = x - cx, dy = y - cy;
      double v = base + 0.05 * y / s + amplitude * std::exp(-(dx * dx + dy * dy) / (2.0 * radius * radius));
      v += opts.noise_sigma * rng.normal();
      const float f = static_cast<float>(std::clamp(v, 0.0, 1.0));
      img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = f;
    }
  }
  return img;
}

}  // namespace

Manifest make_synthetic_corpus(std::size_t n_pos, std::size_t n_neg, std::uint64_t seed,
                               const std::filesystem::path& out_dir, const SynthOptions& opts) {
  if (opts.side <= 0) throw Error(ErrorKind::InvalidArgument, "synth: side must be positive");
  std::error_code ec;
  std::filesystem::create_directories(out_dir / "images", ec);
  if (ec) throw Error(ErrorKind::Io, "synth: cannot create " + (out_dir / "images").string() + ": " + ec.message());

  std::vector<SampleRecord> samples;
  samples.reserve(n_pos + n_neg);
  auto emit = [&](Label label, std::size_t count) {
    for (std::size_t i = 0; i < count; ++i) {
      char id[32];
      std::snprintf(id, sizeof id, "%s_%04zu", std::string(label_name(label)).c_str(), i + 1);
      const auto img_seed = derive_seed(seed, {static_cast<std::uint64_t>(class_index(label)), i});
      const auto png = encode_png(render(label, img_seed, opts), /*grayscale=*/true);
      const auto rel = std::filesystem::path("images") / (std::string(id) + ".png");
      write_file_atomic(out_dir / rel, png);
      samples.push_back({id, rel, label, "synthetic seed=" + std::to_string(seed)});
    }
  };
  emit(Label::Positive, n_pos);
  emit(Label::Negative, n_neg);

  Manifest m(std::move(samples), out_dir);
  write_file_atomic(out_dir / "manifest.csv", format_manifest(m));
  return m;
}

}  // namespace cxr
