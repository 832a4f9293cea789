#pragma once

#include "cxr/manifest.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>

namespace cxr {

struct SynthOptions {
  int side = 256;
  double noise_sigma = 0.04;
};

/// Writes `n_pos` POSITIVE and `n_neg` NEGATIVE grayscale PNGs plus
/// manifest.csv into out_dir. A POSITIVE image carries a bright Gaussian
/// blob centred in the upper half, a NEGATIVE one in the lower half; both
/// sit on a dim vertical gradient with additive Gaussian noise. Each image
/// is a pure function of (seed, class, index).
Manifest make_synthetic_corpus(std::size_t n_pos, std::size_t n_neg, std::uint64_t seed,
                               const std::filesystem::path& out_dir, const SynthOptions& opts = {});

}  // namespace cxr
