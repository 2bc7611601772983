#pragma once

#include <cstdint>
#include <vector>

#include "llem/relight.hpp"
#include "llem/weight_archive.hpp"

namespace llem {

/// Every tensor of the full model under its canonical name:
///   init/conv{0..3}.{w,b}         decomposition initialiser
///   relight/...                   U-shaped reflectance prior
///   prior_r/mamba.*, prior_l/mamba.*  standalone mamba_block priors
std::vector<WeightSpec> canonical_weight_specs(const UNetConfig& unet = {}, Index prior_state = 16,
                                               Index prior_expand = 2);

/// Seeded N(0, stddev^2) archive with the canonical names.
WeightArchive init_weights(std::uint64_t seed, const UNetConfig& unet = {}, float stddev = 0.02f);

}  // namespace llem
