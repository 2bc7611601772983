#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "llem/relight.hpp"
#include "llem/tensor.hpp"
#include "llem/weight_archive.hpp"

namespace llem {

enum class PriorKind { Zero, BoxResidual, TvResidual, MambaBlock, IfbmambaUnet };

PriorKind parse_prior_kind(std::string_view name);
std::string_view to_string(PriorKind kind);

struct PriorOptions {
  Index box_radius = 1;
  int tv_steps = 5;
  float tv_weight = 0.1f;     // explicit step size of the TV flow
  float tv_smoothing = 0.05f; // Charbonnier scale of the TV flux
};

/// Weight-name prefix of the reflectance and illumination priors.
inline constexpr std::string_view kReflectancePrefix = "prior_r";
inline constexpr std::string_view kIlluminationPrefix = "prior_l";

/// A residual corrector f(x): eval returns denoise(x) - x, so the zero prior
/// means "leave x unchanged". Immutable once built and safe to share.
class PriorFn {
 public:
  static PriorFn zero();
  static PriorFn box_residual(Index radius);
  static PriorFn tv_residual(int steps, float weight, float smoothing = 0.05f);
  /// One IFBMamba unit at patch size 1 without illumination fusion.
  static PriorFn mamba_block(IfbmambaBlock block);
  static PriorFn ifbmamba_unet(RelightNet net);

  PriorKind kind() const { return kind_; }
  bool needs_context() const { return kind_ == PriorKind::IfbmambaUnet; }
  const PriorOptions& options() const { return options_; }

  /// `context` is the illumination estimate; required by ifbmamba_unet only.
  Image operator()(const Image& x, const Image* context = nullptr) const;

 private:
  explicit PriorFn(PriorKind kind) : kind_(kind) {}

  PriorKind kind_;
  PriorOptions options_;
  std::shared_ptr<const IfbmambaBlock> block_;
  std::shared_ptr<const RelightNet> net_;
};

inline Image eval_prior(const PriorFn& prior, const Image& x, const Image* context = nullptr) {
  return prior(x, context);
}

/// IFBMamba configuration of the standalone mamba_block prior on 3 channels.
IfbmambaConfig mamba_prior_config(Index state = 16, Index expand = 2);

/// Builds a prior for the given slot ("prior_r" or "prior_l"). Network-backed
/// kinds read "<slot>/mamba.*" (mamba_block) or "relight/*" (ifbmamba_unet).
PriorFn make_prior(PriorKind kind, const PriorOptions& options, const WeightArchive* weights,
                   std::string_view slot, const UNetConfig& unet = {});

/// Edge-normalised box blur: mean over the in-bounds (2r+1)^2 neighbourhood.
Image box_blur(const Image& x, Index radius);

/// Explicit smoothed-TV flow on the 4-neighbour graph (edges leaving the
/// image are dropped): x += weight * sum_q phi(x_q - x_p),
/// phi(d) = d / sqrt(1 + (d / smoothing)^2).
Image tv_diffusion(const Image& x, int steps, float weight, float smoothing = 0.05f);

}  // namespace llem
