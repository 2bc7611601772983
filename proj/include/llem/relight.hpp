#pragma once

#include <array>
#include <string>
#include <vector>

#include "llem/ssm.hpp"
#include "llem/tensor.hpp"
#include "llem/weight_archive.hpp"

namespace llem {

// ---------------------------------------------------------------------------
// Illumination-fused bidirectional Mamba block

struct IfbmambaConfig {
  Index channels = 16;        // feature channels of the reflectance stream
  Index patch = 1;
  bool class_token = false;
  bool illumination = true;   // false: no illumination encoder
  Index illumination_channels = 3;
  Index state = 16;
  Index expand = 2;

  Index token_dim() const { return patch * patch * channels; }
  MambaConfig mamba() const;
};

/// Weights of one IFBMamba unit. `projection` is the token projection applied
/// to reflectance patches, `illumination_projection` encodes illumination
/// patches into the same token space. Both are stored (out, in).
struct IfbmambaBlock {
  using Matrix = MambaParams::Matrix;

  IfbmambaConfig config;
  Matrix projection;               // token_dim x token_dim
  Matrix illumination_projection;  // token_dim x patch^2 * illumination_channels
  Eigen::RowVectorXf class_token;  // token_dim, used iff config.class_token
  MambaParams forward;
  MambaParams backward;

  static IfbmambaBlock zeros(const IfbmambaConfig& config);
  static IfbmambaBlock load(const WeightArchive& archive, const std::string& prefix,
                            const IfbmambaConfig& config);
};

std::vector<WeightSpec> ifbmamba_weight_specs(const IfbmambaConfig& config, const std::string& prefix);

/// Pre-scan token sequence: patchify(refl) W (+ patchify(illum) W_L), with the
/// class token prepended when enabled. `illumination` may be null (no fusion)
/// and is area-downsampled to the reflectance resolution when larger.
Tokens ifbmamba_fuse_tokens(const Image& reflectance, const Image* illumination,
                            const IfbmambaBlock& block);

/// refl + unpatchify(bidirectional_mamba(fused) - fused), class token dropped.
/// With zero weights the block is the identity on the reflectance features.
Image ifbmamba_forward(const Image& reflectance, const Image* illumination,
                       const IfbmambaBlock& block);

// ---------------------------------------------------------------------------
// Two-level U-shaped relighting network

struct UNetConfig {
  Index base_channels = 16;
  Index levels = 2;
  std::array<Index, 2> patch = {1, 1};
  Index blocks_per_level = 1;
  bool class_token = false;
  Index state = 16;
  Index expand = 2;

  /// Channels of pyramid level i: 2^i * C.
  Index level_channels(Index level) const { return base_channels << level; }
  IfbmambaConfig block_config(Index level) const;
  void validate() const;
};

std::vector<WeightSpec> relight_weight_specs(const UNetConfig& config,
                                             const std::string& prefix = "relight");

/// Intermediate tensors of one forward pass. `pyramid[i]` is F_i with shape
/// H/2^i x W/2^i x 2^i C.
struct RelightTrace {
  std::vector<Image> pyramid;
  Image bottleneck;
  Image upsampled;
  Image decoder_input;
  Image decoder_output;
  Image output;
};

class RelightNet {
 public:
  static RelightNet load(const WeightArchive& archive, const UNetConfig& config,
                         const std::string& prefix = "relight");

  const UNetConfig& config() const { return config_; }

  /// Restores reflectance `r` guided by illumination `l` (both H x W x 3).
  Image forward(const Image& r, const Image& l) const;
  RelightTrace forward_traced(const Image& r, const Image& l) const;

 private:
  RelightNet(UNetConfig config, ConvKernel<float> stem, ConvKernel<float> down,
             ConvKernel<float> up, Eigen::VectorXf up_bias, ConvKernel<float> head,
             std::vector<IfbmambaBlock> enc0, std::vector<IfbmambaBlock> enc1,
             std::vector<IfbmambaBlock> dec0);

  UNetConfig config_;
  ConvKernel<float> stem_, down_, up_;
  Eigen::VectorXf up_bias_;
  ConvKernel<float> head_;
  std::vector<IfbmambaBlock> enc0_, enc1_, dec0_;
};

Image relight_forward(const Image& r, const Image& l, const UNetConfig& config,
                      const WeightArchive& weights, const std::string& prefix = "relight");

/// Fills base_channels from "<prefix>/enc0/conv.w" and state/expand from the
/// first block's tensors; other fields are kept from `base`.
UNetConfig infer_unet_config(const WeightArchive& archive, UNetConfig base = {},
                             const std::string& prefix = "relight");

}  // namespace llem
