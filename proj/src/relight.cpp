#include "llem/relight.hpp"

#include <algorithm>

namespace llem {
namespace {

std::uint32_t u32(Index v) { return static_cast<std::uint32_t>(v); }

IfbmambaBlock::Matrix read_matrix(const WeightArchive& archive, const std::string& name) {
  const auto& t = archive.at(name);
  IfbmambaBlock::Matrix m(t.dims.at(0), t.dims.at(1));
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

ConvKernel<float> read_conv(const WeightArchive& archive, const std::string& prefix) {
  const auto& w = archive.at(prefix + ".w");
  const auto& b = archive.at(prefix + ".b");
  return ConvKernel<float>::from_oihw(w.dims.at(0), w.dims.at(1), w.dims.at(2), w.dims.at(3), w.data,
                                      b.data);
}

std::string block_name(const std::string& stage, Index b) {
  return stage + (b == 0 ? "/ifbm" : "/ifbm" + std::to_string(b));
}

Image resample_to(const Image& illum, const Shape& target) {
  if (illum.height() == target.height && illum.width() == target.width) return illum;
  if (illum.height() % target.height != 0 || illum.width() % target.width != 0 ||
      illum.height() / target.height != illum.width() / target.width) {
    throw DimensionError("illumination " + illum.shape().str() + " cannot be area-resampled to " +
                         target.str());
  }
  return area_downsample(illum, illum.height() / target.height);
}

Image run_blocks(Image x, const Image& l, const std::vector<IfbmambaBlock>& blocks) {
  for (const auto& b : blocks) x = ifbmamba_forward(x, &l, b);
  return x;
}

}  // namespace

MambaConfig IfbmambaConfig::mamba() const {
  MambaConfig m;
  m.dim = token_dim();
  m.state = state;
  m.expand = expand;
  return m;
}

IfbmambaBlock IfbmambaBlock::zeros(const IfbmambaConfig& config) {
  IfbmambaBlock b;
  b.config = config;
  const Index d = config.token_dim();
  b.projection = Matrix::Zero(d, d);
  if (config.illumination) {
    b.illumination_projection =
        Matrix::Zero(d, config.patch * config.patch * config.illumination_channels);
  }
  if (config.class_token) b.class_token = Eigen::RowVectorXf::Zero(d);
  b.forward = MambaParams::zeros(config.mamba());
  b.backward = MambaParams::zeros(config.mamba());
  return b;
}

std::vector<WeightSpec> ifbmamba_weight_specs(const IfbmambaConfig& c, const std::string& prefix) {
  const Index d = c.token_dim();
  std::vector<WeightSpec> specs = {{prefix + ".proj.w", {u32(d), u32(d)}}};
  if (c.illumination) {
    specs.push_back({prefix + ".illum_proj.w",
                     {u32(d), u32(c.patch * c.patch * c.illumination_channels)}});
  }
  if (c.class_token) specs.push_back({prefix + ".cls", {u32(d)}});
  for (auto& s : mamba_weight_specs(c.mamba(), prefix + ".fwd")) specs.push_back(std::move(s));
  for (auto& s : mamba_weight_specs(c.mamba(), prefix + ".bwd")) specs.push_back(std::move(s));
  return specs;
}

IfbmambaBlock IfbmambaBlock::load(const WeightArchive& archive, const std::string& prefix,
                                  const IfbmambaConfig& config) {
  const auto specs = ifbmamba_weight_specs(config, prefix);
  require_weights(archive, specs);
  IfbmambaBlock b;
  b.config = config;
  b.projection = read_matrix(archive, prefix + ".proj.w");
  if (config.illumination) b.illumination_projection = read_matrix(archive, prefix + ".illum_proj.w");
  if (config.class_token) {
    const auto& t = archive.at(prefix + ".cls");
    b.class_token = Eigen::Map<const Eigen::RowVectorXf>(t.data.data(), static_cast<Index>(t.data.size()));
  }
  b.forward = MambaParams::load(archive, prefix + ".fwd");
  b.backward = MambaParams::load(archive, prefix + ".bwd");
  return b;
}

Tokens ifbmamba_fuse_tokens(const Image& reflectance, const Image* illumination,
                            const IfbmambaBlock& block) {
  const auto& cfg = block.config;
  if (reflectance.channels() != cfg.channels) {
    throw DimensionError("IFBMamba block expects " + std::to_string(cfg.channels) +
                         " channels, got " + reflectance.shape().str());
  }
  Tokens fused = patchify(reflectance, cfg.patch) * block.projection.transpose();
  if (cfg.illumination && illumination != nullptr) {
    const Image l = resample_to(*illumination, {reflectance.height(), reflectance.width(),
                                                illumination->channels()});
    if (l.channels() != cfg.illumination_channels) {
      throw DimensionError("IFBMamba illumination must have " +
                           std::to_string(cfg.illumination_channels) + " channels, got " +
                           l.shape().str());
    }
    fused.noalias() += patchify(l, cfg.patch) * block.illumination_projection.transpose();
  }
  if (!cfg.class_token) return fused;
  Tokens with_cls(fused.rows() + 1, fused.cols());
  with_cls.row(0) = block.class_token;
  with_cls.bottomRows(fused.rows()) = fused;
  return with_cls;
}

Image ifbmamba_forward(const Image& reflectance, const Image* illumination,
                       const IfbmambaBlock& block) {
  const Tokens fused = ifbmamba_fuse_tokens(reflectance, illumination, block);
  Tokens mixed = bidirectional_mamba(fused, block.forward, block.backward);
  mixed -= fused;
  const Index skip = block.config.class_token ? 1 : 0;
  const Tokens update = mixed.bottomRows(mixed.rows() - skip);
  Image out = unpatchify(update, reflectance.shape(), block.config.patch);
  out.values() += reflectance.values();
  return out;
}

IfbmambaConfig UNetConfig::block_config(Index level) const {
  IfbmambaConfig c;
  c.channels = level_channels(level);
  c.patch = patch.at(static_cast<std::size_t>(level));
  c.class_token = class_token;
  c.illumination = true;
  c.illumination_channels = 3;
  c.state = state;
  c.expand = expand;
  return c;
}

void UNetConfig::validate() const {
  if (levels != 2) throw DimensionError("relight network supports exactly 2 levels");
  if (base_channels < 1 || blocks_per_level < 1 || state < 1 || expand < 1 || patch[0] < 1 ||
      patch[1] < 1) {
    throw DimensionError("relight network config has non-positive sizes");
  }
}

std::vector<WeightSpec> relight_weight_specs(const UNetConfig& config, const std::string& prefix) {
  config.validate();
  const Index c = config.base_channels;
  std::vector<WeightSpec> specs;
  auto add_blocks = [&](const std::string& stage, Index level) {
    for (Index b = 0; b < config.blocks_per_level; ++b) {
      for (auto& s : ifbmamba_weight_specs(config.block_config(level), prefix + "/" + block_name(stage, b)))
        specs.push_back(std::move(s));
    }
  };
  specs.push_back({prefix + "/enc0/conv.w", {u32(c), 3, 3, 3}});
  specs.push_back({prefix + "/enc0/conv.b", {u32(c)}});
  add_blocks("enc0", 0);
  specs.push_back({prefix + "/down/conv.w", {u32(2 * c), u32(c), 4, 4}});
  specs.push_back({prefix + "/down/conv.b", {u32(2 * c)}});
  add_blocks("enc1", 1);
  specs.push_back({prefix + "/up/deconv.w", {u32(2 * c), u32(c), 2, 2}});
  specs.push_back({prefix + "/up/deconv.b", {u32(c)}});
  add_blocks("dec0", 0);
  specs.push_back({prefix + "/out/conv.w", {3, u32(c), 3, 3}});
  specs.push_back({prefix + "/out/conv.b", {3}});
  return specs;
}

RelightNet::RelightNet(UNetConfig config, ConvKernel<float> stem, ConvKernel<float> down,
                       ConvKernel<float> up, Eigen::VectorXf up_bias, ConvKernel<float> head,
                       std::vector<IfbmambaBlock> enc0, std::vector<IfbmambaBlock> enc1,
                       std::vector<IfbmambaBlock> dec0)
    : config_(config),
      stem_(std::move(stem)),
      down_(std::move(down)),
      up_(std::move(up)),
      up_bias_(std::move(up_bias)),
      head_(std::move(head)),
      enc0_(std::move(enc0)),
      enc1_(std::move(enc1)),
      dec0_(std::move(dec0)) {}

RelightNet RelightNet::load(const WeightArchive& archive, const UNetConfig& config,
                            const std::string& prefix) {
  const auto specs = relight_weight_specs(config, prefix);
  require_weights(archive, specs);
  auto blocks = [&](const std::string& stage, Index level) {
    std::vector<IfbmambaBlock> out;
    for (Index b = 0; b < config.blocks_per_level; ++b) {
      out.push_back(IfbmambaBlock::load(archive, prefix + "/" + block_name(stage, b),
                                        config.block_config(level)));
    }
    return out;
  };
  const auto& up_b = archive.at(prefix + "/up/deconv.b");
  Eigen::VectorXf up_bias = Eigen::Map<const Eigen::VectorXf>(up_b.data.data(), static_cast<Index>(up_b.data.size()));
  const auto& up_w = archive.at(prefix + "/up/deconv.w");
  ConvKernel<float> up = ConvKernel<float>::from_oihw(up_w.dims[0], up_w.dims[1], 2, 2, up_w.data);
  return RelightNet(config, read_conv(archive, prefix + "/enc0/conv"),
                    read_conv(archive, prefix + "/down/conv"), std::move(up), std::move(up_bias),
                    read_conv(archive, prefix + "/out/conv"), blocks("enc0", 0), blocks("enc1", 1),
                    blocks("dec0", 0));
}

RelightTrace RelightNet::forward_traced(const Image& r, const Image& l) const {
  require_same_shape(r.shape(), l.shape(), "relight_forward");
  if (r.channels() != 3) throw DimensionError("relight_forward expects 3-channel inputs");
  const Index factor = Index(1) << (config_.levels - 1);
  if (r.height() % factor != 0 || r.width() % factor != 0) {
    throw DimensionError("relight_forward: " + r.shape().str() + " not divisible by " +
                         std::to_string(factor));
  }
  const Image l_half = area_downsample(l, 2);

  Image f0 = run_blocks(conv2d(r, stem_, 1, Padding::SameZero), l, enc0_);
  Image f1 = conv2d(f0, down_, 2, Padding::SameZero);
  Image bottleneck = run_blocks(f1, l_half, enc1_);
  Image upsampled = transposed_conv2d(bottleneck, up_, 2, 0, up_bias_);
  Image decoder_input(upsampled.shape());
  decoder_input.values() = upsampled.values() + f0.values();
  Image decoder_output = run_blocks(decoder_input, l, dec0_);
  Image output = conv2d(decoder_output, head_, 1, Padding::SameZero);
  return RelightTrace{{std::move(f0), std::move(f1)},
                      std::move(bottleneck),
                      std::move(upsampled),
                      std::move(decoder_input),
                      std::move(decoder_output),
                      std::move(output)};
}

Image RelightNet::forward(const Image& r, const Image& l) const {
  return forward_traced(r, l).output;
}

Image relight_forward(const Image& r, const Image& l, const UNetConfig& config,
                      const WeightArchive& weights, const std::string& prefix) {
  return RelightNet::load(weights, config, prefix).forward(r, l);
}

UNetConfig infer_unet_config(const WeightArchive& archive, UNetConfig base, const std::string& prefix) {
  const auto& stem = archive.at(prefix + "/enc0/conv.w");
  if (stem.dims.size() != 4) throw DimensionError(prefix + "/enc0/conv.w must be rank 4");
  base.base_channels = stem.dims[0];
  for (Index level = 0; level < 2; ++level) {
    const auto* proj = archive.find(prefix + (level == 0 ? "/enc0" : "/enc1") + "/ifbm.proj.w");
    if (proj == nullptr || proj->dims.empty()) continue;
    const Index per_patch = static_cast<Index>(proj->dims[0]) / base.level_channels(level);
    Index p = 1;
    while (p * p < per_patch) ++p;
    if (p * p == per_patch) base.patch[static_cast<std::size_t>(level)] = p;
  }
  const std::string first = prefix + "/enc0/ifbm.fwd";
  if (const auto* a_log = archive.find(first + ".A_log"); a_log != nullptr && a_log->dims.size() == 2) {
    base.state = a_log->dims[1];
    const Index dim = base.block_config(0).token_dim();
    if (dim > 0 && a_log->dims[0] % dim == 0) base.expand = a_log->dims[0] / dim;
  }
  Index blocks = 1;
  while (archive.contains(prefix + "/enc0/ifbm" + std::to_string(blocks) + ".proj.w")) ++blocks;
  base.blocks_per_level = blocks;
  base.class_token = archive.contains(prefix + "/enc0/ifbm.cls");
  return base;
}

}  // namespace llem
