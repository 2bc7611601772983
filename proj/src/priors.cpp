#include "llem/priors.hpp"

#include <cmath>

namespace llem {

PriorKind parse_prior_kind(std::string_view name) {
  if (name == "zero") return PriorKind::Zero;
  if (name == "box" || name == "box_residual") return PriorKind::BoxResidual;
  if (name == "tv" || name == "tv_residual") return PriorKind::TvResidual;
  if (name == "mamba" || name == "mamba_block") return PriorKind::MambaBlock;
  if (name == "unet" || name == "ifbmamba_unet") return PriorKind::IfbmambaUnet;
  throw std::invalid_argument("unknown prior '" + std::string(name) +
                              "' (expected zero, box_residual, tv_residual, mamba_block, ifbmamba_unet)");
}

std::string_view to_string(PriorKind kind) {
  switch (kind) {
    case PriorKind::Zero: return "zero";
    case PriorKind::BoxResidual: return "box_residual";
    case PriorKind::TvResidual: return "tv_residual";
    case PriorKind::MambaBlock: return "mamba_block";
    case PriorKind::IfbmambaUnet: return "ifbmamba_unet";
  }
  return "unknown";
}

Image box_blur(const Image& x, Index radius) {
  if (radius < 0) throw DimensionError("box_blur: negative radius");
  const Index h = x.height(), w = x.width();
  Image horiz(x.shape());
  for (Index y = 0; y < h; ++y)
    for (Index xx = 0; xx < w; ++xx) {
      const Index lo = std::max<Index>(0, xx - radius), hi = std::min<Index>(w - 1, xx + radius);
      auto dst = horiz.values().row(y * w + xx);
      for (Index k = lo; k <= hi; ++k) dst += x.values().row(y * w + k);
      dst /= static_cast<float>(hi - lo + 1);
    }
  Image out(x.shape());
  for (Index y = 0; y < h; ++y) {
    const Index lo = std::max<Index>(0, y - radius), hi = std::min<Index>(h - 1, y + radius);
    for (Index xx = 0; xx < w; ++xx) {
      auto dst = out.values().row(y * w + xx);
      for (Index k = lo; k <= hi; ++k) dst += horiz.values().row(k * w + xx);
      dst /= static_cast<float>(hi - lo + 1);
    }
  }
  return out;
}

Image tv_diffusion(const Image& x, int steps, float weight, float smoothing) {
  if (steps < 0) throw DimensionError("tv_diffusion: negative step count");
  if (!(smoothing > 0.0f)) throw DimensionError("tv_diffusion: smoothing must be positive");
  const Index h = x.height(), w = x.width();
  const float inv = 1.0f / smoothing;
  auto flux = [inv](float d) { return d / std::sqrt(1.0f + d * d * inv * inv); };
  Image cur = x;
  Image next(x.shape());
  for (int s = 0; s < steps; ++s) {
    for (Index y = 0; y < h; ++y)
      for (Index xx = 0; xx < w; ++xx)
        for (Index ch = 0; ch < x.channels(); ++ch) {
          const float v = cur(y, xx, ch);
          float acc = 0.0f;
          if (y > 0) acc += flux(cur(y - 1, xx, ch) - v);
          if (y + 1 < h) acc += flux(cur(y + 1, xx, ch) - v);
          if (xx > 0) acc += flux(cur(y, xx - 1, ch) - v);
          if (xx + 1 < w) acc += flux(cur(y, xx + 1, ch) - v);
          next(y, xx, ch) = v + weight * acc;
        }
    std::swap(cur, next);
  }
  return cur;
}

PriorFn PriorFn::zero() { return PriorFn(PriorKind::Zero); }

PriorFn PriorFn::box_residual(Index radius) {
  if (radius < 0) throw DimensionError("box_residual: negative radius");
  PriorFn p(PriorKind::BoxResidual);
  p.options_.box_radius = radius;
  return p;
}

PriorFn PriorFn::tv_residual(int steps, float weight, float smoothing) {
  if (steps < 0) throw DimensionError("tv_residual: negative step count");
  PriorFn p(PriorKind::TvResidual);
  p.options_.tv_steps = steps;
  p.options_.tv_weight = weight;
  p.options_.tv_smoothing = smoothing;
  return p;
}

PriorFn PriorFn::mamba_block(IfbmambaBlock block) {
  PriorFn p(PriorKind::MambaBlock);
  p.block_ = std::make_shared<const IfbmambaBlock>(std::move(block));
  return p;
}

PriorFn PriorFn::ifbmamba_unet(RelightNet net) {
  PriorFn p(PriorKind::IfbmambaUnet);
  p.net_ = std::make_shared<const RelightNet>(std::move(net));
  return p;
}

Image PriorFn::operator()(const Image& x, const Image* context) const {
  Image out(x.shape());
  switch (kind_) {
    case PriorKind::Zero:
      return out;
    case PriorKind::BoxResidual:
      out.values() = box_blur(x, options_.box_radius).values() - x.values();
      return out;
    case PriorKind::TvResidual:
      out.values() =
          tv_diffusion(x, options_.tv_steps, options_.tv_weight, options_.tv_smoothing).values() -
          x.values();
      return out;
    case PriorKind::MambaBlock:
      out.values() = ifbmamba_forward(x, nullptr, *block_).values() - x.values();
      return out;
    case PriorKind::IfbmambaUnet:
      if (context == nullptr) {
        throw std::invalid_argument("ifbmamba_unet prior requires an illumination context");
      }
      out.values() = net_->forward(x, *context).values() - x.values();
      return out;
  }
  return out;
}

IfbmambaConfig mamba_prior_config(Index state, Index expand) {
  IfbmambaConfig c;
  c.channels = 3;
  c.patch = 1;
  c.class_token = false;
  c.illumination = false;
  c.state = state;
  c.expand = expand;
  return c;
}

PriorFn make_prior(PriorKind kind, const PriorOptions& options, const WeightArchive* weights,
                   std::string_view slot, const UNetConfig& unet) {
  switch (kind) {
    case PriorKind::Zero: return PriorFn::zero();
    case PriorKind::BoxResidual: return PriorFn::box_residual(options.box_radius);
    case PriorKind::TvResidual:
      return PriorFn::tv_residual(options.tv_steps, options.tv_weight, options.tv_smoothing);
    case PriorKind::MambaBlock: {
      if (weights == nullptr) {
        throw MissingWeightsError("mamba_block prior for " + std::string(slot) + " needs a weight archive");
      }
      const std::string prefix = std::string(slot) + "/mamba";
      // State and expansion follow the stored tensors.
      IfbmambaConfig cfg = mamba_prior_config();
      if (const auto* a_log = weights->find(prefix + ".fwd.A_log"); a_log && a_log->dims.size() == 2) {
        cfg.state = a_log->dims[1];
        cfg.expand = std::max<Index>(1, static_cast<Index>(a_log->dims[0]) / cfg.token_dim());
      }
      return PriorFn::mamba_block(IfbmambaBlock::load(*weights, prefix, cfg));
    }
    case PriorKind::IfbmambaUnet:
      if (weights == nullptr) {
        throw MissingWeightsError("ifbmamba_unet prior needs a weight archive");
      }
      return PriorFn::ifbmamba_unet(RelightNet::load(*weights, unet));
  }
  throw std::invalid_argument("unhandled prior kind");
}

}  // namespace llem
