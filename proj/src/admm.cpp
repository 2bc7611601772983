#include "llem/admm.hpp"

#include <cmath>
#include <cstdio>

namespace llem {
namespace {

constexpr Index kInitWidth = 16;

ConvKernel<float> read_conv(const WeightArchive& archive, const std::string& prefix) {
  const auto& w = archive.at(prefix + ".w");
  const auto& b = archive.at(prefix + ".b");
  return ConvKernel<float>::from_oihw(w.dims[0], w.dims[1], w.dims[2], w.dims[3], w.data, b.data);
}

void check_input_image(const Image& I) {
  if (I.channels() != 3) throw DimensionError("expected a 3-channel image, got " + I.shape().str());
  if (!I.values().allFinite()) throw NumericalError("input image has non-finite values");
  if (I.values().minCoeff() < 0.0f || I.values().maxCoeff() > 1.0f) {
    throw std::invalid_argument("input image values must lie in [0, 1]");
  }
}

void check_finite(const Image& x, int iteration, const char* name) {
  if (!x.values().allFinite()) {
    throw NumericalError("iteration " + std::to_string(iteration) + ": non-finite values in " + name);
  }
}

}  // namespace

std::vector<WeightSpec> decomposition_weight_specs() {
  const auto w = static_cast<std::uint32_t>(kInitWidth);
  return {
      {"init/conv0.w", {w, 3, 3, 3}}, {"init/conv0.b", {w}},
      {"init/conv1.w", {w, w, 3, 3}}, {"init/conv1.b", {w}},
      {"init/conv2.w", {w, w, 3, 3}}, {"init/conv2.b", {w}},
      {"init/conv3.w", {6, w, 3, 3}}, {"init/conv3.b", {6}},
  };
}

Decomposition classical_decomposition(const Image& I, float epsilon) {
  if (I.channels() != 3) throw DimensionError("decomposition expects 3 channels, got " + I.shape().str());
  Image l0(I.shape());
  l0.values() = I.values().rowwise().maxCoeff().replicate(1, 3);
  Image r0(I.shape());
  r0.array() = I.array() / (l0.array() + epsilon);
  return {clamp01(r0), clamp01(l0)};
}

Decomposition learned_decomposition(const Image& I, const WeightArchive& weights) {
  if (I.channels() != 3) throw DimensionError("decomposition expects 3 channels, got " + I.shape().str());
  const auto specs = decomposition_weight_specs();
  require_weights(weights, specs);
  Image x = I;
  for (int layer = 0; layer < 4; ++layer) {
    x = conv2d(x, read_conv(weights, "init/conv" + std::to_string(layer)), 1, Padding::SameZero);
    if (layer < 3) {
      x.array() = x.array().max(0.0f);
    } else {
      x.array() = 1.0f / (1.0f + (-x.array()).exp());
    }
  }
  Image r0(I.height(), I.width(), 3, x.values().leftCols(3));
  Image l0(I.height(), I.width(), 3, x.values().rightCols(3));
  return {clamp01(r0), clamp01(l0)};
}

Decomposition initialize_decomposition(const Image& I, const WeightArchive* weights, float epsilon) {
  if (weights != nullptr) return learned_decomposition(I, *weights);
  return classical_decomposition(I, epsilon);
}

void SolverConfig::validate() const {
  if (!(lambda > 0)) throw std::invalid_argument("lambda must be positive");
  if (!(gamma > 0)) throw std::invalid_argument("gamma must be positive");
  if (!(mu0 > 0)) throw std::invalid_argument("mu0 must be positive");
  if (!(rho >= 1)) throw std::invalid_argument("rho must be >= 1");
  if (iterations < 1) throw std::invalid_argument("iteration count must be >= 1");
  if (!(exposure_gamma > 0)) throw std::invalid_argument("exposure gamma must be positive");
  if (!(epsilon >= 0)) throw std::invalid_argument("epsilon must be non-negative");
}

Image compose_output(const Image& P, const Image& Q, double exposure_gamma) {
  require_same_shape(P.shape(), Q.shape(), "compose_output");
  Image out(P.shape());
  if (exposure_gamma == 1.0) {
    out.array() = P.array() * Q.array();
  } else {
    const float power = static_cast<float>(1.0 / exposure_gamma);
    out.array() = P.array() * Q.array().max(0.0f).pow(power);
  }
  return clamp01(out);
}

EnhanceResult run_unfolding(const Image& I, const SolverConfig& config, const WeightArchive* weights) {
  config.validate();
  const PriorFn prior_r =
      make_prior(config.prior_r, config.prior_options, weights, kReflectancePrefix, config.unet);
  const PriorFn prior_l =
      make_prior(config.prior_l, config.prior_options, weights, kIlluminationPrefix, config.unet);
  return run_unfolding(I, config, prior_r, prior_l, weights);
}

EnhanceResult run_unfolding(const Image& I, const SolverConfig& config, const PriorFn& prior_r,
                            const PriorFn& prior_l, const WeightArchive* weights) {
  config.validate();
  check_input_image(I);
  const auto eps = static_cast<float>(config.epsilon);

  const WeightArchive* init_weights = nullptr;
  if (config.init == InitMode::Learned) {
    if (weights == nullptr) throw MissingWeightsError("learned initialisation needs a weight archive");
    init_weights = weights;
  } else if (config.init == InitMode::Auto) {
    init_weights = weights;
  }
  Decomposition init = initialize_decomposition(I, init_weights, eps);

  auto state = AdmmState<float>::initial(init.reflectance, init.illumination,
                                         static_cast<float>(config.mu0));
  const auto lambda = static_cast<float>(config.lambda);
  const auto gamma = static_cast<float>(config.gamma);
  const auto rho = static_cast<float>(config.rho);

  std::vector<IterationRecord> history;
  history.reserve(static_cast<std::size_t>(config.iterations));
  for (int k = 0; k < config.iterations; ++k) {
    const float mu_k = state.mu;
    state.R = update_R(state, I, eps);
    check_finite(state.R, k + 1, "R");
    state.L = update_L(state, I, eps);
    check_finite(state.L, k + 1, "L");
    state.P = update_P(state, [&](const Image& m) { return prior_r(m, &state.L); }, lambda);
    check_finite(state.P, k + 1, "P");
    state.Q = update_Q(state, [&](const Image& n) { return prior_l(n, nullptr); }, gamma);
    check_finite(state.Q, k + 1, "Q");
    auto multipliers = update_multipliers(state, rho);
    state.Y1 = std::move(multipliers.Y1);
    check_finite(state.Y1, k + 1, "Y1");
    state.Y2 = std::move(multipliers.Y2);
    check_finite(state.Y2, k + 1, "Y2");
    state.mu = multipliers.mu;
    state.k = k + 1;

    IterationRecord rec;
    rec.iteration = k + 1;
    rec.residual_rp = (state.R.values().cast<double>() - state.P.values().cast<double>()).norm();
    rec.residual_lq = (state.L.values().cast<double>() - state.Q.values().cast<double>()).norm();
    rec.reconstruction = ((state.R.array().cast<double>() * state.L.array().cast<double>()) -
                          I.array().cast<double>())
                             .matrix()
                             .norm();
    rec.mu = mu_k;
    history.push_back(rec);
  }

  Image raw(I.shape());
  raw.array() = state.P.array() * state.Q.array();
  EnhanceResult result{compose_output(state.P, state.Q, config.exposure_gamma),
                       std::move(state.P),
                       std::move(state.Q),
                       std::move(init.reflectance),
                       std::move(init.illumination),
                       std::move(history),
                       0};
  result.nan_clamped = count_nan(raw);
  return result;
}

std::string trace_csv(const std::vector<IterationRecord>& history) {
  std::string out = "iteration,residual_rp,residual_lq,reconstruction,mu\n";
  char line[160];
  for (const auto& r : history) {
    std::snprintf(line, sizeof(line), "%d,%.9g,%.9g,%.9g,%.9g\n", r.iteration, r.residual_rp,
                  r.residual_lq, r.reconstruction, r.mu);
    out += line;
  }
  return out;
}

}  // namespace llem
