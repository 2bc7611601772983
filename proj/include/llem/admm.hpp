#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "llem/priors.hpp"
#include "llem/relight.hpp"
#include "llem/tensor.hpp"
#include "llem/weight_archive.hpp"

namespace llem {

/// Full variable set of one unfolding stage. All tensors share the input shape.
template <typename Scalar>
struct AdmmState {
  BasicImage<Scalar> R, L, P, Q, Y1, Y2;
  Scalar mu;
  int k = 0;

  /// P = R0, Q = L0, zero multipliers.
  static AdmmState initial(const BasicImage<Scalar>& r0, const BasicImage<Scalar>& l0, Scalar mu0) {
    require_same_shape(r0.shape(), l0.shape(), "AdmmState");
    if (!(mu0 > Scalar(0))) throw std::invalid_argument("AdmmState: mu must be positive");
    BasicImage<Scalar> zero(r0.shape());
    return AdmmState{r0, l0, r0, l0, zero, zero, mu0, 0};
  }
};

namespace detail {

template <typename Scalar>
void check_state(const AdmmState<Scalar>& s, const BasicImage<Scalar>& image, const char* what) {
  const Shape& shape = image.shape();
  require_same_shape(s.R.shape(), shape, what);
  require_same_shape(s.L.shape(), shape, what);
  require_same_shape(s.P.shape(), shape, what);
  require_same_shape(s.Q.shape(), shape, what);
  require_same_shape(s.Y1.shape(), shape, what);
  require_same_shape(s.Y2.shape(), shape, what);
  if (!(s.mu > Scalar(0))) throw std::invalid_argument(std::string(what) + ": mu must be positive");
}

}  // namespace detail

/// Closed-form minimiser of ||R o L - I||^2 + mu/2 ||R - P + Y1/mu||^2 in R.
/// The system is diagonal, so the inverse is a per-pixel division:
///   R = (2 I o L + mu P - Y1) / (2 L o L + mu + eps)
template <typename Scalar>
BasicImage<Scalar> update_R(const AdmmState<Scalar>& s, const BasicImage<Scalar>& I,
                            Scalar epsilon = Scalar(kDivisionEpsilon)) {
  detail::check_state(s, I, "update_R");
  BasicImage<Scalar> out(I.shape());
  out.array() = (Scalar(2) * I.array() * s.L.array() + s.mu * s.P.array() - s.Y1.array()) /
                (Scalar(2) * s.L.array().square() + s.mu + epsilon);
  return out;
}

/// Same as update_R with the roles of R and L swapped (uses Q and Y2).
template <typename Scalar>
BasicImage<Scalar> update_L(const AdmmState<Scalar>& s, const BasicImage<Scalar>& I,
                            Scalar epsilon = Scalar(kDivisionEpsilon)) {
  detail::check_state(s, I, "update_L");
  BasicImage<Scalar> out(I.shape());
  out.array() = (Scalar(2) * I.array() * s.R.array() + s.mu * s.Q.array() - s.Y2.array()) /
                (Scalar(2) * s.R.array().square() + s.mu + epsilon);
  return out;
}

namespace detail {

template <typename Scalar, typename Prior>
BasicImage<Scalar> denoise_step(const BasicImage<Scalar>& x, const BasicImage<Scalar>& y, Scalar mu,
                                Scalar weight, Prior&& prior, const char* stage) {
  BasicImage<Scalar> noisy(x.shape());
  noisy.array() = x.array() + y.array() / mu;
  const Scalar noise_sq = weight / mu;
  BasicImage<Scalar> correction = [&] {
    try {
      return prior(noisy);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string(stage) + ": " + e.what());
    }
  }();
  require_same_shape(correction.shape(), noisy.shape(), stage);
  BasicImage<Scalar> out(x.shape());
  out.array() = noisy.array() + noise_sq * correction.array();
  return out;
}

}  // namespace detail

/// M = R + Y1/mu; P = M + (lambda/mu) f(M), f a residual corrector.
template <typename Scalar, typename Prior>
BasicImage<Scalar> update_P(const AdmmState<Scalar>& s, Prior&& prior, Scalar lambda) {
  return detail::denoise_step(s.R, s.Y1, s.mu, lambda, std::forward<Prior>(prior), "P-subproblem");
}

/// N = L + Y2/mu; Q = N + (gamma/mu) g(N).
template <typename Scalar, typename Prior>
BasicImage<Scalar> update_Q(const AdmmState<Scalar>& s, Prior&& prior, Scalar gamma) {
  return detail::denoise_step(s.L, s.Y2, s.mu, gamma, std::forward<Prior>(prior), "Q-subproblem");
}

template <typename Scalar>
struct MultiplierUpdate {
  BasicImage<Scalar> Y1, Y2;
  Scalar mu;
};

/// Y1 += mu (R - P), Y2 += mu (L - Q), mu *= rho.
template <typename Scalar>
MultiplierUpdate<Scalar> update_multipliers(const AdmmState<Scalar>& s, Scalar rho = Scalar(1)) {
  if (rho < Scalar(1)) throw std::invalid_argument("update_multipliers: rho must be >= 1");
  MultiplierUpdate<Scalar> out{s.Y1, s.Y2, s.mu * rho};
  out.Y1.array() += s.mu * (s.R.array() - s.P.array());
  out.Y2.array() += s.mu * (s.L.array() - s.Q.array());
  return out;
}

// ---------------------------------------------------------------------------
// Decomposition initialiser

struct Decomposition {
  Image reflectance;
  Image illumination;
};

/// Four 3x3 convs 3 -> 16 -> 16 -> 16 -> 6, names "init/conv{0..3}.{w,b}".
std::vector<WeightSpec> decomposition_weight_specs();

/// L0 = per-pixel channel max broadcast to 3 channels, R0 = I / (L0 + eps).
Decomposition classical_decomposition(const Image& I, float epsilon = float(kDivisionEpsilon));

/// ReLU between layers, sigmoid head; channels 0-2 are R0, 3-5 are L0.
Decomposition learned_decomposition(const Image& I, const WeightArchive& weights);

/// Learned mode when `weights` is non-null, classical otherwise. Outputs are
/// clamped to [0, 1].
Decomposition initialize_decomposition(const Image& I, const WeightArchive* weights,
                                       float epsilon = float(kDivisionEpsilon));

// ---------------------------------------------------------------------------
// Unfolding driver

enum class InitMode { Auto, Classical, Learned };

struct SolverConfig {
  double lambda = 0.1;
  double gamma = 0.05;
  double mu0 = 1.0;
  double rho = 1.0;
  int iterations = 3;
  PriorKind prior_r = PriorKind::Zero;
  PriorKind prior_l = PriorKind::Zero;
  PriorOptions prior_options;
  UNetConfig unet;
  double exposure_gamma = 1.0;
  double epsilon = kDivisionEpsilon;
  InitMode init = InitMode::Auto;

  void validate() const;
};

struct IterationRecord {
  int iteration = 0;
  double residual_rp = 0.0;     // ||R - P||_F
  double residual_lq = 0.0;     // ||L - Q||_F
  double reconstruction = 0.0;  // ||R o L - I||_F
  double mu = 0.0;              // penalty used during the iteration
};

struct EnhanceResult {
  Image output;
  Image P;
  Image Q;
  Image R0;
  Image L0;
  std::vector<IterationRecord> history;
  std::size_t nan_clamped = 0;
};

/// clamp01(P o Q^(1 / exposure_gamma)); Q is clamped at 0 before the power.
Image compose_output(const Image& P, const Image& Q, double exposure_gamma);

/// Decomposition, then K stages of R, L, P, Q and multiplier updates.
/// The reflectance prior receives the current L as illumination context.
/// Throws NumericalError naming the iteration and tensor on non-finite state.
EnhanceResult run_unfolding(const Image& I, const SolverConfig& config,
                            const WeightArchive* weights = nullptr);

EnhanceResult run_unfolding(const Image& I, const SolverConfig& config, const PriorFn& prior_r,
                            const PriorFn& prior_l, const WeightArchive* weights = nullptr);

/// CSV with header "iteration,residual_rp,residual_lq,reconstruction,mu".
std::string trace_csv(const std::vector<IterationRecord>& history);

}  // namespace llem
