#pragma once

#include <Eigen/Core>

#include <cmath>
#include <string>
#include <vector>

#include "llem/errors.hpp"
#include "llem/parallel.hpp"
#include "llem/tensor.hpp"
#include "llem/weight_archive.hpp"

namespace llem {

inline constexpr Index kDefaultScanChunk = 64;

/// Per-step tensors of a selective scan over T steps, D inner channels and an
/// N-dimensional state per channel.
template <typename Scalar>
struct ScanInputs {
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Matrix u;      // T x D
  Matrix delta;  // T x D, positive step sizes
  Matrix B;      // T x N
  Matrix C;      // T x N
  Matrix A;      // D x N, negative
  Vector D;      // D skip weights

  Index steps() const { return u.rows(); }
  Index channels() const { return u.cols(); }
  Index state() const { return A.cols(); }

  void validate() const {
    const Index T = steps(), Dn = channels(), N = state();
    if (delta.rows() != T || delta.cols() != Dn || B.rows() != T || C.rows() != T ||
        B.cols() != N || C.cols() != N || A.rows() != Dn || D.size() != Dn) {
      throw DimensionError("selective scan: inconsistent input shapes");
    }
    for (Index t = 0; t < T; ++t) {
      if (!u.row(t).allFinite() || !delta.row(t).allFinite() || !B.row(t).allFinite() ||
          !C.row(t).allFinite()) {
        throw NumericalError("selective scan: non-finite input at step " + std::to_string(t));
      }
    }
    if (A.array().isNaN().any() || !D.allFinite()) {
      throw NumericalError("selective scan: non-finite state matrix or skip weights");
    }
  }
};

/// Element of the linear recurrence h_t = a_t h_{t-1} + b_t.
template <typename Scalar>
struct AffineStep {
  Scalar a = Scalar(1);
  Scalar b = Scalar(0);
};

/// Applies `first` then `second`: (a, b) then (a', b') gives (a a', a' b + b').
template <typename Scalar>
AffineStep<Scalar> compose(const AffineStep<Scalar>& first, const AffineStep<Scalar>& second) {
  return {first.a * second.a, second.a * first.b + second.b};
}

/// Sequential h_t = a_t h_{t-1} + b_t with h_{-1} = 0.
template <typename Scalar>
std::vector<Scalar> linear_scan_seq(const std::vector<Scalar>& a, const std::vector<Scalar>& b) {
  if (a.size() != b.size()) throw DimensionError("linear_scan: a and b lengths differ");
  std::vector<Scalar> h(a.size());
  Scalar state(0);
  for (std::size_t t = 0; t < a.size(); ++t) {
    state = a[t] * state + b[t];
    h[t] = state;
  }
  return h;
}

/// Chunked form of linear_scan_seq: chunk aggregates in parallel, a short
/// sequential carry pass, then parallel intra-chunk re-scans.
template <typename Scalar>
std::vector<Scalar> linear_scan_par(const std::vector<Scalar>& a, const std::vector<Scalar>& b,
                                    std::size_t chunk = kDefaultScanChunk) {
  if (a.size() != b.size()) throw DimensionError("linear_scan: a and b lengths differ");
  if (chunk == 0) throw DimensionError("linear_scan: chunk size must be positive");
  const std::size_t T = a.size();
  const std::size_t chunks = (T + chunk - 1) / chunk;
  std::vector<AffineStep<Scalar>> aggregate(chunks);
  parallel_for(0, chunks, [&](std::size_t c) {
    AffineStep<Scalar> acc;
    for (std::size_t t = c * chunk; t < std::min(T, (c + 1) * chunk); ++t) acc = compose(acc, {a[t], b[t]});
    aggregate[c] = acc;
  });
  std::vector<Scalar> carry(chunks, Scalar(0));
  for (std::size_t c = 1; c < chunks; ++c) carry[c] = aggregate[c - 1].a * carry[c - 1] + aggregate[c - 1].b;
  std::vector<Scalar> h(T);
  parallel_for(0, chunks, [&](std::size_t c) {
    Scalar state = carry[c];
    for (std::size_t t = c * chunk; t < std::min(T, (c + 1) * chunk); ++t) {
      state = a[t] * state + b[t];
      h[t] = state;
    }
  });
  return h;
}

namespace detail {

// Shared by both scan variants so the per-step arithmetic is identical.
template <typename Scalar, typename StateVec>
inline Scalar scan_step(const ScanInputs<Scalar>& in, Index t, Index d, StateVec& h) {
  const Scalar dt = in.delta(t, d);
  const Scalar ut = in.u(t, d);
  Scalar y(0);
  for (Index j = 0; j < in.state(); ++j) {
    h[j] = std::exp(dt * in.A(d, j)) * h[j] + dt * in.B(t, j) * ut;
    y += in.C(t, j) * h[j];
  }
  return y + in.D(d) * ut;
}

}  // namespace detail

/// Reference selective scan (zero-order hold, h_0 = 0):
///   h_t = exp(delta_t A) h_{t-1} + delta_t B_t u_t,  y_t = C_t . h_t + D u_t
template <typename Scalar>
typename ScanInputs<Scalar>::Matrix selective_scan_seq(const ScanInputs<Scalar>& in) {
  in.validate();
  typename ScanInputs<Scalar>::Matrix y(in.steps(), in.channels());
  std::vector<Scalar> h(static_cast<std::size_t>(in.state()));
  for (Index d = 0; d < in.channels(); ++d) {
    std::fill(h.begin(), h.end(), Scalar(0));
    for (Index t = 0; t < in.steps(); ++t) y(t, d) = detail::scan_step(in, t, d, h);
  }
  return y;
}

/// Chunked parallel selective scan; matches selective_scan_seq to rounding.
/// With chunk >= T it performs exactly the sequential arithmetic.
template <typename Scalar>
typename ScanInputs<Scalar>::Matrix selective_scan_par(const ScanInputs<Scalar>& in,
                                                       Index chunk = kDefaultScanChunk) {
  in.validate();
  if (chunk < 1) throw DimensionError("selective_scan_par: chunk size must be positive");
  const Index T = in.steps(), Dn = in.channels(), N = in.state();
  typename ScanInputs<Scalar>::Matrix y(T, Dn);
  if (T == 0) return y;
  const Index chunks = (T + chunk - 1) / chunk;
  const auto tasks = static_cast<std::size_t>(Dn * chunks);

  // Per (channel, chunk): composed affine map of every state component.
  std::vector<Scalar> agg_a(tasks * N), agg_b(tasks * N);
  parallel_for(0, tasks, [&](std::size_t task) {
    const Index d = static_cast<Index>(task) / chunks, c = static_cast<Index>(task) % chunks;
    Scalar* pa = agg_a.data() + task * N;
    Scalar* pb = agg_b.data() + task * N;
    for (Index j = 0; j < N; ++j) {
      pa[j] = Scalar(1);
      pb[j] = Scalar(0);
    }
    for (Index t = c * chunk; t < std::min(T, (c + 1) * chunk); ++t) {
      const Scalar dt = in.delta(t, d), ut = in.u(t, d);
      for (Index j = 0; j < N; ++j) {
        const AffineStep<Scalar> step{std::exp(dt * in.A(d, j)), dt * in.B(t, j) * ut};
        const auto next = compose(AffineStep<Scalar>{pa[j], pb[j]}, step);
        pa[j] = next.a;
        pb[j] = next.b;
      }
    }
  });

  // Carry into each chunk, sequential over chunks.
  std::vector<Scalar> carry(tasks * N, Scalar(0));
  parallel_for(0, static_cast<std::size_t>(Dn), [&](std::size_t d) {
    for (Index c = 1; c < chunks; ++c) {
      const std::size_t prev = d * chunks + c - 1, cur = d * chunks + c;
      for (Index j = 0; j < N; ++j) {
        carry[cur * N + j] = agg_a[prev * N + j] * carry[prev * N + j] + agg_b[prev * N + j];
      }
    }
  });

  parallel_for(0, tasks, [&](std::size_t task) {
    const Index d = static_cast<Index>(task) / chunks, c = static_cast<Index>(task) % chunks;
    std::vector<Scalar> h(carry.begin() + task * N, carry.begin() + (task + 1) * N);
    for (Index t = c * chunk; t < std::min(T, (c + 1) * chunk); ++t) y(t, d) = detail::scan_step(in, t, d, h);
  });
  return y;
}

// ---------------------------------------------------------------------------
// Mamba block

struct MambaConfig {
  Index dim = 48;
  Index state = 16;
  Index expand = 2;
  Index conv_width = 4;
  Index dt_rank = 0;  // 0 selects ceil(dim / 16)

  Index inner() const { return expand * dim; }
  Index delta_rank() const { return dt_rank > 0 ? dt_rank : (dim + 15) / 16; }
};

/// Learnable tensors of one selective-scan block. Linear weights are stored
/// (out, in).
struct MambaParams {
  using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  MambaConfig config;
  Eigen::VectorXf norm_weight;  // dim
  Matrix in_proj;               // 2*inner x dim
  Matrix conv_weight;           // inner x conv_width
  Eigen::VectorXf conv_bias;    // inner
  Matrix x_proj;                // (dt_rank + 2*state) x inner
  Matrix dt_proj;               // inner x dt_rank
  Eigen::VectorXf dt_bias;      // inner
  Matrix A_log;                 // inner x state; A = -exp(A_log)
  Eigen::VectorXf D;            // inner
  Matrix out_proj;              // dim x inner

  static MambaParams zeros(const MambaConfig& config);
  /// Reads "<prefix>.norm.w", "<prefix>.in_proj.w", ... ; the config is taken
  /// from the tensor shapes.
  static MambaParams load(const WeightArchive& archive, const std::string& prefix);
  void store(WeightArchive& archive, const std::string& prefix) const;

  Matrix A() const { return -A_log.array().exp().matrix(); }
  void validate() const;
};

std::vector<WeightSpec> mamba_weight_specs(const MambaConfig& config, const std::string& prefix);

enum class ScanDirection { Forward, Backward };

/// Pre-norm residual Mamba block over a T x dim token matrix:
/// RMSNorm -> in_proj (stream, gate) -> causal depthwise conv -> SiLU ->
/// selective scan with input-dependent delta, B, C -> * SiLU(gate) ->
/// out_proj -> + input. The backward direction reverses the sequence, runs the
/// forward path and reverses the result.
Tokens mamba_block(const Tokens& tokens, const MambaParams& params,
                   ScanDirection direction = ScanDirection::Forward,
                   Index scan_chunk = kDefaultScanChunk);

/// Forward branch + backward branch with one shared residual:
/// mamba_block(x, fwd) + mamba_block(x, bwd, Backward) - x.
Tokens bidirectional_mamba(const Tokens& tokens, const MambaParams& forward,
                           const MambaParams& backward, Index scan_chunk = kDefaultScanChunk);

Tokens reverse_rows(const Tokens& tokens);

}  // namespace llem
