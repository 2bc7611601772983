#include "llem/ssm.hpp"

#include <cmath>

namespace llem {
namespace {

constexpr float kNormEpsilon = 1e-5f;
constexpr Index kProjectionRowBlock = 256;

using RowMatrix = MambaParams::Matrix;

float silu(float v) { return v / (1.0f + std::exp(-v)); }

float softplus(float v) { return v > 20.0f ? v : std::log1p(std::exp(v)); }

// x * w^T over fixed row blocks. Block boundaries depend only on the row count,
// so the result is independent of the worker count.
template <typename Derived>
Tokens linear(const Eigen::MatrixBase<Derived>& x, const RowMatrix& w) {
  if (x.cols() != w.cols()) {
    throw DimensionError("linear projection: input width " + std::to_string(x.cols()) +
                         " != weight input width " + std::to_string(w.cols()));
  }
  Tokens out(x.rows(), w.rows());
  const Index blocks = (x.rows() + kProjectionRowBlock - 1) / kProjectionRowBlock;
  parallel_for(0, static_cast<std::size_t>(blocks), [&](std::size_t b) {
    const Index start = static_cast<Index>(b) * kProjectionRowBlock;
    const Index len = std::min(kProjectionRowBlock, x.rows() - start);
    out.middleRows(start, len).noalias() = x.middleRows(start, len) * w.transpose();
  });
  return out;
}

std::vector<float> flatten(const RowMatrix& m) {
  return std::vector<float>(m.data(), m.data() + m.size());
}

std::vector<float> flatten(const Eigen::VectorXf& v) {
  return std::vector<float>(v.data(), v.data() + v.size());
}

RowMatrix read_matrix(const WeightArchive& archive, const std::string& name) {
  const auto& t = archive.at(name);
  if (t.dims.size() != 2) throw DimensionError("weight '" + name + "' must be rank 2");
  RowMatrix m(t.dims[0], t.dims[1]);
  std::copy(t.data.begin(), t.data.end(), m.data());
  return m;
}

Eigen::VectorXf read_vector(const WeightArchive& archive, const std::string& name) {
  const auto& t = archive.at(name);
  if (t.dims.size() != 1) throw DimensionError("weight '" + name + "' must be rank 1");
  return Eigen::Map<const Eigen::VectorXf>(t.data.data(), static_cast<Index>(t.data.size()));
}

std::uint32_t u32(Index v) { return static_cast<std::uint32_t>(v); }

Tokens mamba_forward(const Tokens& x, const MambaParams& p, Index chunk) {
  const MambaConfig& cfg = p.config;
  const Index T = x.rows(), dim = cfg.dim, inner = cfg.inner(), N = cfg.state;
  const Index rank = cfg.delta_rank(), width = cfg.conv_width;
  if (x.cols() != dim) {
    throw DimensionError("mamba_block: token dim " + std::to_string(x.cols()) +
                         " != block dim " + std::to_string(dim));
  }

  Tokens normed(T, dim);
  for (Index t = 0; t < T; ++t) {
    const float ms = x.row(t).squaredNorm() / static_cast<float>(dim);
    const float scale = 1.0f / std::sqrt(ms + kNormEpsilon);
    normed.row(t) = (x.row(t) * scale).cwiseProduct(p.norm_weight.transpose());
  }

  const Tokens xz = linear(normed, p.in_proj);

  // Causal depthwise conv over time, left-padded by width - 1.
  Tokens stream(T, inner);
  for (Index t = 0; t < T; ++t) {
    for (Index d = 0; d < inner; ++d) {
      float acc = p.conv_bias(d);
      for (Index k = 0; k < width; ++k) {
        const Index src = t - (width - 1) + k;
        if (src >= 0) acc += p.conv_weight(d, k) * xz(src, d);
      }
      stream(t, d) = silu(acc);
    }
  }

  const Tokens dbc = linear(stream, p.x_proj);
  Tokens delta = linear(dbc.leftCols(rank), p.dt_proj);
  delta.rowwise() += p.dt_bias.transpose();
  delta = delta.unaryExpr([](float v) { return softplus(v); });

  ScanInputs<float> scan;
  scan.u = stream;
  scan.delta = std::move(delta);
  scan.B = dbc.middleCols(rank, N);
  scan.C = dbc.rightCols(N);
  scan.A = p.A();
  scan.D = p.D;
  Tokens y = selective_scan_par(scan, chunk);

  y.array() *= xz.rightCols(inner).unaryExpr([](float v) { return silu(v); }).array();
  return x + linear(y, p.out_proj);
}

}  // namespace

MambaParams MambaParams::zeros(const MambaConfig& config) {
  MambaParams p;
  p.config = config;
  const Index dim = config.dim, inner = config.inner(), N = config.state;
  const Index rank = config.delta_rank();
  p.norm_weight = Eigen::VectorXf::Zero(dim);
  p.in_proj = RowMatrix::Zero(2 * inner, dim);
  p.conv_weight = RowMatrix::Zero(inner, config.conv_width);
  p.conv_bias = Eigen::VectorXf::Zero(inner);
  p.x_proj = RowMatrix::Zero(rank + 2 * N, inner);
  p.dt_proj = RowMatrix::Zero(inner, rank);
  p.dt_bias = Eigen::VectorXf::Zero(inner);
  p.A_log = RowMatrix::Zero(inner, N);
  p.D = Eigen::VectorXf::Zero(inner);
  p.out_proj = RowMatrix::Zero(dim, inner);
  return p;
}

std::vector<WeightSpec> mamba_weight_specs(const MambaConfig& c, const std::string& prefix) {
  const Index inner = c.inner(), rank = c.delta_rank();
  return {
      {prefix + ".norm.w", {u32(c.dim)}},
      {prefix + ".in_proj.w", {u32(2 * inner), u32(c.dim)}},
      {prefix + ".conv1d.w", {u32(inner), u32(c.conv_width)}},
      {prefix + ".conv1d.b", {u32(inner)}},
      {prefix + ".x_proj.w", {u32(rank + 2 * c.state), u32(inner)}},
      {prefix + ".dt_proj.w", {u32(inner), u32(rank)}},
      {prefix + ".dt_proj.b", {u32(inner)}},
      {prefix + ".A_log", {u32(inner), u32(c.state)}},
      {prefix + ".D", {u32(inner)}},
      {prefix + ".out_proj.w", {u32(c.dim), u32(inner)}},
  };
}

MambaParams MambaParams::load(const WeightArchive& archive, const std::string& prefix) {
  const std::vector<std::string> probes = {prefix + ".norm.w", prefix + ".A_log", prefix + ".conv1d.w",
                                           prefix + ".dt_proj.w"};
  if (auto missing = archive.missing(probes); !missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw MissingWeightsError("weight archive is missing mamba tensor(s): " + list);
  }
  MambaConfig cfg;
  const auto& norm = archive.at(prefix + ".norm.w");
  const auto& a_log = archive.at(prefix + ".A_log");
  const auto& conv = archive.at(prefix + ".conv1d.w");
  const auto& dt = archive.at(prefix + ".dt_proj.w");
  if (norm.dims.size() != 1 || a_log.dims.size() != 2 || conv.dims.size() != 2 || dt.dims.size() != 2) {
    throw DimensionError("mamba weights under '" + prefix + "' have unexpected ranks");
  }
  cfg.dim = norm.dims[0];
  cfg.state = a_log.dims[1];
  cfg.conv_width = conv.dims[1];
  cfg.dt_rank = dt.dims[1];
  const Index inner = a_log.dims[0];
  if (cfg.dim == 0 || inner % cfg.dim != 0) {
    throw DimensionError("mamba weights under '" + prefix + "': inner width " +
                         std::to_string(inner) + " is not a multiple of dim " + std::to_string(cfg.dim));
  }
  cfg.expand = inner / cfg.dim;
  const auto specs = mamba_weight_specs(cfg, prefix);
  require_weights(archive, specs);

  MambaParams p;
  p.config = cfg;
  p.norm_weight = read_vector(archive, prefix + ".norm.w");
  p.in_proj = read_matrix(archive, prefix + ".in_proj.w");
  p.conv_weight = read_matrix(archive, prefix + ".conv1d.w");
  p.conv_bias = read_vector(archive, prefix + ".conv1d.b");
  p.x_proj = read_matrix(archive, prefix + ".x_proj.w");
  p.dt_proj = read_matrix(archive, prefix + ".dt_proj.w");
  p.dt_bias = read_vector(archive, prefix + ".dt_proj.b");
  p.A_log = read_matrix(archive, prefix + ".A_log");
  p.D = read_vector(archive, prefix + ".D");
  p.out_proj = read_matrix(archive, prefix + ".out_proj.w");
  p.validate();
  return p;
}

void MambaParams::store(WeightArchive& archive, const std::string& prefix) const {
  validate();
  const auto specs = mamba_weight_specs(config, prefix);
  archive.set(specs[0].name, specs[0].dims, flatten(norm_weight));
  archive.set(specs[1].name, specs[1].dims, flatten(in_proj));
  archive.set(specs[2].name, specs[2].dims, flatten(conv_weight));
  archive.set(specs[3].name, specs[3].dims, flatten(conv_bias));
  archive.set(specs[4].name, specs[4].dims, flatten(x_proj));
  archive.set(specs[5].name, specs[5].dims, flatten(dt_proj));
  archive.set(specs[6].name, specs[6].dims, flatten(dt_bias));
  archive.set(specs[7].name, specs[7].dims, flatten(A_log));
  archive.set(specs[8].name, specs[8].dims, flatten(D));
  archive.set(specs[9].name, specs[9].dims, flatten(out_proj));
}

void MambaParams::validate() const {
  const Index dim = config.dim, inner = config.inner(), N = config.state;
  const Index rank = config.delta_rank();
  const bool ok = dim > 0 && N > 0 && config.expand > 0 && config.conv_width > 0 &&
                  norm_weight.size() == dim && in_proj.rows() == 2 * inner && in_proj.cols() == dim &&
                  conv_weight.rows() == inner && conv_weight.cols() == config.conv_width &&
                  conv_bias.size() == inner && x_proj.rows() == rank + 2 * N &&
                  x_proj.cols() == inner && dt_proj.rows() == inner && dt_proj.cols() == rank &&
                  dt_bias.size() == inner && A_log.rows() == inner && A_log.cols() == N &&
                  D.size() == inner && out_proj.rows() == dim && out_proj.cols() == inner;
  if (!ok) throw DimensionError("mamba parameters have inconsistent shapes");
  if (!A_log.allFinite()) throw NumericalError("mamba A_log has non-finite entries");
}

Tokens reverse_rows(const Tokens& tokens) { return tokens.colwise().reverse(); }

Tokens mamba_block(const Tokens& tokens, const MambaParams& params, ScanDirection direction,
                   Index scan_chunk) {
  if (direction == ScanDirection::Forward) return mamba_forward(tokens, params, scan_chunk);
  return reverse_rows(mamba_forward(reverse_rows(tokens), params, scan_chunk));
}

Tokens bidirectional_mamba(const Tokens& tokens, const MambaParams& forward,
                           const MambaParams& backward, Index scan_chunk) {
  if (forward.config.dim != backward.config.dim) {
    throw DimensionError("bidirectional_mamba: branch dims differ (" +
                         std::to_string(forward.config.dim) + " vs " +
                         std::to_string(backward.config.dim) + ")");
  }
  const Tokens fwd = mamba_block(tokens, forward, ScanDirection::Forward, scan_chunk);
  const Tokens bwd = mamba_block(tokens, backward, ScanDirection::Backward, scan_chunk);
  return fwd + bwd - tokens;
}

}  // namespace llem
