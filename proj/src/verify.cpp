#include "llem/verify.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <random>
#include <thread>

#include "llem/admm.hpp"
#include "llem/image_io.hpp"
#include "llem/metrics.hpp"
#include "llem/model_weights.hpp"
#include "llem/relight.hpp"
#include "llem/ssm.hpp"
#include "llem/weight_archive.hpp"

namespace llem::verify {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

template <typename Scalar>
BasicImage<Scalar> uniform_image(std::mt19937_64& rng, Index h, Index w, Index c, double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  BasicImage<Scalar> img(h, w, c);
  for (Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<Scalar>(dist(rng));
  return img;
}

template <typename Fn>
CheckResult timed(int id, std::string name, Fn&& body) {
  CheckResult r;
  r.id = id;
  r.name = std::move(name);
  const auto start = Clock::now();
  try {
    body(r);
  } catch (const std::exception& e) {
    r.passed = false;
    r.detail = std::string("exception: ") + e.what();
  }
  r.seconds = seconds_since(start);
  return r;
}

ScanInputs<float> random_scan(std::mt19937_64& rng, Index steps, Index inner, Index state) {
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_real_distribution<float> dt(0.01f, 1.0f);
  std::uniform_real_distribution<float> alog(-1.0f, 1.5f);
  ScanInputs<float> in;
  in.u.resize(steps, inner);
  in.delta.resize(steps, inner);
  in.B.resize(steps, state);
  in.C.resize(steps, state);
  in.A.resize(inner, state);
  in.D.resize(inner);
  for (Index i = 0; i < in.u.size(); ++i) in.u.data()[i] = normal(rng);
  for (Index i = 0; i < in.delta.size(); ++i) in.delta.data()[i] = dt(rng);
  for (Index i = 0; i < in.B.size(); ++i) in.B.data()[i] = normal(rng);
  for (Index i = 0; i < in.C.size(); ++i) in.C.data()[i] = normal(rng);
  for (Index i = 0; i < in.A.size(); ++i) in.A.data()[i] = -std::exp(alog(rng));
  for (Index i = 0; i < in.D.size(); ++i) in.D.data()[i] = normal(rng);
  return in;
}

}  // namespace

double subproblem_objective(const SubproblemInstance& inst, const BasicImage<double>& x) {
  const auto data = (x.array() * inst.fixed.array() - inst.I.array()).square().sum();
  const auto penalty =
      (x.array() - inst.target.array() + inst.multiplier.array() / inst.mu).square().sum();
  return data + 0.5 * inst.mu * penalty;
}

BasicImage<double> finite_difference_gradient(const SubproblemInstance& inst,
                                              const BasicImage<double>& x, double step) {
  BasicImage<double> grad(x.shape());
  BasicImage<double> probe = x;
  for (Index i = 0; i < x.size(); ++i) {
    const double saved = probe.data()[i];
    probe.data()[i] = saved + step;
    const double up = subproblem_objective(inst, probe);
    probe.data()[i] = saved - step;
    const double down = subproblem_objective(inst, probe);
    probe.data()[i] = saved;
    grad.data()[i] = (up - down) / (2.0 * step);
  }
  return grad;
}

CheckResult check_stationarity() {
  return timed(1, "stationarity of R/L closed forms (finite differences)", [](CheckResult& r) {
    std::mt19937_64 rng(101);
    std::uniform_real_distribution<double> mu_dist(0.1, 10.0);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const auto I = uniform_image<float>(rng, 8, 8, 3, 0.0, 1.0);
      auto state = AdmmState<float>::initial(uniform_image<float>(rng, 8, 8, 3, 0.0, 1.0),
                                             uniform_image<float>(rng, 8, 8, 3, 0.05, 1.0),
                                             static_cast<float>(mu_dist(rng)));
      state.P = uniform_image<float>(rng, 8, 8, 3, 0.0, 1.0);
      state.Q = uniform_image<float>(rng, 8, 8, 3, 0.0, 1.0);
      state.Y1 = uniform_image<float>(rng, 8, 8, 3, -0.5, 0.5);
      state.Y2 = uniform_image<float>(rng, 8, 8, 3, -0.5, 0.5);

      const Image r_new = update_R(state, I);
      SubproblemInstance rp{I.cast<double>(), state.L.cast<double>(), state.P.cast<double>(),
                            state.Y1.cast<double>(), static_cast<double>(state.mu)};
      worst = std::max(worst, finite_difference_gradient(rp, r_new.cast<double>()).values().cwiseAbs().maxCoeff());

      state.R = r_new;
      const Image l_new = update_L(state, I);
      SubproblemInstance lq{I.cast<double>(), state.R.cast<double>(), state.Q.cast<double>(),
                            state.Y2.cast<double>(), static_cast<double>(state.mu)};
      worst = std::max(worst, finite_difference_gradient(lq, l_new.cast<double>()).values().cwiseAbs().maxCoeff());
    }
    r.passed = worst < 1e-3;
    r.detail = "max |grad| = " + fmt("%.3e", worst) + " (tol 1e-3)";
  });
}

CheckResult check_identity_round_trip() {
  return timed(2, "identity round-trip with zero priors", [](CheckResult& r) {
    std::mt19937_64 rng(202);
    SolverConfig cfg;
    cfg.mu0 = 1e4;
    cfg.iterations = 1;
    cfg.rho = 1.0;
    cfg.exposure_gamma = 1.0;
    cfg.init = InitMode::Classical;
    double worst = 0.0;
    const auto start = Clock::now();
    for (int trial = 0; trial < 10; ++trial) {
      const Image I = uniform_image<float>(rng, 64, 64, 3, 0.0, 1.0);
      const auto result = run_unfolding(I, cfg);
      const double err = (result.output.values().cast<double>() - I.values().cast<double>()).norm() /
                         I.values().cast<double>().norm();
      worst = std::max(worst, err);
    }
    const double elapsed = seconds_since(start);
    r.passed = worst < 1e-2 && elapsed < 5.0;
    r.detail = "max relative error = " + fmt("%.3e", worst) + " (tol 1e-2), " + fmt("%.2f", elapsed) +
               " s (limit 5 s)";
  });
}

CheckResult check_residual_monotonicity() {
  return timed(3, "ADMM primal residual ||R-P|| non-increasing", [](CheckResult& r) {
    std::mt19937_64 rng(303);
    double worst_increase = -std::numeric_limits<double>::infinity();
    for (double mu0 : {0.1, 1.0, 10.0}) {
      SolverConfig cfg;
      cfg.mu0 = mu0;
      cfg.rho = 1.0;
      cfg.iterations = 10;
      cfg.init = InitMode::Classical;
      for (int trial = 0; trial < 5; ++trial) {
        const Image I = uniform_image<float>(rng, 32, 32, 3, 0.0, 1.0);
        const auto result = run_unfolding(I, cfg);
        for (std::size_t k = 1; k < result.history.size(); ++k) {
          worst_increase = std::max(worst_increase,
                                    result.history[k].residual_rp - result.history[k - 1].residual_rp);
        }
      }
    }
    r.passed = worst_increase <= 1e-7;
    r.detail = "largest step-to-step change = " + fmt("%.3e", worst_increase) + " (allowed 1e-7)";
  });
}

CheckResult check_scan_equivalence() {
  return timed(4, "selective scan: chunked parallel vs sequential oracle", [](CheckResult& r) {
    double worst = 0.0;
    const auto start = Clock::now();
    for (Index steps : {1, 2, 17, 64, 257}) {
      for (Index state : {1, 4, 16}) {
        for (int seed = 0; seed < 10; ++seed) {
          std::mt19937_64 rng(static_cast<std::uint64_t>(seed * 1000 + steps * 31 + state));
          const auto in = random_scan(rng, steps, 8, state);
          const auto seq = selective_scan_seq(in);
          const auto par = selective_scan_par(in, kDefaultScanChunk);
          worst = std::max(worst, static_cast<double>((seq - par).cwiseAbs().maxCoeff()));
        }
      }
    }
    const double elapsed = seconds_since(start);
    r.passed = worst < 1e-5 && elapsed < 10.0;
    r.detail = "max |par - seq| = " + fmt("%.3e", worst) + " (tol 1e-5), " + fmt("%.2f", elapsed) +
               " s (limit 10 s)";
  });
}

CheckResult check_bidirectional() {
  return timed(5, "bidirectional Mamba: reversal identity and zero-weight identity", [](CheckResult& r) {
    MambaConfig cfg;
    cfg.dim = 16;
    cfg.state = 8;
    const auto specs = mamba_weight_specs(cfg, "m");
    const auto archive = random_weights(specs, 55, 0.2f);
    const auto params = MambaParams::load(archive, "m");
    std::mt19937_64 rng(505);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    bool reversal_exact = true;
    for (Index steps : {1, 7, 100}) {
      Tokens x(steps, cfg.dim);
      for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
      const Tokens backward = mamba_block(x, params, ScanDirection::Backward);
      const Tokens manual = reverse_rows(mamba_block(reverse_rows(x), params, ScanDirection::Forward));
      reversal_exact = reversal_exact && (backward.array() == manual.array()).all();
    }
    Tokens x(50, cfg.dim);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    const auto zero = MambaParams::zeros(cfg);
    const bool identity = (bidirectional_mamba(x, zero, zero).array() == x.array()).all();
    r.passed = reversal_exact && identity;
    r.detail = std::string("backward == reverse.forward.reverse: ") + (reversal_exact ? "exact" : "MISMATCH") +
               "; zero-weight identity: " + (identity ? "exact" : "MISMATCH");
  });
}

CheckResult check_unet_contract() {
  return timed(6, "U-shape feature pyramid and illumination sensitivity", [](CheckResult& r) {
    UNetConfig cfg;
    cfg.base_channels = 16;
    const auto archive = random_weights(relight_weight_specs(cfg), 66, 0.1f);
    const auto net = RelightNet::load(archive, cfg);
    std::mt19937_64 rng(606);
    const Image R = uniform_image<float>(rng, 64, 64, 3, 0.0, 1.0);
    Image L = uniform_image<float>(rng, 64, 64, 3, 0.05, 1.0);
    const auto trace = net.forward_traced(R, L);
    const Shape f0 = trace.pyramid.at(0).shape();
    const Shape f1 = trace.pyramid.at(1).shape();
    const Shape out = trace.output.shape();
    const bool shapes = f0 == Shape{64, 64, 16} && f1 == Shape{32, 32, 32} && out == Shape{64, 64, 3};

    std::uniform_int_distribution<Index> pix(0, 63);
    const Index py = pix(rng), px = pix(rng);
    const float h = 1e-2f;
    Image up = L, down = L;
    for (Index c = 0; c < 3; ++c) {
      up(py, px, c) += h;
      down(py, px, c) -= h;
    }
    const Image out_up = net.forward(R, up);
    const Image out_down = net.forward(R, down);
    const double sensitivity =
        (out_up.values() - out_down.values()).cwiseAbs().maxCoeff() / (2.0 * h);
    r.passed = shapes && sensitivity > 0.0;
    r.detail = "F0 " + f0.str() + ", F1 " + f1.str() + ", output " + out.str() +
               "; max |d out / d L| = " + fmt("%.3e", sensitivity);
  });
}

CheckResult check_metrics() {
  return timed(7, "PSNR / SSIM reference values", [](CheckResult& r) {
    const Image half(16, 16, 3, 0.5f), quarter(16, 16, 3, 0.25f);
    const double p = psnr(half, quarter);
    const double expected_psnr = 10.0 * std::log10(1.0 / 0.0625);
    std::mt19937_64 rng(707);
    const Image x = uniform_image<float>(rng, 32, 32, 3, 0.0, 1.0);
    const double self = ssim(x, x);
    const Image zeros(32, 32, 3, 0.0f), ones(32, 32, 3, 1.0f);
    const double c1 = 1e-4;
    const double constant = ssim(zeros, ones);
    const double expected_constant = c1 / (1.0 + c1);
    const bool ok = std::abs(p - 12.0412) <= 1e-3 && std::abs(p - expected_psnr) <= 1e-9 &&
                    std::abs(self - 1.0) <= 1e-9 && std::abs(constant - expected_constant) <= 1e-7;
    r.passed = ok;
    r.detail = "psnr = " + fmt("%.6f", p) + " dB, ssim(x,x) = " + fmt("%.12f", self) +
               ", constant-pair ssim = " + fmt("%.6e", constant) + " (expected " +
               fmt("%.6e", expected_constant) + ")";
  });
}

CheckResult check_determinism(std::size_t threads) {
  return timed(8, "enhance determinism across runs and thread counts", [threads](CheckResult& r) {
    const auto weights = init_weights(88);
    SolverConfig cfg;
    cfg.prior_r = PriorKind::IfbmambaUnet;
    cfg.prior_l = PriorKind::MambaBlock;
    std::mt19937_64 rng(808);
    const Image I = uniform_image<float>(rng, 32, 32, 3, 0.0, 0.4);
    auto run = [&](std::size_t n) {
      ScopedThreadCount scope(n);
      return encode_png(run_unfolding(I, cfg, &weights).output);
    };
    const auto a = run(1);
    const auto b = run(threads);
    const auto c = run(threads);
    r.passed = a == b && b == c;
    r.detail = "PNG bytes (1 thread vs " + std::to_string(threads) + " threads, repeated): " +
               (r.passed ? "identical" : "DIFFER") + ", " + std::to_string(a.size()) + " bytes";
  });
}

std::vector<BenchRow> benchmark_scan(const std::vector<Index>& lengths, std::size_t threads,
                                     Index inner, Index state, int repeats) {
  std::vector<BenchRow> rows;
  for (Index steps : lengths) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(steps));
    const auto in = random_scan(rng, steps, inner, state);
    auto best_of = [&](auto&& fn) {
      double best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < std::max(1, repeats); ++i) {
        const auto start = Clock::now();
        fn();
        best = std::min(best, seconds_since(start));
      }
      return best;
    };
    const double seq = best_of([&] { (void)selective_scan_seq(in); });
    double par = 0.0;
    {
      ScopedThreadCount scope(threads);
      par = best_of([&] { (void)selective_scan_par(in); });
    }
    rows.push_back({steps, "seq", 1, seq, static_cast<double>(steps) / seq});
    rows.push_back({steps, "par", threads, par, static_cast<double>(steps) / par});
  }
  return rows;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::string out = "steps,variant,threads,seconds,tokens_per_second\n";
  char line[160];
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line), "%lld,%s,%zu,%.6f,%.1f\n", static_cast<long long>(r.steps),
                  r.variant.c_str(), r.threads, r.seconds, r.tokens_per_second);
    out += line;
  }
  return out;
}

CheckResult check_scan_throughput(std::size_t threads) {
  return timed(9, "scan throughput (reported, not gated)", [threads](CheckResult& r) {
    r.gated = false;
    const auto rows = benchmark_scan({4096}, threads);
    const double seq = rows.at(0).tokens_per_second, par = rows.at(1).tokens_per_second;
    r.passed = par >= seq;
    r.detail = "T=4096: seq " + fmt("%.0f", seq) + " tok/s, par " + fmt("%.0f", par) + " tok/s on " +
               std::to_string(threads) + " workers (" +
               std::to_string(std::thread::hardware_concurrency()) + " hardware threads)";
  });
}

CheckResult check_io_round_trips() {
  return timed(10, "weight archive and PNG round-trips", [](CheckResult& r) {
    std::mt19937_64 rng(1010);
    std::uniform_int_distribution<int> count(1, 12), rank(0, 4), extent(1, 5), byte(0, 255);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    bool archive_ok = true;
    for (int trial = 0; trial < 20; ++trial) {
      WeightArchive a;
      const int n = count(rng);
      for (int e = 0; e < n; ++e) {
        std::vector<std::uint32_t> dims(static_cast<std::size_t>(rank(rng)));
        std::size_t total = 1;
        for (auto& d : dims) total *= (d = static_cast<std::uint32_t>(extent(rng)));
        std::vector<float> data(total);
        for (auto& v : data) v = normal(rng);
        a.add("t" + std::to_string(trial) + "/w" + std::to_string(e), dims, data);
      }
      const auto bytes = a.serialize();
      archive_ok = archive_ok && WeightArchive::deserialize(bytes).serialize() == bytes;
    }

    bool png_ok = true;
    const auto dir = std::filesystem::temp_directory_path() /
                     ("llem_verify_" + std::to_string(std::random_device{}()));
    std::filesystem::create_directories(dir);
    for (int trial = 0; trial < 5; ++trial) {
      Image img(7 + trial, 9 + 2 * trial, 3);
      for (Index i = 0; i < img.size(); ++i) img.data()[i] = static_cast<float>(byte(rng)) / 255.0f;
      const auto original = quantize_rgb8(img);
      const auto path = dir / ("img" + std::to_string(trial) + ".png");
      save_image(img, path);
      const Image loaded = load_image(path);
      png_ok = png_ok && quantize_rgb8(loaded) == original && encode_png(loaded) == encode_png(img);
    }
    WeightArchive w = init_weights(3);
    save_weights(w, dir / "w.llew");
    archive_ok = archive_ok && load_weights(dir / "w.llew").serialize() == w.serialize();
    std::filesystem::remove_all(dir);

    r.passed = archive_ok && png_ok;
    r.detail = std::string("weights: ") + (archive_ok ? "byte-exact" : "MISMATCH") +
               ", PNG: " + (png_ok ? "byte-exact" : "MISMATCH");
  });
}

std::vector<CheckResult> run_all(const Options& options) {
  std::vector<CheckResult> results;
  auto record = [&](CheckResult r) {
    if (options.on_result) options.on_result(r);
    results.push_back(std::move(r));
  };
  record(check_stationarity());
  record(check_identity_round_trip());
  record(check_residual_monotonicity());
  record(check_scan_equivalence());
  record(check_bidirectional());
  record(check_unet_contract());
  record(check_metrics());
  record(check_determinism(options.threads));
  record(check_scan_throughput(options.threads));
  record(check_io_round_trips());
  return results;
}

bool all_passed(const std::vector<CheckResult>& results) {
  for (const auto& r : results)
    if (r.gated && !r.passed) return false;
  return true;
}

std::string format_result(const CheckResult& r) {
  const char* status = r.passed ? "PASS" : (r.gated ? "FAIL" : "INFO");
  char head[64];
  std::snprintf(head, sizeof(head), "[%s] %2d ", status, r.id);
  return std::string(head) + r.name + " -- " + r.detail + " (" + fmt("%.2f", r.seconds) + " s)";
}

}  // namespace llem::verify
