// llem: low-light enhancement by Retinex deep unfolding.
//
//   llem enhance      --input low.png --output out.png [--weights w.llew] ...
//   llem decompose    --input low.png --out-r r.png --out-l l.png
//   llem verify       runs the invariant suite, exit 0 iff every gated check passes
//   llem bench        selective-scan throughput CSV
//   llem metrics      --ref gt.png --test out.png
//   llem init-weights --output w.llew --seed 0

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "llem/admm.hpp"
#include "llem/image_io.hpp"
#include "llem/metrics.hpp"
#include "llem/model_weights.hpp"
#include "llem/verify.hpp"
#include "llem/weight_archive.hpp"

namespace fs = std::filesystem;

namespace {

struct EnhanceArgs {
  std::string input, output, weights, trace, init = "auto";
  int iters = 3;
  std::string prior_r = "zero", prior_l = "zero";
  double lambda = 0.1, gamma = 0.05, mu0 = 1.0, rho = 1.0, exposure_gamma = 1.0;
  long long box_radius = 1;
  int tv_steps = 5;
  float tv_weight = 0.1f;
  std::vector<long long> patch = {1, 1};
};

struct DecomposeArgs {
  std::string input, weights, out_r, out_l;
};

struct BenchArgs {
  std::vector<long long> lengths = {256, 1024, 4096};
  std::size_t threads = 4;
  long long inner = 32, state = 16;
  int repeats = 3;
  std::string output;
};

struct MetricsArgs {
  std::string ref, test;
};

struct InitArgs {
  std::string output;
  std::uint64_t seed = 0;
  long long base_channels = 16, state = 16, expand = 2;
  std::vector<long long> patch = {1, 1};
  bool cls_token = false;
  float stddev = 0.02f;
};

std::vector<fs::path> png_files(const fs::path& dir) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  return files;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw llem::FormatError("cannot write " + path.string());
  out << text;
}

llem::InitMode parse_init(const std::string& s) {
  if (s == "auto") return llem::InitMode::Auto;
  if (s == "classical") return llem::InitMode::Classical;
  if (s == "learned") return llem::InitMode::Learned;
  throw std::invalid_argument("unknown --init mode '" + s + "'");
}

int run_enhance(const EnhanceArgs& a) {
  std::optional<llem::WeightArchive> weights;
  if (!a.weights.empty()) weights = llem::load_weights(a.weights);

  llem::SolverConfig cfg;
  cfg.lambda = a.lambda;
  cfg.gamma = a.gamma;
  cfg.mu0 = a.mu0;
  cfg.rho = a.rho;
  cfg.iterations = a.iters;
  cfg.exposure_gamma = a.exposure_gamma;
  cfg.prior_r = llem::parse_prior_kind(a.prior_r);
  cfg.prior_l = llem::parse_prior_kind(a.prior_l);
  cfg.prior_options.box_radius = a.box_radius;
  cfg.prior_options.tv_steps = a.tv_steps;
  cfg.prior_options.tv_weight = a.tv_weight;
  cfg.init = parse_init(a.init);
  cfg.unet.patch = {a.patch.at(0), a.patch.size() > 1 ? a.patch[1] : a.patch[0]};
  if (weights && weights->contains("relight/enc0/conv.w")) {
    cfg.unet = llem::infer_unet_config(*weights, cfg.unet);
  }
  cfg.validate();
  const auto* w = weights ? &*weights : nullptr;

  auto process = [&](const fs::path& in, const fs::path& out, const fs::path& trace) {
    const llem::Image image = llem::load_image(in);
    const auto result = llem::run_unfolding(image, cfg, w);
    llem::save_image(result.output, out);
    if (!trace.empty()) write_text(trace, llem::trace_csv(result.history));
    if (result.nan_clamped != 0) {
      std::fprintf(stderr, "warning: %zu NaN values clamped in %s\n", result.nan_clamped,
                   in.string().c_str());
    }
  };

  if (fs::is_directory(a.input)) {
    fs::create_directories(a.output);
    if (!a.trace.empty()) fs::create_directories(a.trace);
    for (const auto& file : png_files(a.input)) {
      const fs::path trace = a.trace.empty() ? fs::path() : fs::path(a.trace) / (file.stem().string() + ".csv");
      process(file, fs::path(a.output) / file.filename(), trace);
      std::printf("%s\n", file.filename().string().c_str());
    }
  } else {
    process(a.input, a.output, a.trace);
  }
  return 0;
}

int run_decompose(const DecomposeArgs& a) {
  std::optional<llem::WeightArchive> weights;
  if (!a.weights.empty()) weights = llem::load_weights(a.weights);
  const llem::Image image = llem::load_image(a.input);
  const auto d = llem::initialize_decomposition(image, weights ? &*weights : nullptr);
  llem::save_image(d.reflectance, a.out_r);
  llem::save_image(d.illumination, a.out_l);
  return 0;
}

int run_verify(std::size_t threads) {
  llem::verify::Options options;
  options.threads = threads;
  options.on_result = [](const llem::verify::CheckResult& r) {
    std::printf("%s\n", llem::verify::format_result(r).c_str());
    std::fflush(stdout);
  };
  const auto results = llem::verify::run_all(options);
  const bool ok = llem::verify::all_passed(results);
  std::printf("verify: %s\n", ok ? "all checks passed" : "FAILED");
  return ok ? 0 : 1;
}

int run_bench(const BenchArgs& a) {
  std::vector<llem::Index> lengths(a.lengths.begin(), a.lengths.end());
  const auto rows = llem::verify::benchmark_scan(lengths, a.threads, a.inner, a.state, a.repeats);
  const std::string csv = llem::verify::bench_csv(rows);
  if (a.output.empty()) {
    std::fputs(csv.c_str(), stdout);
  } else {
    write_text(a.output, csv);
  }
  return 0;
}

void print_metrics(const std::string& label, const llem::MetricReport& r) {
  std::printf("%s: %s\n", label.c_str(), r.to_text().c_str());
  std::printf("%s\n", r.to_json().c_str());
}

int run_metrics(const MetricsArgs& a) {
  if (fs::is_directory(a.ref) != fs::is_directory(a.test)) {
    throw std::invalid_argument("--ref and --test must both be files or both be directories");
  }
  if (!fs::is_directory(a.ref)) {
    print_metrics(fs::path(a.test).filename().string(),
                  llem::compare(llem::load_image(a.ref), llem::load_image(a.test)));
    return 0;
  }
  double psnr_sum = 0.0, ssim_sum = 0.0;
  std::size_t n = 0;
  for (const auto& file : png_files(a.ref)) {
    const fs::path other = fs::path(a.test) / file.filename();
    if (!fs::exists(other)) {
      std::fprintf(stderr, "warning: no test image for %s\n", file.filename().string().c_str());
      continue;
    }
    const auto r = llem::compare(llem::load_image(file), llem::load_image(other));
    print_metrics(file.filename().string(), r);
    psnr_sum += r.psnr;
    ssim_sum += r.ssim;
    ++n;
  }
  if (n == 0) throw std::runtime_error("no paired images found");
  llem::MetricReport mean;
  mean.psnr = psnr_sum / static_cast<double>(n);
  mean.ssim = ssim_sum / static_cast<double>(n);
  print_metrics("mean over " + std::to_string(n) + " pairs", mean);
  return 0;
}

int run_init_weights(const InitArgs& a) {
  llem::UNetConfig unet;
  unet.base_channels = a.base_channels;
  unet.state = a.state;
  unet.expand = a.expand;
  unet.patch = {a.patch.at(0), a.patch.size() > 1 ? a.patch[1] : a.patch[0]};
  unet.class_token = a.cls_token;
  const auto specs = llem::canonical_weight_specs(unet, a.state, a.expand);
  llem::save_weights(llem::random_weights(specs, a.seed, a.stddev), a.output);
  std::printf("wrote %zu tensors to %s\n", specs.size(), a.output.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-light image enhancement by Retinex deep unfolding with Mamba priors"};
  app.require_subcommand(1);

  EnhanceArgs enhance;
  auto* enh = app.add_subcommand("enhance", "Enhance a low-light PNG (or a directory of PNGs)");
  enh->add_option("--input", enhance.input, "Input PNG or directory")->required();
  enh->add_option("--output", enhance.output, "Output PNG or directory")->required();
  enh->add_option("--weights", enhance.weights, "Weight archive (.llew)");
  enh->add_option("--iters", enhance.iters, "Unfolding iterations K")->capture_default_str();
  enh->add_option("--prior-r", enhance.prior_r,
                  "Reflectance prior: zero|box_residual|tv_residual|mamba_block|ifbmamba_unet")
      ->capture_default_str();
  enh->add_option("--prior-l", enhance.prior_l, "Illumination prior (same choices)")->capture_default_str();
  enh->add_option("--lambda", enhance.lambda, "Reflectance prior weight")->capture_default_str();
  enh->add_option("--gamma", enhance.gamma, "Illumination prior weight")->capture_default_str();
  enh->add_option("--mu0", enhance.mu0, "Initial penalty")->capture_default_str();
  enh->add_option("--rho", enhance.rho, "Penalty growth factor per iteration")->capture_default_str();
  enh->add_option("--exposure-gamma", enhance.exposure_gamma, "Illumination exponent 1/g in the output")
      ->capture_default_str();
  enh->add_option("--trace", enhance.trace, "Write per-iteration residual CSV here");
  enh->add_option("--init", enhance.init, "Decomposition: auto|classical|learned")->capture_default_str();
  enh->add_option("--box-radius", enhance.box_radius, "box_residual radius")->capture_default_str();
  enh->add_option("--tv-steps", enhance.tv_steps, "tv_residual step count")->capture_default_str();
  enh->add_option("--tv-weight", enhance.tv_weight, "tv_residual step size")->capture_default_str();
  enh->add_option("--patch", enhance.patch, "U-Net patch size per level")->expected(1, 2);

  DecomposeArgs decompose;
  auto* dec = app.add_subcommand("decompose", "Write the initial reflectance and illumination");
  dec->add_option("--input", decompose.input, "Input PNG")->required();
  dec->add_option("--weights", decompose.weights, "Weight archive for the learned initialiser");
  dec->add_option("--out-r", decompose.out_r, "Reflectance PNG")->required();
  dec->add_option("--out-l", decompose.out_l, "Illumination PNG")->required();

  std::size_t verify_threads = 4;
  auto* ver = app.add_subcommand("verify", "Run the invariant suite");
  ver->add_option("--threads", verify_threads, "Workers for the multi-threaded checks")->capture_default_str();

  BenchArgs bench;
  auto* ben = app.add_subcommand("bench", "Selective-scan throughput, sequential vs chunked");
  ben->add_option("--lengths", bench.lengths, "Sequence lengths")->capture_default_str();
  ben->add_option("--threads", bench.threads, "Workers for the chunked scan")->capture_default_str();
  ben->add_option("--inner", bench.inner, "Inner channels")->capture_default_str();
  ben->add_option("--state", bench.state, "State size")->capture_default_str();
  ben->add_option("--repeats", bench.repeats, "Timing repeats (best is kept)")->capture_default_str();
  ben->add_option("--output", bench.output, "CSV path (stdout if omitted)");

  MetricsArgs metrics;
  auto* met = app.add_subcommand("metrics", "PSNR and SSIM between reference and test images");
  met->add_option("--ref", metrics.ref, "Reference PNG or directory")->required();
  met->add_option("--test", metrics.test, "Test PNG or directory")->required();

  InitArgs init;
  auto* ini = app.add_subcommand("init-weights", "Write a seeded N(0, 0.02^2) archive with canonical names");
  ini->add_option("--output", init.output, "Archive path")->required();
  ini->add_option("--seed", init.seed, "RNG seed")->capture_default_str();
  ini->add_option("--base-channels", init.base_channels, "U-Net base channels C")->capture_default_str();
  ini->add_option("--state", init.state, "SSM state size")->capture_default_str();
  ini->add_option("--expand", init.expand, "SSM expansion factor")->capture_default_str();
  ini->add_option("--patch", init.patch, "Patch size per level")->expected(1, 2);
  ini->add_flag("--cls-token", init.cls_token, "Prepend a class token in IFBMamba blocks");
  ini->add_option("--stddev", init.stddev, "Initialisation standard deviation")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    std::cout << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (*enh) return run_enhance(enhance);
    if (*dec) return run_decompose(decompose);
    if (*ver) return run_verify(verify_threads);
    if (*ben) return run_bench(bench);
    if (*met) return run_metrics(metrics);
    if (*ini) return run_init_weights(init);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
