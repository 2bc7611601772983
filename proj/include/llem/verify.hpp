#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "llem/tensor.hpp"

namespace llem::verify {

struct CheckResult {
  int id = 0;
  std::string name;
  bool passed = false;
  bool gated = true;  // ungated checks are reported but never fail the suite
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  /// Worker count for the multi-threaded side of the determinism and
  /// benchmark checks.
  std::size_t threads = 4;
  /// Called after each check completes.
  std::function<void(const CheckResult&)> on_result;
};

CheckResult check_stationarity();         // 1
CheckResult check_identity_round_trip();  // 2
CheckResult check_residual_monotonicity();// 3
CheckResult check_scan_equivalence();     // 4
CheckResult check_bidirectional();        // 5
CheckResult check_unet_contract();        // 6
CheckResult check_metrics();              // 7
CheckResult check_determinism(std::size_t threads);  // 8
CheckResult check_scan_throughput(std::size_t threads);  // 9 (reported)
CheckResult check_io_round_trips();       // 10

std::vector<CheckResult> run_all(const Options& options = {});
bool all_passed(const std::vector<CheckResult>& results);
std::string format_result(const CheckResult& r);

// Scan throughput measurement shared with the CLI bench command.
struct BenchRow {
  Index steps = 0;
  std::string variant;  // "seq" or "par"
  std::size_t threads = 1;
  double seconds = 0.0;
  double tokens_per_second = 0.0;
};

std::vector<BenchRow> benchmark_scan(const std::vector<Index>& lengths, std::size_t threads,
                                     Index inner = 32, Index state = 16, int repeats = 3);
std::string bench_csv(const std::vector<BenchRow>& rows);

// Finite-difference oracles for the R- and L-subproblem objectives, evaluated
// in double precision. Exposed so tests can reuse them.
struct SubproblemInstance {
  BasicImage<double> I, fixed, target, multiplier;  // fixed = L (or R), target = P (or Q)
  double mu;
};

/// ||x o fixed - I||^2 + mu/2 ||x - target + multiplier/mu||^2
double subproblem_objective(const SubproblemInstance& inst, const BasicImage<double>& x);
/// Central differences of subproblem_objective, one entry per element.
BasicImage<double> finite_difference_gradient(const SubproblemInstance& inst,
                                              const BasicImage<double>& x, double step = 1e-4);

}  // namespace llem::verify
