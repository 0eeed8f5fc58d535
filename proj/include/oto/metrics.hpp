#pragma once

#include <cstddef>
#include <vector>

#include "oto/domain.hpp"
#include "oto/fea.hpp"
#include "oto/simp.hpp"

namespace oto::metrics {

// One evaluated candidate. `failed` ⇔ CE > 1.0 or the candidate was
// unsolvable (ce/vfe stay NaN markers in the unsolvable case).
struct EvalRecord {
  double ce = std::numeric_limits<double>::quiet_NaN();
  double vfe = std::numeric_limits<double>::quiet_NaN();
  bool failed = false;
  double wall_time = 0.0;  // seconds spent in the evaluation solve(s)
};

struct EvalOptions {
  // Binarize at 0.5 before the FEA solve. Default evaluates densities as-is
  // (gray values enter through SIMP penalization).
  bool threshold = false;
  simp::SimpConfig simp;    // material model for the fresh solve
  fea::SolveOptions solve;  // tolerance / iteration budget of that solve
};

// CE = (C(candidate) − C_ref)/C_ref via a fresh penalized FEA solve.
// Throws CandidateUnsolvable when the solve does not converge.
double compliance_error(const DensityField& candidate, double reference_compliance,
                        const ProblemSpec& problem, const EvalOptions& opts = {});

// Signed error: mean(candidate) − target_vf.
double volume_fraction_error(const DensityField& candidate, double target_vf);

// Full record: CE + VFE + failure classification + wall time. Unsolvable
// candidates become failed records instead of propagating the exception.
EvalRecord evaluate(const DensityField& candidate, double reference_compliance,
                    const ProblemSpec& problem, const EvalOptions& opts = {});

struct Aggregate {
  double mean_ce = std::numeric_limits<double>::quiet_NaN();
  double median_ce = std::numeric_limits<double>::quiet_NaN();
  double mean_vfe = std::numeric_limits<double>::quiet_NaN();
  double failure_rate = 0.0;
  std::size_t n_total = 0;
  std::size_t n_failed = 0;
};

// Failures are excluded from the CE/VFE aggregates; when every record failed
// the aggregates stay NaN and the rate is 1.0. Median of an even count is the
// midpoint of the two central values.
Aggregate aggregate(const std::vector<EvalRecord>& records);

// Evaluates every candidate and keeps the one with minimum compliance among
// the solvable ones; fails only if all of them fail. wall_time accumulates
// the cost of all n evaluations.
EvalRecord best_of_n(const std::vector<DensityField>& candidates, double reference_compliance,
                     const ProblemSpec& problem, const EvalOptions& opts = {});

// τ = c_train / (c_simp − c_infer); throws NonPositiveSavings when the
// per-use saving is not positive.
double break_even(double c_train, double c_simp, double c_infer);

enum class TimeMode {
  FullSimp,  // full optimization, convergence exit disabled (all max_iters run)
  RefineK,   // k refinement steps from a uniform volume-fraction field
};

struct TimingReport {
  double median_seconds = 0.0;
  double variance = 0.0;  // sample variance of the timed runs
  std::vector<double> runs;
};

// Wall-clock of the requested pipeline: one discarded warm-up run, then
// n_runs timed runs; reports median and sample variance.
TimingReport time_solver(const ProblemSpec& problem, TimeMode mode, int k = 10,
                         int n_runs = 10, const simp::SimpConfig& cfg = {});

// Pearson statistic Σ (obs−exp)²/exp; `expected` may be probabilities or
// counts (it is scaled to the observed total).
double chi_square_statistic(const std::vector<std::int64_t>& counts,
                            const std::vector<double>& expected);
double chi_square_uniform(const std::vector<std::int64_t>& counts);

// Upper critical value at significance 0.01 for df in [1, 30].
double chi_square_critical_99(int df);

}  // namespace oto::metrics
