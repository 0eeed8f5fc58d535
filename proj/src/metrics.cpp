#include "oto/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "oto/errors.hpp"
#include "oto/fea.hpp"

namespace oto::metrics {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double solve_candidate(const DensityField& candidate, const ProblemSpec& problem,
                       const EvalOptions& opts) {
  const Domain& d = problem.domain;
  if (static_cast<int>(candidate.size()) != d.n_elems())
    throw InvalidArgument("candidate length != nx*ny");

  DensityField rho = candidate;
  if (opts.threshold)
    for (double& v : rho) v = v >= 0.5 ? 1.0 : 0.0;

  const auto K = fea::assemble(d, rho, opts.simp.material());
  const auto fixed = fea::fixed_mask(problem);
  const auto f = fea::load_vector(problem);
  try {
    return fea::solve(K, f, fixed, opts.solve).compliance;
  } catch (const NonConvergence& e) {
    throw CandidateUnsolvable(std::string("evaluation solve did not converge: ") + e.what());
  }
}

}  // namespace

double compliance_error(const DensityField& candidate, double reference_compliance,
                        const ProblemSpec& problem, const EvalOptions& opts) {
  if (!(reference_compliance > 0.0))
    throw InvalidArgument("reference compliance must be positive");
  const double c = solve_candidate(candidate, problem, opts);
  return (c - reference_compliance) / reference_compliance;
}

double volume_fraction_error(const DensityField& candidate, double target_vf) {
  if (!(target_vf > 0.0 && target_vf < 1.0)) throw InvalidArgument("target_vf must be in (0,1)");
  if (candidate.empty()) throw InvalidArgument("empty candidate");
  const double mean =
      std::accumulate(candidate.begin(), candidate.end(), 0.0) / static_cast<double>(candidate.size());
  return mean - target_vf;
}

EvalRecord evaluate(const DensityField& candidate, double reference_compliance,
                    const ProblemSpec& problem, const EvalOptions& opts) {
  EvalRecord rec;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    rec.ce = compliance_error(candidate, reference_compliance, problem, opts);
    rec.vfe = volume_fraction_error(candidate, problem.volume_fraction);
    rec.failed = rec.ce > 1.0;
  } catch (const CandidateUnsolvable&) {
    rec.failed = true;  // ce/vfe stay NaN markers
  }
  rec.wall_time = seconds_since(t0);
  return rec;
}

Aggregate aggregate(const std::vector<EvalRecord>& records) {
  if (records.empty()) throw InvalidArgument("aggregate: no records");
  Aggregate agg;
  agg.n_total = records.size();
  std::vector<double> ces;
  double vfe_sum = 0.0;
  for (const auto& r : records) {
    if (r.failed) {
      ++agg.n_failed;
      continue;
    }
    ces.push_back(r.ce);
    vfe_sum += r.vfe;
  }
  agg.failure_rate = static_cast<double>(agg.n_failed) / static_cast<double>(agg.n_total);
  if (ces.empty()) return agg;  // all failed: NaN markers, rate 1.0

  agg.mean_ce = std::accumulate(ces.begin(), ces.end(), 0.0) / static_cast<double>(ces.size());
  agg.mean_vfe = vfe_sum / static_cast<double>(ces.size());
  std::sort(ces.begin(), ces.end());
  const std::size_t mid = ces.size() / 2;
  agg.median_ce = ces.size() % 2 ? ces[mid] : 0.5 * (ces[mid - 1] + ces[mid]);
  return agg;
}

EvalRecord best_of_n(const std::vector<DensityField>& candidates, double reference_compliance,
                     const ProblemSpec& problem, const EvalOptions& opts) {
  if (candidates.empty()) throw InvalidArgument("best_of_n: no candidates");
  EvalRecord best;
  best.failed = true;
  double total_time = 0.0;
  bool have_best = false;
  for (const auto& cand : candidates) {
    const EvalRecord rec = evaluate(cand, reference_compliance, problem, opts);
    total_time += rec.wall_time;
    if (std::isnan(rec.ce)) continue;  // unsolvable: cannot rank by compliance
    if (!have_best || rec.ce < best.ce) {
      best = rec;
      have_best = true;
    }
  }
  best.wall_time = total_time;
  return best;
}

double break_even(double c_train, double c_simp, double c_infer) {
  const double savings = c_simp - c_infer;
  if (!(savings > 0.0))
    throw NonPositiveSavings("per-use saving c_simp - c_infer must be positive");
  return c_train / savings;
}

TimingReport time_solver(const ProblemSpec& problem, TimeMode mode, int k, int n_runs,
                         const simp::SimpConfig& cfg) {
  if (n_runs < 1) throw InvalidArgument("n_runs must be >= 1");
  simp::SimpConfig run_cfg = cfg;
  DensityField uniform(static_cast<std::size_t>(problem.domain.n_elems()),
                       problem.volume_fraction);

  const auto run_once = [&] {
    if (mode == TimeMode::FullSimp) {
      run_cfg.change_tol = 0.0;  // measure the full max_iters schedule every run
      simp::optimize(problem, run_cfg);
    } else {
      simp::refine(problem, uniform, k, run_cfg);
    }
  };

  run_once();  // warm-up, discarded
  TimingReport rep;
  rep.runs.reserve(static_cast<std::size_t>(n_runs));
  for (int i = 0; i < n_runs; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once();
    rep.runs.push_back(seconds_since(t0));
  }

  std::vector<double> sorted = rep.runs;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t mid = sorted.size() / 2;
  rep.median_seconds = sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);

  if (sorted.size() > 1) {
    const double mean =
        std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    double ss = 0.0;
    for (double t : sorted) ss += (t - mean) * (t - mean);
    rep.variance = ss / static_cast<double>(sorted.size() - 1);
  }
  return rep;
}

double chi_square_statistic(const std::vector<std::int64_t>& counts,
                            const std::vector<double>& expected) {
  if (counts.size() != expected.size() || counts.size() < 2)
    throw InvalidArgument("chi_square: need matching bins, at least 2");
  const double total =
      static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::int64_t{0}));
  const double exp_total = std::accumulate(expected.begin(), expected.end(), 0.0);
  if (!(total > 0.0) || !(exp_total > 0.0)) throw InvalidArgument("chi_square: empty sample");
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const double e = expected[i] / exp_total * total;
    if (!(e > 0.0)) throw InvalidArgument("chi_square: bin with zero expectation");
    const double d = static_cast<double>(counts[i]) - e;
    stat += d * d / e;
  }
  return stat;
}

double chi_square_uniform(const std::vector<std::int64_t>& counts) {
  return chi_square_statistic(counts, std::vector<double>(counts.size(), 1.0));
}

double chi_square_critical_99(int df) {
  static constexpr double kTable[] = {
      6.635,  9.210,  11.345, 13.277, 15.086, 16.812, 18.475, 20.090, 21.666, 23.209,
      24.725, 26.217, 27.688, 29.141, 30.578, 32.000, 33.409, 34.805, 36.191, 37.566,
      38.932, 40.289, 41.638, 42.980, 44.314, 45.642, 46.963, 48.278, 49.588, 50.892};
  if (df < 1 || df > 30) throw InvalidArgument("chi_square_critical_99: df out of table range");
  return kTable[df - 1];
}

}  // namespace oto::metrics
