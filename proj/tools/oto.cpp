// oto: problem generation, SIMP solving, refinement, evaluation, corpus
// statistics, and diffusion-math verification in one binary.
//
// Exit codes: 0 success, 1 domain error (invalid problem, unsolvable, bad
// file), 2 usage error. Progress and the resolved configuration go to
// stderr; data goes to files or stdout.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iostream>
#include <mutex>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "oto/dataset.hpp"
#include "oto/diffusion.hpp"
#include "oto/encoding.hpp"
#include "oto/errors.hpp"
#include "oto/fea.hpp"
#include "oto/metrics.hpp"
#include "oto/probgen.hpp"
#include "oto/rng.hpp"
#include "oto/simp.hpp"

namespace {

using nlohmann::json;
using oto::DensityField;
using oto::ProblemSpec;

// Ordered parallel map: runs fn(i) for i in [0, n) on `threads` workers.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  const int n_workers = std::min<int>(threads, static_cast<int>(n));
  pool.reserve(static_cast<std::size_t>(n_workers));
  for (int w = 0; w < n_workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mu);
          if (!first_error) first_error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

DensityField to_double(const std::vector<float>& v) {
  return DensityField(v.begin(), v.end());
}

std::vector<float> to_float(const DensityField& v) {
  return std::vector<float>(v.begin(), v.end());
}

oto::dataset::SampleRecord record_at(const std::string& path, std::size_t index) {
  oto::dataset::Reader reader(path);
  std::size_t i = 0;
  while (auto rec = reader.next()) {
    if (i == index) return *rec;
    ++i;
  }
  throw oto::InvalidArgument("record index " + std::to_string(index) + " out of range for " +
                             path + " (" + std::to_string(i) + " records)");
}

void print_histogram(std::ostream& os, const std::string& name, const std::vector<double>& vals,
                     int bins, bool csv) {
  if (vals.empty()) return;
  const auto [mn_it, mx_it] = std::minmax_element(vals.begin(), vals.end());
  const double lo = *mn_it;
  const double hi = *mx_it;
  const double width = hi > lo ? (hi - lo) / bins : 1.0;
  std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
  for (double v : vals) {
    int b = static_cast<int>((v - lo) / width);
    b = std::clamp(b, 0, bins - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  if (!csv) os << name << " histogram (" << vals.size() << " values):\n";
  for (int b = 0; b < bins; ++b) {
    const double b_lo = lo + b * width;
    const double b_hi = b + 1 == bins ? hi : lo + (b + 1) * width;
    if (csv) {
      os << name << ',' << b_lo << ',' << b_hi << ',' << counts[static_cast<std::size_t>(b)]
         << '\n';
    } else {
      os << "  [" << b_lo << ", " << b_hi << (b + 1 == bins ? "]" : ")") << "  "
         << counts[static_cast<std::size_t>(b)] << '\n';
    }
  }
}

struct GlobalFlags {
  std::uint64_t seed = 0;
  int threads = 1;
  std::string out;
  std::string format = "auto";  // oto1 | csv | auto
};

void require_format(const GlobalFlags& g, const std::string& expected) {
  if (g.format != "auto" && g.format != expected)
    throw oto::InvalidArgument("this subcommand writes " + expected + ", not " + g.format);
}

// ---------------------------------------------------------------- gen ----

int cmd_gen(const GlobalFlags& g, std::uint64_t count, bool solve_flag, int max_iters,
            std::int64_t ec_min, std::int64_t ec_max) {
  require_format(g, "oto1");
  if (g.out.empty()) throw oto::InvalidArgument("gen requires --out");
  if (count == 0) throw oto::InvalidArgument("gen requires --count >= 1");

  oto::probgen::GenConfig cfg;
  cfg.seed = g.seed;
  cfg.ec_min = ec_min;
  cfg.ec_max = ec_max;
  std::cerr << "[oto] gen seed=" << g.seed << " count=" << count << " out=" << g.out
            << " threads=" << g.threads << " ec=[" << ec_min << "," << ec_max << "]"
            << " solve=" << (solve_flag ? "true" : "false") << " max-iters=" << max_iters
            << "\n";

  std::vector<oto::dataset::SampleRecord> records(count);
  std::atomic<std::uint64_t> attempts{0};
  parallel_for(count, g.threads, [&](std::size_t i) {
    const auto res = oto::probgen::generate(cfg, i);
    attempts += res.attempts;
    oto::dataset::SampleRecord rec;
    if (solve_flag) {
      oto::simp::SimpConfig simp_cfg;
      if (max_iters > 0) simp_cfg.max_iters = max_iters;
      const auto opt = oto::simp::optimize(res.problem, simp_cfg);
      rec = oto::dataset::make_record(res.problem, to_float(opt.density), opt.compliance,
                                      static_cast<std::uint32_t>(opt.iterations), g.seed, i);
    } else {
      const DensityField uniform(static_cast<std::size_t>(res.problem.domain.n_elems()),
                                 res.problem.volume_fraction);
      rec = oto::dataset::make_record(res.problem, to_float(uniform),
                                      std::numeric_limits<double>::quiet_NaN(), 0, g.seed, i);
    }
    records[i] = std::move(rec);
  });

  const auto bytes = oto::dataset::write_corpus(records, g.out);
  std::cerr << "[oto] wrote " << count << " records (" << bytes << " bytes), total attempts "
            << attempts.load() << "\n";
  return 0;
}

// -------------------------------------------------------------- solve ----

int cmd_solve(const GlobalFlags& g, const std::string& problem_file, std::size_t index,
              int max_iters) {
  require_format(g, "oto1");
  std::cerr << "[oto] solve problem=" << problem_file << " index=" << index
            << " out=" << (g.out.empty() ? "(stdout only)" : g.out) << " max-iters=" << max_iters
            << "\n";
  const auto rec = record_at(problem_file, index);
  const ProblemSpec problem = rec.problem();

  oto::simp::SimpConfig cfg;
  if (max_iters > 0) cfg.max_iters = max_iters;
  const auto opt = oto::simp::optimize(problem, cfg);

  if (!g.out.empty()) {
    const auto out_rec = oto::dataset::make_record(problem, to_float(opt.density), opt.compliance,
                                                   static_cast<std::uint32_t>(opt.iterations),
                                                   rec.seed, rec.index);
    oto::dataset::write_corpus({out_rec}, g.out);
  }
  const double mean =
      std::accumulate(opt.density.begin(), opt.density.end(), 0.0) / opt.density.size();
  json out = {{"compliance", opt.compliance},
              {"iterations", opt.iterations},
              {"mean_density", mean},
              {"nx", problem.domain.nx},
              {"ny", problem.domain.ny}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

// ------------------------------------------------------------- refine ----

int cmd_refine(const GlobalFlags& g, const std::string& problem_file, std::size_t index,
               int steps, const std::string& candidate_file, std::size_t candidate_index) {
  require_format(g, "oto1");
  std::cerr << "[oto] refine problem=" << problem_file << " index=" << index
            << " steps=" << steps << " candidate="
            << (candidate_file.empty() ? "(problem record density)" : candidate_file)
            << " out=" << (g.out.empty() ? "(stdout only)" : g.out) << "\n";
  const auto rec = record_at(problem_file, index);
  const ProblemSpec problem = rec.problem();
  const auto cand_rec = candidate_file.empty() ? rec : record_at(candidate_file, candidate_index);
  if (static_cast<int>(cand_rec.density.size()) != problem.domain.n_elems())
    throw oto::InvalidArgument("candidate grid does not match the problem grid");

  const auto res = oto::simp::refine(problem, to_double(cand_rec.density), steps, {});

  if (!g.out.empty()) {
    const auto out_rec = oto::dataset::make_record(problem, to_float(res.density), res.compliance,
                                                   static_cast<std::uint32_t>(res.iterations),
                                                   rec.seed, rec.index);
    oto::dataset::write_corpus({out_rec}, g.out);
  }
  json out = {{"compliance", res.compliance}, {"iterations", res.iterations}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

// --------------------------------------------------------------- eval ----

int cmd_eval(const GlobalFlags& g, const std::string& candidates_file,
             const std::string& references_file, int refine_steps, int best_of, bool threshold) {
  require_format(g, "csv");
  if (best_of < 1) throw oto::InvalidArgument("--best-of must be >= 1");
  std::cerr << "[oto] eval candidates=" << candidates_file << " references=" << references_file
            << " refine=" << refine_steps << " best-of=" << best_of
            << " threshold=" << (threshold ? "true" : "false") << " threads=" << g.threads
            << " out=" << (g.out.empty() ? "(stdout)" : g.out) << "\n";

  const auto candidates = oto::dataset::read_corpus(candidates_file);
  const auto references = oto::dataset::read_corpus(references_file);
  if (references.empty()) throw oto::InvalidArgument("no reference records");
  if (candidates.size() != references.size() * static_cast<std::size_t>(best_of))
    throw oto::InvalidArgument("candidate count must be references × best-of (" +
                               std::to_string(candidates.size()) + " vs " +
                               std::to_string(references.size()) + "×" +
                               std::to_string(best_of) + ")");

  oto::metrics::EvalOptions opts;
  opts.threshold = threshold;

  std::vector<oto::metrics::EvalRecord> rows(references.size());
  parallel_for(references.size(), g.threads, [&](std::size_t i) {
    const auto& ref = references[i];
    const ProblemSpec problem = ref.problem();
    double ref_c = ref.compliance;
    if (std::isnan(ref_c)) {
      // unlabeled reference compliance: establish it with a fresh solve
      ref_c = oto::metrics::compliance_error(to_double(ref.density), 1.0, problem, opts) + 1.0;
    }

    std::vector<DensityField> cands;
    for (int k = 0; k < best_of; ++k) {
      auto cand = to_double(candidates[i * best_of + static_cast<std::size_t>(k)].density);
      if (refine_steps > 0)
        cand = oto::simp::refine(problem, cand, refine_steps, {}).density;
      cands.push_back(std::move(cand));
    }
    rows[i] = best_of == 1 ? oto::metrics::evaluate(cands[0], ref_c, problem, opts)
                           : oto::metrics::best_of_n(cands, ref_c, problem, opts);
  });

  std::ostream* csv = &std::cout;
  std::ofstream file;
  if (!g.out.empty()) {
    file.open(g.out);
    if (!file) throw oto::IoError("cannot open " + g.out);
    csv = &file;
  }
  *csv << "problem_id,ce,vfe,failed,wall_time\n";
  csv->precision(17);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    *csv << i << ',' << r.ce << ',' << r.vfe << ',' << (r.failed ? 1 : 0) << ',' << r.wall_time
         << '\n';
  }

  const auto agg = oto::metrics::aggregate(rows);
  json out = {{"mean_ce", agg.mean_ce},       {"median_ce", agg.median_ce},
              {"mean_vfe", agg.mean_vfe},     {"failure_rate", agg.failure_rate},
              {"n_total", agg.n_total},       {"n_failed", agg.n_failed}};
  // NaN markers are not representable in strict JSON; emit nulls there.
  if (std::isnan(agg.mean_ce)) {
    out["mean_ce"] = nullptr;
    out["median_ce"] = nullptr;
    out["mean_vfe"] = nullptr;
  }
  std::cerr << out.dump(2) << "\n";
  if (g.out.empty()) std::cout.flush();
  return 0;
}

// -------------------------------------------------------------- stats ----

int cmd_stats(const GlobalFlags& g, const std::string& in_file, int bins) {
  std::cerr << "[oto] stats in=" << in_file << " bins=" << bins << " format=" << g.format
            << "\n";
  const bool csv = g.format == "csv";
  oto::dataset::Reader reader(in_file);
  std::size_t count = 0;
  std::size_t labeled = 0;
  std::vector<double> ecs, ars, vfs, compliances;
  while (auto rec = reader.next()) {
    ++count;
    if (rec->labeled) ++labeled;
    ecs.push_back(static_cast<double>(rec->domain.n_elems()));
    ars.push_back(rec->domain.aspect_ratio());
    vfs.push_back(rec->vf);
    if (!std::isnan(rec->compliance)) compliances.push_back(rec->compliance);
  }
  if (csv) {
    std::cout << "metric,bin_lo,bin_hi,count\n";
    std::cout << "count,,," << count << "\n";
    std::cout << "labeled,,," << labeled << "\n";
  } else {
    std::cout << "records: " << count << " (" << labeled << " labeled)\n";
  }
  print_histogram(std::cout, "element_count", ecs, bins, csv);
  print_histogram(std::cout, "aspect_ratio", ars, bins, csv);
  print_histogram(std::cout, "volume_fraction", vfs, bins, csv);
  if (!compliances.empty()) print_histogram(std::cout, "compliance", compliances, bins, csv);
  return 0;
}

// ---------------------------------------------------------- sample-math ----

int cmd_sample_math(const GlobalFlags& g, int steps, double guidance, const std::string& mode,
                    bool oracle, int latents, int dim, int T) {
  if (!oracle)
    throw oto::InvalidArgument("sample-math requires --oracle (no trained denoiser exists)");
  std::cerr << "[oto] sample-math steps=" << steps << " guidance=" << guidance
            << " mode=" << mode << " seed=" << g.seed << " latents=" << latents
            << " dim=" << dim << " T=" << T << "\n";

  oto::diffusion::SampleConfig cfg;
  cfg.steps = steps;
  cfg.guidance = guidance;
  cfg.mode = mode == "ddpm" ? oto::diffusion::SampleMode::Ddpm : oto::diffusion::SampleMode::Ddim;
  cfg.T = T;
  cfg.dim = static_cast<std::size_t>(dim);
  const auto schedule = oto::diffusion::cosine_schedule(T);
  const auto condition = oto::encoding::null_embedding();

  double worst = 0.0;
  double sum = 0.0;
  for (int l = 0; l < latents; ++l) {
    oto::rng::CounterRng z0_rng(g.seed, 1000000 + static_cast<std::uint64_t>(l));
    oto::diffusion::Tensor z0(cfg.dim);
    for (auto& x : z0) x = z0_rng.normal();

    cfg.seed = g.seed + static_cast<std::uint64_t>(l) + 1;
    const auto denoiser = oto::diffusion::oracle_denoiser(z0, schedule);
    const auto z = oto::diffusion::sample(denoiser, &condition, cfg);

    double err = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) err = std::max(err, std::abs(z[i] - z0[i]));
    worst = std::max(worst, err);
    sum += err;
  }
  json out = {{"latents", latents},
              {"max_abs_error", worst},
              {"mean_max_abs_error", sum / latents},
              {"tolerance", 1e-5},
              {"pass", worst <= 1e-5}};
  std::cout << out.dump(2) << "\n";
  if (worst > 1e-5) throw oto::NonConvergence("oracle reconstruction above tolerance", latents, worst);
  return 0;
}

// -------------------------------------------------------------- bench ----

ProblemSpec canonical_cantilever() {
  ProblemSpec p;
  p.domain = {64, 64, 1.0 / 64.0};
  p.volume_fraction = 0.4;
  oto::ConstraintGroup wall;
  wall.kind = oto::FeatureKind::FullEdge;
  wall.fix_x = wall.fix_y = true;
  for (int j = 0; j <= 64; ++j) wall.node_ids.push_back(p.domain.node(0, j));
  p.constraints.push_back(wall);
  oto::LoadGroup tip;
  tip.kind = oto::FeatureKind::EdgePoint;
  tip.dir = oto::kDirY;
  tip.node_ids.push_back(p.domain.node(64, 32));
  tip.fx = 0.0;
  tip.fy = -1.0;
  p.loads.push_back(tip);
  return p;
}

int cmd_bench(const GlobalFlags&, int runs, int k) {
  std::cerr << "[oto] bench runs=" << runs << " refine-k=" << k
            << " problem=64x64 cantilever vf=0.4\n";
  const auto problem = canonical_cantilever();
  const auto full =
      oto::metrics::time_solver(problem, oto::metrics::TimeMode::FullSimp, k, runs);
  std::cerr << "[oto] full SIMP median " << full.median_seconds << " s\n";
  const auto refine =
      oto::metrics::time_solver(problem, oto::metrics::TimeMode::RefineK, k, runs);
  std::cerr << "[oto] refine-" << k << " median " << refine.median_seconds << " s\n";

  json out = {{"full_simp", {{"median_s", full.median_seconds}, {"variance", full.variance}}},
              {"refine", {{"k", k},
                          {"median_s", refine.median_seconds},
                          {"variance", refine.variance}}},
              {"refine_over_full", refine.median_seconds / full.median_seconds},
              {"runs", runs}};
  std::cout << out.dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"oto: topology-optimization data pipeline"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalFlags g;
  app.add_option("--seed", g.seed, "base RNG seed")->capture_default_str();
  app.add_option("--threads", g.threads, "worker threads over independent problems")
      ->capture_default_str();
  app.add_option("--out", g.out, "output file");
  app.add_option("--format", g.format, "output format")
      ->check(CLI::IsMember({"auto", "oto1", "csv"}))
      ->capture_default_str();

  // gen
  auto* gen = app.add_subcommand("gen", "generate problems into an OTO1 corpus");
  std::uint64_t gen_count = 0;
  bool gen_solve = false;
  int gen_max_iters = 0;
  std::int64_t gen_ec_min = 4096, gen_ec_max = 16384;
  gen->add_option("--count", gen_count, "number of problems")->required();
  gen->add_flag("--solve", gen_solve, "label each record with a SIMP solution");
  gen->add_option("--max-iters", gen_max_iters, "cap SIMP iterations when labeling");
  gen->add_option("--ec-min", gen_ec_min, "minimum element count")->capture_default_str();
  gen->add_option("--ec-max", gen_ec_max, "maximum element count")->capture_default_str();

  // solve
  auto* solve = app.add_subcommand("solve", "run SIMP on one stored problem");
  std::string solve_problem;
  std::size_t solve_index = 0;
  int solve_max_iters = 0;
  solve->add_option("--problem", solve_problem, "OTO1 file with the problem")->required();
  solve->add_option("--index", solve_index, "record index")->capture_default_str();
  solve->add_option("--max-iters", solve_max_iters, "cap SIMP iterations");

  // refine
  auto* refine = app.add_subcommand("refine", "run a few SIMP steps from a candidate");
  std::string refine_problem, refine_candidate;
  std::size_t refine_index = 0, refine_cand_index = 0;
  int refine_steps = 10;
  refine->add_option("--problem", refine_problem, "OTO1 file with the problem")->required();
  refine->add_option("--index", refine_index, "record index")->capture_default_str();
  refine->add_option("--steps", refine_steps, "refinement steps (1..50)")->capture_default_str();
  refine->add_option("--candidate", refine_candidate,
                     "OTO1 file with the starting density (defaults to the problem record)");
  refine->add_option("--candidate-index", refine_cand_index, "candidate record index")
      ->capture_default_str();

  // eval
  auto* eval = app.add_subcommand("eval", "score candidates against references (CSV report)");
  std::string eval_candidates, eval_references;
  int eval_refine = 0, eval_best_of = 1;
  bool eval_threshold = false;
  eval->add_option("--candidates", eval_candidates, "OTO1 candidates")->required();
  eval->add_option("--references", eval_references, "OTO1 references")->required();
  eval->add_option("--refine", eval_refine, "refinement steps before scoring")
      ->check(CLI::IsMember({0, 5, 10}))
      ->capture_default_str();
  eval->add_option("--best-of", eval_best_of, "candidates per reference")->capture_default_str();
  eval->add_flag("--threshold", eval_threshold, "binarize candidates at 0.5 before the solve");

  // stats
  auto* stats = app.add_subcommand("stats", "summarize an OTO1 corpus");
  std::string stats_in;
  int stats_bins = 8;
  stats->add_option("--in", stats_in, "OTO1 file")->required();
  stats->add_option("--bins", stats_bins, "histogram bins")->capture_default_str();

  // sample-math
  auto* sm = app.add_subcommand("sample-math", "oracle-denoiser sampling verification");
  int sm_steps = 20, sm_latents = 100, sm_dim = 64 * 64, sm_T = 1000;
  double sm_guidance = 2.0;
  std::string sm_mode = "ddim";
  bool sm_oracle = false;
  sm->add_option("--steps", sm_steps, "denoising steps")->capture_default_str();
  sm->add_option("--guidance", sm_guidance, "classifier-free guidance scale")
      ->capture_default_str();
  sm->add_option("--mode", sm_mode, "sampler")->check(CLI::IsMember({"ddim", "ddpm"}))
      ->capture_default_str();
  sm->add_flag("--oracle", sm_oracle, "use the closed-form oracle denoiser");
  sm->add_option("--latents", sm_latents, "number of random latents")->capture_default_str();
  sm->add_option("--dim", sm_dim, "latent dimension")->capture_default_str();
  sm->add_option("--T", sm_T, "schedule length")->capture_default_str();

  // bench
  auto* bench = app.add_subcommand("bench", "wall-clock timing on the canonical 64x64 problem");
  int bench_runs = 10, bench_k = 10;
  bench->add_option("--runs", bench_runs, "timed runs (after one warm-up)")
      ->capture_default_str();
  bench->add_option("--refine-k", bench_k, "refinement steps for the refine timing")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;  // help/version are success; anything else is usage
  }

  try {
    if (gen->parsed())
      return cmd_gen(g, gen_count, gen_solve, gen_max_iters, gen_ec_min, gen_ec_max);
    if (solve->parsed()) return cmd_solve(g, solve_problem, solve_index, solve_max_iters);
    if (refine->parsed())
      return cmd_refine(g, refine_problem, refine_index, refine_steps, refine_candidate,
                        refine_cand_index);
    if (eval->parsed())
      return cmd_eval(g, eval_candidates, eval_references, eval_refine, eval_best_of,
                      eval_threshold);
    if (stats->parsed()) return cmd_stats(g, stats_in, stats_bins);
    if (sm->parsed())
      return cmd_sample_math(g, sm_steps, sm_guidance, sm_mode, sm_oracle, sm_latents, sm_dim,
                             sm_T);
    if (bench->parsed()) return cmd_bench(g, bench_runs, bench_k);
  } catch (const oto::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
