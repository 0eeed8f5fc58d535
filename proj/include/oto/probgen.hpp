#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "oto/domain.hpp"
#include "oto/rng.hpp"

namespace oto::probgen {

struct GenConfig {
  std::uint64_t seed = 0;
  // Target element count, integer-uniform inclusive.
  std::uint64_t ec_min = 4096;   // 2^12
  std::uint64_t ec_max = 16384;  // 2^14
  // Aspect ratio ~ LogNormal(mu, sigma), clamped to [1/ar_clamp, ar_clamp].
  double ar_mu = 0.0;
  double ar_sigma = 1.0;
  double ar_clamp = 10.0;
  // Cell size, log-uniform.
  double cell_min = 1.0 / 1024.0;
  double cell_max = 1.0 / 64.0;
  // Counts: NL = Geom(p_load)+1, NC = Geom(p_constraint)+2, support {0,1,...}.
  double p_load_geom = 0.3;
  double p_constraint_geom = 0.2;
  // Feature-kind table, order = FeatureKind enum order.
  std::array<double, 6> kind_probs = {0.5, 0.1, 0.1, 0.1, 0.1, 0.1};
  // Direction table: x-only, y-only, both.
  std::array<double, 3> dir_probs = {0.3, 0.3, 0.4};
  double vf_min = 0.05;
  double vf_max = 0.95;
  int max_attempts = 10000;        // GenerationStall threshold
  int max_feature_retries = 100;   // DegenerateFeature -> problem regeneration
};

struct ValidityReport {
  bool structural_ok = false;   // >=1 x-fix, >=1 y-fix, >=3 fixed DOFs
  bool nontrivial_ok = false;   // effective load nonzero, no group fully fixed
  bool numerical_ok = false;    // full-density CG solve converged
  std::int64_t cg_iterations = 0;
  bool valid() const { return structural_ok && nontrivial_ok && numerical_ok; }
};

// Raw pre-rejection draw statistics (accumulated across attempts).
struct GenStats {
  std::int64_t attempts = 0;
  std::int64_t nl_sum = 0;
  std::int64_t nc_sum = 0;
  std::int64_t count_draws = 0;  // number of (NL, NC) draw pairs
};

struct GenResult {
  ProblemSpec problem;
  ValidityReport report;
  int attempts = 0;
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

// Appendix-style sampling steps. All draw orders are frozen; see README.
Domain sample_domain(rng::CounterRng& rng, const GenConfig& cfg);
std::pair<int, int> sample_counts(rng::CounterRng& rng, const GenConfig& cfg);
std::vector<int> place_feature(rng::CounterRng& rng, const Domain& d, FeatureKind kind,
                               int max_retries = 100);
// dir in {kDirX, kDirY, kDirBoth}; total magnitude 1 split equally per node.
void assign_load_vector(rng::CounterRng& rng, std::uint8_t dir, std::size_t group_size,
                        double& fx, double& fy);

ValidityReport validate(const ProblemSpec& p);

// k-th problem of the configured stream: pure function of (cfg.seed, index);
// rejected candidates advance the same per-index stream.
GenResult generate(const GenConfig& cfg, std::uint64_t index, GenStats* stats = nullptr);

}  // namespace oto::probgen
