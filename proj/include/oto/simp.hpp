#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "oto/domain.hpp"
#include "oto/fea.hpp"

namespace oto::simp {

struct SimpConfig {
  double p = 3.0;
  double E_solid = 1.0;
  double E_min = 1e-9;
  double filter_radius = 1.5;  // element units
  double move_limit = 0.2;
  double oc_damping = 0.5;
  int max_iters = 150;
  double change_tol = 0.01;
  double volume_tol = 1e-4;

  fea::Material material() const { return {E_solid, E_min, p}; }
};

// Conic density filter rho~_e = sum_i w_ei rho_i / sum_i w_ei with
// w_ei = max(0, radius - dist(e, i)), distances between element centers in
// element units. Row-normalized weights are built once per (domain, radius).
class DensityFilter {
 public:
  DensityFilter(const Domain& d, double radius);

  DensityField forward(const DensityField& x) const;
  // Chain rule for row-normalized weights: sens_design = W~^T sens_physical.
  std::vector<double> backward(const std::vector<double>& sens_phys) const;

 private:
  int n_ = 0;
  std::vector<std::int64_t> rowptr_;
  std::vector<int> col_;
  std::vector<double> w_;  // normalized
};

// One-shot convenience matching the operation contract.
DensityField density_filter(const Domain& d, const DensityField& field, double radius);

// Adjoint sensitivity of compliance w.r.t. the physical densities:
// dC/drho_e = -p rho_e^(p-1) (E_solid - E_min) u_e^T K0 u_e.
std::vector<double> compliance_sensitivity(const Domain& d, const DensityField& phys,
                                           const FeaSolution& sol, const SimpConfig& cfg);

// Optimality-criteria update: rho_new = clamp(rho * (-dC/drho / lambda)^eta,
// rho +- move_limit, [0, 1]), lambda bisected until the volume measure of the
// update matches volume_target within volume_tol. The default volume measure
// is the mean of the returned field; optimize() supplies the mean of the
// filtered field instead so the physical design satisfies the constraint.
using VolumeFn = std::function<double(const DensityField&)>;
DensityField oc_update(const DensityField& x, const std::vector<double>& dc,
                       double volume_target, const SimpConfig& cfg,
                       const VolumeFn& volume_of = {});

struct OptResult {
  DensityField density;                    // physical (filtered) field
  double compliance = 0.0;                 // fresh penalized solve on `density`
  std::vector<double> compliance_history;  // per-iteration objective values
  int iterations = 0;
};

// Full SIMP loop: filter -> solve -> sensitivity -> OC until max density
// change < change_tol or max_iters. Initial design rho == volume_fraction.
OptResult optimize(const ProblemSpec& problem, const SimpConfig& cfg = {});

// Exactly `steps` iterations (no early exit) starting from `candidate` as
// the initial design field. steps must lie in [1, 50].
OptResult refine(const ProblemSpec& problem, const DensityField& candidate, int steps,
                 const SimpConfig& cfg = {});

}  // namespace oto::simp
