#include "oto/simp.hpp"

#include <algorithm>
#include <cmath>

#include "oto/errors.hpp"

namespace oto::simp {

DensityFilter::DensityFilter(const Domain& d, double radius) {
  if (!(radius >= 1.0)) throw InvalidArgument("filter radius must be >= 1");
  n_ = d.n_elems();
  const int rc = static_cast<int>(std::ceil(radius)) - 1;
  rowptr_.assign(n_ + 1, 0);
  for (int ex = 0; ex < d.nx; ++ex)
    for (int ey = 0; ey < d.ny; ++ey) {
      const int e = d.elem(ex, ey);
      const std::size_t row_begin = w_.size();
      double sum = 0.0;
      for (int dx = -rc; dx <= rc; ++dx) {
        const int ix = ex + dx;
        if (ix < 0 || ix >= d.nx) continue;
        for (int dy = -rc; dy <= rc; ++dy) {
          const int iy = ey + dy;
          if (iy < 0 || iy >= d.ny) continue;
          const double w = radius - std::hypot(dx, dy);
          if (w > 0.0) {
            col_.push_back(d.elem(ix, iy));
            w_.push_back(w);
            sum += w;
          }
        }
      }
      for (std::size_t k = row_begin; k < w_.size(); ++k) w_[k] /= sum;
      rowptr_[e + 1] = static_cast<std::int64_t>(w_.size());
    }
  // rows were appended in element order e = ex*ny + ey already
}

DensityField DensityFilter::forward(const DensityField& x) const {
  if (static_cast<int>(x.size()) != n_) throw InvalidArgument("filter: length mismatch");
  DensityField y(n_, 0.0);
  for (int e = 0; e < n_; ++e) {
    double s = 0.0;
    for (std::int64_t k = rowptr_[e]; k < rowptr_[e + 1]; ++k) s += w_[k] * x[col_[k]];
    y[e] = s;
  }
  return y;
}

std::vector<double> DensityFilter::backward(const std::vector<double>& sens_phys) const {
  if (static_cast<int>(sens_phys.size()) != n_) throw InvalidArgument("filter: length mismatch");
  std::vector<double> y(n_, 0.0);
  for (int e = 0; e < n_; ++e) {
    const double s = sens_phys[e];
    for (std::int64_t k = rowptr_[e]; k < rowptr_[e + 1]; ++k) y[col_[k]] += w_[k] * s;
  }
  return y;
}

DensityField density_filter(const Domain& d, const DensityField& field, double radius) {
  return DensityFilter(d, radius).forward(field);
}

std::vector<double> compliance_sensitivity(const Domain& d, const DensityField& phys,
                                           const FeaSolution& sol, const SimpConfig& cfg) {
  if (static_cast<int>(phys.size()) != d.n_elems())
    throw InvalidArgument("sensitivity: densities length mismatch");
  if (static_cast<int>(sol.displacements.size()) != d.n_dofs())
    throw InvalidArgument("sensitivity: displacement length mismatch");
  const fea::ElemMatrix& ke = fea::unit_ke();
  std::vector<double> dc(d.n_elems());
  for (int ex = 0; ex < d.nx; ++ex)
    for (int ey = 0; ey < d.ny; ++ey) {
      const auto ed = fea::element_dofs(d, ex, ey);
      double ue[8];
      for (int a = 0; a < 8; ++a) ue[a] = sol.displacements[ed[a]];
      double energy = 0.0;
      for (int a = 0; a < 8; ++a) {
        double row = 0.0;
        for (int b = 0; b < 8; ++b) row += ke[a][b] * ue[b];
        energy += ue[a] * row;
      }
      const int e = d.elem(ex, ey);
      dc[e] = -cfg.p * std::pow(phys[e], cfg.p - 1.0) * (cfg.E_solid - cfg.E_min) * energy;
    }
  return dc;
}

namespace {

void oc_candidate(const DensityField& x, const std::vector<double>& dc, double lambda,
                  const SimpConfig& cfg, DensityField& out) {
  const std::size_t n = x.size();
  for (std::size_t e = 0; e < n; ++e) {
    const double num = std::max(-dc[e], 0.0);
    const double b = x[e] * std::pow(num / lambda, cfg.oc_damping);
    const double lo = std::max(x[e] - cfg.move_limit, 0.0);
    const double hi = std::min(x[e] + cfg.move_limit, 1.0);
    out[e] = std::clamp(b, lo, hi);
  }
}

double mean_of(const DensityField& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

}  // namespace

DensityField oc_update(const DensityField& x, const std::vector<double>& dc,
                       double volume_target, const SimpConfig& cfg, const VolumeFn& volume_of) {
  if (x.size() != dc.size()) throw InvalidArgument("oc_update: size mismatch");
  if (!(volume_target > 0.0 && volume_target < 1.0))
    throw InvalidArgument("oc_update: volume_target must be in (0,1)");
  const VolumeFn vol = volume_of ? volume_of : VolumeFn(mean_of);

  DensityField cand(x.size());
  // lambda -> 0: up-clamped field (maximum volume); lambda -> inf: down-clamped.
  double lo = 1e-30;
  oc_candidate(x, dc, lo, cfg, cand);
  if (vol(cand) < volume_target - cfg.volume_tol)
    throw BisectionFailure("oc_update: volume target unreachable (degenerate sensitivities)");

  double hi = 1.0;
  int doublings = 0;
  for (;;) {
    oc_candidate(x, dc, hi, cfg, cand);
    if (vol(cand) <= volume_target) break;
    if (++doublings > 100)
      throw BisectionFailure("oc_update: lambda bracket not found in 100 doublings");
    hi *= 2.0;
  }

  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    oc_candidate(x, dc, mid, cfg, cand);
    const double v = vol(cand);
    if (std::abs(v - volume_target) <= cfg.volume_tol) return cand;
    if (v > volume_target)
      lo = mid;
    else
      hi = mid;
  }
  throw BisectionFailure("oc_update: bisection failed to reach volume tolerance");
}

namespace {

OptResult run_loop(const ProblemSpec& problem, const SimpConfig& cfg, const DensityField* init,
                   int fixed_steps) {
  const Domain& d = problem.domain;
  if (problem.loads.empty()) throw InvalidArgument("optimize: no load groups");
  if (problem.constraints.empty()) throw InvalidArgument("optimize: no constraint groups");
  const double vf = problem.volume_fraction;
  if (!(vf > 0.0)) throw InvalidArgument("optimize: volume fraction must be positive");

  const fea::Material mat = cfg.material();
  const auto fixed = fea::fixed_mask(problem);
  const auto f = fea::load_vector(problem);
  fea::GridSystem sys(d, fixed);
  const DensityFilter filter(d, cfg.filter_radius);

  OptResult res;

  if (vf >= 1.0) {
    // No material scarcity: the all-solid design is optimal immediately.
    res.density.assign(d.n_elems(), 1.0);
    sys.assemble(res.density, mat);
    auto sol = sys.solve(f);
    res.compliance = sol.compliance;
    res.compliance_history = {sol.compliance};
    res.iterations = 1;
    return res;
  }

  DensityField x;
  if (init) {
    x = *init;
    if (static_cast<int>(x.size()) != d.n_elems())
      throw InvalidArgument("candidate length != nx*ny");
    for (double& v : x) v = std::clamp(v, 0.0, 1.0);
  } else {
    x.assign(d.n_elems(), vf);
  }

  std::vector<double> warm(d.n_dofs(), 0.0);
  fea::SolveOptions sopts;
  sopts.warm_start = &warm;

  const int iters_cap = fixed_steps > 0 ? fixed_steps : cfg.max_iters;
  DensityField phys;
  int it = 0;
  for (; it < iters_cap;) {
    ++it;
    phys = filter.forward(x);
    sys.assemble(phys, mat);
    FeaSolution sol = sys.solve(f, sopts);
    warm = sol.displacements;
    res.compliance_history.push_back(sol.compliance);

    const std::vector<double> energies = sys.element_energies(sol.displacements);
    std::vector<double> dc_phys(d.n_elems());
    for (int e = 0; e < d.n_elems(); ++e)
      dc_phys[e] =
          -cfg.p * std::pow(phys[e], cfg.p - 1.0) * (cfg.E_solid - cfg.E_min) * energies[e];
    const std::vector<double> dc = filter.backward(dc_phys);

    DensityField x_new = oc_update(
        x, dc, vf, cfg, [&](const DensityField& cand) { return mean_of(filter.forward(cand)); });

    double change = 0.0;
    for (std::size_t e = 0; e < x.size(); ++e) change = std::max(change, std::abs(x_new[e] - x[e]));
    x = std::move(x_new);
    if (fixed_steps == 0 && change < cfg.change_tol) break;
  }

  // The returned field is the filtered design after the last update; solve it
  // once more so the reported compliance belongs to exactly that field.
  res.density = filter.forward(x);
  sys.assemble(res.density, mat);
  FeaSolution final_sol = sys.solve(f, sopts);
  res.compliance = final_sol.compliance;
  res.iterations = it;
  return res;
}

}  // namespace

OptResult optimize(const ProblemSpec& problem, const SimpConfig& cfg) {
  return run_loop(problem, cfg, nullptr, 0);
}

OptResult refine(const ProblemSpec& problem, const DensityField& candidate, int steps,
                 const SimpConfig& cfg) {
  if (steps < 1 || steps > 50) throw InvalidArgument("refine: steps must be in [1, 50]");
  return run_loop(problem, cfg, &candidate, steps);
}

}  // namespace oto::simp
