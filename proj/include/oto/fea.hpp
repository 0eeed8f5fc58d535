#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

#include "oto/domain.hpp"
#include "oto/errors.hpp"

namespace oto::fea {

using ElemMatrix = std::array<std::array<double, 8>, 8>;

inline constexpr double kNu = 0.3;  // plane stress, unit thickness

// SIMP material interpolation E(rho) = E_min + rho^p (E_solid - E_min).
struct Material {
  double E_solid = 1.0;
  double E_min = 1e-9;
  double p = 3.0;
  double factor(double rho) const { return E_min + std::pow(rho, p) * (E_solid - E_min); }
};

// Q4 plane-stress element stiffness for a square element of unit thickness,
// integrated with 2x2 Gauss quadrature. Independent of cell size (B ~ 1/h,
// dA ~ h^2). Node order is counterclockwise from the lower-left corner,
// matching element_dofs below.
ElemMatrix element_stiffness(double nu, double E);

// Cached element_stiffness(kNu, 1.0).
const ElemMatrix& unit_ke();

// Global DOFs of element (ex, ey): nodes (ex,ey), (ex+1,ey), (ex+1,ey+1),
// (ex,ey+1), two DOFs each.
std::array<int, 8> element_dofs(const Domain& d, int ex, int ey);

// Per-DOF fixed mask from the constraint groups.
std::vector<std::uint8_t> fixed_mask(const ProblemSpec& p);

// Full-length load vector; per-node forces of overlapping groups accumulate.
std::vector<double> load_vector(const ProblemSpec& p);

// Compressed sparse rows, full (unreduced) symmetric storage, deterministic
// ordering: rows ascending, columns ascending within each row.
struct SparseCsr {
  int n = 0;
  std::vector<std::int64_t> rowptr;
  std::vector<int> col;
  std::vector<double> val;
};

// Global stiffness K = sum_e factor(rho_e) K0 scattered by element DOF maps.
SparseCsr assemble(const Domain& d, const DensityField& densities, const Material& m);

struct SolveOptions {
  double tol = 1e-8;            // relative residual target
  std::int64_t max_iter = 0;    // 0 -> 10 * n_free
  const std::vector<double>* warm_start = nullptr;  // full-length initial guess
  bool dense = false;           // direct-oracle path (n_dofs <= 2000 only)
  // Optional stagnation guard: abort when the best residual over a window
  // fails to improve by stall_factor. 0 disables (pure iteration cap).
  std::int64_t stall_window = 0;
  double stall_factor = 0.5;
};

struct PcgResult {
  std::int64_t iterations = 0;
  double relres = 0.0;
  bool converged = false;
};

// Preconditioned conjugate gradient with diagonal (Jacobi) preconditioner.
// Op must provide n() and apply(x, y) computing y = A x on length-n arrays.
template <class Op>
PcgResult pcg(const Op& A, const std::vector<double>& diag_inv,
              const std::vector<double>& b, std::vector<double>& x,
              double tol, std::int64_t max_iter,
              std::int64_t stall_window = 0, double stall_factor = 0.5) {
  const std::size_t n = b.size();
  double bnorm2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) bnorm2 += b[i] * b[i];
  if (bnorm2 == 0.0) {
    x.assign(n, 0.0);
    return {0, 0.0, true};
  }
  const double stop2 = tol * tol * bnorm2;

  std::vector<double> r(n), z(n), p(n), Ap(n);
  A.apply(x.data(), Ap.data());
  for (std::size_t i = 0; i < n; ++i) r[i] = b[i] - Ap[i];
  double rz = 0.0, rr = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    z[i] = diag_inv[i] * r[i];
    p[i] = z[i];
    rz += r[i] * z[i];
    rr += r[i] * r[i];
  }
  if (rr <= stop2) return {0, std::sqrt(rr / bnorm2), true};

  double window_best = rr, prev_window_best = rr;
  std::int64_t it = 0;
  while (it < max_iter) {
    ++it;
    A.apply(p.data(), Ap.data());
    double pAp = 0.0;
    for (std::size_t i = 0; i < n; ++i) pAp += p[i] * Ap[i];
    if (!(pAp > 0.0)) break;  // not SPD on this subspace; bail to failure path
    const double alpha = rz / pAp;
    rr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += alpha * p[i];
      r[i] -= alpha * Ap[i];
      rr += r[i] * r[i];
    }
    if (rr <= stop2) return {it, std::sqrt(rr / bnorm2), true};
    if (stall_window > 0) {
      if (rr < window_best) window_best = rr;
      if (it % stall_window == 0) {
        if (window_best > stall_factor * stall_factor * prev_window_best) break;
        prev_window_best = window_best;
      }
    }
    double rz_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      z[i] = diag_inv[i] * r[i];
      rz_new += r[i] * z[i];
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return {it, std::sqrt(rr / bnorm2), false};
}

// Solve K u = f with homogeneous Dirichlet conditions given by `fixed`.
// Primary path: PCG on the reduced (free-DOF) system to relative residual
// <= opts.tol, iteration cap 10 * n_free. Oracle path (opts.dense): dense
// Cholesky, restricted to systems with <= 2000 DOFs.
FeaSolution solve(const SparseCsr& K, const std::vector<double>& f,
                  const std::vector<std::uint8_t>& fixed, const SolveOptions& opts = {});

// Reduced-system machinery for iterative callers (SIMP, metrics): the CSR
// pattern and element->slot scatter table are built once per (domain, fixed
// set); per-iteration assembly only refills values.
class GridSystem {
 public:
  GridSystem(const Domain& d, const std::vector<std::uint8_t>& fixed, double nu = kNu);

  void assemble(const DensityField& phys, const Material& m);
  FeaSolution solve(const std::vector<double>& f_full, const SolveOptions& opts = {});
  // Element strain energies u_e^T K0 u_e of a full-length displacement vector.
  std::vector<double> element_energies(const std::vector<double>& u_full) const;

  int n_free() const { return n_free_; }
  const Domain& domain() const { return domain_; }
  const ElemMatrix& ke() const { return ke_; }

 private:
  struct CsrOp {
    const GridSystem* s;
    std::size_t n() const { return static_cast<std::size_t>(s->n_free_); }
    void apply(const double* x, double* y) const;
  };
  friend struct CsrOp;

  Domain domain_;
  ElemMatrix ke_;
  std::vector<std::uint8_t> fixed_;
  std::vector<int> red_index_;   // dof -> reduced index or -1
  std::vector<int> free_dofs_;   // reduced index -> dof
  int n_free_ = 0;
  std::vector<std::int64_t> rowptr_;
  std::vector<int> col_;
  std::vector<double> val_;
  std::vector<std::int32_t> slots_;  // 64 per element, -1 when either DOF fixed
};

// Matrix-free operator for a uniform-density (rho == 1) grid: per-node-class
// 3x3 stencil of 2x2 blocks derived from the element stiffness. Used by the
// generator's full-density validation solves where assembling K would
// dominate runtime. Requires nx >= 2 and ny >= 2.
class UniformOperator {
 public:
  UniformOperator(const Domain& d, const std::vector<std::uint8_t>& fixed, double nu = kNu);

  std::size_t n() const { return static_cast<std::size_t>(domain_.n_dofs()); }
  void apply(const double* x, double* y) const;
  // Inverse diagonal (Jacobi) entries; 1.0 at fixed DOFs.
  std::vector<double> diag_inv() const;
  const std::vector<std::uint8_t>& fixed() const { return fixed_; }

 private:
  Domain domain_;
  std::vector<std::uint8_t> fixed_;
  // stencil_[ax][ay][di+1][dj+1] = 2x2 block {dxx, dxy, dyx, dyy};
  // ax/ay in {0: low edge, 1: interior, 2: high edge}.
  double stencil_[3][3][3][3][4] = {};
  double diag_[3][3][2] = {};
  // Column-sweep coefficient tables, one per ax class: 18 patterns = 3 row
  // offsets x 6 in-row double offsets (column offset x source component),
  // each spread over 8 lanes as alternating (x-out, y-out) pairs so four
  // nodes of a column can be accumulated at once. The one-sided stencils of
  // the i = 0 / i = nx columns appear here as all-zero row patterns.
  alignas(64) double cleft_[18][8] = {};
  alignas(64) double cinterior_[18][8] = {};
  alignas(64) double cright_[18][8] = {};
  std::vector<double> mask01_;  // 1.0 at free DOFs, 0.0 at fixed ones
};

// Full-density validation solve used by probgen: projected PCG on the
// uniform operator, same tolerance and iteration-cap semantics as solve().
PcgResult validation_solve(const ProblemSpec& p, double tol = 1e-8);

}  // namespace oto::fea
