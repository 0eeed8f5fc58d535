#include "oto/fea.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstring>
#include <utility>

#if defined(__AVX512F__)
#include <immintrin.h>
#define OTO_HAVE_AVX512 1
#endif

namespace oto::fea {

ElemMatrix element_stiffness(double nu, double E) {
  if (!(nu >= 0.0 && nu < 0.5)) throw InvalidArgument("element_stiffness: nu must be in [0, 0.5)");
  if (!(E >= 0.0)) throw InvalidArgument("element_stiffness: E must be nonnegative");

  // Constitutive matrix, plane stress.
  const double c = E / (1.0 - nu * nu);
  const double D[3][3] = {{c, c * nu, 0.0}, {c * nu, c, 0.0}, {0.0, 0.0, c * (1.0 - nu) / 2.0}};

  // Reference corners, counterclockwise from lower-left.
  const double xi_n[4] = {-1.0, 1.0, 1.0, -1.0};
  const double eta_n[4] = {-1.0, -1.0, 1.0, 1.0};
  const double g = 1.0 / std::sqrt(3.0);

  ElemMatrix ke{};
  for (int gx = 0; gx < 2; ++gx) {
    for (int gy = 0; gy < 2; ++gy) {
      const double xi = (gx == 0 ? -g : g), eta = (gy == 0 ? -g : g);
      // dN/dx = dN/dxi * 2/h; dA = (h/2)^2 dxi deta; h cancels, use h = 1.
      double dndx[4], dndy[4];
      for (int a = 0; a < 4; ++a) {
        dndx[a] = 0.25 * xi_n[a] * (1.0 + eta_n[a] * eta) * 2.0;
        dndy[a] = 0.25 * eta_n[a] * (1.0 + xi_n[a] * xi) * 2.0;
      }
      double B[3][8] = {};
      for (int a = 0; a < 4; ++a) {
        B[0][2 * a] = dndx[a];
        B[1][2 * a + 1] = dndy[a];
        B[2][2 * a] = dndy[a];
        B[2][2 * a + 1] = dndx[a];
      }
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) {
          double s = 0.0;
          for (int r = 0; r < 3; ++r)
            for (int q = 0; q < 3; ++q) s += B[r][i] * D[r][q] * B[q][j];
          ke[i][j] += s * 0.25;  // (h/2)^2 * weight(=1)
        }
    }
  }
  return ke;
}

const ElemMatrix& unit_ke() {
  static const ElemMatrix ke = element_stiffness(kNu, 1.0);
  return ke;
}

std::array<int, 8> element_dofs(const Domain& d, int ex, int ey) {
  const int n0 = d.node(ex, ey), n1 = d.node(ex + 1, ey), n2 = d.node(ex + 1, ey + 1),
            n3 = d.node(ex, ey + 1);
  return {2 * n0, 2 * n0 + 1, 2 * n1, 2 * n1 + 1, 2 * n2, 2 * n2 + 1, 2 * n3, 2 * n3 + 1};
}

std::vector<std::uint8_t> fixed_mask(const ProblemSpec& p) {
  std::vector<std::uint8_t> fixed(p.domain.n_dofs(), 0);
  for (const auto& g : p.constraints)
    for (int n : g.node_ids) {
      if (n < 0 || n >= p.domain.n_nodes()) throw InvalidArgument("constraint node out of range");
      if (g.fix_x) fixed[2 * n] = 1;
      if (g.fix_y) fixed[2 * n + 1] = 1;
    }
  return fixed;
}

std::vector<double> load_vector(const ProblemSpec& p) {
  std::vector<double> f(p.domain.n_dofs(), 0.0);
  for (const auto& g : p.loads)
    for (int n : g.node_ids) {
      if (n < 0 || n >= p.domain.n_nodes()) throw InvalidArgument("load node out of range");
      f[2 * n] += g.fx;
      f[2 * n + 1] += g.fy;
    }
  return f;
}

namespace {

// Sorted node-pair sparsity of the structured grid, restricted to `keep`
// (keep[dof] != 0). Returns rowptr/col over the kept-index space.
void grid_pattern(const Domain& d, const std::vector<int>& kept_index, int n_kept,
                  const std::vector<int>& kept_dofs, std::vector<std::int64_t>& rowptr,
                  std::vector<int>& col) {
  rowptr.assign(n_kept + 1, 0);
  col.clear();
  col.reserve(static_cast<std::size_t>(n_kept) * 18);
  const int nyn = d.ny + 1;
  for (int r = 0; r < n_kept; ++r) {
    const int dof = kept_dofs[r];
    const int node = dof / 2;
    const int i = node / nyn, j = node % nyn;
    for (int di = -1; di <= 1; ++di) {
      const int i2 = i + di;
      if (i2 < 0 || i2 > d.nx) continue;
      for (int dj = -1; dj <= 1; ++dj) {
        const int j2 = j + dj;
        if (j2 < 0 || j2 > d.ny) continue;
        const int n2 = d.node(i2, j2);
        for (int c2 = 2 * n2; c2 <= 2 * n2 + 1; ++c2) {
          const int rc = kept_index[c2];
          if (rc >= 0) col.push_back(rc);
        }
      }
    }
    std::sort(col.begin() + rowptr[r], col.end());
    rowptr[r + 1] = static_cast<std::int64_t>(col.size());
  }
}

std::int64_t find_slot(const std::vector<std::int64_t>& rowptr, const std::vector<int>& col,
                       int r, int c) {
  auto lo = col.begin() + rowptr[r], hi = col.begin() + rowptr[r + 1];
  auto it = std::lower_bound(lo, hi, c);
  return it - col.begin();
}

}  // namespace

SparseCsr assemble(const Domain& d, const DensityField& densities, const Material& m) {
  if (static_cast<int>(densities.size()) != d.n_elems())
    throw InvalidArgument("assemble: densities length != nx*ny");
  for (double r : densities)
    if (!(r >= 0.0 && r <= 1.0)) throw InvalidArgument("assemble: density outside [0,1]");

  SparseCsr K;
  K.n = d.n_dofs();
  std::vector<int> ident(K.n), dofs(K.n);
  for (int i = 0; i < K.n; ++i) ident[i] = dofs[i] = i;
  grid_pattern(d, ident, K.n, dofs, K.rowptr, K.col);
  K.val.assign(K.col.size(), 0.0);

  const ElemMatrix& ke = unit_ke();
  for (int ex = 0; ex < d.nx; ++ex)
    for (int ey = 0; ey < d.ny; ++ey) {
      const double fac = m.factor(densities[d.elem(ex, ey)]);
      const auto ed = element_dofs(d, ex, ey);
      for (int a = 0; a < 8; ++a) {
        for (int b = 0; b < 8; ++b)
          K.val[find_slot(K.rowptr, K.col, ed[a], ed[b])] += fac * ke[a][b];
      }
    }
  return K;
}

namespace {

struct ReducedCsrOp {
  int nrows;
  const std::int64_t* rowptr;
  const int* col;
  const double* val;
  std::size_t n() const { return static_cast<std::size_t>(nrows); }
  void apply(const double* x, double* y) const {
    for (int r = 0; r < nrows; ++r) {
      double s = 0.0;
      for (std::int64_t k = rowptr[r]; k < rowptr[r + 1]; ++k) s += val[k] * x[col[k]];
      y[r] = s;
    }
  }
};

}  // namespace

FeaSolution solve(const SparseCsr& K, const std::vector<double>& f,
                  const std::vector<std::uint8_t>& fixed, const SolveOptions& opts) {
  if (static_cast<int>(f.size()) != K.n || static_cast<int>(fixed.size()) != K.n)
    throw InvalidArgument("solve: size mismatch");
  std::vector<int> red(K.n, -1), free_dofs;
  for (int i = 0; i < K.n; ++i)
    if (!fixed[i]) {
      red[i] = static_cast<int>(free_dofs.size());
      free_dofs.push_back(i);
    }
  const int nf = static_cast<int>(free_dofs.size());
  if (nf == 0) throw InvalidArgument("solve: no free DOFs");
  if (nf == K.n) throw InvalidArgument("solve: no fixed DOFs");

  // Reduced CSR (rows/cols restricted to free DOFs).
  std::vector<std::int64_t> rowptr(nf + 1, 0);
  std::vector<int> col;
  std::vector<double> val;
  for (int r = 0; r < nf; ++r) {
    const int dof = free_dofs[r];
    for (std::int64_t k = K.rowptr[dof]; k < K.rowptr[dof + 1]; ++k) {
      const int rc = red[K.col[k]];
      if (rc >= 0) {
        col.push_back(rc);
        val.push_back(K.val[k]);
      }
    }
    rowptr[r + 1] = static_cast<std::int64_t>(col.size());
  }

  std::vector<double> b(nf);
  for (int r = 0; r < nf; ++r) b[r] = f[free_dofs[r]];

  FeaSolution sol;
  sol.displacements.assign(K.n, 0.0);
  std::vector<double> x(nf, 0.0);

  if (opts.dense) {
    if (K.n > 2000) throw InvalidArgument("dense oracle path limited to <= 2000 DOFs");
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(nf, nf);
    for (int r = 0; r < nf; ++r)
      for (std::int64_t k = rowptr[r]; k < rowptr[r + 1]; ++k) A(r, col[k]) = val[k];
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() != Eigen::Success)
      throw NonConvergence("dense factorization failed (system not SPD)", 0, 0.0);
    Eigen::Map<const Eigen::VectorXd> bv(b.data(), nf);
    Eigen::VectorXd xv = llt.solve(bv);
    for (int r = 0; r < nf; ++r) sol.displacements[free_dofs[r]] = xv[r];
    sol.iterations = 0;
    sol.residual = 0.0;
  } else {
    if (opts.warm_start) {
      if (static_cast<int>(opts.warm_start->size()) != K.n)
        throw InvalidArgument("solve: warm start length mismatch");
      for (int r = 0; r < nf; ++r) x[r] = (*opts.warm_start)[free_dofs[r]];
    }
    const std::int64_t cap = opts.max_iter > 0 ? opts.max_iter : 10ll * nf;
    ReducedCsrOp op{nf, rowptr.data(), col.data(), val.data()};
    std::vector<double> dinv(nf, 1.0);
    for (int r = 0; r < nf; ++r)
      for (std::int64_t k = rowptr[r]; k < rowptr[r + 1]; ++k)
        if (col[k] == r && val[k] > 0.0) dinv[r] = 1.0 / val[k];
    PcgResult res = pcg(op, dinv, b, x, opts.tol, cap, opts.stall_window, opts.stall_factor);
    if (!res.converged)
      throw NonConvergence("PCG did not reach tolerance", res.iterations, res.relres);
    for (int r = 0; r < nf; ++r) sol.displacements[free_dofs[r]] = x[r];
    sol.iterations = res.iterations;
    sol.residual = res.relres;
  }

  double c = 0.0;
  for (int i = 0; i < K.n; ++i) c += f[i] * sol.displacements[i];
  sol.compliance = c;
  return sol;
}

GridSystem::GridSystem(const Domain& d, const std::vector<std::uint8_t>& fixed, double nu)
    : domain_(d), ke_(element_stiffness(nu, 1.0)), fixed_(fixed) {
  if (static_cast<int>(fixed.size()) != d.n_dofs())
    throw InvalidArgument("GridSystem: fixed mask length mismatch");
  red_index_.assign(d.n_dofs(), -1);
  for (int i = 0; i < d.n_dofs(); ++i)
    if (!fixed[i]) {
      red_index_[i] = static_cast<int>(free_dofs_.size());
      free_dofs_.push_back(i);
    }
  n_free_ = static_cast<int>(free_dofs_.size());
  if (n_free_ == 0) throw InvalidArgument("GridSystem: no free DOFs");
  if (n_free_ == d.n_dofs()) throw InvalidArgument("GridSystem: no fixed DOFs");

  grid_pattern(d, red_index_, n_free_, free_dofs_, rowptr_, col_);
  val_.assign(col_.size(), 0.0);

  slots_.assign(static_cast<std::size_t>(d.n_elems()) * 64, -1);
  for (int ex = 0; ex < d.nx; ++ex)
    for (int ey = 0; ey < d.ny; ++ey) {
      const int e = d.elem(ex, ey);
      const auto ed = element_dofs(d, ex, ey);
      for (int a = 0; a < 8; ++a) {
        const int ra = red_index_[ed[a]];
        if (ra < 0) continue;
        for (int b = 0; b < 8; ++b) {
          const int rb = red_index_[ed[b]];
          if (rb < 0) continue;
          slots_[static_cast<std::size_t>(e) * 64 + a * 8 + b] =
              static_cast<std::int32_t>(find_slot(rowptr_, col_, ra, rb));
        }
      }
    }
}

void GridSystem::assemble(const DensityField& phys, const Material& m) {
  if (static_cast<int>(phys.size()) != domain_.n_elems())
    throw InvalidArgument("GridSystem::assemble: densities length mismatch");
  std::fill(val_.begin(), val_.end(), 0.0);
  const int ne = domain_.n_elems();
  for (int e = 0; e < ne; ++e) {
    const double fac = m.factor(phys[e]);
    const std::int32_t* slot = &slots_[static_cast<std::size_t>(e) * 64];
    for (int a = 0; a < 8; ++a)
      for (int b = 0; b < 8; ++b) {
        const std::int32_t s = slot[a * 8 + b];
        if (s >= 0) val_[s] += fac * ke_[a][b];
      }
  }
}

void GridSystem::CsrOp::apply(const double* x, double* y) const {
  const int nrows = s->n_free_;
  const std::int64_t* rowptr = s->rowptr_.data();
  const int* col = s->col_.data();
  const double* val = s->val_.data();
  for (int r = 0; r < nrows; ++r) {
    double acc = 0.0;
    for (std::int64_t k = rowptr[r]; k < rowptr[r + 1]; ++k) acc += val[k] * x[col[k]];
    y[r] = acc;
  }
}

FeaSolution GridSystem::solve(const std::vector<double>& f_full, const SolveOptions& opts) {
  if (static_cast<int>(f_full.size()) != domain_.n_dofs())
    throw InvalidArgument("GridSystem::solve: load vector length mismatch");
  std::vector<double> b(n_free_), x(n_free_, 0.0);
  for (int r = 0; r < n_free_; ++r) b[r] = f_full[free_dofs_[r]];
  if (opts.warm_start) {
    for (int r = 0; r < n_free_; ++r) x[r] = (*opts.warm_start)[free_dofs_[r]];
  }
  std::vector<double> dinv(n_free_, 1.0);
  for (int r = 0; r < n_free_; ++r)
    for (std::int64_t k = rowptr_[r]; k < rowptr_[r + 1]; ++k)
      if (col_[k] == r && val_[k] > 0.0) dinv[r] = 1.0 / val_[k];
  const std::int64_t cap = opts.max_iter > 0 ? opts.max_iter : 10ll * n_free_;
  PcgResult res = pcg(CsrOp{this}, dinv, b, x, opts.tol, cap, opts.stall_window, opts.stall_factor);
  if (!res.converged)
    throw NonConvergence("PCG did not reach tolerance", res.iterations, res.relres);

  FeaSolution sol;
  sol.displacements.assign(domain_.n_dofs(), 0.0);
  for (int r = 0; r < n_free_; ++r) sol.displacements[free_dofs_[r]] = x[r];
  double c = 0.0;
  for (int i = 0; i < domain_.n_dofs(); ++i) c += f_full[i] * sol.displacements[i];
  sol.compliance = c;
  sol.iterations = res.iterations;
  sol.residual = res.relres;
  return sol;
}

std::vector<double> GridSystem::element_energies(const std::vector<double>& u_full) const {
  std::vector<double> energies(domain_.n_elems(), 0.0);
  for (int ex = 0; ex < domain_.nx; ++ex)
    for (int ey = 0; ey < domain_.ny; ++ey) {
      const auto ed = element_dofs(domain_, ex, ey);
      double ue[8];
      for (int a = 0; a < 8; ++a) ue[a] = u_full[ed[a]];
      double acc = 0.0;
      for (int a = 0; a < 8; ++a) {
        double row = 0.0;
        for (int b = 0; b < 8; ++b) row += ke_[a][b] * ue[b];
        acc += ue[a] * row;
      }
      energies[domain_.elem(ex, ey)] = acc;
    }
  return energies;
}

UniformOperator::UniformOperator(const Domain& d, const std::vector<std::uint8_t>& fixed,
                                 double nu)
    : domain_(d), fixed_(fixed) {
  if (d.nx < 2 || d.ny < 2) throw InvalidArgument("UniformOperator requires nx, ny >= 2");
  if (static_cast<int>(fixed.size()) != d.n_dofs())
    throw InvalidArgument("UniformOperator: fixed mask length mismatch");

  const ElemMatrix ke = element_stiffness(nu, 1.0);
  // Build per-class stencils on a virtual 2x2-element grid, whose 3x3 nodes
  // realize all nine (edge-ness x, edge-ness y) classes.
  const Domain v{2, 2, 1.0};
  for (int ax = 0; ax < 3; ++ax)
    for (int ay = 0; ay < 3; ++ay) {
      const int i0 = ax, j0 = ay;  // representative node on the virtual grid
      for (int ex = i0 - 1; ex <= i0; ++ex)
        for (int ey = j0 - 1; ey <= j0; ++ey) {
          if (ex < 0 || ex >= v.nx || ey < 0 || ey >= v.ny) continue;
          // Local corner of (i0, j0) within this element, CCW from lower-left.
          const int ci[4] = {ex, ex + 1, ex + 1, ex};
          const int cj[4] = {ey, ey, ey + 1, ey + 1};
          int a = -1;
          for (int c = 0; c < 4; ++c)
            if (ci[c] == i0 && cj[c] == j0) a = c;
          for (int c = 0; c < 4; ++c) {
            const int di = ci[c] - i0, dj = cj[c] - j0;
            double* blk = stencil_[ax][ay][di + 1][dj + 1];
            blk[0] += ke[2 * a][2 * c];
            blk[1] += ke[2 * a][2 * c + 1];
            blk[2] += ke[2 * a + 1][2 * c];
            blk[3] += ke[2 * a + 1][2 * c + 1];
          }
        }
      diag_[ax][ay][0] = stencil_[ax][ay][1][1][0];
      diag_[ax][ay][1] = stencil_[ax][ay][1][1][3];
    }

  // Column-sweep tables for the ay == 1 (j-interior) band. Pattern t = 6r + o
  // covers row offset r (below/self/above) and in-row double offset
  // o = 2*dj + comp - 2; lanes alternate the x-output and y-output
  // coefficients of that source component for four consecutive nodes.
  const auto fill_patterns = [this](double (*cv)[8], int ax) {
    int t = 0;
    for (int r = 0; r < 3; ++r)
      for (int dj = 0; dj < 3; ++dj)
        for (int comp = 0; comp < 2; ++comp, ++t) {
          const double* blk = stencil_[ax][1][r][dj];
          for (int q = 0; q < 4; ++q) {
            cv[t][2 * q] = blk[comp];
            cv[t][2 * q + 1] = blk[2 + comp];
          }
        }
  };
  fill_patterns(cleft_, 0);
  fill_patterns(cinterior_, 1);
  fill_patterns(cright_, 2);

  mask01_.resize(fixed.size());
  for (std::size_t i = 0; i < fixed.size(); ++i) mask01_[i] = fixed[i] ? 0.0 : 1.0;
}

namespace {

// One node of a column sweep through the 18-pattern coefficient table; the
// same table the vector path uses, so edge columns come through the zeroed
// row patterns here as well.
inline void column_node(const double* xm, const double* xc, const double* xp,
                        const double* mask_row, double* y_row, int j, const double (*cv)[8]) {
  const double* rows[3] = {xm, xc, xp};
  const int b = 2 * j;
  double sx = 0.0, sy = 0.0;
  for (int r = 0; r < 3; ++r)
    for (int o = 0; o < 6; ++o) {
      const double v = rows[r][b + o - 2];
      sx += cv[6 * r + o][0] * v;
      sy += cv[6 * r + o][1] * v;
    }
  y_row[b] = mask_row[b] * sx;
  y_row[b + 1] = mask_row[b + 1] * sy;
}

#ifdef OTO_HAVE_AVX512
// Four nodes per step: lane 2q / 2q+1 hold the x / y outputs of node j+q.
// Every load grabs eight consecutive doubles of a row; duplicating its even
// elements (unpacklo with itself) aligns one source component across the
// lane pairs, so each of the 18 patterns costs one load+shuffle+FMA. Three
// accumulator chains (one per row) keep the FMA latency off the critical
// path. Returns the first unprocessed j; reads stay within the row because
// the last chunk stops at j + 3 <= ny - 2 with tail reach 2j + 10 <= 2ny + 1.
inline int column_sweep_avx512(const double* xm, const double* xc, const double* xp,
                               const double* mask_row, double* y_row, int ny,
                               const double (*cv)[8]) {
  __m512d C[18];
  for (int t = 0; t < 18; ++t) C[t] = _mm512_load_pd(cv[t]);
  int j = 1;
  for (; j <= ny - 5; j += 4) {
    const int b = 2 * j;
    __m512d am = _mm512_setzero_pd(), ac = am, ap = am;
    for (int o = 0; o < 6; ++o) {
      const __m512d vm = _mm512_loadu_pd(xm + b + o - 2);
      am = _mm512_fmadd_pd(_mm512_unpacklo_pd(vm, vm), C[o], am);
      const __m512d vc = _mm512_loadu_pd(xc + b + o - 2);
      ac = _mm512_fmadd_pd(_mm512_unpacklo_pd(vc, vc), C[6 + o], ac);
      const __m512d vp = _mm512_loadu_pd(xp + b + o - 2);
      ap = _mm512_fmadd_pd(_mm512_unpacklo_pd(vp, vp), C[12 + o], ap);
    }
    const __m512d acc = _mm512_add_pd(_mm512_add_pd(am, ac), ap);
    _mm512_storeu_pd(y_row + b, _mm512_mul_pd(acc, _mm512_loadu_pd(mask_row + b)));
  }
  return j;
}
#endif

}  // namespace

void UniformOperator::apply(const double* x, double* y) const {
  const int nx = domain_.nx, ny = domain_.ny, nyn = ny + 1;

  const auto general_node = [&](int i, int j) {
    const int ax = (i == 0) ? 0 : (i == nx ? 2 : 1);
    const int di_lo = (ax == 0) ? 0 : -1, di_hi = (ax == 2) ? 0 : 1;
    const int ay = (j == 0) ? 0 : (j == ny ? 2 : 1);
    const int dj_lo = (ay == 0) ? 0 : -1, dj_hi = (ay == 2) ? 0 : 1;
    const int n = i * nyn + j;
    double sx = 0.0, sy = 0.0;
    for (int di = di_lo; di <= di_hi; ++di)
      for (int dj = dj_lo; dj <= dj_hi; ++dj) {
        const double* blk = stencil_[ax][ay][di + 1][dj + 1];
        const int n2 = n + di * nyn + dj;
        const double vx = x[2 * n2], vy = x[2 * n2 + 1];
        sx += blk[0] * vx + blk[1] * vy;
        sy += blk[2] * vx + blk[3] * vy;
      }
    y[2 * n] = fixed_[2 * n] ? 0.0 : sx;
    y[2 * n + 1] = fixed_[2 * n + 1] ? 0.0 : sy;
  };

  // Top and bottom rows (ay != 1) through the general per-class path.
  for (int i = 0; i <= nx; ++i) {
    general_node(i, 0);
    general_node(i, ny);
  }

  // Column sweeps over the j-interior band carry nearly all of the CG cost.
  // Edge columns reuse the kernel: their missing row points back at the
  // column itself and is cancelled by the zero patterns in the table.
  for (int i = 0; i <= nx; ++i) {
    const std::ptrdiff_t row = 2 * static_cast<std::ptrdiff_t>(i) * nyn;
    const double* xm = x + (i == 0 ? row : row - 2 * nyn);
    const double* xc = x + row;
    const double* xp = x + (i == nx ? row : row + 2 * nyn);
    const double(*cv)[8] = (i == 0) ? cleft_ : (i == nx ? cright_ : cinterior_);
    const double* mk = mask01_.data() + row;
    double* yr = y + row;
    int j = 1;
#ifdef OTO_HAVE_AVX512
    j = column_sweep_avx512(xm, xc, xp, mk, yr, ny, cv);
#endif
    for (; j < ny; ++j) column_node(xm, xc, xp, mk, yr, j, cv);
  }
}

std::vector<double> UniformOperator::diag_inv() const {
  std::vector<double> dinv(domain_.n_dofs(), 1.0);
  const int nx = domain_.nx, ny = domain_.ny;
  for (int i = 0; i <= nx; ++i) {
    const int ax = (i == 0) ? 0 : (i == nx ? 2 : 1);
    for (int j = 0; j <= ny; ++j) {
      const int ay = (j == 0) ? 0 : (j == ny ? 2 : 1);
      const int n = domain_.node(i, j);
      if (!fixed_[2 * n]) dinv[2 * n] = 1.0 / diag_[ax][ay][0];
      if (!fixed_[2 * n + 1]) dinv[2 * n + 1] = 1.0 / diag_[ax][ay][1];
    }
  }
  return dinv;
}

namespace {

double dot_fused(const double* a, const double* b, std::size_t n) {
  std::size_t i = 0;
  double s = 0.0;
#ifdef OTO_HAVE_AVX512
  __m512d acc0 = _mm512_setzero_pd(), acc1 = _mm512_setzero_pd();
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm512_fmadd_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i), acc0);
    acc1 = _mm512_fmadd_pd(_mm512_loadu_pd(a + i + 8), _mm512_loadu_pd(b + i + 8), acc1);
  }
  for (; i + 8 <= n; i += 8)
    acc0 = _mm512_fmadd_pd(_mm512_loadu_pd(a + i), _mm512_loadu_pd(b + i), acc0);
  s = _mm512_reduce_add_pd(_mm512_add_pd(acc0, acc1));
#endif
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

// x += alpha p; r -= alpha Ap; z = dinv r; returns (r.r, r.z). Folding the
// preconditioner apply and both dot products into the descent update keeps
// the CG iteration at three sweeps over the vectors instead of seven.
std::pair<double, double> update_fused(double* x, double* r, double* z, const double* p,
                                       const double* Ap, const double* dinv, double alpha,
                                       std::size_t n) {
  std::size_t i = 0;
  double rr = 0.0, rz = 0.0;
#ifdef OTO_HAVE_AVX512
  const __m512d va = _mm512_set1_pd(alpha);
  __m512d arr = _mm512_setzero_pd(), arz = _mm512_setzero_pd();
  for (; i + 8 <= n; i += 8) {
    const __m512d pv = _mm512_loadu_pd(p + i);
    _mm512_storeu_pd(x + i, _mm512_fmadd_pd(va, pv, _mm512_loadu_pd(x + i)));
    const __m512d rv = _mm512_fnmadd_pd(va, _mm512_loadu_pd(Ap + i), _mm512_loadu_pd(r + i));
    _mm512_storeu_pd(r + i, rv);
    const __m512d zv = _mm512_mul_pd(_mm512_loadu_pd(dinv + i), rv);
    _mm512_storeu_pd(z + i, zv);
    arr = _mm512_fmadd_pd(rv, rv, arr);
    arz = _mm512_fmadd_pd(rv, zv, arz);
  }
  rr = _mm512_reduce_add_pd(arr);
  rz = _mm512_reduce_add_pd(arz);
#endif
  for (; i < n; ++i) {
    x[i] += alpha * p[i];
    const double rv = r[i] - alpha * Ap[i];
    r[i] = rv;
    const double zv = dinv[i] * rv;
    z[i] = zv;
    rr += rv * rv;
    rz += rv * zv;
  }
  return {rr, rz};
}

void direction_fused(double* p, const double* z, double beta, std::size_t n) {
  std::size_t i = 0;
#ifdef OTO_HAVE_AVX512
  const __m512d vb = _mm512_set1_pd(beta);
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(p + i, _mm512_fmadd_pd(vb, _mm512_loadu_pd(p + i), _mm512_loadu_pd(z + i)));
#endif
  for (; i < n; ++i) p[i] = z[i] + beta * p[i];
}

// Same algorithm, tolerance, cap and stagnation-guard semantics as pcg();
// only the sweep fusion differs. Kept separate so the header template stays
// the plain reference implementation used by solve().
PcgResult fused_jacobi_pcg(const UniformOperator& A, const std::vector<double>& dinv,
                           const std::vector<double>& b, std::vector<double>& x, double tol,
                           std::int64_t max_iter, std::int64_t stall_window,
                           double stall_factor) {
  const std::size_t n = b.size();
  const double bnorm2 = dot_fused(b.data(), b.data(), n);
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
    z[i] = dinv[i] * r[i];
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
    const double pAp = dot_fused(p.data(), Ap.data(), n);
    if (!(pAp > 0.0)) break;  // not SPD on this subspace; bail to failure path
    const double alpha = rz / pAp;
    const auto [rr_new, rz_new] =
        update_fused(x.data(), r.data(), z.data(), p.data(), Ap.data(), dinv.data(), alpha, n);
    rr = rr_new;
    if (rr <= stop2) return {it, std::sqrt(rr / bnorm2), true};
    if (stall_window > 0) {
      if (rr < window_best) window_best = rr;
      if (it % stall_window == 0) {
        if (window_best > stall_factor * stall_factor * prev_window_best) break;
        prev_window_best = window_best;
      }
    }
    const double beta = rz_new / rz;
    rz = rz_new;
    direction_fused(p.data(), z.data(), beta, n);
  }
  return {it, std::sqrt(rr / bnorm2), false};
}

}  // namespace

PcgResult validation_solve(const ProblemSpec& p, double tol) {
  const auto fixed = fixed_mask(p);
  UniformOperator op(p.domain, fixed);
  std::vector<double> b = load_vector(p);
  for (int i = 0; i < p.domain.n_dofs(); ++i)
    if (fixed[i]) b[i] = 0.0;
  std::vector<double> x(p.domain.n_dofs(), 0.0);
  std::int64_t n_free = 0;
  for (auto f : fixed)
    if (!f) ++n_free;
  // Same algorithm/tolerance/cap semantics as solve(); the stagnation guard
  // exits early on singular systems, which otherwise burn the whole cap.
  return fused_jacobi_pcg(op, op.diag_inv(), b, x, tol, 10 * n_free, 600, 0.5);
}

}  // namespace oto::fea
