#include "doctest.h"

#include <cmath>
#include <vector>

#include "oto/errors.hpp"
#include "oto/fea.hpp"
#include "oto/rng.hpp"

using namespace oto;

namespace {

// Random well-posed problem on a small grid: left edge clamped, one or two
// random loaded nodes, densities in [0.3, 1] so nothing is near-singular.
struct RandomCase {
  ProblemSpec problem;
  DensityField densities;
};

RandomCase random_case(rng::CounterRng& r, int max_n = 6) {
  RandomCase c;
  const int nx = static_cast<int>(r.uniform_int(2, max_n));
  const int ny = static_cast<int>(r.uniform_int(2, max_n));
  c.problem.domain = {nx, ny, 1.0 / std::max(nx, ny)};

  ConstraintGroup wall;
  wall.kind = FeatureKind::FullEdge;
  wall.fix_x = wall.fix_y = true;
  for (int j = 0; j <= ny; ++j) wall.node_ids.push_back(c.problem.domain.node(0, j));
  c.problem.constraints.push_back(wall);

  const int n_loads = static_cast<int>(r.uniform_int(1, 2));
  for (int k = 0; k < n_loads; ++k) {
    LoadGroup g;
    g.kind = FeatureKind::InternalPoint;
    g.node_ids.push_back(
        c.problem.domain.node(static_cast<int>(r.uniform_int(1, nx)), static_cast<int>(r.uniform_int(0, ny))));
    const double theta = r.uniform_range(0.0, 2.0 * M_PI);
    g.fx = std::cos(theta);
    g.fy = std::sin(theta);
    c.problem.loads.push_back(g);
  }

  c.densities.resize(static_cast<std::size_t>(nx) * ny);
  for (auto& d : c.densities) d = r.uniform_range(0.3, 1.0);
  return c;
}

double dense_entry(const fea::SparseCsr& K, int i, int j) {
  for (std::int64_t k = K.rowptr[static_cast<std::size_t>(i)];
       k < K.rowptr[static_cast<std::size_t>(i) + 1]; ++k)
    if (K.col[static_cast<std::size_t>(k)] == j) return K.val[static_cast<std::size_t>(k)];
  return 0.0;
}

}  // namespace

TEST_CASE("element stiffness matches the analytic plane-stress k-vector") {
  const auto ke = fea::element_stiffness(0.3, 1.0);
  // top88-style closed form for nu = 0.3, E = 1
  const double expected_row0[8] = {0.49450549450549447,  0.17857142857142855,
                                   -0.30219780219780218, -0.013736263736263746,
                                   -0.24725274725274723, -0.17857142857142855,
                                   0.054945054945054937, 0.013736263736263746};
  for (int j = 0; j < 8; ++j)
    CHECK(ke[0][static_cast<std::size_t>(j)] ==
          doctest::Approx(expected_row0[j]).epsilon(1e-14));
}

TEST_CASE("element stiffness is symmetric and scales linearly in E") {
  const auto ke = fea::element_stiffness(0.3, 1.0);
  const auto ke2 = fea::element_stiffness(0.3, 2.0);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      CHECK(ke[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
            doctest::Approx(ke[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)])
                .epsilon(1e-15));
      CHECK(ke2[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] ==
            doctest::Approx(2.0 * ke[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)])
                .epsilon(1e-15));
    }
}

TEST_CASE("element stiffness annihilates rigid-body modes") {
  const auto ke = fea::unit_ke();
  // unit translations in x and y, and a rotation about the element center
  const double tx[8] = {1, 0, 1, 0, 1, 0, 1, 0};
  const double ty[8] = {0, 1, 0, 1, 0, 1, 0, 1};
  // CCW corner coords (0,0),(1,0),(1,1),(0,1); rotation u = (-y, x)
  const double rot[8] = {0, 0, 0, 1, -1, 1, -1, 0};
  for (const double* v : {tx, ty, rot}) {
    for (int i = 0; i < 8; ++i) {
      double acc = 0.0;
      for (int j = 0; j < 8; ++j)
        acc += ke[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] * v[j];
      CHECK(std::abs(acc) < 1e-14);
    }
  }
}

TEST_CASE("single-element cantilever matches the hand-solved 8x8 system") {
  ProblemSpec p;
  p.domain = {1, 1, 1.0};
  ConstraintGroup wall;
  wall.fix_x = wall.fix_y = true;
  wall.node_ids = {p.domain.node(0, 0), p.domain.node(0, 1)};
  p.constraints.push_back(wall);
  LoadGroup tip;
  tip.node_ids = {p.domain.node(1, 1)};
  tip.fx = 0.0;
  tip.fy = -1.0;
  p.loads.push_back(tip);

  const DensityField rho(1, 1.0);
  const auto K = fea::assemble(p.domain, rho, {});
  const auto fixed = fea::fixed_mask(p);
  const auto f = fea::load_vector(p);

  // frozen reference displacements (nodes 2 and 3, x/y each)
  const double u_ref[4] = {-1.8214869281045749, 2.2229575163398692, -3.953104575163398,
                           -5.2913398692810452};
  for (const bool dense : {false, true}) {
    fea::SolveOptions opts;
    opts.dense = dense;
    const auto sol = fea::solve(K, f, fixed, opts);
    CHECK(sol.compliance == doctest::Approx(5.2913398692810452).epsilon(1e-10));
    CHECK(sol.displacements[0] == 0.0);
    CHECK(sol.displacements[1] == 0.0);
    CHECK(sol.displacements[2] == 0.0);
    CHECK(sol.displacements[3] == 0.0);
    CHECK(sol.displacements[4] == doctest::Approx(u_ref[0]).epsilon(1e-10));
    CHECK(sol.displacements[5] == doctest::Approx(u_ref[2]).epsilon(1e-10));
    CHECK(sol.displacements[6] == doctest::Approx(u_ref[1]).epsilon(1e-10));
    CHECK(sol.displacements[7] == doctest::Approx(u_ref[3]).epsilon(1e-10));
  }
}

TEST_CASE("assembled K is symmetric with symmetric sparsity") {
  rng::CounterRng r(101, 0);
  const auto c = random_case(r);
  const auto K = fea::assemble(c.problem.domain, c.densities, {});
  const int n = K.n;
  for (int i = 0; i < n; ++i)
    for (std::int64_t k = K.rowptr[static_cast<std::size_t>(i)];
         k < K.rowptr[static_cast<std::size_t>(i) + 1]; ++k) {
      const int j = K.col[static_cast<std::size_t>(k)];
      CHECK(dense_entry(K, j, i) ==
            doctest::Approx(K.val[static_cast<std::size_t>(k)]).epsilon(1e-14));
    }
}

TEST_CASE("assemble validates densities") {
  Domain d{2, 2, 1.0};
  DensityField bad(4, 0.5);
  bad[2] = 1.5;
  CHECK_THROWS_AS(fea::assemble(d, bad, {}), InvalidArgument);
  bad[2] = -0.1;
  CHECK_THROWS_AS(fea::assemble(d, bad, {}), InvalidArgument);
  DensityField wrong_len(3, 0.5);
  CHECK_THROWS_AS(fea::assemble(d, wrong_len, {}), InvalidArgument);
}

TEST_CASE("CG and dense oracle agree on random problems") {
  rng::CounterRng r(2024, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const auto c = random_case(r);
    const auto K = fea::assemble(c.problem.domain, c.densities, {});
    const auto fixed = fea::fixed_mask(c.problem);
    const auto f = fea::load_vector(c.problem);

    const auto cg = fea::solve(K, f, fixed);
    fea::SolveOptions dense_opts;
    dense_opts.dense = true;
    const auto direct = fea::solve(K, f, fixed, dense_opts);

    CHECK(cg.compliance ==
          doctest::Approx(direct.compliance).epsilon(1e-6));
    CHECK(direct.iterations == 0);
    CHECK(cg.iterations > 0);
  }
}

TEST_CASE("warm start reproduces the same solution in fewer iterations") {
  rng::CounterRng r(55, 0);
  const auto c = random_case(r, 8);
  const auto K = fea::assemble(c.problem.domain, c.densities, {});
  const auto fixed = fea::fixed_mask(c.problem);
  const auto f = fea::load_vector(c.problem);

  const auto cold = fea::solve(K, f, fixed);
  fea::SolveOptions warm_opts;
  warm_opts.warm_start = &cold.displacements;
  const auto warm = fea::solve(K, f, fixed, warm_opts);
  CHECK(warm.compliance == doctest::Approx(cold.compliance).epsilon(1e-8));
  CHECK(warm.iterations <= cold.iterations);
  CHECK(warm.iterations <= 1);  // exact solution in: should pass immediately
}

TEST_CASE("iteration cap raises NonConvergence with diagnostics") {
  rng::CounterRng r(77, 0);
  const auto c = random_case(r, 8);
  const auto K = fea::assemble(c.problem.domain, c.densities, {});
  const auto fixed = fea::fixed_mask(c.problem);
  const auto f = fea::load_vector(c.problem);
  fea::SolveOptions opts;
  opts.max_iter = 1;
  CHECK_THROWS_AS(fea::solve(K, f, fixed, opts), NonConvergence);
  try {
    fea::solve(K, f, fixed, opts);
  } catch (const NonConvergence& e) {
    CHECK(e.iterations == 1);
    CHECK(e.residual > 0.0);
  }
}

TEST_CASE("dense oracle refuses systems above 2000 DOFs") {
  Domain d{40, 40, 1.0 / 40};  // 3362 DOFs
  ProblemSpec p;
  p.domain = d;
  ConstraintGroup wall;
  wall.fix_x = wall.fix_y = true;
  for (int j = 0; j <= 40; ++j) wall.node_ids.push_back(d.node(0, j));
  p.constraints.push_back(wall);
  LoadGroup g;
  g.node_ids = {d.node(40, 20)};
  g.fy = -1.0;
  p.loads.push_back(g);

  const DensityField rho(static_cast<std::size_t>(d.n_elems()), 1.0);
  const auto K = fea::assemble(d, rho, {});
  fea::SolveOptions opts;
  opts.dense = true;
  CHECK_THROWS_AS(fea::solve(K, fea::load_vector(p), fea::fixed_mask(p), opts), InvalidArgument);
}

TEST_CASE("zero load gives zero displacement and zero compliance") {
  Domain d{3, 3, 1.0 / 3};
  ProblemSpec p;
  p.domain = d;
  ConstraintGroup wall;
  wall.fix_x = wall.fix_y = true;
  for (int j = 0; j <= 3; ++j) wall.node_ids.push_back(d.node(0, j));
  p.constraints.push_back(wall);
  p.loads.push_back({});  // group with zero force

  const DensityField rho(9, 1.0);
  const auto K = fea::assemble(d, rho, {});
  const auto sol = fea::solve(K, fea::load_vector(p), fea::fixed_mask(p));
  CHECK(sol.compliance == 0.0);
  CHECK(sol.iterations == 0);
  for (double u : sol.displacements) CHECK(u == 0.0);
}

TEST_CASE("GridSystem matches the one-shot assemble/solve path") {
  rng::CounterRng r(303, 0);
  for (int trial = 0; trial < 5; ++trial) {
    const auto c = random_case(r);
    const auto fixed = fea::fixed_mask(c.problem);
    const auto f = fea::load_vector(c.problem);

    const auto K = fea::assemble(c.problem.domain, c.densities, {});
    const auto oneshot = fea::solve(K, f, fixed);

    fea::GridSystem sys(c.problem.domain, fixed);
    sys.assemble(c.densities, {});
    const auto sol = sys.solve(f);
    CHECK(sol.compliance == doctest::Approx(oneshot.compliance).epsilon(1e-8));

    // strain-energy identity: sum_e factor_e * (u_e^T K0 u_e) == compliance
    const auto energies = sys.element_energies(sol.displacements);
    const fea::Material mat;
    double total = 0.0;
    for (int e = 0; e < c.problem.domain.n_elems(); ++e)
      total += mat.factor(c.densities[static_cast<std::size_t>(e)]) *
               energies[static_cast<std::size_t>(e)];
    CHECK(total == doctest::Approx(sol.compliance).epsilon(1e-6));
  }
}

TEST_CASE("UniformOperator::apply equals the assembled full-density matrix") {
  rng::CounterRng r(404, 0);
  // Sizes chosen to hit both sweep flavors: tiny grids stay fully on the
  // scalar path, larger odd shapes run several vectorized chunks per column
  // plus scalar tails of different lengths.
  for (const auto& [nx, ny] : {std::pair{2, 2}, {2, 5}, {7, 3}, {6, 6}, {5, 14}, {13, 21}}) {
    Domain d{nx, ny, 1.0 / nx};
    ProblemSpec p;
    p.domain = d;
    ConstraintGroup corner;
    corner.fix_x = corner.fix_y = true;
    corner.node_ids = {d.node(0, 0), d.node(0, ny)};
    p.constraints.push_back(corner);

    const auto fixed = fea::fixed_mask(p);
    const DensityField ones(static_cast<std::size_t>(d.n_elems()), 1.0);
    const auto K = fea::assemble(d, ones, fea::Material{1.0, 1.0, 1.0});

    fea::UniformOperator op(d, fixed);
    std::vector<double> x(static_cast<std::size_t>(d.n_dofs()));
    for (auto& v : x) v = r.uniform_range(-1.0, 1.0);
    for (int dof = 0; dof < d.n_dofs(); ++dof)
      if (fixed[static_cast<std::size_t>(dof)]) x[static_cast<std::size_t>(dof)] = 0.0;

    std::vector<double> y_op(x.size()), y_csr(x.size(), 0.0);
    op.apply(x.data(), y_op.data());
    for (int i = 0; i < K.n; ++i) {
      double acc = 0.0;
      for (std::int64_t k = K.rowptr[static_cast<std::size_t>(i)];
           k < K.rowptr[static_cast<std::size_t>(i) + 1]; ++k)
        acc += K.val[static_cast<std::size_t>(k)] * x[static_cast<std::size_t>(K.col[static_cast<std::size_t>(k)])];
      y_csr[static_cast<std::size_t>(i)] = acc;
    }
    for (int i = 0; i < d.n_dofs(); ++i) {
      if (fixed[static_cast<std::size_t>(i)]) {
        CHECK(y_op[static_cast<std::size_t>(i)] == 0.0);  // projected output
      } else {
        CHECK(y_op[static_cast<std::size_t>(i)] ==
              doctest::Approx(y_csr[static_cast<std::size_t>(i)]).epsilon(1e-12));
      }
    }

    // diagonal matches the assembled diagonal on free DOFs
    const auto dinv = op.diag_inv();
    for (int i = 0; i < d.n_dofs(); ++i) {
      if (fixed[static_cast<std::size_t>(i)]) continue;
      CHECK(1.0 / dinv[static_cast<std::size_t>(i)] ==
            doctest::Approx(dense_entry(K, i, i)).epsilon(1e-12));
    }
  }
}

TEST_CASE("validation_solve converges on a well-posed full-density problem") {
  Domain d{8, 8, 1.0 / 8};
  ProblemSpec p;
  p.domain = d;
  ConstraintGroup wall;
  wall.fix_x = wall.fix_y = true;
  for (int j = 0; j <= 8; ++j) wall.node_ids.push_back(d.node(0, j));
  p.constraints.push_back(wall);
  LoadGroup g;
  g.node_ids = {d.node(8, 4)};
  g.fy = -1.0;
  p.loads.push_back(g);

  const auto res = fea::validation_solve(p);
  CHECK(res.converged);
  CHECK(res.iterations > 0);
  CHECK(res.relres <= 1e-8);
}

TEST_CASE("validation_solve flags an unconstrained (singular) problem") {
  Domain d{6, 6, 1.0 / 6};
  ProblemSpec p;
  p.domain = d;
  // one fixed point only: remaining rotation makes the system singular
  ConstraintGroup pin;
  pin.fix_x = pin.fix_y = true;
  pin.node_ids = {d.node(0, 0)};
  p.constraints.push_back(pin);
  LoadGroup g;
  g.node_ids = {d.node(6, 3)};
  g.fy = -1.0;
  p.loads.push_back(g);

  const auto res = fea::validation_solve(p);
  CHECK_FALSE(res.converged);
}
