#pragma once

#include "oto/domain.hpp"

// Independently coded reference SIMP used only by tests: analytic k-vector
// element matrix, Eigen sparse-direct (SimplicialLLT) solves, straight
// convolution filter, and its own OC bisection. Shares nothing with
// src/fea.cpp or src/simp.cpp beyond the problem description types.
namespace ref {

struct RefResult {
  oto::DensityField density;  // physical (filtered) field
  double compliance = 0.0;    // fresh solve on the final field
  int iterations = 0;
};

RefResult reference_simp(const oto::ProblemSpec& p, int max_iters = 150,
                         double change_tol = 0.01);

// Single penalized compliance evaluation with the same direct solver.
double reference_compliance(const oto::ProblemSpec& p, const oto::DensityField& phys);

}  // namespace ref
