#pragma once

#include <cstdint>
#include <vector>

namespace oto {

// Six feature kinds shared by loads and constraints. Numbering is frozen:
// it is serialized into OTO1 files.
enum class FeatureKind : std::uint8_t {
  InternalPoint = 0,
  EdgePoint = 1,
  CornerPoint = 2,
  PartialEdge = 3,
  FullEdge = 4,
  InternalDist = 5,
};

// Direction flags (bit 0 = x, bit 1 = y). For constraints these are the
// fixed directions; for loads they record the sampled direction category.
inline constexpr std::uint8_t kDirX = 1;
inline constexpr std::uint8_t kDirY = 2;
inline constexpr std::uint8_t kDirBoth = 3;

// Structured rectangular design grid. Elements are square with a single
// physical edge length; nodes are (nx+1) x (ny+1).
//
// Numbering (frozen for dataset reproducibility):
//   node  (i, j) -> n = i*(ny+1) + j,  DOFs (2n, 2n+1) = (x, y)
//   element (ex, ey) -> e = ex*ny + ey
struct Domain {
  int nx = 0;
  int ny = 0;
  double cell_size = 1.0;

  int n_elems() const { return nx * ny; }
  int n_nodes() const { return (nx + 1) * (ny + 1); }
  int n_dofs() const { return 2 * n_nodes(); }
  int node(int i, int j) const { return i * (ny + 1) + j; }
  int elem(int ex, int ey) const { return ex * ny + ey; }
  double aspect_ratio() const { return static_cast<double>(nx) / ny; }
};

struct LoadGroup {
  std::vector<int> node_ids;
  double fx = 0.0;  // force per node
  double fy = 0.0;
  FeatureKind kind = FeatureKind::InternalPoint;
  std::uint8_t dir = kDirBoth;
};

struct ConstraintGroup {
  std::vector<int> node_ids;
  bool fix_x = false;
  bool fix_y = false;
  FeatureKind kind = FeatureKind::InternalPoint;
};

struct ProblemSpec {
  Domain domain;
  std::vector<LoadGroup> loads;
  std::vector<ConstraintGroup> constraints;
  double volume_fraction = 0.5;
};

// Per-element design variables in [0,1], length nx*ny, element order e = ex*ny+ey.
using DensityField = std::vector<double>;

struct FeaSolution {
  std::vector<double> displacements;  // full-length u, fixed DOFs exactly 0
  double compliance = 0.0;            // f . u
  long long iterations = 0;
  double residual = 0.0;  // final relative residual (0 for direct path)
};

}  // namespace oto
