#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "oto/domain.hpp"

namespace oto::encoding {

// Point cloud with per-point feature channels (parallel arrays).
// Boundary sets carry {fix_x, fix_y} binary flags; force sets carry the
// accumulated (fx, fy) load at the node. Coordinates are normalized by the
// domain extents to [0,1]².
struct PointSet {
  std::vector<std::array<double, 2>> points;
  std::vector<std::array<double, 2>> features;

  std::size_t size() const { return points.size(); }
};

// Fixed embedding layout: two BPOM blocks (boundary, force) of 256 each,
// then three scalar blocks (vf, log cell_size, log aspect_ratio) of 64 each.
// Each BPOM block = mean|max|min pooling of an 85-wide feature map (255
// values) plus one null-condition flag channel.
inline constexpr int kBpomFeatureDim = 85;
inline constexpr int kBpomBlock = 3 * kBpomFeatureDim + 1;  // 256
inline constexpr int kScalarBlock = 64;
inline constexpr int kEmbeddingDim = 2 * kBpomBlock + 3 * kScalarBlock;  // 704
inline constexpr std::uint64_t kParamSeed = 0x4F544F31;  // frozen parameter seed

using ProblemEmbedding = std::vector<double>;  // length kEmbeddingDim

// Small frozen feed-forward map: tanh on hidden layers, linear output.
// Weights are Xavier-uniform from the counter RNG (seed kParamSeed, one
// stream per network), drawn layer by layer, row-major, biases zero.
struct Mlp {
  struct Layer {
    int in = 0;
    int out = 0;
    std::vector<double> w;  // row-major out×in
    bool activate = true;   // tanh after this layer
  };
  std::vector<Layer> layers;

  std::vector<double> apply(const std::vector<double>& x) const;
};

Mlp make_mlp(const std::vector<int>& dims, std::uint64_t seed, std::uint64_t stream);

// Point sets derived from a problem. Nodes are deduplicated (fixture flags
// OR-ed, forces summed) and emitted in node-id order, so the sets are
// independent of group ordering.
PointSet boundary_point_set(const ProblemSpec& problem);
PointSet force_point_set(const ProblemSpec& problem);

// Per-point features through `net`, then mean/max/min pooled (exactly
// permutation-invariant: per-dimension values are sorted before summation)
// and concatenated, plus a trailing flag channel fixed to 0. An empty set
// encodes as the all-zeros block.
std::vector<double> bpom_encode(const PointSet& set, const Mlp& net);

// Eq.-4-style concatenation of the five blocks. Deterministic: the frozen
// parameter seed fixes every network.
ProblemEmbedding encode_problem(const ProblemSpec& problem);

// Classifier-free-guidance null condition: all zeros with each BPOM block's
// flag channel set to 1.
ProblemEmbedding null_embedding();

}  // namespace oto::encoding
