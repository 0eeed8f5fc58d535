#include "oto/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "oto/errors.hpp"
#include "oto/rng.hpp"

namespace oto::encoding {

std::vector<double> Mlp::apply(const std::vector<double>& x) const {
  std::vector<double> cur = x;
  for (const auto& layer : layers) {
    if (static_cast<int>(cur.size()) != layer.in)
      throw InvalidArgument("Mlp::apply: input width mismatch");
    std::vector<double> next(static_cast<std::size_t>(layer.out), 0.0);
    for (int o = 0; o < layer.out; ++o) {
      double acc = 0.0;
      const double* row = layer.w.data() + static_cast<std::size_t>(o) * layer.in;
      for (int i = 0; i < layer.in; ++i) acc += row[i] * cur[static_cast<std::size_t>(i)];
      next[static_cast<std::size_t>(o)] = layer.activate ? std::tanh(acc) : acc;
    }
    cur = std::move(next);
  }
  return cur;
}

Mlp make_mlp(const std::vector<int>& dims, std::uint64_t seed, std::uint64_t stream) {
  if (dims.size() < 2) throw InvalidArgument("make_mlp: need at least one layer");
  rng::CounterRng prng(seed, stream);
  Mlp net;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    Mlp::Layer layer;
    layer.in = dims[l];
    layer.out = dims[l + 1];
    layer.activate = l + 2 < dims.size();  // linear output layer
    const double s = std::sqrt(6.0 / (layer.in + layer.out));
    layer.w.resize(static_cast<std::size_t>(layer.in) * layer.out);
    for (auto& w : layer.w) w = prng.uniform_range(-s, s);
    net.layers.push_back(std::move(layer));
  }
  return net;
}

namespace {

std::array<double, 2> node_coords(const Domain& d, int node) {
  const int i = node / (d.ny + 1);
  const int j = node % (d.ny + 1);
  return {static_cast<double>(i) / d.nx, static_cast<double>(j) / d.ny};
}

// Canonical-order sum: sorting the addends makes the reduction independent
// of point order at the bit level.
double sorted_sum(std::vector<double>& vals) {
  std::sort(vals.begin(), vals.end());
  double acc = 0.0;
  for (double v : vals) acc += v;
  return acc;
}

const Mlp& boundary_net() {
  static const Mlp net = make_mlp({4, 64, 64, kBpomFeatureDim}, kParamSeed, 0);
  return net;
}
const Mlp& force_net() {
  static const Mlp net = make_mlp({4, 64, 64, kBpomFeatureDim}, kParamSeed, 1);
  return net;
}
const Mlp& vf_net() {
  static const Mlp net = make_mlp({1, 32, kScalarBlock}, kParamSeed, 2);
  return net;
}
const Mlp& cell_net() {
  static const Mlp net = make_mlp({1, 32, kScalarBlock}, kParamSeed, 3);
  return net;
}
const Mlp& ratio_net() {
  static const Mlp net = make_mlp({1, 32, kScalarBlock}, kParamSeed, 4);
  return net;
}

}  // namespace

PointSet boundary_point_set(const ProblemSpec& problem) {
  std::map<int, std::array<bool, 2>> flags;
  for (const auto& g : problem.constraints)
    for (int n : g.node_ids) {
      auto& f = flags[n];
      f[0] = f[0] || g.fix_x;
      f[1] = f[1] || g.fix_y;
    }
  PointSet set;
  for (const auto& [node, f] : flags) {
    set.points.push_back(node_coords(problem.domain, node));
    set.features.push_back({f[0] ? 1.0 : 0.0, f[1] ? 1.0 : 0.0});
  }
  return set;
}

PointSet force_point_set(const ProblemSpec& problem) {
  std::map<int, std::array<double, 2>> forces;
  for (const auto& g : problem.loads)
    for (int n : g.node_ids) {
      auto& f = forces[n];
      f[0] += g.fx;
      f[1] += g.fy;
    }
  PointSet set;
  for (const auto& [node, f] : forces) {
    set.points.push_back(node_coords(problem.domain, node));
    set.features.push_back(f);
  }
  return set;
}

std::vector<double> bpom_encode(const PointSet& set, const Mlp& net) {
  std::vector<double> block(static_cast<std::size_t>(kBpomBlock), 0.0);
  if (set.size() == 0) return block;  // designated null block
  if (set.points.size() != set.features.size())
    throw InvalidArgument("PointSet: points/features length mismatch");

  const std::size_t n = set.size();
  // per-dim columns of the mapped features, for order-free pooling
  std::vector<std::vector<double>> cols(kBpomFeatureDim, std::vector<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    const std::vector<double> in = {set.points[k][0], set.points[k][1], set.features[k][0],
                                    set.features[k][1]};
    const auto mapped = net.apply(in);
    for (int d = 0; d < kBpomFeatureDim; ++d) cols[static_cast<std::size_t>(d)][k] = mapped[static_cast<std::size_t>(d)];
  }
  for (int d = 0; d < kBpomFeatureDim; ++d) {
    auto& col = cols[static_cast<std::size_t>(d)];
    const auto [mn, mx] = std::minmax_element(col.begin(), col.end());
    const double max_v = *mx;
    const double min_v = *mn;
    block[static_cast<std::size_t>(d)] = sorted_sum(col) / static_cast<double>(n);
    block[static_cast<std::size_t>(kBpomFeatureDim + d)] = max_v;
    block[static_cast<std::size_t>(2 * kBpomFeatureDim + d)] = min_v;
  }
  // block.back() stays 0: real-condition flag
  return block;
}

ProblemEmbedding encode_problem(const ProblemSpec& problem) {
  if (problem.domain.nx < 1 || problem.domain.ny < 1)
    throw InvalidArgument("encode_problem: degenerate domain");
  ProblemEmbedding emb;
  emb.reserve(static_cast<std::size_t>(kEmbeddingDim));

  const auto append = [&emb](const std::vector<double>& v) {
    emb.insert(emb.end(), v.begin(), v.end());
  };
  append(bpom_encode(boundary_point_set(problem), boundary_net()));
  append(bpom_encode(force_point_set(problem), force_net()));
  append(vf_net().apply({problem.volume_fraction}));
  append(cell_net().apply({std::log(problem.domain.cell_size)}));
  append(ratio_net().apply({std::log(problem.domain.aspect_ratio())}));
  return emb;
}

ProblemEmbedding null_embedding() {
  ProblemEmbedding emb(static_cast<std::size_t>(kEmbeddingDim), 0.0);
  emb[static_cast<std::size_t>(kBpomBlock - 1)] = 1.0;
  emb[static_cast<std::size_t>(2 * kBpomBlock - 1)] = 1.0;
  return emb;
}

}  // namespace oto::encoding
