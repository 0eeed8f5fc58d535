#include "oto/probgen.hpp"

#include <algorithm>
#include <cmath>

#include "oto/errors.hpp"
#include "oto/fea.hpp"

namespace oto::probgen {

namespace {

int categorical(rng::CounterRng& rng, const double* probs, int n) {
  const double u = rng.u01();
  double acc = 0.0;
  for (int i = 0; i < n; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  return n - 1;
}

// Edges: 0 = left (i=0), 1 = right (i=nx), 2 = bottom (j=0), 3 = top (j=ny).
int edge_node(const Domain& d, int edge, int k) {
  switch (edge) {
    case 0: return d.node(0, k);
    case 1: return d.node(d.nx, k);
    case 2: return d.node(k, 0);
    default: return d.node(k, d.ny);
  }
}

int edge_node_count(const Domain& d, int edge) { return edge <= 1 ? d.ny + 1 : d.nx + 1; }

}  // namespace

Domain sample_domain(rng::CounterRng& rng, const GenConfig& cfg) {
  const auto ec = rng.uniform_int(cfg.ec_min, cfg.ec_max);
  double ar = std::exp(cfg.ar_mu + cfg.ar_sigma * rng.normal());
  ar = std::clamp(ar, 1.0 / cfg.ar_clamp, cfg.ar_clamp);
  const bool adjust_x = rng.u01() < 0.5;  // side stepped if the product leaves range

  long long ny = std::llround(std::sqrt(static_cast<double>(ec) / ar));
  ny = std::max(ny, 1ll);
  long long nx = std::max(std::llround(ar * static_cast<double>(ny)), 1ll);

  int guard = 0;
  while (static_cast<std::uint64_t>(nx * ny) < cfg.ec_min ||
         static_cast<std::uint64_t>(nx * ny) > cfg.ec_max) {
    const long long step = static_cast<std::uint64_t>(nx * ny) < cfg.ec_min ? 1 : -1;
    if (adjust_x)
      nx += step;
    else
      ny += step;
    if (nx < 1 || ny < 1 || ++guard > 100000)
      throw InvalidArgument("sample_domain: element-count range cannot be reached");
  }

  const double cell =
      std::exp(rng.uniform_range(std::log(cfg.cell_min), std::log(cfg.cell_max)));
  return Domain{static_cast<int>(nx), static_cast<int>(ny), cell};
}

std::pair<int, int> sample_counts(rng::CounterRng& rng, const GenConfig& cfg) {
  const int nl = static_cast<int>(rng.geometric(cfg.p_load_geom)) + 1;
  const int nc = static_cast<int>(rng.geometric(cfg.p_constraint_geom)) + 2;
  return {nl, nc};
}

std::vector<int> place_feature(rng::CounterRng& rng, const Domain& d, FeatureKind kind,
                               int max_retries) {
  switch (kind) {
    case FeatureKind::InternalPoint: {
      if (d.nx < 2 || d.ny < 2) throw DegenerateFeature("no interior nodes");
      const int i = static_cast<int>(rng.uniform_int(1, d.nx - 1));
      const int j = static_cast<int>(rng.uniform_int(1, d.ny - 1));
      return {d.node(i, j)};
    }
    case FeatureKind::EdgePoint: {
      const int edge = static_cast<int>(rng.uniform_int(0, 3));
      const int m = edge_node_count(d, edge);
      if (m < 3) throw DegenerateFeature("edge has no non-corner node");
      const int k = static_cast<int>(rng.uniform_int(1, m - 2));
      return {edge_node(d, edge, k)};
    }
    case FeatureKind::CornerPoint: {
      const int c = static_cast<int>(rng.uniform_int(0, 3));
      const int ci[4] = {0, d.nx, d.nx, 0};
      const int cj[4] = {0, 0, d.ny, d.ny};
      return {d.node(ci[c], cj[c])};
    }
    case FeatureKind::PartialEdge: {
      const int edge = static_cast<int>(rng.uniform_int(0, 3));
      const int m = edge_node_count(d, edge);
      if (m < 2) throw DegenerateFeature("edge too short for a sub-segment");
      const int a = static_cast<int>(rng.uniform_int(0, m - 2));
      const int b = static_cast<int>(rng.uniform_int(a + 1, m - 1));
      std::vector<int> nodes;
      nodes.reserve(b - a + 1);
      for (int k = a; k <= b; ++k) nodes.push_back(edge_node(d, edge, k));
      return nodes;
    }
    case FeatureKind::FullEdge: {
      const int edge = static_cast<int>(rng.uniform_int(0, 3));
      const int m = edge_node_count(d, edge);
      std::vector<int> nodes;
      nodes.reserve(m);
      for (int k = 0; k < m; ++k) nodes.push_back(edge_node(d, edge, k));
      return nodes;
    }
    case FeatureKind::InternalDist: {
      if (d.nx < 2 || d.ny < 2) throw DegenerateFeature("no interior nodes");
      for (int attempt = 0; attempt < max_retries; ++attempt) {
        const bool filled = rng.u01() < 0.5;
        const double cx = rng.uniform_range(1.0, d.nx - 1.0);
        const double cy = rng.uniform_range(1.0, d.ny - 1.0);
        const double smax = std::max(2.0, std::min(d.nx, d.ny) / 4.0);
        const double sa = rng.uniform_range(2.0, smax);
        const double sb = rng.uniform_range(2.0, smax);
        auto inside = [&](int i, int j) {
          const double u = (i - cx) / sa, v = (j - cy) / sb;
          return u * u + v * v <= 1.0;
        };
        std::vector<int> nodes;
        const int ilo = std::max(1, static_cast<int>(std::ceil(cx - sa)));
        const int ihi = std::min(d.nx - 1, static_cast<int>(std::floor(cx + sa)));
        const int jlo = std::max(1, static_cast<int>(std::ceil(cy - sb)));
        const int jhi = std::min(d.ny - 1, static_cast<int>(std::floor(cy + sb)));
        for (int i = ilo; i <= ihi; ++i)
          for (int j = jlo; j <= jhi; ++j) {
            if (!inside(i, j)) continue;
            if (!filled) {
              // Discrete boundary: keep nodes with a 4-neighbor outside.
              const bool boundary = !inside(i - 1, j) || !inside(i + 1, j) ||
                                    !inside(i, j - 1) || !inside(i, j + 1);
              if (!boundary) continue;
            }
            nodes.push_back(d.node(i, j));
          }
        if (!nodes.empty()) return nodes;
      }
      throw DegenerateFeature("internal region produced no interior nodes");
    }
  }
  throw InvalidArgument("place_feature: unknown kind");
}

void assign_load_vector(rng::CounterRng& rng, std::uint8_t dir, std::size_t group_size,
                        double& fx, double& fy) {
  if (group_size == 0) throw InvalidArgument("assign_load_vector: empty group");
  const double inv = 1.0 / static_cast<double>(group_size);
  if (dir == kDirBoth) {
    const double theta = rng.uniform_range(0.0, 2.0 * M_PI);
    fx = std::cos(theta) * inv;
    fy = std::sin(theta) * inv;
  } else if (dir == kDirX) {
    fx = (rng.u01() < 0.5 ? 1.0 : -1.0) * inv;
    fy = 0.0;
  } else if (dir == kDirY) {
    fx = 0.0;
    fy = (rng.u01() < 0.5 ? 1.0 : -1.0) * inv;
  } else {
    throw InvalidArgument("assign_load_vector: bad direction flags");
  }
}

ValidityReport validate(const ProblemSpec& p) {
  ValidityReport rep;

  const auto fixed = fea::fixed_mask(p);
  std::int64_t fixed_x = 0, fixed_y = 0;
  for (int n = 0; n < p.domain.n_nodes(); ++n) {
    fixed_x += fixed[2 * n];
    fixed_y += fixed[2 * n + 1];
  }
  rep.structural_ok = fixed_x >= 1 && fixed_y >= 1 && fixed_x + fixed_y >= 3;

  const auto f = fea::load_vector(p);
  bool any_effective = false;
  for (int i = 0; i < p.domain.n_dofs(); ++i)
    if (!fixed[i] && f[i] != 0.0) {
      any_effective = true;
      break;
    }
  bool group_fully_fixed = false;
  for (const auto& g : p.loads) {
    bool any_free = false;
    for (int n : g.node_ids) {
      if (g.fx != 0.0 && !fixed[2 * n]) any_free = true;
      if (g.fy != 0.0 && !fixed[2 * n + 1]) any_free = true;
    }
    if (!any_free) {
      group_fully_fixed = true;
      break;
    }
  }
  rep.nontrivial_ok = any_effective && !group_fully_fixed;

  if (rep.structural_ok && rep.nontrivial_ok) {
    const auto res = fea::validation_solve(p);
    rep.numerical_ok = res.converged;
    rep.cg_iterations = res.iterations;
  }
  return rep;
}

GenResult generate(const GenConfig& cfg, std::uint64_t index, GenStats* stats) {
  rng::CounterRng rng(cfg.seed, index);
  for (int attempt = 1; attempt <= cfg.max_attempts; ++attempt) {
    if (stats) ++stats->attempts;
    ProblemSpec p;
    p.domain = sample_domain(rng, cfg);
    const auto [nl, nc] = sample_counts(rng, cfg);
    if (stats) {
      stats->nl_sum += nl;
      stats->nc_sum += nc;
      ++stats->count_draws;
    }

    bool degenerate = false;
    try {
      for (int g = 0; g < nl && !degenerate; ++g) {
        LoadGroup lg;
        lg.kind = static_cast<FeatureKind>(categorical(rng, cfg.kind_probs.data(), 6));
        const int dir_idx = categorical(rng, cfg.dir_probs.data(), 3);
        lg.dir = dir_idx == 0 ? kDirX : dir_idx == 1 ? kDirY : kDirBoth;
        lg.node_ids = place_feature(rng, p.domain, lg.kind, cfg.max_feature_retries);
        assign_load_vector(rng, lg.dir, lg.node_ids.size(), lg.fx, lg.fy);
        p.loads.push_back(std::move(lg));
      }
      for (int g = 0; g < nc && !degenerate; ++g) {
        ConstraintGroup cg;
        cg.kind = static_cast<FeatureKind>(categorical(rng, cfg.kind_probs.data(), 6));
        const int dir_idx = categorical(rng, cfg.dir_probs.data(), 3);
        cg.fix_x = dir_idx == 0 || dir_idx == 2;
        cg.fix_y = dir_idx == 1 || dir_idx == 2;
        cg.node_ids = place_feature(rng, p.domain, cg.kind, cfg.max_feature_retries);
        p.constraints.push_back(std::move(cg));
      }
    } catch (const DegenerateFeature&) {
      degenerate = true;  // discard the whole candidate, keep drawing
    }
    if (degenerate) continue;

    p.volume_fraction = rng.uniform_range(cfg.vf_min, cfg.vf_max);

    const ValidityReport rep = validate(p);
    if (rep.valid()) return {std::move(p), rep, attempt, cfg.seed, index};
  }
  throw GenerationStall("generate: " + std::to_string(cfg.max_attempts) +
                        " consecutive candidates failed validation");
}

}  // namespace oto::probgen
