#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "oto/rng.hpp"

namespace oto::diffusion {

using Tensor = std::vector<double>;  // shape-generic flat latent

// ᾱ_0..ᾱ_T for the cosine schedule: ᾱ_t = cos²(((t/T + s)/(1+s))·π/2)
// normalized so ᾱ_0 = 1, offset s = 0.008, clipped to [1e-5, 1]. The clip
// floor makes the deep tail tie at 1e-5 instead of strictly decreasing.
struct NoiseSchedule {
  int T = 0;
  std::vector<double> alpha_bar;  // T+1 values

  double at(int t) const;
};

NoiseSchedule cosine_schedule(int T);

// z_t = √ᾱ_t·z0 + √(1−ᾱ_t)·ε
Tensor forward(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& s);

// v = √ᾱ_t·ε − √(1−ᾱ_t)·z0
Tensor velocity_target(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& s);

// Inverses of (forward, velocity_target):
//   x0 = √ᾱ_t·z_t − √(1−ᾱ_t)·v
//   ε  = √(1−ᾱ_t)·z_t + √ᾱ_t·v
Tensor recover_x0(const Tensor& zt, const Tensor& v, int t, const NoiseSchedule& s);
Tensor recover_eps(const Tensor& zt, const Tensor& v, int t, const NoiseSchedule& s);

// Deterministic DDIM (η = 0): z_{t_prev} = √ᾱ_prev·x0̂ + √(1−ᾱ_prev)·ε̂.
// t_prev == t is the identity map.
Tensor ddim_step(const Tensor& zt, const Tensor& v_pred, int t, int t_prev,
                 const NoiseSchedule& s);

// Ancestral step with posterior variance
//   σ² = β̃ = (1−ᾱ_prev)/(1−ᾱ_t)·(1 − ᾱ_t/ᾱ_prev)
//   z_prev = √ᾱ_prev·x0̂ + √(1−ᾱ_prev−σ²)·ε̂ + σ·ξ
// t_prev defaults to t−1 (pass explicitly for strided sampling). ξ is drawn
// from `rng` only when t_prev > 0; the final step is deterministic.
Tensor ddpm_step(const Tensor& zt, const Tensor& v_pred, int t, const NoiseSchedule& s,
                 rng::CounterRng& rng, int t_prev = -1);

// v̂ = v_uncond + w·(v_cond − v_uncond)
Tensor cfg_velocity(const Tensor& v_cond, const Tensor& v_uncond, double w);

// Denoiser contract: predicted velocity for (z_t, t, condition); condition
// nullptr means the null (unconditional) embedding. Must be deterministic.
using Denoiser =
    std::function<Tensor(const Tensor& z, int t, const std::vector<double>* condition)>;

enum class SampleMode { Ddim, Ddpm };

struct SampleConfig {
  int steps = 20;
  double guidance = 2.0;
  SampleMode mode = SampleMode::Ddim;
  std::uint64_t seed = 0;
  int T = 1000;
  std::size_t dim = 64 * 64;
};

// Full sampling loop: z_T ~ N(0, I) seeded, uniform timestep sub-sequence
// T = t_0 > t_1 > … > 0, per step the denoiser is queried twice (condition +
// null) iff a condition is given and guidance ≠ 1, combined via cfg_velocity.
Tensor sample(const Denoiser& denoiser, const std::vector<double>* condition,
              const SampleConfig& cfg);

// Closed-form oracle: the exact velocity field of a known clean latent.
// Reconstruction through the sampler bounds the sampler's own error.
Denoiser oracle_denoiser(Tensor z0, const NoiseSchedule& s);

}  // namespace oto::diffusion
