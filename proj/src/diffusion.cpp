#include "oto/diffusion.hpp"

#include <cmath>
#include <numbers>

#include "oto/errors.hpp"

namespace oto::diffusion {

namespace {

constexpr double kClipFloor = 1e-5;

void check_shapes(const Tensor& a, const Tensor& b, const char* what) {
  if (a.size() != b.size()) throw InvalidArgument(std::string(what) + ": shape mismatch");
}

struct Coef {
  double sa;   // √ᾱ_t
  double sb;   // √(1−ᾱ_t)
};

Coef coef(const NoiseSchedule& s, int t) {
  const double a = s.at(t);
  return {std::sqrt(a), std::sqrt(1.0 - a)};
}

Tensor combine(const Tensor& a, double ca, const Tensor& b, double cb) {
  Tensor out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = ca * a[i] + cb * b[i];
  return out;
}

}  // namespace

double NoiseSchedule::at(int t) const {
  if (t < 0 || t > T) throw InvalidArgument("schedule index out of [0, T]");
  return alpha_bar[static_cast<std::size_t>(t)];
}

NoiseSchedule cosine_schedule(int T) {
  if (T < 1) throw InvalidArgument("cosine_schedule: T must be >= 1");
  NoiseSchedule s;
  s.T = T;
  s.alpha_bar.resize(static_cast<std::size_t>(T) + 1);
  constexpr double offset = 0.008;
  const auto f = [&](double t) {
    const double arg = (t / T + offset) / (1.0 + offset) * std::numbers::pi / 2.0;
    const double c = std::cos(arg);
    return c * c;
  };
  const double f0 = f(0.0);
  for (int t = 0; t <= T; ++t) {
    double a = f(static_cast<double>(t)) / f0;
    a = std::min(1.0, std::max(kClipFloor, a));
    s.alpha_bar[static_cast<std::size_t>(t)] = a;
  }
  return s;
}

Tensor forward(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& s) {
  check_shapes(z0, eps, "forward");
  const auto [sa, sb] = coef(s, t);
  return combine(z0, sa, eps, sb);
}

Tensor velocity_target(const Tensor& z0, const Tensor& eps, int t, const NoiseSchedule& s) {
  check_shapes(z0, eps, "velocity_target");
  const auto [sa, sb] = coef(s, t);
  return combine(eps, sa, z0, -sb);
}

Tensor recover_x0(const Tensor& zt, const Tensor& v, int t, const NoiseSchedule& s) {
  check_shapes(zt, v, "recover_x0");
  const auto [sa, sb] = coef(s, t);
  return combine(zt, sa, v, -sb);
}

Tensor recover_eps(const Tensor& zt, const Tensor& v, int t, const NoiseSchedule& s) {
  check_shapes(zt, v, "recover_eps");
  const auto [sa, sb] = coef(s, t);
  return combine(zt, sb, v, sa);
}

Tensor ddim_step(const Tensor& zt, const Tensor& v_pred, int t, int t_prev,
                 const NoiseSchedule& s) {
  check_shapes(zt, v_pred, "ddim_step");
  if (t_prev < 0 || t < t_prev) throw InvalidArgument("ddim_step: need t >= t_prev >= 0");
  if (t == t_prev) return zt;
  const Tensor x0 = recover_x0(zt, v_pred, t, s);
  const Tensor eps = recover_eps(zt, v_pred, t, s);
  const auto [sa_prev, sb_prev] = coef(s, t_prev);
  return combine(x0, sa_prev, eps, sb_prev);
}

Tensor ddpm_step(const Tensor& zt, const Tensor& v_pred, int t, const NoiseSchedule& s,
                 rng::CounterRng& rng, int t_prev) {
  check_shapes(zt, v_pred, "ddpm_step");
  if (t < 1) throw InvalidArgument("ddpm_step: t must be >= 1");
  if (t_prev < 0) t_prev = t - 1;
  if (t_prev >= t) throw InvalidArgument("ddpm_step: need t_prev < t");

  const double a_t = s.at(t);
  const double a_prev = s.at(t_prev);
  const double var = (1.0 - a_prev) / (1.0 - a_t) * (1.0 - a_t / a_prev);
  const double sigma = std::sqrt(std::max(0.0, var));
  // roundoff can push 1−ᾱ_prev−σ² a hair below zero
  const double eps_coef = std::sqrt(std::max(0.0, 1.0 - a_prev - sigma * sigma));

  const Tensor x0 = recover_x0(zt, v_pred, t, s);
  const Tensor eps = recover_eps(zt, v_pred, t, s);
  Tensor out = combine(x0, std::sqrt(a_prev), eps, eps_coef);
  if (t_prev > 0 && sigma > 0.0)
    for (auto& z : out) z += sigma * rng.normal();
  return out;
}

Tensor cfg_velocity(const Tensor& v_cond, const Tensor& v_uncond, double w) {
  check_shapes(v_cond, v_uncond, "cfg_velocity");
  if (w < 0.0) throw InvalidArgument("cfg_velocity: w must be >= 0");
  return combine(v_uncond, 1.0 - w, v_cond, w);
}

Tensor sample(const Denoiser& denoiser, const std::vector<double>* condition,
              const SampleConfig& cfg) {
  if (cfg.steps < 1) throw InvalidArgument("sample: steps must be >= 1");
  if (cfg.dim < 1) throw InvalidArgument("sample: empty latent");
  const NoiseSchedule s = cosine_schedule(cfg.T);

  rng::CounterRng rng(cfg.seed, 0);
  Tensor z(cfg.dim);
  for (auto& x : z) x = rng.normal();

  // t_k = round(T·(steps−k)/steps), k = 0..steps: T = t_0 > … > t_steps = 0
  std::vector<int> ts(static_cast<std::size_t>(cfg.steps) + 1);
  for (int k = 0; k <= cfg.steps; ++k)
    ts[static_cast<std::size_t>(k)] =
        static_cast<int>(std::llround(static_cast<double>(cfg.T) * (cfg.steps - k) / cfg.steps));

  for (int k = 0; k < cfg.steps; ++k) {
    const int t = ts[static_cast<std::size_t>(k)];
    const int t_prev = ts[static_cast<std::size_t>(k) + 1];
    if (t == t_prev) continue;  // steps > T collapses neighboring stops

    Tensor v = denoiser(z, t, condition);
    if (condition != nullptr && cfg.guidance != 1.0) {
      const Tensor v_uncond = denoiser(z, t, nullptr);
      v = cfg_velocity(v, v_uncond, cfg.guidance);
    }
    z = cfg.mode == SampleMode::Ddim ? ddim_step(z, v, t, t_prev, s)
                                     : ddpm_step(z, v, t, s, rng, t_prev);
  }
  return z;
}

Denoiser oracle_denoiser(Tensor z0, const NoiseSchedule& s) {
  return [z0 = std::move(z0), s](const Tensor& z, int t, const std::vector<double>*) {
    check_shapes(z, z0, "oracle_denoiser");
    const double a = s.at(t);
    const double sa = std::sqrt(a);
    const double sb = std::sqrt(1.0 - a);
    if (sb == 0.0) throw InvalidArgument("oracle_denoiser: t has no noise component");
    Tensor v(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double eps = (z[i] - sa * z0[i]) / sb;
      v[i] = sa * eps - sb * z0[i];
    }
    return v;
  };
}

}  // namespace oto::diffusion
