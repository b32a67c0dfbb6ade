#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "fblsync/config.hpp"
#include "fblsync/estimator.hpp"
#include "fblsync/infodensity.hpp"
#include "fblsync/mgf.hpp"
#include "fblsync/rng.hpp"
#include "fblsync/waveform.hpp"

namespace fbl {

namespace detail {

inline constexpr double kSqrt2 = 1.41421356237309504880;

// Scaled complementary error function for x >= 0.
inline double erfcx_pos(double x) {
  if (x < 14.0) return std::exp(x * x) * std::erfc(x);
  // Asymptotic series sum_k (-1)^k (2k-1)!!/(2x^2)^k; truncation error at
  // x = 14 is about 1e-13 relative.
  const double ix2 = 1.0 / (x * x);
  const double series =
      1.0 +
      ix2 * (-0.5 +
             ix2 * (0.75 +
                    ix2 * (-1.875 +
                           ix2 * (6.5625 +
                                  ix2 * (-29.53125 + ix2 * 162.421875)))));
  return series / (x * std::sqrt(kPi));
}

// e^{b^2/2} Q(b) for b >= 0, stable for large b.
inline double exp_halfsq_q(double b) { return 0.5 * erfcx_pos(b / kSqrt2); }

inline double log_q(double t) {
  if (t <= 0.0) return std::log1p(-0.5 * std::erfc(-t / kSqrt2));
  return std::log(exp_halfsq_q(t)) - 0.5 * t * t;
}

}  // namespace detail

enum class SaddleBranch { Mid, High, Low, HighSaturated, LowSaturated };

struct SaddleResult {
  double zeta_star = 0.0;
  SaddleBranch branch = SaddleBranch::Mid;
  double kappa = 0.0;
  double mu = 0.0;
  double sigma2 = 0.0;
  double eps_cond = 1.0;
  bool clamped = false;
};

struct SaddleOptions {
  double zeta0 = kDefaultZeta0;
  int quad_order = kDefaultQuadOrder;
};

// Root of -mu(zeta) = nc * R on [-zeta0, zeta0]. -mu is nonincreasing
// (kappa is convex), so a guarded Newton/bisection hybrid converges; a root
// pushed outside the window is reported as a saturated saddle.
inline SaddleResult solve_saddle(const CgfEvaluator& cgf, double rate_nats,
                                 const SystemConfig& cfg,
                                 const SaddleOptions& opt = {}) {
  const double target = cfg.nc * rate_nats;
  SaddleResult res;
  double lo = -opt.zeta0, hi = opt.zeta0;
  CgfEval at_hi = cgf(hi);
  if (-at_hi.mu > target) {
    res.zeta_star = hi;
    res.branch = SaddleBranch::HighSaturated;
    res.kappa = at_hi.kappa;
    res.mu = at_hi.mu;
    res.sigma2 = at_hi.sigma2;
    return res;
  }
  CgfEval at_lo = cgf(lo);
  if (-at_lo.mu < target) {
    res.zeta_star = lo;
    res.branch = SaddleBranch::LowSaturated;
    res.kappa = at_lo.kappa;
    res.mu = at_lo.mu;
    res.sigma2 = at_lo.sigma2;
    return res;
  }
  if (-at_lo.mu < -at_hi.mu - 1e-9)
    throw std::runtime_error("non-monotone -mu(zeta): numerical failure");

  double zeta = 0.0;
  CgfEval ev = cgf(zeta);
  for (int it = 0; it < 100; ++it) {
    const double f = -ev.mu - target;
    if (std::abs(f) < 1e-12 * std::max(1.0, std::abs(target))) break;
    if (f > 0.0)
      lo = zeta;  // need larger zeta
    else
      hi = zeta;
    double next = zeta + f / std::max(ev.sigma2, 1e-300);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - zeta) < 1e-12) {
      zeta = next;
      ev = cgf(zeta);
      break;
    }
    zeta = next;
    ev = cgf(zeta);
  }
  res.zeta_star = zeta;
  res.branch = zeta > 1.0 ? SaddleBranch::High
                          : (zeta < 0.0 ? SaddleBranch::Low : SaddleBranch::Mid);
  res.kappa = ev.kappa;
  res.mu = ev.mu;
  res.sigma2 = ev.sigma2;
  return res;
}

// Three-branch saddlepoint approximation of the conditional error
// probability, with the vanishing error terms dropped. The result is clamped
// into (0, 1].
inline SaddleResult conditional_eps_saddlepoint(const DecodingState& state,
                                                const SystemConfig& cfg,
                                                const SaddleOptions& opt = {}) {
  const CgfEvaluator cgf(state, cfg, opt.quad_order);
  SaddleResult res = solve_saddle(cgf, cfg.rate_nats, cfg, opt);
  if (res.branch == SaddleBranch::LowSaturated) {
    res.eps_cond = 1.0;  // preserve the upper bound when no saddle exists
    return res;
  }
  const double n = cfg.nb;
  const double target = cfg.nc * cfg.rate_nats;  // per-block rate threshold
  const double zeta = res.zeta_star;
  double eps;
  if (res.branch == SaddleBranch::Mid) {
    const double root_ns2 = std::sqrt(n * res.sigma2);
    const double exponent = res.kappa - n * zeta * res.mu;
    eps = std::exp(exponent) * (detail::exp_halfsq_q(zeta * root_ns2) +
                                detail::exp_halfsq_q((1.0 - zeta) * root_ns2));
  } else if (res.branch == SaddleBranch::Low) {
    const double root_ns2 = std::sqrt(n * res.sigma2);
    const double exponent = res.kappa - n * zeta * res.mu;
    eps = 1.0 -
          std::exp(exponent) * (detail::exp_halfsq_q(-zeta * root_ns2) -
                                detail::exp_halfsq_q((1.0 - zeta) * root_ns2));
  } else {  // High branch (zeta* > 1, possibly saturated at zeta0)
    // Split the event at S = nR and tilt the e^{nR-S} part at zeta = 1:
    // the first term approximates P[S <= nR], the second is the tilted mass
    // above the threshold. The sum is continuous with the Mid branch at
    // zeta* = 1 and decays with the union-bound low-rate exponent
    // kappa(1) + nR.
    const CgfEval at_one = cgf(1.0);
    const double root_ns2 = std::sqrt(n * at_one.sigma2);
    const double shifted_mean = n * (at_one.mu + target) / root_ns2;
    const double log_psi11 =
        n * (-at_one.mu - target + 0.5 * at_one.sigma2) +
        detail::log_q(root_ns2 - shifted_mean);
    const double log_psi0 = detail::log_q(shifted_mean);
    // Prefactor exp(kappa(1) + n * threshold). For an interior saddle this
    // equals kappa(1) - n mu(zeta*); when saturated at zeta0 the root
    // condition does not hold and -mu(zeta0) would overstate the threshold,
    // inflating eps by exp(n(-mu(zeta0) - threshold)).
    const double log_pref = at_one.kappa + n * target;
    eps = std::exp(log_pref + log_psi11) + std::exp(log_pref + log_psi0);
  }
  if (!(eps > 0.0)) eps = std::numeric_limits<double>::min();
  if (eps > 1.0) {
    eps = 1.0;
    res.clamped = true;
  }
  res.eps_cond = eps;
  return res;
}

struct McEstimate {
  double eps_hat = 0.0;
  double stderr_hat = 0.0;
};

// Direct Monte-Carlo evaluation of the conditional RCUs bound: empirical
// probability that log(U) + sum of information densities falls below the
// rate threshold. Used as the oracle for the saddlepoint approximation.
inline McEstimate rcus_mc_oracle(const DecodingState& state,
                                 const SystemConfig& cfg,
                                 std::int64_t n_samples, std::uint64_t seed) {
  const auto pts = bpsk_points(cfg.rho);
  const double threshold = cfg.nb * cfg.nc * cfg.rate_nats;
  const int ns = cfg.ns();
  std::int64_t hits = 0;
  Rng rng(seed);
  for (std::int64_t i = 0; i < n_samples; ++i) {
    double total = std::log(rng.uniform());
    for (int l = 0; l < state.nb(); ++l) {
      const cplx h = state.h[l];
      const cplx hh = state.h_hat[l];
      const double delta = state.delta[l];
      cplx prev = pts[rng.bit()];  // pilot tail, uniform by assumption
      for (int k = 0; k < ns; ++k) {
        const cplx cur = pts[rng.bit()];
        const cplx y = h * (delta * cur + (1.0 - delta) * prev) + rng.cnormal();
        total += info_density(cur, y, hh, state.s, cfg.rho);
        prev = cur;
      }
    }
    if (total <= threshold) ++hits;
  }
  McEstimate est;
  est.eps_hat = static_cast<double>(hits) / n_samples;
  est.stderr_hat =
      std::sqrt(est.eps_hat * (1.0 - est.eps_hat) / n_samples);
  return est;
}

enum class EstimatorMode {
  PerBlock,
  Joint,
  PerfectSyncPilotCsi,  // true delay known, gains estimated from pilots
  PerfectAll,           // genie delay and gains
  SyntheticDelay        // genie gains, delay estimate ~ N(d, sigma_d^2)
};

struct PepOptions {
  EstimatorMode mode = EstimatorMode::Joint;
  double s = 1.0;
  double sigma_d2 = 0.0;  // only for SyntheticDelay, in squared samples
  SaddleOptions saddle;
  int workers = 1;
};

struct PepResult {
  double eps_pep_ub = 0.0;
  double stderr_pep = 0.0;
  double sync_fail_rate = 0.0;
  std::int64_t clamp_count = 0;
  // Mid / High / Low / HighSaturated / LowSaturated / SyncFail
  std::array<std::int64_t, 6> branch_hist{};
};

namespace detail {

// Deterministic parallel map: trial i writes slot i; reduction happens
// afterwards in index order with compensated summation, so the reported mean
// is independent of the worker count.
template <typename Fn>
void parallel_trials(std::int64_t n, int workers, Fn&& fn) {
  workers = std::max(1, workers);
  if (workers == 1) {
    for (std::int64_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::int64_t i = w; i < n; i += workers) fn(i);
    });
  }
  for (auto& t : pool) t.join();
}

inline double kahan_sum(const std::vector<double>& v) {
  double sum = 0.0, comp = 0.0;
  for (double x : v) {
    const double y = x - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
  return sum;
}

// Per-trial decoding state under the given estimator mode; returns false on
// synchronization failure (some block off by more than one symbol).
inline bool trial_state(const SystemConfig& cfg, const PepOptions& opt,
                        const PilotSequence& pilot, Rng& rng,
                        DecodingState* state) {
  const ChannelRealization ch = draw_channel(cfg, rng);
  const int nb = cfg.nb;
  std::vector<double> d_hat(nb);
  state->h = ch.h;
  state->h_hat.assign(nb, 0.0);
  state->delta.assign(nb, 1.0);
  state->s = opt.s;
  switch (opt.mode) {
    case EstimatorMode::PerfectAll: {
      state->h_hat = ch.h;
      return true;
    }
    case EstimatorMode::SyntheticDelay: {
      state->h_hat = ch.h;
      const double sd = std::sqrt(opt.sigma_d2);
      if (cfg.delay_model == DelayModel::FullyDependent) {
        const double dh = ch.d[0] + sd * rng.normal();
        d_hat.assign(nb, dh);
      } else {
        for (int l = 0; l < nb; ++l) d_hat[l] = ch.d[l] + sd * rng.normal();
      }
      break;
    }
    case EstimatorMode::PerfectSyncPilotCsi: {
      for (int l = 0; l < nb; ++l) {
        const auto obs = sample_pilot_observation(ch, l, pilot, cfg, rng);
        const auto v = template_v(ch.q(l), ch.e(l), pilot, cfg);
        cplx dot = 0.0;
        double vv = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
          dot += v[i] * obs.y[i];
          vv += v[i] * v[i];
        }
        state->h_hat[l] = dot / vv;
        d_hat[l] = ch.d[l];
      }
      break;
    }
    case EstimatorMode::PerBlock:
    case EstimatorMode::Joint: {
      std::vector<PilotObservation> obs(nb);
      for (int l = 0; l < nb; ++l)
        obs[l] = sample_pilot_observation(ch, l, pilot, cfg, rng);
      const EstimationResult est = opt.mode == EstimatorMode::Joint
                                       ? estimate_joint(obs, pilot, cfg)
                                       : estimate_per_block(obs, pilot, cfg);
      state->h_hat = est.h_hat;
      d_hat = est.d_hat;
      break;
    }
  }
  for (int l = 0; l < nb; ++l) {
    const double err = std::abs(d_hat[l] - ch.d[l]);
    if (err > cfg.tp()) return false;
    state->delta[l] = 1.0 - err / cfg.tp();
  }
  return true;
}

}  // namespace detail

// Outer Monte-Carlo packet-error bound: average of the conditional
// saddlepoint approximation over channel/delay/estimate realizations, with
// trials failing synchronization counted as errors.
inline PepResult epsilon_pep(const SystemConfig& cfg, const PepOptions& opt,
                             std::int64_t n_outer, std::uint64_t seed) {
  cfg.validate();
  const bool needs_pilots = opt.mode == EstimatorMode::PerBlock ||
                            opt.mode == EstimatorMode::Joint ||
                            opt.mode == EstimatorMode::PerfectSyncPilotCsi;
  const PilotSequence pilot =
      needs_pilots ? make_pilot_sequence(cfg.np, cfg.rho) : PilotSequence{};
  if (needs_pilots && pilot.size() < 1)
    throw std::invalid_argument("estimator mode requires np >= 1");

  std::vector<double> eps(n_outer, 0.0);
  std::vector<std::int8_t> tag(n_outer, 0);
  std::vector<std::int8_t> clamped(n_outer, 0);
  detail::parallel_trials(n_outer, opt.workers, [&](std::int64_t i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    DecodingState st;
    if (!detail::trial_state(cfg, opt, pilot, rng, &st)) {
      eps[i] = 1.0;
      tag[i] = 5;
      return;
    }
    const SaddleResult r = conditional_eps_saddlepoint(st, cfg, opt.saddle);
    eps[i] = r.eps_cond;
    tag[i] = static_cast<std::int8_t>(r.branch);
    clamped[i] = r.clamped ? 1 : 0;
  });
  PepResult out;
  const double mean = detail::kahan_sum(eps) / n_outer;
  double var = 0.0;
  for (double e : eps) var += (e - mean) * (e - mean);
  out.eps_pep_ub = mean;
  out.stderr_pep = n_outer > 1
                       ? std::sqrt(var / (n_outer - 1) / n_outer)
                       : 0.0;
  for (std::int64_t i = 0; i < n_outer; ++i) {
    ++out.branch_hist[tag[i]];
    out.clamp_count += clamped[i];
  }
  out.sync_fail_rate =
      static_cast<double>(out.branch_hist[5]) / static_cast<double>(n_outer);
  return out;
}

}  // namespace fbl
