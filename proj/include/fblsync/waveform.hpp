#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "fblsync/config.hpp"
#include "fblsync/pilot.hpp"
#include "fblsync/rng.hpp"

namespace fbl {

// Matched-filter autocorrelation of the rectangular pulse: a triangle of
// duration 2*ts with unit peak at t = ts.
inline double triangular_autocorrelation(double t, double ts = kTs) {
  if (t < 0.0 || t > 2.0 * ts) return 0.0;
  return t < ts ? t / ts : 2.0 - t / ts;
}

// Shifted, upsampled pilot vector x_N(q) of length M = cfg.obs_len():
// q leading zeros, then each pilot symbol repeated N times and scaled by
// 1/sqrt(N), then trailing zeros.
inline std::vector<double> upsampled_pilot_vector(const PilotSequence& p,
                                                  int q,
                                                  const SystemConfig& cfg) {
  const int n_up = p.size() * cfg.upsampling;
  const int m_len = cfg.obs_len();
  if (q < 0 || q > m_len - n_up)
    throw std::out_of_range("pilot shift q out of range");
  std::vector<double> x(m_len, 0.0);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.upsampling));
  for (int i = 0; i < n_up; ++i)
    x[q + i] = p.symbols[i / cfg.upsampling] * scale;
  return x;
}

// Noise-free matched-filter samples of the whole subpacket (pilots followed
// by data), delayed by d = q + e. The rectangular/triangular pair makes the
// sample at index m an exact convex combination of two adjacent entries of
// the upsampled symbol stream. Entries of `stream` are the per-symbol values
// (pilot symbols first, then ns data symbols); pass zeros for absent data.
inline std::vector<double> sampled_subpacket(const std::vector<double>& stream,
                                             int q, double e,
                                             const SystemConfig& cfg) {
  const int m_len = cfg.obs_len();
  const int n_up = static_cast<int>(stream.size()) * cfg.upsampling;
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.upsampling));
  auto up = [&](int n) -> double {  // 1-based upsampled stream, 0 outside
    if (n < 1 || n > n_up) return 0.0;
    return stream[(n - 1) / cfg.upsampling] * scale;
  };
  std::vector<double> out(m_len);
  for (int m = 1; m <= m_len; ++m)
    out[m - 1] = (1.0 - e / kTs) * up(m - q) + (e / kTs) * up(m - q - 1);
  return out;
}

// One block's pilot observation: y = h * [(1-e)x_N(q) + e x_N(q+1)] + z + c,
// with c the data-symbol leakage into the pilot window (present only when
// cfg.include_data_interference is set). Noise can be disabled for oracles.
inline PilotObservation sample_pilot_observation(const ChannelRealization& ch,
                                                 int block,
                                                 const PilotSequence& p,
                                                 const SystemConfig& cfg,
                                                 Rng& rng,
                                                 bool with_noise = true) {
  const int q = ch.q(block);
  const double e = ch.e(block);
  std::vector<double> stream(p.symbols.begin(), p.symbols.end());
  if (cfg.include_data_interference) {
    const double a = std::sqrt(cfg.rho);
    for (int k = 0; k < cfg.ns(); ++k) stream.push_back(rng.bit() ? a : -a);
  }
  const auto samples = sampled_subpacket(stream, q, e, cfg);
  PilotObservation obs;
  obs.y.resize(samples.size());
  for (std::size_t m = 0; m < samples.size(); ++m) {
    obs.y[m] = ch.h[block] * samples[m];
    if (with_noise) obs.y[m] += rng.cnormal();
  }
  return obs;
}

// Post-synchronization data sample with the worst-case interference pattern
// (the previous symbol leaks in): y = h*(delta*x_k + (1-delta)*x_prev) + z.
inline cplx isi_data_sample(cplx x_k, cplx x_prev, cplx h, double delta,
                            Rng& rng, bool with_noise = true) {
  if (delta < 0.0 || delta > 1.0)
    throw std::invalid_argument("delta must be in [0, 1]");
  cplx y = h * (delta * x_k + (1.0 - delta) * x_prev);
  if (with_noise) y += rng.cnormal();
  return y;
}

// Rayleigh block fading with the configured delay prior (uniform on
// [0, dmax], shared across blocks when delays are fully dependent).
inline ChannelRealization draw_channel(const SystemConfig& cfg, Rng& rng) {
  ChannelRealization ch;
  ch.h.resize(cfg.nb);
  ch.d.resize(cfg.nb);
  for (int l = 0; l < cfg.nb; ++l) ch.h[l] = rng.cnormal();
  if (cfg.delay_model == DelayModel::FullyDependent) {
    const double d = rng.uniform_co() * cfg.delay_max();
    for (int l = 0; l < cfg.nb; ++l) ch.d[l] = d;
  } else {
    for (int l = 0; l < cfg.nb; ++l)
      ch.d[l] = rng.uniform_co() * cfg.delay_max();
  }
  return ch;
}

}  // namespace fbl
