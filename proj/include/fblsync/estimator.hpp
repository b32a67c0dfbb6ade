#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "fblsync/config.hpp"
#include "fblsync/pilot.hpp"
#include "fblsync/waveform.hpp"

namespace fbl {

// Delay-hypothesis template v(q, e) = (1 - e/ts) x_N(q) + (e/ts) x_N(q+1).
inline std::vector<double> template_v(int q, double e, const PilotSequence& p,
                                      const SystemConfig& cfg) {
  if (e < 0.0 || e > kTs) throw std::invalid_argument("e must be in [0, ts]");
  if (e == 0.0) return upsampled_pilot_vector(p, q, cfg);
  auto a = upsampled_pilot_vector(p, q, cfg);
  const auto b = upsampled_pilot_vector(p, q + 1, cfg);
  const double w = e / kTs;
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = (1.0 - w) * a[i] + w * b[i];
  return a;
}

namespace detail {

// For fixed q the matched-filter objective |v^H y|^2 / ||v||^2 is a ratio of
// two quadratics in e. Numerator coefficients depend on the observation,
// denominator coefficients only on the pilot.
struct NumQuad {
  double n0 = 0.0, n1 = 0.0, n2 = 0.0;
  double at(double e) const { return n0 + e * (n1 + e * n2); }
};
struct DenQuad {
  double d0 = 0.0, d1 = 0.0, d2 = 0.0;
  double at(double e) const { return d0 + e * (d1 + e * d2); }
};

inline NumQuad numerator_coeffs(const std::vector<double>& a,
                                const std::vector<double>& b,
                                const std::vector<cplx>& y) {
  cplx A = 0.0, B = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    A += a[i] * y[i];
    B += b[i] * y[i];
  }
  const cplx C = B - A;
  return {std::norm(A), 2.0 * std::real(std::conj(A) * C), std::norm(C)};
}

inline DenQuad denominator_coeffs(const std::vector<double>& a,
                                  const std::vector<double>& b) {
  double aa = 0.0, ab = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    aa += a[i] * a[i];
    ab += a[i] * b[i];
    bb += b[i] * b[i];
  }
  return {aa, 2.0 * (ab - aa), aa + bb - 2.0 * ab};
}

// Interior roots of (n/d)' = 0 on (0, ts). The cubic terms of n'd - nd'
// cancel, leaving a quadratic.
inline std::vector<double> quad_stationary(const NumQuad& n, const DenQuad& d) {
  const double a2 = n.n2 * d.d1 - n.n1 * d.d2;
  const double a1 = 2.0 * (n.n2 * d.d0 - n.n0 * d.d2);
  const double a0 = n.n1 * d.d0 - n.n0 * d.d1;
  const double scale =
      std::max({std::abs(a2), std::abs(a1), std::abs(a0), 1e-300});
  std::vector<double> roots;
  if (std::abs(a2) <= 1e-14 * scale) {
    if (std::abs(a1) > 1e-14 * scale) {
      const double r = -a0 / a1;
      if (r > 0.0 && r < kTs) roots.push_back(r);
    }
    return roots;  // degenerate: objective flat in e
  }
  const double disc = a1 * a1 - 4.0 * a2 * a0;
  if (disc < 0.0) return roots;
  const double sq = std::sqrt(disc);
  // Numerically stable pair of roots.
  const double t = -0.5 * (a1 + std::copysign(sq, a1));
  for (double r : {t / a2, a0 == 0.0 && t == 0.0 ? 0.0 : a0 / t}) {
    if (std::isfinite(r) && r > 0.0 && r < kTs) roots.push_back(r);
  }
  std::sort(roots.begin(), roots.end());
  roots.erase(std::unique(roots.begin(), roots.end()), roots.end());
  return roots;
}

struct BlockCoeffs {
  std::vector<NumQuad> num;  // per q = 0..qmax-1 (pair (q, q+1))
  std::vector<cplx> a_dot;   // x_N(q)^H y for q = 0..qmax
};

// Per-q inner products for one block. den is shared across blocks.
inline BlockCoeffs block_coeffs(const std::vector<cplx>& y,
                                const PilotSequence& p, const SystemConfig& cfg,
                                std::vector<DenQuad>* den_out) {
  const int qmax = cfg.qmax();
  BlockCoeffs bc;
  bc.num.resize(qmax);
  bc.a_dot.resize(qmax + 1);
  std::vector<std::vector<double>> xq(qmax + 1);
  for (int q = 0; q <= qmax; ++q) {
    xq[q] = upsampled_pilot_vector(p, q, cfg);
    cplx dot = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) dot += xq[q][i] * y[i];
    bc.a_dot[q] = dot;
  }
  if (den_out && den_out->empty()) {
    den_out->resize(qmax);
    for (int q = 0; q < qmax; ++q)
      (*den_out)[q] = denominator_coeffs(xq[q], xq[q + 1]);
  }
  for (int q = 0; q < qmax; ++q) {
    const cplx A = bc.a_dot[q];
    const cplx C = bc.a_dot[q + 1] - A;
    bc.num[q] = {std::norm(A), 2.0 * std::real(std::conj(A) * C),
                 std::norm(C)};
  }
  return bc;
}

}  // namespace detail

// Per-block matched-filter objective |v(q,e)^H y|^2 / ||v(q,e)||^2.
inline double objective(int q, double e, const std::vector<cplx>& y,
                        const PilotSequence& p, const SystemConfig& cfg) {
  const auto v = template_v(q, e, p, cfg);
  cplx dot = 0.0;
  double vv = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    dot += v[i] * y[i];
    vv += v[i] * v[i];
  }
  return std::norm(dot) / vv;
}

// Interior stationary points of e -> objective(q, e) on (0, ts).
inline std::vector<double> stationary_points(int q, const std::vector<cplx>& y,
                                             const PilotSequence& p,
                                             const SystemConfig& cfg) {
  const auto a = upsampled_pilot_vector(p, q, cfg);
  const auto b = upsampled_pilot_vector(p, q + 1, cfg);
  return detail::quad_stationary(detail::numerator_coeffs(a, b, y),
                                 detail::denominator_coeffs(a, b));
}

namespace detail {

struct Candidate {
  int q;
  double e;
  double d() const { return q * kTs + e; }
};

// Candidate grid of Algorithm 1: every lattice point (q, 0) plus the interior
// stationary points of each cell. `sum_num` holds the summed numerator
// coefficients of the blocks taking part in the argmax.
inline Candidate best_candidate(const std::vector<NumQuad>& sum_num,
                                const std::vector<DenQuad>& den, int qmax,
                                double denom0) {
  std::vector<Candidate> cands;
  for (int q = 0; q <= qmax; ++q) cands.push_back({q, 0.0});
  for (int q = 0; q < qmax; ++q)
    for (double e : quad_stationary(sum_num[q], den[q]))
      cands.push_back({q, e});
  std::sort(cands.begin(), cands.end(),
            [](const Candidate& x, const Candidate& y) { return x.d() < y.d(); });
  Candidate best{0, 0.0};
  double best_val = -1.0;
  for (const auto& c : cands) {
    double val;
    if (c.e == 0.0) {
      // Boundary point: ||x_N(q)||^2 is the same for every q.
      val = (c.q < static_cast<int>(sum_num.size()) ? sum_num[c.q].n0
                                                    : sum_num[c.q - 1].at(kTs)) /
            denom0;
    } else {
      val = sum_num[c.q].at(c.e) / den[c.q].at(c.e);
    }
    if (val > best_val) {
      best_val = val;
      best = c;
    }
  }
  return best;
}

}  // namespace detail

// Algorithm 1, per-block variant: each block gets its own (q, e) argmax and
// ML gain v(q,e)^H y / ||v(q,e)||^2.
inline EstimationResult estimate_per_block(
    const std::vector<PilotObservation>& obs, const PilotSequence& p,
    const SystemConfig& cfg) {
  if (p.size() < 1)
    throw std::invalid_argument("synchronization requires np >= 1");
  const int nb = static_cast<int>(obs.size());
  const int qmax = cfg.qmax();
  EstimationResult res;
  res.h_hat.resize(nb);
  res.d_hat.resize(nb);
  res.q_hat.resize(nb);
  res.e_hat.resize(nb);
  std::vector<detail::DenQuad> den;
  double total = 0.0;
  const double denom0_fallback = p.size() * cfg.rho;
  for (int l = 0; l < nb; ++l) {
    const auto bc = detail::block_coeffs(obs[l].y, p, cfg, &den);
    auto num = bc.num;
    if (qmax == 0) num.push_back({std::norm(bc.a_dot[0]), 0.0, 0.0});
    const double denom0 = den.empty() ? denom0_fallback : den[0].d0;
    const auto best = detail::best_candidate(num, den, qmax, denom0);
    res.q_hat[l] = best.q;
    res.e_hat[l] = best.e;
    res.d_hat[l] = best.d();
    const auto v = template_v(best.q, best.e, p, cfg);
    cplx dot = 0.0;
    double vv = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      dot += v[i] * obs[l].y[i];
      vv += v[i] * v[i];
    }
    res.h_hat[l] = dot / vv;
    total += std::norm(dot) / vv;
  }
  res.objective = total;
  return res;
}

// Algorithm 1, joint variant: one (q, e) maximizing the summed objective.
// The denominator is block-independent, so the summed objective is again a
// ratio of quadratics in e and its stationary points solve a quadratic.
inline EstimationResult estimate_joint(const std::vector<PilotObservation>& obs,
                                       const PilotSequence& p,
                                       const SystemConfig& cfg) {
  if (cfg.delay_model != DelayModel::FullyDependent)
    throw std::invalid_argument(
        "joint estimation requires fully dependent delays");
  if (p.size() < 1)
    throw std::invalid_argument("synchronization requires np >= 1");
  const int nb = static_cast<int>(obs.size());
  const int qmax = cfg.qmax();
  std::vector<detail::DenQuad> den;
  std::vector<detail::BlockCoeffs> bcs;
  bcs.reserve(nb);
  for (int l = 0; l < nb; ++l)
    bcs.push_back(detail::block_coeffs(obs[l].y, p, cfg, &den));
  std::vector<detail::NumQuad> sum_num(std::max(qmax, 1));
  for (const auto& bc : bcs)
    for (std::size_t q = 0; q < bc.num.size(); ++q) {
      sum_num[q].n0 += bc.num[q].n0;
      sum_num[q].n1 += bc.num[q].n1;
      sum_num[q].n2 += bc.num[q].n2;
    }
  if (qmax == 0) {
    double n0 = 0.0;
    for (const auto& bc : bcs) n0 += std::norm(bc.a_dot[0]);
    sum_num[0] = {n0, 0.0, 0.0};
  }
  const double denom0 =
      den.empty() ? p.size() * cfg.rho : den[0].d0;
  const auto best = detail::best_candidate(sum_num, den, qmax, denom0);

  EstimationResult res;
  res.h_hat.resize(nb);
  res.d_hat.assign(nb, best.d());
  res.q_hat.assign(nb, best.q);
  res.e_hat.assign(nb, best.e);
  const auto v = template_v(best.q, best.e, p, cfg);
  double vv = 0.0;
  for (double vi : v) vv += vi * vi;
  double total = 0.0;
  for (int l = 0; l < nb; ++l) {
    cplx dot = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) dot += v[i] * obs[l].y[i];
    res.h_hat[l] = dot / vv;
    total += std::norm(dot) / vv;
  }
  res.objective = total;
  return res;
}

}  // namespace fbl
