#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "fblsync/config.hpp"

namespace fbl {

// Everything the decoder-side bound conditions on: true and estimated gains,
// per-block timing offsets delta in [0,1], the decoder parameter s, and the
// interference direction fixed to the worst case (previous symbol leaks in).
struct DecodingState {
  std::vector<cplx> h;
  std::vector<cplx> h_hat;
  std::vector<double> delta;
  double s = 1.0;
  static constexpr int lambda = -1;

  int nb() const { return static_cast<int>(h.size()); }
};

// ISI state index b in {0..u^2-1}: b encodes the pair (x_{k-1}, x_k) as
// b = prev*u + cur with constellation points ordered x^(1), x^(2), ...
struct IsiStateIndex {
  int b = 0;
  int prev(int u) const { return b / u; }
  int cur(int u) const { return b % u; }
};

inline std::array<double, 2> bpsk_points(double rho) {
  const double a = std::sqrt(rho);
  return {-a, a};
}

// Generalized information density for the scaled nearest-neighbor metric,
//   i_s = -s|y - h_hat x|^2 - log( (1/u) sum_xbar exp(-s|y - h_hat xbar|^2) ),
// evaluated in the log domain with max subtraction.
inline double info_density(cplx x, cplx y, cplx h_hat, double s, double rho) {
  const auto pts = bpsk_points(rho);
  const double num = -s * std::norm(y - h_hat * x);
  double m = -std::numeric_limits<double>::infinity();
  std::array<double, 2> ex{};
  for (int i = 0; i < 2; ++i) {
    ex[i] = -s * std::norm(y - h_hat * pts[i]);
    m = std::max(m, ex[i]);
  }
  double acc = 0.0;
  for (double v : ex) acc += std::exp(v - m);
  return num - (m + std::log(acc / 2.0));
}

// Information density of one post-synchronization sample in ISI state b:
// the received sample is alpha_b + z with
// alpha_b = h_l (delta x_cur + (1-delta) x_prev).
inline double conditional_info_density(IsiStateIndex b, cplx z,
                                       const DecodingState& state, int block,
                                       double rho) {
  const auto pts = bpsk_points(rho);
  const double delta = state.delta[block];
  const cplx x_cur = pts[b.cur(2)];
  const cplx x_prev = pts[b.prev(2)];
  const cplx alpha = state.h[block] * (delta * x_cur + (1.0 - delta) * x_prev);
  return info_density(x_cur, alpha + z, state.h_hat[block], state.s, rho);
}

}  // namespace fbl
