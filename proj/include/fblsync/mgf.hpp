#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "fblsync/config.hpp"
#include "fblsync/infodensity.hpp"
#include "fblsync/quadrature.hpp"

namespace fbl {

inline constexpr int kDefaultQuadOrder = 64;
inline constexpr double kDefaultZeta0 = 2.0;

struct MgfError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// phi, phi', phi'' of the conditional per-symbol MGF (or of a block MGF) at
// one zeta. log_phi duplicates phi for use deep in exponent arithmetic.
struct MgfEval {
  double phi = 1.0;
  double dphi = 0.0;
  double ddphi = 0.0;
  double log_phi = 0.0;
  // Logarithmic derivatives, exact even when phi itself would overflow.
  double r1() const { return dphi / phi; }
  double r2() const { return ddphi / phi; }
};

// Per-symbol conditional MGF phi_{j,l}(zeta) = E[ e^{zeta f1(Z)} f2(Z)^zeta ]
// and its first two zeta-derivatives, by tensor Gauss-Hermite quadrature over
// the complex noise Z ~ CN(0,1). The derivative integrands share the factor
// g(z) = f1(z) + log f2(z) = -i_s, so one pass yields all three.
inline MgfEval conditional_mgf(IsiStateIndex b, int block,
                               const DecodingState& state, double zeta,
                               double rho, int quad_order = kDefaultQuadOrder) {
  const auto pts = bpsk_points(rho);
  const double delta = state.delta[block];
  const cplx x_cur = pts[b.cur(2)];
  const cplx x_prev = pts[b.prev(2)];
  const cplx h = state.h[block];
  const cplx hh = state.h_hat[block];
  const double s = state.s;
  const cplx alpha = h * (delta * x_cur + (1.0 - delta) * x_prev);
  const auto& gh = gauss_hermite(quad_order);
  const int n = quad_order;

  // First pass: find the max exponent for the shift.
  // g at node (i,k): z = x_i + i y_k (CN(0,1) density absorbed by weights/pi).
  std::vector<double> gz(n * n);
  double gmax = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      const cplx z(gh.x[i], gh.x[k]);
      const cplx y = alpha + z;
      const double f1 = s * std::norm(y - hh * x_cur);
      const double e1 = -s * std::norm(y - hh * pts[0]);
      const double e2 = -s * std::norm(y - hh * pts[1]);
      const double m = std::max(e1, e2);
      const double logf2 =
          m + std::log(0.5 * (std::exp(e1 - m) + std::exp(e2 - m)));
      const double g = f1 + logf2;
      gz[i * n + k] = g;
      gmax = std::max(gmax, zeta * g);
    }
  }
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    for (int k = 0; k < n; ++k) {
      const double g = gz[i * n + k];
      const double wexp = gh.w[i] * gh.w[k] * std::exp(zeta * g - gmax);
      s0 += wexp;
      s1 += wexp * g;
      s2 += wexp * g * g;
    }
  }
  const double log_phi = gmax + std::log(s0 / kPi);
  if (!std::isfinite(log_phi)) {
    std::ostringstream msg;
    msg << "non-finite conditional MGF at zeta=" << zeta << " s=" << s
        << " |h|=" << std::abs(h) << " |h_hat|=" << std::abs(hh)
        << " delta=" << delta;
    throw MgfError(msg.str());
  }
  MgfEval out;
  out.log_phi = log_phi;
  out.phi = std::exp(log_phi);
  out.dphi = out.phi * (s1 / s0);
  out.ddphi = out.phi * (s2 / s0);
  return out;
}

// Row-stochastic transition matrix of the ISI-state chain:
// [P]_{ij} = (1/u) 1{prev(j) == cur(i)}.
inline Eigen::MatrixXd transition_matrix(int u) {
  if (u < 2) throw std::invalid_argument("constellation size must be >= 2");
  const int n = u * u;
  Eigen::MatrixXd p = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (j / u == i % u) p(i, j) = 1.0 / u;
  return p;
}

// Block MGF by the matrix-power route:
//   phi_l(zeta) = nu(zeta)^T P_l(zeta)^{ns-1} 1,
// with [P_l]_{mn} = [P]_{mn} phi_{n,l} and nu = (1/u^2)(phi_1..phi_{u^2}).
// Derivatives are accumulated with the product rule. Intended for moderate
// ns; the BPSK closed form below is the production path.
inline MgfEval block_mgf_generic(int block, const DecodingState& state,
                                 double zeta, double rho, int ns,
                                 int quad_order = kDefaultQuadOrder) {
  const int u = 2;
  const int n = u * u;
  if (ns < 1) throw std::invalid_argument("ns must be >= 1");
  std::vector<MgfEval> sym(n);
  for (int j = 0; j < n; ++j)
    sym[j] = conditional_mgf({j}, block, state, zeta, rho, quad_order);
  const Eigen::MatrixXd p = transition_matrix(u);
  Eigen::MatrixXd p0(n, n), p1(n, n), p2(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      p0(i, j) = p(i, j) * sym[j].phi;
      p1(i, j) = p(i, j) * sym[j].dphi;
      p2(i, j) = p(i, j) * sym[j].ddphi;
    }
  Eigen::RowVectorXd a0(n), a1(n), a2(n);
  for (int j = 0; j < n; ++j) {
    a0(j) = sym[j].phi / n;
    a1(j) = sym[j].dphi / n;
    a2(j) = sym[j].ddphi / n;
  }
  for (int k = 1; k < ns; ++k) {
    const Eigen::RowVectorXd b2 = a2 * p0 + 2.0 * (a1 * p1) + a0 * p2;
    const Eigen::RowVectorXd b1 = a1 * p0 + a0 * p1;
    a2 = b2;
    a1 = b1;
    a0 = a0 * p0;
  }
  MgfEval out;
  out.phi = a0.sum();
  out.dphi = a1.sum();
  out.ddphi = a2.sum();
  out.log_phi = std::log(out.phi);
  return out;
}

// Pair (phi_1, phi_2) of distinct per-symbol MGFs for BPSK; by symmetry
// phi_4 = phi_1 and phi_3 = phi_2.
struct BpskSymbolMgfs {
  MgfEval phi1;  // states (x1,x1) / (x2,x2)
  MgfEval phi2;  // states (x1,x2) / (x2,x1)
};

inline BpskSymbolMgfs bpsk_symbol_mgfs(int block, const DecodingState& state,
                                       double zeta, double rho,
                                       int quad_order = kDefaultQuadOrder) {
  return {conditional_mgf({0}, block, state, zeta, rho, quad_order),
          conditional_mgf({1}, block, state, zeta, rho, quad_order)};
}

// BPSK closed form phi_l = 2^{-ns} (phi_1 + phi_2)^{ns}, in log domain, with
// derivatives via the chain rule on S = phi_1 + phi_2.
inline MgfEval block_mgf_bpsk(int block, const DecodingState& state,
                              double zeta, double rho, int ns,
                              int quad_order = kDefaultQuadOrder) {
  const auto sy = bpsk_symbol_mgfs(block, state, zeta, rho, quad_order);
  const double s0 = sy.phi1.phi + sy.phi2.phi;
  const double s1 = sy.phi1.dphi + sy.phi2.dphi;
  const double s2 = sy.phi1.ddphi + sy.phi2.ddphi;
  MgfEval out;
  out.log_phi = ns * (std::log(s0) - std::log(2.0));
  out.phi = std::exp(out.log_phi);
  const double r1 = s1 / s0;
  const double r2 = s2 / s0;
  out.dphi = out.phi * ns * r1;
  out.ddphi = out.phi * (ns * (ns - 1) * r1 * r1 + ns * r2);
  return out;
}

struct CgfEval {
  double kappa = 0.0;   // sum of per-block log phi_l
  double mu = 0.0;      // kappa' / nb
  double sigma2 = 0.0;  // kappa'' / nb
};

// CGF of the negated per-block information densities and its scaled
// derivatives, as used by the saddlepoint expansion (n is the block count).
inline CgfEval cgf_and_derivatives(const DecodingState& state, double zeta,
                                   const SystemConfig& cfg,
                                   int quad_order = kDefaultQuadOrder) {
  const int nb = state.nb();
  CgfEval out;
  for (int l = 0; l < nb; ++l) {
    const auto sy = bpsk_symbol_mgfs(l, state, zeta, cfg.rho, quad_order);
    const double s0 = sy.phi1.phi + sy.phi2.phi;
    const double r1 = (sy.phi1.dphi + sy.phi2.dphi) / s0;
    const double r2 = (sy.phi1.ddphi + sy.phi2.ddphi) / s0;
    const int ns = cfg.ns();
    out.kappa += ns * (std::log(s0) - std::log(2.0));
    out.mu += ns * r1;
    out.sigma2 += ns * (r2 - r1 * r1);
  }
  out.mu /= nb;
  out.sigma2 /= nb;
  if (!std::isfinite(out.kappa) || !std::isfinite(out.mu) ||
      !std::isfinite(out.sigma2))
    throw MgfError("non-finite CGF evaluation");
  return out;
}

// Repeated CGF evaluations at many zeta (saddle search, branch formulas)
// share the same quadrature samples of g = -i_s: those depend on the state
// but not on zeta, so they are precomputed once per block and symbol pair.
class CgfEvaluator {
 public:
  CgfEvaluator(const DecodingState& state, const SystemConfig& cfg,
               int quad_order = kDefaultQuadOrder)
      : nb_(state.nb()), ns_(cfg.ns()) {
    const auto& gh = gauss_hermite(quad_order);
    const int n = quad_order;
    w_.resize(n * n);
    for (int i = 0; i < n; ++i)
      for (int k = 0; k < n; ++k) w_[i * n + k] = gh.w[i] * gh.w[k] / kPi;
    const auto pts = bpsk_points(cfg.rho);
    blocks_.resize(nb_);
    for (int l = 0; l < nb_; ++l) {
      for (int j = 0; j < 2; ++j) {  // states (x1,x1) and (x1,x2)
        const cplx x_prev = pts[0];
        const cplx x_cur = pts[j];
        const cplx alpha =
            state.h[l] *
            (state.delta[l] * x_cur + (1.0 - state.delta[l]) * x_prev);
        auto& g = j == 0 ? blocks_[l].g1 : blocks_[l].g2;
        g.resize(n * n);
        for (int i = 0; i < n; ++i) {
          for (int k = 0; k < n; ++k) {
            const cplx y = alpha + cplx(gh.x[i], gh.x[k]);
            const double f1 =
                state.s * std::norm(y - state.h_hat[l] * x_cur);
            const double e1 = -state.s * std::norm(y - state.h_hat[l] * pts[0]);
            const double e2 = -state.s * std::norm(y - state.h_hat[l] * pts[1]);
            const double m = std::max(e1, e2);
            g[i * n + k] =
                f1 + m + std::log(0.5 * (std::exp(e1 - m) + std::exp(e2 - m)));
          }
        }
      }
      for (const auto* g : {&blocks_[l].g1, &blocks_[l].g2}) {
        for (double v : *g) {
          blocks_[l].gmin = std::min(blocks_[l].gmin, v);
          blocks_[l].gmax = std::max(blocks_[l].gmax, v);
        }
      }
    }
  }

  CgfEval operator()(double zeta) const {
    CgfEval out;
    for (const auto& blk : blocks_) {
      const double shift = zeta >= 0.0 ? zeta * blk.gmax : zeta * blk.gmin;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0;
      for (const auto* g : {&blk.g1, &blk.g2}) {
        const auto& gv = *g;
        for (std::size_t i = 0; i < gv.size(); ++i) {
          const double e = w_[i] * std::exp(zeta * gv[i] - shift);
          s0 += e;
          s1 += e * gv[i];
          s2 += e * gv[i] * gv[i];
        }
      }
      // s0 = (phi1 + phi2) e^{-shift}; the shift cancels in the ratios.
      const double r1 = s1 / s0;
      const double r2 = s2 / s0;
      out.kappa += ns_ * (shift + std::log(0.5 * s0));
      out.mu += ns_ * r1;
      out.sigma2 += ns_ * (r2 - r1 * r1);
    }
    out.mu /= nb_;
    out.sigma2 /= nb_;
    if (!std::isfinite(out.kappa) || !std::isfinite(out.mu) ||
        !std::isfinite(out.sigma2))
      throw MgfError("non-finite CGF evaluation");
    return out;
  }

 private:
  struct Block {
    std::vector<double> g1, g2;
    double gmin = std::numeric_limits<double>::infinity();
    double gmax = -std::numeric_limits<double>::infinity();
  };
  int nb_;
  int ns_;
  std::vector<double> w_;
  std::vector<Block> blocks_;
};

}  // namespace fbl
