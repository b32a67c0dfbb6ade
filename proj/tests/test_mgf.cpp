#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "fblsync/config.hpp"
#include "fblsync/infodensity.hpp"
#include "fblsync/mgf.hpp"
#include "fblsync/quadrature.hpp"
#include "fblsync/rng.hpp"

using namespace fbl;

namespace {

DecodingState random_state(int nb, Rng& rng, double mismatch = 0.1) {
  DecodingState st;
  for (int l = 0; l < nb; ++l) {
    st.h.push_back(rng.cnormal());
    st.h_hat.push_back(st.h.back() + mismatch * rng.cnormal());
    st.delta.push_back(0.7 + 0.3 * rng.uniform_co());
  }
  st.s = 0.3 + 1.2 * rng.uniform_co();
  return st;
}

// Brute-force evaluation of the block MGF: enumerate the last pilot symbol
// and all data symbols, weight every path by its probability 2^-(ns+1), and
// multiply per-symbol conditional MGFs along the induced ISI-state path.
MgfEval brute_force_block_mgf(int block, const DecodingState& st, double zeta,
                              double rho, int ns, int order) {
  MgfEval per_state[4];
  for (int b = 0; b < 4; ++b)
    per_state[b] = conditional_mgf(IsiStateIndex{b}, block, st, zeta, rho,
                                   order);
  MgfEval out;
  out.phi = out.dphi = out.ddphi = 0.0;
  const int paths = 1 << (ns + 1);
  for (int mask = 0; mask < paths; ++mask) {
    // bit k is the symbol x_k, k = 0 .. ns (bit 0 = last pilot symbol)
    double phi = 1.0, dsum = 0.0, d2sum = 0.0;
    for (int k = 1; k <= ns; ++k) {
      const int prev = (mask >> (k - 1)) & 1;
      const int cur = (mask >> k) & 1;
      const MgfEval& m = per_state[2 * prev + cur];
      phi *= m.phi;
      dsum += m.dphi / m.phi;
      d2sum += m.ddphi / m.phi - (m.dphi / m.phi) * (m.dphi / m.phi);
    }
    const double p = 1.0 / paths;
    out.phi += p * phi;
    out.dphi += p * phi * dsum;
    out.ddphi += p * phi * (d2sum + dsum * dsum);
  }
  out.log_phi = std::log(out.phi);
  return out;
}

}  // namespace

TEST_CASE("quadrature nodes integrate Gaussian moments") {
  const GaussHermite& gh = gauss_hermite(32);
  double w = 0.0, m2 = 0.0;
  for (std::size_t i = 0; i < gh.x.size(); ++i) {
    w += gh.w[i];
    m2 += gh.w[i] * gh.x[i] * gh.x[i];
  }
  CHECK(w == Catch::Approx(std::sqrt(kPi)).epsilon(1e-13));
  CHECK(m2 == Catch::Approx(0.5 * std::sqrt(kPi)).epsilon(1e-12));
}

TEST_CASE("transition matrix") {
  SECTION("BPSK structure") {
    const auto p = transition_matrix(2);
    const double expect[4][4] = {{0.5, 0.5, 0, 0},
                                 {0, 0, 0.5, 0.5},
                                 {0.5, 0.5, 0, 0},
                                 {0, 0, 0.5, 0.5}};
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) CHECK(p(i, j) == expect[i][j]);
  }
  SECTION("row sums and sparsity for u=4") {
    const auto p = transition_matrix(4);
    for (int i = 0; i < 16; ++i) {
      double row = 0.0;
      int nonzero = 0;
      for (int j = 0; j < 16; ++j) {
        row += p(i, j);
        if (p(i, j) != 0.0) {
          ++nonzero;
          CHECK(p(i, j) == 0.25);
        }
      }
      CHECK(row == Catch::Approx(1.0));
      CHECK(nonzero == 4);
    }
  }
}

TEST_CASE("MGF normalization at zeta = 0") {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const DecodingState st = random_state(1, rng);
    const double rho = 0.5 + 3.0 * rng.uniform_co();
    for (int b = 0; b < 4; ++b) {
      const MgfEval m =
          conditional_mgf(IsiStateIndex{b}, 0, st, 0.0, rho, 64);
      CHECK(m.phi == Catch::Approx(1.0).margin(1e-10));
    }
  }
}

TEST_CASE("BPSK symmetry phi1=phi4, phi2=phi3") {
  Rng rng(3);
  for (int t = 0; t < 10; ++t) {
    const DecodingState st = random_state(1, rng);
    const double rho = 0.5 + 3.0 * rng.uniform_co();
    const double zeta = -1.5 + 3.0 * rng.uniform_co();
    const MgfEval m0 = conditional_mgf(IsiStateIndex{0}, 0, st, zeta, rho, 64);
    const MgfEval m1 = conditional_mgf(IsiStateIndex{1}, 0, st, zeta, rho, 64);
    const MgfEval m2 = conditional_mgf(IsiStateIndex{2}, 0, st, zeta, rho, 64);
    const MgfEval m3 = conditional_mgf(IsiStateIndex{3}, 0, st, zeta, rho, 64);
    CHECK(m0.phi == Catch::Approx(m3.phi).epsilon(1e-10));
    CHECK(m1.phi == Catch::Approx(m2.phi).epsilon(1e-10));
    CHECK(m0.dphi == Catch::Approx(m3.dphi).margin(1e-10));
    CHECK(m1.dphi == Catch::Approx(m2.dphi).margin(1e-10));
  }
}

TEST_CASE("block MGF vs brute-force path enumeration") {
  Rng rng(4);
  for (int ns : {2, 3, 4, 5, 6}) {
    for (int rep = 0; rep < 4; ++rep) {
      const DecodingState st = random_state(1, rng);
      const double rho = 0.5 + 2.0 * rng.uniform_co();
      const double zeta = -1.0 + 2.0 * rng.uniform_co();
      const MgfEval oracle = brute_force_block_mgf(0, st, zeta, rho, ns, 64);
      const MgfEval generic =
          block_mgf_generic(0, st, zeta, rho, ns, 64);
      const MgfEval bpsk = block_mgf_bpsk(0, st, zeta, rho, ns, 64);
      CHECK(generic.phi == Catch::Approx(oracle.phi).epsilon(1e-10));
      CHECK(generic.dphi == Catch::Approx(oracle.dphi).epsilon(1e-8));
      CHECK(generic.ddphi == Catch::Approx(oracle.ddphi).epsilon(1e-8));
      CHECK(bpsk.phi == Catch::Approx(oracle.phi).epsilon(1e-10));
      CHECK(bpsk.dphi == Catch::Approx(oracle.dphi).epsilon(1e-8));
      CHECK(bpsk.ddphi == Catch::Approx(oracle.ddphi).epsilon(1e-8));
    }
  }
}

TEST_CASE("generic and BPSK paths agree at 20 random points") {
  Rng rng(6);
  for (int t = 0; t < 20; ++t) {
    const DecodingState st = random_state(1, rng);
    const double rho = 0.5 + 3.0 * rng.uniform_co();
    const double zeta = -1.8 + 3.6 * rng.uniform_co();
    const int ns = 5 + static_cast<int>(20 * rng.uniform_co());
    const MgfEval a = block_mgf_generic(0, st, zeta, rho, ns, 48);
    const MgfEval b = block_mgf_bpsk(0, st, zeta, rho, ns, 48);
    CHECK(a.log_phi == Catch::Approx(b.log_phi).margin(1e-9));
    CHECK(a.dphi / a.phi == Catch::Approx(b.dphi / b.phi).margin(1e-8));
    CHECK(a.ddphi / a.phi ==
          Catch::Approx(b.ddphi / b.phi).epsilon(1e-7).margin(1e-7));
  }
}

TEST_CASE("derivatives match central finite differences") {
  // Compare log-derivatives: finite differences of phi itself lose accuracy
  // once phi varies over orders of magnitude across the step.
  Rng rng(8);
  DecodingState st = random_state(1, rng, 0.05);
  st.s = 0.8;
  const double rho = 1.7;
  const int ns = 12;
  const double step = 1e-4;
  for (double zeta : {-0.7, 0.2, 0.9, 1.4}) {
    const MgfEval m = block_mgf_bpsk(0, st, zeta, rho, ns, 64);
    const MgfEval mp = block_mgf_bpsk(0, st, zeta + step, rho, ns, 64);
    const MgfEval mm = block_mgf_bpsk(0, st, zeta - step, rho, ns, 64);
    const double fd1 = (mp.log_phi - mm.log_phi) / (2 * step);
    const double fd2 =
        (mp.log_phi - 2 * m.log_phi + mm.log_phi) / (step * step);
    const double r1 = m.dphi / m.phi;  // d log phi
    const double r2 = m.ddphi / m.phi - r1 * r1;
    CHECK(r1 == Catch::Approx(fd1).epsilon(1e-5).margin(1e-6));
    CHECK(r2 == Catch::Approx(fd2).epsilon(1e-4).margin(1e-4));
  }
}

TEST_CASE("CGF and its evaluator") {
  SystemConfig cfg;
  cfg.rho = 1.8;
  cfg.nb = 3;
  cfg.nc = 16;
  cfg.np = 4;
  // Moderate state: operating points of interest use an optimized s below
  // ~2 and near-accurate channel estimates.
  Rng rng(10);
  DecodingState st = random_state(cfg.nb, rng, 0.05);
  st.s = 0.7;

  SECTION("kappa(0) = 0") {
    CHECK(std::abs(cgf_and_derivatives(st, 0.0, cfg, 64).kappa) < 1e-9);
  }
  SECTION("identical blocks are additive") {
    DecodingState same = st;
    for (int l = 1; l < cfg.nb; ++l) {
      same.h[l] = same.h[0];
      same.h_hat[l] = same.h_hat[0];
      same.delta[l] = same.delta[0];
    }
    const CgfEval all = cgf_and_derivatives(same, 0.8, cfg, 64);
    SystemConfig one = cfg;
    one.nb = 1;
    DecodingState st1;
    st1.h = {same.h[0]};
    st1.h_hat = {same.h_hat[0]};
    st1.delta = {same.delta[0]};
    st1.s = same.s;
    const CgfEval single = cgf_and_derivatives(st1, 0.8, one, 64);
    CHECK(all.kappa == Catch::Approx(cfg.nb * single.kappa).epsilon(1e-10));
    CHECK(all.mu == Catch::Approx(single.mu).epsilon(1e-10));
    CHECK(all.sigma2 == Catch::Approx(single.sigma2).epsilon(1e-10));
  }
  SECTION("cached evaluator matches the direct path") {
    const CgfEvaluator cgf(st, cfg, 64);
    for (double zeta : {-1.5, -0.4, 0.0, 0.6, 1.2, 1.9}) {
      const CgfEval a = cgf(zeta);
      const CgfEval b = cgf_and_derivatives(st, zeta, cfg, 64);
      CHECK(a.kappa == Catch::Approx(b.kappa).margin(1e-9));
      CHECK(a.mu == Catch::Approx(b.mu).margin(1e-9));
      CHECK(a.sigma2 == Catch::Approx(b.sigma2).margin(1e-9));
    }
  }
  SECTION("kappa is convex and sigma2 positive on the window") {
    const CgfEvaluator cgf(st, cfg, 48);
    std::vector<double> kappas;
    const int n = 21;
    for (int i = 0; i < n; ++i) {
      const double zeta = -2.0 + 4.0 * i / (n - 1);
      const CgfEval ev = cgf(zeta);
      kappas.push_back(ev.kappa);
      CHECK(ev.sigma2 > 0.0);
    }
    const double h = 4.0 / (n - 1);
    for (int i = 1; i + 1 < n; ++i)
      CHECK(kappas[i + 1] - 2 * kappas[i] + kappas[i - 1] >= -1e-8 * h * h);
  }
  SECTION("self-convergence in quadrature order") {
    const CgfEval a = cgf_and_derivatives(st, 0.9, cfg, 40);
    const CgfEval b = cgf_and_derivatives(st, 0.9, cfg, 80);
    CHECK(a.kappa == Catch::Approx(b.kappa).epsilon(1e-8).margin(1e-8));
    CHECK(a.mu == Catch::Approx(b.mu).epsilon(1e-8).margin(1e-8));
    CHECK(a.sigma2 == Catch::Approx(b.sigma2).epsilon(1e-7).margin(1e-8));
  }
}

TEST_CASE("MC consistency of the block MGF") {
  SystemConfig cfg;
  cfg.rho = 1.5;
  cfg.nb = 1;
  cfg.nc = 10;
  cfg.np = 2;
  Rng rng(12);
  // A well-matched state keeps the importance weights e^{-zeta sum i_s}
  // light-tailed enough for a meaningful 1e6-sample comparison.
  DecodingState st;
  st.h = {cplx(0.8, -0.4)};
  st.h_hat = st.h;
  st.delta = {0.95};
  st.s = 0.6;
  const auto pts = bpsk_points(cfg.rho);
  const int ns = cfg.ns();
  for (double zeta : {0.3, 0.9}) {
    const MgfEval m = block_mgf_bpsk(0, st, zeta, cfg.rho, ns, 64);
    const int n = 1000000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
      double ilog = 0.0;
      cplx prev = pts[rng.bit()];
      for (int k = 0; k < ns; ++k) {
        const cplx cur = pts[rng.bit()];
        const cplx y =
            st.h[0] * (st.delta[0] * cur + (1.0 - st.delta[0]) * prev) +
            rng.cnormal();
        ilog += info_density(cur, y, st.h_hat[0], st.s, cfg.rho);
        prev = cur;
      }
      const double w = std::exp(-zeta * ilog);
      sum += w;
      sum2 += w * w;
    }
    const double mean = sum / n;
    const double se = std::sqrt((sum2 / n - mean * mean) / n);
    CHECK(std::abs(m.phi - mean) < 3.0 * se);
  }
}
