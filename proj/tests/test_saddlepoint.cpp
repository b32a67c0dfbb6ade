#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "fblsync/config.hpp"
#include "fblsync/mgf.hpp"
#include "fblsync/rng.hpp"
#include "fblsync/saddlepoint.hpp"

using namespace fbl;

namespace {

SystemConfig mid_cfg() {
  SystemConfig cfg;
  cfg.rho = 1.5;
  cfg.nb = 2;
  cfg.nc = 16;
  cfg.np = 4;
  cfg.rate_nats = 0.3;
  return cfg;
}

DecodingState mid_state() {
  DecodingState st;
  st.h = {cplx(0.9, 0.3), cplx(-0.5, 0.8)};
  st.h_hat = st.h;
  st.delta = {0.95, 0.9};
  st.s = 1.0;
  return st;
}

}  // namespace

TEST_CASE("scaled complementary error function helpers") {
  for (double b : {0.0, 0.3, 1.0, 3.0, 8.0, 20.0}) {
    const double direct = std::exp(0.5 * b * b) *
                          0.5 * std::erfc(b / std::sqrt(2.0));
    CHECK(detail::exp_halfsq_q(b) == Catch::Approx(direct).epsilon(1e-12));
  }
  // Both evaluation branches against independently computed references.
  CHECK(detail::erfcx_pos(12.0) ==
        Catch::Approx(0.04685422101489376).epsilon(1e-13));
  CHECK(detail::erfcx_pos(14.0) ==
        Catch::Approx(0.04019722865021846).epsilon(1e-12));
  CHECK(detail::erfcx_pos(25.0) ==
        Catch::Approx(0.022549572432641357).epsilon(1e-13));
  CHECK(detail::erfcx_pos(30.0) ==
        Catch::Approx(0.018795888861416754).epsilon(1e-13));
  // log Q for moderate negative and large positive arguments.
  CHECK(detail::log_q(-1.0) ==
        Catch::Approx(std::log(1.0 - 0.15865525393145705)).epsilon(1e-10));
  CHECK(detail::log_q(10.0) ==
        Catch::Approx(std::log(7.61985302416053e-24)).epsilon(1e-9));
}

TEST_CASE("constructed saddle fixed point") {
  const SystemConfig cfg = mid_cfg();
  const DecodingState st = mid_state();
  const CgfEvaluator cgf(st, cfg, 64);
  const double mu_half = cgf(0.5).mu;
  SystemConfig tuned = cfg;
  tuned.rate_nats = -mu_half / tuned.nc;
  const SaddleResult res = solve_saddle(cgf, tuned.rate_nats, tuned);
  CHECK(res.branch == SaddleBranch::Mid);
  CHECK(res.zeta_star == Catch::Approx(0.5).margin(1e-6));
}

TEST_CASE("branch classification") {
  const SystemConfig cfg = mid_cfg();
  SECTION("tiny rate at high SNR lands above 1") {
    SystemConfig hi = cfg;
    hi.rho = 100.0;  // 20 dB
    DecodingState st = mid_state();
    for (auto& h : st.h) h *= 3.0;
    st.h_hat = st.h;
    st.delta = {1.0, 1.0};
    hi.rate_nats = 0.01;
    const CgfEvaluator cgf(st, hi, 64);
    const SaddleResult res = solve_saddle(cgf, hi.rate_nats, hi);
    CHECK((res.branch == SaddleBranch::High ||
           res.branch == SaddleBranch::HighSaturated));
  }
  SECTION("rate above channel quality lands below 0") {
    SystemConfig lo = cfg;
    lo.rho = 1.5;
    DecodingState st = mid_state();
    for (auto& h : st.h) h *= 0.05;  // deep fade
    st.h_hat = st.h;
    lo.rate_nats = 0.4;
    const CgfEvaluator cgf(st, lo, 64);
    const SaddleResult res = solve_saddle(cgf, lo.rate_nats, lo);
    CHECK((res.branch == SaddleBranch::Low ||
           res.branch == SaddleBranch::LowSaturated));
  }
  SECTION("saturation flags at a tight window") {
    DecodingState st = mid_state();
    SystemConfig cfg2 = cfg;
    const CgfEvaluator cgf(st, cfg2, 64);
    SaddleOptions opt;
    opt.zeta0 = 0.25;
    // Rate below -mu(zeta0)/nc forces the high saturation.
    cfg2.rate_nats = -cgf(opt.zeta0).mu / cfg2.nc * 0.5;
    CHECK(solve_saddle(cgf, cfg2.rate_nats, cfg2, opt).branch ==
          SaddleBranch::HighSaturated);
    // Rate above -mu(-zeta0)/nc forces the low saturation.
    cfg2.rate_nats = -cgf(-opt.zeta0).mu / cfg2.nc * 2.0;
    CHECK(solve_saddle(cgf, cfg2.rate_nats, cfg2, opt).branch ==
          SaddleBranch::LowSaturated);
  }
}

TEST_CASE("branch continuity") {
  const DecodingState st = mid_state();
  SystemConfig cfg = mid_cfg();
  const CgfEvaluator cgf(st, cfg, 64);
  SECTION("across zeta = 1") {
    // zeta* > 1 with a positive rate needs a strong channel and small s,
    // otherwise -mu(1) is negative. Use a high-SNR matched state.
    SystemConfig hc = cfg;
    hc.rho = 10.0;
    DecodingState hs = st;
    hs.delta = {1.0, 1.0};
    hs.s = 0.3;
    const CgfEvaluator hcgf(hs, hc, 64);
    SystemConfig below = hc, above = hc;
    below.rate_nats = -hcgf(0.995).mu / hc.nc;
    above.rate_nats = -hcgf(1.005).mu / hc.nc;
    REQUIRE(below.rate_nats > 0.0);
    const SaddleResult rb = conditional_eps_saddlepoint(hs, below);
    const SaddleResult ra = conditional_eps_saddlepoint(hs, above);
    REQUIRE(rb.branch == SaddleBranch::Mid);
    REQUIRE(ra.branch == SaddleBranch::High);
    CHECK(std::abs(ra.eps_cond - rb.eps_cond) < 0.05 * rb.eps_cond);
  }
  SECTION("across zeta = 0") {
    SystemConfig below = cfg, above = cfg;
    below.rate_nats = -cgf(-0.01).mu / cfg.nc;
    above.rate_nats = -cgf(0.01).mu / cfg.nc;
    const SaddleResult rb = conditional_eps_saddlepoint(st, below);
    const SaddleResult ra = conditional_eps_saddlepoint(st, above);
    REQUIRE(rb.branch == SaddleBranch::Low);
    REQUIRE(ra.branch == SaddleBranch::Mid);
    CHECK(std::abs(ra.eps_cond - rb.eps_cond) < 0.05 * rb.eps_cond);
  }
}

TEST_CASE("monotonicity in rate") {
  const DecodingState st = mid_state();
  SystemConfig cfg = mid_cfg();
  double prev = 0.0;
  for (int i = 0; i < 20; ++i) {
    cfg.rate_nats = 0.02 + 0.05 * i;
    const SaddleResult r = conditional_eps_saddlepoint(st, cfg);
    CHECK(r.eps_cond >= prev - 1e-12);
    CHECK(r.eps_cond > 0.0);
    CHECK(r.eps_cond <= 1.0);
    prev = r.eps_cond;
  }
}

TEST_CASE("RCUs Monte Carlo oracle basics") {
  const DecodingState st = mid_state();
  SystemConfig cfg = mid_cfg();
  SECTION("absurd rate gives certainty") {
    cfg.rate_nats = 50.0;
    const McEstimate mc = rcus_mc_oracle(st, cfg, 1000, 3);
    CHECK(mc.eps_hat == 1.0);
  }
  SECTION("huge margin gives near-zero") {
    SystemConfig hi = cfg;
    hi.rho = 100.0;
    hi.rate_nats = 1e-4;
    DecodingState good = st;
    for (auto& h : good.h) h *= 3.0;
    good.h_hat = good.h;
    good.delta = {1.0, 1.0};
    good.s = 2.0;
    const McEstimate mc = rcus_mc_oracle(good, hi, 20000, 3);
    CHECK(mc.eps_hat < 0.01);
  }
  SECTION("agrees with the saddlepoint at the mid state") {
    const SaddleResult sp = conditional_eps_saddlepoint(st, cfg);
    const McEstimate mc = rcus_mc_oracle(st, cfg, 400000, 11);
    REQUIRE(sp.branch == SaddleBranch::Mid);
    CHECK(std::abs(sp.eps_cond - mc.eps_hat) <
          std::max(3.0 * mc.stderr_hat, 0.15 * mc.eps_hat));
  }
}

TEST_CASE("epsilon_pep properties") {
  SystemConfig cfg;
  cfg.rho = 4.0;
  cfg.nb = 2;
  cfg.nc = 12;
  cfg.np = 3;
  cfg.upsampling = 2;
  cfg.rate_nats = 0.25;
  cfg.delay_model = DelayModel::FullyDependent;
  PepOptions opt;
  opt.mode = EstimatorMode::Joint;
  opt.s = 1.0;
  opt.saddle.quad_order = 32;

  SECTION("determinism and range") {
    const PepResult a = epsilon_pep(cfg, opt, 200, 42);
    const PepResult b = epsilon_pep(cfg, opt, 200, 42);
    CHECK(a.eps_pep_ub == b.eps_pep_ub);
    CHECK(a.eps_pep_ub >= 0.0);
    CHECK(a.eps_pep_ub <= 1.0);
    CHECK(a.sync_fail_rate >= 0.0);
    CHECK(a.sync_fail_rate <= 1.0);
    std::int64_t total = 0;
    for (auto c : a.branch_hist) total += c;
    CHECK(total == 200);
  }
  SECTION("worker count does not change the mean") {
    PepOptions two = opt;
    two.workers = 2;
    CHECK(epsilon_pep(cfg, opt, 200, 42).eps_pep_ub ==
          epsilon_pep(cfg, two, 200, 42).eps_pep_ub);
  }
  SECTION("nb=1: both delay models give identical trials") {
    SystemConfig one = cfg;
    one.nb = 1;
    SystemConfig ind = one;
    ind.delay_model = DelayModel::Independent;
    PepOptions po = opt;
    po.mode = EstimatorMode::PerBlock;
    const PepResult a = epsilon_pep(one, opt, 300, 7);
    const PepResult b = epsilon_pep(ind, po, 300, 7);
    CHECK(a.eps_pep_ub == Catch::Approx(b.eps_pep_ub).epsilon(1e-12));
  }
  SECTION("perfect knowledge beats estimation under paired seeds") {
    PepOptions perfect = opt;
    perfect.mode = EstimatorMode::PerfectAll;
    const double est = epsilon_pep(cfg, opt, 400, 9).eps_pep_ub;
    const double gen = epsilon_pep(cfg, perfect, 400, 9).eps_pep_ub;
    CHECK(gen < est);
  }
  SECTION("synthetic delay mode degrades with variance") {
    PepOptions syn = opt;
    syn.mode = EstimatorMode::SyntheticDelay;
    syn.sigma_d2 = 0.0;
    const double clean = epsilon_pep(cfg, syn, 300, 5).eps_pep_ub;
    syn.sigma_d2 = 0.25 * cfg.tp() * cfg.tp();
    const double noisy = epsilon_pep(cfg, syn, 300, 5).eps_pep_ub;
    CHECK(noisy > clean);
  }
}
