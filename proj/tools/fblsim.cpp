// fblsim: command-line driver for pilot-assisted short-packet simulations.
//
// Subcommands:
//   sweep       packet-error-probability sweeps over a chosen axis
//   snr-search  bisection for the SNR achieving a target error probability
//   nmse        estimation-quality sweeps (NMSE vs CRB)
//   validate    quick self-checks of the numerical core

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fblsync/harness.hpp"

namespace {

struct CliState {
  fbl::ExperimentSpec spec;
  std::string config_path;
  std::string out_path;
  std::string mode_str, axis_str, s_mode_str, delay_model_str, axis_values_str;
  double rate_bits = -1.0;
  double target_eps = -1.0;
};

void add_common_options(CLI::App* cmd, CliState* st) {
  cmd->add_option("--config", st->config_path,
                  "flat key=value config file (flags override it)");
  cmd->add_option("--out", st->out_path, "output CSV path (default: stdout)");
  cmd->add_option("--seed", st->spec.seed, "master RNG seed");
  cmd->add_option("--workers", st->spec.workers, "worker thread count");
  cmd->add_option("--snr-db", st->spec.snr_db, "SNR in dB");
  cmd->add_option("--rate-bits", st->rate_bits, "rate in bits per channel use");
  cmd->add_option("--nb", st->spec.base.nb, "number of fading blocks");
  cmd->add_option("--nc", st->spec.base.nc, "symbols per block");
  cmd->add_option("--np", st->spec.base.np, "pilot symbols per block");
  cmd->add_option("--upsampling,-N", st->spec.base.upsampling,
                  "oversampling factor N");
  cmd->add_option("--dmax", st->spec.base.dmax,
                  "maximum delay in samples (default 2*N)");
  cmd->add_option("--delay-model", st->delay_model_str,
                  "independent | fully_dependent");
  cmd->add_option("--mode", st->mode_str,
                  "per_block | joint | perfect_sync_pilot_csi | perfect_all | "
                  "synthetic_delay");
  cmd->add_option("--s", st->spec.s_fixed, "fixed RCUs parameter s");
  cmd->add_option("--s-mode", st->s_mode_str, "fixed | grid_optimized");
  cmd->add_option("--n-outer", st->spec.n_outer, "outer Monte-Carlo trials");
  cmd->add_option("--axis", st->axis_str, "none | snr | N | np | nb | sigma_d2");
  cmd->add_option("--axis-values", st->axis_values_str,
                  "comma-separated sweep values (sorted)");
  cmd->add_option("--sigma-d2", st->spec.sigma_d2_norm,
                  "synthetic delay-estimate variance, normalized by tp^2");
  cmd->add_option("--target-eps", st->target_eps,
                  "target packet error probability");
  cmd->add_option("--nmse-trials", st->spec.nmse_trials,
                  "trials for NMSE/CRB averaging");
  cmd->add_flag("--with-nmse", st->spec.with_nmse,
                "emit NMSE/CRB columns in sweep rows");
  cmd->add_flag("--optimize-pilots", st->spec.optimize_pilots,
                "optimize np per sweep point");
  cmd->add_option("--quad-order", st->spec.quad_order,
                  "Gauss-Hermite order per axis");
  cmd->add_option("--zeta0", st->spec.zeta0, "saddle search window half-width");
  cmd->add_flag("--data-interference,!--no-data-interference",
                st->spec.base.include_data_interference,
                "model data symbols spilling into the pilot window");
}

// Config file first, then CLI flags override.
void finalize(CliState* st, const CLI::App& cmd) {
  fbl::ExperimentSpec from_file;
  if (!st->config_path.empty()) fbl::load_config(&from_file, st->config_path);
  // Start from file values, then re-apply every flag the user actually set.
  fbl::ExperimentSpec merged = from_file;
  auto overridden = [&](const std::string& name) {
    return cmd.count(name) > 0;
  };
  const fbl::ExperimentSpec& c = st->spec;
  if (overridden("--seed")) merged.seed = c.seed;
  if (overridden("--workers")) merged.workers = c.workers;
  if (overridden("--snr-db")) merged.snr_db = c.snr_db;
  if (overridden("--nb")) merged.base.nb = c.base.nb;
  if (overridden("--nc")) merged.base.nc = c.base.nc;
  if (overridden("--np")) merged.base.np = c.base.np;
  if (overridden("--upsampling")) merged.base.upsampling = c.base.upsampling;
  if (overridden("--dmax")) merged.base.dmax = c.base.dmax;
  if (overridden("--s")) merged.s_fixed = c.s_fixed;
  if (overridden("--n-outer")) merged.n_outer = c.n_outer;
  if (overridden("--sigma-d2")) merged.sigma_d2_norm = c.sigma_d2_norm;
  if (overridden("--nmse-trials")) merged.nmse_trials = c.nmse_trials;
  if (overridden("--with-nmse")) merged.with_nmse = c.with_nmse;
  if (overridden("--optimize-pilots"))
    merged.optimize_pilots = c.optimize_pilots;
  if (overridden("--quad-order")) merged.quad_order = c.quad_order;
  if (overridden("--zeta0")) merged.zeta0 = c.zeta0;
  if (overridden("--data-interference") ||
      overridden("--no-data-interference"))
    merged.base.include_data_interference = c.base.include_data_interference;
  if (st->rate_bits > 0.0) merged.base.rate_nats = st->rate_bits * fbl::kLn2;
  if (!st->mode_str.empty()) merged.mode = fbl::parse_mode(st->mode_str);
  if (!st->axis_str.empty()) merged.axis = fbl::parse_axis(st->axis_str);
  if (!st->axis_values_str.empty())
    merged.axis_values = fbl::parse_value_list(st->axis_values_str);
  if (!st->s_mode_str.empty())
    merged.s_mode = st->s_mode_str == "grid_optimized"
                        ? fbl::SMode::GridOptimized
                        : fbl::SMode::Fixed;
  if (!st->delay_model_str.empty())
    merged.base.delay_model = st->delay_model_str == "independent"
                                  ? fbl::DelayModel::Independent
                                  : fbl::DelayModel::FullyDependent;
  if (st->target_eps > 0.0) merged.target_eps = st->target_eps;
  st->spec = merged;
}

void emit(const std::string& csv, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << csv;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open output file: " + out_path);
  out << csv;
}

int run_validate(const CliState& st) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("%-48s %s\n", name, ok ? "pass" : "FAIL");
    if (!ok) ++failures;
  };
  using namespace fbl;

  // Pilot energy: +-sqrt(rho) entries give norm^2 = np * rho exactly.
  {
    const PilotSequence p = make_pilot_sequence(7, 2.5);
    double e = 0.0;
    for (double x : p.symbols) e += x * x;
    check("pilot energy", std::abs(e - 7 * 2.5) < 1e-12);
  }
  // MGF normalization phi(0) = 1 for a random decoding state.
  {
    SystemConfig cfg;
    cfg.rho = 2.0;
    cfg.nb = 2;
    cfg.nc = 12;
    cfg.np = 3;
    Rng rng(7);
    DecodingState stt;
    for (int l = 0; l < 2; ++l) {
      stt.h.push_back(rng.cnormal());
      stt.h_hat.push_back(stt.h.back() + 0.1 * rng.cnormal());
      stt.delta.push_back(0.9);
    }
    stt.s = 0.8;
    const CgfEvaluator cgf(stt, cfg, 48);
    check("mgf normalization at zeta=0",
          std::abs(cgf(0.0).kappa) < 1e-10);
  }
  // Saddlepoint vs direct Monte Carlo at a mid-branch state.
  {
    SystemConfig cfg;
    cfg.rho = 1.5;
    cfg.nb = 2;
    cfg.nc = 16;
    cfg.np = 4;
    cfg.rate_nats = 0.30;
    DecodingState stt;
    stt.h = {cplx(0.9, 0.3), cplx(-0.5, 0.8)};
    stt.h_hat = stt.h;
    stt.delta = {0.95, 0.9};
    stt.s = 1.0;
    const SaddleResult sp = conditional_eps_saddlepoint(stt, cfg, {2.0, 48});
    const McEstimate mc = rcus_mc_oracle(stt, cfg, 200000, st.spec.seed);
    check("saddlepoint vs Monte Carlo",
          std::abs(sp.eps_cond - mc.eps_hat) <
              std::max(3.0 * mc.stderr_hat, 0.15 * mc.eps_hat));
  }
  // Noise-free estimation recovers the true delay and gain.
  {
    SystemConfig cfg;
    cfg.rho = 4.0;
    cfg.nb = 2;
    cfg.nc = 12;
    cfg.np = 7;
    cfg.upsampling = 4;
    cfg.delay_model = DelayModel::FullyDependent;
    const PilotSequence p = make_pilot_sequence(cfg.np, cfg.rho);
    Rng rng(11);
    ChannelRealization ch = draw_channel(cfg, rng);
    std::vector<PilotObservation> obs(cfg.nb);
    for (int l = 0; l < cfg.nb; ++l)
      obs[l] = sample_pilot_observation(ch, l, p, cfg, rng, false);
    const EstimationResult est = estimate_joint(obs, p, cfg);
    bool ok = std::abs(est.d_hat[0] - ch.d[0]) < 1e-9;
    for (int l = 0; l < cfg.nb; ++l)
      ok = ok && std::abs(est.h_hat[l] - ch.h[l]) < 1e-9;
    check("noise-free joint estimation", ok);
  }
  // Determinism of the full pipeline.
  {
    ExperimentSpec spec = st.spec;
    spec.axis = SweepAxis::None;
    spec.axis_values.clear();
    spec.n_outer = 50;
    spec.base.nb = 2;
    spec.base.nc = 12;
    spec.base.np = 3;
    spec.base.rate_nats = 0.3;
    spec.quad_order = 32;
    check("deterministic reruns",
          run_experiment(spec, false) == run_experiment(spec, false));
  }
  std::printf("%s\n", failures == 0 ? "all checks passed"
                                    : "some checks FAILED");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Short-packet synchronization and error-probability simulator"};
  app.require_subcommand(1);
  CliState st;

  CLI::App* sweep = app.add_subcommand("sweep", "error-probability sweep");
  CLI::App* search =
      app.add_subcommand("snr-search", "SNR for a target error probability");
  CLI::App* nmse = app.add_subcommand("nmse", "NMSE vs CRB sweep");
  CLI::App* validate = app.add_subcommand("validate", "numerical self-checks");
  for (CLI::App* cmd : {sweep, search, nmse, validate})
    add_common_options(cmd, &st);

  CLI11_PARSE(app, argc, argv);
  const CLI::App* active = app.get_subcommands().front();

  try {
    finalize(&st, *active);
    if (active == sweep) {
      emit(fbl::run_experiment(st.spec), st.out_path);
    } else if (active == nmse) {
      emit(fbl::run_nmse_experiment(st.spec), st.out_path);
    } else if (active == search) {
      if (!st.spec.target_eps)
        throw std::runtime_error("snr-search requires --target-eps");
      fbl::SystemConfig cfg = st.spec.base;
      fbl::PepOptions opt;
      opt.mode = st.spec.mode;
      opt.s = st.spec.s_fixed;
      opt.sigma_d2 =
          st.spec.sigma_d2_norm * cfg.tp() * cfg.tp();
      opt.saddle.quad_order = st.spec.quad_order;
      opt.saddle.zeta0 = st.spec.zeta0;
      opt.workers = st.spec.workers;
      const fbl::SnrSearchResult res =
          fbl::snr_for_target(cfg, opt, *st.spec.target_eps, st.spec.n_outer,
                              st.spec.seed, st.spec.s_mode);
      std::string csv = "target_eps,snr_dB,band_lo_dB,band_hi_dB\r\n";
      csv += fbl::fmt17(*st.spec.target_eps) + "," + fbl::fmt17(res.snr_db) +
             "," + fbl::fmt17(res.band_lo) + "," + fbl::fmt17(res.band_hi) +
             "\r\n";
      emit(csv, st.out_path);
    } else {
      return run_validate(st);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
