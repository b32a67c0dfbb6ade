#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fblsync/config.hpp"
#include "fblsync/crb.hpp"
#include "fblsync/estimator.hpp"
#include "fblsync/pilot.hpp"
#include "fblsync/saddlepoint.hpp"

namespace fbl {

inline constexpr double kLn2 = 0.69314718055994530942;

inline double snr_db_to_rho(double snr_db) {
  return std::pow(10.0, snr_db / 10.0);
}
inline double rho_to_snr_db(double rho) { return 10.0 * std::log10(rho); }

enum class SweepAxis { None, Snr, N, Np, Nb, SigmaD2 };

enum class SMode { Fixed, GridOptimized };

struct ExperimentSpec {
  SystemConfig base;
  double snr_db = 10.0;
  SweepAxis axis = SweepAxis::None;
  std::vector<double> axis_values;
  std::optional<double> target_eps;
  std::int64_t n_outer = 100000;
  std::uint64_t seed = 1;
  EstimatorMode mode = EstimatorMode::Joint;
  SMode s_mode = SMode::Fixed;
  double s_fixed = 1.0;
  bool optimize_pilots = false;
  bool with_nmse = false;
  std::int64_t nmse_trials = 10000;
  double sigma_d2_norm = 0.0;  // sigma_d^2 / tp^2 for the synthetic mode
  int workers = 1;
  int quad_order = kDefaultQuadOrder;
  double zeta0 = kDefaultZeta0;

  void validate() const {
    if (n_outer < 1) throw std::invalid_argument("n_outer must be >= 1");
    if (!std::is_sorted(axis_values.begin(), axis_values.end()))
      throw std::invalid_argument("axis values must be sorted");
    for (double v : axis_values)
      if (!std::isfinite(v))
        throw std::invalid_argument("axis values must be finite");
  }
};

namespace detail {

// Instantiate the system/options at one sweep point. When sweeping nb, the
// total length nb*nc is held fixed (rounded to the nearest factorization).
inline void apply_axis(const ExperimentSpec& spec, double value,
                       SystemConfig* cfg, PepOptions* opt, double* snr_db) {
  *cfg = spec.base;
  *snr_db = spec.snr_db;
  opt->mode = spec.mode;
  opt->s = spec.s_fixed;
  opt->sigma_d2 = spec.sigma_d2_norm;
  opt->saddle.quad_order = spec.quad_order;
  opt->saddle.zeta0 = spec.zeta0;
  opt->workers = spec.workers;
  switch (spec.axis) {
    case SweepAxis::None:
      break;
    case SweepAxis::Snr:
      *snr_db = value;
      break;
    case SweepAxis::N:
      cfg->upsampling = static_cast<int>(std::lround(value));
      break;
    case SweepAxis::Np:
      cfg->np = static_cast<int>(std::lround(value));
      break;
    case SweepAxis::Nb: {
      const int total = spec.base.nb * spec.base.nc;
      cfg->nb = static_cast<int>(std::lround(value));
      cfg->nc = total / cfg->nb;
      if (cfg->nb * cfg->nc != total)
        throw std::invalid_argument("nb sweep value does not divide nb*nc");
      break;
    }
    case SweepAxis::SigmaD2:
      opt->sigma_d2 = value;
      break;
  }
  cfg->rho = snr_db_to_rho(*snr_db);
  opt->sigma_d2 *= cfg->tp() * cfg->tp();  // input is sigma_d^2 / tp^2
}

}  // namespace detail

// Grid search over s followed by golden-section refinement of the bracketing
// interval; evaluated at a tenth of the outer sample budget. Ties break
// toward smaller s.
inline double optimize_s(const SystemConfig& cfg, const PepOptions& base_opt,
                         std::int64_t n_outer, std::uint64_t seed,
                         std::vector<double> grid = {}) {
  if (grid.empty()) {
    const int n_grid = 24;
    const double lo = std::log(0.05), hi = std::log(4.0);
    for (int i = 0; i < n_grid; ++i)
      grid.push_back(std::exp(lo + (hi - lo) * i / (n_grid - 1)));
  }
  const std::int64_t n_fast = std::max<std::int64_t>(1, n_outer / 10);
  PepOptions opt = base_opt;
  auto eval = [&](double s) {
    opt.s = s;
    return epsilon_pep(cfg, opt, n_fast, seed).eps_pep_ub;
  };
  std::size_t best = 0;
  double best_eps = eval(grid[0]);
  for (std::size_t i = 1; i < grid.size(); ++i) {
    const double e = eval(grid[i]);
    if (e < best_eps) {  // strict: ties keep the smaller s
      best_eps = e;
      best = i;
    }
  }
  if (grid.size() == 1) return grid[0];
  double a = grid[best == 0 ? 0 : best - 1];
  double b = grid[std::min(best + 1, grid.size() - 1)];
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = b - gr * (b - a), x2 = a + gr * (b - a);
  double f1 = eval(x1), f2 = eval(x2);
  for (int it = 0; it < 20 && (b - a) > 1e-3; ++it) {
    if (f1 <= f2) {  // keep the left (smaller-s) bracket on ties
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - gr * (b - a);
      f1 = eval(x1);
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + gr * (b - a);
      f2 = eval(x2);
    }
  }
  return f1 <= f2 ? x1 : x2;
}

struct NpResult {
  int np_star = 0;
  double s_star = 1.0;
  double eps = 1.0;
  std::vector<int> candidates;
  std::vector<double> eps_per_candidate;
  std::vector<double> stderr_per_candidate;
};

// Pilot-length optimization over m-sequence lengths, re-optimizing s for
// each candidate.
inline NpResult optimize_np(const SystemConfig& cfg, const PepOptions& base,
                            std::int64_t n_outer, std::uint64_t seed) {
  NpResult res;
  for (int np : {3, 7, 15, 31, 63})
    if (np < cfg.nc) res.candidates.push_back(np);
  if (res.candidates.empty())
    throw std::invalid_argument("no pilot-length candidate fits nc");
  res.eps = std::numeric_limits<double>::infinity();
  for (int np : res.candidates) {
    SystemConfig c = cfg;
    c.np = np;
    PepOptions opt = base;
    opt.s = optimize_s(c, opt, n_outer, seed);
    const PepResult pr = epsilon_pep(c, opt, n_outer, seed);
    res.eps_per_candidate.push_back(pr.eps_pep_ub);
    res.stderr_per_candidate.push_back(pr.stderr_pep);
    if (pr.eps_pep_ub < res.eps) {
      res.eps = pr.eps_pep_ub;
      res.np_star = np;
      res.s_star = opt.s;
    }
  }
  return res;
}

struct SnrSearchResult {
  double snr_db = 0.0;
  double band_lo = 0.0;  // final bracketing interval in dB
  double band_hi = 0.0;
  std::vector<double> trace_snr;
  std::vector<double> trace_eps;
};

// Bisection on SNR (dB) for a target packet-error probability; the bound is
// monotonically decreasing in SNR.
inline SnrSearchResult snr_for_target(const SystemConfig& cfg_in,
                                      const PepOptions& base, double target,
                                      std::int64_t n_outer, std::uint64_t seed,
                                      SMode s_mode = SMode::Fixed,
                                      double tol_db = 0.05) {
  if (!(target > 0.0 && target < 1.0))
    throw std::invalid_argument("target eps must lie in (0,1)");
  SnrSearchResult res;
  auto eval = [&](double snr_db) {
    SystemConfig cfg = cfg_in;
    cfg.rho = snr_db_to_rho(snr_db);
    PepOptions opt = base;
    if (s_mode == SMode::GridOptimized)
      opt.s = optimize_s(cfg, opt, n_outer, seed);
    const double e = epsilon_pep(cfg, opt, n_outer, seed).eps_pep_ub;
    res.trace_snr.push_back(snr_db);
    res.trace_eps.push_back(e);
    return e;
  };
  double lo = -10.0, hi = 40.0;
  if (eval(lo) < target)
    throw std::runtime_error("target eps reached already at -10 dB");
  if (eval(hi) > target)
    throw std::runtime_error("target eps unreachable within 40 dB");
  while (hi - lo > tol_db) {
    const double mid = 0.5 * (lo + hi);
    if (eval(mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  res.snr_db = 0.5 * (lo + hi);
  res.band_lo = lo;
  res.band_hi = hi;
  return res;
}

struct NmseResult {
  double nmse_delay_joint = 0.0;
  double nmse_channel_joint = 0.0;
  double nmse_delay_per_block = 0.0;
  double nmse_channel_per_block = 0.0;
  double crb_delay_joint = 0.0;      // E[crb]/tp^2, fully dependent model
  double crb_delay_per_block = 0.0;  // E[crb]/tp^2, independent model
  double crb_channel_joint = 0.0;    // E[crb/|h|^2]
  double crb_channel_per_block = 0.0;
};

// Paired NMSE/CRB Monte Carlo: each trial draws one fully dependent
// channel/delay realization, runs both estimators on the same observations,
// and evaluates both CRB constructions on the same realization.
inline NmseResult run_nmse(const SystemConfig& cfg_in, std::int64_t n_trials,
                           std::uint64_t seed, int workers = 1) {
  SystemConfig cfg = cfg_in;
  cfg.delay_model = DelayModel::FullyDependent;
  cfg.validate();
  const PilotSequence pilot = make_pilot_sequence(cfg.np, cfg.rho);
  SystemConfig cfg_indep = cfg;
  cfg_indep.delay_model = DelayModel::Independent;
  const double tp2 = cfg.tp() * cfg.tp();
  const int nb = cfg.nb;

  struct Acc {
    double dj = 0, cj = 0, dp = 0, cp = 0, bdj = 0, bdp = 0, bcj = 0, bcp = 0;
  };
  std::vector<Acc> acc(n_trials);
  detail::parallel_trials(n_trials, workers, [&](std::int64_t i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    ChannelRealization ch;
    do {
      ch = draw_channel(cfg, rng);
    } while (std::abs(ch.e(0)) < 1e-9 * kTs ||
             std::abs(ch.e(0) - kTs) < 1e-9 * kTs);
    std::vector<PilotObservation> obs(nb);
    for (int l = 0; l < nb; ++l)
      obs[l] = sample_pilot_observation(ch, l, pilot, cfg, rng);
    const EstimationResult ej = estimate_joint(obs, pilot, cfg);
    const EstimationResult ep = estimate_per_block(obs, pilot, cfg_indep);
    Acc& a = acc[i];
    a.dj = (ej.d_hat[0] - ch.d[0]) * (ej.d_hat[0] - ch.d[0]) / tp2;
    for (int l = 0; l < nb; ++l) {
      const double h2 = std::norm(ch.h[l]);
      a.cj += std::norm(ej.h_hat[l] - ch.h[l]) / h2 / nb;
      a.cp += std::norm(ep.h_hat[l] - ch.h[l]) / h2 / nb;
      a.dp += (ep.d_hat[l] - ch.d[l]) * (ep.d_hat[l] - ch.d[l]) / tp2 / nb;
    }
    const CrbResult cj = crb_bounds(ch, pilot, cfg);
    const CrbResult cp = crb_bounds(ch, pilot, cfg_indep);
    a.bdj = cj.crb_delay[0] / tp2;
    for (int l = 0; l < nb; ++l) {
      const double h2 = std::norm(ch.h[l]);
      a.bdp += cp.crb_delay[l] / tp2 / nb;
      a.bcj += cj.crb_channel[l] / h2 / nb;
      a.bcp += cp.crb_channel[l] / h2 / nb;
    }
  });
  NmseResult res;
  for (const Acc& a : acc) {
    res.nmse_delay_joint += a.dj;
    res.nmse_channel_joint += a.cj;
    res.nmse_delay_per_block += a.dp;
    res.nmse_channel_per_block += a.cp;
    res.crb_delay_joint += a.bdj;
    res.crb_delay_per_block += a.bdp;
    res.crb_channel_joint += a.bcj;
    res.crb_channel_per_block += a.bcp;
  }
  const double inv = 1.0 / static_cast<double>(n_trials);
  res.nmse_delay_joint *= inv;
  res.nmse_channel_joint *= inv;
  res.nmse_delay_per_block *= inv;
  res.nmse_channel_per_block *= inv;
  res.crb_delay_joint *= inv;
  res.crb_delay_per_block *= inv;
  res.crb_channel_joint *= inv;
  res.crb_channel_per_block *= inv;
  return res;
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

inline std::string fmt17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

inline const char* sweep_csv_header() {
  return "axis,snr_dB,eps_pep_ub,stderr,sync_fail_rate,s_star,np_star,"
         "nmse_delay,nmse_channel,crb_delay,crb_channel,"
         "branch_mid,branch_high,branch_low,branch_high_sat,branch_low_sat,"
         "branch_sync_fail,wall_time\r\n";
}

// One row per sweep point. Deterministic given the spec: the per-point seed
// depends only on the master seed and the point index, so estimator modes
// compared under the same spec share their random draws.
inline std::string run_experiment(const ExperimentSpec& spec,
                                  bool include_wall_time = true) {
  spec.validate();
  std::string out = sweep_csv_header();
  std::vector<double> values = spec.axis_values;
  if (spec.axis == SweepAxis::None && values.empty()) values.push_back(0.0);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    SystemConfig cfg;
    PepOptions opt;
    double snr_db = 0.0;
    detail::apply_axis(spec, values[i], &cfg, &opt, &snr_db);
    const std::uint64_t point_seed =
        derive_seed(spec.seed, 0x5eedULL + static_cast<std::uint64_t>(i));
    std::string np_star_field;
    if (spec.optimize_pilots) {
      const NpResult np = optimize_np(cfg, opt, spec.n_outer, point_seed);
      cfg.np = np.np_star;
      opt.s = np.s_star;
      np_star_field = std::to_string(np.np_star);
    } else if (spec.s_mode == SMode::GridOptimized) {
      opt.s = optimize_s(cfg, opt, spec.n_outer, point_seed);
    }
    const PepResult pep = epsilon_pep(cfg, opt, spec.n_outer, point_seed);
    std::string nmse_fields = ",,,";
    if (spec.with_nmse) {
      const NmseResult nm = run_nmse(cfg, spec.nmse_trials,
                                     derive_seed(point_seed, 0x4a5eULL),
                                     spec.workers);
      const bool joint = spec.mode != EstimatorMode::PerBlock;
      nmse_fields =
          fmt17(joint ? nm.nmse_delay_joint : nm.nmse_delay_per_block) + "," +
          fmt17(joint ? nm.nmse_channel_joint : nm.nmse_channel_per_block) +
          "," + fmt17(joint ? nm.crb_delay_joint : nm.crb_delay_per_block) +
          "," + fmt17(joint ? nm.crb_channel_joint : nm.crb_channel_per_block);
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out += fmt17(values[i]) + "," + fmt17(snr_db) + "," +
           fmt17(pep.eps_pep_ub) + "," + fmt17(pep.stderr_pep) + "," +
           fmt17(pep.sync_fail_rate) + "," + fmt17(opt.s) + "," +
           np_star_field + "," + nmse_fields;
    for (int b = 0; b < 6; ++b)
      out += "," + std::to_string(pep.branch_hist[b]);
    out += ",";
    out += include_wall_time ? fmt17(wall) : std::string("0");
    out += "\r\n";
  }
  return out;
}

inline const char* nmse_csv_header() {
  return "snr_dB,nmse_delay_joint,nmse_channel_joint,nmse_delay_per_block,"
         "nmse_channel_per_block,crb_delay_joint,crb_delay_per_block,"
         "crb_channel_joint,crb_channel_per_block\r\n";
}

inline std::string run_nmse_experiment(const ExperimentSpec& spec) {
  spec.validate();
  std::string out = nmse_csv_header();
  std::vector<double> snrs = spec.axis_values;
  if (snrs.empty()) snrs.push_back(spec.snr_db);
  for (std::size_t i = 0; i < snrs.size(); ++i) {
    SystemConfig cfg = spec.base;
    cfg.rho = snr_db_to_rho(snrs[i]);
    cfg.delay_model = DelayModel::FullyDependent;
    const NmseResult nm =
        run_nmse(cfg, spec.nmse_trials,
                 derive_seed(spec.seed, 0x5eedULL + i), spec.workers);
    out += fmt17(snrs[i]) + "," + fmt17(nm.nmse_delay_joint) + "," +
           fmt17(nm.nmse_channel_joint) + "," +
           fmt17(nm.nmse_delay_per_block) + "," +
           fmt17(nm.nmse_channel_per_block) + "," +
           fmt17(nm.crb_delay_joint) + "," + fmt17(nm.crb_delay_per_block) +
           "," + fmt17(nm.crb_channel_joint) + "," +
           fmt17(nm.crb_channel_per_block) + "\r\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Flat key=value configuration files
// ---------------------------------------------------------------------------

inline std::map<std::string, std::string> parse_config_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto trim = [](std::string s) {
      const char* ws = " \t\r\n";
      const auto b = s.find_first_not_of(ws);
      if (b == std::string::npos) return std::string();
      return s.substr(b, s.find_last_not_of(ws) - b + 1);
    };
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) +
                               ": expected key=value");
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

inline EstimatorMode parse_mode(const std::string& s) {
  if (s == "per_block") return EstimatorMode::PerBlock;
  if (s == "joint") return EstimatorMode::Joint;
  if (s == "perfect_sync_pilot_csi") return EstimatorMode::PerfectSyncPilotCsi;
  if (s == "perfect_all") return EstimatorMode::PerfectAll;
  if (s == "synthetic_delay") return EstimatorMode::SyntheticDelay;
  throw std::invalid_argument("unknown estimator mode: " + s);
}

inline SweepAxis parse_axis(const std::string& s) {
  if (s == "none") return SweepAxis::None;
  if (s == "snr") return SweepAxis::Snr;
  if (s == "N") return SweepAxis::N;
  if (s == "np") return SweepAxis::Np;
  if (s == "nb") return SweepAxis::Nb;
  if (s == "sigma_d2") return SweepAxis::SigmaD2;
  throw std::invalid_argument("unknown sweep axis: " + s);
}

inline std::vector<double> parse_value_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(std::stod(item));
  return out;
}

// Applies one key to the spec; returns false for unknown keys so callers can
// report them with the file context.
inline bool apply_config_key(ExperimentSpec* spec, const std::string& key,
                             const std::string& value) {
  if (key == "snr_db") spec->snr_db = std::stod(value);
  else if (key == "rate_bits") spec->base.rate_nats = std::stod(value) * kLn2;
  else if (key == "nb") spec->base.nb = std::stoi(value);
  else if (key == "nc") spec->base.nc = std::stoi(value);
  else if (key == "np") spec->base.np = std::stoi(value);
  else if (key == "upsampling") spec->base.upsampling = std::stoi(value);
  else if (key == "dmax") spec->base.dmax = std::stod(value);
  else if (key == "delay_model")
    spec->base.delay_model = value == "independent"
                                 ? DelayModel::Independent
                                 : DelayModel::FullyDependent;
  else if (key == "data_interference")
    spec->base.include_data_interference = value == "1" || value == "true";
  else if (key == "mode") spec->mode = parse_mode(value);
  else if (key == "axis") spec->axis = parse_axis(value);
  else if (key == "axis_values") spec->axis_values = parse_value_list(value);
  else if (key == "target_eps") spec->target_eps = std::stod(value);
  else if (key == "n_outer") spec->n_outer = std::stoll(value);
  else if (key == "seed") spec->seed = std::stoull(value);
  else if (key == "workers") spec->workers = std::stoi(value);
  else if (key == "s") spec->s_fixed = std::stod(value);
  else if (key == "s_mode")
    spec->s_mode = value == "grid_optimized" ? SMode::GridOptimized
                                             : SMode::Fixed;
  else if (key == "optimize_pilots")
    spec->optimize_pilots = value == "1" || value == "true";
  else if (key == "with_nmse")
    spec->with_nmse = value == "1" || value == "true";
  else if (key == "nmse_trials") spec->nmse_trials = std::stoll(value);
  else if (key == "sigma_d2") spec->sigma_d2_norm = std::stod(value);
  else if (key == "quad_order") spec->quad_order = std::stoi(value);
  else if (key == "zeta0") spec->zeta0 = std::stod(value);
  else return false;
  return true;
}

inline void load_config(ExperimentSpec* spec, const std::string& path) {
  for (const auto& [k, v] : parse_config_file(path))
    if (!apply_config_key(spec, k, v))
      throw std::runtime_error("unknown config key: " + k);
}

}  // namespace fbl
