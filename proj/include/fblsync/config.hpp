#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace fbl {

using cplx = std::complex<double>;

enum class DelayModel { Independent, FullyDependent };
enum class Constellation { BPSK };

// All times are expressed in samples: the sampling interval is fixed to 1 and
// the symbol period equals the upsampling rate N.
inline constexpr double kTs = 1.0;

// Physical and protocol parameters of one operating point. rho is the average
// SNR in linear scale (the noise PSD is fixed to 1), rate_nats the
// transmission rate in nats per channel use.
struct SystemConfig {
  double rho = 1.0;
  double rate_nats = 0.1;
  int nb = 1;   // fading blocks per packet
  int nc = 24;  // channel uses per block
  int np = 7;   // pilot symbols per block
  int upsampling = 1;  // receiver samples per symbol period
  double dmax = -1.0;  // maximum delay in samples; < 0 means default 2*tp
  DelayModel delay_model = DelayModel::FullyDependent;
  Constellation constellation = Constellation::BPSK;
  bool include_data_interference = false;

  int ns() const { return nc - np; }
  double tp() const { return static_cast<double>(upsampling) * kTs; }
  double delay_max() const { return dmax < 0.0 ? 2.0 * tp() : dmax; }
  // Largest integer sample shift; also the number of leading zeros that the
  // pilot window must absorb.
  int qmax() const { return static_cast<int>(std::ceil(delay_max() / kTs)); }
  // Length of the pilot observation window (captures all pilot symbols for
  // every admissible delay).
  int obs_len() const { return qmax() + np * upsampling; }

  void validate() const {
    if (rho <= 0.0) throw std::invalid_argument("rho must be positive");
    if (rate_nats <= 0.0) throw std::invalid_argument("rate must be positive");
    if (nb < 1) throw std::invalid_argument("nb must be >= 1");
    if (np < 0 || np > nc) throw std::invalid_argument("need 0 <= np <= nc");
    if (upsampling < 1) throw std::invalid_argument("upsampling must be >= 1");
    if (delay_max() < 0.0) throw std::invalid_argument("dmax must be >= 0");
  }
};

// Pilot symbols for one block; BPSK entries are +-sqrt(rho) so the squared
// norm is exactly np * rho.
struct PilotSequence {
  std::vector<double> symbols;
  int size() const { return static_cast<int>(symbols.size()); }
};

// Fading gains and delays of one packet, with the integer/fractional
// decomposition d = q + e, e in [0, 1).
struct ChannelRealization {
  std::vector<cplx> h;    // length nb
  std::vector<double> d;  // length nb (all equal under FullyDependent)

  int q(int block) const { return static_cast<int>(std::floor(d[block] / kTs)); }
  double e(int block) const { return d[block] - q(block) * kTs; }
};

// One block's upsampled matched-filter output over the pilot window.
struct PilotObservation {
  std::vector<cplx> y;  // length obs_len()
};

// Output of the synchronization and channel estimation stage. d_hat has one
// entry per block; the joint estimator fills all entries with the common
// estimate.
struct EstimationResult {
  std::vector<cplx> h_hat;
  std::vector<double> d_hat;
  std::vector<int> q_hat;
  std::vector<double> e_hat;
  double objective = 0.0;
};

}  // namespace fbl
