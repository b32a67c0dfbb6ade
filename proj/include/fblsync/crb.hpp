#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "fblsync/config.hpp"
#include "fblsync/estimator.hpp"
#include "fblsync/pilot.hpp"
#include "fblsync/waveform.hpp"

namespace fbl {

// Derivatives of the stacked mean vector mu(theta) with respect to
// Re h_l, Im h_l and the delay parameters. Columns are ordered
// [Re h_1..Re h_nb, Im h_1..Im h_nb, delays] matching the Fisher matrix.
// Under fully dependent delays there is a single delay column.
inline Eigen::MatrixXcd mean_vector_derivatives(const ChannelRealization& ch,
                                                const PilotSequence& p,
                                                const SystemConfig& cfg) {
  const int nb = static_cast<int>(ch.h.size());
  const int m_len = cfg.obs_len();
  const bool joint = cfg.delay_model == DelayModel::FullyDependent;
  const int n_delay = joint ? 1 : nb;
  Eigen::MatrixXcd der =
      Eigen::MatrixXcd::Zero(nb * m_len, 2 * nb + n_delay);
  const cplx j_unit(0.0, 1.0);
  for (int l = 0; l < nb; ++l) {
    if (ch.e(l) == 0.0)
      throw std::domain_error("CRB undefined at lattice delay (e = 0)");
    const auto v = template_v(ch.q(l), ch.e(l), p, cfg);
    const auto xq = upsampled_pilot_vector(p, ch.q(l), cfg);
    const auto xq1 = upsampled_pilot_vector(p, ch.q(l) + 1, cfg);
    const int delay_col = 2 * nb + (joint ? 0 : l);
    for (int m = 0; m < m_len; ++m) {
      der(l * m_len + m, l) = v[m];
      der(l * m_len + m, nb + l) = j_unit * v[m];
      der(l * m_len + m, delay_col) += ch.h[l] / kTs * (xq1[m] - xq[m]);
    }
  }
  return der;
}

// Fisher information matrix J_{mn} = 2 Re{ dmu_m^H dmu_n } for the complex
// Gaussian observation with identity covariance.
inline Eigen::MatrixXd fisher_matrix(const ChannelRealization& ch,
                                     const PilotSequence& p,
                                     const SystemConfig& cfg) {
  const Eigen::MatrixXcd der = mean_vector_derivatives(ch, p, cfg);
  Eigen::MatrixXd j = 2.0 * (der.adjoint() * der).real();
  return 0.5 * (j + j.transpose());  // enforce exact symmetry
}

struct CrbResult {
  std::vector<double> crb_delay;    // one entry (joint) or nb entries
  std::vector<double> crb_channel;  // nb entries, Re+Im variance bound
};

// Diagonal entries of J^{-1}: delay variances and per-block channel-gain
// variances (sum of the real- and imaginary-part bounds).
inline CrbResult crb_bounds(const ChannelRealization& ch,
                            const PilotSequence& p, const SystemConfig& cfg) {
  const int nb = static_cast<int>(ch.h.size());
  const Eigen::MatrixXd j = fisher_matrix(ch, p, cfg);
  Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
  if (!lu.isInvertible()) {
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(j);
    const double cond = svd.singularValues()(0) /
                        svd.singularValues()(svd.singularValues().size() - 1);
    throw std::domain_error("singular Fisher matrix, condition number " +
                            std::to_string(cond));
  }
  const Eigen::MatrixXd inv = lu.inverse();
  CrbResult out;
  const int n_delay = static_cast<int>(j.rows()) - 2 * nb;
  for (int k = 0; k < n_delay; ++k)
    out.crb_delay.push_back(inv(2 * nb + k, 2 * nb + k));
  for (int l = 0; l < nb; ++l)
    out.crb_channel.push_back(inv(l, l) + inv(nb + l, nb + l));
  return out;
}

}  // namespace fbl
