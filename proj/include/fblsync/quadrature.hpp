#pragma once

#include <Eigen/Eigenvalues>
#include <cmath>
#include <map>
#include <mutex>
#include <vector>

#include "fblsync/rng.hpp"

namespace fbl {

// Gauss-Hermite rule for weight exp(-t^2) on the real line.
struct GaussHermite {
  std::vector<double> x;
  std::vector<double> w;
};

// Golub-Welsch nodes (eigenvalues of the Jacobi matrix), then weights from
// the Christoffel function w_k = 1 / sum_j p_j(x_k)^2 over the orthonormal
// Hermite polynomials. The eigenvector route w = mu0 v0^2 loses all relative
// accuracy for tail weights (~1e-33 at order 64, where v0^2 sits below the
// eigenvector's absolute error), which breaks the exact mirror symmetry the
// MGF assembly relies on when strongly tilted integrands are dominated by
// extreme nodes. The Christoffel sum has only positive terms, so its relative
// accuracy follows the recurrence's, and evaluating it at exactly mirrored
// nodes gives bitwise-symmetric weights. Rules are cached per order.
inline const GaussHermite& gauss_hermite(int order) {
  static std::map<int, GaussHermite> cache;
  static std::mutex mutex;
  std::lock_guard<std::mutex> lock(mutex);
  auto it = cache.find(order);
  if (it != cache.end()) return it->second;

  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(order, order);
  for (int k = 1; k < order; ++k) {
    const double b = std::sqrt(k / 2.0);
    jac(k, k - 1) = b;
    jac(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
      jac, Eigen::EigenvaluesOnly);
  GaussHermite gh;
  gh.x.resize(order);
  gh.w.resize(order);
  for (int k = 0; k < order; ++k) gh.x[k] = es.eigenvalues()(k);
  // Enforce exact antisymmetry of the node set.
  for (int k = 0; k < order / 2; ++k) {
    const double xs = 0.5 * (gh.x[order - 1 - k] - gh.x[k]);
    gh.x[k] = -xs;
    gh.x[order - 1 - k] = xs;
  }
  if (order % 2 == 1) gh.x[order / 2] = 0.0;
  const double p0 = 1.0 / std::pow(kPi, 0.25);
  for (int k = 0; k < order; ++k) {
    // Orthonormal recurrence p_{j+1} = x sqrt(2/(j+1)) p_j - sqrt(j/(j+1))
    // p_{j-1}; the Christoffel sum runs over j = 0 .. order-1.
    const double x = gh.x[k];
    double pm = 0.0, pc = p0, lambda = p0 * p0;
    for (int j = 1; j < order; ++j) {
      const double pn =
          x * std::sqrt(2.0 / j) * pc - std::sqrt((j - 1.0) / j) * pm;
      pm = pc;
      pc = pn;
      lambda += pc * pc;
    }
    gh.w[k] = 1.0 / lambda;
  }
  return cache.emplace(order, std::move(gh)).first->second;
}

}  // namespace fbl
