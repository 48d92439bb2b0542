#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mcat/attacks.hpp"
#include "mcat/nets.hpp"

namespace mcat {

/// Per-sample margin certificates for a model with unit features and unit
/// classifier rows.
///
/// With L bounding the network h before normalisation (phi = h / ||h||) and
/// rho = ||h(x)||, a perturbation of l-inf size eps moves phi by at most
/// L eps / (rho - L eps), and each logit difference by twice that. The
/// prediction therefore cannot flip while eps < r(x) = gamma rho / (L (2 + gamma)),
/// which is gamma / (2 L_x) for the local constant L_x = L (2 + gamma) / (2 rho).
struct CertResult {
  std::vector<double> margin;          // gamma(x) on raw logits
  std::vector<double> feature_norm;    // rho = ||h(x)||
  std::vector<double> local_lipschitz; // L_x
  std::vector<double> radius;          // r(x), 0 when gamma <= 0
  std::vector<bool> valid;
  double lipschitz = 0.0;              // L of h
  double theta_min_deg = 0.0;
  double theorem1_threshold = 0.0;     // sin(theta_min / 2) / L_phi over the batch (see theorem1_check)
  /// Optional uncertified proxy: the radius formula with the empirical
  /// Lipschitz estimate in place of L. Written as a column when set.
  std::vector<double> proxy_radius;

  std::size_t certified() const;
  std::string csv(std::span<const std::size_t> ids, std::span<const int> labels) const;
};

/// UnsupportedError unless normalize_output and normalize_rows are both on.
CertResult certify(const ModelBundle& model, const Tensor& x, std::span<const int> y, double lipschitz);

/// Fills res.proxy_radius from an empirical Lipschitz estimate (0 when the
/// estimate is not positive).
void attach_proxy_radius(CertResult& res, double empirical_lipschitz);

/// Empirical test of the margin theorem on a normalised model.
///
/// phi's Lipschitz constant over the evaluated set is taken as
/// L_phi = L (1 + s) / rho_min with s = sin(theta_min / 2), so the theorem's
/// threshold is eps_max = s / L_phi. PGD is run at each fraction of eps_max on
/// the correctly classified cleans; every flip is recorded as a counterexample.
struct Theorem1Check {
  struct Point {
    double epsilon = 0.0;
    std::size_t evaluated = 0;
    std::size_t robust = 0;
  };
  double theta_min_deg = 0.0;
  double lipschitz = 0.0;      // L of h
  double rho_min = 0.0;
  double lipschitz_phi = 0.0;  // L_phi
  double epsilon_max = 0.0;
  std::vector<Point> points;
  std::vector<std::size_t> counterexamples;  // sample ids, one entry per flip
  bool holds = true;
};

/// Attack-based soundness check: every valid certificate is attacked with
/// PGD (`steps` steps, random start) and a single signed-gradient step, both
/// restricted to fraction * r(x).
struct Falsification {
  std::size_t attacked = 0;
  std::size_t flipped = 0;
  std::vector<std::size_t> flipped_ids;
};

Falsification falsify_certificates(const ModelBundle& model, const Tensor& x, std::span<const int> y,
                                   std::span<const std::size_t> ids, const CertResult& cert, std::size_t steps,
                                   double fraction, std::uint64_t seed);

Theorem1Check theorem1_check(const ModelBundle& model, const Tensor& x, std::span<const int> y,
                             std::span<const std::size_t> ids, double lipschitz, std::span<const double> fractions,
                             std::size_t steps, std::uint64_t seed);

}  // namespace mcat
