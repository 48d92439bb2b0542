#include "mcat/certify.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "mcat/error.hpp"
#include "mcat/geometry.hpp"
#include "mcat/io.hpp"

namespace mcat {

namespace {

void require_normalized(const ModelBundle& model) {
  if (!model.extractor.normalize_output || !model.classifier.normalize_rows) {
    throw UnsupportedError(
        "certificates assume unit-norm features and unit-norm classifier rows; enable model.normalize_output and "
        "model.normalize_rows");
  }
}

std::vector<double> row_norms(const Tensor& h) {
  std::vector<double> out(h.rows());
  for (std::size_t i = 0; i < h.rows(); ++i) {
    double acc = 0.0;
    for (double v : h.row(i)) acc += v * v;
    out[i] = std::sqrt(acc);
  }
  return out;
}

}  // namespace

std::size_t CertResult::certified() const { return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), true)); }

std::string CertResult::csv(std::span<const std::size_t> ids, std::span<const int> labels) const {
  std::vector<std::string> header{"id", "class", "margin", "feature_norm", "local_lipschitz", "radius", "valid"};
  const bool proxy = !proxy_radius.empty();
  if (proxy) header.push_back("proxy_radius");
  CsvTable t(header);
  for (std::size_t i = 0; i < margin.size(); ++i) {
    std::vector<std::string> row{std::to_string(ids[i]), std::to_string(labels[i]), format_double(margin[i]),
                                 format_double(feature_norm[i]), format_double(local_lipschitz[i]),
                                 format_double(radius[i]), valid[i] ? "1" : "0"};
    if (proxy) row.push_back(format_double(proxy_radius[i]));
    t.add_row(row);
  }
  return t.str();
}

void attach_proxy_radius(CertResult& res, double empirical_lipschitz) {
  res.proxy_radius.assign(res.margin.size(), 0.0);
  if (!(empirical_lipschitz > 0.0)) return;
  for (std::size_t i = 0; i < res.margin.size(); ++i) {
    const double g = res.margin[i];
    if (g > 0.0) res.proxy_radius[i] = g * res.feature_norm[i] / (empirical_lipschitz * (2.0 + g));
  }
}

CertResult certify(const ModelBundle& model, const Tensor& x, std::span<const int> y, double lipschitz) {
  require_normalized(model);
  if (!(lipschitz > 0.0) || !std::isfinite(lipschitz)) throw ContractError("Lipschitz bound must be positive");
  CertResult res;
  res.lipschitz = lipschitz;
  res.margin = logit_margins(model, x, y);
  res.feature_norm = row_norms(pre_features(model.extractor, x));
  const std::size_t n = res.margin.size();
  res.radius.assign(n, 0.0);
  res.local_lipschitz.assign(n, 0.0);
  res.valid.assign(n, false);
  double rho_min = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i) {
    const double g = res.margin[i], rho = res.feature_norm[i];
    rho_min = std::min(rho_min, rho);
    if (g > 0.0 && rho > 0.0) {
      res.local_lipschitz[i] = lipschitz * (2.0 + g) / (2.0 * rho);
      res.radius[i] = g / (2.0 * res.local_lipschitz[i]);
      res.valid[i] = true;
    }
  }
  res.theta_min_deg = theta_min(model.classifier.effective_weight());
  const double s = std::sin(res.theta_min_deg * std::numbers::pi / 360.0);
  if (n > 0 && rho_min > 0.0) res.theorem1_threshold = s * rho_min / (lipschitz * (1.0 + s));
  return res;
}

Falsification falsify_certificates(const ModelBundle& model, const Tensor& x, std::span<const int> y,
                                   std::span<const std::size_t> ids, const CertResult& cert, std::size_t steps,
                                   double fraction, std::uint64_t seed) {
  Falsification out;
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < cert.valid.size(); ++i) {
    if (cert.valid[i]) rows.push_back(i);
  }
  out.attacked = rows.size();
  if (rows.empty()) return out;
  Tensor xc = x.gather_rows(rows);
  std::vector<int> yc(rows.size());
  std::vector<std::size_t> idc(rows.size());
  std::vector<double> radii(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    yc[i] = y[rows[i]];
    idc[i] = ids[rows[i]];
    radii[i] = fraction * cert.radius[rows[i]];
  }
  AttackConfig multi;
  multi.epsilon = 1.0;
  multi.eta = 2.5 / static_cast<double>(std::max<std::size_t>(steps, 1));
  multi.steps = steps;
  multi.seed = seed;
  AttackConfig single;
  single.epsilon = 1.0;
  single.eta = 1.0;
  single.steps = 1;
  single.rand_init = false;
  auto a = pgd_within(model, {xc, yc, idc}, multi, radii);
  auto b = pgd_within(model, {xc, yc, idc}, single, radii);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (a.success[i] || b.success[i]) {
      ++out.flipped;
      out.flipped_ids.push_back(idc[i]);
    }
  }
  return out;
}

Theorem1Check theorem1_check(const ModelBundle& model, const Tensor& x, std::span<const int> y,
                             std::span<const std::size_t> ids, double lipschitz, std::span<const double> fractions,
                             std::size_t steps, std::uint64_t seed) {
  require_normalized(model);
  Theorem1Check out;
  out.lipschitz = lipschitz;
  out.theta_min_deg = theta_min(model.classifier.effective_weight());
  auto norms = row_norms(pre_features(model.extractor, x));
  out.rho_min = norms.empty() ? 0.0 : *std::min_element(norms.begin(), norms.end());
  const double s = std::sin(out.theta_min_deg * std::numbers::pi / 360.0);
  if (!(out.rho_min > 0.0)) throw DegenerateGeometryError("a feature vector has zero norm before normalisation");
  out.lipschitz_phi = lipschitz * (1.0 + s) / out.rho_min;
  out.epsilon_max = s / out.lipschitz_phi;

  auto pred = predict(model, x);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == y[i]) keep.push_back(i);
  }
  Tensor xc = x.gather_rows(keep);
  std::vector<int> yc(keep.size());
  std::vector<std::size_t> idc(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    yc[i] = y[keep[i]];
    idc[i] = ids[keep[i]];
  }
  for (double f : fractions) {
    if (!(f > 0.0 && f < 1.0)) throw ContractError("theorem-1 fractions must lie in (0, 1)");
    Theorem1Check::Point p;
    p.epsilon = f * out.epsilon_max;
    p.evaluated = keep.size();
    if (!keep.empty()) {
      AttackConfig cfg;
      cfg.epsilon = p.epsilon;
      cfg.eta = 2.5 * p.epsilon / static_cast<double>(std::max<std::size_t>(steps, 1));
      cfg.steps = steps;
      cfg.seed = seed;
      auto adv = pgd(model, {xc, yc, idc}, cfg);
      for (std::size_t i = 0; i < keep.size(); ++i) {
        if (adv.success[i]) {
          out.counterexamples.push_back(idc[i]);
        } else {
          ++p.robust;
        }
      }
    }
    out.points.push_back(p);
  }
  out.holds = out.counterexamples.empty();
  return out;
}

}  // namespace mcat
