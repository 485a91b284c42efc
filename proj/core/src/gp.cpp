#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include <Eigen/Cholesky>

#include "numprobe/error.hpp"
#include "numprobe/eval.hpp"

namespace numprobe::eval {
namespace {

struct Solve {
  bool ok = false;
  double lml = 0.0;
  double prediction = 0.0;  // standardised units
};

Solve solve(const Eigen::VectorXd& y, double lengthscale, double noise, int retries) {
  const Eigen::Index n = y.size();
  Eigen::MatrixXd k(n, n);
  Eigen::VectorXd k_star(n);
  const double inv = 1.0 / (2.0 * lengthscale * lengthscale);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = static_cast<double>(i - j);
      k(i, j) = std::exp(-d * d * inv);
    }
    const double d = static_cast<double>(n - i);
    k_star(i) = std::exp(-d * d * inv);
  }
  double jitter = 0.0;
  for (int attempt = 0; attempt <= retries; ++attempt) {
    Eigen::MatrixXd a = k;
    a.diagonal().array() += noise + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    jitter = jitter == 0.0 ? 1e-10 : jitter * 100.0;
    if (llt.info() != Eigen::Success) continue;
    const Eigen::VectorXd alpha = llt.solve(y);
    const auto l = llt.matrixL();
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(l(i, i));
    Solve s;
    s.lml = -0.5 * y.dot(alpha) - log_det -
            0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    s.prediction = k_star.dot(alpha);
    s.ok = std::isfinite(s.lml) && std::isfinite(s.prediction);
    if (s.ok) return s;
  }
  return {};
}

}  // namespace

void GpConfig::validate() const {
  if (lengthscales.empty() || noise_variances.empty())
    throw ConfigError("GP grid must not be empty");
  for (double l : lengthscales)
    if (!(l > 0.0)) throw ConfigError("GP lengthscales must be positive");
  for (double v : noise_variances)
    if (!(v >= 0.0)) throw ConfigError("GP noise variances must be non-negative");
  if (jitter_retries < 0) throw ConfigError("GP jitter retries must be non-negative");
}

GpFit gp_fit(std::span<const double> series, const GpConfig& config) {
  config.validate();
  if (series.size() < 2) throw InputError("GP baseline needs at least two points");
  const auto n = static_cast<Eigen::Index>(series.size());
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    y(i) = series[static_cast<std::size_t>(i)];
    if (!std::isfinite(y(i))) throw InputError("GP baseline on non-finite values");
  }
  const double mean = y.mean();
  const double sd = std::sqrt((y.array() - mean).square().mean());
  GpFit best;
  best.lengthscale = config.lengthscales.front();
  best.noise_variance = config.noise_variances.front();
  if (sd == 0.0) {
    best.prediction = mean;
    return best;
  }
  y = (y.array() - mean) / sd;
  bool found = false;
  for (double l : config.lengthscales) {
    for (double v : config.noise_variances) {
      const Solve s = solve(y, l, v, config.jitter_retries);
      if (!s.ok) continue;
      if (!found || s.lml > best.log_marginal_likelihood) {
        found = true;
        best.lengthscale = l;
        best.noise_variance = v;
        best.log_marginal_likelihood = s.lml;
        best.prediction = mean + sd * s.prediction;
      }
    }
  }
  if (!found) throw NumericError("GP kernel matrix singular for every grid point");
  return best;
}

double gp_baseline(std::span<const double> series, const GpConfig& config) {
  return gp_fit(series, config).prediction;
}

}  // namespace numprobe::eval
