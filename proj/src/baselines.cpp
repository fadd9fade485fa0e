#include "typtest/baselines.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace typtest {

namespace {

std::pair<double, double> mean_and_variance(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double v : xs) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : xs) ss += (v - mean) * (v - mean);
  return {mean, ss / (n - 1.0)};
}

// Full Hessian of log p at x, built column-wise from hessian_apply.
Eigen::MatrixXd materialize_hessian(const Model& model, const Eigen::VectorXd& x) {
  const int d = static_cast<int>(x.size());
  Eigen::MatrixXd h(d, d);
  Eigen::VectorXd e = Eigen::VectorXd::Zero(d);
  for (int j = 0; j < d; ++j) {
    e[j] = 1.0;
    h.col(j) = hessian_apply(model, x, e);
    e[j] = 0.0;
  }
  return h;
}

double stein_kernel_cached(const Eigen::VectorXd& sx, const Eigen::MatrixXd& hx,
                           const Eigen::VectorXd& sy, const Eigen::MatrixXd& hy) {
  const double k = sx.dot(sy);
  return k * k + sx.dot(hy * sx) + sy.dot(hx * sy) + hx.cwiseProduct(hy.transpose()).sum();
}

}  // namespace

TwoSampleResult t_test(std::span<const double> reference_logliks,
                       std::span<const double> batch_logliks, double alpha) {
  if (reference_logliks.size() < 2 || batch_logliks.size() < 2) {
    throw std::invalid_argument("t_test: both samples need at least 2 elements");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("t_test: alpha must be in (0,1)");
  const auto [m1, v1] = mean_and_variance(reference_logliks);
  const auto [m2, v2] = mean_and_variance(batch_logliks);
  const double n1 = static_cast<double>(reference_logliks.size());
  const double n2 = static_cast<double>(batch_logliks.size());
  const double se2 = v1 / n1 + v2 / n2;

  TwoSampleResult r;
  r.test_name = "ttest";
  const double level = 1.0 - alpha;
  if (se2 == 0.0) {
    if (m1 == m2) {
      r.statistic = 0.0;
      r.p_value = 1.0;
      r.reject = false;
      return r;
    }
    r.statistic = m2 > m1 ? INFINITY : -INFINITY;
    r.p_value = 0.0;
    r.reject = true;
    return r;
  }
  r.statistic = (m2 - m1) / std::sqrt(se2);
  // Welch-Satterthwaite degrees of freedom
  const double a = v1 / n1, b = v2 / n2;
  const double df = se2 * se2 / (a * a / (n1 - 1.0) + b * b / (n2 - 1.0));
  const boost::math::students_t_distribution<double> dist(df);
  r.critical_value = boost::math::quantile(dist, 1.0 - level / 2.0);
  r.p_value = 2.0 * boost::math::cdf(dist, -std::abs(r.statistic));
  r.reject = std::abs(r.statistic) > r.critical_value;
  return r;
}

TwoSampleResult ks_test(std::span<const double> reference_logliks,
                        std::span<const double> batch_logliks, double alpha) {
  if (reference_logliks.empty() || batch_logliks.empty()) {
    throw std::invalid_argument("ks_test: empty input");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("ks_test: alpha must be in (0,1)");
  std::vector<double> a(reference_logliks.begin(), reference_logliks.end());
  std::vector<double> b(batch_logliks.begin(), batch_logliks.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  double d_max = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d_max = std::max(d_max, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  TwoSampleResult r;
  r.test_name = "kstest";
  r.statistic = d_max;
  const double level = 1.0 - alpha;
  const double c = std::sqrt(-std::log(level / 2.0) / 2.0);
  r.critical_value = c * std::sqrt((n + m) / (n * m));
  const double lambda = d_max * std::sqrt(n * m / (n + m));
  r.p_value = std::clamp(2.0 * std::exp(-2.0 * lambda * lambda), 0.0, 1.0);
  r.reject = d_max > r.critical_value;
  return r;
}

double mmd_statistic(const ScoreSet& x, const ScoreSet& y) {
  if (x.size() < 1 || y.size() < 1) throw std::invalid_argument("mmd_statistic: empty score set");
  if (x.dim() != y.dim()) throw std::invalid_argument("mmd_statistic: dimension mismatch");
  if (!x.scores.allFinite() || !y.scores.allFinite()) {
    throw std::invalid_argument("mmd_statistic: non-finite scores");
  }
  const double kxx = (x.scores * x.scores.transpose()).mean();
  const double kyy = (y.scores * y.scores.transpose()).mean();
  const double kxy = (x.scores * y.scores.transpose()).mean();
  return std::max(0.0, kxx + kyy - 2.0 * kxy);
}

double stein_kernel(const Model& model, const Eigen::VectorXd& x, const Eigen::VectorXd& y) {
  return stein_kernel_cached(score(model, x), materialize_hessian(model, x), score(model, y),
                             materialize_hessian(model, y));
}

double ksd_statistic(const Model& model, const Eigen::MatrixXd& X) {
  const auto n = X.rows();
  if (n < 1) throw std::invalid_argument("ksd_statistic: empty sample");
  std::vector<Eigen::VectorXd> scores(static_cast<std::size_t>(n));
  std::vector<Eigen::MatrixXd> hessians(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = X.row(i).transpose();
    scores[static_cast<std::size_t>(i)] = score(model, xi);
    hessians[static_cast<std::size_t>(i)] = materialize_hessian(model, xi);
  }
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      sum += stein_kernel_cached(scores[static_cast<std::size_t>(i)],
                                 hessians[static_cast<std::size_t>(i)],
                                 scores[static_cast<std::size_t>(j)],
                                 hessians[static_cast<std::size_t>(j)]);
    }
  }
  return sum / static_cast<double>(n * n);
}

double annulus_statistic(std::span<const double> latent_sqnorms, int d) {
  if (latent_sqnorms.empty()) throw std::invalid_argument("annulus_statistic: empty input");
  if (d < 1) throw std::invalid_argument("annulus_statistic: d must be >= 1");
  const double root_d = std::sqrt(static_cast<double>(d));
  double sum = 0.0;
  for (double s : latent_sqnorms) {
    if (s < 0.0) throw std::invalid_argument("annulus_statistic: negative sqnorm");
    sum += std::abs(std::sqrt(s) - root_d);
  }
  return sum / static_cast<double>(latent_sqnorms.size());
}

Calibration bootstrap_annulus_threshold(std::span<const double> validation_sqnorms, int d, int M,
                                        int K, double alpha, std::uint64_t seed) {
  std::vector<double> batch(static_cast<std::size_t>(M));
  auto stat = [&](std::span<const std::size_t> idx) {
    for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = validation_sqnorms[idx[i]];
    return annulus_statistic(batch, d);
  };
  Calibration cal = generic_bootstrap_threshold(stat, validation_sqnorms.size(), M, K, alpha, seed);
  cal.statistic = "annulus";
  return cal;
}

Calibration bootstrap_mmd_threshold(const ScoreSet& validation, const ScoreSet& reference, int M,
                                    int K, double alpha, std::uint64_t seed) {
  if (validation.dim() != reference.dim()) {
    throw std::invalid_argument("bootstrap_mmd_threshold: dimension mismatch");
  }
  ScoreSet batch{Eigen::MatrixXd(M, validation.dim())};
  auto stat = [&](std::span<const std::size_t> idx) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      batch.scores.row(static_cast<Eigen::Index>(i)) =
          validation.scores.row(static_cast<Eigen::Index>(idx[i]));
    }
    return mmd_statistic(batch, reference);
  };
  Calibration cal =
      generic_bootstrap_threshold(stat, static_cast<std::size_t>(validation.size()), M, K, alpha, seed);
  cal.statistic = "mmd";
  return cal;
}

Calibration bootstrap_ksd_threshold(const Model& model, const Eigen::MatrixXd& validation_points,
                                    int M, int K, double alpha, std::uint64_t seed) {
  Eigen::MatrixXd batch(M, validation_points.cols());
  auto stat = [&](std::span<const std::size_t> idx) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      batch.row(static_cast<Eigen::Index>(i)) =
          validation_points.row(static_cast<Eigen::Index>(idx[i]));
    }
    // KSD can round below zero for tiny values; the bootstrap needs >= 0.
    return std::max(0.0, ksd_statistic(model, batch));
  };
  Calibration cal = generic_bootstrap_threshold(stat, static_cast<std::size_t>(validation_points.rows()),
                                                M, K, alpha, seed);
  cal.statistic = "ksd";
  return cal;
}

}  // namespace typtest
