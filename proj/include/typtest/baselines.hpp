#ifndef TYPTEST_BASELINES_HPP
#define TYPTEST_BASELINES_HPP

#include <Eigen/Dense>
#include <span>
#include <string>

#include "typtest/models.hpp"
#include "typtest/typicality.hpp"

namespace typtest {

struct TwoSampleResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double critical_value = 0.0;
  bool reject = false;
  std::string test_name;
};

// One score vector per row.
struct ScoreSet {
  Eigen::MatrixXd scores;

  int size() const { return static_cast<int>(scores.rows()); }
  int dim() const { return static_cast<int>(scores.cols()); }
};

// Welch two-sample t-test on log-likelihoods; two-sided at level 1-alpha.
TwoSampleResult t_test(std::span<const double> reference_logliks,
                       std::span<const double> batch_logliks, double alpha);

// Two-sample KS test on the likelihood EDFs; asymptotic critical value
// c(a)*sqrt((n+m)/(nm)) with c(a) = sqrt(-ln(a/2)/2), a = 1-alpha.
TwoSampleResult ks_test(std::span<const double> reference_logliks,
                        std::span<const double> batch_logliks, double alpha);

// Biased (V-statistic) squared MMD under the score dot-product kernel,
// clamped at 0 against negative rounding.
double mmd_statistic(const ScoreSet& x, const ScoreSet& y);

// Stein kernel u_p(x,x') under the score dot-product kernel.
double stein_kernel(const Model& model, const Eigen::VectorXd& x, const Eigen::VectorXd& y);

// V-statistic mean of the Stein kernel over all ordered pairs (rows of X).
double ksd_statistic(const Model& model, const Eigen::MatrixXd& X);

// (1/M) sum | sqrt(sqnorm) - sqrt(d) |
double annulus_statistic(std::span<const double> latent_sqnorms, int d);

Calibration bootstrap_annulus_threshold(std::span<const double> validation_sqnorms, int d, int M,
                                        int K, double alpha, std::uint64_t seed);

// Bootstrap batches of validation scores, each scored against a fixed
// reference score set (a subset of the training scores).
Calibration bootstrap_mmd_threshold(const ScoreSet& validation, const ScoreSet& reference, int M,
                                    int K, double alpha, std::uint64_t seed);

Calibration bootstrap_ksd_threshold(const Model& model, const Eigen::MatrixXd& validation_points,
                                    int M, int K, double alpha, std::uint64_t seed);

}  // namespace typtest

#endif  // TYPTEST_BASELINES_HPP
