#ifndef TYPTEST_TYPICALITY_HPP
#define TYPTEST_TYPICALITY_HPP

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "typtest/entropy.hpp"
#include "typtest/rng.hpp"

namespace typtest {

// Frozen test configuration produced by bootstrap calibration.
struct Calibration {
  EntropyEstimate entropy;          // anchors the typicality statistic
  int batch_size = 0;               // M
  double alpha = 0.0;
  int bootstrap_count = 0;          // K
  double threshold = 0.0;           // rejection threshold at confidence alpha
  std::uint64_t seed = 0;
  std::string quantile_rule = "ceil-order-statistic";
  std::vector<double> bootstrap_stats;
  std::string statistic = "typicality";  // test identity
};

struct TestVerdict {
  double statistic = 0.0;
  double threshold = 0.0;
  bool is_ood = false;
  std::string test_name;
  int batch_size = 0;
};

// | mean(-loglik) - H |
double epsilon_hat(std::span<const double> batch_logliks, const EntropyEstimate& entropy);

// ceil(alpha*K)-th smallest of the K bootstrap statistics. No interpolation.
double quantile_threshold(std::span<const double> stats, double alpha);

// Bootstrap K size-M datasets with replacement from a pool of pool_size items
// and apply statistic_fn to the resampled index sets. Replicate k uses the
// substream derive_seed(seed, k), so results are independent of evaluation order.
Calibration generic_bootstrap_threshold(
    const std::function<double(std::span<const std::size_t>)>& statistic_fn,
    std::size_t pool_size, int M, int K, double alpha, std::uint64_t seed);

Calibration bootstrap_threshold(std::span<const double> validation_logliks,
                                const EntropyEstimate& entropy, int M, int K, double alpha,
                                std::uint64_t seed);

enum class BatchSizePolicy {
  strict,    // batch length must equal calibration.batch_size
  allow_mismatch,
};

TestVerdict decide(std::span<const double> batch_logliks, const Calibration& calibration,
                   BatchSizePolicy policy = BatchSizePolicy::strict);

// Among calibrations for different M, pick the one whose M is nearest the batch size.
const Calibration& nearest_calibration(int batch_size, std::span<const Calibration> calibrations);

}  // namespace typtest

#endif  // TYPTEST_TYPICALITY_HPP
