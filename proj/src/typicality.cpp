#include "typtest/typicality.hpp"

#include <algorithm>
#include <stdexcept>

namespace typtest {

double epsilon_hat(std::span<const double> batch_logliks, const EntropyEstimate& entropy) {
  if (batch_logliks.empty()) throw std::invalid_argument("epsilon_hat: empty batch");
  double sum = 0.0;
  for (double v : batch_logliks) {
    if (!std::isfinite(v)) throw std::invalid_argument("epsilon_hat: non-finite loglik");
    sum += v;
  }
  const double mean_nll = -sum / static_cast<double>(batch_logliks.size());
  return std::abs(mean_nll - entropy.value);
}

double quantile_threshold(std::span<const double> stats, double alpha) {
  if (stats.empty()) throw std::invalid_argument("quantile_threshold: empty stats");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("quantile_threshold: alpha must be in (0,1)");
  }
  const auto k = static_cast<double>(stats.size());
  const double q = alpha * k;
  // Guard against alpha*K landing epsilon above an integer (e.g. 0.8*5).
  std::size_t idx = (q - std::floor(q) < 1e-9) ? static_cast<std::size_t>(std::llround(q))
                                               : static_cast<std::size_t>(std::ceil(q));
  idx = std::clamp<std::size_t>(idx, 1, stats.size());
  std::vector<double> sorted(stats.begin(), stats.end());
  std::sort(sorted.begin(), sorted.end());
  return sorted[idx - 1];
}

Calibration generic_bootstrap_threshold(
    const std::function<double(std::span<const std::size_t>)>& statistic_fn,
    std::size_t pool_size, int M, int K, double alpha, std::uint64_t seed) {
  if (pool_size < 1) throw std::invalid_argument("bootstrap: empty pool");
  if (M < 1) throw std::invalid_argument("bootstrap: M must be >= 1");
  if (K < 1) throw std::invalid_argument("bootstrap: K must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) {
    throw std::invalid_argument("bootstrap: alpha must be in (0,1)");
  }
  Calibration cal;
  cal.batch_size = M;
  cal.alpha = alpha;
  cal.bootstrap_count = K;
  cal.seed = seed;
  cal.bootstrap_stats.resize(static_cast<std::size_t>(K));
  std::vector<std::size_t> idx(static_cast<std::size_t>(M));
  for (int k = 0; k < K; ++k) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(k)));
    for (auto& i : idx) i = rng.index(pool_size);
    const double s = statistic_fn(idx);
    if (!std::isfinite(s) || s < 0.0) {
      throw std::invalid_argument("bootstrap: statistic must be finite and nonnegative");
    }
    cal.bootstrap_stats[static_cast<std::size_t>(k)] = s;
  }
  cal.threshold = quantile_threshold(cal.bootstrap_stats, alpha);
  return cal;
}

Calibration bootstrap_threshold(std::span<const double> validation_logliks,
                                const EntropyEstimate& entropy, int M, int K, double alpha,
                                std::uint64_t seed) {
  if (static_cast<int>(validation_logliks.size()) < 1) {
    throw std::invalid_argument("bootstrap_threshold: empty validation set");
  }
  std::vector<double> batch(static_cast<std::size_t>(M));
  auto stat = [&](std::span<const std::size_t> idx) {
    for (std::size_t i = 0; i < idx.size(); ++i) batch[i] = validation_logliks[idx[i]];
    return epsilon_hat(batch, entropy);
  };
  Calibration cal = generic_bootstrap_threshold(stat, validation_logliks.size(), M, K, alpha, seed);
  cal.entropy = entropy;
  cal.statistic = "typicality";
  return cal;
}

TestVerdict decide(std::span<const double> batch_logliks, const Calibration& calibration,
                   BatchSizePolicy policy) {
  if (batch_logliks.empty()) throw std::invalid_argument("decide: empty batch");
  if (policy == BatchSizePolicy::strict &&
      static_cast<int>(batch_logliks.size()) != calibration.batch_size) {
    throw std::invalid_argument("decide: batch size " + std::to_string(batch_logliks.size()) +
                                " does not match calibration M=" +
                                std::to_string(calibration.batch_size));
  }
  TestVerdict v;
  v.statistic = epsilon_hat(batch_logliks, calibration.entropy);
  v.threshold = calibration.threshold;
  v.is_ood = v.statistic > calibration.threshold;  // ties accepted
  v.test_name = calibration.statistic;
  v.batch_size = static_cast<int>(batch_logliks.size());
  return v;
}

const Calibration& nearest_calibration(int batch_size, std::span<const Calibration> calibrations) {
  if (calibrations.empty()) throw std::invalid_argument("nearest_calibration: no calibrations");
  const Calibration* best = &calibrations[0];
  for (const auto& c : calibrations) {
    if (std::abs(c.batch_size - batch_size) < std::abs(best->batch_size - batch_size)) {
      best = &c;
    }
  }
  return *best;
}

}  // namespace typtest
