#ifndef TYPTEST_CALIBRATION_IO_HPP
#define TYPTEST_CALIBRATION_IO_HPP

#include <string>

#include "typtest/typicality.hpp"

namespace typtest {

// JSON artifact: {entropy, entropy_method, entropy_n, M, alpha, K, threshold,
// seed, quantile_rule, bootstrap_stats, statistic}. Doubles round-trip at full
// binary precision (shortest round-trip decimals).
std::string calibration_to_json(const Calibration& cal);
Calibration calibration_from_json(const std::string& text);

void save_calibration(const std::string& path, const Calibration& cal);
Calibration load_calibration(const std::string& path);

}  // namespace typtest

#endif  // TYPTEST_CALIBRATION_IO_HPP
