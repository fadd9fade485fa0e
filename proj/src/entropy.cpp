#include "typtest/entropy.hpp"

#include <cmath>
#include <stdexcept>

namespace typtest {

std::string to_string(EntropyMethod m) {
  switch (m) {
    case EntropyMethod::closed_form: return "closed_form";
    case EntropyMethod::resubstitution: return "resubstitution";
    case EntropyMethod::monte_carlo: return "monte_carlo";
  }
  throw std::logic_error("bad EntropyMethod");
}

EntropyMethod entropy_method_from_string(const std::string& s) {
  if (s == "closed_form") return EntropyMethod::closed_form;
  if (s == "resubstitution") return EntropyMethod::resubstitution;
  if (s == "monte_carlo") return EntropyMethod::monte_carlo;
  throw std::invalid_argument("unknown entropy method '" + s + "'");
}

EntropyEstimate resubstitution_entropy(std::span<const double> logliks) {
  if (logliks.empty()) throw std::invalid_argument("resubstitution_entropy: empty input");
  double sum = 0.0;
  for (double v : logliks) {
    if (!std::isfinite(v)) throw std::invalid_argument("resubstitution_entropy: non-finite loglik");
    sum += v;
  }
  return {-sum / static_cast<double>(logliks.size()), EntropyMethod::resubstitution,
          static_cast<std::int64_t>(logliks.size())};
}

EntropyEstimate monte_carlo_entropy(const Model& model, int S, std::uint64_t seed) {
  if (S < 1) throw std::invalid_argument("monte_carlo_entropy: S must be >= 1");
  if (!can_sample(model)) {
    throw UnsupportedCapability("monte_carlo_entropy: model does not support sampling");
  }
  const Eigen::MatrixXd draws = sample(model, S, seed);
  double sum = 0.0;
  for (int i = 0; i < S; ++i) sum += log_prob(model, draws.row(i).transpose());
  return {-sum / static_cast<double>(S), EntropyMethod::monte_carlo, S};
}

EntropyEstimate closed_form_entropy_estimate(const Model& model) {
  return {closed_form_entropy(model), EntropyMethod::closed_form, 0};
}

}  // namespace typtest
