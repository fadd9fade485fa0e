#ifndef TYPTEST_ENTROPY_HPP
#define TYPTEST_ENTROPY_HPP

#include <cstdint>
#include <span>
#include <string>

#include "typtest/models.hpp"

namespace typtest {

enum class EntropyMethod { closed_form, resubstitution, monte_carlo };

std::string to_string(EntropyMethod m);
EntropyMethod entropy_method_from_string(const std::string& s);

struct EntropyEstimate {
  double value = 0.0;  // nats
  EntropyMethod method = EntropyMethod::closed_form;
  std::int64_t n_used = 0;
};

// H ~= -(1/N) sum log p(x_n) over the given (training-set) log-likelihoods.
EntropyEstimate resubstitution_entropy(std::span<const double> logliks);

// H ~= -(1/S) sum log p(x_s) with x_s drawn from the model itself.
EntropyEstimate monte_carlo_entropy(const Model& model, int S, std::uint64_t seed);

EntropyEstimate closed_form_entropy_estimate(const Model& model);

}  // namespace typtest

#endif  // TYPTEST_ENTROPY_HPP
