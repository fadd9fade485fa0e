#ifndef TYPTEST_CSV_HPP
#define TYPTEST_CSV_HPP

#include <iosfwd>
#include <stdexcept>
#include <string>

#include "typtest/models.hpp"

namespace typtest {

struct ParseError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Likelihood record CSV: header `id,loglik[,latent_sqnorm][,score_0,...,score_{d-1}]`,
// UTF-8, '.' decimal, scientific notation accepted. Unknown columns are an error.
// Optional bits_per_dim converts loglik values given in bits/dim to nats on ingestion.
ExternalModel parse_likelihood_csv(std::istream& in, int bits_per_dim = 0);
ExternalModel load_likelihood_csv(const std::string& path, int bits_per_dim = 0);

// Shortest round-trip decimal formatting; parse(serialize(m)) is the identity.
void write_likelihood_csv(std::ostream& out, const ExternalModel& model);
void save_likelihood_csv(const std::string& path, const ExternalModel& model);

std::string format_double(double v);

}  // namespace typtest

#endif  // TYPTEST_CSV_HPP
