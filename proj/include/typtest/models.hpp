#ifndef TYPTEST_MODELS_HPP
#define TYPTEST_MODELS_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace typtest {

// Thrown when an operation is not available on a given model
// (e.g. sampling from a file-backed model).
struct UnsupportedCapability : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// N(mean, sigma^2 I) in d dimensions.
struct IsotropicGaussian {
  Eigen::VectorXd mean;
  double sigma;

  IsotropicGaussian(Eigen::VectorXd mean_, double sigma_);
  static IsotropicGaussian standard(int d) {
    return IsotropicGaussian(Eigen::VectorXd::Zero(d), 1.0);
  }
  int dim() const { return static_cast<int>(mean.size()); }
};

// Independent per-dimension Gaussian with std-devs sigmas.
struct DiagonalGaussian {
  Eigen::VectorXd mean;
  Eigen::VectorXd sigmas;

  DiagonalGaussian(Eigen::VectorXd mean_, Eigen::VectorXd sigmas_);
  int dim() const { return static_cast<int>(mean.size()); }
};

struct GaussianMixture {
  Eigen::VectorXd weights;
  std::vector<DiagonalGaussian> components;

  GaussianMixture(Eigen::VectorXd weights_, std::vector<DiagonalGaussian> components_);
  int dim() const { return components.front().dim(); }
};

// One row of the likelihood CSV.
struct LikelihoodRecord {
  std::string id;
  double loglik = 0.0;  // nats
  std::optional<double> latent_sqnorm;
  std::optional<Eigen::VectorXd> score;
};

// Precomputed likelihood records standing in for a trained generative model.
struct ExternalModel {
  std::vector<LikelihoodRecord> records;
  std::optional<int> dimension;  // required when scores are present

  ExternalModel(std::vector<LikelihoodRecord> records_, std::optional<int> dimension_ = std::nullopt);

  std::vector<double> logliks() const;
  bool has_latent_sqnorms() const;
  bool has_scores() const;
  std::vector<double> latent_sqnorms() const;
  // Row i = score of record i. Throws if scores absent.
  Eigen::MatrixXd score_matrix() const;
};

using Model = std::variant<IsotropicGaussian, DiagonalGaussian, GaussianMixture, ExternalModel>;

int dimension(const Model& model);

// Exact log-density in nats. Mixtures use log-sum-exp over components.
double log_prob(const Model& model, const Eigen::VectorXd& x);

// n i.i.d. draws, one per row. Deterministic for a fixed seed.
Eigen::MatrixXd sample(const Model& model, int n, std::uint64_t seed);

// Exact differential entropy in nats; Gaussian family only.
double closed_form_entropy(const Model& model);

// Gradient of log_prob w.r.t. the input.
Eigen::VectorXd score(const Model& model, const Eigen::VectorXd& x);

// Hessian-vector product of log_prob at x.
Eigen::VectorXd hessian_apply(const Model& model, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& v);

bool can_sample(const Model& model);
bool has_closed_form_entropy(const Model& model);

}  // namespace typtest

#endif  // TYPTEST_MODELS_HPP
