#include "typtest/models.hpp"

#include <cmath>
#include <unordered_set>

#include "typtest/rng.hpp"

namespace typtest {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

void check_input(const Eigen::VectorXd& x, int d, const char* what) {
  if (x.size() != d) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch");
  }
  if (!x.allFinite()) {
    throw std::invalid_argument(std::string(what) + ": non-finite input");
  }
}

double diag_log_prob(const DiagonalGaussian& g, const Eigen::VectorXd& x) {
  const Eigen::ArrayXd z = (x - g.mean).array() / g.sigmas.array();
  return -0.5 * g.dim() * kLog2Pi - g.sigmas.array().log().sum() - 0.5 * z.square().sum();
}
}  // namespace

IsotropicGaussian::IsotropicGaussian(Eigen::VectorXd mean_, double sigma_)
    : mean(std::move(mean_)), sigma(sigma_) {
  if (mean.size() < 1) throw std::invalid_argument("IsotropicGaussian: empty mean");
  if (!mean.allFinite()) throw std::invalid_argument("IsotropicGaussian: non-finite mean");
  if (!(sigma > 0.0) || !std::isfinite(sigma)) {
    throw std::invalid_argument("IsotropicGaussian: sigma must be positive");
  }
}

DiagonalGaussian::DiagonalGaussian(Eigen::VectorXd mean_, Eigen::VectorXd sigmas_)
    : mean(std::move(mean_)), sigmas(std::move(sigmas_)) {
  if (mean.size() < 1) throw std::invalid_argument("DiagonalGaussian: empty mean");
  if (mean.size() != sigmas.size()) {
    throw std::invalid_argument("DiagonalGaussian: mean/sigmas length mismatch");
  }
  if (!mean.allFinite() || !sigmas.allFinite() || (sigmas.array() <= 0.0).any()) {
    throw std::invalid_argument("DiagonalGaussian: sigmas must be positive and finite");
  }
}

GaussianMixture::GaussianMixture(Eigen::VectorXd weights_, std::vector<DiagonalGaussian> components_)
    : weights(std::move(weights_)), components(std::move(components_)) {
  if (components.empty() || weights.size() != static_cast<Eigen::Index>(components.size())) {
    throw std::invalid_argument("GaussianMixture: weights/components length mismatch");
  }
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("GaussianMixture: negative weight");
  }
  if (std::abs(weights.sum() - 1.0) > 1e-12) {
    throw std::invalid_argument("GaussianMixture: weights must sum to 1");
  }
  const int d = components.front().dim();
  for (const auto& c : components) {
    if (c.dim() != d) throw std::invalid_argument("GaussianMixture: component dimension mismatch");
  }
}

ExternalModel::ExternalModel(std::vector<LikelihoodRecord> records_, std::optional<int> dimension_)
    : records(std::move(records_)), dimension(dimension_) {
  std::unordered_set<std::string> ids;
  std::optional<Eigen::Index> score_dim;
  for (const auto& r : records) {
    if (!ids.insert(r.id).second) {
      throw std::invalid_argument("ExternalModel: duplicate id '" + r.id + "'");
    }
    if (!std::isfinite(r.loglik)) {
      throw std::invalid_argument("ExternalModel: non-finite loglik for id '" + r.id + "'");
    }
    if (r.latent_sqnorm && *r.latent_sqnorm < 0.0) {
      throw std::invalid_argument("ExternalModel: negative latent_sqnorm for id '" + r.id + "'");
    }
    if (r.score) {
      if (!r.score->allFinite()) {
        throw std::invalid_argument("ExternalModel: non-finite score for id '" + r.id + "'");
      }
      if (score_dim && *score_dim != r.score->size()) {
        throw std::invalid_argument("ExternalModel: inconsistent score dimensions");
      }
      score_dim = r.score->size();
    }
  }
  if (score_dim) {
    if (!dimension) dimension = static_cast<int>(*score_dim);
    if (*dimension != static_cast<int>(*score_dim)) {
      throw std::invalid_argument("ExternalModel: dimension does not match score length");
    }
  }
}

std::vector<double> ExternalModel::logliks() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.loglik);
  return out;
}

bool ExternalModel::has_latent_sqnorms() const {
  return !records.empty() && records.front().latent_sqnorm.has_value();
}

bool ExternalModel::has_scores() const {
  return !records.empty() && records.front().score.has_value();
}

std::vector<double> ExternalModel::latent_sqnorms() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    if (!r.latent_sqnorm) throw UnsupportedCapability("ExternalModel: latent_sqnorm column absent");
    out.push_back(*r.latent_sqnorm);
  }
  return out;
}

Eigen::MatrixXd ExternalModel::score_matrix() const {
  if (!has_scores()) throw UnsupportedCapability("ExternalModel: score columns absent");
  Eigen::MatrixXd m(records.size(), *dimension);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    if (!records[i].score) throw UnsupportedCapability("ExternalModel: missing score row");
    m.row(i) = records[i].score->transpose();
  }
  return m;
}

int dimension(const Model& model) {
  return std::visit(
      [](const auto& m) -> int {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, ExternalModel>) {
          if (!m.dimension) throw UnsupportedCapability("ExternalModel: dimension unknown");
          return *m.dimension;
        } else {
          return m.dim();
        }
      },
      model);
}

double log_prob(const Model& model, const Eigen::VectorXd& x) {
  return std::visit(
      [&](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IsotropicGaussian>) {
          check_input(x, m.dim(), "log_prob");
          const double d = static_cast<double>(m.dim());
          return -0.5 * d * kLog2Pi - d * std::log(m.sigma) -
                 0.5 * (x - m.mean).squaredNorm() / (m.sigma * m.sigma);
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          check_input(x, m.dim(), "log_prob");
          return diag_log_prob(m, x);
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          check_input(x, m.dim(), "log_prob");
          // log-sum-exp over components
          const auto n = static_cast<Eigen::Index>(m.components.size());
          Eigen::VectorXd terms(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            terms[i] = (m.weights[i] > 0.0 ? std::log(m.weights[i]) : -INFINITY) +
                       diag_log_prob(m.components[i], x);
          }
          const double mx = terms.maxCoeff();
          return mx + std::log((terms.array() - mx).exp().sum());
        } else {
          throw UnsupportedCapability("log_prob: ExternalModel has no density function");
        }
      },
      model);
}

Eigen::MatrixXd sample(const Model& model, int n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample: n must be >= 1");
  return std::visit(
      [&](const auto& m) -> Eigen::MatrixXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IsotropicGaussian>) {
          Rng rng(seed);
          Eigen::MatrixXd out(n, m.dim());
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < m.dim(); ++j)
              out(i, j) = m.mean[j] + m.sigma * rng.gaussian();
          return out;
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          Rng rng(seed);
          Eigen::MatrixXd out(n, m.dim());
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < m.dim(); ++j)
              out(i, j) = m.mean[j] + m.sigmas[j] * rng.gaussian();
          return out;
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          Rng rng(seed);
          Eigen::MatrixXd out(n, m.dim());
          for (int i = 0; i < n; ++i) {
            const double u = rng.uniform01();
            double acc = 0.0;
            Eigen::Index k = m.weights.size() - 1;
            for (Eigen::Index c = 0; c < m.weights.size(); ++c) {
              acc += m.weights[c];
              if (u < acc) { k = c; break; }
            }
            const auto& comp = m.components[static_cast<std::size_t>(k)];
            for (int j = 0; j < m.dim(); ++j)
              out(i, j) = comp.mean[j] + comp.sigmas[j] * rng.gaussian();
          }
          return out;
        } else {
          throw UnsupportedCapability("sample: ExternalModel cannot sample");
        }
      },
      model);
}

double closed_form_entropy(const Model& model) {
  return std::visit(
      [](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IsotropicGaussian>) {
          const double d = static_cast<double>(m.dim());
          return d * std::log(m.sigma) + 0.5 * d * (1.0 + kLog2Pi);
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          const double d = static_cast<double>(m.dim());
          return m.sigmas.array().log().sum() + 0.5 * d * (1.0 + kLog2Pi);
        } else {
          throw UnsupportedCapability("closed_form_entropy: Gaussian family only");
        }
      },
      model);
}

Eigen::VectorXd score(const Model& model, const Eigen::VectorXd& x) {
  return std::visit(
      [&](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IsotropicGaussian>) {
          check_input(x, m.dim(), "score");
          return -(x - m.mean) / (m.sigma * m.sigma);
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          check_input(x, m.dim(), "score");
          return (-(x - m.mean).array() / m.sigmas.array().square()).matrix();
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          check_input(x, m.dim(), "score");
          // posterior-weighted component scores
          const auto n = static_cast<Eigen::Index>(m.components.size());
          Eigen::VectorXd lp(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            lp[i] = (m.weights[i] > 0.0 ? std::log(m.weights[i]) : -INFINITY) +
                    diag_log_prob(m.components[i], x);
          }
          const double mx = lp.maxCoeff();
          const Eigen::ArrayXd w = (lp.array() - mx).exp();
          const Eigen::ArrayXd post = w / w.sum();
          Eigen::VectorXd s = Eigen::VectorXd::Zero(m.dim());
          for (Eigen::Index i = 0; i < n; ++i) {
            const auto& c = m.components[static_cast<std::size_t>(i)];
            s += post[i] * (-(x - c.mean).array() / c.sigmas.array().square()).matrix();
          }
          return s;
        } else {
          throw UnsupportedCapability("score: not available for this model");
        }
      },
      model);
}

Eigen::VectorXd hessian_apply(const Model& model, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& v) {
  return std::visit(
      [&](const auto& m) -> Eigen::VectorXd {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, IsotropicGaussian>) {
          check_input(x, m.dim(), "hessian_apply");
          check_input(v, m.dim(), "hessian_apply");
          return -v / (m.sigma * m.sigma);
        } else if constexpr (std::is_same_v<T, DiagonalGaussian>) {
          check_input(x, m.dim(), "hessian_apply");
          check_input(v, m.dim(), "hessian_apply");
          return (-v.array() / m.sigmas.array().square()).matrix();
        } else if constexpr (std::is_same_v<T, GaussianMixture>) {
          check_input(x, m.dim(), "hessian_apply");
          check_input(v, m.dim(), "hessian_apply");
          // H = sum_i r_i (H_i + s_i s_i^T) - s s^T with posterior weights r_i
          const auto n = static_cast<Eigen::Index>(m.components.size());
          Eigen::VectorXd lp(n);
          for (Eigen::Index i = 0; i < n; ++i) {
            lp[i] = (m.weights[i] > 0.0 ? std::log(m.weights[i]) : -INFINITY) +
                    diag_log_prob(m.components[i], x);
          }
          const double mx = lp.maxCoeff();
          const Eigen::ArrayXd w = (lp.array() - mx).exp();
          const Eigen::ArrayXd post = w / w.sum();
          Eigen::VectorXd s = Eigen::VectorXd::Zero(m.dim());
          Eigen::VectorXd hv = Eigen::VectorXd::Zero(m.dim());
          std::vector<Eigen::VectorXd> comp_scores(static_cast<std::size_t>(n));
          for (Eigen::Index i = 0; i < n; ++i) {
            const auto& c = m.components[static_cast<std::size_t>(i)];
            comp_scores[static_cast<std::size_t>(i)] =
                (-(x - c.mean).array() / c.sigmas.array().square()).matrix();
            s += post[i] * comp_scores[static_cast<std::size_t>(i)];
          }
          for (Eigen::Index i = 0; i < n; ++i) {
            const auto& c = m.components[static_cast<std::size_t>(i)];
            const Eigen::VectorXd& si = comp_scores[static_cast<std::size_t>(i)];
            hv += post[i] * ((-v.array() / c.sigmas.array().square()).matrix() + si * si.dot(v));
          }
          hv -= s * s.dot(v);
          return hv;
        } else {
          throw UnsupportedCapability("hessian_apply: not available for this model");
        }
      },
      model);
}

bool can_sample(const Model& model) {
  return !std::holds_alternative<ExternalModel>(model);
}

bool has_closed_form_entropy(const Model& model) {
  return std::holds_alternative<IsotropicGaussian>(model) ||
         std::holds_alternative<DiagonalGaussian>(model);
}

}  // namespace typtest
