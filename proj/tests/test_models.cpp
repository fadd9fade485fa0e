#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "typtest/models.hpp"
#include "typtest/rng.hpp"

using namespace typtest;

namespace {
const double kLog2Pi = std::log(2.0 * M_PI);

Model iso(int d, double sigma, double mean = 0.0) {
  return IsotropicGaussian(Eigen::VectorXd::Constant(d, mean), sigma);
}

Model mixture_1d() {
  Eigen::VectorXd w(2);
  w << 0.3, 0.7;
  std::vector<DiagonalGaussian> comps;
  comps.emplace_back(Eigen::VectorXd::Constant(1, -1.0), Eigen::VectorXd::Constant(1, 0.5));
  comps.emplace_back(Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd::Constant(1, 1.5));
  return GaussianMixture(w, std::move(comps));
}
}  // namespace

TEST_CASE("construction invariants") {
  CHECK_THROWS_AS(IsotropicGaussian(Eigen::VectorXd::Zero(2), 0.0), std::invalid_argument);
  CHECK_THROWS_AS(IsotropicGaussian(Eigen::VectorXd::Zero(2), -1.0), std::invalid_argument);
  CHECK_THROWS_AS(DiagonalGaussian(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(3)),
                  std::invalid_argument);
  Eigen::VectorXd bad_w(2);
  bad_w << 0.5, 0.6;
  std::vector<DiagonalGaussian> comps(
      2, DiagonalGaussian(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)));
  CHECK_THROWS_AS(GaussianMixture(bad_w, comps), std::invalid_argument);
}

TEST_CASE("log_prob closed forms") {
  const Model m = iso(2, 1.0);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  CHECK(log_prob(m, x) == doctest::Approx(-kLog2Pi).epsilon(1e-12));
  x << 2.0, 0.0;
  CHECK(log_prob(m, x) == doctest::Approx(-kLog2Pi - 2.0).epsilon(1e-12));

  // degenerate single-component mixture equals its component
  Eigen::VectorXd w1 = Eigen::VectorXd::Ones(1);
  DiagonalGaussian comp(Eigen::VectorXd::Constant(2, 0.5), Eigen::VectorXd::Constant(2, 1.3));
  const Model mix = GaussianMixture(w1, {comp});
  const Model diag = comp;
  Eigen::VectorXd y(2);
  y << 0.7, -1.1;
  CHECK(log_prob(mix, y) == doctest::Approx(log_prob(diag, y)).epsilon(1e-12));
}

TEST_CASE("log_prob input validation") {
  const Model m = iso(2, 1.0);
  CHECK_THROWS_AS(log_prob(m, Eigen::VectorXd::Zero(3)), std::invalid_argument);
  Eigen::VectorXd bad(2);
  bad << 1.0, NAN;
  CHECK_THROWS_AS(log_prob(m, bad), std::invalid_argument);
}

TEST_CASE("sampling concentrates on the sqrt(d) annulus") {
  const int d = 1000;
  const Model m = iso(d, 1.0);
  const Eigen::MatrixXd draws = sample(m, 10000, 42);
  double mean_norm = 0.0;
  for (int i = 0; i < draws.rows(); ++i) mean_norm += draws.row(i).norm();
  mean_norm /= draws.rows();
  CHECK(std::abs(mean_norm - std::sqrt(1000.0)) / std::sqrt(1000.0) < 0.01);
}

TEST_CASE("sampling contracts") {
  const Model m = iso(3, 2.0);
  CHECK_THROWS_AS(sample(m, 0, 1), std::invalid_argument);
  const Eigen::MatrixXd a = sample(m, 50, 7);
  const Eigen::MatrixXd b = sample(m, 50, 7);
  CHECK(a == b);
  ExternalModel ext({{"a", -1.0, {}, {}}});
  CHECK_THROWS_AS(sample(Model(ext), 1, 1), UnsupportedCapability);
}

TEST_CASE("closed-form entropy") {
  CHECK(closed_form_entropy(iso(2, 1.0)) == doctest::Approx(1.0 + kLog2Pi).epsilon(1e-12));
  CHECK(closed_form_entropy(iso(1, 2.0)) ==
        doctest::Approx(std::log(2.0) + 0.5 * (1.0 + kLog2Pi)).epsilon(1e-12));
  const Model diag = DiagonalGaussian(Eigen::VectorXd::Zero(2), Eigen::VectorXd::Ones(2));
  CHECK(closed_form_entropy(diag) == doctest::Approx(closed_form_entropy(iso(2, 1.0))).epsilon(1e-14));
  CHECK_THROWS_AS(closed_form_entropy(mixture_1d()), UnsupportedCapability);
  CHECK_THROWS_AS(closed_form_entropy(Model(ExternalModel({{"a", -1.0, {}, {}}}))),
                  UnsupportedCapability);
}

TEST_CASE("score closed forms") {
  const Model m = iso(2, 1.0);
  CHECK(score(m, Eigen::VectorXd::Zero(2)).norm() == 0.0);
  Eigen::VectorXd x(2);
  x << 2.0, 0.0;
  Eigen::VectorXd expected(2);
  expected << -2.0, 0.0;
  CHECK((score(m, x) - expected).norm() == 0.0);
}

TEST_CASE("score matches finite differences at random points") {
  const double h = 1e-5;
  std::vector<Model> models;
  models.push_back(iso(3, 1.3, 0.4));
  models.push_back(DiagonalGaussian(Eigen::VectorXd::Constant(2, -0.5),
                                    (Eigen::VectorXd(2) << 0.7, 2.1).finished()));
  models.push_back(mixture_1d());
  Rng rng(123);
  for (const auto& m : models) {
    const int d = dimension(m);
    for (int trial = 0; trial < 100; ++trial) {
      Eigen::VectorXd x(d);
      for (int j = 0; j < d; ++j) x[j] = 3.0 * rng.gaussian();
      const Eigen::VectorXd s = score(m, x);
      for (int j = 0; j < d; ++j) {
        Eigen::VectorXd xp = x, xm = x;
        xp[j] += h;
        xm[j] -= h;
        const double fd = (log_prob(m, xp) - log_prob(m, xm)) / (2.0 * h);
        CHECK(std::abs(s[j] - fd) < 1e-6);
      }
    }
  }
}

TEST_CASE("hessian_apply closed forms and finite differences") {
  Eigen::VectorXd v(2);
  v << 4.0, 0.0;
  CHECK((hessian_apply(iso(2, 1.0), Eigen::VectorXd::Zero(2), v) + v).norm() == 0.0);
  Eigen::VectorXd expected(2);
  expected << -1.0, 0.0;
  CHECK((hessian_apply(iso(2, 2.0), Eigen::VectorXd::Zero(2), v) - expected).norm() == 0.0);

  // H v against finite differences of the score
  const double h = 1e-5;
  const Model mix = mixture_1d();
  Rng rng(99);
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd x(1), dir(1);
    x[0] = 2.0 * rng.gaussian();
    dir[0] = 1.0;
    const Eigen::VectorXd hv = hessian_apply(mix, x, dir);
    Eigen::VectorXd xp = x, xm = x;
    xp[0] += h;
    xm[0] -= h;
    const double fd = (score(mix, xp)[0] - score(mix, xm)[0]) / (2.0 * h);
    CHECK(std::abs(hv[0] - fd) < 1e-6);
  }
}

TEST_CASE("densities integrate to one on small grids") {
  // d = 1
  {
    const Model m = mixture_1d();
    const double step = 0.005;
    double acc = 0.0;
    double prev = std::exp(log_prob(m, Eigen::VectorXd::Constant(1, -12.0)));
    for (double x = -12.0 + step; x <= 14.0; x += step) {
      const double cur = std::exp(log_prob(m, Eigen::VectorXd::Constant(1, x)));
      acc += 0.5 * (prev + cur) * step;
      prev = cur;
    }
    CHECK(std::abs(acc - 1.0) < 1e-3);
  }
  // d = 2
  {
    const Model m = iso(2, 1.0);
    const double step = 0.05;
    double acc = 0.0;
    for (double x = -6.0; x <= 6.0; x += step) {
      for (double y = -6.0; y <= 6.0; y += step) {
        const double wx = (x == -6.0 || x + step > 6.0) ? 0.5 : 1.0;
        const double wy = (y == -6.0 || y + step > 6.0) ? 0.5 : 1.0;
        acc += wx * wy * std::exp(log_prob(m, (Eigen::VectorXd(2) << x, y).finished())) * step * step;
      }
    }
    CHECK(std::abs(acc - 1.0) < 1e-3);
  }
}

TEST_CASE("AEP sanity: mean log_prob converges to -entropy") {
  const Model m = iso(8, 1.0);
  const int S = 100000;
  const Eigen::MatrixXd draws = sample(m, S, 2024);
  std::vector<double> ll(S);
  double mean = 0.0;
  for (int i = 0; i < S; ++i) {
    ll[i] = log_prob(m, draws.row(i).transpose());
    mean += ll[i];
  }
  mean /= S;
  double var = 0.0;
  for (double v : ll) var += (v - mean) * (v - mean);
  var /= (S - 1);
  const double se = std::sqrt(var / S);
  CHECK(std::abs(mean + closed_form_entropy(m)) < 3.0 * se);
}

TEST_CASE("external model invariants") {
  CHECK_THROWS_AS(ExternalModel({{"a", -1.0, {}, {}}, {"a", -2.0, {}, {}}}),
                  std::invalid_argument);
  CHECK_THROWS_AS(ExternalModel({{"a", INFINITY, {}, {}}}), std::invalid_argument);
  CHECK_THROWS_AS(ExternalModel({{"a", -1.0, -0.5, {}}}), std::invalid_argument);
  std::vector<LikelihoodRecord> recs;
  recs.push_back({"a", -1.0, 2.0, Eigen::VectorXd::Zero(3)});
  recs.push_back({"b", -2.0, 1.0, Eigen::VectorXd::Ones(3)});
  const ExternalModel ext(recs);
  CHECK(ext.dimension == 3);
  CHECK(ext.logliks() == std::vector<double>{-1.0, -2.0});
  CHECK(ext.latent_sqnorms() == std::vector<double>{2.0, 1.0});
  CHECK(ext.score_matrix().rows() == 2);
  CHECK_THROWS_AS(score(Model(ext), Eigen::VectorXd::Zero(3)), UnsupportedCapability);
}
