#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "typtest/calibration_io.hpp"
#include "typtest/csv.hpp"
#include "typtest/rng.hpp"

using namespace typtest;

namespace {
ExternalModel parse(const std::string& text, int bits_per_dim = 0) {
  std::istringstream in(text);
  return parse_likelihood_csv(in, bits_per_dim);
}

std::string serialize(const ExternalModel& m) {
  std::ostringstream out;
  write_likelihood_csv(out, m);
  return out.str();
}
}  // namespace

TEST_CASE("csv parsing happy paths") {
  const auto basic = parse("id,loglik\na,-1.5\nb,-2.25e1\n");
  CHECK(basic.records.size() == 2);
  CHECK(basic.records[1].loglik == -22.5);
  CHECK_FALSE(basic.has_latent_sqnorms());
  CHECK_FALSE(basic.has_scores());

  const auto full = parse("id,loglik,latent_sqnorm,score_0,score_1\nx,-3.0,4.0,0.5,-0.5\n");
  CHECK(full.records[0].latent_sqnorm == 4.0);
  CHECK(full.dimension == 2);
  CHECK(full.records[0].score->size() == 2);
}

TEST_CASE("csv parsing rejects malformed input") {
  CHECK_THROWS_AS(parse(""), ParseError);
  CHECK_THROWS_AS(parse("loglik,id\na,-1\n"), ParseError);
  CHECK_THROWS_AS(parse("id,loglik,bogus\na,-1,2\n"), ParseError);
  CHECK_THROWS_AS(parse("id,loglik,score_1\na,-1,2\n"), ParseError);  // must start at score_0
  CHECK_THROWS_AS(parse("id,loglik\na,-1,9\n"), ParseError);          // ragged row
  CHECK_THROWS_AS(parse("id,loglik\na,nope\n"), ParseError);
  CHECK_THROWS_AS(parse("id,loglik\na,inf\n"), ParseError);
  CHECK_THROWS_AS(parse("id,loglik,latent_sqnorm\na,-1,-0.1\n"), ParseError);
  CHECK_THROWS_AS(parse("id,loglik\na,-1\na,-2\n"), ParseError);  // duplicate id
}

TEST_CASE("csv round trip is the identity") {
  Rng rng(13);
  std::vector<LikelihoodRecord> recs;
  for (int i = 0; i < 200; ++i) {
    LikelihoodRecord r;
    r.id = "ex" + std::to_string(i);
    r.loglik = -1000.0 * rng.uniform01() - 1e-14 * rng.gaussian();
    r.latent_sqnorm = 50.0 * rng.uniform01();
    Eigen::VectorXd s(3);
    for (int j = 0; j < 3; ++j) s[j] = std::ldexp(rng.gaussian(), -20);
    r.score = s;
    recs.push_back(std::move(r));
  }
  const ExternalModel original(recs);
  const std::string text = serialize(original);
  const ExternalModel reparsed = parse(text);
  REQUIRE(reparsed.records.size() == original.records.size());
  for (std::size_t i = 0; i < recs.size(); ++i) {
    CHECK(reparsed.records[i].id == original.records[i].id);
    CHECK(reparsed.records[i].loglik == original.records[i].loglik);
    CHECK(reparsed.records[i].latent_sqnorm.value() == original.records[i].latent_sqnorm.value());
    CHECK(reparsed.records[i].score.value() == original.records[i].score.value());
  }
  CHECK(serialize(reparsed) == text);
}

TEST_CASE("bits-per-dim conversion on ingestion") {
  // 1 bit/dim over d=8 is 8 ln 2 nats
  const auto m = parse("id,loglik\na,-1.0\n", 8);
  CHECK(m.records[0].loglik == doctest::Approx(-8.0 * M_LN2).epsilon(1e-15));
}

TEST_CASE("calibration json round trip is lossless") {
  Calibration cal;
  cal.entropy = {8.0 * (1.0 + std::log(2.0 * M_PI)) + 1e-13, EntropyMethod::resubstitution, 5000};
  cal.batch_size = 25;
  cal.alpha = 0.99;
  cal.bootstrap_count = 5;
  cal.seed = 0xDEADBEEFCAFEULL;
  cal.bootstrap_stats = {0.1 + 1e-16, 0.2, 0.30000000000000004, 0.4, 0.5};
  cal.threshold = quantile_threshold(cal.bootstrap_stats, cal.alpha);

  const std::string text = calibration_to_json(cal);
  const Calibration back = calibration_from_json(text);
  CHECK(back.entropy.value == cal.entropy.value);
  CHECK(back.entropy.method == cal.entropy.method);
  CHECK(back.entropy.n_used == cal.entropy.n_used);
  CHECK(back.batch_size == cal.batch_size);
  CHECK(back.alpha == cal.alpha);
  CHECK(back.threshold == cal.threshold);
  CHECK(back.seed == cal.seed);
  CHECK(back.bootstrap_stats == cal.bootstrap_stats);
  CHECK(calibration_to_json(back) == text);
}

TEST_CASE("calibration json rejects inconsistent artifacts") {
  Calibration cal;
  cal.entropy = {2.0, EntropyMethod::closed_form, 0};
  cal.batch_size = 2;
  cal.alpha = 0.5;
  cal.bootstrap_count = 2;
  cal.bootstrap_stats = {0.25, 0.75};
  cal.threshold = quantile_threshold(cal.bootstrap_stats, cal.alpha);
  std::string good = calibration_to_json(cal);

  CHECK_THROWS_AS(calibration_from_json("{"), ParseError);
  CHECK_THROWS_AS(calibration_from_json("{}"), ParseError);

  std::string tampered = good;
  const auto pos = tampered.find("\"threshold\"");
  REQUIRE(pos != std::string::npos);
  tampered.replace(pos, std::string("\"threshold\": 0.25").size(), "\"threshold\": 0.26");
  CHECK_THROWS_AS(calibration_from_json(tampered), ParseError);
}
