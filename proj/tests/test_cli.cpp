#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "typtest/calibration_io.hpp"
#include "typtest/csv.hpp"
#include "typtest/entropy.hpp"
#include "typtest/typicality.hpp"

namespace fs = std::filesystem;

namespace {

fs::path work_dir() {
  static fs::path dir = [] {
    fs::path p = fs::temp_directory_path() / "tytest_cli_tests";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(TYTEST_BIN) + " " + args + " >/dev/null 2>/dev/null";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string toy_csv(int n, double base) {
  std::ostringstream ss;
  ss << "id,loglik\n";
  for (int i = 0; i < n; ++i) ss << "r" << i << ',' << (base - 0.1 * i) << "\n";
  return ss.str();
}

}  // namespace

TEST_CASE("calibrate writes a json matching the library computation") {
  const fs::path d = work_dir();
  write_file(d / "train.csv", toy_csv(10, -2.0));
  write_file(d / "val.csv", toy_csv(10, -3.0));
  const std::string out = (d / "cal.json").string();
  CHECK(run("calibrate --train " + (d / "train.csv").string() + " --val " +
            (d / "val.csv").string() + " --M 2 --K 1 --alpha 0.5 --seed 7 --out " + out) == 0);

  const typtest::Calibration cal = typtest::load_calibration(out);
  const typtest::ExternalModel train = typtest::load_likelihood_csv((d / "train.csv").string());
  const typtest::ExternalModel val = typtest::load_likelihood_csv((d / "val.csv").string());
  const auto entropy = typtest::resubstitution_entropy(train.logliks());
  const typtest::Calibration expect =
      typtest::bootstrap_threshold(val.logliks(), entropy, 2, 1, 0.5, 7);
  CHECK(cal.threshold == expect.threshold);
  CHECK(cal.bootstrap_stats == expect.bootstrap_stats);
  CHECK(cal.entropy.value == entropy.value);
}

TEST_CASE("calibrate flag validation and determinism") {
  const fs::path d = work_dir();
  write_file(d / "train.csv", toy_csv(10, -2.0));
  write_file(d / "val.csv", toy_csv(10, -3.0));
  const std::string common = "calibrate --train " + (d / "train.csv").string() + " --val " +
                             (d / "val.csv").string() + " --M 3 --K 20 --seed 42 --out ";

  CHECK(run("calibrate --train " + (d / "train.csv").string() + " --val " +
            (d / "val.csv").string() + " --alpha 1.0 --out " + (d / "x.json").string()) == 3);
  CHECK(run("calibrate --train " + (d / "missing.csv").string() + " --val " +
            (d / "val.csv").string() + " --out " + (d / "x.json").string()) == 2);

  CHECK(run(common + (d / "a.json").string()) == 0);
  CHECK(run(common + (d / "b.json").string()) == 0);
  CHECK(slurp(d / "a.json") == slurp(d / "b.json"));
}

TEST_CASE("test subcommand: tie rule, mismatch handling, empty input") {
  const fs::path d = work_dir();
  // constant likelihoods: entropy 3, every statistic and threshold exactly 0
  std::ostringstream flat;
  flat << "id,loglik\n";
  for (int i = 0; i < 8; ++i) flat << "c" << i << ",-3.0\n";
  write_file(d / "flat.csv", flat.str());
  const std::string cal = (d / "flat_cal.json").string();
  CHECK(run("calibrate --train " + (d / "flat.csv").string() + " --val " +
            (d / "flat.csv").string() + " --M 2 --K 5 --seed 1 --out " + cal) == 0);

  // statistic == threshold is accepted (strict >), so nothing is rejected
  const std::string verdicts = (d / "verdicts.csv").string();
  CHECK(run("test --calib " + cal + " --input " + (d / "flat.csv").string() + " --out " +
            verdicts) == 0);
  const std::string body = slurp(d / "verdicts.csv");
  CHECK(body.find(",1\n") == std::string::npos);
  CHECK(body.find("batch_index,statistic,threshold,is_ood") == 0);

  // 5 rows against M=2 without the opt-in flag
  write_file(d / "five.csv", toy_csv(5, -3.0));
  CHECK(run("test --calib " + cal + " --input " + (d / "five.csv").string()) == 4);
  CHECK(run("test --calib " + cal + " --input " + (d / "five.csv").string() +
            " --allow-m-mismatch") == 0);

  write_file(d / "empty.csv", "id,loglik\n");
  CHECK(run("test --calib " + cal + " --input " + (d / "empty.csv").string()) == 2);
}

TEST_CASE("simulate annulus-sweep finds the sqrt(d) minimum") {
  const fs::path d = work_dir();
  const std::string out = (d / "sweep.csv").string();
  CHECK(run("simulate annulus-sweep --d 16 --sigma 1 --M 8 --seed 3 --out " + out) == 0);
  std::ifstream in(out);
  std::string line;
  std::getline(in, line);
  CHECK(line == "radius,mean_epsilon");
  double best_r = -1.0, best_eps = 1e300;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    const double r = std::stod(line.substr(0, comma));
    const double eps = std::stod(line.substr(comma + 1));
    if (eps < best_eps) {
      best_eps = eps;
      best_r = r;
    }
  }
  CHECK(best_r == 4.0);
}

TEST_CASE("simulate rejects unknown experiments") {
  CHECK(run("simulate warp-drive") == 3);
}

TEST_CASE("evaluate runs and is byte-reproducible") {
  const fs::path d = work_dir();
  const std::string flags =
      " --model iso:d=8,sigma=1 --ood iso:d=8,sigma=0.5 --M 10 --R 2 --train-size 400"
      " --val-size 400 --test-size 300 --seed 11 --tests typicality,kstest --out ";
  CHECK(run("evaluate" + flags + (d / "r1.csv").string()) == 0);
  CHECK(run("simulate evaluate" + flags + (d / "r2.csv").string()) == 0);
  const std::string r1 = slurp(d / "r1.csv");
  CHECK(r1 == slurp(d / "r2.csv"));
  CHECK(r1.find("typicality,ood,10,1,") != std::string::npos);  // full power on sigma/2
}

TEST_CASE("overlap experiment reports disjoint and identical cases") {
  const fs::path d = work_dir();
  write_file(d / "a.csv", toy_csv(50, -2.0));
  write_file(d / "b.csv", toy_csv(50, -200.0));
  CHECK(run("simulate overlap --train " + (d / "a.csv").string() + " --input " +
            (d / "b.csv").string() + " --out " + (d / "ov.csv").string()) == 0);
  std::ifstream in(d / "ov.csv");
  std::string line;
  std::getline(in, line);
  CHECK(line == "bin_lo,bin_hi,mass_a,mass_b");
}
