// tytest: typicality-based OOD detection for likelihood models.
//
// Subcommands:
//   calibrate  fit a bootstrap rejection threshold from train/val likelihood CSVs
//   test       classify batches of a likelihood CSV against a calibration JSON
//   simulate   synthetic campaigns: annulus-sweep, m-sweep, evaluate, overlap
//   evaluate   shorthand for `simulate evaluate`
//
// Exit codes: 0 success, 2 input/parse error, 3 invalid flags,
// 4 calibration/batch-size mismatch.

#include <CLI11.hpp>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "typtest/baselines.hpp"
#include "typtest/calibration_io.hpp"
#include "typtest/csv.hpp"
#include "typtest/entropy.hpp"
#include "typtest/harness.hpp"
#include "typtest/models.hpp"
#include "typtest/typicality.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitParse = 2;
constexpr int kExitFlags = 3;
constexpr int kExitMismatch = 4;

struct CliError : std::runtime_error {
  int code;
  CliError(int code_, const std::string& msg) : std::runtime_error(msg), code(code_) {}
};

// Model spec strings: "iso:d=16,sigma=1[,mean=0]" or
// "diag:sigmas=1;2;0.5[,mean=0]".
typtest::Model parse_model_spec(const std::string& spec) {
  const auto colon = spec.find(':');
  if (colon == std::string::npos) throw CliError(kExitFlags, "bad model spec '" + spec + "'");
  const std::string kind = spec.substr(0, colon);
  std::map<std::string, std::string> kv;
  std::stringstream ss(spec.substr(colon + 1));
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw CliError(kExitFlags, "bad model spec item '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto num = [&](const std::string& key, double fallback, bool required) {
    auto it = kv.find(key);
    if (it == kv.end()) {
      if (required) throw CliError(kExitFlags, "model spec missing '" + key + "'");
      return fallback;
    }
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw CliError(kExitFlags, "model spec: bad value for '" + key + "'");
    }
  };
  try {
    if (kind == "iso") {
      const int d = static_cast<int>(num("d", 0, true));
      const double sigma = num("sigma", 1.0, false);
      const double mean = num("mean", 0.0, false);
      return typtest::IsotropicGaussian(Eigen::VectorXd::Constant(d, mean), sigma);
    }
    if (kind == "diag") {
      auto it = kv.find("sigmas");
      if (it == kv.end()) throw CliError(kExitFlags, "model spec missing 'sigmas'");
      std::vector<double> sig;
      std::stringstream s2(it->second);
      std::string cell;
      while (std::getline(s2, cell, ';')) sig.push_back(std::stod(cell));
      const double mean = num("mean", 0.0, false);
      Eigen::VectorXd sv = Eigen::Map<Eigen::VectorXd>(sig.data(), static_cast<Eigen::Index>(sig.size()));
      return typtest::DiagonalGaussian(Eigen::VectorXd::Constant(sv.size(), mean), sv);
    }
  } catch (const std::invalid_argument& e) {
    throw CliError(kExitFlags, std::string("model spec: ") + e.what());
  }
  throw CliError(kExitFlags, "unknown model kind '" + kind + "' (expected iso or diag)");
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw CliError(kExitParse, "cannot open '" + path + "' for writing");
  return out;
}

int run_calibrate(const std::string& train_path, const std::string& val_path,
                  const std::string& out_path, int M, double alpha, int K, std::uint64_t seed,
                  const std::string& entropy_name, const std::string& test_name,
                  const std::string& model_spec, int bits_per_dim, int annulus_d, int mmd_ref) {
  if (M < 1) throw CliError(kExitFlags, "--M must be >= 1");
  if (!(alpha > 0.0 && alpha < 1.0)) throw CliError(kExitFlags, "--alpha must be in (0,1)");
  if (K < 1) throw CliError(kExitFlags, "--K must be >= 1");

  typtest::ExternalModel train = typtest::load_likelihood_csv(train_path, bits_per_dim);
  typtest::ExternalModel val = typtest::load_likelihood_csv(val_path, bits_per_dim);
  if (val.records.empty()) throw CliError(kExitParse, "validation file has no rows");

  typtest::EntropyEstimate entropy;
  if (entropy_name == "resub") {
    entropy = typtest::resubstitution_entropy(train.logliks());
  } else if (entropy_name == "mc" || entropy_name == "closed") {
    if (model_spec.empty()) {
      throw CliError(kExitFlags, "--entropy " + entropy_name + " requires --model");
    }
    const typtest::Model model = parse_model_spec(model_spec);
    entropy = entropy_name == "mc"
                  ? typtest::monte_carlo_entropy(model, 50000, typtest::derive_seed(seed, 999))
                  : typtest::closed_form_entropy_estimate(model);
  } else {
    throw CliError(kExitFlags, "--entropy must be one of resub, mc, closed");
  }

  typtest::Calibration cal;
  if (test_name == "typicality") {
    cal = typtest::bootstrap_threshold(val.logliks(), entropy, M, K, alpha, seed);
  } else if (test_name == "annulus") {
    if (annulus_d < 1) throw CliError(kExitFlags, "--test-name annulus requires --d");
    if (!val.has_latent_sqnorms()) {
      throw CliError(kExitParse, "annulus calibration needs a latent_sqnorm column");
    }
    cal = typtest::bootstrap_annulus_threshold(val.latent_sqnorms(), annulus_d, M, K, alpha, seed);
    cal.entropy = entropy;
  } else if (test_name == "mmd") {
    if (!train.has_scores() || !val.has_scores()) {
      throw CliError(kExitParse, "mmd calibration needs score columns in train and val files");
    }
    const Eigen::MatrixXd ts = train.score_matrix();
    const int ref_n = std::min<int>(mmd_ref, static_cast<int>(ts.rows()));
    typtest::ScoreSet reference{ts.topRows(ref_n)};
    cal = typtest::bootstrap_mmd_threshold(typtest::ScoreSet{val.score_matrix()}, reference, M, K,
                                           alpha, seed);
    cal.entropy = entropy;
  } else {
    throw CliError(kExitFlags, "--test-name for calibrate must be typicality, annulus, or mmd");
  }

  typtest::save_calibration(out_path, cal);
  std::cout << "entropy=" << typtest::format_double(cal.entropy.value)
            << " method=" << typtest::to_string(cal.entropy.method)
            << " threshold=" << typtest::format_double(cal.threshold) << " K=" << K
            << " alpha=" << typtest::format_double(alpha) << "\n";
  return kExitOk;
}

int run_test(const std::string& calib_path, const std::string& input_path,
             const std::string& out_path, bool allow_mismatch, int bits_per_dim,
             const std::string& train_path, int annulus_d) {
  const typtest::Calibration cal = typtest::load_calibration(calib_path);
  const typtest::ExternalModel input = typtest::load_likelihood_csv(input_path, bits_per_dim);
  if (input.records.empty()) throw CliError(kExitParse, "test file has no rows");
  const int M = cal.batch_size;
  const int n = static_cast<int>(input.records.size());
  if (n < M && !allow_mismatch) {
    throw CliError(kExitMismatch, "test file has " + std::to_string(n) + " rows but calibration M=" +
                                      std::to_string(M) + " (use --allow-m-mismatch)");
  }
  if (n % M != 0 && !allow_mismatch) {
    throw CliError(kExitMismatch,
                   "row count is not a multiple of M=" + std::to_string(M) +
                       " (use --allow-m-mismatch to test the final short batch)");
  }

  // Per-batch statistic by calibration identity.
  std::optional<typtest::ScoreSet> mmd_reference;
  if (cal.statistic == "mmd") {
    if (train_path.empty()) {
      throw CliError(kExitFlags, "mmd calibration needs --train for the reference scores");
    }
    typtest::ExternalModel train = typtest::load_likelihood_csv(train_path, bits_per_dim);
    if (!train.has_scores()) throw CliError(kExitParse, "reference file lacks score columns");
    mmd_reference = typtest::ScoreSet{train.score_matrix()};
  }
  if (cal.statistic == "annulus") {
    if (annulus_d < 1) throw CliError(kExitFlags, "annulus calibration needs --d");
    if (!input.has_latent_sqnorms()) {
      throw CliError(kExitParse, "test file lacks a latent_sqnorm column");
    }
  }
  if (cal.statistic != "typicality" && cal.statistic != "annulus" && cal.statistic != "mmd") {
    throw CliError(kExitFlags, "unsupported calibration statistic '" + cal.statistic + "'");
  }

  std::ostringstream body;
  body << "batch_index,statistic,threshold,is_ood\n";
  int n_batches = 0, rejected = 0;
  for (int off = 0; off < n; off += M) {
    const int len = std::min(M, n - off);
    double stat = 0.0;
    if (cal.statistic == "typicality") {
      std::vector<double> ll(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i) ll[static_cast<std::size_t>(i)] = input.records[off + i].loglik;
      stat = typtest::epsilon_hat(ll, cal.entropy);
    } else if (cal.statistic == "annulus") {
      std::vector<double> sq(static_cast<std::size_t>(len));
      for (int i = 0; i < len; ++i)
        sq[static_cast<std::size_t>(i)] = input.records[off + i].latent_sqnorm.value();
      stat = typtest::annulus_statistic(sq, annulus_d);
    } else {
      typtest::ScoreSet batch{Eigen::MatrixXd(len, mmd_reference->dim())};
      for (int i = 0; i < len; ++i)
        batch.scores.row(i) = input.records[off + i].score.value().transpose();
      stat = typtest::mmd_statistic(batch, *mmd_reference);
    }
    const bool is_ood = stat > cal.threshold;
    body << n_batches << ',' << typtest::format_double(stat) << ','
         << typtest::format_double(cal.threshold) << ',' << (is_ood ? 1 : 0) << "\n";
    ++n_batches;
    rejected += is_ood ? 1 : 0;
  }
  const double fraction = static_cast<double>(rejected) / static_cast<double>(n_batches);
  if (!out_path.empty()) {
    auto out = open_out(out_path);
    out << body.str();
    std::cout << "fraction_rejected=" << typtest::format_double(fraction) << "\n";
  } else {
    std::cout << body.str();
    std::cout << "# fraction_rejected=" << typtest::format_double(fraction) << "\n";
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"typicality-based OOD detection toolkit"};
  app.require_subcommand(1);

  // calibrate
  auto* cal_cmd = app.add_subcommand("calibrate", "fit a bootstrap rejection threshold");
  std::string cal_train, cal_val, cal_out = "calibration.json", cal_entropy = "resub";
  std::string cal_test_name = "typicality", cal_model;
  int cal_M = 25, cal_K = 50, cal_bits = 0, cal_d = 0, cal_mmd_ref = 500;
  double cal_alpha = 0.99;
  std::uint64_t cal_seed = 20240901;
  cal_cmd->add_option("--train", cal_train, "training likelihood CSV")->required();
  cal_cmd->add_option("--val", cal_val, "validation likelihood CSV")->required();
  cal_cmd->add_option("--out", cal_out, "output calibration JSON path");
  cal_cmd->add_option("--M", cal_M, "batch size");
  cal_cmd->add_option("--alpha", cal_alpha, "confidence level (default 0.99)");
  cal_cmd->add_option("--K", cal_K, "bootstrap replicates (default 50)");
  cal_cmd->add_option("--seed", cal_seed, "RNG seed");
  cal_cmd->add_option("--entropy", cal_entropy, "entropy estimator: resub, mc, closed");
  cal_cmd->add_option("--test-name", cal_test_name, "statistic: typicality, annulus, mmd");
  cal_cmd->add_option("--model", cal_model, "analytic model spec (for mc/closed entropy)");
  cal_cmd->add_option("--bits-per-dim", cal_bits, "input logliks are bits/dim with this d");
  cal_cmd->add_option("--d", cal_d, "latent dimension (annulus)");
  cal_cmd->add_option("--mmd-ref", cal_mmd_ref, "MMD reference subset size (default 500)");

  // test
  auto* test_cmd = app.add_subcommand("test", "classify batches against a calibration");
  std::string test_calib, test_input, test_out, test_train;
  bool test_allow = false;
  int test_bits = 0, test_d = 0;
  test_cmd->add_option("--calib", test_calib, "calibration JSON")->required();
  test_cmd->add_option("--input", test_input, "likelihood CSV to classify")->required();
  test_cmd->add_option("--out", test_out, "write per-batch verdicts to this CSV");
  test_cmd->add_option("--train", test_train, "reference score CSV (mmd)");
  test_cmd->add_option("--d", test_d, "latent dimension (annulus)");
  test_cmd->add_flag("--allow-m-mismatch", test_allow, "also test a final short batch");
  test_cmd->add_option("--bits-per-dim", test_bits, "input logliks are bits/dim with this d");

  // simulate
  auto* sim_cmd = app.add_subcommand("simulate", "synthetic campaigns");
  std::string sim_name;
  std::string sim_model = "iso:d=16,sigma=1", sim_ood, sim_out, sim_tests = "typicality";
  std::string sim_train_file, sim_input_file, sim_val_file;
  std::vector<int> sim_M{25};
  double sim_alpha = 0.99, sim_sigma = 1.0, sim_rmin = 0.0, sim_rmax = 8.0, sim_rstep = 0.25;
  int sim_K = 50, sim_R = 10, sim_d = 16, sim_train_n = 5000, sim_val_n = 5000, sim_test_n = 5000;
  int sim_batches = 8, sim_bins = 50, sim_bits = 0;
  std::uint64_t sim_seed = 20240901;
  sim_cmd->add_option("experiment", sim_name,
                      "one of: annulus-sweep, m-sweep, evaluate, overlap")
      ->required();
  sim_cmd->add_option("--model", sim_model, "in-distribution model spec");
  sim_cmd->add_option("--ood", sim_ood, "OOD model spec");
  sim_cmd->add_option("--train", sim_train_file, "external training CSV / overlap reference");
  sim_cmd->add_option("--val", sim_val_file, "(unused placeholder for symmetry)");
  sim_cmd->add_option("--input", sim_input_file, "external OOD CSV / overlap sample");
  sim_cmd->add_option("--out", sim_out, "output CSV path");
  sim_cmd->add_option("--M", sim_M, "batch sizes");
  sim_cmd->add_option("--alpha", sim_alpha, "confidence level");
  sim_cmd->add_option("--K", sim_K, "bootstrap replicates");
  sim_cmd->add_option("--R", sim_R, "repetitions");
  sim_cmd->add_option("--seed", sim_seed, "RNG seed");
  sim_cmd->add_option("--tests", sim_tests, "comma-separated test names");
  sim_cmd->add_option("--d", sim_d, "dimension (annulus-sweep)");
  sim_cmd->add_option("--sigma", sim_sigma, "sigma (annulus-sweep)");
  sim_cmd->add_option("--r-min", sim_rmin, "sweep start radius");
  sim_cmd->add_option("--r-max", sim_rmax, "sweep end radius");
  sim_cmd->add_option("--r-step", sim_rstep, "sweep radius step");
  sim_cmd->add_option("--batches", sim_batches, "batches per radius");
  sim_cmd->add_option("--train-size", sim_train_n, "training pool size");
  sim_cmd->add_option("--val-size", sim_val_n, "validation pool size");
  sim_cmd->add_option("--test-size", sim_test_n, "test pool size");
  sim_cmd->add_option("--bins", sim_bins, "histogram bins (overlap)");
  sim_cmd->add_option("--bits-per-dim", sim_bits, "input logliks are bits/dim with this d");

  // evaluate (alias for `simulate evaluate`)
  auto* eval_cmd = app.add_subcommand("evaluate", "shorthand for `simulate evaluate`");
  eval_cmd->add_option("--model", sim_model, "in-distribution model spec");
  eval_cmd->add_option("--ood", sim_ood, "OOD model spec");
  eval_cmd->add_option("--train", sim_train_file, "external training CSV");
  eval_cmd->add_option("--input", sim_input_file, "external OOD CSV");
  eval_cmd->add_option("--out", sim_out, "output CSV path");
  eval_cmd->add_option("--M", sim_M, "batch sizes");
  eval_cmd->add_option("--alpha", sim_alpha, "confidence level");
  eval_cmd->add_option("--K", sim_K, "bootstrap replicates");
  eval_cmd->add_option("--R", sim_R, "repetitions");
  eval_cmd->add_option("--seed", sim_seed, "RNG seed");
  eval_cmd->add_option("--tests", sim_tests, "comma-separated test names");
  eval_cmd->add_option("--train-size", sim_train_n, "training pool size");
  eval_cmd->add_option("--val-size", sim_val_n, "validation pool size");
  eval_cmd->add_option("--test-size", sim_test_n, "test pool size");
  eval_cmd->add_option("--bits-per-dim", sim_bits, "input logliks are bits/dim with this d");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    std::cerr << "error code=" << kExitFlags << " message=\"" << e.what() << "\"\n";
    return kExitFlags;
  }

  try {
    if (cal_cmd->parsed()) {
      return run_calibrate(cal_train, cal_val, cal_out, cal_M, cal_alpha, cal_K, cal_seed,
                           cal_entropy, cal_test_name, cal_model, cal_bits, cal_d, cal_mmd_ref);
    }
    if (test_cmd->parsed()) {
      return run_test(test_calib, test_input, test_out, test_allow, test_bits, test_train, test_d);
    }

    const bool is_eval_alias = eval_cmd->parsed();
    const std::string experiment = is_eval_alias ? "evaluate" : sim_name;

    if (experiment == "annulus-sweep") {
      std::vector<double> radii;
      for (double r = sim_rmin; r <= sim_rmax + 1e-12; r += sim_rstep) radii.push_back(r);
      const auto sweep =
          typtest::annulus_sweep(sim_sigma, sim_d, radii, sim_M.front(), sim_seed, sim_batches);
      if (!sim_out.empty()) {
        auto out = open_out(sim_out);
        typtest::write_sweep_csv(out, sweep);
      } else {
        typtest::write_sweep_csv(std::cout, sweep);
      }
      return kExitOk;
    }
    if (experiment == "overlap") {
      if (sim_train_file.empty() || sim_input_file.empty()) {
        throw CliError(kExitFlags, "overlap needs --train and --input CSVs");
      }
      const auto a = typtest::load_likelihood_csv(sim_train_file, sim_bits);
      const auto b = typtest::load_likelihood_csv(sim_input_file, sim_bits);
      const auto s = typtest::overlap_diagnostic(a.logliks(), b.logliks(), sim_bins);
      std::ostringstream body;
      body << "bin_lo,bin_hi,mass_a,mass_b\n";
      for (std::size_t i = 0; i + 1 < s.bin_edges.size(); ++i) {
        body << typtest::format_double(s.bin_edges[i]) << ','
             << typtest::format_double(s.bin_edges[i + 1]) << ','
             << typtest::format_double(s.mass_a[i]) << ',' << typtest::format_double(s.mass_b[i])
             << "\n";
      }
      if (!sim_out.empty()) {
        auto out = open_out(sim_out);
        out << body.str();
      } else {
        std::cout << body.str();
      }
      std::cout << "overlap=" << typtest::format_double(s.overlap)
                << " flagged=" << (s.flagged ? 1 : 0) << "\n";
      return kExitOk;
    }
    if (experiment == "evaluate" || experiment == "m-sweep") {
      typtest::ExperimentConfig cfg;
      cfg.model = parse_model_spec(sim_model);
      if (!sim_ood.empty()) cfg.ood_model = parse_model_spec(sim_ood);
      if (!sim_train_file.empty()) {
        cfg.external_in = typtest::load_likelihood_csv(sim_train_file, sim_bits);
      }
      if (!sim_input_file.empty()) {
        cfg.external_ood = typtest::load_likelihood_csv(sim_input_file, sim_bits);
      }
      cfg.batch_sizes = sim_M;
      cfg.alpha = sim_alpha;
      cfg.bootstrap_k = sim_K;
      cfg.repetitions = sim_R;
      cfg.train_size = sim_train_n;
      cfg.validation_size = sim_val_n;
      cfg.test_size = sim_test_n;
      cfg.seed = sim_seed;
      cfg.tests.clear();
      std::stringstream ts(sim_tests);
      std::string t;
      while (std::getline(ts, t, ',')) cfg.tests.push_back(t);
      const auto report =
          experiment == "m-sweep" ? typtest::m_sweep(cfg) : typtest::run_evaluation(cfg);
      if (!sim_out.empty()) {
        auto out = open_out(sim_out);
        typtest::write_report_csv(out, report);
      } else {
        typtest::write_report_csv(std::cout, report);
      }
      return kExitOk;
    }
    throw CliError(kExitFlags, "unknown experiment '" + experiment +
                                   "' (valid: annulus-sweep, m-sweep, evaluate, overlap)");
  } catch (const CliError& e) {
    std::cerr << "error code=" << e.code << " message=\"" << e.what() << "\"\n";
    return e.code;
  } catch (const typtest::ParseError& e) {
    std::cerr << "error code=" << kExitParse << " message=\"" << e.what() << "\"\n";
    return kExitParse;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error code=" << kExitFlags << " message=\"" << e.what() << "\"\n";
    return kExitFlags;
  } catch (const std::exception& e) {
    std::cerr << "error code=1 message=\"" << e.what() << "\"\n";
    return 1;
  }
}
