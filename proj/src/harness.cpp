#include "typtest/harness.hpp"

#include <algorithm>
#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "typtest/csv.hpp"
#include "typtest/entropy.hpp"
#include "typtest/rng.hpp"

namespace typtest {

namespace {

const std::vector<std::string> kKnownTests = {"typicality", "ttest",  "kstest",
                                              "mmd",        "ksd",    "annulus"};

// Per-repetition data pools. Score/point/sqnorm members are filled only for
// the tests that need them.
struct Pools {
  std::vector<double> train_ll, val_ll;
  std::vector<std::vector<double>> test_ll;  // per dataset
  std::vector<double> val_sqn;
  std::vector<std::vector<double>> test_sqn;
  ScoreSet train_scores_ref, val_scores;
  std::vector<ScoreSet> test_scores;
  Eigen::MatrixXd val_pts;
  std::vector<Eigen::MatrixXd> test_pts;
};

std::vector<double> logliks_of(const Model& model, const Eigen::MatrixXd& pts) {
  std::vector<double> out(static_cast<std::size_t>(pts.rows()));
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    out[static_cast<std::size_t>(i)] = log_prob(model, pts.row(i).transpose());
  }
  return out;
}

std::vector<double> whitened_sqnorms(const Model& model, const Eigen::MatrixXd& pts) {
  std::vector<double> out(static_cast<std::size_t>(pts.rows()));
  if (const auto* iso = std::get_if<IsotropicGaussian>(&model)) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      out[static_cast<std::size_t>(i)] =
          (pts.row(i).transpose() - iso->mean).squaredNorm() / (iso->sigma * iso->sigma);
    }
  } else if (const auto* dg = std::get_if<DiagonalGaussian>(&model)) {
    for (Eigen::Index i = 0; i < pts.rows(); ++i) {
      out[static_cast<std::size_t>(i)] =
          ((pts.row(i).transpose() - dg->mean).array() / dg->sigmas.array()).square().sum();
    }
  } else {
    throw UnsupportedCapability("annulus: latent norms need a Gaussian model or a sqnorm column");
  }
  return out;
}

ScoreSet scores_of(const Model& model, const Eigen::MatrixXd& pts) {
  ScoreSet s{Eigen::MatrixXd(pts.rows(), pts.cols())};
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    s.scores.row(i) = score(model, pts.row(i).transpose()).transpose();
  }
  return s;
}

bool has_test(const ExperimentConfig& cfg, const std::string& name) {
  return std::find(cfg.tests.begin(), cfg.tests.end(), name) != cfg.tests.end();
}

bool welch_reject(double ref_mean, double ref_var, double ref_n, std::span<const double> batch,
                  double alpha) {
  double m = 0.0;
  for (double v : batch) m += v;
  const double n2 = static_cast<double>(batch.size());
  m /= n2;
  double ss = 0.0;
  for (double v : batch) ss += (v - m) * (v - m);
  const double v2 = ss / (n2 - 1.0);
  const double a = ref_var / ref_n, b = v2 / n2;
  const double se2 = a + b;
  if (se2 == 0.0) return m != ref_mean;
  const double t = (m - ref_mean) / std::sqrt(se2);
  const double df = se2 * se2 / (a * a / (ref_n - 1.0) + b * b / (n2 - 1.0));
  const boost::math::students_t_distribution<double> dist(df);
  return std::abs(t) > boost::math::quantile(dist, 1.0 - (1.0 - alpha) / 2.0);
}

double ks_d_sorted(std::span<const double> a, std::span<const double> b) {
  const double n = static_cast<double>(a.size());
  const double m = static_cast<double>(b.size());
  double d_max = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    d_max = std::max(d_max, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  return d_max;
}

// Seed streams within one repetition.
enum : std::uint64_t {
  kStreamTrain = 1,
  kStreamVal = 2,
  kStreamTestBase = 3,    // + dataset index
  kStreamShuffleBase = 20,  // + dataset index
  kStreamEntropy = 40,
  kStreamCalBase = 100,   // + 100 * test index, then derive by M
};

}  // namespace

void ExperimentConfig::validate() const {
  if (batch_sizes.empty()) throw std::invalid_argument("config: M list is empty");
  for (int m : batch_sizes) {
    if (m < 1) throw std::invalid_argument("config: M must be >= 1");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("config: alpha must be in (0,1)");
  if (bootstrap_k < 1) throw std::invalid_argument("config: K must be >= 1");
  if (repetitions < 1) throw std::invalid_argument("config: repetitions must be >= 1");
  if (train_size < 2 || validation_size < 1 || test_size < 1) {
    throw std::invalid_argument("config: pool sizes too small");
  }
  if (tests.empty()) throw std::invalid_argument("config: no tests enabled");
  for (const auto& t : tests) {
    if (std::find(kKnownTests.begin(), kKnownTests.end(), t) == kKnownTests.end()) {
      throw std::invalid_argument("config: unknown test '" + t + "'");
    }
  }
  const int max_m = *std::max_element(batch_sizes.begin(), batch_sizes.end());
  if (test_size < max_m) throw std::invalid_argument("config: test pool smaller than M");
}

const RejectionRow* RejectionReport::find(const std::string& test, const std::string& dataset,
                                          int M) const {
  for (const auto& r : rows) {
    if (r.test == test && r.dataset == dataset && r.batch_size == M) return &r;
  }
  return nullptr;
}

void write_report_csv(std::ostream& out, const RejectionReport& report) {
  out << "test,dataset,M,mean_fraction,std_fraction,n_batches\n";
  for (const auto& r : report.rows) {
    out << r.test << ',' << r.dataset << ',' << r.batch_size << ','
        << format_double(r.mean_fraction) << ',' << format_double(r.std_fraction) << ','
        << r.n_batches << "\n";
  }
}

std::vector<SweepPoint> annulus_sweep(double sigma, int d, const std::vector<double>& radii, int M,
                                      std::uint64_t seed, int batches_per_radius) {
  if (d < 1) throw std::invalid_argument("annulus_sweep: d must be >= 1");
  if (radii.empty()) throw std::invalid_argument("annulus_sweep: radii list empty");
  if (M < 1 || batches_per_radius < 1) throw std::invalid_argument("annulus_sweep: bad sizes");
  const IsotropicGaussian model(Eigen::VectorXd::Zero(d), sigma);
  const EntropyEstimate h = closed_form_entropy_estimate(model);
  std::vector<SweepPoint> out;
  out.reserve(radii.size());
  for (std::size_t ri = 0; ri < radii.size(); ++ri) {
    const double r = radii[ri];
    if (r < 0.0) throw std::invalid_argument("annulus_sweep: negative radius");
    Rng rng(derive_seed(seed, ri));
    double eps_sum = 0.0;
    std::vector<double> batch_ll(static_cast<std::size_t>(M));
    for (int b = 0; b < batches_per_radius; ++b) {
      for (int i = 0; i < M; ++i) {
        Eigen::VectorXd v(d);
        double norm = 0.0;
        do {
          for (int j = 0; j < d; ++j) v[j] = rng.gaussian();
          norm = v.norm();
        } while (norm < 1e-12);
        batch_ll[static_cast<std::size_t>(i)] = log_prob(model, (r / norm) * v);
      }
      eps_sum += epsilon_hat(batch_ll, h);
    }
    out.push_back({r, eps_sum / batches_per_radius});
  }
  return out;
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& sweep) {
  out << "radius,mean_epsilon\n";
  for (const auto& p : sweep) {
    out << format_double(p.radius) << ',' << format_double(p.mean_epsilon) << "\n";
  }
}

RejectionReport run_evaluation(const ExperimentConfig& cfg) {
  cfg.validate();
  const bool external = cfg.external_in.has_value();
  const bool need_annulus = has_test(cfg, "annulus");
  const bool need_mmd = has_test(cfg, "mmd");
  const bool need_ksd = has_test(cfg, "ksd");
  if (external && need_ksd) {
    throw UnsupportedCapability("ksd requires an analytic model with score and Hessian access");
  }

  std::vector<std::string> datasets{"in-dist"};
  if (cfg.ood_model || cfg.external_ood) datasets.push_back("ood");
  const auto n_datasets = datasets.size();

  // fractions[test][dataset][M index][rep]
  std::map<std::string, std::vector<std::vector<std::vector<double>>>> fractions;
  for (const auto& t : cfg.tests) {
    fractions[t].assign(n_datasets,
                        std::vector<std::vector<double>>(cfg.batch_sizes.size()));
  }
  // batch count per (dataset, M index), identical across reps and tests
  std::vector<std::vector<int>> batch_counts(
      n_datasets, std::vector<int>(cfg.batch_sizes.size(), 0));

  for (int rep = 0; rep < cfg.repetitions; ++rep) {
    const std::uint64_t rep_seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(rep));
    Pools pools;
    pools.test_ll.resize(n_datasets);
    pools.test_sqn.resize(n_datasets);
    pools.test_scores.resize(n_datasets);
    pools.test_pts.resize(n_datasets);

    if (!external) {
      const Model& p = cfg.model;
      const Eigen::MatrixXd train = sample(p, cfg.train_size, derive_seed(rep_seed, kStreamTrain));
      const Eigen::MatrixXd val =
          sample(p, cfg.validation_size, derive_seed(rep_seed, kStreamVal));
      pools.train_ll = logliks_of(p, train);
      pools.val_ll = logliks_of(p, val);
      if (need_annulus) pools.val_sqn = whitened_sqnorms(p, val);
      if (need_mmd) {
        const ScoreSet train_scores = scores_of(p, train);
        const int ref_n = std::min(cfg.mmd_reference_size, train_scores.size());
        pools.train_scores_ref = ScoreSet{train_scores.scores.topRows(ref_n)};
        pools.val_scores = scores_of(p, val);
      }
      if (need_ksd) pools.val_pts = val;
      for (std::size_t ds = 0; ds < n_datasets; ++ds) {
        const Model& src = (ds == 0) ? p : *cfg.ood_model;
        const Eigen::MatrixXd pts =
            sample(src, cfg.test_size, derive_seed(rep_seed, kStreamTestBase + ds));
        pools.test_ll[ds] = logliks_of(p, pts);
        if (need_annulus) pools.test_sqn[ds] = whitened_sqnorms(p, pts);
        if (need_mmd) pools.test_scores[ds] = scores_of(p, pts);
        if (need_ksd) pools.test_pts[ds] = pts;
      }
    } else {
      const ExternalModel& in = *cfg.external_in;
      if (need_annulus && !in.has_latent_sqnorms()) {
        throw UnsupportedCapability("annulus: latent_sqnorm column absent");
      }
      if (need_mmd && !in.has_scores()) {
        throw UnsupportedCapability("mmd: score columns absent");
      }
      const auto n = in.records.size();
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      Rng shuffle_rng(derive_seed(rep_seed, kStreamTrain));
      shuffle_rng.shuffle(order);
      const std::size_t tr = std::min<std::size_t>(static_cast<std::size_t>(cfg.train_size), n / 3);
      const std::size_t va =
          std::min<std::size_t>(static_cast<std::size_t>(cfg.validation_size), (n - tr) / 2);
      const std::size_t te = std::min<std::size_t>(static_cast<std::size_t>(cfg.test_size), n - tr - va);
      if (tr < 2 || va < 1 || te < 1) {
        throw std::invalid_argument("external pool too small to split into train/val/test");
      }
      auto gather_ll = [&](std::size_t begin, std::size_t count) {
        std::vector<double> out(count);
        for (std::size_t i = 0; i < count; ++i) out[i] = in.records[order[begin + i]].loglik;
        return out;
      };
      pools.train_ll = gather_ll(0, tr);
      pools.val_ll = gather_ll(tr, va);
      pools.test_ll[0] = gather_ll(tr + va, te);
      if (need_annulus) {
        auto gather_sq = [&](std::size_t begin, std::size_t count) {
          std::vector<double> out(count);
          for (std::size_t i = 0; i < count; ++i)
            out[i] = in.records[order[begin + i]].latent_sqnorm.value();
          return out;
        };
        pools.val_sqn = gather_sq(tr, va);
        pools.test_sqn[0] = gather_sq(tr + va, te);
      }
      if (need_mmd) {
        const Eigen::MatrixXd all = in.score_matrix();
        auto gather_scores = [&](std::size_t begin, std::size_t count) {
          ScoreSet s{Eigen::MatrixXd(static_cast<Eigen::Index>(count), all.cols())};
          for (std::size_t i = 0; i < count; ++i)
            s.scores.row(static_cast<Eigen::Index>(i)) =
                all.row(static_cast<Eigen::Index>(order[begin + i]));
          return s;
        };
        const std::size_t ref_n = std::min<std::size_t>(static_cast<std::size_t>(cfg.mmd_reference_size), tr);
        pools.train_scores_ref = gather_scores(0, ref_n);
        pools.val_scores = gather_scores(tr, va);
        pools.test_scores[0] = gather_scores(tr + va, te);
      }
      if (n_datasets > 1) {
        const ExternalModel& ood = *cfg.external_ood;
        std::vector<std::size_t> ood_order(ood.records.size());
        std::iota(ood_order.begin(), ood_order.end(), 0);
        Rng ood_rng(derive_seed(rep_seed, kStreamTestBase + 1));
        ood_rng.shuffle(ood_order);
        const std::size_t oe =
            std::min<std::size_t>(static_cast<std::size_t>(cfg.test_size), ood.records.size());
        pools.test_ll[1].resize(oe);
        for (std::size_t i = 0; i < oe; ++i) pools.test_ll[1][i] = ood.records[ood_order[i]].loglik;
        if (need_annulus) {
          if (!ood.has_latent_sqnorms()) {
            throw UnsupportedCapability("annulus: OOD file lacks latent_sqnorm column");
          }
          pools.test_sqn[1].resize(oe);
          for (std::size_t i = 0; i < oe; ++i)
            pools.test_sqn[1][i] = ood.records[ood_order[i]].latent_sqnorm.value();
        }
        if (need_mmd) {
          if (!ood.has_scores()) throw UnsupportedCapability("mmd: OOD file lacks score columns");
          const Eigen::MatrixXd all = ood.score_matrix();
          ScoreSet s{Eigen::MatrixXd(static_cast<Eigen::Index>(oe), all.cols())};
          for (std::size_t i = 0; i < oe; ++i)
            s.scores.row(static_cast<Eigen::Index>(i)) =
                all.row(static_cast<Eigen::Index>(ood_order[i]));
          pools.test_scores[1] = std::move(s);
        }
      }
    }

    EntropyEstimate entropy;
    switch (cfg.entropy_method) {
      case EntropyMethod::resubstitution:
        entropy = resubstitution_entropy(pools.train_ll);
        break;
      case EntropyMethod::monte_carlo:
        entropy = monte_carlo_entropy(cfg.model, cfg.mc_entropy_samples,
                                      derive_seed(rep_seed, kStreamEntropy));
        break;
      case EntropyMethod::closed_form:
        entropy = closed_form_entropy_estimate(cfg.model);
        break;
    }

    // Reference summaries for the t-/KS-tests (training likelihoods).
    double ref_mean = 0.0, ref_var = 0.0;
    std::vector<double> ref_sorted;
    if (has_test(cfg, "ttest") || has_test(cfg, "kstest")) {
      const double rn = static_cast<double>(pools.train_ll.size());
      for (double v : pools.train_ll) ref_mean += v;
      ref_mean /= rn;
      for (double v : pools.train_ll) ref_var += (v - ref_mean) * (v - ref_mean);
      ref_var /= (rn - 1.0);
      ref_sorted = pools.train_ll;
      std::sort(ref_sorted.begin(), ref_sorted.end());
    }

    // Batch orderings per dataset, shared across M and tests.
    std::vector<std::vector<std::size_t>> batch_order(n_datasets);
    for (std::size_t ds = 0; ds < n_datasets; ++ds) {
      batch_order[ds].resize(pools.test_ll[ds].size());
      std::iota(batch_order[ds].begin(), batch_order[ds].end(), 0);
      Rng rng(derive_seed(rep_seed, kStreamShuffleBase + ds));
      rng.shuffle(batch_order[ds]);
    }

    for (std::size_t mi = 0; mi < cfg.batch_sizes.size(); ++mi) {
      const int M = cfg.batch_sizes[mi];
      for (std::size_t ti = 0; ti < cfg.tests.size(); ++ti) {
        const std::string& test = cfg.tests[ti];
        const std::uint64_t cal_seed =
            derive_seed(derive_seed(rep_seed, kStreamCalBase + 100 * ti),
                        static_cast<std::uint64_t>(M));

        Calibration cal;
        if (test == "typicality") {
          cal = bootstrap_threshold(pools.val_ll, entropy, M, cfg.bootstrap_k, cfg.alpha, cal_seed);
        } else if (test == "annulus") {
          cal = bootstrap_annulus_threshold(pools.val_sqn, dimension(cfg.model), M,
                                            cfg.bootstrap_k, cfg.alpha, cal_seed);
        } else if (test == "mmd") {
          cal = bootstrap_mmd_threshold(pools.val_scores, pools.train_scores_ref, M,
                                        cfg.bootstrap_k, cfg.alpha, cal_seed);
        } else if (test == "ksd") {
          cal = bootstrap_ksd_threshold(cfg.model, pools.val_pts, M, cfg.bootstrap_k, cfg.alpha,
                                        cal_seed);
        }

        for (std::size_t ds = 0; ds < n_datasets; ++ds) {
          const auto& order = batch_order[ds];
          const std::size_t n_batches = order.size() / static_cast<std::size_t>(M);
          if (n_batches == 0) throw std::invalid_argument("test pool smaller than M");
          batch_counts[ds][mi] = static_cast<int>(n_batches);
          int rejected = 0;
          std::vector<double> batch_ll(static_cast<std::size_t>(M));
          std::vector<double> batch_sq(static_cast<std::size_t>(M));
          for (std::size_t b = 0; b < n_batches; ++b) {
            const std::size_t off = b * static_cast<std::size_t>(M);
            bool reject = false;
            if (test == "typicality") {
              for (int i = 0; i < M; ++i)
                batch_ll[static_cast<std::size_t>(i)] = pools.test_ll[ds][order[off + i]];
              reject = epsilon_hat(batch_ll, entropy) > cal.threshold;
            } else if (test == "ttest") {
              for (int i = 0; i < M; ++i)
                batch_ll[static_cast<std::size_t>(i)] = pools.test_ll[ds][order[off + i]];
              reject = welch_reject(ref_mean, ref_var,
                                    static_cast<double>(pools.train_ll.size()), batch_ll,
                                    cfg.alpha);
            } else if (test == "kstest") {
              for (int i = 0; i < M; ++i)
                batch_ll[static_cast<std::size_t>(i)] = pools.test_ll[ds][order[off + i]];
              std::sort(batch_ll.begin(), batch_ll.end());
              const double n1 = static_cast<double>(ref_sorted.size());
              const double n2 = static_cast<double>(M);
              const double crit = std::sqrt(-std::log((1.0 - cfg.alpha) / 2.0) / 2.0) *
                                  std::sqrt((n1 + n2) / (n1 * n2));
              reject = ks_d_sorted(ref_sorted, batch_ll) > crit;
            } else if (test == "annulus") {
              for (int i = 0; i < M; ++i)
                batch_sq[static_cast<std::size_t>(i)] = pools.test_sqn[ds][order[off + i]];
              reject = annulus_statistic(batch_sq, dimension(cfg.model)) > cal.threshold;
            } else if (test == "mmd") {
              ScoreSet batch{Eigen::MatrixXd(M, pools.train_scores_ref.dim())};
              for (int i = 0; i < M; ++i)
                batch.scores.row(i) =
                    pools.test_scores[ds].scores.row(static_cast<Eigen::Index>(order[off + i]));
              reject = mmd_statistic(batch, pools.train_scores_ref) > cal.threshold;
            } else if (test == "ksd") {
              Eigen::MatrixXd batch(M, pools.test_pts[ds].cols());
              for (int i = 0; i < M; ++i)
                batch.row(i) = pools.test_pts[ds].row(static_cast<Eigen::Index>(order[off + i]));
              reject = std::max(0.0, ksd_statistic(cfg.model, batch)) > cal.threshold;
            }
            rejected += reject ? 1 : 0;
          }
          fractions[test][ds][mi].push_back(static_cast<double>(rejected) /
                                            static_cast<double>(n_batches));
        }
      }
    }
  }

  RejectionReport report;
  for (const auto& test : cfg.tests) {
    for (std::size_t ds = 0; ds < n_datasets; ++ds) {
      for (std::size_t mi = 0; mi < cfg.batch_sizes.size(); ++mi) {
        const auto& fs = fractions[test][ds][mi];
        const double r = static_cast<double>(fs.size());
        double mean = 0.0;
        for (double f : fs) mean += f;
        mean /= r;
        double sd = 0.0;
        if (fs.size() > 1) {
          for (double f : fs) sd += (f - mean) * (f - mean);
          sd = std::sqrt(sd / (r - 1.0));
        }
        RejectionRow row;
        row.test = test;
        row.dataset = datasets[ds];
        row.batch_size = cfg.batch_sizes[mi];
        row.mean_fraction = mean;
        row.std_fraction = sd;
        row.n_batches = batch_counts[ds][mi];
        report.rows.push_back(row);
      }
    }
  }
  return report;
}

RejectionReport m_sweep(const ExperimentConfig& config) { return run_evaluation(config); }

OverlapSummary overlap_diagnostic(std::span<const double> reference_logliks,
                                  std::span<const double> other_logliks, int n_bins) {
  if (reference_logliks.empty() || other_logliks.empty()) {
    throw std::invalid_argument("overlap_diagnostic: empty input");
  }
  if (n_bins < 1) throw std::invalid_argument("overlap_diagnostic: n_bins must be >= 1");
  double lo = reference_logliks[0], hi = reference_logliks[0];
  for (double v : reference_logliks) { lo = std::min(lo, v); hi = std::max(hi, v); }
  for (double v : other_logliks) { lo = std::min(lo, v); hi = std::max(hi, v); }

  OverlapSummary s;
  s.bin_edges.resize(static_cast<std::size_t>(n_bins) + 1);
  s.mass_a.assign(static_cast<std::size_t>(n_bins), 0.0);
  s.mass_b.assign(static_cast<std::size_t>(n_bins), 0.0);
  const double width = (hi - lo) / n_bins;
  for (int i = 0; i <= n_bins; ++i) s.bin_edges[static_cast<std::size_t>(i)] = lo + width * i;

  auto bin_of = [&](double v) {
    if (width == 0.0) return 0;
    int b = static_cast<int>((v - lo) / width);
    return std::clamp(b, 0, n_bins - 1);
  };
  for (double v : reference_logliks)
    s.mass_a[static_cast<std::size_t>(bin_of(v))] += 1.0 / static_cast<double>(reference_logliks.size());
  for (double v : other_logliks)
    s.mass_b[static_cast<std::size_t>(bin_of(v))] += 1.0 / static_cast<double>(other_logliks.size());
  for (int i = 0; i < n_bins; ++i) {
    s.overlap += std::min(s.mass_a[static_cast<std::size_t>(i)], s.mass_b[static_cast<std::size_t>(i)]);
  }
  s.overlap = std::min(s.overlap, 1.0);
  s.flagged = s.overlap >= 0.9;
  return s;
}

}  // namespace typtest
