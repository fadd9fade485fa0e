#ifndef TYPTEST_HARNESS_HPP
#define TYPTEST_HARNESS_HPP

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "typtest/baselines.hpp"
#include "typtest/models.hpp"
#include "typtest/typicality.hpp"

namespace typtest {

struct ExperimentConfig {
  Model model = IsotropicGaussian(Eigen::VectorXd::Zero(1), 1.0);  // in-distribution model p
  std::optional<Model> ood_model;     // alternative q (analytic mode)
  std::optional<ExternalModel> external_in;   // file-backed pools (override sampling)
  std::optional<ExternalModel> external_ood;
  std::vector<int> batch_sizes{25};   // M list
  double alpha = 0.99;
  int bootstrap_k = 50;
  int repetitions = 10;
  int train_size = 5000;       // reference pool for t/KS/MMD and resubstitution entropy
  int validation_size = 5000;
  int test_size = 5000;
  int mmd_reference_size = 500;
  EntropyMethod entropy_method = EntropyMethod::resubstitution;
  int mc_entropy_samples = 50000;
  std::uint64_t seed = 20240901;
  std::vector<std::string> tests{"typicality"};  // of {typicality,ttest,kstest,mmd,ksd,annulus}

  void validate() const;
};

struct RejectionRow {
  std::string test;
  std::string dataset;  // "in-dist" or "ood"
  int batch_size = 0;
  double mean_fraction = 0.0;
  double std_fraction = 0.0;
  int n_batches = 0;
};

struct RejectionReport {
  std::vector<RejectionRow> rows;

  const RejectionRow* find(const std::string& test, const std::string& dataset, int M) const;
};

// CSV: test,dataset,M,mean_fraction,std_fraction,n_batches
void write_report_csv(std::ostream& out, const RejectionReport& report);

// Mean epsilon-hat of batches placed exactly on spheres of the given radii
// around the model mean, against the closed-form entropy.
struct SweepPoint {
  double radius = 0.0;
  double mean_epsilon = 0.0;
};
std::vector<SweepPoint> annulus_sweep(double sigma, int d, const std::vector<double>& radii, int M,
                                      std::uint64_t seed, int batches_per_radius = 8);
void write_sweep_csv(std::ostream& out, const std::vector<SweepPoint>& sweep);

// Calibrate-and-classify campaign over repetitions; fractions aggregated
// as mean +- std over repetitions.
RejectionReport run_evaluation(const ExperimentConfig& config);

// run_evaluation in long format over the config's M list.
RejectionReport m_sweep(const ExperimentConfig& config);

struct OverlapSummary {
  std::vector<double> bin_edges;  // n_bins + 1 edges
  std::vector<double> mass_a;
  std::vector<double> mass_b;
  double overlap = 0.0;  // sum of min bin masses, in [0,1]
  bool flagged = false;  // overlap >= 0.9: likelihood histograms indistinguishable
};
OverlapSummary overlap_diagnostic(std::span<const double> reference_logliks,
                                  std::span<const double> other_logliks, int n_bins = 50);

}  // namespace typtest

#endif  // TYPTEST_HARNESS_HPP
