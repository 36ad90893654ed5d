#pragma once

#include "mblr/data.hpp"
#include "mblr/fit.hpp"
#include "mblr/model.hpp"
#include "mblr/summary.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace mblr {

struct SimCovariate {
  std::string name;
  std::vector<std::string> levels;
  std::vector<double> probs;
};

struct SimTrial {
  std::string id;
  std::size_t control = 0;
  std::size_t treated = 0;
};

/// Synthetic study design plus generating parameters.
///
/// `truth` maps parameter names of `truth_variant`'s layout to values.
/// Unlisted locations are 0, except trial-level intercepts and treatment
/// effects, which inherit their issue-level value. Standard deviations play no
/// role in generation.
struct SimSpec {
  std::string name;
  std::vector<std::string> issues;
  std::vector<SimCovariate> covariates;
  std::vector<SimTrial> trials;
  Variant truth_variant = Variant::Pooled;
  std::map<std::string, double> truth;
  std::uint64_t seed = 1;

  /// Throws UsageError.
  void check() const;
  CovariateSchema schema() const;
};

SimSpec parse_sim_spec(const std::string& json_text);
SimSpec load_sim_spec(const std::filesystem::path& path);
std::string sim_spec_to_json(const SimSpec& spec);

/// "default", "null", "borrowing".
SimSpec builtin_scenario(std::string_view name);
std::vector<std::string> builtin_scenario_names();
/// A built-in name or a path to a scenario file.
SimSpec resolve_scenario(const std::string& name_or_path);

/// Constrained parameters of the truth (sds at their defaults).
ParameterSet truth_parameters(const SimSpec& spec);

SafetyDataset generate_dataset(const SimSpec& spec);
SafetyDataset generate_dataset(const SimSpec& spec, std::uint64_t seed);

/// Seed of replication `index` under a master seed (splitmix64 mixing).
std::uint64_t replication_seed(std::uint64_t master, std::size_t index);

enum class Type1Target { Treatment, Interactions };

struct Type1Config {
  std::size_t replications = 500;
  double level = 0.10;
  std::vector<Method> methods{Method::Laplace, Method::Mcmc};
  Variant variant = Variant::Pooled;
  Type1Target target = Type1Target::Treatment;
  std::uint64_t seed = 1;
  PriorConfig prior;
  McmcConfig mcmc;  // seed replaced per replication
  std::optional<GridSpec> grid;

  void check() const;
};

struct Type1MethodResult {
  Method method = Method::Laplace;
  std::size_t replications = 0;
  std::size_t failures = 0;
  std::size_t decisions = 0;
  std::size_t rejections = 0;
  double rate = 0.0;
  double mc_se = 0.0;
  /// Over replications in which every method succeeded.
  std::size_t paired_decisions = 0;
  std::size_t paired_rejections = 0;
  double paired_rate = 0.0;
};

struct Type1Report {
  std::string scenario;
  double level = 0.10;
  std::size_t replications = 0;
  std::size_t paired_replications = 0;
  std::vector<Type1MethodResult> methods;
  std::vector<std::string> warnings;

  const Type1MethodResult& at(Method m) const;
};

/// Two-sided normal test at `level`: |z| > Phi^{-1}(1 - level / 2).
bool reject_z(double z, double level);
/// Equal-tailed interval excludes 0.
bool reject_interval(double lo, double hi);

/// Null calibration study. Treatment-block truth must be zero. Failed fits
/// (exceptions, or unmet MCMC diagnostics on a target) are excluded and
/// counted; more than 10% failures for a method throws NumericalError.
Type1Report run_type1(const SimSpec& null_spec, const Type1Config& cfg);

struct SimpsonSpec {
  std::string issue = "ae";
  std::vector<std::string> trial_ids{"T1", "T2"};
  std::vector<double> baselines;    // control log-odds per trial
  std::vector<double> allocations;  // treated fraction per trial
  double log_or = 0.4;
  std::vector<std::size_t> sizes{2000, 2000};
  std::uint64_t seed = 1;

  static SimpsonSpec default_spec();
  void check() const;
};

SimpsonSpec parse_simpson_spec(const std::string& json_text);
std::string simpson_spec_to_json(const SimpsonSpec& spec);

struct SimpsonManifest {
  double within_log_or = 0.0;
  double pooled_log_or = 0.0;  // expected-count pooling of the two arms
  std::vector<double> treated_rate;
  std::vector<double> control_rate;
};

/// Analytic manifest; throws UsageError when the pooled log-OR does not have
/// the opposite sign of the within-trial log-OR.
SimpsonManifest simpson_manifest(const SimpsonSpec& spec);
std::string simpson_manifest_to_json(const SimpsonManifest& m);

struct SimpsonData {
  SafetyDataset data;
  SimpsonManifest manifest;
};

SimpsonData generate_simpson(const SimpsonSpec& spec);
SimpsonData generate_simpson(const SimpsonSpec& spec, std::uint64_t seed);

struct SimpsonReplicate {
  std::uint64_t seed = 0;
  double pooled_estimate = 0.0;  // beta0 of the pooled fit without trial terms
  double ma_estimate = 0.0;      // beta0 hyper-mean of the meta-analytic fit
  bool failed = false;
};

struct SimpsonStudy {
  SimpsonManifest manifest;
  std::vector<SimpsonReplicate> replicates;
  std::size_t failures = 0;
  double pooled_wrong_sign = 0.0;  // fractions over successful replicates
  double ma_correct_sign = 0.0;
  double both = 0.0;
};

SimpsonStudy run_simpson_study(const SimpsonSpec& spec, std::size_t replications, std::uint64_t seed,
                               const PriorConfig& prior = {});

struct BorrowingReplicate {
  std::uint64_t seed = 0;
  double independent = 0.0;
  double joint = 0.0;
  double shrinkage = 0.0;
  bool largest = false;  // rare issue has the largest |shrinkage|
  bool failed = false;
};

struct BorrowingStudy {
  std::string rare_issue;
  std::vector<BorrowingReplicate> replicates;
  std::size_t failures = 0;
  double positive_fraction = 0.0;
  double largest_fraction = 0.0;
};

/// Independent single-issue fits versus one joint fit, per replication.
BorrowingStudy run_borrowing_study(const SimSpec& spec, const std::string& rare_issue, std::size_t replications,
                                   std::uint64_t seed, const PriorConfig& prior = {});

}  // namespace mblr
