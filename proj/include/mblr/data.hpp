#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace mblr {

struct Covariate {
  std::string name;
  std::vector<std::string> levels;

  bool operator==(const Covariate&) const = default;
};

/// Categorical covariates and the K issue (adverse event) names.
struct CovariateSchema {
  std::vector<Covariate> covariates;
  std::vector<std::string> issue_names;

  std::size_t num_issues() const { return issue_names.size(); }
  /// Total number of level indicators G.
  std::size_t num_levels() const;
  /// Throws DataError on duplicate names, a covariate with < 2 levels, or K = 0.
  void check() const;

  bool operator==(const CovariateSchema&) const = default;
};

struct PatientRecord {
  std::size_t trial = 0;     // index into SafetyDataset::trial_ids
  int treatment = 0;         // 0 control, 1 treated
  std::vector<int> levels;   // one level index per schema covariate
  std::vector<int> outcomes; // K binary outcomes

  bool operator==(const PatientRecord&) const = default;
};

struct SafetyDataset {
  CovariateSchema schema;
  std::vector<std::string> trial_ids;
  std::vector<PatientRecord> records;

  std::size_t num_trials() const { return trial_ids.size(); }
  std::size_t size() const { return records.size(); }

  bool operator==(const SafetyDataset&) const = default;
};

struct ArmCounts {
  std::size_t control = 0;
  std::size_t treated = 0;
};

struct ValidationReport {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;
  std::vector<ArmCounts> trial_arms;     // per trial: patients per arm
  std::vector<ArmCounts> issue_events;   // per issue: events per arm

  bool ok() const { return errors.empty(); }
};

/// Indicator-coded design. X has one column per covariate level; the
/// `row_levels` view lists the active X column for each covariate per row.
struct DesignMatrix {
  Eigen::MatrixXd X;
  Eigen::VectorXi treat;
  Eigen::VectorXi trial_index;
  Eigen::MatrixXi Y;
  std::vector<std::string> column_names;
  std::vector<std::size_t> covariate_sizes;
  std::vector<std::string> issue_names;
  std::vector<std::string> trial_ids;
  std::vector<std::vector<int>> row_levels;

  std::size_t rows() const { return static_cast<std::size_t>(Y.rows()); }
  std::size_t num_issues() const { return static_cast<std::size_t>(Y.cols()); }
  std::size_t num_levels() const { return column_names.size(); }
  std::size_t num_trials() const { return trial_ids.size(); }
};

CovariateSchema parse_schema(const std::string& json_text);
CovariateSchema load_schema(const std::filesystem::path& path);
std::string schema_to_json(const CovariateSchema& schema);

/// Parses CSV text against a schema. Records keep file order; trial ids are
/// numbered in order of first appearance.
SafetyDataset parse_dataset(const std::string& csv_text, const CovariateSchema& schema);
SafetyDataset load_dataset(const std::filesystem::path& path, const std::filesystem::path& schema_path);
std::string dataset_to_csv(const SafetyDataset& data);
void save_dataset(const SafetyDataset& data, const std::filesystem::path& csv_path,
                  const std::filesystem::path& schema_path);

ValidationReport validate_dataset(const SafetyDataset& data);
std::string validation_report_to_json(const ValidationReport& report, const SafetyDataset& data);

/// Throws DataError if the dataset has validation errors.
DesignMatrix build_design(const SafetyDataset& data);

/// Covariates whose level is constant within every trial yet varies across
/// trials; such a covariate is a trial identifier in disguise.
std::vector<std::string> trial_aliased_covariates(const SafetyDataset& data);

}  // namespace mblr
