#pragma once

#include "mblr/data.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mblr {

enum class Variant { Pooled, MetaAnalytic };

std::string_view variant_name(Variant v);  // "mblr" | "ma-mblr"
Variant parse_variant(std::string_view text);

/// Prior configuration shared by both model variants.
///
/// Every standard deviation (sigma_A, sigma_0, sigma_B, tau and, for the
/// meta-analytic variant, the per-issue trial-level sds) is Uniform(0, d).
/// The unshrunk locations (alpha0_k and B0) get N(0, location_sd^2), or a
/// flat prior when `location_sd` is empty.
struct PriorConfig {
  double d = 3.0;
  std::optional<double> location_sd = 10.0;
  bool sum_to_zero = true;

  void check() const;
  bool operator==(const PriorConfig&) const = default;
};

/// "flat" or "normal:<sd>".
std::string location_prior_text(const PriorConfig& prior);
void parse_location_prior(std::string_view text, PriorConfig& prior);

struct ModelSpec {
  Variant variant = Variant::Pooled;
  std::size_t K = 1;
  std::size_t L = 1;
  std::size_t G = 0;
  std::vector<std::size_t> covariate_sizes;
  std::vector<std::string> issue_names;
  std::vector<std::string> trial_ids;
  std::vector<std::string> level_names;
  PriorConfig prior;

  std::optional<std::size_t> trial_position(std::string_view id) const;
};

ModelSpec make_model_spec(Variant variant, const DesignMatrix& design, PriorConfig prior = {});

enum class Block {
  Alpha0Trial,   // alpha0[k][l]   (meta-analytic only)
  Beta0Trial,    // beta0[k][l]    (meta-analytic only)
  Alpha0,        // alpha0[k]
  Beta0,         // beta0[k]
  Alpha,         // alpha[k][g]
  Beta,          // beta[k][g]
  A,             // A[g]
  B0,            // B0
  B,             // B[g]
  SigmaA,
  Sigma0,
  SigmaB,
  Tau,
  SigmaAIssue,   // sigma_A.k[k]   (meta-analytic only)
  Sigma0Issue,   // sigma_0.k[k]   (meta-analytic only)
};

std::string_view block_name(Block b);

struct BlockRange {
  Block block;
  std::size_t offset = 0;
  std::size_t size = 0;
};

/// With sum_to_zero on, the last level's hyper-mean of each covariate is
/// minus the sum of the others and is not a free coordinate.
struct ZeroSumGroup {
  std::size_t derived;
  std::vector<std::size_t> free;
};

/// Flattened parameter vector layout. Blocks are contiguous, in the order
/// listed by `blocks()`; alpha/beta blocks are issue-major (k * G + g) and
/// trial-level blocks are issue-major (k * L + l).
class ParameterLayout {
 public:
  explicit ParameterLayout(const ModelSpec& spec);

  std::size_t dim() const { return names_.size(); }
  Variant variant() const { return variant_; }
  std::size_t K() const { return K_; }
  std::size_t L() const { return L_; }
  std::size_t G() const { return G_; }
  double upper() const { return d_; }

  const std::vector<BlockRange>& blocks() const { return blocks_; }
  const BlockRange& range(Block b) const;

  std::size_t alpha0(std::size_t k) const;
  std::size_t beta0(std::size_t k) const;
  std::size_t alpha0_trial(std::size_t k, std::size_t l) const;
  std::size_t beta0_trial(std::size_t k, std::size_t l) const;
  std::size_t alpha(std::size_t k, std::size_t g) const;
  std::size_t beta(std::size_t k, std::size_t g) const;
  std::size_t A(std::size_t g) const;
  std::size_t B0() const;
  std::size_t B(std::size_t g) const;
  std::size_t sigma_A() const;
  std::size_t sigma_0() const;
  std::size_t sigma_B() const;
  std::size_t tau() const;
  std::size_t sigma_A_issue(std::size_t k) const;
  std::size_t sigma_0_issue(std::size_t k) const;

  /// Coordinate entering the linear predictor as intercept / treatment
  /// effect for issue k in trial l (trial ignored for the pooled variant).
  std::size_t intercept(std::size_t k, std::size_t l) const;
  std::size_t treatment(std::size_t k, std::size_t l) const;

  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  std::optional<std::size_t> find(std::string_view name) const;
  Block block_of(std::size_t i) const { return block_of_[i]; }
  bool is_sd(std::size_t i) const;
  bool is_derived(std::size_t i) const { return derived_[i]; }
  const std::vector<ZeroSumGroup>& zero_sum_groups() const { return groups_; }
  const std::vector<std::size_t>& sd_indices() const { return sd_indices_; }

  /// Overwrites derived coordinates with minus the sum of their free siblings.
  void canonicalize(Eigen::Ref<Eigen::VectorXd> values) const;

 private:
  std::size_t add_block(Block b, std::size_t size);

  Variant variant_;
  std::size_t K_, L_, G_;
  double d_;
  std::vector<BlockRange> blocks_;
  std::vector<std::string> names_;
  std::vector<Block> block_of_;
  std::vector<bool> derived_;
  std::vector<ZeroSumGroup> groups_;
  std::vector<std::size_t> sd_indices_;
};

ParameterLayout param_layout(const ModelSpec& spec);

enum class Scale { Constrained, Unconstrained };

struct ParameterSet {
  Eigen::VectorXd values;
  std::shared_ptr<const ParameterLayout> layout;
  Scale scale = Scale::Constrained;

  double operator[](std::string_view name) const;
  double& operator[](std::string_view name);
};

/// Zero locations, every sd at min(0.5, d/2), constrained scale.
ParameterSet default_parameters(const ModelSpec& spec);
ParameterSet make_parameters(const ModelSpec& spec, Eigen::VectorXd values, Scale scale = Scale::Constrained);

/// sigma = d * logistic(u) for sd coordinates; identity elsewhere.
ParameterSet to_unconstrained(const ParameterSet& theta);
ParameterSet from_unconstrained(const ParameterSet& u);
/// Sum over sd coordinates of log(d * s * (1 - s)), s = logistic(u).
double log_jacobian(const ParameterSet& u);

enum class Order { Value, Gradient, Hessian };

struct Evaluation {
  double value = 0.0;
  Eigen::VectorXd grad;   // filled for Order::Gradient and above
  Eigen::MatrixXd hess;   // filled for Order::Hessian
};

/// Normal log-density term x ~ N(mu, sd^2). A negative mu index means 0; a
/// negative sd index means the constant sd_const.
struct PriorTerm {
  std::ptrdiff_t x;
  std::ptrdiff_t mu;
  std::ptrdiff_t sd;
  double sd_const;
};

/// One distinct (trial, arm, covariate pattern) combination with its patient
/// count and per-issue event counts. Binomial aggregation of identical rows.
struct Cell {
  std::size_t trial = 0;
  int treat = 0;
  std::vector<int> levels;
  double n = 0.0;
  Eigen::VectorXd events;
};

/// The probability model bound to one dataset. Evaluation is const and
/// reentrant.
///
/// Derived (sum-to-zero) coordinates are recomputed from their free
/// siblings on every call, so derivatives are those of f(theta) = F(P theta):
/// the derived entries of the gradient and Hessian are zero and their effect
/// is folded into the free coordinates.
class Model {
 public:
  Model(ModelSpec spec, const DesignMatrix& design);

  const ModelSpec& spec() const { return spec_; }
  const ParameterLayout& layout() const { return *layout_; }
  std::shared_ptr<const ParameterLayout> layout_ptr() const { return layout_; }
  const std::vector<Cell>& cells() const { return cells_; }
  /// Coordinates summed into the linear predictor of (cell c, issue k).
  const std::vector<std::size_t>& active(std::size_t c, std::size_t k) const { return active_[c * spec_.K + k]; }
  const std::vector<PriorTerm>& prior_terms() const { return terms_; }

  double log_likelihood(const Eigen::VectorXd& theta) const;
  double log_prior(const Eigen::VectorXd& theta) const;
  Evaluation posterior(const Eigen::VectorXd& theta, Order order) const;
  /// log_posterior(from_unconstrained(u)) + log_jacobian(u), with derivatives in u.
  Evaluation target(const Eigen::VectorXd& u, Order order) const;

  bool sds_interior(const Eigen::VectorXd& theta) const;

 private:
  ModelSpec spec_;
  std::shared_ptr<const ParameterLayout> layout_;
  std::vector<PriorTerm> terms_;
  std::vector<Cell> cells_;
  std::vector<std::vector<std::size_t>> active_;
};

double log_likelihood(const ModelSpec& spec, const DesignMatrix& design, const ParameterSet& theta);
double log_prior(const ModelSpec& spec, const ParameterSet& theta);
double log_posterior(const ModelSpec& spec, const DesignMatrix& design, const ParameterSet& theta);
Eigen::VectorXd grad_log_posterior(const ModelSpec& spec, const DesignMatrix& design, const ParameterSet& theta);
Eigen::MatrixXd hessian_log_posterior(const ModelSpec& spec, const DesignMatrix& design, const ParameterSet& theta);

/// Issue probabilities for one patient. `levels` holds one level index per
/// covariate; `trial` is a trial id (required to exist for meta-analytic).
Eigen::VectorXd predict_prob(const ModelSpec& spec, const ParameterSet& theta, const std::vector<int>& levels,
                             int treatment, std::string_view trial);

}  // namespace mblr
