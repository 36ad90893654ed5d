#pragma once

#include "mblr/laplace.hpp"
#include "mblr/model.hpp"
#include "mblr/summary.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace mblr {

enum class BlockScheme { Componentwise, PerBlock };

std::string_view block_scheme_name(BlockScheme s);
BlockScheme parse_block_scheme(std::string_view text);

struct McmcConfig {
  std::size_t chains = 4;
  std::size_t warmup = 2000;
  std::size_t samples = 4000;
  std::uint64_t seed = 1;
  double target_accept = 0.35;
  std::size_t thin = 1;
  BlockScheme scheme = BlockScheme::Componentwise;
  /// Robbins-Monro scale adaptation during warmup.
  bool adapt = true;
  /// Propose along eigenvectors of the MAP curvature instead of coordinates.
  bool precondition = true;

  /// Throws UsageError.
  void check() const;
};

/// Log density on the unconstrained scale with cheap partial updates.
class SamplerTarget {
 public:
  virtual ~SamplerTarget() = default;
  /// Sets the current state; returns its log density.
  virtual double reset(const Eigen::VectorXd& u) = 0;
  /// Log density with `coords` moved to `values`; the state is unchanged
  /// until accept().
  virtual double propose(const std::vector<Eigen::Index>& coords, const Eigen::VectorXd& values) = 0;
  /// Commits the last proposal.
  virtual void accept() = 0;
};

/// Moves are u + sum_j directions.col(j) * scale(j) * z_j over the
/// directions j of one block. With `directions` empty, direction j is the
/// unit vector of coordinate j.
struct SamplerSetup {
  std::vector<std::string> names;
  Eigen::VectorXd start;   // unconstrained
  Eigen::VectorXd scale;   // per-direction base proposal sd
  std::vector<std::vector<Eigen::Index>> blocks;  // direction indices
  Eigen::MatrixXd directions;                     // D x directions, or empty
  std::function<std::unique_ptr<SamplerTarget>()> make_target;
  /// Unconstrained draw -> reported values.
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> to_constrained;
};

struct Chain {
  Eigen::MatrixXd draws;        // samples x D, unconstrained
  Eigen::MatrixXd constrained;  // samples x D
  std::vector<double> acceptance;  // post-warmup, per block
  std::vector<double> log_scale;   // adapted, per block
  std::uint64_t seed = 0;
  std::size_t chain = 0;
};

/// Random-walk Metropolis target for a fitted model: log posterior plus
/// log-Jacobian, updated incrementally per proposal.
std::unique_ptr<SamplerTarget> model_target(const Model& model);

/// Sampler setup for a model started at `map`. Without preconditioning the
/// directions are coordinates with base scales 2.4 / sqrt(-H_jj). With it
/// they are eigenvectors of -H over the free coordinates (all of them for
/// componentwise, within each block for per-block) with scales
/// 2.4 / sqrt(eigenvalue). Scales are clamped to [1e-4, 5]; 1 where the
/// curvature is not positive. Per-block scales are divided by sqrt(block size).
SamplerSetup model_setup(const Model& model, const MapResult& map, BlockScheme scheme, bool precondition = true);

/// Metropolis rule: accept iff uniform < exp(delta).
bool metropolis_accept(double delta, double uniform);

std::vector<Chain> run_chains(const SamplerSetup& setup, const McmcConfig& cfg);
std::vector<Chain> run_chains(const Model& model, const McmcConfig& cfg);
std::vector<Chain> run_chains(const ModelSpec& spec, const DesignMatrix& design, const McmcConfig& cfg);

struct Diagnostics {
  std::vector<std::string> names;
  Eigen::VectorXd ess;
  Eigen::VectorXd rhat;
  bool ok = false;
  std::vector<std::string> warnings;
};

/// Split-R-hat and multi-chain ESS (autocorrelations summed in pairs up to
/// the first non-positive pair) per column of the constrained draws.
Diagnostics diagnostics(const std::vector<Eigen::MatrixXd>& draws, const std::vector<std::string>& names);
Diagnostics diagnostics(const std::vector<Chain>& chains, const std::vector<std::string>& names);

PosteriorSummary summarize_chains(const std::vector<Chain>& chains, const std::vector<std::string>& names);

/// CSV: chain,iter,<names...> with constrained values.
std::string draws_to_csv(const std::vector<Chain>& chains, const std::vector<std::string>& names);

struct McmcFit {
  MapResult map;
  std::vector<Chain> chains;
  Diagnostics diagnostics;
  PosteriorSummary summary;
};

McmcFit fit_mcmc(const Model& model, const McmcConfig& cfg);

}  // namespace mblr
