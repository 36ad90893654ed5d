#include "mblr/mcmc.hpp"

#include "mblr/errors.hpp"
#include "mblr/numeric.hpp"
#include "mblr/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace mblr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Incremental log posterior + log-Jacobian for random-walk updates. Each
/// proposal re-evaluates only the (cell, issue) predictors and prior terms
/// that involve a moved coordinate.
class ModelTarget final : public SamplerTarget {
 public:
  explicit ModelTarget(const Model& model) : model_(model), lay_(model.layout()) {
    const std::size_t D = lay_.dim();
    const std::size_t K = model.spec().K;
    d_ = lay_.upper();
    is_sd_.assign(D, false);
    for (std::size_t i : lay_.sd_indices()) is_sd_[i] = true;
    partner_.assign(D, -1);
    for (const auto& grp : lay_.zero_sum_groups())
      for (std::size_t f : grp.free) partner_[f] = static_cast<std::ptrdiff_t>(grp.derived);

    const auto& cells = model.cells();
    npairs_ = cells.size() * K;
    n_.resize(npairs_);
    y_.resize(npairs_);
    pair_users_.resize(D);
    for (std::size_t c = 0; c < cells.size(); ++c)
      for (std::size_t k = 0; k < K; ++k) {
        const std::size_t p = c * K + k;
        n_[p] = cells[c].n;
        y_[p] = cells[c].events(static_cast<Eigen::Index>(k));
        for (std::size_t j : model.active(c, k)) pair_users_[j].push_back(p);
      }
    const auto& terms = model.prior_terms();
    term_users_.resize(D);
    for (std::size_t t = 0; t < terms.size(); ++t) {
      term_users_[static_cast<std::size_t>(terms[t].x)].push_back(t);
      if (terms[t].mu >= 0) term_users_[static_cast<std::size_t>(terms[t].mu)].push_back(t);
      if (terms[t].sd >= 0) term_users_[static_cast<std::size_t>(terms[t].sd)].push_back(t);
    }
    eta_.resize(npairs_);
    ll_.resize(npairs_);
    lp_.resize(terms.size());
    pair_mark_.assign(npairs_, 0);
    term_mark_.assign(terms.size(), 0);
    deta_.assign(npairs_, 0.0);
    new_ll_.assign(npairs_, 0.0);
    new_lp_.assign(terms.size(), 0.0);
    coord_mark_.assign(D, 0);
  }

  double reset(const Eigen::VectorXd& u_in) override {
    u_ = u_in;
    lay_.canonicalize(u_);
    theta_ = u_;
    lj_ = 0.0;
    for (std::size_t i : lay_.sd_indices()) {
      const auto ii = static_cast<Eigen::Index>(i);
      theta_(ii) = d_ * sigmoid(u_(ii));
      lj_ += jac(u_(ii));
    }
    if (!model_.sds_interior(theta_)) {
      total_ = kNegInf;
      return total_;
    }
    const std::size_t K = model_.spec().K;
    ll_total_ = 0.0;
    for (std::size_t p = 0; p < npairs_; ++p) {
      double eta = 0.0;
      for (std::size_t j : model_.active(p / K, p % K)) eta += theta_(static_cast<Eigen::Index>(j));
      eta_[p] = eta;
      ll_[p] = pair_ll(p, eta);
      ll_total_ += ll_[p];
    }
    lp_total_ = 0.0;
    for (std::size_t t = 0; t < lp_.size(); ++t) {
      lp_[t] = term_lp(t, theta_);
      lp_total_ += lp_[t];
    }
    total_ = ll_total_ + lp_total_ + lj_;
    pending_ = false;
    return total_;
  }

  double propose(const std::vector<Eigen::Index>& coords, const Eigen::VectorXd& values) override {
    clear_pending();
    prop_theta_ = theta_;
    prop_u_ = u_;
    double dlj = 0.0;
    for (std::size_t a = 0; a < coords.size(); ++a) {
      const Eigen::Index i = coords[a];
      const auto iu = static_cast<std::size_t>(i);
      prop_u_(i) = values(static_cast<Eigen::Index>(a));
      double v = prop_u_(i);
      if (is_sd_[iu]) {
        v = d_ * sigmoid(prop_u_(i));
        if (!(v > 0.0 && v < d_)) return kNegInf;
        dlj += jac(prop_u_(i)) - jac(u_(i));
      }
      const double delta = v - theta_(i);
      prop_theta_(i) = v;
      touch(iu);
      if (partner_[iu] >= 0) {
        prop_theta_(partner_[iu]) -= delta;
        prop_u_(partner_[iu]) -= delta;
        touch(static_cast<std::size_t>(partner_[iu]));
      }
    }

    double dll = 0.0;
    for (std::size_t i : changed_) {
      const double delta = prop_theta_(static_cast<Eigen::Index>(i)) - theta_(static_cast<Eigen::Index>(i));
      for (std::size_t p : pair_users_[i]) {
        if (!pair_mark_[p]) {
          pair_mark_[p] = 1;
          pairs_.push_back(p);
          deta_[p] = 0.0;
        }
        deta_[p] += delta;
      }
      for (std::size_t t : term_users_[i]) {
        if (!term_mark_[t]) {
          term_mark_[t] = 1;
          terms_.push_back(t);
        }
      }
    }
    for (std::size_t p : pairs_) {
      new_ll_[p] = pair_ll(p, eta_[p] + deta_[p]);
      dll += new_ll_[p] - ll_[p];
    }
    double dlp = 0.0;
    for (std::size_t t : terms_) {
      new_lp_[t] = term_lp(t, prop_theta_);
      dlp += new_lp_[t] - lp_[t];
    }
    pending_dll_ = dll;
    pending_dlp_ = dlp;
    pending_dlj_ = dlj;
    pending_ = true;
    return total_ + dll + dlp + dlj;
  }

  void accept() override {
    if (!pending_) throw std::logic_error("accept() without a finite proposal");
    for (std::size_t i : changed_) {
      const auto ii = static_cast<Eigen::Index>(i);
      theta_(ii) = prop_theta_(ii);
      u_(ii) = prop_u_(ii);
    }
    for (std::size_t p : pairs_) {
      eta_[p] += deta_[p];
      ll_[p] = new_ll_[p];
    }
    for (std::size_t t : terms_) lp_[t] = new_lp_[t];
    ll_total_ += pending_dll_;
    lp_total_ += pending_dlp_;
    lj_ += pending_dlj_;
    total_ = ll_total_ + lp_total_ + lj_;
    clear_pending();
  }

 private:
  double jac(double u) const { return std::log(d_) + log_sigmoid(u) + log_sigmoid(-u); }

  double pair_ll(std::size_t p, double eta) const {
    return y_[p] * log_sigmoid(eta) + (n_[p] - y_[p]) * log_sigmoid(-eta);
  }

  double term_lp(std::size_t t, const Eigen::VectorXd& theta) const {
    const auto& term = model_.prior_terms()[t];
    const double mu = term.mu >= 0 ? theta(term.mu) : 0.0;
    const double s = term.sd >= 0 ? theta(term.sd) : term.sd_const;
    const double r = (theta(term.x) - mu) / s;
    return -std::log(s) - 0.5 * kLn2Pi - 0.5 * r * r;
  }

  void touch(std::size_t i) {
    if (!coord_mark_[i]) {
      coord_mark_[i] = 1;
      changed_.push_back(i);
    }
  }

  void clear_pending() {
    for (std::size_t p : pairs_) pair_mark_[p] = 0;
    for (std::size_t t : terms_) term_mark_[t] = 0;
    for (std::size_t i : changed_) coord_mark_[i] = 0;
    pairs_.clear();
    terms_.clear();
    changed_.clear();
    pending_ = false;
  }

  const Model& model_;
  const ParameterLayout& lay_;
  double d_ = 0.0;
  std::vector<bool> is_sd_;
  std::vector<std::ptrdiff_t> partner_;
  std::size_t npairs_ = 0;
  std::vector<double> n_, y_;
  std::vector<std::vector<std::size_t>> pair_users_, term_users_;

  Eigen::VectorXd u_, theta_;
  std::vector<double> eta_, ll_, lp_;
  double ll_total_ = 0.0, lp_total_ = 0.0, lj_ = 0.0, total_ = kNegInf;

  Eigen::VectorXd prop_u_, prop_theta_;
  std::vector<char> pair_mark_, term_mark_, coord_mark_;
  std::vector<std::size_t> pairs_, terms_, changed_;
  std::vector<double> deta_, new_ll_, new_lp_;
  double pending_dll_ = 0.0, pending_dlp_ = 0.0, pending_dlj_ = 0.0;
  bool pending_ = false;
};

std::mt19937_64 chain_rng(std::uint64_t seed, std::size_t chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), 0x6d626c72u};
  return std::mt19937_64(seq);
}

std::uint64_t chain_seed(std::uint64_t seed, std::size_t chain) {
  auto rng = chain_rng(seed, chain);
  return rng();
}

Chain run_one(const SamplerSetup& setup, const McmcConfig& cfg, std::size_t c) {
  auto rng = chain_rng(cfg.seed, c);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto target = setup.make_target();
  const auto D = setup.start.size();
  const std::size_t nb = setup.blocks.size();

  const bool dir = setup.directions.size() > 0;
  // Coordinates each block can move.
  std::vector<std::vector<Eigen::Index>> touched(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    if (!dir) {
      touched[b] = setup.blocks[b];
      continue;
    }
    for (Eigen::Index i = 0; i < D; ++i)
      for (Eigen::Index j : setup.blocks[b])
        if (setup.directions(i, j) != 0.0) {
          touched[b].push_back(i);
          break;
        }
  }
  const auto move = [&](Eigen::VectorXd& x, Eigen::Index j, double delta) {
    if (dir) x += setup.directions.col(j) * delta;
    else x(j) += delta;
  };

  Eigen::VectorXd u;
  double lp = kNegInf;
  for (int attempt = 0; attempt < 100 && !std::isfinite(lp); ++attempt) {
    u = setup.start;
    for (const auto& b : setup.blocks)
      for (Eigen::Index j : b) move(u, j, 0.1 * setup.scale(j) * normal(rng));
    lp = target->reset(u);
  }
  if (!std::isfinite(lp))
    throw NumericalError("chain " + std::to_string(c) + ": no finite-density start after 100 tries");

  Chain out;
  out.chain = c;
  out.seed = chain_seed(cfg.seed, c);
  out.log_scale.assign(nb, 0.0);
  out.acceptance.assign(nb, 0.0);
  out.draws.resize(static_cast<Eigen::Index>(cfg.samples), D);

  std::vector<Eigen::VectorXd> values(nb);
  for (std::size_t b = 0; b < nb; ++b) values[b].resize(static_cast<Eigen::Index>(touched[b].size()));
  Eigen::VectorXd trial = u;

  const std::size_t total = cfg.warmup + cfg.samples * cfg.thin;
  std::size_t stored = 0;
  for (std::size_t it = 0; it < total; ++it) {
    const bool warm = it < cfg.warmup;
    const double gamma = std::pow(static_cast<double>(it) + 1.0, -0.6);
    for (std::size_t b = 0; b < nb; ++b) {
      const auto& coords = touched[b];
      const double step = std::exp(out.log_scale[b]);
      trial = u;
      for (Eigen::Index j : setup.blocks[b]) move(trial, j, step * setup.scale(j) * normal(rng));
      for (std::size_t a = 0; a < coords.size(); ++a) values[b](static_cast<Eigen::Index>(a)) = trial(coords[a]);
      const double prop = target->propose(coords, values[b]);
      const double delta = prop - lp;
      const bool acc = std::isfinite(prop) && metropolis_accept(delta, unif(rng));
      if (acc) {
        target->accept();
        lp = prop;
        for (std::size_t a = 0; a < coords.size(); ++a) u(coords[a]) = values[b](static_cast<Eigen::Index>(a));
      }
      if (warm && cfg.adapt) out.log_scale[b] += gamma * ((acc ? 1.0 : 0.0) - cfg.target_accept);
      if (!warm && acc) out.acceptance[b] += 1.0;
    }
    // Full recomputation bounds drift of the incremental sums; it also
    // canonicalizes derived coordinates.
    lp = target->reset(u);
    if (!warm && (it - cfg.warmup + 1) % cfg.thin == 0) {
      out.draws.row(static_cast<Eigen::Index>(stored++)) = u;
    }
  }
  for (auto& a : out.acceptance) a /= static_cast<double>(cfg.samples * cfg.thin);

  out.constrained.resize(out.draws.rows(), D);
  for (Eigen::Index r = 0; r < out.draws.rows(); ++r)
    out.constrained.row(r) = setup.to_constrained(out.draws.row(r).transpose()).transpose();
  return out;
}

double quantile_sorted(const std::vector<double>& x, double q) {
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

}  // namespace

std::string_view block_scheme_name(BlockScheme s) {
  return s == BlockScheme::Componentwise ? "componentwise" : "per-block";
}

BlockScheme parse_block_scheme(std::string_view text) {
  if (text == "componentwise") return BlockScheme::Componentwise;
  if (text == "per-block") return BlockScheme::PerBlock;
  throw UsageError("unknown block scheme '" + std::string(text) + "' (expected componentwise or per-block)");
}

void McmcConfig::check() const {
  if (chains < 1) throw UsageError("chains must be at least 1");
  if (warmup < 100) throw UsageError("warmup must be at least 100");
  if (samples < 100) throw UsageError("samples must be at least 100");
  if (thin < 1) throw UsageError("thin must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw UsageError("target acceptance must lie in (0, 1)");
}

bool metropolis_accept(double delta, double uniform) { return uniform < std::exp(delta); }

std::unique_ptr<SamplerTarget> model_target(const Model& model) { return std::make_unique<ModelTarget>(model); }

SamplerSetup model_setup(const Model& model, const MapResult& map, BlockScheme scheme, bool precondition) {
  const auto& lay = model.layout();
  SamplerSetup s;
  s.names = lay.names();
  s.start = map.u.values;
  lay.canonicalize(s.start);
  const Evaluation ev = model.target(s.start, Order::Hessian);
  const auto D = s.start.size();
  const auto base = [](double curvature) {
    return curvature > 1e-8 ? std::clamp(2.4 / std::sqrt(curvature), 1e-4, 5.0) : 1.0;
  };

  std::vector<Eigen::Index> free;
  for (std::size_t i = 0; i < lay.dim(); ++i)
    if (!lay.is_derived(i)) free.push_back(static_cast<Eigen::Index>(i));
  std::vector<std::vector<Eigen::Index>> groups;
  if (scheme == BlockScheme::Componentwise) {
    groups.push_back(free);
  } else {
    for (const auto& br : lay.blocks()) {
      std::vector<Eigen::Index> b;
      for (auto i : free)
        if (static_cast<std::size_t>(i) >= br.offset && static_cast<std::size_t>(i) < br.offset + br.size) b.push_back(i);
      if (!b.empty()) groups.push_back(std::move(b));
    }
  }

  s.scale = Eigen::VectorXd::Ones(D);
  if (precondition) {
    s.directions = Eigen::MatrixXd::Zero(D, D);
    Eigen::Index next = 0;
    for (const auto& g : groups) {
      const Eigen::MatrixXd h = -ev.hess(g, g);
      const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (h + h.transpose()));
      std::vector<Eigen::Index> dirs;
      for (Eigen::Index k = 0; k < eig.eigenvalues().size(); ++k) {
        const Eigen::VectorXd v = eig.eigenvectors().col(k);
        for (std::size_t a = 0; a < g.size(); ++a) s.directions(g[a], next) = v(static_cast<Eigen::Index>(a));
        s.scale(next) = base(eig.eigenvalues()(k));
        dirs.push_back(next++);
      }
      if (scheme == BlockScheme::Componentwise) {
        for (auto j : dirs) s.blocks.push_back({j});
      } else {
        for (auto j : dirs) s.scale(j) /= std::sqrt(static_cast<double>(dirs.size()));
        s.blocks.push_back(std::move(dirs));
      }
    }
    s.directions.conservativeResize(D, next);
    s.scale.conservativeResize(next);
  } else {
    for (Eigen::Index i = 0; i < D; ++i) s.scale(i) = base(-ev.hess(i, i));
    for (const auto& g : groups) {
      if (scheme == BlockScheme::Componentwise) {
        for (auto i : g) s.blocks.push_back({i});
      } else {
        for (auto i : g) s.scale(i) /= std::sqrt(static_cast<double>(g.size()));
        s.blocks.push_back(g);
      }
    }
  }
  s.make_target = [&model] { return model_target(model); };
  auto layout = model.layout_ptr();
  s.to_constrained = [layout](const Eigen::VectorXd& u) {
    ParameterSet t = from_unconstrained(ParameterSet{u, layout, Scale::Unconstrained});
    layout->canonicalize(t.values);
    return t.values;
  };
  return s;
}

std::vector<Chain> run_chains(const SamplerSetup& setup, const McmcConfig& cfg) {
  cfg.check();
  std::vector<Chain> chains(cfg.chains);
  parallel_for(cfg.chains, [&](std::size_t c) { chains[c] = run_one(setup, cfg, c); });
  return chains;
}

std::vector<Chain> run_chains(const Model& model, const McmcConfig& cfg) {
  const MapResult map = find_map(model);
  return run_chains(model_setup(model, map, cfg.scheme, cfg.precondition), cfg);
}

std::vector<Chain> run_chains(const ModelSpec& spec, const DesignMatrix& design, const McmcConfig& cfg) {
  const Model model(spec, design);
  return run_chains(model, cfg);
}

Diagnostics diagnostics(const std::vector<Eigen::MatrixXd>& draws, const std::vector<std::string>& names) {
  if (draws.size() < 2) throw UsageError("diagnostics need at least 2 chains");
  const Eigen::Index N = draws[0].rows();
  for (const auto& d : draws)
    if (d.rows() != N || static_cast<std::size_t>(d.cols()) != names.size())
      throw UsageError("chains must have equal lengths and one column per parameter");
  if (N < 4) throw UsageError("diagnostics need at least 4 draws per chain");

  const Eigen::Index n = N / 2;
  const std::size_t M = draws.size() * 2;
  Diagnostics out;
  out.names = names;
  out.ess.resize(static_cast<Eigen::Index>(names.size()));
  out.rhat.resize(static_cast<Eigen::Index>(names.size()));
  out.ok = true;

  std::vector<Eigen::VectorXd> seg(M);
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    for (std::size_t c = 0; c < draws.size(); ++c) {
      seg[2 * c] = draws[c].col(jj).head(n);
      seg[2 * c + 1] = draws[c].col(jj).tail(n);
    }
    std::vector<double> mean(M), var(M);
    for (std::size_t m = 0; m < M; ++m) {
      mean[m] = seg[m].mean();
      var[m] = (seg[m].array() - mean[m]).square().sum() / static_cast<double>(n - 1);
    }
    double grand = 0.0, W = 0.0;
    for (std::size_t m = 0; m < M; ++m) {
      grand += mean[m] / static_cast<double>(M);
      W += var[m] / static_cast<double>(M);
    }
    double B = 0.0;
    for (std::size_t m = 0; m < M; ++m) B += (mean[m] - grand) * (mean[m] - grand);
    B *= static_cast<double>(n) / static_cast<double>(M - 1);
    const double nd = static_cast<double>(n);
    const double var_plus = (nd - 1.0) / nd * W + B / nd;

    if (!(W > 0.0)) {
      out.rhat(jj) = var_plus > 0.0 ? std::numeric_limits<double>::infinity() : 1.0;
      out.ess(jj) = 0.0;
      out.warnings.push_back("parameter " + names[j] + " has constant draws within chains; ESS set to 0");
      out.ok = false;
      continue;
    }
    out.rhat(jj) = std::sqrt(var_plus / W);

    auto rho = [&](Eigen::Index t) {
      double acov = 0.0;
      for (std::size_t m = 0; m < M; ++m) {
        const auto& x = seg[m];
        double s = 0.0;
        for (Eigen::Index i = 0; i + t < n; ++i) s += (x(i) - mean[m]) * (x(i + t) - mean[m]);
        acov += s / nd;
      }
      acov /= static_cast<double>(M);
      return 1.0 - (W - acov) / var_plus;
    };
    double sum = 0.0;
    double prev = std::numeric_limits<double>::infinity();
    for (Eigen::Index t = 0; t + 1 < n; t += 2) {
      double pair = rho(t) + rho(t + 1);
      if (!(pair > 0.0)) break;
      pair = std::min(pair, prev);
      prev = pair;
      sum += pair;
    }
    const double tau = std::max(-1.0 + 2.0 * sum, 1.0 / std::log10(static_cast<double>(M) * nd));
    out.ess(jj) = static_cast<double>(M) * nd / tau;
    if (!(out.rhat(jj) < 1.05) || !(out.ess(jj) > 100.0)) out.ok = false;
  }
  return out;
}

Diagnostics diagnostics(const std::vector<Chain>& chains, const std::vector<std::string>& names) {
  std::vector<Eigen::MatrixXd> draws;
  for (const auto& c : chains) draws.push_back(c.constrained);
  return diagnostics(draws, names);
}

PosteriorSummary summarize_chains(const std::vector<Chain>& chains, const std::vector<std::string>& names) {
  PosteriorSummary s;
  s.method = Method::Mcmc;
  std::optional<Diagnostics> diag;
  if (chains.size() >= 2 && chains[0].constrained.rows() >= 4) {
    diag = diagnostics(chains, names);
    s.warnings = diag->warnings;
    if (!diag->ok) s.warnings.push_back("convergence diagnostics not met (R-hat < 1.05 and ESS > 100 required)");
  }
  for (std::size_t j = 0; j < names.size(); ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    std::vector<double> x;
    for (const auto& c : chains)
      for (Eigen::Index r = 0; r < c.constrained.rows(); ++r) x.push_back(c.constrained(r, jj));
    if (x.empty()) throw UsageError("no draws to summarize");
    std::sort(x.begin(), x.end());
    SummaryRow row;
    row.name = names[j];
    if (x.front() == x.back()) {
      row.mean = x.front();
      row.sd = 0.0;
    } else {
      double m = 0.0;
      for (double v : x) m += v;
      m /= static_cast<double>(x.size());
      double ss = 0.0;
      for (double v : x) ss += (v - m) * (v - m);
      row.mean = m;
      row.sd = x.size() > 1 ? std::sqrt(ss / static_cast<double>(x.size() - 1)) : 0.0;
    }
    row.degenerate = !(row.sd > 0.0);
    row.z = row.mean / row.sd;
    row.lo90 = quantile_sorted(x, 0.05);
    row.hi90 = quantile_sorted(x, 0.95);
    if (diag) {
      row.ess = diag->ess(jj);
      row.rhat = diag->rhat(jj);
    }
    s.rows.push_back(std::move(row));
  }
  return s;
}

std::string draws_to_csv(const std::vector<Chain>& chains, const std::vector<std::string>& names) {
  std::ostringstream out;
  out << "chain,iter";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  for (const auto& c : chains)
    for (Eigen::Index r = 0; r < c.constrained.rows(); ++r) {
      out << c.chain << ',' << r;
      for (Eigen::Index j = 0; j < c.constrained.cols(); ++j) out << ',' << format_double(c.constrained(r, j));
      out << '\n';
    }
  return out.str();
}

McmcFit fit_mcmc(const Model& model, const McmcConfig& cfg) {
  cfg.check();
  McmcFit fit;
  fit.map = find_map(model);
  fit.chains = run_chains(model_setup(model, fit.map, cfg.scheme, cfg.precondition), cfg);
  const auto& names = model.layout().names();
  fit.summary = summarize_chains(fit.chains, names);
  fit.summary.variant = model.spec().variant;
  if (fit.chains.size() >= 2) fit.diagnostics = diagnostics(fit.chains, names);
  return fit;
}

}  // namespace mblr
