#include "mblr/model.hpp"

#include "mblr/errors.hpp"
#include "mblr/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

namespace mblr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

std::vector<PriorTerm> build_prior_terms(const ParameterLayout& lay, const PriorConfig& prior) {
  std::vector<PriorTerm> terms;
  const auto idx = [](std::size_t i) { return static_cast<std::ptrdiff_t>(i); };
  const std::size_t K = lay.K(), L = lay.L(), G = lay.G();
  const bool ma = lay.variant() == Variant::MetaAnalytic;
  if (prior.location_sd) {
    for (std::size_t k = 0; k < K; ++k) terms.push_back({idx(lay.alpha0(k)), -1, -1, *prior.location_sd});
    terms.push_back({idx(lay.B0()), -1, -1, *prior.location_sd});
  }
  for (std::size_t k = 0; k < K; ++k) {
    terms.push_back({idx(lay.beta0(k)), idx(lay.B0()), idx(lay.sigma_0()), 0.0});
    for (std::size_t g = 0; g < G; ++g) {
      terms.push_back({idx(lay.alpha(k, g)), idx(lay.A(g)), idx(lay.sigma_A()), 0.0});
      terms.push_back({idx(lay.beta(k, g)), idx(lay.B(g)), idx(lay.sigma_B()), 0.0});
    }
  }
  for (std::size_t g = 0; g < G; ++g) {
    if (!lay.is_derived(lay.A(g))) terms.push_back({idx(lay.A(g)), -1, idx(lay.tau()), 0.0});
    if (!lay.is_derived(lay.B(g))) terms.push_back({idx(lay.B(g)), -1, idx(lay.tau()), 0.0});
  }
  if (ma) {
    for (std::size_t k = 0; k < K; ++k) {
      for (std::size_t l = 0; l < L; ++l) {
        terms.push_back({idx(lay.alpha0_trial(k, l)), idx(lay.alpha0(k)), idx(lay.sigma_A_issue(k)), 0.0});
        terms.push_back({idx(lay.beta0_trial(k, l)), idx(lay.beta0(k)), idx(lay.sigma_0_issue(k)), 0.0});
      }
    }
  }
  return terms;
}

// Folds derived-coordinate derivatives into their free siblings (chain rule
// through theta_derived = -sum(theta_free)).
void fold_derived(const ParameterLayout& lay, Evaluation& ev, Order order) {
  for (const auto& grp : lay.zero_sum_groups()) {
    const auto d = static_cast<Eigen::Index>(grp.derived);
    if (order >= Order::Gradient) {
      for (std::size_t f : grp.free) ev.grad(static_cast<Eigen::Index>(f)) -= ev.grad(d);
      ev.grad(d) = 0.0;
    }
    if (order == Order::Hessian) {
      for (std::size_t f : grp.free) ev.hess.col(static_cast<Eigen::Index>(f)) -= ev.hess.col(d);
      ev.hess.col(d).setZero();
      for (std::size_t f : grp.free) ev.hess.row(static_cast<Eigen::Index>(f)) -= ev.hess.row(d);
      ev.hess.row(d).setZero();
    }
  }
}

void check_dim(const ParameterLayout& lay, const Eigen::VectorXd& v) {
  if (static_cast<std::size_t>(v.size()) != lay.dim())
    throw std::invalid_argument("parameter vector has dimension " + std::to_string(v.size()) + ", expected " +
                                std::to_string(lay.dim()));
}

}  // namespace

std::string_view variant_name(Variant v) { return v == Variant::Pooled ? "mblr" : "ma-mblr"; }

Variant parse_variant(std::string_view text) {
  if (text == "mblr" || text == "pooled") return Variant::Pooled;
  if (text == "ma-mblr" || text == "meta-analytic") return Variant::MetaAnalytic;
  throw UsageError("unknown model '" + std::string(text) + "' (expected mblr or ma-mblr)");
}

void PriorConfig::check() const {
  if (!(d > 0.0) || !std::isfinite(d)) throw UsageError("prior bound d must be positive");
  if (location_sd && !(*location_sd > 0.0)) throw UsageError("location prior sd must be positive");
}

std::string location_prior_text(const PriorConfig& prior) {
  return prior.location_sd ? "normal:" + format_double(*prior.location_sd) : "flat";
}

void parse_location_prior(std::string_view text, PriorConfig& prior) {
  if (text == "flat") {
    prior.location_sd.reset();
    return;
  }
  constexpr std::string_view tag = "normal:";
  if (text.substr(0, tag.size()) == tag) {
    const std::string rest(text.substr(tag.size()));
    try {
      std::size_t used = 0;
      const double sd = std::stod(rest, &used);
      if (used == rest.size() && sd > 0.0) {
        prior.location_sd = sd;
        return;
      }
    } catch (const std::exception&) {
    }
  }
  throw UsageError("bad location prior '" + std::string(text) + "' (expected flat or normal:<sd>)");
}

std::optional<std::size_t> ModelSpec::trial_position(std::string_view id) const {
  for (std::size_t l = 0; l < trial_ids.size(); ++l)
    if (trial_ids[l] == id) return l;
  return std::nullopt;
}

ModelSpec make_model_spec(Variant variant, const DesignMatrix& design, PriorConfig prior) {
  prior.check();
  ModelSpec spec;
  spec.variant = variant;
  spec.K = design.num_issues();
  spec.L = design.num_trials();
  spec.G = design.num_levels();
  spec.covariate_sizes = design.covariate_sizes;
  spec.issue_names = design.issue_names;
  spec.trial_ids = design.trial_ids;
  spec.level_names = design.column_names;
  spec.prior = prior;
  return spec;
}

std::string_view block_name(Block b) {
  switch (b) {
    case Block::Alpha0Trial: return "alpha0_trial";
    case Block::Beta0Trial: return "beta0_trial";
    case Block::Alpha0: return "alpha0";
    case Block::Beta0: return "beta0";
    case Block::Alpha: return "alpha";
    case Block::Beta: return "beta";
    case Block::A: return "A";
    case Block::B0: return "B0";
    case Block::B: return "B";
    case Block::SigmaA: return "sigma_A";
    case Block::Sigma0: return "sigma_0";
    case Block::SigmaB: return "sigma_B";
    case Block::Tau: return "tau";
    case Block::SigmaAIssue: return "sigma_A.k";
    case Block::Sigma0Issue: return "sigma_0.k";
  }
  return "?";
}

ParameterLayout::ParameterLayout(const ModelSpec& spec)
    : variant_(spec.variant), K_(spec.K), L_(spec.L), G_(spec.G), d_(spec.prior.d) {
  if (K_ == 0) throw std::invalid_argument("model needs at least one issue");
  if (L_ == 0) throw std::invalid_argument("model needs at least one trial");
  std::size_t g_total = 0;
  for (auto s : spec.covariate_sizes) g_total += s;
  if (g_total != G_) throw std::invalid_argument("covariate sizes do not sum to G");

  auto issue = [&](std::size_t k) {
    return k < spec.issue_names.size() ? spec.issue_names[k] : "issue" + std::to_string(k + 1);
  };
  auto trial = [&](std::size_t l) {
    return l < spec.trial_ids.size() ? spec.trial_ids[l] : "trial" + std::to_string(l + 1);
  };
  auto level = [&](std::size_t g) {
    return g < spec.level_names.size() ? spec.level_names[g] : "x" + std::to_string(g + 1);
  };
  auto per_issue = [&](Block b, const std::string& stem) {
    add_block(b, K_);
    for (std::size_t k = 0; k < K_; ++k) names_.push_back(stem + "[" + issue(k) + "]");
  };
  auto per_issue_trial = [&](Block b, const std::string& stem) {
    add_block(b, K_ * L_);
    for (std::size_t k = 0; k < K_; ++k)
      for (std::size_t l = 0; l < L_; ++l) names_.push_back(stem + "[" + issue(k) + "][" + trial(l) + "]");
  };
  auto per_issue_level = [&](Block b, const std::string& stem) {
    add_block(b, K_ * G_);
    for (std::size_t k = 0; k < K_; ++k)
      for (std::size_t g = 0; g < G_; ++g) names_.push_back(stem + "[" + issue(k) + "][" + level(g) + "]");
  };
  auto per_level = [&](Block b, const std::string& stem) {
    add_block(b, G_);
    for (std::size_t g = 0; g < G_; ++g) names_.push_back(stem + "[" + level(g) + "]");
  };
  auto scalar = [&](Block b, const std::string& name) {
    add_block(b, 1);
    names_.push_back(name);
  };

  if (variant_ == Variant::Pooled) {
    per_issue(Block::Alpha0, "alpha0");
    per_issue_level(Block::Alpha, "alpha");
    per_issue(Block::Beta0, "beta0");
    per_issue_level(Block::Beta, "beta");
  } else {
    per_issue_trial(Block::Alpha0Trial, "alpha0");
    per_issue_trial(Block::Beta0Trial, "beta0");
    per_issue(Block::Alpha0, "alpha0");
    per_issue(Block::Beta0, "beta0");
    per_issue_level(Block::Alpha, "alpha");
    per_issue_level(Block::Beta, "beta");
  }
  per_level(Block::A, "A");
  scalar(Block::B0, "B0");
  per_level(Block::B, "B");
  scalar(Block::SigmaA, "sigma_A");
  scalar(Block::Sigma0, "sigma_0");
  scalar(Block::SigmaB, "sigma_B");
  scalar(Block::Tau, "tau");
  if (variant_ == Variant::MetaAnalytic) {
    per_issue(Block::SigmaAIssue, "sigma_A.k");
    per_issue(Block::Sigma0Issue, "sigma_0.k");
  }

  derived_.assign(names_.size(), false);
  if (spec.prior.sum_to_zero) {
    std::size_t start = 0;
    for (auto size : spec.covariate_sizes) {
      for (Block b : {Block::A, Block::B}) {
        ZeroSumGroup grp;
        const std::size_t base = range(b).offset + start;
        for (std::size_t j = 0; j + 1 < size; ++j) grp.free.push_back(base + j);
        grp.derived = base + size - 1;
        derived_[grp.derived] = true;
        groups_.push_back(std::move(grp));
      }
      start += size;
    }
  }
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (is_sd(i)) sd_indices_.push_back(i);
}

std::size_t ParameterLayout::add_block(Block b, std::size_t size) {
  const std::size_t offset = names_.size();
  blocks_.push_back({b, offset, size});
  block_of_.insert(block_of_.end(), size, b);
  return offset;
}

const BlockRange& ParameterLayout::range(Block b) const {
  for (const auto& r : blocks_)
    if (r.block == b) return r;
  throw std::invalid_argument("block " + std::string(block_name(b)) + " not present in this layout");
}

std::size_t ParameterLayout::alpha0(std::size_t k) const { return range(Block::Alpha0).offset + k; }
std::size_t ParameterLayout::beta0(std::size_t k) const { return range(Block::Beta0).offset + k; }
std::size_t ParameterLayout::alpha0_trial(std::size_t k, std::size_t l) const {
  return range(Block::Alpha0Trial).offset + k * L_ + l;
}
std::size_t ParameterLayout::beta0_trial(std::size_t k, std::size_t l) const {
  return range(Block::Beta0Trial).offset + k * L_ + l;
}
std::size_t ParameterLayout::alpha(std::size_t k, std::size_t g) const { return range(Block::Alpha).offset + k * G_ + g; }
std::size_t ParameterLayout::beta(std::size_t k, std::size_t g) const { return range(Block::Beta).offset + k * G_ + g; }
std::size_t ParameterLayout::A(std::size_t g) const { return range(Block::A).offset + g; }
std::size_t ParameterLayout::B0() const { return range(Block::B0).offset; }
std::size_t ParameterLayout::B(std::size_t g) const { return range(Block::B).offset + g; }
std::size_t ParameterLayout::sigma_A() const { return range(Block::SigmaA).offset; }
std::size_t ParameterLayout::sigma_0() const { return range(Block::Sigma0).offset; }
std::size_t ParameterLayout::sigma_B() const { return range(Block::SigmaB).offset; }
std::size_t ParameterLayout::tau() const { return range(Block::Tau).offset; }
std::size_t ParameterLayout::sigma_A_issue(std::size_t k) const { return range(Block::SigmaAIssue).offset + k; }
std::size_t ParameterLayout::sigma_0_issue(std::size_t k) const { return range(Block::Sigma0Issue).offset + k; }

std::size_t ParameterLayout::intercept(std::size_t k, std::size_t l) const {
  return variant_ == Variant::Pooled ? alpha0(k) : alpha0_trial(k, l);
}
std::size_t ParameterLayout::treatment(std::size_t k, std::size_t l) const {
  return variant_ == Variant::Pooled ? beta0(k) : beta0_trial(k, l);
}

std::optional<std::size_t> ParameterLayout::find(std::string_view name) const {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return i;
  return std::nullopt;
}

bool ParameterLayout::is_sd(std::size_t i) const {
  switch (block_of_[i]) {
    case Block::SigmaA:
    case Block::Sigma0:
    case Block::SigmaB:
    case Block::Tau:
    case Block::SigmaAIssue:
    case Block::Sigma0Issue:
      return true;
    default:
      return false;
  }
}

void ParameterLayout::canonicalize(Eigen::Ref<Eigen::VectorXd> values) const {
  for (const auto& grp : groups_) {
    double s = 0.0;
    for (std::size_t f : grp.free) s += values(static_cast<Eigen::Index>(f));
    values(static_cast<Eigen::Index>(grp.derived)) = -s;
  }
}

ParameterLayout param_layout(const ModelSpec& spec) { return ParameterLayout(spec); }

double ParameterSet::operator[](std::string_view name) const {
  const auto i = layout->find(name);
  if (!i) throw std::out_of_range("no parameter named " + std::string(name));
  return values(static_cast<Eigen::Index>(*i));
}

double& ParameterSet::operator[](std::string_view name) {
  const auto i = layout->find(name);
  if (!i) throw std::out_of_range("no parameter named " + std::string(name));
  return values(static_cast<Eigen::Index>(*i));
}

ParameterSet make_parameters(const ModelSpec& spec, Eigen::VectorXd values, Scale scale) {
  auto lay = std::make_shared<const ParameterLayout>(spec);
  check_dim(*lay, values);
  return {std::move(values), std::move(lay), scale};
}

ParameterSet default_parameters(const ModelSpec& spec) {
  auto lay = std::make_shared<const ParameterLayout>(spec);
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(lay->dim()));
  const double sd0 = std::min(0.5, spec.prior.d / 2.0);
  for (std::size_t i : lay->sd_indices()) v(static_cast<Eigen::Index>(i)) = sd0;
  return {std::move(v), std::move(lay), Scale::Constrained};
}

ParameterSet to_unconstrained(const ParameterSet& theta) {
  if (theta.scale != Scale::Constrained) throw std::invalid_argument("to_unconstrained expects constrained scale");
  ParameterSet u = theta;
  u.scale = Scale::Unconstrained;
  const double d = theta.layout->upper();
  for (std::size_t i : theta.layout->sd_indices()) {
    const double s = theta.values(static_cast<Eigen::Index>(i));
    if (!(s > 0.0 && s < d))
      throw NumericalError(theta.layout->name(i) + " = " + format_double(s) + " outside (0, d)");
    u.values(static_cast<Eigen::Index>(i)) = std::log(s) - std::log(d - s);
  }
  return u;
}

ParameterSet from_unconstrained(const ParameterSet& u) {
  if (u.scale != Scale::Unconstrained) throw std::invalid_argument("from_unconstrained expects unconstrained scale");
  ParameterSet theta = u;
  theta.scale = Scale::Constrained;
  const double d = u.layout->upper();
  for (std::size_t i : u.layout->sd_indices())
    theta.values(static_cast<Eigen::Index>(i)) = d * sigmoid(u.values(static_cast<Eigen::Index>(i)));
  return theta;
}

double log_jacobian(const ParameterSet& u) {
  if (u.scale != Scale::Unconstrained) throw std::invalid_argument("log_jacobian expects unconstrained scale");
  const double log_d = std::log(u.layout->upper());
  double lj = 0.0;
  for (std::size_t i : u.layout->sd_indices()) {
    const double x = u.values(static_cast<Eigen::Index>(i));
    lj += log_d + log_sigmoid(x) + log_sigmoid(-x);
  }
  return lj;
}

Model::Model(ModelSpec spec, const DesignMatrix& design)
    : spec_(std::move(spec)),
      layout_(std::make_shared<const ParameterLayout>(spec_)),
      terms_(build_prior_terms(*layout_, spec_.prior)) {
  if (design.num_issues() != spec_.K || design.num_levels() != spec_.G || design.num_trials() != spec_.L)
    throw std::invalid_argument("design does not match model spec dimensions");
  const auto K = static_cast<Eigen::Index>(spec_.K);
  std::map<std::vector<int>, std::size_t> index;
  for (std::size_t i = 0; i < design.rows(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    std::vector<int> key{design.trial_index(r), design.treat(r)};
    key.insert(key.end(), design.row_levels[i].begin(), design.row_levels[i].end());
    auto [it, inserted] = index.emplace(std::move(key), cells_.size());
    if (inserted) {
      Cell c;
      c.trial = static_cast<std::size_t>(design.trial_index(r));
      c.treat = design.treat(r);
      c.levels = design.row_levels[i];
      c.events = Eigen::VectorXd::Zero(K);
      cells_.push_back(std::move(c));
    }
    Cell& c = cells_[it->second];
    c.n += 1.0;
    for (Eigen::Index k = 0; k < K; ++k) c.events(k) += design.Y(r, k);
  }
  const auto& lay = *layout_;
  active_.resize(cells_.size() * spec_.K);
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const Cell& cell = cells_[c];
    for (std::size_t k = 0; k < spec_.K; ++k) {
      auto& a = active_[c * spec_.K + k];
      a.push_back(lay.intercept(k, cell.trial));
      for (int g : cell.levels) a.push_back(lay.alpha(k, static_cast<std::size_t>(g)));
      if (cell.treat) {
        a.push_back(lay.treatment(k, cell.trial));
        for (int g : cell.levels) a.push_back(lay.beta(k, static_cast<std::size_t>(g)));
      }
    }
  }
}

bool Model::sds_interior(const Eigen::VectorXd& theta) const {
  const double d = layout_->upper();
  for (std::size_t i : layout_->sd_indices()) {
    const double s = theta(static_cast<Eigen::Index>(i));
    if (!(s > 0.0 && s < d)) return false;
  }
  return true;
}

double Model::log_likelihood(const Eigen::VectorXd& theta) const {
  check_dim(*layout_, theta);
  double ll = 0.0;
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const Cell& cell = cells_[c];
    for (std::size_t k = 0; k < spec_.K; ++k) {
      double eta = 0.0;
      for (std::size_t j : active(c, k)) eta += theta(static_cast<Eigen::Index>(j));
      const double y = cell.events(static_cast<Eigen::Index>(k));
      ll += y * log_sigmoid(eta) + (cell.n - y) * log_sigmoid(-eta);
    }
  }
  return ll;
}

double Model::log_prior(const Eigen::VectorXd& theta_in) const {
  check_dim(*layout_, theta_in);
  Eigen::VectorXd theta = theta_in;
  layout_->canonicalize(theta);
  if (!sds_interior(theta)) return kNegInf;
  double lp = 0.0;
  for (const auto& t : terms_) {
    const double x = theta(t.x);
    const double mu = t.mu >= 0 ? theta(t.mu) : 0.0;
    const double sd = t.sd >= 0 ? theta(t.sd) : t.sd_const;
    const double r = (x - mu) / sd;
    lp += -std::log(sd) - 0.5 * kLn2Pi - 0.5 * r * r;
  }
  return lp;
}

Evaluation Model::posterior(const Eigen::VectorXd& theta_in, Order order) const {
  check_dim(*layout_, theta_in);
  const auto D = static_cast<Eigen::Index>(layout_->dim());
  Eigen::VectorXd theta = theta_in;
  layout_->canonicalize(theta);
  Evaluation ev;
  if (!sds_interior(theta)) {
    if (order != Order::Value) throw NumericalError("derivatives requested at a non-interior standard deviation");
    ev.value = kNegInf;
    return ev;
  }
  if (order >= Order::Gradient) ev.grad = Eigen::VectorXd::Zero(D);
  if (order == Order::Hessian) ev.hess = Eigen::MatrixXd::Zero(D, D);

  double value = 0.0;
  for (std::size_t c = 0; c < cells_.size(); ++c) {
    const Cell& cell = cells_[c];
    for (std::size_t k = 0; k < spec_.K; ++k) {
      const auto& act = active(c, k);
      double eta = 0.0;
      for (std::size_t j : act) eta += theta(static_cast<Eigen::Index>(j));
      const double y = cell.events(static_cast<Eigen::Index>(k));
      value += y * log_sigmoid(eta) + (cell.n - y) * log_sigmoid(-eta);
      if (order == Order::Value) continue;
      const double p = sigmoid(eta);
      const double resid = y - cell.n * p;
      for (std::size_t j : act) ev.grad(static_cast<Eigen::Index>(j)) += resid;
      if (order != Order::Hessian) continue;
      const double w = cell.n * p * (1.0 - p);
      for (std::size_t a : act)
        for (std::size_t b : act) ev.hess(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) -= w;
    }
  }

  for (const auto& t : terms_) {
    const double x = theta(t.x);
    const double mu = t.mu >= 0 ? theta(t.mu) : 0.0;
    const double s = t.sd >= 0 ? theta(t.sd) : t.sd_const;
    const double r = x - mu;
    const double s2 = s * s;
    value += -std::log(s) - 0.5 * kLn2Pi - 0.5 * r * r / s2;
    if (order == Order::Value) continue;
    ev.grad(t.x) += -r / s2;
    if (t.mu >= 0) ev.grad(t.mu) += r / s2;
    if (t.sd >= 0) ev.grad(t.sd) += -1.0 / s + r * r / (s2 * s);
    if (order != Order::Hessian) continue;
    auto& H = ev.hess;
    H(t.x, t.x) -= 1.0 / s2;
    if (t.mu >= 0) {
      H(t.mu, t.mu) -= 1.0 / s2;
      H(t.x, t.mu) += 1.0 / s2;
      H(t.mu, t.x) += 1.0 / s2;
    }
    if (t.sd >= 0) {
      const double cross = 2.0 * r / (s2 * s);
      H(t.x, t.sd) += cross;
      H(t.sd, t.x) += cross;
      if (t.mu >= 0) {
        H(t.mu, t.sd) -= cross;
        H(t.sd, t.mu) -= cross;
      }
      H(t.sd, t.sd) += 1.0 / s2 - 3.0 * r * r / (s2 * s2);
    }
  }
  ev.value = value;
  fold_derived(*layout_, ev, order);
  return ev;
}

Evaluation Model::target(const Eigen::VectorXd& u, Order order) const {
  check_dim(*layout_, u);
  const double d = layout_->upper();
  const double log_d = std::log(d);
  Eigen::VectorXd theta = u;
  double lj = 0.0;
  for (std::size_t i : layout_->sd_indices()) {
    const auto ii = static_cast<Eigen::Index>(i);
    theta(ii) = d * sigmoid(u(ii));
    lj += log_d + log_sigmoid(u(ii)) + log_sigmoid(-u(ii));
  }
  if (order != Order::Value && !sds_interior(theta))
    throw NumericalError("unconstrained point maps onto the boundary of (0, d)");
  Evaluation ev = posterior(theta, order);
  ev.value += lj;
  if (order == Order::Value) return ev;

  // theta = d s(u): dtheta/du = d s (1 - s), d2theta/du2 = dtheta/du (1 - 2 s).
  for (std::size_t i : layout_->sd_indices()) {
    const auto ii = static_cast<Eigen::Index>(i);
    const double s = sigmoid(u(ii));
    const double t1 = d * s * (1.0 - s);
    const double t2 = t1 * (1.0 - 2.0 * s);
    const double g_theta = ev.grad(ii);
    ev.grad(ii) = g_theta * t1 + (1.0 - 2.0 * s);
    if (order == Order::Hessian) {
      ev.hess.row(ii) *= t1;
      ev.hess.col(ii) *= t1;
      ev.hess(ii, ii) += g_theta * t2 - 2.0 * s * (1.0 - s);
    }
  }
  return ev;
}

double log_likelihood(const ModelSpec& spec, const DesignMatrix& design, const ParameterSet& theta) {
  if (theta.scale != Scale::Constrained) throw std::invalid_argument("log_likelihood expects constrained scale");
  return Model(spec, design).log_likelihood(theta.values);
}

double log_prior(const ModelSpec& spec, const ParameterSet& theta) {
  if (theta.scale != Scale::Constrained) throw std::invalid_argument("log_prior expects constrained scale");
  const ParameterLayout lay(spec);
  check_dim(lay, theta.values);
  Eigen::VectorXd v = theta.values;
  lay.canonicalize(v);
  const double d = lay.upper();
  for (std::size_t i : lay.sd_indices()) {
    const double s = v(static_cast<Eigen::Index>(i));
    if (!(s > 0.0 && s < d)) return kNegInf;
  }
  double lp = 0.0;
  for (const auto& t : build_prior_terms(lay, spec.prior)) {
    const double mu = t.mu >= 0 ? v(t.mu) : 0.0;
    const double sd = t.sd >= 0 ? v(t.sd) : t.sd_const;
    const double r = (v(t.x) - mu) / sd;
    lp += -std::log(sd) - 0.5 * kLn2Pi - 0.5 * r * r;
  }
  return lp;
}

double log_posterior(const ModelSpec& spec, const DesignMatrix& design, const ParameterSet& theta) {
  const double lp = log_prior(spec, theta);
  if (!std::isfinite(lp)) return lp;
  return log_likelihood(spec, design, theta) + lp;
}

Eigen::VectorXd grad_log_posterior(const ModelSpec& spec, const DesignMatrix& design, const ParameterSet& theta) {
  if (theta.scale != Scale::Constrained) throw std::invalid_argument("gradient expects constrained scale");
  return Model(spec, design).posterior(theta.values, Order::Gradient).grad;
}

Eigen::MatrixXd hessian_log_posterior(const ModelSpec& spec, const DesignMatrix& design, const ParameterSet& theta) {
  if (theta.scale != Scale::Constrained) throw std::invalid_argument("Hessian expects constrained scale");
  return Model(spec, design).posterior(theta.values, Order::Hessian).hess;
}

Eigen::VectorXd predict_prob(const ModelSpec& spec, const ParameterSet& theta, const std::vector<int>& levels,
                             int treatment, std::string_view trial) {
  if (theta.scale != Scale::Constrained) throw std::invalid_argument("predict_prob expects constrained scale");
  if (levels.size() != spec.covariate_sizes.size())
    throw std::invalid_argument("predict_prob needs one level per covariate");
  const auto& lay = *theta.layout;
  std::size_t l = 0;
  if (spec.variant == Variant::MetaAnalytic) {
    const auto pos = spec.trial_position(trial);
    if (!pos) throw DataError("unknown trial '" + std::string(trial) + "'");
    l = *pos;
  }
  std::vector<std::size_t> cols;
  std::size_t offset = 0;
  for (std::size_t j = 0; j < levels.size(); ++j) {
    if (levels[j] < 0 || static_cast<std::size_t>(levels[j]) >= spec.covariate_sizes[j])
      throw DataError("invalid level index for covariate " + std::to_string(j));
    cols.push_back(offset + static_cast<std::size_t>(levels[j]));
    offset += spec.covariate_sizes[j];
  }
  const auto& v = theta.values;
  Eigen::VectorXd p(static_cast<Eigen::Index>(spec.K));
  for (std::size_t k = 0; k < spec.K; ++k) {
    double eta = v(static_cast<Eigen::Index>(lay.intercept(k, l)));
    for (auto g : cols) eta += v(static_cast<Eigen::Index>(lay.alpha(k, g)));
    if (treatment) {
      eta += v(static_cast<Eigen::Index>(lay.treatment(k, l)));
      for (auto g : cols) eta += v(static_cast<Eigen::Index>(lay.beta(k, g)));
    }
    p(static_cast<Eigen::Index>(k)) = sigmoid(eta);
  }
  return p;
}

}  // namespace mblr
