#include "mblr/sim.hpp"

#include "mblr/errors.hpp"
#include "mblr/numeric.hpp"
#include "mblr/parallel.hpp"
#include "mblr/report.hpp"

#include <boost/math/distributions/normal.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

namespace mblr {

namespace {

using json = nlohmann::ordered_json;

std::mt19937_64 make_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x73696d75u};
  return std::mt19937_64(seq);
}

ModelSpec truth_spec(const SimSpec& s) {
  ModelSpec m;
  m.variant = s.truth_variant;
  m.K = s.issues.size();
  m.L = s.trials.size();
  m.issue_names = s.issues;
  for (const auto& t : s.trials) m.trial_ids.push_back(t.id);
  for (const auto& c : s.covariates) {
    m.covariate_sizes.push_back(c.levels.size());
    m.G += c.levels.size();
    for (const auto& l : c.levels) m.level_names.push_back(c.name + "=" + l);
  }
  m.prior.sum_to_zero = false;
  return m;
}

template <typename T>
T get(const json& j, const char* key) {
  if (!j.contains(key)) throw UsageError(std::string("scenario is missing '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw UsageError(std::string("scenario field '") + key + "' has the wrong type");
  }
}

json parse_json(const std::string& text, const char* what) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw UsageError(std::string("malformed ") + what + ": " + e.what());
  }
}

bool is_treatment_name(const std::string& name) {
  const auto parts = split_name(name);
  return parts.stem == "beta0" || parts.stem == "beta" || parts.stem == "B0" || parts.stem == "B";
}

std::vector<double> draws_of(const McmcFit& f, Eigen::Index col) {
  std::vector<double> x;
  for (const auto& c : f.chains)
    for (Eigen::Index r = 0; r < c.constrained.rows(); ++r) x.push_back(c.constrained(r, col));
  std::sort(x.begin(), x.end());
  return x;
}

double quantile_sorted(const std::vector<double>& x, double q) {
  const double h = (static_cast<double>(x.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, x.size() - 1);
  return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

SafetyDataset single_issue(const SafetyDataset& d, std::size_t k) {
  SafetyDataset out = d;
  out.schema.issue_names = {d.schema.issue_names[k]};
  for (auto& r : out.records) r.outcomes = {r.outcomes[k]};
  return out;
}

PosteriorSummary laplace_fit(const SafetyDataset& d, Variant v, const PriorConfig& prior) {
  const auto dm = build_design(d);
  const Model model(make_model_spec(v, dm, prior), dm);
  FitOptions o;
  o.method = Method::Laplace;
  return fit(model, o).summary;
}

}  // namespace

void SimSpec::check() const {
  if (issues.empty()) throw UsageError("scenario needs at least one issue");
  if (trials.empty()) throw UsageError("scenario needs at least one trial");
  for (const auto& t : trials)
    if (t.control < 1 || t.treated < 1) throw UsageError("trial " + t.id + " needs at least one patient per arm");
  for (const auto& c : covariates) {
    if (c.levels.size() < 2) throw UsageError("covariate " + c.name + " needs at least two levels");
    if (c.probs.size() != c.levels.size()) throw UsageError("covariate " + c.name + " needs one probability per level");
    double sum = 0.0;
    for (double p : c.probs) {
      if (!(p >= 0.0)) throw UsageError("covariate " + c.name + " has a negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw UsageError("probabilities of covariate " + c.name + " do not sum to 1");
  }
  schema().check();
  truth_parameters(*this);
}

CovariateSchema SimSpec::schema() const {
  CovariateSchema s;
  for (const auto& c : covariates) s.covariates.push_back({c.name, c.levels});
  s.issue_names = issues;
  return s;
}

SimSpec parse_sim_spec(const std::string& json_text) {
  const json j = parse_json(json_text, "scenario");
  SimSpec s;
  s.name = j.value("name", std::string());
  s.seed = j.value("seed", std::uint64_t{1});
  s.issues = get<std::vector<std::string>>(j, "issues");
  if (j.contains("covariates")) {
    for (const auto& c : j.at("covariates")) {
      SimCovariate cov;
      cov.name = get<std::string>(c, "name");
      cov.levels = get<std::vector<std::string>>(c, "levels");
      cov.probs = c.contains("probs") ? get<std::vector<double>>(c, "probs")
                                      : std::vector<double>(cov.levels.size(), 1.0 / static_cast<double>(cov.levels.size()));
      s.covariates.push_back(std::move(cov));
    }
  }
  for (const auto& t : get<json>(j, "trials"))
    s.trials.push_back({get<std::string>(t, "id"), get<std::size_t>(t, "control"), get<std::size_t>(t, "treated")});
  if (j.contains("truth")) {
    const auto& t = j.at("truth");
    s.truth_variant = parse_variant(t.value("variant", std::string("mblr")));
    if (t.contains("values"))
      for (const auto& [k, v] : t.at("values").items()) s.truth[k] = v.get<double>();
  }
  s.check();
  return s;
}

SimSpec load_sim_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read scenario file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_sim_spec(buf.str());
}

std::string sim_spec_to_json(const SimSpec& s) {
  json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["issues"] = s.issues;
  j["covariates"] = json::array();
  for (const auto& c : s.covariates) j["covariates"].push_back({{"name", c.name}, {"levels", c.levels}, {"probs", c.probs}});
  j["trials"] = json::array();
  for (const auto& t : s.trials) j["trials"].push_back({{"id", t.id}, {"control", t.control}, {"treated", t.treated}});
  json values = json::object();
  for (const auto& [k, v] : s.truth) values[k] = v;
  j["truth"] = {{"variant", std::string(variant_name(s.truth_variant))}, {"values", values}};
  return j.dump(2) + "\n";
}

SimSpec builtin_scenario(std::string_view name) {
  SimSpec s;
  s.name = std::string(name);
  if (name == "default") {
    s.seed = 20240611;
    s.issues = {"nausea", "headache", "dizziness", "fatigue", "rash"};
    s.covariates = {{"sex", {"F", "M"}, {0.5, 0.5}}, {"age", {"18-44", "45-64", "65+"}, {0.35, 0.4, 0.25}}};
    s.trials = {{"T1", 340, 340}, {"T2", 330, 330}, {"T3", 330, 330}};
    s.truth_variant = Variant::MetaAnalytic;
    const std::vector<double> a0{-2.0, -1.6, -2.4, -1.9, -2.8};
    const std::vector<double> b0{0.5, 0.2, 0.0, 0.3, 0.7};
    for (std::size_t k = 0; k < s.issues.size(); ++k) {
      s.truth["alpha0[" + s.issues[k] + "]"] = a0[k];
      s.truth["beta0[" + s.issues[k] + "]"] = b0[k];
      s.truth["alpha0[" + s.issues[k] + "][T1]"] = a0[k] + 0.2;
      s.truth["alpha0[" + s.issues[k] + "][T3]"] = a0[k] - 0.2;
    }
    s.truth["alpha[nausea][sex=F]"] = 0.3;
    s.truth["alpha[dizziness][age=65+]"] = 0.4;
    s.truth["alpha[fatigue][age=65+]"] = 0.3;
    s.truth["alpha[fatigue][age=18-44]"] = -0.2;
    s.truth["beta[nausea][age=65+]"] = 0.3;
    s.truth["beta[rash][sex=F]"] = 0.2;
  } else if (name == "null") {
    s.seed = 20240612;
    s.issues = {"nausea", "headache"};
    s.trials = {{"A", 150, 150}, {"B", 150, 150}};
    s.truth_variant = Variant::Pooled;
    s.truth["alpha0[nausea]"] = -1.7;
    s.truth["alpha0[headache]"] = -1.2;
  } else if (name == "borrowing") {
    s.seed = 20240613;
    s.issues = {"severe", "nausea", "headache", "dizziness", "fatigue"};
    s.trials = {{"T1", 1000, 1000}};
    s.truth_variant = Variant::Pooled;
    s.truth["alpha0[severe]"] = logit(0.01);
    s.truth["beta0[severe]"] = 1.2;
    for (const char* k : {"nausea", "headache", "dizziness", "fatigue"}) {
      s.truth[std::string("alpha0[") + k + "]"] = -1.7;
      s.truth[std::string("beta0[") + k + "]"] = 0.3;
    }
  } else {
    throw UsageError("unknown scenario '" + std::string(name) + "'");
  }
  s.check();
  return s;
}

std::vector<std::string> builtin_scenario_names() { return {"default", "null", "borrowing"}; }

SimSpec resolve_scenario(const std::string& name_or_path) {
  const auto names = builtin_scenario_names();
  if (std::find(names.begin(), names.end(), name_or_path) != names.end()) return builtin_scenario(name_or_path);
  return load_sim_spec(name_or_path);
}

ParameterSet truth_parameters(const SimSpec& s) {
  const ModelSpec spec = truth_spec(s);
  ParameterSet p = default_parameters(spec);
  const auto& lay = *p.layout;
  for (const auto& [name, v] : s.truth) {
    const auto i = lay.find(name);
    if (!i) throw UsageError("truth names unknown parameter '" + name + "'");
    if (lay.is_sd(*i)) continue;
    p.values(static_cast<Eigen::Index>(*i)) = v;
  }
  if (spec.variant == Variant::MetaAnalytic) {
    for (std::size_t k = 0; k < spec.K; ++k)
      for (std::size_t l = 0; l < spec.L; ++l) {
        if (!s.truth.count(lay.name(lay.alpha0_trial(k, l))))
          p.values(static_cast<Eigen::Index>(lay.alpha0_trial(k, l))) = p.values(static_cast<Eigen::Index>(lay.alpha0(k)));
        if (!s.truth.count(lay.name(lay.beta0_trial(k, l))))
          p.values(static_cast<Eigen::Index>(lay.beta0_trial(k, l))) = p.values(static_cast<Eigen::Index>(lay.beta0(k)));
      }
  }
  return p;
}

SafetyDataset generate_dataset(const SimSpec& spec) { return generate_dataset(spec, spec.seed); }

SafetyDataset generate_dataset(const SimSpec& spec, std::uint64_t seed) {
  const ModelSpec ms = truth_spec(spec);
  const ParameterSet truth = truth_parameters(spec);
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  SafetyDataset d;
  d.schema = spec.schema();
  for (const auto& t : spec.trials) d.trial_ids.push_back(t.id);
  for (std::size_t l = 0; l < spec.trials.size(); ++l) {
    const auto& t = spec.trials[l];
    for (int arm = 0; arm < 2; ++arm) {
      const std::size_t n = arm ? t.treated : t.control;
      for (std::size_t i = 0; i < n; ++i) {
        PatientRecord r;
        r.trial = l;
        r.treatment = arm;
        for (const auto& c : spec.covariates) {
          const double u = unif(rng);
          double acc = 0.0;
          int level = static_cast<int>(c.probs.size()) - 1;
          for (std::size_t v = 0; v < c.probs.size(); ++v) {
            acc += c.probs[v];
            if (u < acc) {
              level = static_cast<int>(v);
              break;
            }
          }
          r.levels.push_back(level);
        }
        const Eigen::VectorXd p = predict_prob(ms, truth, r.levels, arm, t.id);
        for (Eigen::Index k = 0; k < p.size(); ++k) r.outcomes.push_back(unif(rng) < p(k) ? 1 : 0);
        d.records.push_back(std::move(r));
      }
    }
  }
  return d;
}

std::uint64_t replication_seed(std::uint64_t master, std::size_t index) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (static_cast<std::uint64_t>(index) + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

void Type1Config::check() const {
  if (!(level > 0.0 && level < 1.0)) throw UsageError("level must lie in (0, 1)");
  if (replications < 50) throw UsageError("type-I studies need at least 50 replications");
  if (methods.empty()) throw UsageError("no methods selected");
  for (Method m : methods) {
    if (m == Method::Grid && variant != Variant::Pooled) throw UsageError("grid integration requires --model mblr");
    if (m == Method::Mcmc) {
      mcmc.check();
      if (mcmc.chains < 2) throw UsageError("mcmc decisions need at least 2 chains for diagnostics");
    }
  }
  prior.check();
}

const Type1MethodResult& Type1Report::at(Method m) const {
  for (const auto& r : methods)
    if (r.method == m) return r;
  throw std::out_of_range("type-I report has no method " + std::string(method_name(m)));
}

bool reject_z(double z, double level) {
  if (level == 0.10) return std::abs(z) > kZ90;
  const boost::math::normal_distribution<double> n;
  return std::abs(z) > boost::math::quantile(n, 1.0 - level / 2.0);
}

bool reject_interval(double lo, double hi) { return lo > 0.0 || hi < 0.0; }

Type1Report run_type1(const SimSpec& null_spec, const Type1Config& cfg) {
  cfg.check();
  for (const auto& [name, v] : null_spec.truth)
    if (is_treatment_name(name) && v != 0.0)
      throw UsageError("null scenario has a non-zero treatment parameter " + name);
  if (cfg.target == Type1Target::Interactions && null_spec.covariates.empty())
    throw UsageError("interaction targets need a scenario with covariates");

  struct Outcome {
    bool failed = false;
    std::size_t decisions = 0, rejections = 0;
  };
  const std::size_t R = cfg.replications, M = cfg.methods.size();
  std::vector<std::vector<Outcome>> out(R, std::vector<Outcome>(M));

  parallel_for(R, [&](std::size_t r) {
    const std::uint64_t seed = replication_seed(cfg.seed, r);
    const SafetyDataset data = generate_dataset(null_spec, seed);
    const DesignMatrix dm = build_design(data);
    const Model model(make_model_spec(cfg.variant, dm, cfg.prior), dm);
    const auto& lay = model.layout();
    std::vector<std::size_t> targets;
    for (std::size_t k = 0; k < lay.K(); ++k) {
      if (cfg.target == Type1Target::Treatment) {
        targets.push_back(lay.beta0(k));
      } else {
        for (std::size_t g = 0; g < lay.G(); ++g) targets.push_back(lay.beta(k, g));
      }
    }
    for (std::size_t m = 0; m < M; ++m) {
      Outcome& o = out[r][m];
      FitOptions fo;
      fo.method = cfg.methods[m];
      fo.grid = cfg.grid;
      fo.mcmc = cfg.mcmc;
      fo.mcmc.seed = seed;
      try {
        const FitResult f = fit(model, fo);
        for (std::size_t i : targets) {
          const auto& row = f.summary.rows[i];
          bool reject = false;
          if (fo.method == Method::Mcmc) {
            const auto& d = f.mcmc->diagnostics;
            const auto ii = static_cast<Eigen::Index>(i);
            if (!(d.rhat(ii) < 1.05) || !(d.ess(ii) > 100.0)) throw NumericalError("diagnostics not met");
            const auto x = draws_of(*f.mcmc, ii);
            reject = reject_interval(quantile_sorted(x, cfg.level / 2.0), quantile_sorted(x, 1.0 - cfg.level / 2.0));
          } else {
            if (!(row.sd > 0.0)) throw NumericalError("degenerate posterior sd");
            reject = reject_z(row.z, cfg.level);
          }
          ++o.decisions;
          if (reject) ++o.rejections;
        }
      } catch (const NumericalError&) {
        o = Outcome{};
        o.failed = true;
      }
    }
  });

  Type1Report rep;
  rep.scenario = null_spec.name;
  rep.level = cfg.level;
  rep.replications = R;
  std::vector<bool> all_ok(R, true);
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t m = 0; m < M; ++m)
      if (out[r][m].failed) all_ok[r] = false;
  rep.paired_replications = static_cast<std::size_t>(std::count(all_ok.begin(), all_ok.end(), true));
  for (std::size_t m = 0; m < M; ++m) {
    Type1MethodResult res;
    res.method = cfg.methods[m];
    res.replications = R;
    for (std::size_t r = 0; r < R; ++r) {
      const auto& o = out[r][m];
      if (o.failed) {
        ++res.failures;
        continue;
      }
      res.decisions += o.decisions;
      res.rejections += o.rejections;
      if (all_ok[r]) {
        res.paired_decisions += o.decisions;
        res.paired_rejections += o.rejections;
      }
    }
    if (res.decisions) res.rate = static_cast<double>(res.rejections) / static_cast<double>(res.decisions);
    if (res.paired_decisions)
      res.paired_rate = static_cast<double>(res.paired_rejections) / static_cast<double>(res.paired_decisions);
    // Decisions within a replication are correlated; count replications.
    res.mc_se = std::sqrt(res.rate * (1.0 - res.rate) / static_cast<double>(R - res.failures));
    if (static_cast<double>(res.failures) > 0.10 * static_cast<double>(R))
      throw NumericalError(std::string(method_name(res.method)) + ": " + std::to_string(res.failures) + " of " +
                           std::to_string(R) + " fits failed (more than 10%)");
    if (res.failures)
      rep.warnings.push_back(std::string(method_name(res.method)) + ": " + std::to_string(res.failures) +
                             " failed fits excluded");
    rep.methods.push_back(res);
  }
  return rep;
}

SimpsonSpec SimpsonSpec::default_spec() {
  SimpsonSpec s;
  s.baselines = {logit(0.05), logit(0.30)};
  s.allocations = {0.9, 0.1};
  s.log_or = 0.4;
  s.sizes = {2000, 2000};
  s.seed = 20240614;
  return s;
}

void SimpsonSpec::check() const {
  const std::size_t L = trial_ids.size();
  if (L < 2) throw UsageError("Simpson scenario needs at least two trials");
  if (baselines.size() != L || allocations.size() != L || sizes.size() != L)
    throw UsageError("Simpson scenario needs one baseline, allocation and size per trial");
  for (std::size_t l = 0; l < L; ++l) {
    if (!std::isfinite(baselines[l])) throw UsageError("Simpson baselines must be finite");
    if (!(allocations[l] > 0.0 && allocations[l] < 1.0)) throw UsageError("Simpson allocations must lie in (0, 1)");
    const auto treated = static_cast<std::size_t>(std::llround(static_cast<double>(sizes[l]) * allocations[l]));
    if (treated < 1 || treated >= sizes[l]) throw UsageError("Simpson trial " + trial_ids[l] + " has an empty arm");
  }
  if (!std::isfinite(log_or)) throw UsageError("Simpson log odds ratio must be finite");
}

SimpsonSpec parse_simpson_spec(const std::string& json_text) {
  const json j = parse_json(json_text, "Simpson scenario");
  SimpsonSpec s;
  s.trial_ids.clear();
  s.sizes.clear();
  s.issue = j.value("issue", std::string("ae"));
  s.log_or = get<double>(j, "log_or");
  s.seed = j.value("seed", std::uint64_t{1});
  for (const auto& t : get<json>(j, "trials")) {
    s.trial_ids.push_back(get<std::string>(t, "id"));
    if (t.contains("baseline_rate")) s.baselines.push_back(logit(get<double>(t, "baseline_rate")));
    else s.baselines.push_back(get<double>(t, "baseline"));
    s.allocations.push_back(get<double>(t, "allocation"));
    s.sizes.push_back(get<std::size_t>(t, "size"));
  }
  s.check();
  return s;
}

std::string simpson_spec_to_json(const SimpsonSpec& s) {
  json j;
  j["issue"] = s.issue;
  j["log_or"] = s.log_or;
  j["seed"] = s.seed;
  j["trials"] = json::array();
  for (std::size_t l = 0; l < s.trial_ids.size(); ++l)
    j["trials"].push_back({{"id", s.trial_ids[l]},
                           {"baseline", s.baselines[l]},
                           {"allocation", s.allocations[l]},
                           {"size", s.sizes[l]}});
  return j.dump(2) + "\n";
}

SimpsonManifest simpson_manifest(const SimpsonSpec& s) {
  s.check();
  SimpsonManifest m;
  m.within_log_or = s.log_or;
  double nt = 0.0, nc = 0.0, et = 0.0, ec = 0.0;
  for (std::size_t l = 0; l < s.trial_ids.size(); ++l) {
    const double treated = static_cast<double>(std::llround(static_cast<double>(s.sizes[l]) * s.allocations[l]));
    const double control = static_cast<double>(s.sizes[l]) - treated;
    m.control_rate.push_back(sigmoid(s.baselines[l]));
    m.treated_rate.push_back(sigmoid(s.baselines[l] + s.log_or));
    nt += treated;
    nc += control;
    et += treated * m.treated_rate.back();
    ec += control * m.control_rate.back();
  }
  m.pooled_log_or = logit(et / nt) - logit(ec / nc);
  if (!(s.log_or != 0.0 && m.pooled_log_or * s.log_or < 0.0))
    throw UsageError("scenario shows no Simpson reversal: within-trial log-OR " + format_double(s.log_or) +
                     " (OR " + format_double(std::exp(s.log_or)) + "), arm-pooled log-OR " +
                     format_double(m.pooled_log_or) + " (OR " + format_double(std::exp(m.pooled_log_or)) + ")");
  return m;
}

std::string simpson_manifest_to_json(const SimpsonManifest& m) {
  json j;
  j["within_log_or"] = m.within_log_or;
  j["pooled_log_or"] = m.pooled_log_or;
  j["treated_rate"] = m.treated_rate;
  j["control_rate"] = m.control_rate;
  return j.dump(2) + "\n";
}

SimpsonData generate_simpson(const SimpsonSpec& spec) { return generate_simpson(spec, spec.seed); }

SimpsonData generate_simpson(const SimpsonSpec& spec, std::uint64_t seed) {
  SimpsonData out;
  out.manifest = simpson_manifest(spec);
  auto rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  auto& d = out.data;
  d.schema.issue_names = {spec.issue};
  d.trial_ids = spec.trial_ids;
  for (std::size_t l = 0; l < spec.trial_ids.size(); ++l) {
    const auto treated = static_cast<std::size_t>(std::llround(static_cast<double>(spec.sizes[l]) * spec.allocations[l]));
    for (int arm = 0; arm < 2; ++arm) {
      const std::size_t n = arm ? treated : spec.sizes[l] - treated;
      const double p = arm ? out.manifest.treated_rate[l] : out.manifest.control_rate[l];
      for (std::size_t i = 0; i < n; ++i) d.records.push_back({l, arm, {}, {unif(rng) < p ? 1 : 0}});
    }
  }
  return out;
}

SimpsonStudy run_simpson_study(const SimpsonSpec& spec, std::size_t replications, std::uint64_t seed,
                               const PriorConfig& prior) {
  SimpsonStudy st;
  st.manifest = simpson_manifest(spec);
  st.replicates.resize(replications);
  const std::string name = "beta0[" + spec.issue + "]";
  parallel_for(replications, [&](std::size_t r) {
    auto& rep = st.replicates[r];
    rep.seed = replication_seed(seed, r);
    const auto data = generate_simpson(spec, rep.seed).data;
    try {
      rep.pooled_estimate = laplace_fit(data, Variant::Pooled, prior).at(name).mean;
      rep.ma_estimate = laplace_fit(data, Variant::MetaAnalytic, prior).at(name).mean;
    } catch (const NumericalError&) {
      rep.failed = true;
    }
  });
  std::size_t ok = 0, wrong = 0, correct = 0, both = 0;
  const double sign = spec.log_or > 0 ? 1.0 : -1.0;
  for (const auto& r : st.replicates) {
    if (r.failed) {
      ++st.failures;
      continue;
    }
    ++ok;
    const bool w = r.pooled_estimate * sign < 0.0;
    const bool c = r.ma_estimate * sign > 0.0;
    wrong += w;
    correct += c;
    both += w && c;
  }
  if (ok) {
    st.pooled_wrong_sign = static_cast<double>(wrong) / static_cast<double>(ok);
    st.ma_correct_sign = static_cast<double>(correct) / static_cast<double>(ok);
    st.both = static_cast<double>(both) / static_cast<double>(ok);
  }
  return st;
}

BorrowingStudy run_borrowing_study(const SimSpec& spec, const std::string& rare_issue, std::size_t replications,
                                   std::uint64_t seed, const PriorConfig& prior) {
  const auto it = std::find(spec.issues.begin(), spec.issues.end(), rare_issue);
  if (it == spec.issues.end()) throw UsageError("unknown rare issue '" + rare_issue + "'");
  if (spec.issues.size() < 2) throw UsageError("borrowing needs at least two issues");
  const auto rare = static_cast<std::size_t>(it - spec.issues.begin());

  BorrowingStudy st;
  st.rare_issue = rare_issue;
  st.replicates.resize(replications);
  parallel_for(replications, [&](std::size_t r) {
    auto& rep = st.replicates[r];
    rep.seed = replication_seed(seed, r);
    const auto data = generate_dataset(spec, rep.seed);
    try {
      std::vector<PosteriorSummary> indep;
      for (std::size_t k = 0; k < spec.issues.size(); ++k)
        indep.push_back(laplace_fit(single_issue(data, k), Variant::Pooled, prior));
      const auto joint = laplace_fit(data, Variant::Pooled, prior);
      const auto table = shrinkage_table(indep, joint);
      rep.independent = table[rare].independent;
      rep.joint = table[rare].joint;
      rep.shrinkage = table[rare].shrinkage;
      rep.largest = true;
      for (std::size_t k = 0; k < table.size(); ++k)
        if (k != rare && std::abs(table[k].shrinkage) > std::abs(rep.shrinkage)) rep.largest = false;
    } catch (const NumericalError&) {
      rep.failed = true;
    }
  });
  std::size_t ok = 0, pos = 0, largest = 0;
  for (const auto& r : st.replicates) {
    if (r.failed) {
      ++st.failures;
      continue;
    }
    ++ok;
    pos += r.shrinkage > 0.0;
    largest += r.largest;
  }
  if (ok) {
    st.positive_fraction = static_cast<double>(pos) / static_cast<double>(ok);
    st.largest_fraction = static_cast<double>(largest) / static_cast<double>(ok);
  }
  return st;
}

}  // namespace mblr
