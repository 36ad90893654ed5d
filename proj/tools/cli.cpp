#include "mblr/cli.hpp"

#include "mblr/errors.hpp"
#include "mblr/fit.hpp"
#include "mblr/numeric.hpp"
#include "mblr/report.hpp"
#include "mblr/sim.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

namespace mblr {

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

bool has(const std::vector<std::string>& v, std::string_view x) { return std::find(v.begin(), v.end(), x) != v.end(); }

/// Raw option values as typed; resolved into library configs per command.
struct Options {
  std::string data, schema, model = "mblr", method = "laplace";
  double d = PriorConfig{}.d;
  std::string location_prior = location_prior_text(PriorConfig{});
  std::string sum_to_zero = "on";
  std::uint64_t seed = 1;
  std::size_t chains = McmcConfig{}.chains, warmup = McmcConfig{}.warmup, samples = McmcConfig{}.samples;
  std::size_t thin = McmcConfig{}.thin;
  double target_accept = McmcConfig{}.target_accept;
  std::string scheme = "componentwise", precondition = "on";
  std::size_t grid_points = 5;
  bool draws = false;
  std::string scenario, spec;
  std::size_t reps = 0;
  double level = 0.10;
  std::vector<std::string> methods{"laplace", "mcmc"};
  std::string target = "treatment";
  std::string a, b, label_a = "a", label_b = "b", scope = "auto";
  std::string out = ".";
  std::vector<std::string> formats{"csv", "json"};
};

PriorConfig prior_of(const Options& o) {
  PriorConfig p;
  p.d = o.d;
  parse_location_prior(o.location_prior, p);
  p.sum_to_zero = o.sum_to_zero == "on";
  p.check();
  return p;
}

McmcConfig mcmc_of(const Options& o) {
  McmcConfig m;
  m.chains = o.chains;
  m.warmup = o.warmup;
  m.samples = o.samples;
  m.thin = o.thin;
  m.target_accept = o.target_accept;
  m.seed = o.seed;
  m.scheme = parse_block_scheme(o.scheme);
  m.precondition = o.precondition == "on";
  m.check();
  return m;
}

json prior_json(const PriorConfig& p) {
  return {{"d", p.d}, {"location_prior", location_prior_text(p)}, {"sum_to_zero", p.sum_to_zero ? "on" : "off"}};
}

json mcmc_json(const McmcConfig& m) {
  return {{"chains", m.chains},
          {"warmup", m.warmup},
          {"samples", m.samples},
          {"thin", m.thin},
          {"target_accept", m.target_accept},
          {"scheme", std::string(block_scheme_name(m.scheme))},
          {"precondition", m.precondition ? "on" : "off"}};
}

GridSpec geometric_grid(double d, std::size_t n) {
  if (n < 1) throw UsageError("grid needs at least one point per component");
  GridSpec g;
  const double lo = 0.05, hi = 0.9 * d;
  for (auto& axis : g.points) {
    axis.clear();
    if (n == 1) {
      axis.push_back(std::sqrt(lo * hi));
      continue;
    }
    for (std::size_t i = 0; i < n; ++i)
      axis.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1)));
  }
  return g;
}

/// Collects outputs and writes run.json next to them.
class Run {
 public:
  Run(std::string command, const Options& o, std::ostream& out)
      : command_(std::move(command)), dir_(o.out), out_(out) {
    for (const auto& f : o.formats)
      if (f != "csv" && f != "json" && f != "svg") throw UsageError("unknown format '" + f + "'");
    formats_ = o.formats;
  }

  bool wants(std::string_view format) const { return has(formats_, format); }

  void input(const std::string& role, const std::string& path) {
    const std::string bytes = read_file(path);
    inputs_[role] = {{"path", path}, {"fnv1a", hex(fnv1a(bytes))}};
    content_hash_ = fnv1a(bytes, content_hash_);
  }

  json& config() { return config_; }

  /// Fingerprint of the configuration and input contents.
  std::string fingerprint() const { return hex(fnv1a(config_.dump(), content_hash_)); }

  void write(const std::string& name, const std::string& text) {
    write_text(dir_ / name, text);
    outputs_.push_back(name);
    out_ << "wrote " << (dir_ / name).string() << "\n";
  }

  void finish(std::uint64_t seed) {
    json j;
    j["tool"] = "mblr";
    j["version"] = std::string(kVersion);
    j["command"] = command_;
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["seed"] = seed;
    j["fingerprint"] = fingerprint();
    j["outputs"] = outputs_;
    j["libraries"] = {{"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                    std::to_string(EIGEN_MINOR_VERSION)},
                      {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                            std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                      {"cli11", CLI11_VERSION}};
    write_text(dir_ / "run.json", j.dump(2) + "\n");
    out_ << "wrote " << (dir_ / "run.json").string() << "\n";
  }

 private:
  std::string command_;
  fs::path dir_;
  std::ostream& out_;
  std::vector<std::string> formats_;
  json config_ = json::object();
  json inputs_ = json::object();
  std::uint64_t content_hash_ = 0xcbf29ce484222325ULL;
  std::vector<std::string> outputs_;
};

void emit_summary(Run& run, const PosteriorSummary& s, const std::string& stem) {
  if (run.wants("csv")) run.write(stem + ".csv", summary_to_csv(s));
  if (run.wants("json")) run.write(stem + ".json", summary_to_json(s));
  if (run.wants("svg")) run.write(stem + ".svg", summary_to_svg(s));
}

int cmd_validate(const Options& o, std::ostream& out, std::ostream& err) {
  Run run("validate", o, out);
  run.input("data", o.data);
  run.input("schema", o.schema);
  const SafetyDataset data = load_dataset(o.data, o.schema);
  const ValidationReport rep = validate_dataset(data);
  run.write("validation.json", validation_report_to_json(rep, data));
  run.finish(o.seed);
  for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
  for (const auto& a : trial_aliased_covariates(data))
    out << "warning: covariate '" << a << "' is constant within trials (not allowed with ma-mblr)\n";
  if (!rep.ok()) {
    err << "ERROR[data]: " << rep.errors.size() << " validation error(s); first: " << rep.errors.front() << "\n";
    return 2;
  }
  out << "valid: " << data.size() << " records, " << data.num_trials() << " trial(s), "
      << data.schema.num_issues() << " issue(s)\n";
  return 0;
}

int cmd_fit(const Options& o, std::ostream& out) {
  const Variant variant = parse_variant(o.model);
  FitOptions fo;
  fo.method = parse_method(o.method);
  if (fo.method == Method::Grid && variant != Variant::Pooled)
    throw UsageError("grid integration requires --model mblr");
  const PriorConfig prior = prior_of(o);
  fo.mcmc = mcmc_of(o);
  if (fo.method == Method::Grid) {
    fo.grid = geometric_grid(prior.d, o.grid_points);
    fo.grid->check(prior.d);
  }

  Run run("fit", o, out);
  run.input("data", o.data);
  run.input("schema", o.schema);
  auto& c = run.config();
  c["model"] = std::string(variant_name(variant));
  c["method"] = std::string(method_name(fo.method));
  c["prior"] = prior_json(prior);
  if (fo.method == Method::Mcmc) c["mcmc"] = mcmc_json(fo.mcmc);
  if (fo.method == Method::Grid) c["grid_points"] = o.grid_points;
  c["seed"] = o.seed;

  const SafetyDataset data = load_dataset(o.data, o.schema);
  if (variant == Variant::MetaAnalytic)
    if (const auto aliased = trial_aliased_covariates(data); !aliased.empty())
      throw DataError("covariate '" + aliased.front() + "' is constant within trials; trial effects belong to ma-mblr");
  const DesignMatrix dm = build_design(data);
  const Model model(make_model_spec(variant, dm, prior), dm);
  FitResult res = fit(model, fo);
  res.summary.fingerprint = run.fingerprint();
  emit_summary(run, res.summary, "summary");
  if (res.mcmc && o.draws) run.write("draws.csv", draws_to_csv(res.mcmc->chains, model.layout().names()));
  run.finish(o.seed);
  for (const auto& w : res.summary.warnings) out << "warning: " << w << "\n";
  return 0;
}

bool is_simpson_text(const std::string& text) {
  try {
    return json::parse(text).contains("log_or");
  } catch (const json::exception&) {
    return false;
  }
}

int cmd_simulate(const Options& o, std::ostream& out, bool seed_given) {
  Run run("simulate", o, out);
  const std::string scenario = o.scenario.empty() ? "default" : o.scenario;
  const auto builtin = builtin_scenario_names();
  const bool file = scenario != "simpson" && !has(builtin, scenario);
  std::string text;
  if (file) {
    text = read_file(scenario);
    run.input("scenario", scenario);
  }
  if (scenario == "simpson" || (file && is_simpson_text(text))) {
    SimpsonSpec s = file ? parse_simpson_spec(text) : SimpsonSpec::default_spec();
    if (seed_given) s.seed = o.seed;
    run.config()["scenario"] = json::parse(simpson_spec_to_json(s));
    const SimpsonData d = generate_simpson(s);
    run.write("data.csv", dataset_to_csv(d.data));
    run.write("schema.json", schema_to_json(d.data.schema));
    run.write("manifest.json", simpson_manifest_to_json(d.manifest));
    run.write("scenario.json", simpson_spec_to_json(s));
    run.finish(s.seed);
    return 0;
  }
  SimSpec s = file ? parse_sim_spec(text) : builtin_scenario(scenario);
  if (seed_given) s.seed = o.seed;
  run.config()["scenario"] = json::parse(sim_spec_to_json(s));
  const SafetyDataset d = generate_dataset(s);
  run.write("data.csv", dataset_to_csv(d));
  run.write("schema.json", schema_to_json(d.schema));
  const ParameterSet truth = truth_parameters(s);
  std::ostringstream t;
  t << "name,value\n";
  const auto& lay = *truth.layout;
  for (std::size_t i = 0; i < lay.dim(); ++i)
    if (!lay.is_sd(i)) t << lay.name(i) << ',' << format_double(truth.values(static_cast<Eigen::Index>(i))) << '\n';
  run.write("truth.csv", t.str());
  run.write("scenario.json", sim_spec_to_json(s));
  run.finish(s.seed);
  return 0;
}

int cmd_type1(const Options& o, std::ostream& out) {
  Type1Config cfg;
  cfg.replications = o.reps ? o.reps : 500;
  cfg.level = o.level;
  cfg.variant = parse_variant(o.model);
  cfg.methods.clear();
  for (const auto& m : o.methods) cfg.methods.push_back(parse_method(m));
  if (o.target == "treatment") cfg.target = Type1Target::Treatment;
  else if (o.target == "interactions") cfg.target = Type1Target::Interactions;
  else throw UsageError("unknown target '" + o.target + "' (expected treatment or interactions)");
  cfg.seed = o.seed;
  cfg.prior = prior_of(o);
  cfg.mcmc = mcmc_of(o);
  if (has(o.methods, "grid")) cfg.grid = geometric_grid(cfg.prior.d, o.grid_points);
  cfg.check();

  Run run("type1", o, out);
  const std::string scenario = o.scenario.empty() ? "null" : o.scenario;
  if (!has(builtin_scenario_names(), scenario)) run.input("scenario", scenario);
  const SimSpec spec = resolve_scenario(scenario);
  auto& c = run.config();
  c["scenario"] = json::parse(sim_spec_to_json(spec));
  c["model"] = std::string(variant_name(cfg.variant));
  c["methods"] = o.methods;
  c["target"] = o.target;
  c["replications"] = cfg.replications;
  c["level"] = cfg.level;
  c["prior"] = prior_json(cfg.prior);
  if (has(o.methods, "mcmc")) c["mcmc"] = mcmc_json(cfg.mcmc);
  if (cfg.grid) c["grid_points"] = o.grid_points;
  c["seed"] = cfg.seed;

  const Type1Report rep = run_type1(spec, cfg);
  if (run.wants("csv")) run.write("type1.csv", type1_to_csv(rep));
  if (run.wants("json")) run.write("type1.json", type1_to_json(rep));
  if (run.wants("svg")) run.write("type1.svg", type1_to_svg(rep));
  run.finish(cfg.seed);
  for (const auto& m : rep.methods)
    out << method_name(m.method) << ": rate " << format_double(m.rate) << " (mc se " << format_double(m.mc_se)
        << ", " << m.failures << " failed)\n";
  for (const auto& w : rep.warnings) out << "warning: " << w << "\n";
  return 0;
}

int cmd_simpson(const Options& o, std::ostream& out) {
  Run run("simpson", o, out);
  SimpsonSpec spec = SimpsonSpec::default_spec();
  if (!o.spec.empty()) {
    run.input("spec", o.spec);
    spec = parse_simpson_spec(read_file(o.spec));
  }
  const PriorConfig prior = prior_of(o);
  const std::size_t reps = o.reps ? o.reps : 100;
  auto& c = run.config();
  c["spec"] = json::parse(simpson_spec_to_json(spec));
  c["replications"] = reps;
  c["prior"] = prior_json(prior);
  c["seed"] = o.seed;
  const SimpsonStudy st = run_simpson_study(spec, reps, o.seed, prior);
  run.write("manifest.json", simpson_manifest_to_json(st.manifest));
  run.write("simpson.json", simpson_study_to_json(st));
  run.finish(o.seed);
  out << "pooled log-OR (analytic) " << format_double(st.manifest.pooled_log_or) << "; pooled fit wrong sign "
      << format_double(st.pooled_wrong_sign) << ", ma-mblr correct sign " << format_double(st.ma_correct_sign) << "\n";
  return 0;
}

int cmd_compare(const Options& o, std::ostream& out) {
  Run run("compare", o, out);
  run.input("a", o.a);
  run.input("b", o.b);
  const MatchScope scope = parse_match_scope(o.scope);
  auto& c = run.config();
  c["scope"] = o.scope;
  c["label_a"] = o.label_a;
  c["label_b"] = o.label_b;
  const PosteriorSummary a = parse_summary_csv(read_file(o.a));
  const PosteriorSummary b = parse_summary_csv(read_file(o.b));
  const ComparisonReport r = compare_estimates(a, b, scope, o.label_a, o.label_b);
  if (run.wants("csv")) run.write("comparison.csv", comparison_to_csv(r));
  if (run.wants("json")) run.write("comparison.json", comparison_to_json(r));
  if (run.wants("svg")) {
    run.write("comparison.svg", comparison_to_svg(r, PlotFamily::Estimates));
    run.write("comparison_z.svg", comparison_to_svg(r, PlotFamily::ZValues));
  }
  run.finish(0);
  out << r.pairs.size() << " matched; correlation " << format_double(r.value_correlation) << "; median sd ratio "
      << format_double(r.median_sd_ratio) << "\n";
  return 0;
}

void add_prior(CLI::App* app, Options& o) {
  app->add_option("--d", o.d, "Upper bound of the uniform priors on standard deviations")->capture_default_str();
  app->add_option("--location-prior", o.location_prior, "flat or normal:<sd>")->capture_default_str();
  app->add_option("--sum-to-zero", o.sum_to_zero, "Constrain hyper-means per covariate")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
}

void add_mcmc(CLI::App* app, Options& o) {
  app->add_option("--chains", o.chains)->capture_default_str();
  app->add_option("--warmup", o.warmup)->capture_default_str();
  app->add_option("--samples", o.samples)->capture_default_str();
  app->add_option("--thin", o.thin)->capture_default_str();
  app->add_option("--target-accept", o.target_accept)->capture_default_str();
  app->add_option("--scheme", o.scheme)->check(CLI::IsMember({"componentwise", "per-block"}))->capture_default_str();
  app->add_option("--precondition", o.precondition, "Propose along MAP curvature eigenvectors")
      ->check(CLI::IsMember({"on", "off"}))
      ->capture_default_str();
}

void add_output(CLI::App* app, Options& o) {
  app->add_option("--out", o.out, "Output directory")->capture_default_str();
  app->add_option("--format", o.formats, "Comma-separated subset of csv,json,svg")
      ->delimiter(',')
      ->check(CLI::IsMember({"csv", "json", "svg"}))
      ->capture_default_str();
}

}  // namespace

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Multivariate Bayesian logistic regression for clinical safety data", "mblr"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kVersion));

  auto* validate = app.add_subcommand("validate", "Check a dataset against its schema");
  validate->add_option("--data", o.data, "Patient CSV")->required();
  validate->add_option("--schema", o.schema, "Schema JSON")->required();
  add_output(validate, o);

  auto* fitc = app.add_subcommand("fit", "Fit a model and write its posterior summary");
  fitc->add_option("--data", o.data, "Patient CSV")->required();
  fitc->add_option("--schema", o.schema, "Schema JSON")->required();
  fitc->add_option("--model", o.model)->check(CLI::IsMember({"mblr", "ma-mblr"}))->capture_default_str();
  fitc->add_option("--method", o.method)->check(CLI::IsMember({"laplace", "grid", "mcmc"}))->capture_default_str();
  fitc->add_option("--seed", o.seed)->capture_default_str();
  fitc->add_option("--grid-points", o.grid_points, "Geometric grid points per variance component")
      ->capture_default_str();
  fitc->add_flag("--draws", o.draws, "Also write MCMC draws");
  add_prior(fitc, o);
  add_mcmc(fitc, o);
  add_output(fitc, o);

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  auto* sim_seed = sim->add_option("--seed", o.seed, "Overrides the scenario seed");
  sim->add_option("--scenario", o.scenario, "default, null, borrowing, simpson, or a scenario JSON file");
  add_output(sim, o);

  auto* t1 = app.add_subcommand("type1", "Null calibration study");
  t1->add_option("--scenario", o.scenario, "Built-in name or scenario JSON (default null)");
  t1->add_option("--reps", o.reps, "Replications (default 500)");
  t1->add_option("--level", o.level)->capture_default_str();
  t1->add_option("--methods", o.methods)
      ->delimiter(',')
      ->check(CLI::IsMember({"laplace", "grid", "mcmc"}))
      ->capture_default_str();
  t1->add_option("--model", o.model)->check(CLI::IsMember({"mblr", "ma-mblr"}))->capture_default_str();
  t1->add_option("--target", o.target)->check(CLI::IsMember({"treatment", "interactions"}))->capture_default_str();
  t1->add_option("--seed", o.seed)->capture_default_str();
  t1->add_option("--grid-points", o.grid_points)->capture_default_str();
  add_prior(t1, o);
  add_mcmc(t1, o);
  add_output(t1, o);

  auto* simp = app.add_subcommand("simpson", "Pooled versus meta-analytic fits under Simpson's paradox");
  simp->add_option("--spec", o.spec, "Simpson scenario JSON (default built-in)");
  simp->add_option("--reps", o.reps, "Replications (default 100)");
  simp->add_option("--seed", o.seed)->capture_default_str();
  add_prior(simp, o);
  add_output(simp, o);

  auto* cmp = app.add_subcommand("compare", "Compare two summary CSVs");
  cmp->add_option("a", o.a, "First summary CSV")->required();
  cmp->add_option("b", o.b, "Second summary CSV")->required();
  cmp->add_option("--label-a", o.label_a)->capture_default_str();
  cmp->add_option("--label-b", o.label_b)->capture_default_str();
  cmp->add_option("--scope", o.scope)->check(CLI::IsMember({"auto", "all", "locations", "shared"}))->capture_default_str();
  add_output(cmp, o);

  std::vector<std::string> argv(args.rbegin(), args.rend());
  try {
    app.parse(argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << (dynamic_cast<const CLI::CallForVersion*>(&e) ? std::string(kVersion) + "\n" : app.help());
      return 0;
    }
    err << "ERROR[usage]: " << e.what() << "\n";
    return 1;
  }

  try {
    if (*validate) return cmd_validate(o, out, err);
    if (*fitc) return cmd_fit(o, out);
    if (*sim) return cmd_simulate(o, out, sim_seed->count() > 0);
    if (*t1) return cmd_type1(o, out);
    if (*simp) return cmd_simpson(o, out);
    if (*cmp) return cmd_compare(o, out);
  } catch (const UsageError& e) {
    err << "ERROR[usage]: " << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "ERROR[data]: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError& e) {
    err << "ERROR[numerical]: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "ERROR[numerical]: unexpected failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace mblr
