#include "mblr/data.hpp"

#include "mblr/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace mblr {

namespace {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

// Minimal RFC 4180 field splitter (double-quoted fields, "" escapes).
std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(trim(cur));
  return fields;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  return out + "\"";
}

int parse_binary(const std::string& cell) {
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  return -1;
}

}  // namespace

std::size_t CovariateSchema::num_levels() const {
  std::size_t g = 0;
  for (const auto& c : covariates) g += c.levels.size();
  return g;
}

void CovariateSchema::check() const {
  if (issue_names.empty()) throw DataError("schema declares no issues");
  std::set<std::string> seen;
  for (const auto& c : covariates) {
    if (c.name.empty()) throw DataError("schema has a covariate with an empty name");
    if (!seen.insert(c.name).second) throw DataError("duplicate covariate name '" + c.name + "'");
    if (c.levels.size() < 2) throw DataError("covariate '" + c.name + "' needs at least 2 levels");
    std::set<std::string> lv(c.levels.begin(), c.levels.end());
    if (lv.size() != c.levels.size()) throw DataError("duplicate level in covariate '" + c.name + "'");
  }
  std::set<std::string> issues(issue_names.begin(), issue_names.end());
  if (issues.size() != issue_names.size()) throw DataError("duplicate issue name in schema");
  for (const auto& name : issue_names)
    if (name.empty()) throw DataError("schema has an empty issue name");
}

CovariateSchema parse_schema(const std::string& json_text) {
  CovariateSchema schema;
  try {
    const auto j = nlohmann::json::parse(json_text);
    if (j.contains("covariates")) {
      for (const auto& c : j.at("covariates")) {
        schema.covariates.push_back(
            {c.at("name").get<std::string>(), c.at("levels").get<std::vector<std::string>>()});
      }
    }
    schema.issue_names = j.at("issues").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed schema: ") + e.what());
  }
  schema.check();
  return schema;
}

CovariateSchema load_schema(const std::filesystem::path& path) { return parse_schema(read_file(path)); }

std::string schema_to_json(const CovariateSchema& schema) {
  nlohmann::ordered_json j;
  j["covariates"] = nlohmann::ordered_json::array();
  for (const auto& c : schema.covariates) {
    nlohmann::ordered_json cj;
    cj["name"] = c.name;
    cj["levels"] = c.levels;
    j["covariates"].push_back(cj);
  }
  j["issues"] = schema.issue_names;
  return j.dump(2) + "\n";
}

SafetyDataset parse_dataset(const std::string& csv_text, const CovariateSchema& schema) {
  schema.check();
  std::istringstream in(csv_text);
  std::string line;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("empty file");

  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t trial_col = column("trial");
  const std::size_t treat_col = column("treat");
  std::vector<std::size_t> cov_cols;
  for (const auto& c : schema.covariates) cov_cols.push_back(column(c.name));
  std::vector<std::size_t> issue_cols;
  for (const auto& k : schema.issue_names) issue_cols.push_back(column("y_" + k));

  SafetyDataset data;
  data.schema = schema;
  std::map<std::string, std::size_t> trial_lookup;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw DataError("row " + std::to_string(row) + " has " + std::to_string(fields.size()) +
                      " fields, expected " + std::to_string(header.size()));
    PatientRecord rec;
    const std::string& trial = fields[trial_col];
    if (trial.empty()) throw DataError("missing trial id at row " + std::to_string(row));
    auto [it, inserted] = trial_lookup.emplace(trial, data.trial_ids.size());
    if (inserted) data.trial_ids.push_back(trial);
    rec.trial = it->second;

    rec.treatment = parse_binary(fields[treat_col]);
    if (rec.treatment < 0) throw DataError("non-binary treatment at row " + std::to_string(row));

    for (std::size_t j = 0; j < schema.covariates.size(); ++j) {
      const auto& cov = schema.covariates[j];
      const auto& cell = fields[cov_cols[j]];
      if (cell.empty())
        throw DataError("missing value for covariate '" + cov.name + "' at row " + std::to_string(row));
      const auto lv = std::find(cov.levels.begin(), cov.levels.end(), cell);
      if (lv == cov.levels.end())
        throw DataError("unknown level '" + cell + "' for covariate '" + cov.name + "' at row " +
                        std::to_string(row));
      rec.levels.push_back(static_cast<int>(lv - cov.levels.begin()));
    }
    for (std::size_t k = 0; k < issue_cols.size(); ++k) {
      const int y = parse_binary(fields[issue_cols[k]]);
      if (y < 0) throw DataError("non-binary outcome at row " + std::to_string(row));
      rec.outcomes.push_back(y);
    }
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) throw DataError("empty file");
  return data;
}

SafetyDataset load_dataset(const std::filesystem::path& path, const std::filesystem::path& schema_path) {
  return parse_dataset(read_file(path), load_schema(schema_path));
}

std::string dataset_to_csv(const SafetyDataset& data) {
  std::ostringstream out;
  out << "trial,treat";
  for (const auto& c : data.schema.covariates) out << ',' << csv_field(c.name);
  for (const auto& k : data.schema.issue_names) out << ',' << csv_field("y_" + k);
  out << '\n';
  for (const auto& r : data.records) {
    out << csv_field(data.trial_ids.at(r.trial)) << ',' << r.treatment;
    for (std::size_t j = 0; j < r.levels.size(); ++j)
      out << ',' << csv_field(data.schema.covariates[j].levels.at(static_cast<std::size_t>(r.levels[j])));
    for (int y : r.outcomes) out << ',' << y;
    out << '\n';
  }
  return out.str();
}

void save_dataset(const SafetyDataset& data, const std::filesystem::path& csv_path,
                  const std::filesystem::path& schema_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  std::ofstream sch(schema_path, std::ios::binary);
  if (!csv || !sch) throw DataError("cannot write dataset to " + csv_path.string());
  csv << dataset_to_csv(data);
  sch << schema_to_json(data.schema);
}

ValidationReport validate_dataset(const SafetyDataset& data) {
  ValidationReport rep;
  const auto& schema = data.schema;
  try {
    schema.check();
  } catch (const DataError& e) {
    rep.errors.emplace_back(e.what());
  }
  const std::size_t K = schema.num_issues();
  const std::size_t L = data.num_trials();
  if (L == 0) rep.errors.emplace_back("dataset has no trials");
  if (data.records.empty()) rep.errors.emplace_back("dataset has no records");
  {
    std::set<std::string> ids(data.trial_ids.begin(), data.trial_ids.end());
    if (ids.size() != data.trial_ids.size()) rep.errors.emplace_back("duplicate trial ids");
  }
  rep.trial_arms.assign(L, {});
  rep.issue_events.assign(K, {});

  for (std::size_t i = 0; i < data.records.size(); ++i) {
    const auto& r = data.records[i];
    const std::string where = " in record " + std::to_string(i + 1);
    bool ok = true;
    if (r.trial >= L) {
      rep.errors.push_back("unknown trial index" + where);
      ok = false;
    }
    if (r.treatment != 0 && r.treatment != 1) {
      rep.errors.push_back("non-binary treatment" + where);
      ok = false;
    }
    if (r.levels.size() != schema.covariates.size()) {
      rep.errors.push_back("wrong number of covariate levels" + where);
      ok = false;
    } else {
      for (std::size_t j = 0; j < r.levels.size(); ++j) {
        if (r.levels[j] < 0 || static_cast<std::size_t>(r.levels[j]) >= schema.covariates[j].levels.size()) {
          rep.errors.push_back("invalid level for covariate '" + schema.covariates[j].name + "'" + where);
          ok = false;
        }
      }
    }
    if (r.outcomes.size() != K) {
      rep.errors.push_back("wrong number of outcomes" + where);
      ok = false;
    } else {
      for (int y : r.outcomes) {
        if (y != 0 && y != 1) {
          rep.errors.push_back("non-binary outcome" + where);
          ok = false;
          break;
        }
      }
    }
    if (!ok) continue;
    auto& arms = rep.trial_arms[r.trial];
    (r.treatment ? arms.treated : arms.control) += 1;
    for (std::size_t k = 0; k < K; ++k) {
      if (r.outcomes[k]) (r.treatment ? rep.issue_events[k].treated : rep.issue_events[k].control) += 1;
    }
  }

  for (std::size_t l = 0; l < L; ++l) {
    const auto& a = rep.trial_arms[l];
    if (a.control == 0 || a.treated == 0)
      rep.warnings.push_back("trial " + data.trial_ids[l] + " has a single arm");
  }
  for (std::size_t k = 0; k < K; ++k) {
    const auto& e = rep.issue_events[k];
    if (e.control + e.treated == 0) rep.warnings.push_back("issue " + schema.issue_names[k] + " has no events");
  }
  return rep;
}

std::string validation_report_to_json(const ValidationReport& report, const SafetyDataset& data) {
  nlohmann::ordered_json j;
  j["ok"] = report.ok();
  j["errors"] = report.errors;
  j["warnings"] = report.warnings;
  j["trials"] = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < report.trial_arms.size(); ++l) {
    nlohmann::ordered_json t;
    t["trial"] = l < data.trial_ids.size() ? data.trial_ids[l] : std::to_string(l);
    t["control"] = report.trial_arms[l].control;
    t["treated"] = report.trial_arms[l].treated;
    j["trials"].push_back(t);
  }
  j["issues"] = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < report.issue_events.size(); ++k) {
    nlohmann::ordered_json t;
    t["issue"] = data.schema.issue_names.at(k);
    t["events_control"] = report.issue_events[k].control;
    t["events_treated"] = report.issue_events[k].treated;
    j["issues"].push_back(t);
  }
  return j.dump(2) + "\n";
}

DesignMatrix build_design(const SafetyDataset& data) {
  const auto report = validate_dataset(data);
  if (!report.ok()) throw DataError("dataset failed validation: " + report.errors.front());

  const auto& schema = data.schema;
  const Eigen::Index N = static_cast<Eigen::Index>(data.size());
  const Eigen::Index G = static_cast<Eigen::Index>(schema.num_levels());
  const Eigen::Index K = static_cast<Eigen::Index>(schema.num_issues());

  DesignMatrix dm;
  dm.X = Eigen::MatrixXd::Zero(N, G);
  dm.treat.resize(N);
  dm.trial_index.resize(N);
  dm.Y.resize(N, K);
  dm.issue_names = schema.issue_names;
  dm.trial_ids = data.trial_ids;
  std::vector<int> offsets;
  int offset = 0;
  for (const auto& c : schema.covariates) {
    offsets.push_back(offset);
    dm.covariate_sizes.push_back(c.levels.size());
    for (const auto& lv : c.levels) dm.column_names.push_back(c.name + "=" + lv);
    offset += static_cast<int>(c.levels.size());
  }
  dm.row_levels.resize(data.size());
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& r = data.records[static_cast<std::size_t>(i)];
    dm.treat(i) = r.treatment;
    dm.trial_index(i) = static_cast<int>(r.trial);
    auto& active = dm.row_levels[static_cast<std::size_t>(i)];
    for (std::size_t j = 0; j < r.levels.size(); ++j) {
      const int col = offsets[j] + r.levels[j];
      dm.X(i, col) = 1.0;
      active.push_back(col);
    }
    for (Eigen::Index k = 0; k < K; ++k) dm.Y(i, k) = r.outcomes[static_cast<std::size_t>(k)];
  }
  return dm;
}

std::vector<std::string> trial_aliased_covariates(const SafetyDataset& data) {
  std::vector<std::string> out;
  const std::size_t L = data.num_trials();
  for (std::size_t j = 0; j < data.schema.covariates.size(); ++j) {
    std::vector<int> level_in_trial(L, -1);
    bool constant_within = true;
    for (const auto& r : data.records) {
      int& seen = level_in_trial[r.trial];
      if (seen < 0) seen = r.levels[j];
      else if (seen != r.levels[j]) {
        constant_within = false;
        break;
      }
    }
    if (!constant_within) continue;
    std::set<int> distinct;
    for (int lv : level_in_trial)
      if (lv >= 0) distinct.insert(lv);
    if (distinct.size() >= 2) out.push_back(data.schema.covariates[j].name);
  }
  return out;
}

}  // namespace mblr
