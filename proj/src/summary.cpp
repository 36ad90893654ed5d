#include "mblr/summary.hpp"

#include "mblr/errors.hpp"
#include "mblr/numeric.hpp"

#include <json.hpp>

#include <cmath>
#include <sstream>

namespace mblr {

namespace {

nlohmann::ordered_json number(double x) {
  if (!std::isfinite(x)) return nullptr;
  return x;
}

double parse_number(const std::string& cell, std::size_t row) {
  if (cell == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (cell == "inf") return std::numeric_limits<double>::infinity();
  if (cell == "-inf") return -std::numeric_limits<double>::infinity();
  try {
    std::size_t used = 0;
    const double v = std::stod(cell, &used);
    if (used == cell.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("bad number '" + cell + "' in summary row " + std::to_string(row));
}

}  // namespace

std::string_view method_name(Method m) {
  switch (m) {
    case Method::Laplace: return "laplace";
    case Method::Grid: return "grid";
    case Method::Mcmc: return "mcmc";
  }
  return "?";
}

Method parse_method(std::string_view text) {
  if (text == "laplace") return Method::Laplace;
  if (text == "grid") return Method::Grid;
  if (text == "mcmc") return Method::Mcmc;
  throw UsageError("unknown method '" + std::string(text) + "' (expected laplace, grid or mcmc)");
}

const SummaryRow* PosteriorSummary::find(std::string_view name) const {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

const SummaryRow& PosteriorSummary::at(std::string_view name) const {
  if (const auto* r = find(name)) return *r;
  throw std::out_of_range("summary has no parameter " + std::string(name));
}

SummaryRow normal_row(std::string name, double mean, double sd) {
  SummaryRow r;
  r.name = std::move(name);
  r.mean = mean;
  r.sd = sd;
  r.degenerate = !(sd > 0.0);
  r.z = mean / sd;
  r.lo90 = mean - kZ90 * sd;
  r.hi90 = mean + kZ90 * sd;
  return r;
}

std::string summary_to_csv(const PosteriorSummary& s) {
  std::ostringstream out;
  out << "name,mean,sd,z,lo90,hi90\n";
  for (const auto& r : s.rows) {
    out << r.name << ',' << format_double(r.mean) << ',' << format_double(r.sd) << ',' << format_double(r.z) << ','
        << format_double(r.lo90) << ',' << format_double(r.hi90) << '\n';
  }
  return out.str();
}

std::string summary_to_json(const PosteriorSummary& s) {
  nlohmann::ordered_json j;
  j["method"] = method_name(s.method);
  j["model"] = variant_name(s.variant);
  j["fingerprint"] = s.fingerprint;
  j["warnings"] = s.warnings;
  auto& params = j["parameters"] = nlohmann::ordered_json::array();
  for (const auto& r : s.rows) {
    nlohmann::ordered_json p;
    p["name"] = r.name;
    p["mean"] = number(r.mean);
    p["sd"] = number(r.sd);
    p["z"] = number(r.z);
    p["lo90"] = number(r.lo90);
    p["hi90"] = number(r.hi90);
    if (r.degenerate) p["degenerate"] = true;
    if (std::isfinite(r.ess) || std::isfinite(r.rhat)) {
      p["ess"] = number(r.ess);
      p["rhat"] = number(r.rhat);
    }
    params.push_back(std::move(p));
  }
  return j.dump(2) + "\n";
}

PosteriorSummary parse_summary_csv(const std::string& text, Method method) {
  PosteriorSummary s;
  s.method = method;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty summary file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "name,mean,sd,z,lo90,hi90") throw DataError("summary header must be name,mean,sd,z,lo90,hi90");
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    ++row;
    // Names contain no commas; split from the right to be safe anyway.
    std::vector<std::string> cells;
    std::size_t end = line.size();
    for (int c = 0; c < 5; ++c) {
      const auto pos = line.rfind(',', end - 1);
      if (pos == std::string::npos || end == 0) throw DataError("summary row " + std::to_string(row) + " is short");
      cells.insert(cells.begin(), line.substr(pos + 1, end - pos - 1));
      end = pos;
    }
    SummaryRow r;
    r.name = line.substr(0, end);
    r.mean = parse_number(cells[0], row);
    r.sd = parse_number(cells[1], row);
    r.z = parse_number(cells[2], row);
    r.lo90 = parse_number(cells[3], row);
    r.hi90 = parse_number(cells[4], row);
    r.degenerate = !(r.sd > 0.0);
    s.rows.push_back(std::move(r));
  }
  s.variant = infer_variant(s.rows);
  return s;
}

NameParts split_name(std::string_view name) {
  NameParts p;
  const auto br = name.find('[');
  p.stem = std::string(name.substr(0, br));
  if (br == std::string_view::npos) return p;
  for (std::size_t i = br; i < name.size(); ++i)
    if (name[i] == '[') ++p.indices;
  return p;
}

bool is_sd_name(std::string_view name) {
  const auto stem = split_name(name).stem;
  return stem.rfind("sigma_", 0) == 0 || stem == "tau";
}

Variant infer_variant(const std::vector<SummaryRow>& rows) {
  for (const auto& r : rows) {
    const auto p = split_name(r.name);
    if (p.stem == "alpha0" && p.indices == 2) return Variant::MetaAnalytic;
    if (p.stem == "sigma_A.k") return Variant::MetaAnalytic;
  }
  return Variant::Pooled;
}

}  // namespace mblr
