#include "statetrait/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "statetrait/error.hpp"
#include "statetrait/text.hpp"

namespace statetrait::report {

using nlohmann::json;
namespace ps = psychometrics;

Format parse_format(std::string_view name) {
  if (name == "csv") return Format::Csv;
  if (name == "json") return Format::Json;
  if (name == "svg-heatmap" || name == "svg") return Format::SvgHeatmap;
  throw ConfigError("unknown report format '" + std::string(name) + "'");
}

std::string extension(Format f) {
  switch (f) {
    case Format::Csv: return ".csv";
    case Format::Json: return ".json";
    case Format::SvgHeatmap: return ".svg";
  }
  return "";
}

namespace {

void csv_cell(std::string& out, const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) {
    out += s;
    return;
  }
  out += '"';
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
}

void csv_row(std::string& out, const std::vector<std::string>& cells) {
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) out += ',';
    csv_cell(out, cells[i]);
  }
  out += '\n';
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

double parse_cell(const std::string& s) {
  if (s == "NA" || s.empty()) return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError(0, "heatmap cell is not numeric: '" + s + "'");
  return v;
}

}  // namespace

std::string to_csv(const Table& t) {
  std::string out;
  csv_row(out, t.columns);
  for (const auto& r : t.rows) {
    if (r.size() != t.columns.size()) throw PreconditionError("table row width differs from header");
    csv_row(out, r);
  }
  return out;
}

json to_json(const Table& t) { return json{{"columns", t.columns}, {"rows", t.rows}}; }

Table table_from_json(const json& j) {
  Table t;
  try {
    t.columns = j.at("columns").get<std::vector<std::string>>();
    t.rows = j.at("rows").get<std::vector<std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw ValidationError(0, std::string("table JSON: ") + e.what());
  }
  for (const auto& r : t.rows)
    if (r.size() != t.columns.size()) throw ValidationError(0, "table JSON: row width differs from header");
  return t;
}

std::string num(double v, int digits) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return text::fixed(v, digits);
}

std::string num(const std::optional<double>& v, int digits) { return v ? num(*v, digits) : "NA"; }

Heatmap heatmap_from_table(const Table& t, std::string title) {
  if (t.columns.size() < 2) throw PreconditionError("heatmap needs a label column and at least one value column");
  Heatmap h;
  h.title = std::move(title);
  h.column_labels.assign(t.columns.begin() + 1, t.columns.end());
  h.values.resize(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(h.column_labels.size()));
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    h.row_labels.push_back(t.rows[i][0]);
    for (std::size_t j = 1; j < t.columns.size(); ++j)
      h.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j - 1)) = parse_cell(t.rows[i][j]);
  }
  return h;
}

std::string render_svg_heatmap(const Heatmap& h, int digits) {
  const auto nr = static_cast<std::size_t>(h.values.rows()), nc = static_cast<std::size_t>(h.values.cols());
  if (nr != h.row_labels.size() || nc != h.column_labels.size())
    throw PreconditionError("heatmap labels do not match the value matrix");
  double limit = 0;
  for (Eigen::Index i = 0; i < h.values.size(); ++i)
    if (std::isfinite(h.values(i))) limit = std::max(limit, std::abs(h.values(i)));
  if (limit == 0) limit = 1;

  constexpr int cell_w = 64, cell_h = 28, label_w = 180, header_h = 120, title_h = 30;
  const int width = label_w + static_cast<int>(nc) * cell_w + 10;
  const int height = title_h + header_h + static_cast<int>(nr) * cell_h + 10;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s << "<text class=\"title\" x=\"10\" y=\"20\" font-size=\"14\">" << xml_escape(h.title) << "</text>\n";
  for (std::size_t j = 0; j < nc; ++j) {
    const int x = label_w + static_cast<int>(j) * cell_w + cell_w / 2;
    const int y = title_h + header_h - 6;
    s << "<text class=\"col\" x=\"" << x << "\" y=\"" << y << "\" transform=\"rotate(-60 " << x << ' ' << y << ")\">"
      << xml_escape(h.column_labels[j]) << "</text>\n";
  }
  for (std::size_t i = 0; i < nr; ++i) {
    const int y = title_h + header_h + static_cast<int>(i) * cell_h;
    s << "<text class=\"row\" x=\"" << label_w - 6 << "\" y=\"" << y + cell_h / 2 + 4 << "\" text-anchor=\"end\">"
      << xml_escape(h.row_labels[i]) << "</text>\n";
    for (std::size_t j = 0; j < nc; ++j) {
      const double v = h.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const int x = label_w + static_cast<int>(j) * cell_w;
      int r = 200, g = 200, b = 200;
      if (std::isfinite(v)) {
        const double t = std::clamp(v / limit, -1.0, 1.0);
        const int fade = static_cast<int>(std::lround(255.0 * (1.0 - std::abs(t))));
        if (t >= 0) {
          r = 255; g = fade; b = fade;
        } else {
          r = fade; g = fade; b = 255;
        }
      }
      s << "<rect class=\"cell\" x=\"" << x << "\" y=\"" << y << "\" width=\"" << cell_w << "\" height=\"" << cell_h
        << "\" fill=\"rgb(" << r << ',' << g << ',' << b << ")\" stroke=\"white\"/>\n";
      s << "<text class=\"value\" x=\"" << x + cell_w / 2 << "\" y=\"" << y + cell_h / 2 + 4
        << "\" text-anchor=\"middle\">" << num(v, digits) << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

std::string emit(const Table& t, Format f, const std::string& title) {
  switch (f) {
    case Format::Csv: return to_csv(t);
    case Format::Json: return to_json(t).dump(2) + "\n";
    case Format::SvgHeatmap: return render_svg_heatmap(heatmap_from_table(t, title));
  }
  throw ConfigError("unknown report format");
}

// ---------------------------------------------------------------------------

Table decomposition_summary_table(std::span<const ps::VarianceDecomposition> d) {
  Table t{{"method", "mean_icc", "icc_min", "icc_max", "n_below_threshold", "n_dimensions", "mean_ospe"}, {}};
  for (const auto& m : d)
    t.rows.push_back({m.method, num(m.mean_icc), num(m.min_icc), num(m.max_icc), std::to_string(m.n_below_threshold),
                      std::to_string(m.dimensions.size()), num(m.mean_ospe)});
  return t;
}

Table decomposition_dimension_table(std::span<const ps::VarianceDecomposition> d) {
  Table t{{"method", "dimension", "icc", "ospe", "var_between", "var_within", "clamped", "state_dominant"}, {}};
  for (const auto& m : d)
    for (const auto& x : m.dimensions)
      t.rows.push_back({m.method, x.dimension, num(x.icc), num(x.ospe), num(x.var_between), num(x.var_within),
                        x.clamped ? "true" : "false", x.icc < m.threshold ? "true" : "false"});
  return t;
}

Table mtmm_table(const ps::MtmmResult& m, std::span<const std::string> dimensions) {
  if (static_cast<std::size_t>(m.r.rows()) != dimensions.size() || m.r.rows() != m.r.cols())
    throw PreconditionError("MTMM matrix does not match the dimension list");
  Table t;
  t.columns.push_back("lex_dimension");
  for (const auto& d : dimensions) t.columns.push_back("sem." + d);
  for (std::size_t i = 0; i < dimensions.size(); ++i) {
    std::vector<std::string> row{"lex." + dimensions[i]};
    for (std::size_t j = 0; j < dimensions.size(); ++j)
      row.push_back(num(m.r(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table regression_table(std::span<const HypothesisFit> fits, std::span<const std::string> methods) {
  Table t{{"pattern", "context", "dimension"}, {}};
  for (const auto& m : methods)
    for (const char* c : {"_beta", "_se", "_wald_ci_low", "_wald_ci_high", "_p_wald"}) t.columns.push_back(m + c);
  for (const auto& f : fits) {
    std::vector<std::string> row{f.pattern, f.context, f.dimension};
    for (const auto& m : methods) {
      const auto it = std::find_if(f.by_method.begin(), f.by_method.end(), [&](const auto& p) { return p.first == m; });
      if (it == f.by_method.end()) {
        row.insert(row.end(), 5, "NA");
        continue;
      }
      const auto& c = it->second;
      row.insert(row.end(), {num(c.estimate), num(c.std_error), num(c.ci_low), num(c.ci_high), num(c.p_value)});
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table sensitivity_model_table(const audit::SensitivityReport& r) {
  Table t{{"model", "mean_similarity", "sd", "n", "baseline_deviation", "interpretation"}, {}};
  for (const auto& m : r.models)
    t.rows.push_back({m.model, num(m.similarity.mean), num(m.similarity.sd), std::to_string(m.similarity.n),
                      num(m.baseline_deviation), m.interpretation});
  return t;
}

namespace {

std::vector<std::string> anova_row(const std::string& name, const std::optional<ps::AnovaResult>& a,
                                   const std::string& yes, const std::string& no) {
  if (!a) return {name, "F", "NA", "NA", "NA", "NA", "NA", "skipped"};
  const bool sig = !a->degenerate && a->p < 0.05;
  return {name, "F", a->infinite_f ? "inf" : num(a->f), num(a->df1), num(a->df2), a->degenerate ? "NA" : num(a->p),
          num(a->eta_squared), a->degenerate ? "degenerate" : sig ? yes : no};
}

}  // namespace

Table sensitivity_test_table(const audit::SensitivityReport& r) {
  Table t{{"test", "statistic_name", "statistic", "df1", "df2", "p_value", "effect", "interpretation"}, {}};
  const auto& it = r.identity_test;
  t.rows.push_back({"similarity_vs_identity", "t", num(it.t), num(it.df), "NA", num(it.p), num(it.mean),
                    !it.t ? "undefined (zero sd)"
                    : *it.p < 0.05 ? "Responses differ from identical"
                                   : "No evidence responses differ from identical"});
  t.rows.push_back(anova_row("model_differences", r.model_anova, "Models differ in sensitivity",
                             "No significant model difference"));
  t.rows.push_back(anova_row("archetype_differences", r.archetype_anova, "Archetypes differ in baseline deviation",
                             "No significant difference"));
  t.rows.push_back({"cross_model_consistency", "r", num(r.cross_model_r), "NA", "NA", "NA", "NA",
                    r.cross_model_r ? "mean pairwise Pearson r" : "undefined"});
  return t;
}

Table baseline_deviation_table(const audit::SensitivityReport& r) {
  Table t{{"scope", "archetype", "mean_deviation", "sd", "n"}, {}};
  for (const auto& d : r.deviations)
    t.rows.push_back({d.scope, d.archetype, num(d.deviation.mean), num(d.deviation.sd), std::to_string(d.deviation.n)});
  t.rows.push_back({"pooled", "Overall", num(r.overall_deviation), "NA", "NA"});
  return t;
}

Table condition_pair_table(const audit::SensitivityReport& r) {
  Table t{{"rank", "condition_a", "condition_b", "pair_kind", "mean_similarity", "sd", "n"}, {}};
  for (std::size_t i = 0; i < r.pairs.size(); ++i) {
    const auto& p = r.pairs[i];
    t.rows.push_back({std::to_string(i + 1), p.a, p.b, p.involves_baseline ? "baseline_vs_archetype" : "archetype_vs_archetype",
                      num(p.similarity.mean), num(p.similarity.sd), std::to_string(p.similarity.n)});
  }
  return t;
}

namespace {

json opt_json(const std::optional<double>& v) { return v && std::isfinite(*v) ? json(*v) : json(nullptr); }

json anova_json(const std::optional<ps::AnovaResult>& a) {
  if (!a) return nullptr;
  return {{"f", a->infinite_f || a->degenerate ? json(nullptr) : json(a->f)},
          {"df1", a->df1},
          {"df2", a->df2},
          {"p", a->degenerate ? json(nullptr) : json(a->p)},
          {"eta_squared", a->eta_squared},
          {"infinite_f", a->infinite_f},
          {"degenerate", a->degenerate}};
}

}  // namespace

json to_json(const audit::SensitivityReport& r) {
  json j;
  j["conditions"] = r.conditions;
  j["models"] = json::array();
  for (const auto& m : r.models)
    j["models"].push_back({{"model", m.model},
                           {"mean_similarity", m.similarity.mean},
                           {"sd", m.similarity.sd},
                           {"n", m.similarity.n},
                           {"baseline_deviation", m.baseline_deviation},
                           {"interpretation", m.interpretation}});
  j["overall_deviation_pooled"] = r.overall_deviation;
  j["identity_test"] = {{"t", opt_json(r.identity_test.t)}, {"df", r.identity_test.df}, {"p", opt_json(r.identity_test.p)},
                        {"mean", r.identity_test.mean}, {"sd", r.identity_test.sd}};
  j["model_anova"] = anova_json(r.model_anova);
  j["archetype_anova"] = anova_json(r.archetype_anova);
  j["cross_model_r"] = opt_json(r.cross_model_r);
  j["notices"] = r.notices;
  return j;
}

Table reward_direction_table(const audit::InvarianceReport& r) {
  Table t{{"reward_model"}, {}};
  for (const auto& a : r.archetypes) t.columns.push_back("d_" + a);
  t.columns.push_back("direction");
  for (const auto& [model, dir] : r.directions) {
    std::vector<std::string> row{model};
    for (const auto& a : r.archetypes) row.push_back(num(r.effect(model, a).d, 4));
    row.push_back(dir);
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table reward_dataset_table(const audit::InvarianceReport& r) {
  Table t{{"dataset", "reward_model", "n", "eta_squared", "f", "p_value"}, {}};
  for (const auto& d : r.datasets)
    t.rows.push_back({d.source, d.model, std::to_string(d.n_questions), num(d.anova.eta_squared),
                      d.anova.infinite_f ? "inf" : d.anova.degenerate ? "NA" : num(d.anova.f),
                      d.anova.degenerate ? "NA" : num(d.anova.p)});
  return t;
}

Table reward_archetype_table(const audit::InvarianceReport& r) {
  Table t{{"archetype"}, {}};
  for (const auto& m : r.models) t.columns.push_back(m);
  for (const auto& a : r.archetypes) {
    std::vector<std::string> row{a};
    for (const auto& m : r.models) row.push_back(num(r.effect(m, a).d, 4));
    t.rows.push_back(std::move(row));
  }
  return t;
}

Table reward_effect_table(const audit::InvarianceReport& r) {
  Table t{{"reward_model", "archetype", "d", "d_method", "mean_difference", "n_treatment", "n_baseline"}, {}};
  for (const auto& e : r.effects)
    t.rows.push_back({e.model, e.archetype, num(e.d), r.d_method, num(e.mean_difference), std::to_string(e.n_treatment),
                      std::to_string(e.n_baseline)});
  return t;
}

json to_json(const audit::InvarianceReport& r) {
  json j;
  j["d_method"] = r.d_method;
  j["models"] = r.models;
  j["archetypes"] = r.archetypes;
  j["directions"] = json::object();
  for (const auto& [m, d] : r.directions) j["directions"][m] = d;
  j["disagreements"] = json::array();
  for (const auto& d : r.disagreements)
    j["disagreements"].push_back({{"archetype", d.archetype},
                                  {"model_positive", d.model_positive},
                                  {"model_negative", d.model_negative},
                                  {"d_positive", d.d_positive},
                                  {"d_negative", d.d_negative}});
  j["disagreement_flag"] = !r.disagreements.empty();
  j["datasets"] = json::array();
  for (const auto& d : r.datasets)
    j["datasets"].push_back({{"dataset", d.source}, {"reward_model", d.model}, {"n", d.n_questions},
                             {"anova", anova_json(d.anova)}});
  j["notices"] = r.notices;
  return j;
}

}  // namespace statetrait::report
