#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "statetrait/audit.hpp"
#include "statetrait/psychometrics.hpp"

namespace statetrait::report {

/// A rectangular table of preformatted cells.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  bool operator==(const Table&) const = default;
};

enum class Format { Csv, Json, SvgHeatmap };
/// "csv", "json" or "svg-heatmap"; anything else throws ConfigError.
Format parse_format(std::string_view name);
std::string extension(Format f);

/// RFC 4180 quoting, "\n" line endings, header row always present.
std::string to_csv(const Table& t);
nlohmann::json to_json(const Table& t);
Table table_from_json(const nlohmann::json& j);

/// Number cell: fixed decimals, "NA" for NaN/nullopt, "inf"/"-inf" for infinities.
std::string num(double v, int digits = 6);
std::string num(const std::optional<double>& v, int digits = 6);

struct Heatmap {
  std::string title;
  std::vector<std::string> row_labels;
  std::vector<std::string> column_labels;
  Eigen::MatrixXd values;  ///< rows x columns; NaN cells render grey with "NA"
};

/// First column holds row labels, the rest parse as numbers ("NA" -> NaN).
Heatmap heatmap_from_table(const Table& t, std::string title = "");

/// Diverging blue-white-red ramp, symmetric around 0, one labelled rect per cell.
std::string render_svg_heatmap(const Heatmap& h, int digits = 2);

/// Renders `t` in the requested format.
std::string emit(const Table& t, Format f, const std::string& title = "");

// ---------------------------------------------------------------------------
// Table builders

Table decomposition_summary_table(std::span<const psychometrics::VarianceDecomposition> d);
Table decomposition_dimension_table(std::span<const psychometrics::VarianceDecomposition> d);
Table mtmm_table(const psychometrics::MtmmResult& m, std::span<const std::string> dimensions);

struct HypothesisFit {
  std::string pattern;  ///< e.g. "H1"
  std::string context;
  std::string dimension;
  /// (method, coefficient for the context); methods in column order
  std::vector<std::pair<std::string, psychometrics::Coefficient>> by_method;
};

/// One row per hypothesis, per method beta with Wald CI and p.
Table regression_table(std::span<const HypothesisFit> fits, std::span<const std::string> methods);

Table sensitivity_model_table(const audit::SensitivityReport& r);
Table sensitivity_test_table(const audit::SensitivityReport& r);
Table baseline_deviation_table(const audit::SensitivityReport& r);
Table condition_pair_table(const audit::SensitivityReport& r);
nlohmann::json to_json(const audit::SensitivityReport& r);

Table reward_direction_table(const audit::InvarianceReport& r);
Table reward_dataset_table(const audit::InvarianceReport& r);
Table reward_archetype_table(const audit::InvarianceReport& r);
Table reward_effect_table(const audit::InvarianceReport& r);
nlohmann::json to_json(const audit::InvarianceReport& r);

}  // namespace statetrait::report
