#pragma once

// Text formats for evaluation records and metric reports.
//
// Records CSV: header "sample_id,true_label,partition,predicted_label,confidence"
// followed by one column per class (LabelTable order, named by class). Labels
// are written by name; an UNKNOWN true label is written as "UNKNOWN". Numbers
// use the shortest representation that reads back to the same double.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "embattr/openset_metrics.hpp"

namespace embattr {

inline constexpr const char* kUnknownLabel = "UNKNOWN";

std::string format_number(double value);

struct RecordsTable {
  LabelTable labels;
  std::vector<EvalRecord> records;
};

void write_records_csv(const RecordsTable& table, std::ostream& out);
RecordsTable read_records_csv(std::istream& in);
void save_records_csv(const RecordsTable& table, const std::filesystem::path& path);
RecordsTable load_records_csv(const std::filesystem::path& path);

nlohmann::ordered_json report_to_json(const MetricsReport& rep);

/// Column names of the flat report row.
std::vector<std::string> report_csv_header();
std::vector<std::string> report_csv_row(const MetricsReport& rep);

void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace embattr
