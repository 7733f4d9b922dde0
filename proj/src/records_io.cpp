#include "embattr/records_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "embattr/error.hpp"

namespace embattr {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    cells.push_back(line.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return cells;
}

double parse_double(const std::string& cell, std::size_t line_no) {
  double value = 0.0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end || !std::isfinite(value)) {
    throw Error(Errc::parse, "line " + std::to_string(line_no) + ": bad number '" + cell + "'");
  }
  return value;
}

std::uint64_t parse_u64(const std::string& cell, std::size_t line_no) {
  std::uint64_t value = 0;
  const auto* end = cell.data() + cell.size();
  const auto [ptr, ec] = std::from_chars(cell.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw Error(Errc::parse, "line " + std::to_string(line_no) + ": bad integer '" + cell + "'");
  }
  return value;
}

LabelId parse_label(const LabelTable& labels, const std::string& cell, std::size_t line_no) {
  if (auto id = labels.find(cell)) return *id;
  throw Error(Errc::unknown_label, "line " + std::to_string(line_no) + ": unknown label '" + cell + "'");
}

nlohmann::ordered_json optional_number(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

nlohmann::ordered_json scores_json(const ClassScores& s) {
  return {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
}

nlohmann::ordered_json names_json(const LabelTable& labels, const std::vector<LabelId>& ids) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto id : ids) arr.push_back(labels.name(id));
  return arr;
}

std::string optional_cell(const std::optional<double>& v) { return v ? format_number(*v) : ""; }

}  // namespace

std::string format_number(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  if (ec != std::errc()) throw Error(Errc::validation, "cannot format number");
  return std::string(buf, ptr);
}

void write_records_csv(const RecordsTable& table, std::ostream& out) {
  for (const auto& name : table.labels.names()) {
    if (name.find_first_of(",\"\r") != std::string::npos) {
      throw Error(Errc::validation, "label name not representable in CSV: " + name);
    }
  }
  out << "sample_id,true_label,partition,predicted_label,confidence";
  for (const auto& name : table.labels.names()) out << ',' << name;
  out << '\n';
  for (const auto& r : table.records) {
    if (r.prediction.posterior.size() != table.labels.size()) {
      throw Error(Errc::dimension, "posterior length does not match the label table");
    }
    out << r.sample_id << ','
        << (r.true_label ? table.labels.name(*r.true_label) : std::string(kUnknownLabel)) << ','
        << (r.partition == DataPartition::seen ? "seen" : "unseen") << ','
        << table.labels.name(r.prediction.predicted) << ','
        << format_number(r.prediction.confidence);
    for (const double p : r.prediction.posterior) out << ',' << format_number(p);
    out << '\n';
  }
  if (!out) throw Error(Errc::io, "failed writing records CSV");
}

RecordsTable read_records_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw Error(Errc::parse, "records CSV is empty");
  auto header = split_csv(line);
  static const char* kFixed[] = {"sample_id", "true_label", "partition", "predicted_label",
                                 "confidence"};
  if (header.size() < 6) throw Error(Errc::parse, "records CSV header has no class columns");
  for (std::size_t i = 0; i < 5; ++i) {
    if (header[i] != kFixed[i]) {
      throw Error(Errc::parse, "records CSV header column " + std::to_string(i) + " should be " +
                                   kFixed[i]);
    }
  }
  RecordsTable table{LabelTable(std::vector<std::string>(header.begin() + 5, header.end())), {}};
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) {
      throw Error(Errc::parse, "line " + std::to_string(line_no) + " has " +
                                   std::to_string(cells.size()) + " cells, expected " +
                                   std::to_string(header.size()));
    }
    EvalRecord r;
    r.sample_id = parse_u64(cells[0], line_no);
    if (cells[1] != kUnknownLabel) r.true_label = parse_label(table.labels, cells[1], line_no);
    if (cells[2] == "seen") {
      r.partition = DataPartition::seen;
    } else if (cells[2] == "unseen") {
      r.partition = DataPartition::unseen;
    } else {
      throw Error(Errc::parse, "line " + std::to_string(line_no) + ": bad partition '" + cells[2] + "'");
    }
    r.prediction.predicted = parse_label(table.labels, cells[3], line_no);
    r.prediction.confidence = parse_double(cells[4], line_no);
    for (std::size_t i = 5; i < cells.size(); ++i) {
      r.prediction.posterior.push_back(parse_double(cells[i], line_no));
    }
    table.records.push_back(std::move(r));
  }
  return table;
}

void save_records_csv(const RecordsTable& table, const std::filesystem::path& path) {
  std::ostringstream text;
  write_records_csv(table, text);
  write_text_file(path, text.str());
}

RecordsTable load_records_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return read_records_csv(in);
}

nlohmann::ordered_json report_to_json(const MetricsReport& rep) {
  nlohmann::ordered_json j;
  j["closed_accuracy"] = optional_number(rep.closed_accuracy);
  j["attribution_accuracy"] = optional_number(rep.attribution_accuracy);
  j["auc"] = optional_number(rep.auc);
  j["oscr"] = optional_number(rep.oscr);
  j["macro_seen"] = rep.macro_seen ? scores_json(*rep.macro_seen) : nlohmann::ordered_json(nullptr);
  j["macro_unseen"] =
      rep.macro_unseen ? scores_json(*rep.macro_unseen) : nlohmann::ordered_json(nullptr);
  j["seen_classes"] = names_json(rep.labels, rep.seen_ids);
  j["unseen_classes"] = names_json(rep.labels, rep.unseen_ids);
  j["seen_records"] = rep.seen_records;
  j["unseen_records"] = rep.unseen_records;
  auto per_class = nlohmann::ordered_json::object();
  for (LabelId c = 0; c < rep.per_class.size(); ++c) {
    per_class[rep.labels.name(c)] = scores_json(rep.per_class[c]);
  }
  j["per_class"] = std::move(per_class);
  return j;
}

std::vector<std::string> report_csv_header() {
  return {"closed_accuracy", "attribution_accuracy", "auc",        "oscr",
          "seen_precision",  "seen_recall",          "seen_f1",    "unseen_precision",
          "unseen_recall",   "unseen_f1"};
}

std::vector<std::string> report_csv_row(const MetricsReport& rep) {
  auto triple = [](const std::optional<ClassScores>& s) -> std::vector<std::string> {
    if (!s) return {"", "", ""};
    return {format_number(s->precision), format_number(s->recall), format_number(s->f1)};
  };
  std::vector<std::string> row{optional_cell(rep.closed_accuracy),
                               optional_cell(rep.attribution_accuracy), optional_cell(rep.auc),
                               optional_cell(rep.oscr)};
  for (auto& cell : triple(rep.macro_seen)) row.push_back(std::move(cell));
  for (auto& cell : triple(rep.macro_unseen)) row.push_back(std::move(cell));
  return row;
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot open " + path.string() + " for writing");
  out << text;
  out.close();
  if (!out) throw Error(Errc::io, "failed writing " + path.string());
}

}  // namespace embattr
