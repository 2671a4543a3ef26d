#include "calib_il/store_io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <vector>

#include "calib_il/error.hpp"
#include "json.hpp"

namespace calib_il {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Kind = FormatError::Kind;

std::string loc(const fs::path& path, std::size_t line) { return path.string() + ":" + std::to_string(line); }

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::vector<std::string_view> lines_of(std::string_view text) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    out.push_back(text.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

template <typename Int>
Int parse_int(std::string_view text, const std::string& location) {
  Int value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw FormatError(Kind::kSchema, location, "expected an integer, got '" + std::string(text) + "'");
  }
  return value;
}

double parse_finite(std::string_view text, const std::string& location) {
  const double value = parse_double(text, location);
  if (!std::isfinite(value)) throw FormatError(Kind::kNonFinite, location, "non-finite value '" + std::string(text) + "'");
  return value;
}

json read_json(const fs::path& path) {
  const std::string text = read_file(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(Kind::kSchema, path.string(), std::string("invalid JSON: ") + e.what());
  }
}

// Typed field access with a located error.
template <typename T>
T field(const json& object, const char* key, const std::string& where) {
  if (!object.is_object() || !object.contains(key)) {
    throw FormatError(Kind::kSchema, where, std::string("missing field '") + key + "'");
  }
  const json& value = object.at(key);
  if constexpr (std::is_same_v<T, double>) {
    if (!value.is_number()) throw FormatError(Kind::kSchema, where, std::string("field '") + key + "' must be a number");
  } else if constexpr (std::is_integral_v<T>) {
    if (!value.is_number_integer()) {
      throw FormatError(Kind::kSchema, where, std::string("field '") + key + "' must be an integer");
    }
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!value.is_string()) throw FormatError(Kind::kSchema, where, std::string("field '") + key + "' must be a string");
  }
  try {
    return value.get<T>();
  } catch (const json::exception& e) {
    throw FormatError(Kind::kSchema, where, std::string("field '") + key + "': " + e.what());
  }
}

void check_version(const json& meta, const std::string& where) {
  const int version = field<int>(meta, "schema_version", where);
  if (version != kSchemaVersion) {
    throw FormatError(Kind::kSchema, where, "unsupported schema_version " + std::to_string(version));
  }
}

StateSchedule schedule_from(const json& meta, const std::string& where) {
  const auto map = field<std::vector<int>>(meta, "class_to_state", where);
  StateSchedule schedule;
  try {
    schedule = StateSchedule::from_class_map(map);
  } catch (const Error& e) {
    throw FormatError(Kind::kSchema, where, std::string("class_to_state: ") + e.what());
  }
  const int num_states = field<int>(meta, "num_states", where);
  if (num_states != schedule.num_states()) {
    throw FormatError(Kind::kMetadataMismatch, where,
                      "num_states " + std::to_string(num_states) + " disagrees with class_to_state (" +
                          std::to_string(schedule.num_states()) + " states)");
  }
  return schedule;
}

void expect_header(std::string_view got, const std::string& expected, const std::string& where,
                   std::size_t fixed_fields, const char* prefix_pattern) {
  if (got == expected) return;
  const auto fields = split_csv(got);
  bool well_formed = fields.size() > fixed_fields;
  const auto want = split_csv(expected);
  for (std::size_t i = 0; well_formed && i < fixed_fields; ++i) well_formed = fields[i] == want[i];
  for (std::size_t i = fixed_fields; well_formed && i < fields.size(); ++i) {
    well_formed = fields[i] == std::string(prefix_pattern) + std::to_string(i - fixed_fields);
  }
  if (!well_formed) {
    throw FormatError(Kind::kMalformedHeader, where, "malformed header '" + std::string(got) + "'");
  }
  throw FormatError(Kind::kSchema, where,
                    "header has " + std::to_string(fields.size() - fixed_fields) + " value columns, expected " +
                        std::to_string(want.size() - fixed_fields));
}

}  // namespace

std::string format_double(double value) {
  char buffer[64];
  const auto [ptr, ec] = std::to_chars(buffer, buffer + sizeof(buffer), value);
  if (ec != std::errc()) throw NumericError("cannot format double");
  return std::string(buffer, ptr);
}

double parse_double(std::string_view text, const std::string& location) {
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size() || text.empty()) {
    throw FormatError(Kind::kSchema, location, "expected a number, got '" + std::string(text) + "'");
  }
  return value;
}

void write_file_atomic(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(Kind::kIo, tmp.string(), "cannot open for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw FormatError(Kind::kIo, tmp.string(), "write failed");
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(Kind::kIo, path.string(), "cannot open for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

fs::path metadata_path(const fs::path& csv_path) {
  fs::path out = csv_path;
  out.replace_extension(".meta.json");
  return out;
}

// ---------------------------------------------------------------- logits

void write_logits(const fs::path& path, const StateLogits& logits) {
  const Matrix& scores = logits.scores();
  std::string csv = "id,label";
  for (std::size_t c = 0; c < scores.cols(); ++c) csv += ",c" + std::to_string(c);
  csv += '\n';
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    csv += std::to_string(r) + "," + std::to_string(logits.labels()[r]);
    for (double v : scores.row(r)) csv += "," + format_double(v);
    csv += '\n';
  }

  json meta;
  meta["schema_version"] = kSchemaVersion;
  meta["state"] = logits.state();
  meta["num_states"] = logits.schedule().num_states();
  meta["class_to_state"] = logits.schedule().class_to_state();
  meta["dataset"] = logits.provenance().dataset;
  meta["backbone"] = logits.provenance().backbone;
  meta["seed"] = logits.provenance().seed;

  write_file_atomic(metadata_path(path), meta.dump(2) + "\n");
  write_file_atomic(path, csv);
}

StateLogits read_logits(const fs::path& path) {
  const fs::path meta_file = metadata_path(path);
  const json meta = read_json(meta_file);
  const std::string where = meta_file.string();
  check_version(meta, where);
  const StateSchedule schedule = schedule_from(meta, where);
  const int state = field<int>(meta, "state", where);
  if (state < 1 || state > schedule.num_states()) {
    throw FormatError(Kind::kMetadataMismatch, where, "state " + std::to_string(state) + " outside 1.." +
                                                          std::to_string(schedule.num_states()));
  }
  Provenance provenance{field<std::string>(meta, "dataset", where), field<std::string>(meta, "backbone", where),
                        field<std::uint64_t>(meta, "seed", where)};

  const std::string text = read_file(path);
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError(Kind::kMalformedHeader, loc(path, 1), "file is empty");
  const auto cols = static_cast<std::size_t>(schedule.seen_count(state));
  std::string expected = "id,label";
  for (std::size_t c = 0; c < cols; ++c) expected += ",c" + std::to_string(c);
  expect_header(lines[0], expected, loc(path, 1), 2, "c");

  Matrix scores(lines.size() - 1, cols);
  std::vector<int> labels;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where_line = loc(path, i + 1);
    const auto fields = split_csv(lines[i]);
    if (fields.size() != cols + 2) {
      throw FormatError(Kind::kSchema, where_line,
                        "expected " + std::to_string(cols + 2) + " fields, got " + std::to_string(fields.size()));
    }
    parse_int<long long>(fields[0], where_line);
    const int label = parse_int<int>(fields[1], where_line);
    if (schedule.column_of(state, label) < 0) {
      throw FormatError(Kind::kMetadataMismatch, where_line,
                        "label " + std::to_string(label) + " is not a class seen by state " + std::to_string(state));
    }
    labels.push_back(label);
    for (std::size_t c = 0; c < cols; ++c) scores(i - 1, c) = parse_finite(fields[c + 2], where_line);
  }
  return StateLogits(schedule, state, std::move(scores), std::move(labels), std::move(provenance));
}

// ---------------------------------------------------------------- tables

std::string table_to_json(const CalibrationTable& table) {
  json doc;
  doc["schema_version"] = kSchemaVersion;
  doc["num_states"] = table.num_states();
  json entries = json::array();
  for (int s = 2; s <= table.num_states(); ++s) {
    for (int k = 1; k <= s; ++k) {
      const AffinePair& p = table.at(s, k);
      entries.push_back({{"s", s}, {"k", k}, {"alpha", p.alpha}, {"beta", p.beta}});
    }
  }
  doc["entries"] = std::move(entries);
  return doc.dump(2) + "\n";
}

CalibrationTable table_from_json(std::string_view text, const std::string& location) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw FormatError(Kind::kSchema, location, std::string("invalid JSON: ") + e.what());
  }
  check_version(doc, location);
  const int num_states = field<int>(doc, "num_states", location);
  if (num_states < 2) throw FormatError(Kind::kOutOfRange, location, "num_states must be >= 2");
  if (!doc.contains("entries") || !doc["entries"].is_array()) {
    throw FormatError(Kind::kSchema, location, "missing array 'entries'");
  }
  CalibrationTable table = CalibrationTable::identity(num_states);
  std::set<std::pair<int, int>> seen;
  const json& entries = doc["entries"];
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const std::string where = location + ":entries[" + std::to_string(i) + "]";
    const int s = field<int>(entries[i], "s", where);
    const int k = field<int>(entries[i], "k", where);
    if (s < 2 || s > num_states || k < 1 || k > s) {
      throw FormatError(Kind::kOutOfRange, where,
                        "pair (" + std::to_string(s) + "," + std::to_string(k) + ") outside the table");
    }
    if (!seen.emplace(s, k).second) {
      throw FormatError(Kind::kDuplicateEntry, where,
                        "duplicate pair (" + std::to_string(s) + "," + std::to_string(k) + ")");
    }
    const AffinePair pair{field<double>(entries[i], "alpha", where), field<double>(entries[i], "beta", where)};
    if (!std::isfinite(pair.alpha) || !std::isfinite(pair.beta)) {
      throw FormatError(Kind::kNonFinite, where, "non-finite parameter");
    }
    table.set(s, k, pair);
  }
  for (int s = 2; s <= num_states; ++s) {
    for (int k = 1; k <= s; ++k) {
      if (!seen.count({s, k})) {
        throw FormatError(Kind::kMissingEntry, location,
                          "missing pair (" + std::to_string(s) + "," + std::to_string(k) + ")");
      }
    }
  }
  return table;
}

void write_table(const fs::path& path, const CalibrationTable& table) { write_file_atomic(path, table_to_json(table)); }

CalibrationTable read_table(const fs::path& path) { return table_from_json(read_file(path), path.string()); }

// ---------------------------------------------------------------- datasets

void write_dataset(const fs::path& path, const IncrementalDataset& dataset) {
  dataset.validate();
  std::string csv = "id,split,label";
  for (int f = 0; f < dataset.feature_dim(); ++f) csv += ",x" + std::to_string(f);
  csv += '\n';
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    csv += std::to_string(i) + "," + std::string(to_string(dataset.splits[i])) + "," +
           std::to_string(dataset.labels[i]);
    for (double v : dataset.features.row(i)) csv += "," + format_double(v);
    csv += '\n';
  }

  json meta;
  meta["schema_version"] = kSchemaVersion;
  meta["name"] = dataset.name;
  meta["seed"] = dataset.seed;
  meta["num_states"] = dataset.schedule.num_states();
  meta["class_to_state"] = dataset.schedule.class_to_state();
  meta["feature_dim"] = dataset.feature_dim();
  if (dataset.synth) {
    const SynthSpec& s = *dataset.synth;
    meta["synth"] = {{"name", s.name},
                     {"num_classes", s.num_classes},
                     {"feature_dim", s.feature_dim},
                     {"num_states", s.num_states},
                     {"train_per_class", s.train_per_class},
                     {"val_per_class", s.val_per_class},
                     {"test_per_class", s.test_per_class},
                     {"center_scale", s.center_scale},
                     {"noise_scale", s.noise_scale},
                     {"drift_scale", s.drift_scale},
                     {"seed", s.seed}};
  } else {
    meta["synth"] = nullptr;
  }
  write_file_atomic(metadata_path(path), meta.dump(2) + "\n");
  write_file_atomic(path, csv);
}

IncrementalDataset read_dataset(const fs::path& path) {
  const fs::path meta_file = metadata_path(path);
  const json meta = read_json(meta_file);
  const std::string where = meta_file.string();
  check_version(meta, where);

  IncrementalDataset out;
  out.name = field<std::string>(meta, "name", where);
  out.seed = field<std::uint64_t>(meta, "seed", where);
  out.schedule = schedule_from(meta, where);
  const int dim = field<int>(meta, "feature_dim", where);
  if (dim < 1) throw FormatError(Kind::kSchema, where, "feature_dim must be >= 1");
  if (meta.contains("synth") && !meta["synth"].is_null()) {
    const json& s = meta["synth"];
    const std::string sw = where + ":synth";
    SynthSpec spec;
    spec.name = field<std::string>(s, "name", sw);
    spec.num_classes = field<int>(s, "num_classes", sw);
    spec.feature_dim = field<int>(s, "feature_dim", sw);
    spec.num_states = field<int>(s, "num_states", sw);
    spec.train_per_class = field<int>(s, "train_per_class", sw);
    spec.val_per_class = field<int>(s, "val_per_class", sw);
    spec.test_per_class = field<int>(s, "test_per_class", sw);
    spec.center_scale = field<double>(s, "center_scale", sw);
    spec.noise_scale = field<double>(s, "noise_scale", sw);
    spec.drift_scale = field<double>(s, "drift_scale", sw);
    spec.seed = field<std::uint64_t>(s, "seed", sw);
    out.synth = spec;
  }

  const std::string text = read_file(path);
  const auto lines = lines_of(text);
  if (lines.empty()) throw FormatError(Kind::kMalformedHeader, loc(path, 1), "file is empty");
  std::string expected = "id,split,label";
  for (int f = 0; f < dim; ++f) expected += ",x" + std::to_string(f);
  expect_header(lines[0], expected, loc(path, 1), 3, "x");

  const auto d = static_cast<std::size_t>(dim);
  out.features = Matrix(lines.size() - 1, d);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::string where_line = loc(path, i + 1);
    const auto fields = split_csv(lines[i]);
    if (fields.size() != d + 3) {
      throw FormatError(Kind::kSchema, where_line,
                        "expected " + std::to_string(d + 3) + " fields, got " + std::to_string(fields.size()));
    }
    parse_int<long long>(fields[0], where_line);
    Split split{};
    try {
      split = parse_split(fields[1]);
    } catch (const DataError& e) {
      throw FormatError(Kind::kSchema, where_line, e.what());
    }
    const int label = parse_int<int>(fields[2], where_line);
    if (label < 0 || label >= out.schedule.num_classes()) {
      throw FormatError(Kind::kMetadataMismatch, where_line,
                        "label " + std::to_string(label) + " is not a class of the schedule");
    }
    out.splits.push_back(split);
    out.labels.push_back(label);
    for (std::size_t f = 0; f < d; ++f) out.features(i - 1, f) = parse_finite(fields[f + 3], where_line);
  }
  try {
    out.validate();
  } catch (const Error& e) {
    throw FormatError(Kind::kSchema, path.string(), e.what());
  }
  return out;
}

// ---------------------------------------------------------------- metrics

void write_metrics(const fs::path& path, const RunMetrics& metrics) {
  std::string csv = "state,group,accuracy\n";
  for (std::size_t s = 0; s < metrics.group_accuracy.size(); ++s) {
    for (std::size_t k = 0; k < metrics.group_accuracy[s].size(); ++k) {
      csv += std::to_string(s + 1) + "," + std::to_string(k + 1) + "," +
             format_double(metrics.group_accuracy[s][k]) + "\n";
    }
  }
  csv += "summary,avg_incremental_accuracy,";
  if (metrics.avg_incremental) csv += format_double(*metrics.avg_incremental);
  csv += '\n';

  json meta;
  meta["schema_version"] = kSchemaVersion;
  meta["num_states"] = metrics.num_states();
  meta["state_accuracy"] = metrics.state_accuracy;
  json stats = json::array();
  for (const auto& row : metrics.score_stats) {
    json r = json::array();
    for (const ScoreStats& st : row) r.push_back({{"mean", st.mean}, {"std", st.stddev}});
    stats.push_back(std::move(r));
  }
  meta["score_stats"] = std::move(stats);
  meta["std_kind"] = "population";
  meta["avg_incremental_accuracy"] = metrics.avg_incremental ? json(*metrics.avg_incremental) : json(nullptr);
  write_file_atomic(metadata_path(path), meta.dump(2) + "\n");
  write_file_atomic(path, csv);
}

RunMetrics read_metrics(const fs::path& path) {
  const fs::path meta_file = metadata_path(path);
  const json meta = read_json(meta_file);
  const std::string where = meta_file.string();
  check_version(meta, where);

  RunMetrics out;
  const int num_states = field<int>(meta, "num_states", where);
  if (num_states < 1) throw FormatError(Kind::kSchema, where, "num_states must be >= 1");
  out.state_accuracy = field<std::vector<double>>(meta, "state_accuracy", where);
  if (out.state_accuracy.size() != static_cast<std::size_t>(num_states)) {
    throw FormatError(Kind::kMetadataMismatch, where, "state_accuracy length differs from num_states");
  }
  if (!meta.contains("score_stats") || !meta["score_stats"].is_array() ||
      meta["score_stats"].size() != static_cast<std::size_t>(num_states)) {
    throw FormatError(Kind::kSchema, where, "score_stats must hold one array per state");
  }
  for (std::size_t s = 0; s < meta["score_stats"].size(); ++s) {
    const json& row = meta["score_stats"][s];
    if (!row.is_array() || row.size() != s + 1) {
      throw FormatError(Kind::kSchema, where + ":score_stats[" + std::to_string(s) + "]",
                        "expected " + std::to_string(s + 1) + " groups");
    }
    std::vector<ScoreStats> stats;
    for (const json& entry : row) {
      const std::string ew = where + ":score_stats[" + std::to_string(s) + "]";
      stats.push_back({field<double>(entry, "mean", ew), field<double>(entry, "std", ew)});
    }
    out.score_stats.push_back(std::move(stats));
  }
  const json& avg = meta.contains("avg_incremental_accuracy") ? meta["avg_incremental_accuracy"] : json(nullptr);
  if (avg.is_number()) out.avg_incremental = avg.get<double>();

  const std::string text = read_file(path);
  const auto lines = lines_of(text);
  if (lines.empty() || lines[0] != "state,group,accuracy") {
    throw FormatError(Kind::kMalformedHeader, loc(path, 1), "expected header 'state,group,accuracy'");
  }
  const std::size_t expected_rows = static_cast<std::size_t>(num_states) * (num_states + 1) / 2 + 1;
  if (lines.size() - 1 != expected_rows) {
    throw FormatError(Kind::kMetadataMismatch, path.string(),
                      "expected " + std::to_string(expected_rows) + " rows, got " + std::to_string(lines.size() - 1));
  }
  std::size_t line = 1;
  for (int s = 1; s <= num_states; ++s) {
    std::vector<double> row;
    for (int k = 1; k <= s; ++k, ++line) {
      const std::string wl = loc(path, line + 1);
      const auto fields = split_csv(lines[line]);
      if (fields.size() != 3) throw FormatError(Kind::kSchema, wl, "expected 3 fields");
      if (parse_int<int>(fields[0], wl) != s || parse_int<int>(fields[1], wl) != k) {
        throw FormatError(Kind::kSchema, wl, "expected row (" + std::to_string(s) + "," + std::to_string(k) + ")");
      }
      const double acc = parse_finite(fields[2], wl);
      if (acc < 0.0 || acc > 1.0) throw FormatError(Kind::kOutOfRange, wl, "accuracy outside [0, 1]");
      row.push_back(acc);
    }
    out.group_accuracy.push_back(std::move(row));
  }
  const std::string wl = loc(path, line + 1);
  const auto summary = split_csv(lines[line]);
  if (summary.size() != 3 || summary[0] != "summary" || summary[1] != "avg_incremental_accuracy") {
    throw FormatError(Kind::kSchema, wl, "expected the summary row");
  }
  const std::optional<double> csv_avg =
      summary[2].empty() ? std::nullopt : std::optional<double>(parse_finite(summary[2], wl));
  if (csv_avg != out.avg_incremental) {
    throw FormatError(Kind::kMetadataMismatch, wl, "summary row disagrees with the metadata");
  }
  return out;
}

}  // namespace calib_il
