#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "calib_il/calibration.hpp"
#include "calib_il/dataset.hpp"
#include "calib_il/eval.hpp"
#include "calib_il/logits.hpp"

namespace calib_il {

inline constexpr int kSchemaVersion = 1;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);
/// Locale-independent parse of the full string; FormatError on failure.
double parse_double(std::string_view text, const std::string& location);

/// Writes `content` to a sibling temp file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::string read_file(const std::filesystem::path& path);

/// `foo.csv` -> `foo.meta.json`.
std::filesystem::path metadata_path(const std::filesystem::path& csv_path);

// Logits: CSV `id,label,c0,...,c<|N_s|-1>` plus a JSON sidecar
// {schema_version, state, num_states, class_to_state, dataset, backbone, seed}.
void write_logits(const std::filesystem::path& path, const StateLogits& logits);
StateLogits read_logits(const std::filesystem::path& path);

// Table: JSON {schema_version, num_states, entries: [{s, k, alpha, beta}]}.
void write_table(const std::filesystem::path& path, const CalibrationTable& table);
CalibrationTable read_table(const std::filesystem::path& path);
std::string table_to_json(const CalibrationTable& table);
CalibrationTable table_from_json(std::string_view text, const std::string& location);

// Dataset: CSV `id,split,label,x0,...,x<d-1>` plus a JSON sidecar with the
// schedule, seed and generator settings.
void write_dataset(const std::filesystem::path& path, const IncrementalDataset& dataset);
IncrementalDataset read_dataset(const std::filesystem::path& path);

// Metrics: CSV `state,group,accuracy` (one row per k <= s, then a summary
// row carrying the average incremental accuracy) plus a JSON sidecar with
// per-state accuracies and score statistics.
void write_metrics(const std::filesystem::path& path, const RunMetrics& metrics);
RunMetrics read_metrics(const std::filesystem::path& path);

}  // namespace calib_il
