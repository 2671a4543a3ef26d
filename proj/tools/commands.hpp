#pragma once

#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "calib_il/calibration.hpp"
#include "calib_il/dataset.hpp"
#include "calib_il/eval.hpp"
#include "calib_il/logits.hpp"
#include "run_spec.hpp"

namespace calib_il::cli {

// key=value lines on stderr. Detail lines only appear with --verbose.
class Logger {
 public:
  Logger(std::ostream& out, bool verbose) : out_(&out), verbose_(verbose) {}

  using Fields = std::vector<std::pair<std::string, std::string>>;
  void info(const std::string& event, const Fields& fields = {}) const;
  void detail(const std::string& event, const Fields& fields = {}) const;
  bool verbose() const noexcept { return verbose_; }

 private:
  std::ostream* out_;
  bool verbose_;
};

std::string reference_name(int r);  // reference_00
std::string target_name(int t);      // target_00

int reference_count(const RunSpec& spec);
int target_count(const RunSpec& spec);

IncrementalDataset reference_dataset(const RunSpec& spec, int r);
IncrementalDataset target_dataset(const RunSpec& spec, int t);

struct ReferenceFit {
  CalibrationTable table;
  std::vector<StateFit> fits;            // states 2..S
  std::vector<StateLogits> validation;   // states 2..S; empty for external logits
};

/// Trains reference r (or reads its external logits) and fits its table.
ReferenceFit fit_reference(const RunSpec& spec, int r);

/// Test logits of target t for states 1..S. `halved` keeps ceil(n/2)
/// training samples per class; it is rejected for external logits.
std::vector<StateLogits> target_test_logits(const RunSpec& spec, int t, bool halved = false);

struct MethodRow {
  std::string method;  // raw, bic, adbic, adbic_oracle
  RunMetrics metrics;
  double avg = 0.0;
  double gain = 0.0;  // avg minus the raw avg
};

struct Comparison {
  std::vector<MethodRow> rows;
  std::vector<int> oracle_choice;  // per state; -1 for state 1
};

Comparison compare_methods(std::span<const StateLogits> target, std::span<const CalibrationTable> references);

struct SweepRow {
  int r = 0;
  std::vector<std::vector<int>> subsets;  // sorted reference indices per sampling
  std::vector<double> accuracy;           // mean avg. incremental accuracy over targets
  double mean = 0.0;
  double stddev = 0.0;  // population; 0 when only one subset exists
};

/// For each R, averages `samplings` random R-subsets of the tables (drawn
/// without replacement; the single full set when R equals the table count)
/// and transfers each average to every target. Throws SpecError when R
/// exceeds the number of tables.
std::vector<SweepRow> sweep_references(std::span<const CalibrationTable> tables,
                                       std::span<const std::vector<StateLogits>> targets,
                                       std::span<const int> r_values, int samplings, std::uint64_t seed);

/// `reference_*.table.json` from the tables directory, sorted by name.
std::vector<CalibrationTable> load_reference_tables(const RunSpec& spec, const std::filesystem::path& out);

struct CommandOptions {
  std::string command;
  std::filesystem::path spec;
  std::filesystem::path out;
  int jobs = 1;
  bool verbose = false;
};

void cmd_gen(const RunSpec& spec, const CommandOptions& options, const Logger& log);
void cmd_run_reference(const RunSpec& spec, const CommandOptions& options, const Logger& log);
void cmd_run_target(const RunSpec& spec, const CommandOptions& options, const Logger& log);
void cmd_sweep(const RunSpec& spec, const CommandOptions& options, const Logger& log);
void cmd_plot(const RunSpec& spec, const CommandOptions& options, const Logger& log);

/// Exit codes: 0 ok, 2 spec/usage error, 3 data error, 4 numeric error, 1 other.
int run_command(const CommandOptions& options, std::ostream& err);

/// Parses argv with CLI11 and dispatches.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace calib_il::cli
