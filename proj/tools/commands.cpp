#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "calib_il/backbones.hpp"
#include "calib_il/error.hpp"
#include "calib_il/parallel.hpp"
#include "calib_il/random.hpp"
#include "calib_il/store_io.hpp"
#include "calib_il/svg.hpp"
#include "calib_il/transfer.hpp"

namespace calib_il::cli {
namespace fs = std::filesystem;

namespace {

std::string numbered(const char* prefix, int i) {
  std::string n = std::to_string(i);
  if (n.size() < 2) n.insert(0, 2 - n.size(), '0');
  return std::string(prefix) + n;
}

std::string state_file(const char* prefix, int s) { return std::string(prefix) + std::to_string(s) + ".csv"; }

std::vector<StateLogits> read_state_dir(const fs::path& dir, int first, int last, int num_states) {
  std::vector<StateLogits> out;
  for (int s = first; s <= last; ++s) {
    StateLogits logits = read_logits(dir / state_file("state_", s));
    if (logits.state() != s || logits.schedule().num_states() != num_states) {
      throw DataError((dir / state_file("state_", s)).string() + ": expected state " + std::to_string(s) + " of " +
                      std::to_string(num_states));
    }
    out.push_back(std::move(logits));
  }
  return out;
}

void check_dataset(const IncrementalDataset& ds, const RunSpec& spec, const std::string& where) {
  if (ds.schedule.num_states() != spec.num_states) {
    throw DataError(where + ": dataset has " + std::to_string(ds.schedule.num_states()) + " states, run spec has " +
                    std::to_string(spec.num_states));
  }
}

std::string join_doubles(const std::vector<double>& values) {
  std::string out;
  for (double v : values) out += "," + format_double(v);
  return out;
}

std::string acc_header(int num_states) {
  std::string out;
  for (int s = 1; s <= num_states; ++s) out += ",acc_s" + std::to_string(s);
  return out;
}

double mean_of(std::span<const double> v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

double population_std(std::span<const double> v) {
  const double m = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - m) * (x - m);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

using CsvRows = std::vector<std::vector<std::string>>;

CsvRows read_csv(const fs::path& path) {
  const std::string text = read_file(path);
  CsvRows rows;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      fields.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    rows.push_back(std::move(fields));
  }
  if (rows.empty()) throw FormatError(FormatError::Kind::kMalformedHeader, path.string(), "empty file");
  return rows;
}

std::string comparison_csv(const Comparison& c, int num_states) {
  std::string out = "method,avg_incremental_accuracy,gain" + acc_header(num_states) + "\n";
  for (const MethodRow& row : c.rows) {
    out += row.method + "," + format_double(row.avg) + "," + format_double(row.gain) +
           join_doubles(row.metrics.state_accuracy) + "\n";
  }
  return out;
}

// Fractions rendered as percentages with one decimal, for human-facing tables.
std::string percent(double fraction) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, 100.0 * fraction, std::chars_format::fixed, 1);
  return std::string(buf, res.ptr);
}

fs::path tables_dir(const RunSpec& spec, const fs::path& out) {
  return spec.tables_dir ? spec.resolve(*spec.tables_dir) : out / "tables";
}

std::string stem_label(const fs::path& relative) {
  std::string label = relative.parent_path().filename().string();
  if (!label.empty()) label += "_";
  return label + relative.stem().string();
}

}  // namespace

void Logger::info(const std::string& event, const Fields& fields) const {
  std::ostringstream line;
  line << "event=" << event;
  for (const auto& [key, value] : fields) line << ' ' << key << '=' << value;
  line << '\n';
  *out_ << line.str();
}

void Logger::detail(const std::string& event, const Fields& fields) const {
  if (verbose_) info(event, fields);
}

std::string reference_name(int r) { return numbered("reference_", r); }
std::string target_name(int t) { return numbered("target_", t); }

int reference_count(const RunSpec& spec) {
  if (spec.external_logits && !spec.external_logits->references.empty()) {
    return static_cast<int>(spec.external_logits->references.size());
  }
  return spec.num_references;
}

int target_count(const RunSpec& spec) {
  if (spec.external_logits && !spec.external_logits->targets.empty()) {
    return static_cast<int>(spec.external_logits->targets.size());
  }
  return spec.num_targets;
}

namespace {

IncrementalDataset make_dataset(const RunSpec& spec, const std::string& name, std::uint64_t seed) {
  if (spec.data_dir) {
    const fs::path path = spec.resolve(*spec.data_dir) / (name + ".csv");
    IncrementalDataset ds = read_dataset(path);
    check_dataset(ds, spec, path.string());
    return ds;
  }
  SynthSpec synth = spec.synthetic;
  synth.name = name;
  synth.seed = seed;
  return gen_synthetic_dataset(synth);
}

}  // namespace

IncrementalDataset reference_dataset(const RunSpec& spec, int r) {
  return make_dataset(spec, reference_name(r), spec.reference_data_seed(r));
}

IncrementalDataset target_dataset(const RunSpec& spec, int t) {
  return make_dataset(spec, target_name(t), spec.target_data_seed(t));
}

ReferenceFit fit_reference(const RunSpec& spec, int r) {
  ReferenceFit fit;
  if (spec.external_logits && !spec.external_logits->references.empty()) {
    const fs::path dir = spec.resolve(spec.external_logits->references.at(static_cast<std::size_t>(r)));
    fit.validation = read_state_dir(dir, 2, spec.num_states, spec.num_states);
  } else {
    const IncrementalDataset ds = reference_dataset(spec, r);
    BackboneConfig config = spec.backbone;
    config.seed = spec.reference_model_seed(r);
    IncrementalRun run = run_incremental(ds, split_states(ds), config);
    fit.validation.assign(std::make_move_iterator(run.validation.begin() + 1),
                          std::make_move_iterator(run.validation.end()));
  }
  CalibConfig calib = spec.calibration;
  calib.seed = spec.reference_calib_seed(r);
  fit.table = fit_all_states(fit.validation, calib, FitScope::kAllGroups, &fit.fits);
  return fit;
}

std::vector<StateLogits> target_test_logits(const RunSpec& spec, int t, bool halved) {
  if (spec.external_logits && !spec.external_logits->targets.empty()) {
    if (halved) throw SpecError("halved-data runs need a trainable target, not external logits");
    const fs::path dir = spec.resolve(spec.external_logits->targets.at(static_cast<std::size_t>(t)));
    return read_state_dir(dir, 1, spec.num_states, spec.num_states);
  }
  IncrementalDataset ds = target_dataset(spec, t);
  if (halved) ds = halve_training(ds);
  BackboneConfig config = spec.backbone;
  config.seed = spec.target_model_seed(t);
  return run_incremental(ds, split_states(ds), config).test;
}

Comparison compare_methods(std::span<const StateLogits> target, std::span<const CalibrationTable> references) {
  if (references.empty()) throw DataError("no reference tables to transfer");
  const CalibrationTable averaged = average_tables(references);
  Comparison out;
  auto add = [&](std::string method, TransferResult result) {
    MethodRow row{std::move(method), std::move(result.metrics), 0.0, 0.0};
    row.avg = row.metrics.avg_incremental.value();
    out.rows.push_back(std::move(row));
  };
  add("raw", evaluate_raw(target));
  add("bic", apply_transfer(target, collapse_to_bic(averaged)));
  add("adbic", apply_transfer(target, averaged));
  OracleResult oracle = oracle_select(references, target);
  out.oracle_choice = oracle.chosen;
  add("adbic_oracle", std::move(oracle.result));
  for (MethodRow& row : out.rows) row.gain = row.avg - out.rows.front().avg;
  return out;
}

std::vector<CalibrationTable> load_reference_tables(const RunSpec& spec, const fs::path& out) {
  const fs::path dir = tables_dir(spec, out);
  if (!fs::is_directory(dir)) throw DataError(dir.string() + ": tables directory not found; run run-reference first");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.starts_with("reference_") && name.ends_with(".table.json")) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError(dir.string() + ": no reference_*.table.json files");
  std::vector<CalibrationTable> tables;
  for (const fs::path& file : files) {
    CalibrationTable table = read_table(file);
    if (table.num_states() != spec.num_states) {
      throw DataError(file.string() + ": table covers " + std::to_string(table.num_states()) + " states, run spec has " +
                      std::to_string(spec.num_states));
    }
    tables.push_back(std::move(table));
  }
  return tables;
}

namespace {

void check_r_values(int r_max, std::span<const int> r_values) {
  for (int r : r_values) {
    if (r < 1 || r > r_max) {
      throw SpecError("sweep.r_values: R=" + std::to_string(r) + " is outside 1.." + std::to_string(r_max) +
                      " available reference tables");
    }
  }
}

}  // namespace

std::vector<SweepRow> sweep_references(std::span<const CalibrationTable> tables,
                                       std::span<const std::vector<StateLogits>> targets,
                                       std::span<const int> r_values, int samplings, std::uint64_t seed) {
  const int r_max = static_cast<int>(tables.size());
  check_r_values(r_max, r_values);
  Rng rng(seed);
  std::vector<SweepRow> rows;
  for (int r : r_values) {
    SweepRow row;
    row.r = r;
    const int draws = r == r_max ? 1 : samplings;
    for (int k = 0; k < draws; ++k) {
      std::vector<int> order(static_cast<std::size_t>(r_max));
      std::iota(order.begin(), order.end(), 0);
      if (r < r_max) std::shuffle(order.begin(), order.end(), rng);
      order.resize(static_cast<std::size_t>(r));
      std::sort(order.begin(), order.end());

      std::vector<CalibrationTable> subset;
      for (int idx : order) subset.push_back(tables[static_cast<std::size_t>(idx)]);
      const CalibrationTable averaged = average_tables(subset);
      std::vector<double> per_target;
      for (const auto& target : targets) per_target.push_back(apply_transfer(target, averaged).metrics.avg_incremental.value());
      row.accuracy.push_back(mean_of(per_target));
      row.subsets.push_back(std::move(order));
    }
    row.mean = mean_of(row.accuracy);
    row.stddev = draws == 1 ? 0.0 : population_std(row.accuracy);
    rows.push_back(std::move(row));
  }
  return rows;
}

void cmd_gen(const RunSpec& spec, const CommandOptions& options, const Logger& log) {
  if (spec.data_dir) throw SpecError("gen writes synthetic data; remove data_dir from the run spec");
  const fs::path dir = options.out / "datasets";
  const int refs = spec.num_references;
  const int total = refs + spec.num_targets;
  parallel_for(static_cast<std::size_t>(total), options.jobs, [&](std::size_t i) {
    const int idx = static_cast<int>(i);
    const IncrementalDataset ds = idx < refs ? reference_dataset(spec, idx) : target_dataset(spec, idx - refs);
    write_dataset(dir / (ds.name + ".csv"), ds);
  });
  for (int i = 0; i < total; ++i) {
    const std::string name = i < refs ? reference_name(i) : target_name(i - refs);
    log.detail("dataset", {{"name", name}, {"path", (dir / (name + ".csv")).string()}});
  }
  log.info("gen", {{"datasets", std::to_string(total)}, {"dir", dir.string()}});
}

void cmd_run_reference(const RunSpec& spec, const CommandOptions& options, const Logger& log) {
  const int n = reference_count(spec);
  std::vector<ReferenceFit> fits(static_cast<std::size_t>(n));
  parallel_for(fits.size(), options.jobs, [&](std::size_t r) { fits[r] = fit_reference(spec, static_cast<int>(r)); });

  const fs::path tables = options.out / "tables";
  std::vector<CalibrationTable> all;
  for (int r = 0; r < n; ++r) {
    const ReferenceFit& fit = fits[static_cast<std::size_t>(r)];
    const std::string name = reference_name(r);
    for (const StateLogits& logits : fit.validation) {
      write_logits(options.out / "logits" / name / state_file("validation_state_", logits.state()), logits);
    }
    write_table(tables / (name + ".table.json"), fit.table);
    std::string csv = "state,initial_loss,final_loss,steps\n";
    for (std::size_t i = 0; i < fit.fits.size(); ++i) {
      const StateFit& f = fit.fits[i];
      const int s = static_cast<int>(i) + 2;
      csv += std::to_string(s) + "," + format_double(f.initial_loss) + "," + format_double(f.final_loss) + "," +
             std::to_string(f.steps) + "\n";
      log.detail("fit", {{"reference", name},
                         {"state", std::to_string(s)},
                         {"initial_loss", format_double(f.initial_loss)},
                         {"final_loss", format_double(f.final_loss)}});
    }
    write_file_atomic(tables / (name + ".fit.csv"), csv);
    all.push_back(fit.table);
  }
  write_table(tables / "average.table.json", average_tables(all));
  log.info("run-reference", {{"references", std::to_string(n)},
                             {"parameters_per_table", std::to_string(param_count(spec.num_states))},
                             {"dir", tables.string()}});
}

void cmd_run_target(const RunSpec& spec, const CommandOptions& options, const Logger& log) {
  const std::vector<CalibrationTable> tables = load_reference_tables(spec, options.out);
  const int n = target_count(spec);
  std::vector<std::vector<StateLogits>> logits(static_cast<std::size_t>(n));
  parallel_for(logits.size(), options.jobs,
               [&](std::size_t t) { logits[t] = target_test_logits(spec, static_cast<int>(t)); });

  const int S = spec.num_states;
  std::string summary = "config,method,avg_incremental_accuracy,gain" + acc_header(S) + "\n";
  std::string table = "| config | method | avg. inc. acc. (%) | gain (pts) |";
  for (int s = 1; s <= S; ++s) table += " s=" + std::to_string(s) + " |";
  table += "\n|---|---|---|---|";
  for (int s = 1; s <= S; ++s) table += "---|";
  table += "\n";
  auto table_row = [&](const std::string& config, const std::string& method, double avg, double gain,
                       const std::vector<double>& per_state) {
    table += "| " + config + " | " + method + " | " + percent(avg) + " | " + percent(gain) + " |";
    for (double v : per_state) table += " " + percent(v) + " |";
    table += "\n";
  };
  std::vector<Comparison> comparisons;
  for (int t = 0; t < n; ++t) {
    const std::string name = target_name(t);
    const fs::path dir = options.out / "targets" / name;
    const auto& target = logits[static_cast<std::size_t>(t)];
    for (const StateLogits& l : target) write_logits(dir / state_file("test_state_", l.state()), l);

    Comparison c = compare_methods(target, tables);
    write_file_atomic(dir / "comparison.csv", comparison_csv(c, S));
    for (const MethodRow& row : c.rows) {
      write_metrics(dir / ("metrics_" + row.method + ".csv"), row.metrics);
      summary += name + "," + row.method + "," + format_double(row.avg) + "," + format_double(row.gain) +
                 join_doubles(row.metrics.state_accuracy) + "\n";
      table_row(name, row.method, row.avg, row.gain, row.metrics.state_accuracy);
      log.info("method", {{"target", name}, {"method", row.method}, {"avg_incremental_accuracy", format_double(row.avg)},
                          {"gain", format_double(row.gain)}});
    }
    // Oracle choices use target test labels; they are an upper bound, not a deployable method.
    std::string choices = "state,reference,selection_split,deployable\n";
    for (std::size_t i = 1; i < c.oracle_choice.size(); ++i) {
      choices += std::to_string(i + 1) + "," + reference_name(c.oracle_choice[i]) + ",test,false\n";
    }
    write_file_atomic(dir / "oracle_choices.csv", choices);
    comparisons.push_back(std::move(c));
  }
  if (n > 1) {
    for (std::size_t m = 0; m < comparisons.front().rows.size(); ++m) {
      std::vector<double> avg, gain, per_state(static_cast<std::size_t>(S), 0.0);
      for (const Comparison& c : comparisons) {
        avg.push_back(c.rows[m].avg);
        gain.push_back(c.rows[m].gain);
        for (int s = 0; s < S; ++s) per_state[static_cast<std::size_t>(s)] += c.rows[m].metrics.state_accuracy[static_cast<std::size_t>(s)];
      }
      for (double& v : per_state) v /= n;
      summary += "mean," + comparisons.front().rows[m].method + "," + format_double(mean_of(avg)) + "," +
                 format_double(mean_of(gain)) + join_doubles(per_state) + "\n";
      table_row("mean", comparisons.front().rows[m].method, mean_of(avg), mean_of(gain), per_state);
    }
  }
  write_file_atomic(options.out / "comparison.csv", summary);
  table += "\nadbic_oracle picks the best reference per state on target test labels: an upper bound, not a "
           "deployable method.\n";
  write_file_atomic(options.out / "comparison.md", table);
  log.info("run-target", {{"targets", std::to_string(n)}, {"references", std::to_string(tables.size())}});
}

void cmd_sweep(const RunSpec& spec, const CommandOptions& options, const Logger& log) {
  const std::vector<CalibrationTable> tables = load_reference_tables(spec, options.out);
  const int r_max = static_cast<int>(tables.size());
  std::vector<int> r_values = spec.sweep.r_values;
  if (r_values.empty()) {
    r_values.resize(static_cast<std::size_t>(r_max));
    std::iota(r_values.begin(), r_values.end(), 1);
  }
  check_r_values(r_max, r_values);
  const int n = target_count(spec);
  std::vector<std::vector<StateLogits>> targets(static_cast<std::size_t>(n));
  parallel_for(targets.size(), options.jobs,
               [&](std::size_t t) { targets[t] = target_test_logits(spec, static_cast<int>(t)); });

  std::vector<double> raw_avgs;
  for (const auto& target : targets) raw_avgs.push_back(evaluate_raw(target).metrics.avg_incremental.value());
  const double raw_mean = mean_of(raw_avgs);

  std::string csv = "r,samplings,mean,std,raw_mean,gain\n";
  std::string samples_csv = "r,sampling,references,accuracy\n";
  std::string table = "| R | samplings | adBiC (%) | raw (%) |\n|---|---|---|---|\n";
  for (const SweepRow& row : sweep_references(tables, targets, r_values, spec.sweep.samplings, spec.sweep_seed())) {
    const int samplings = static_cast<int>(row.subsets.size());
    for (int k = 0; k < samplings; ++k) {
      std::string names;
      for (int idx : row.subsets[static_cast<std::size_t>(k)]) names += (names.empty() ? "" : ";") + std::to_string(idx);
      samples_csv += std::to_string(row.r) + "," + std::to_string(k) + "," + names + "," +
                     format_double(row.accuracy[static_cast<std::size_t>(k)]) + "\n";
    }
    csv += std::to_string(row.r) + "," + std::to_string(samplings) + "," + format_double(row.mean) + "," +
           format_double(row.stddev) + "," + format_double(raw_mean) + "," + format_double(row.mean - raw_mean) + "\n";
    table += "| " + std::to_string(row.r) + " | " + std::to_string(samplings) + " | " + percent(row.mean) + " ± " +
             percent(row.stddev) + " | " + percent(raw_mean) + " |\n";
    log.info("sweep", {{"r", std::to_string(row.r)}, {"samplings", std::to_string(samplings)},
                       {"mean", format_double(row.mean)}, {"std", format_double(row.stddev)}});
  }
  write_file_atomic(options.out / "sweep_r.csv", csv);
  write_file_atomic(options.out / "sweep_r_samples.csv", samples_csv);
  write_file_atomic(options.out / "sweep_r.md", table);

  if (!spec.sweep.halved) return;
  const int S = spec.num_states;
  std::vector<std::vector<StateLogits>> halved(static_cast<std::size_t>(n));
  std::vector<int> per_class(static_cast<std::size_t>(n), 0);
  parallel_for(halved.size(), options.jobs, [&](std::size_t t) {
    halved[t] = target_test_logits(spec, static_cast<int>(t), true);
    const IncrementalDataset ds = halve_training(target_dataset(spec, static_cast<int>(t)));
    std::vector<int> counts(static_cast<std::size_t>(ds.schedule.num_classes()), 0);
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.splits[i] == Split::kTrain) ++counts[static_cast<std::size_t>(ds.labels[i])];
    }
    per_class[t] = *std::min_element(counts.begin(), counts.end());
  });
  std::string halved_csv = "config,method,train_per_class,avg_incremental_accuracy,gain" + acc_header(S) + "\n";
  for (int t = 0; t < n; ++t) {
    const Comparison c = compare_methods(halved[static_cast<std::size_t>(t)], tables);
    for (const MethodRow& row : c.rows) {
      if (row.method == "adbic_oracle") continue;
      halved_csv += target_name(t) + "," + row.method + "," + std::to_string(per_class[static_cast<std::size_t>(t)]) +
                    "," + format_double(row.avg) + "," + format_double(row.gain) +
                    join_doubles(row.metrics.state_accuracy) + "\n";
      log.info("halved", {{"target", target_name(t)}, {"method", row.method},
                          {"train_per_class", std::to_string(per_class[static_cast<std::size_t>(t)])},
                          {"avg_incremental_accuracy", format_double(row.avg)}});
    }
  }
  write_file_atomic(options.out / "halved.csv", halved_csv);
}

namespace {

std::string plot_comparison(const fs::path& path) {
  const CsvRows rows = read_csv(path);
  const auto& header = rows.front();
  const auto method_col = std::find(header.begin(), header.end(), "method");
  if (method_col == header.end()) {
    throw FormatError(FormatError::Kind::kSchema, path.string() + ":1", "missing column 'method'");
  }
  std::vector<std::size_t> acc_cols;
  for (int s = 1;; ++s) {
    const auto it = std::find(header.begin(), header.end(), "acc_s" + std::to_string(s));
    if (it == header.end()) break;
    acc_cols.push_back(static_cast<std::size_t>(it - header.begin()));
  }
  if (acc_cols.empty()) throw FormatError(FormatError::Kind::kSchema, path.string() + ":1", "missing column 'acc_s1'");
  const std::size_t m = static_cast<std::size_t>(method_col - header.begin());
  std::vector<ChartSeries> series;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    if (rows[i].size() != header.size()) {
      throw FormatError(FormatError::Kind::kSchema, where, "expected " + std::to_string(header.size()) + " fields");
    }
    ChartSeries line{rows[i][m], {}, rows[i][m] == "raw"};
    for (std::size_t col : acc_cols) line.values.push_back(parse_double(rows[i][col], where));
    series.push_back(std::move(line));
  }
  if (series.empty()) throw FormatError(FormatError::Kind::kSchema, path.string(), "no method rows");
  return line_chart_svg("Per-state accuracy: " + path.parent_path().filename().string(), series);
}

std::string plot_metrics(const fs::path& path) {
  const RunMetrics metrics = read_metrics(path);
  return heat_grid_svg("Group accuracy: " + stem_label(path), metrics.group_accuracy);
}

}  // namespace

void cmd_plot(const RunSpec& spec, const CommandOptions& options, const Logger& log) {
  std::vector<fs::path> comparison, metrics;
  if (spec.plot) {
    for (const auto& p : spec.plot->comparison) comparison.push_back(options.out / p);
    for (const auto& p : spec.plot->metrics) metrics.push_back(options.out / p);
  } else {
    const fs::path targets = options.out / "targets";
    if (!fs::is_directory(targets)) throw DataError(targets.string() + ": not found; run run-target first");
    for (const auto& entry : fs::directory_iterator(targets)) {
      if (!entry.is_directory()) continue;
      for (const auto& file : fs::directory_iterator(entry.path())) {
        const std::string name = file.path().filename().string();
        if (name == "comparison.csv") comparison.push_back(file.path());
        if (name.starts_with("metrics_") && name.ends_with(".csv")) metrics.push_back(file.path());
      }
    }
    std::sort(comparison.begin(), comparison.end());
    std::sort(metrics.begin(), metrics.end());
  }
  const fs::path dir = options.out / "plots";
  for (const fs::path& p : comparison) {
    const fs::path svg = dir / (stem_label(fs::relative(p, options.out)) + ".svg");
    write_file_atomic(svg, plot_comparison(p));
    log.detail("plot", {{"input", p.string()}, {"svg", svg.string()}});
  }
  for (const fs::path& p : metrics) {
    const fs::path svg = dir / (stem_label(fs::relative(p, options.out)) + ".svg");
    write_file_atomic(svg, plot_metrics(p));
    log.detail("plot", {{"input", p.string()}, {"svg", svg.string()}});
  }
  log.info("plot", {{"charts", std::to_string(comparison.size() + metrics.size())}, {"dir", dir.string()}});
}

int run_command(const CommandOptions& options, std::ostream& err) {
  const Logger log(err, options.verbose);
  const auto started = std::chrono::steady_clock::now();
  auto fail = [&](const char* kind, const std::exception& e, int code) {
    log.info("error", {{"kind", kind}, {"command", options.command}, {"message", "\"" + std::string(e.what()) + "\""}});
    return code;
  };
  try {
    if (options.jobs < 1) throw SpecError("--jobs must be >= 1");
    const RunSpec spec = load_run_spec(options.spec);
    log.detail("start", {{"command", options.command}, {"spec", options.spec.string()},
                         {"seed", std::to_string(spec.seed)}, {"jobs", std::to_string(options.jobs)}});
    if (options.command == "gen") {
      cmd_gen(spec, options, log);
    } else if (options.command == "run-reference") {
      cmd_run_reference(spec, options, log);
    } else if (options.command == "run-target") {
      cmd_run_target(spec, options, log);
    } else if (options.command == "sweep") {
      cmd_sweep(spec, options, log);
    } else if (options.command == "plot") {
      cmd_plot(spec, options, log);
    } else {
      throw SpecError("unknown command '" + options.command + "'");
    }
  } catch (const SpecError& e) {
    return fail("spec", e, 2);
  } catch (const DataError& e) {
    return fail("data", e, 3);
  } catch (const NumericError& e) {
    return fail("numeric", e, 4);
  } catch (const std::exception& e) {
    return fail("internal", e, 1);
  }
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
  log.info("done", {{"command", options.command}, {"elapsed_ms", std::to_string(ms.count())}});
  return 0;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Transfer of adaptive bias-correction parameters across memoryless incremental learners", "calib-il"};
  app.require_subcommand(1, 1);
  CommandOptions options;
  const char* commands[][2] = {
      {"gen", "Generate synthetic reference and target datasets"},
      {"run-reference", "Train reference runs and fit one calibration table each"},
      {"run-target", "Apply averaged reference tables to target runs and compare methods"},
      {"sweep", "Vary the number of reference tables and the target training size"},
      {"plot", "Render per-state accuracy curves and group-accuracy heat grids as SVG"},
  };
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--spec", options.spec, "Run-spec JSON file")->required();
    sub->add_option("--out", options.out, "Output directory")->required();
    sub->add_option("--jobs", options.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--verbose", options.verbose, "Log per-state details");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }
  options.command = app.get_subcommands().front()->get_name();
  return run_command(options, err);
}

}  // namespace calib_il::cli
