#pragma once

// Data ingestion and serialization.
//
// Raw CSV schema (fixed, versioned):   subject_id,date,bbt,menses,age_group
//   - date is ISO-8601 (YYYY-MM-DD); bbt may be empty (missing); menses is
//     0/1 where 1 marks the onset day only (multi-day bleeding must already
//     be collapsed to onset flags by the data provider).
// Processed series CSV schema:         subject_id,cycle_index,day,y,z,age_group
//   - y is the standardized BBT (empty = missing). Loading a processed file
//     re-applies nothing, which makes preprocessing idempotent.
//
// Preprocessing: per-cycle standardization (subtract the median of the BBT
// observed in the first seven days), applicability (a cycle must have at
// least one BBT value in those days), and the per-age-group trim of the
// shortest/longest 5% of cycles by nearest rank.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "mcycle/bench.hpp"
#include "mcycle/estimator.hpp"
#include "mcycle/model.hpp"
#include "mcycle/onset.hpp"
#include "mcycle/simulator.hpp"
#include "mcycle/stages.hpp"

namespace mcycle {
namespace io {

struct RawRecord {
  std::string subject_id;
  std::string date;  // ISO-8601
  long day_serial = 0;
  std::optional<double> bbt;
  int menses = 0;
  std::string age_group;
};

// Days since 1970-01-01 for an ISO date; ParseError on malformed input.
long date_serial(const std::string& iso);

std::vector<RawRecord> load_raw_csv(const std::string& path);

std::vector<CycleSeries> load_series_csv(const std::string& path);
void write_series_csv(const std::string& path, const std::vector<CycleSeries>& series);

struct PreprocessConfig {
  int gap_split_days = 5;  // interior gaps longer than this split the series
};

struct DroppedCycle {
  std::string subject_id;
  std::string start_date;
  int length = 0;        // days, 0 when unknown
  std::string reason;    // exactly one primary reason code
};

struct PreprocessReport {
  int cycles_kept = 0;
  std::vector<DroppedCycle> dropped;
  std::map<std::string, int> drop_counts;
  // Standardization offset per kept cycle, keyed subject_id#start_date.
  std::vector<std::pair<std::string, double>> offsets;
};

// Median of the BBT observed during days 1..7 (mean-of-middle-two for even
// counts); NotApplicableError when all are missing.
double first_week_offset(const std::vector<std::optional<double>>& bbt);

// Subtracts the first-week median; missing values stay missing.
std::vector<double> standardize_bbt(const std::vector<std::optional<double>>& bbt, double* offset);

// Raw records -> standardized complete cycles, with every drop accounted for.
std::vector<CycleSeries> build_cycles(const std::vector<RawRecord>& records,
                                      const PreprocessConfig& config, PreprocessReport* report);

// Per age group, drops the shortest and longest 5% of cycles by nearest rank
// (boundary ties are kept).
std::vector<CycleSeries> select_cycles(const std::vector<CycleSeries>& cycles,
                                       PreprocessReport* report);

// Header-dispatched loader: raw files run the full preprocessing (without the
// 5% trim unless requested); processed files load as-is.
std::vector<CycleSeries> load_any_csv(const std::string& path, const PreprocessConfig& config,
                                      bool apply_trim, PreprocessReport* report);

// --- JSON schemas (round-trippable) ---

nlohmann::json params_to_json(const ModelParams& params);
ModelParams params_from_json(const nlohmann::json& j);

nlohmann::json fit_result_to_json(const FitResult& result);
FitResult fit_result_from_json(const nlohmann::json& j);

nlohmann::json onset_to_json(const OnsetDistribution& dist);
OnsetDistribution onset_from_json(const nlohmann::json& j);

nlohmann::json bench_to_json(const BenchReport& report);
BenchReport bench_from_json(const nlohmann::json& j);

nlohmann::json preprocess_report_to_json(const PreprocessReport& report);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

// --- CSV outputs ---

void write_bench_csv(const std::string& path, const BenchReport& report);
void write_stage_stats_csv(const std::string& path,
                           const std::vector<std::pair<std::string, StageStats>>& by_group);
// Long-format density dump: day,bin,theta,filtering,predictive[,smoothed]
void write_density_csv(const std::string& path, const FilterOutput& out,
                       const std::vector<PhaseDensity>* smoothed);

// --- config files (key = value lines, # comments) ---

std::map<std::string, std::string> parse_config_file(const std::string& path);
SimConfig sim_config_from_file(const std::string& path);

// --- run manifest ---

uint64_t fnv1a_file(const std::string& path);
// Writes <dir>/manifest.json describing the run. The timestamp field is the
// only part excluded from the byte-reproducibility contract.
void write_manifest(const std::string& dir, const std::string& command,
                    const std::vector<std::string>& args,
                    const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& output_paths, const nlohmann::json& settings);

}  // namespace io
}  // namespace mcycle
