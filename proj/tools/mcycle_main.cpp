// Command-line interface: preprocess, simulate, fit, filter, predict, stages,
// bench. Every command writes its outputs plus a run manifest; exit codes are
// 0 success, 2 input error, 3 numerical failure, 4 internal invariant
// violation.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mcycle/bench.hpp"
#include "mcycle/errors.hpp"
#include "mcycle/estimator.hpp"
#include "mcycle/filter.hpp"
#include "mcycle/io.hpp"
#include "mcycle/model.hpp"
#include "mcycle/onset.hpp"
#include "mcycle/simulator.hpp"
#include "mcycle/stages.hpp"

using namespace mcycle;
namespace fs = std::filesystem;

namespace {

struct CommonOpts {
  int grid = 512;
  int threads = 0;  // 0 = library default
};

void apply_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

ModelParams load_params_file(const std::string& path, const std::string& age_group) {
  nlohmann::json j = io::read_json(path);
  if (j.contains("fits")) {
    if (age_group.empty()) {
      throw ParseError(path + " holds per-group fits; pass --age-group to select one");
    }
    if (!j["fits"].contains(age_group)) {
      throw ParseError(path + ": no fit for age group " + age_group);
    }
    return io::params_from_json(j["fits"][age_group]["params"]);
  }
  if (j.contains("params")) return io::params_from_json(j["params"]);
  return io::params_from_json(j);
}

std::vector<CycleSeries> load_data(const std::string& path, int gap_split, bool trim,
                                   io::PreprocessReport* report) {
  io::PreprocessConfig cfg;
  cfg.gap_split_days = gap_split;
  return io::load_any_csv(path, cfg, trim, report);
}

void write_truth_csv(const std::string& path, const std::vector<SimulatedCycle>& cycles) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << "subject_id,cycle_index,day,theta,cycle_length,stage2_start_day\n";
  for (size_t c = 0; c < cycles.size(); ++c) {
    const SimulatedCycle& cyc = cycles[c];
    for (size_t t = 0; t < cyc.theta.size(); ++t) {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.17g", cyc.theta[t]);
      out << cyc.series.subject_id << ",1," << t + 1 << ',' << buf << ',' << cyc.cycle_length
          << ',' << cyc.stage2_start_day << '\n';
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Biphasic menstrual-cycle state-space model toolkit"};
  app.require_subcommand(1);
  CommonOpts common;

  // ---- preprocess ----
  auto* cmd_pre = app.add_subcommand("preprocess", "Standardize raw records into cycle series");
  std::string pre_data, pre_out, pre_report;
  int pre_gap = 5;
  bool pre_no_trim = false;
  cmd_pre->add_option("--data", pre_data, "raw CSV input")->required();
  cmd_pre->add_option("--out", pre_out, "processed series CSV")->required();
  cmd_pre->add_option("--report", pre_report, "preprocessing report JSON");
  cmd_pre->add_option("--gap-split", pre_gap, "split series on gaps longer than this (days)");
  cmd_pre->add_flag("--no-trim", pre_no_trim, "skip the per-age-group 5% length trim");

  // ---- simulate ----
  auto* cmd_sim = app.add_subcommand("simulate", "Generate synthetic cycles");
  std::string sim_config, sim_out;
  std::optional<uint64_t> sim_seed;
  bool sim_raw_bbt = false;
  cmd_sim->add_option("--config", sim_config, "simulation config file")->required();
  cmd_sim->add_option("--out", sim_out, "output directory")->required();
  cmd_sim->add_option("--seed", sim_seed, "override the config seed");
  cmd_sim->add_flag("--raw-bbt", sim_raw_bbt,
                    "emit a raw-schema CSV with bbt = 36.5 + y instead of a series CSV");

  // ---- fit ----
  auto* cmd_fit = app.add_subcommand("fit", "Maximum-likelihood parameter estimation");
  std::string fit_data, fit_out, fit_variant = "FE", fit_init, fit_pooling = "global";
  int fit_max_evals = 2000, fit_gap = 5;
  double fit_tol = 1e-5;
  bool fit_ci = false, fit_trim = false;
  cmd_fit->add_option("--data", fit_data, "cycle CSV (raw or processed)")->required();
  cmd_fit->add_option("--out", fit_out, "fit result JSON")->required();
  cmd_fit->add_option("--variant", fit_variant, "FE, RE, I1, I2 or I3");
  cmd_fit->add_option("--init", fit_init, "warm-start parameter JSON");
  cmd_fit->add_option("--pooling", fit_pooling, "global, per-group or per-subject");
  cmd_fit->add_option("--grid", common.grid, "phase grid bins");
  cmd_fit->add_option("--max-evals", fit_max_evals, "optimizer evaluation budget");
  cmd_fit->add_option("--tol", fit_tol, "log-likelihood convergence tolerance");
  cmd_fit->add_option("--gap-split", fit_gap, "gap split threshold for raw input");
  cmd_fit->add_flag("--ci", fit_ci, "compute the numerical Hessian and 95% intervals");
  cmd_fit->add_flag("--trim", fit_trim, "apply the 5% length trim to raw input");
  cmd_fit->add_option("--threads", common.threads, "worker threads (0 = all)");

  // ---- filter ----
  auto* cmd_filter = app.add_subcommand("filter", "Run the grid filter/smoother over series");
  std::string flt_params, flt_series, flt_out, flt_age;
  bool flt_smooth = false;
  cmd_filter->add_option("--params", flt_params, "fit result or params JSON")->required();
  cmd_filter->add_option("--series", flt_series, "cycle CSV")->required();
  cmd_filter->add_option("--out", flt_out, "output directory")->required();
  cmd_filter->add_option("--grid", common.grid, "phase grid bins");
  cmd_filter->add_option("--age-group", flt_age, "select a per-group fit");
  cmd_filter->add_flag("--smooth", flt_smooth, "also emit smoothed densities");

  // ---- predict ----
  auto* cmd_pred = app.add_subcommand("predict", "Onset-day predictive distribution");
  std::string prd_params, prd_series, prd_out, prd_age, prd_subject;
  int prd_at_day = 0, prd_k_max = 90;
  cmd_pred->add_option("--params", prd_params, "fit result or params JSON")->required();
  cmd_pred->add_option("--series", prd_series, "cycle CSV")->required();
  cmd_pred->add_option("--at-day", prd_at_day, "prediction day (data up to this day)")->required();
  cmd_pred->add_option("--k-max", prd_k_max, "prediction horizon in days");
  cmd_pred->add_option("--out", prd_out, "output JSON (default: stdout)");
  cmd_pred->add_option("--age-group", prd_age, "select a per-group fit");
  cmd_pred->add_option("--subject", prd_subject, "subject id (default: first series)");
  cmd_pred->add_option("--grid", common.grid, "phase grid bins");

  // ---- stages ----
  auto* cmd_stages = app.add_subcommand("stages", "Stage identification and summaries");
  std::string stg_params, stg_data, stg_out, stg_age, stg_basis = "smoothed";
  cmd_stages->add_option("--params", stg_params, "fit result or params JSON")->required();
  cmd_stages->add_option("--data", stg_data, "cycle CSV")->required();
  cmd_stages->add_option("--out", stg_out, "output directory")->required();
  cmd_stages->add_option("--basis", stg_basis, "smoothed or filtering");
  cmd_stages->add_option("--age-group", stg_age, "select a per-group fit");
  cmd_stages->add_option("--grid", common.grid, "phase grid bins");
  cmd_stages->add_option("--threads", common.threads, "worker threads (0 = all)");

  // ---- bench ----
  auto* cmd_bench = app.add_subcommand("bench", "Prediction-accuracy benchmark");
  std::string bch_train, bch_test, bch_out, bch_models = "FE,RE,I1,I2,I3,C";
  int bch_max_evals = 2000;
  cmd_bench->add_option("--train", bch_train, "training cycle CSV")->required();
  cmd_bench->add_option("--test", bch_test, "test cycle CSV")->required();
  cmd_bench->add_option("--out", bch_out, "output directory")->required();
  cmd_bench->add_option("--models", bch_models, "comma-separated model codes");
  cmd_bench->add_option("--grid", common.grid, "phase grid bins");
  cmd_bench->add_option("--max-evals", bch_max_evals, "optimizer budget per model");
  cmd_bench->add_option("--threads", common.threads, "worker threads (0 = all)");

  CLI11_PARSE(app, argc, argv);
  apply_threads(common.threads);

  if (cmd_pre->parsed()) {
    io::PreprocessReport report;
    io::PreprocessConfig cfg;
    cfg.gap_split_days = pre_gap;
    std::vector<CycleSeries> cycles = io::load_any_csv(pre_data, cfg, !pre_no_trim, &report);
    io::write_series_csv(pre_out, cycles);
    if (!pre_report.empty()) io::write_json(pre_report, io::preprocess_report_to_json(report));
    std::vector<std::string> outs = {pre_out};
    if (!pre_report.empty()) outs.push_back(pre_report);
    io::write_manifest(fs::path(pre_out).parent_path().string().empty()
                           ? "."
                           : fs::path(pre_out).parent_path().string(),
                       "preprocess", {pre_data}, {pre_data}, outs,
                       {{"gap_split", pre_gap}, {"trim", !pre_no_trim}});
    std::printf("kept %d cycles; dropped %zu\n", report.cycles_kept, report.dropped.size());
    return 0;
  }

  if (cmd_sim->parsed()) {
    SimConfig cfg = io::sim_config_from_file(sim_config);
    if (sim_seed) cfg.seed = *sim_seed;
    cfg.exec = Exec::Parallel;
    fs::create_directories(sim_out);
    std::vector<SimulatedCycle> cycles = simulate(cfg);
    std::vector<CycleSeries> series;
    for (const SimulatedCycle& c : cycles) series.push_back(c.series);
    std::string series_path = sim_out + "/series.csv";
    if (sim_raw_bbt) {
      std::ofstream out(series_path);
      out << "subject_id,date,bbt,menses,age_group\n";
      long day0 = io::date_serial("2020-01-01");
      long day = 0;
      for (const CycleSeries& s : series) {
        for (int t = 0; t < s.length(); ++t, ++day) {
          long serial = day0 + day;
          // civil date from serial, inverse of date_serial
          long z = serial + 719468;
          long era = (z >= 0 ? z : z - 146096) / 146097;
          unsigned doe = static_cast<unsigned>(z - era * 146097);
          unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
          long y = static_cast<long>(yoe) + era * 400;
          unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
          unsigned mp = (5 * doy + 2) / 153;
          unsigned d = doy - (153 * mp + 2) / 5 + 1;
          unsigned m = mp < 10 ? mp + 3 : mp - 9;
          if (m <= 2) ++y;
          char date[24];
          std::snprintf(date, sizeof(date), "%04ld-%02u-%02u", y, m, d);
          out << s.subject_id << ',' << date << ',';
          if (s.has_y(t)) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.4f", 36.5 + s.y[static_cast<size_t>(t)]);
            out << buf;
          }
          out << ',' << static_cast<int>(s.z[static_cast<size_t>(t)]) << ",\n";
        }
      }
    } else {
      io::write_series_csv(series_path, series);
    }
    write_truth_csv(sim_out + "/truth.csv", cycles);
    io::write_manifest(sim_out, "simulate", {sim_config}, {sim_config},
                       {series_path, sim_out + "/truth.csv"},
                       {{"seed", cfg.seed},
                        {"n_cycles", cfg.n_cycles},
                        {"missing_rate", cfg.missing_rate},
                        {"raw_bbt", sim_raw_bbt}});
    std::printf("wrote %zu cycles to %s\n", cycles.size(), series_path.c_str());
    return 0;
  }

  if (cmd_fit->parsed()) {
    auto variant = variant_from_code(fit_variant);
    if (!variant) throw ParseError("unknown variant " + fit_variant);
    std::vector<CycleSeries> data = load_data(fit_data, fit_gap, fit_trim, nullptr);
    if (data.empty()) throw ParseError(fit_data + ": no usable cycles");
    FitSpec spec;
    spec.variant = *variant;
    spec.n_bins = common.grid;
    spec.max_evals = fit_max_evals;
    spec.tol = fit_tol;
    if (fit_pooling == "per-group") spec.pooling = Pooling::PerGroup;
    else if (fit_pooling == "per-subject") spec.pooling = Pooling::PerSubject;
    else if (fit_pooling != "global") throw ParseError("unknown pooling " + fit_pooling);

    auto run_one = [&](const std::vector<CycleSeries>& subset) {
      ModelParams init = fit_init.empty() ? default_init(*variant, subset)
                                          : load_params_file(fit_init, "");
      FitResult r = fit(subset, spec, init);
      if (fit_ci) confidence_intervals(r, subset, spec);
      return r;
    };

    nlohmann::json out_json;
    bool any_nonconverged = false;
    if (spec.pooling == Pooling::Global) {
      FitResult r = run_one(data);
      any_nonconverged = !r.converged;
      out_json = io::fit_result_to_json(r);
    } else {
      std::map<std::string, std::vector<CycleSeries>> groups;
      for (const CycleSeries& s : data) {
        groups[spec.pooling == Pooling::PerGroup ? s.age_group : s.subject_id].push_back(s);
      }
      out_json["pooling"] = fit_pooling;
      for (auto& kv : groups) {
        FitResult r = run_one(kv.second);
        any_nonconverged = any_nonconverged || !r.converged;
        out_json["fits"][kv.first] = io::fit_result_to_json(r);
      }
    }
    io::write_json(fit_out, out_json);
    std::string dir = fs::path(fit_out).parent_path().string();
    io::write_manifest(dir.empty() ? "." : dir, "fit", {fit_data, fit_variant}, {fit_data},
                       {fit_out},
                       {{"variant", fit_variant},
                        {"grid", common.grid},
                        {"max_evals", fit_max_evals},
                        {"tol", fit_tol},
                        {"pooling", fit_pooling}});
    if (any_nonconverged) {
      std::fprintf(stderr, "warning: optimizer budget exhausted before convergence\n");
      return 3;
    }
    return 0;
  }

  if (cmd_filter->parsed()) {
    ModelParams params = load_params_file(flt_params, flt_age);
    std::vector<CycleSeries> series = load_data(flt_series, 5, false, nullptr);
    if (series.empty()) throw ParseError(flt_series + ": no series");
    fs::create_directories(flt_out);
    FilterConfig fcfg;
    fcfg.n_bins = common.grid;
    PhaseGrid grid(common.grid);
    nlohmann::json summary = nlohmann::json::array();
    std::vector<std::string> outputs;
    std::map<std::string, int> counter;
    for (const CycleSeries& s : series) {
      int idx = ++counter[s.subject_id];
      FilterOutput fo = filter_series(s, params, InitialCondition::for_series(s, grid), fcfg);
      std::vector<PhaseDensity> smoothed;
      if (flt_smooth) smoothed = smooth_series(fo, params);
      std::string name = s.subject_id + "_" + std::to_string(idx);
      std::string dpath = flt_out + "/" + name + "_density.csv";
      io::write_density_csv(dpath, fo, flt_smooth ? &smoothed : nullptr);
      outputs.push_back(dpath);
      summary.push_back({{"series", name},
                         {"days", s.length()},
                         {"loglik", fo.total_loglik},
                         {"log_increments", fo.log_increments}});
    }
    io::write_json(flt_out + "/loglik.json", summary);
    outputs.push_back(flt_out + "/loglik.json");
    io::write_manifest(flt_out, "filter", {flt_params, flt_series}, {flt_params, flt_series},
                       outputs, {{"grid", common.grid}, {"smooth", flt_smooth}});
    return 0;
  }

  if (cmd_pred->parsed()) {
    ModelParams params = load_params_file(prd_params, prd_age);
    std::vector<CycleSeries> series = load_data(prd_series, 5, false, nullptr);
    if (series.empty()) throw ParseError(prd_series + ": no series");
    const CycleSeries* chosen = &series[0];
    if (!prd_subject.empty()) {
      chosen = nullptr;
      for (const CycleSeries& s : series) {
        if (s.subject_id == prd_subject) {
          chosen = &s;
          break;
        }
      }
      if (!chosen) throw ParseError("no series for subject " + prd_subject);
    }
    if (prd_at_day < 1 || prd_at_day > chosen->length()) {
      throw ParseError("--at-day must lie in [1, " + std::to_string(chosen->length()) + "]");
    }
    CycleSeries upto = *chosen;
    upto.y.resize(static_cast<size_t>(prd_at_day));
    upto.z.resize(static_cast<size_t>(prd_at_day));
    PhaseGrid grid(common.grid);
    FilterConfig fcfg;
    fcfg.n_bins = common.grid;
    FilterOutput fo = filter_series(upto, params, InitialCondition::for_series(upto, grid), fcfg);
    OnsetEngineConfig ecfg = OnsetEngineConfig::aligned_to(grid, 4.0, std::max(prd_k_max, 1));
    ecfg.exec = Exec::Parallel;
    OnsetEngine engine(params, ecfg);
    OnsetDistribution dist = engine.onset_distribution(fo.filtering.back(), prd_k_max);
    nlohmann::json j = io::onset_to_json(dist);
    j["subject_id"] = chosen->subject_id;
    j["at_day"] = prd_at_day;
    if (prd_out.empty()) {
      std::cout << j.dump(2) << '\n';
    } else {
      io::write_json(prd_out, j);
      std::string dir = fs::path(prd_out).parent_path().string();
      io::write_manifest(dir.empty() ? "." : dir, "predict", {prd_params, prd_series},
                         {prd_params, prd_series}, {prd_out},
                         {{"at_day", prd_at_day}, {"k_max", prd_k_max}, {"grid", common.grid}});
    }
    return 0;
  }

  if (cmd_stages->parsed()) {
    ModelParams params = load_params_file(stg_params, stg_age);
    std::vector<CycleSeries> data = load_data(stg_data, 5, false, nullptr);
    if (data.empty()) throw ParseError(stg_data + ": no cycles");
    if (stg_basis != "smoothed" && stg_basis != "filtering") {
      throw ParseError("--basis must be smoothed or filtering");
    }
    fs::create_directories(stg_out);
    PhaseGrid grid(common.grid);
    FilterConfig fcfg;
    fcfg.n_bins = common.grid;

    std::map<std::string, std::vector<CycleStageSummary>> by_group;
    std::ofstream per_cycle(stg_out + "/cycles.csv");
    per_cycle << "subject_id,cycle_index,age_group,first_stage,second_stage,monophasic,non_monotone\n";
    std::map<std::string, int> counter;
    for (const CycleSeries& s : data) {
      int idx = ++counter[s.subject_id];
      FilterOutput fo = filter_series(s, params, InitialCondition::for_series(s, grid), fcfg);
      std::vector<PhaseDensity> dens =
          stg_basis == "smoothed" ? smooth_series(fo, params) : fo.filtering;
      CycleStageSummary cs = stage_lengths(dens);
      by_group[s.age_group].push_back(cs);
      per_cycle << s.subject_id << ',' << idx << ',' << s.age_group << ',' << cs.first_stage_length
                << ',' << cs.second_stage_length << ',' << (cs.monophasic ? 1 : 0) << ','
                << (cs.non_monotone ? 1 : 0) << '\n';
    }
    per_cycle.close();
    std::vector<std::pair<std::string, StageStats>> stats;
    for (const auto& kv : by_group) {
      stats.emplace_back(kv.first, population_stage_stats(kv.second));
    }
    io::write_stage_stats_csv(stg_out + "/stage_stats.csv", stats);
    io::write_manifest(stg_out, "stages", {stg_params, stg_data}, {stg_params, stg_data},
                       {stg_out + "/cycles.csv", stg_out + "/stage_stats.csv"},
                       {{"basis", stg_basis}, {"grid", common.grid}});
    return 0;
  }

  if (cmd_bench->parsed()) {
    std::vector<CycleSeries> train = load_data(bch_train, 5, false, nullptr);
    std::vector<CycleSeries> test = load_data(bch_test, 5, false, nullptr);
    BenchConfig cfg;
    cfg.models.clear();
    std::stringstream ss(bch_models);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      if (!tok.empty()) cfg.models.push_back(tok);
    }
    cfg.n_bins = common.grid;
    cfg.max_evals = bch_max_evals;
    fs::create_directories(bch_out);
    BenchReport rep = run_benchmark(train, test, cfg);
    io::write_bench_csv(bch_out + "/bench.csv", rep);
    io::write_json(bch_out + "/bench.json", io::bench_to_json(rep));
    io::write_manifest(bch_out, "bench", {bch_train, bch_test, bch_models},
                       {bch_train, bch_test}, {bch_out + "/bench.csv", bch_out + "/bench.json"},
                       {{"models", bch_models}, {"grid", common.grid}, {"max_evals", bch_max_evals}});
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ParseError& e) {
    nlohmann::json err = {{"error", "input"}, {"what", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  } catch (const SchemaError& e) {
    nlohmann::json err = {{"error", "schema"}, {"what", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  } catch (const NotApplicableError& e) {
    nlohmann::json err = {{"error", "not_applicable"}, {"what", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  } catch (const ZeroLikelihoodError& e) {
    nlohmann::json err = {{"error", "zero_likelihood"}, {"day", e.day()}, {"what", e.what()}};
    std::cerr << err.dump() << '\n';
    return 3;
  } catch (const SafetyCapError& e) {
    nlohmann::json err = {{"error", "safety_cap"}, {"what", e.what()}};
    std::cerr << err.dump() << '\n';
    return 3;
  } catch (const InvariantError& e) {
    nlohmann::json err = {{"error", "invariant"}, {"what", e.what()}};
    std::cerr << err.dump() << '\n';
    return 4;
  } catch (const std::invalid_argument& e) {
    nlohmann::json err = {{"error", "input"}, {"what", e.what()}};
    std::cerr << err.dump() << '\n';
    return 2;
  } catch (const std::exception& e) {
    nlohmann::json err = {{"error", "internal"}, {"what", e.what()}};
    std::cerr << err.dump() << '\n';
    return 4;
  }
}
