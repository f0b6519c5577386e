#include "mcycle/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "mcycle/errors.hpp"

namespace mcycle {
namespace io {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

std::string fmt_double(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

double parse_double(const std::string& s, const std::string& what, int row) {
  try {
    size_t pos = 0;
    double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("row " + std::to_string(row) + ": bad " + what + " value '" + s + "'");
  }
}

long parse_int(const std::string& s, const std::string& what, int row) {
  try {
    size_t pos = 0;
    long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw ParseError("row " + std::to_string(row) + ": bad " + what + " value '" + s + "'");
  }
}

}  // namespace

long date_serial(const std::string& iso) {
  int y = 0, m = 0, d = 0;
  if (std::sscanf(iso.c_str(), "%d-%d-%d", &y, &m, &d) != 3 || iso.size() != 10 ||
      m < 1 || m > 12 || d < 1 || d > 31) {
    throw ParseError("bad ISO date '" + iso + "'");
  }
  // Days from civil 1970-01-01 (Hinnant's algorithm).
  long yy = y - (m <= 2 ? 1 : 0);
  long era = (yy >= 0 ? yy : yy - 399) / 400;
  unsigned yoe = static_cast<unsigned>(yy - era * 400);
  unsigned doy = static_cast<unsigned>((153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1);
  unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long>(doe) - 719468;
}

std::vector<RawRecord> load_raw_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
  {
    auto header = split_csv_line(line);
    const std::vector<std::string> expect = {"subject_id", "date", "bbt", "menses", "age_group"};
    if (std::vector<std::string>(header.begin(), header.end()) != expect) {
      throw SchemaError(path + ": header must be subject_id,date,bbt,menses,age_group");
    }
  }
  std::vector<RawRecord> records;
  std::map<std::pair<std::string, std::string>, int> seen;  // (subject,date) -> row
  std::vector<std::string> bad_rows;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 5) {
      bad_rows.push_back("row " + std::to_string(row) + ": expected 5 fields, got " +
                         std::to_string(f.size()));
      continue;
    }
    RawRecord r;
    r.subject_id = f[0];
    r.date = f[1];
    try {
      r.day_serial = date_serial(f[1]);
      if (!f[2].empty()) r.bbt = parse_double(f[2], "bbt", row);
      long menses = parse_int(f[3], "menses", row);
      if (menses != 0 && menses != 1) {
        throw ParseError("row " + std::to_string(row) + ": menses must be 0 or 1");
      }
      r.menses = static_cast<int>(menses);
    } catch (const ParseError& e) {
      bad_rows.push_back(e.what());
      continue;
    }
    r.age_group = f[4];
    auto key = std::make_pair(r.subject_id, r.date);
    auto it = seen.find(key);
    if (it != seen.end()) {
      throw ParseError("duplicate (subject_id, date) = (" + r.subject_id + ", " + r.date +
                       ") at rows " + std::to_string(it->second) + " and " + std::to_string(row));
    }
    seen[key] = row;
    records.push_back(std::move(r));
  }
  if (!bad_rows.empty()) {
    std::string msg = std::to_string(bad_rows.size()) + " malformed row(s) in " + path + ":";
    for (const std::string& b : bad_rows) msg += "\n  " + b;
    throw ParseError(msg);
  }
  return records;
}

std::vector<CycleSeries> load_series_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path + ": empty file");
  {
    auto header = split_csv_line(line);
    const std::vector<std::string> expect = {"subject_id", "cycle_index", "day",
                                             "y",          "z",           "age_group"};
    if (std::vector<std::string>(header.begin(), header.end()) != expect) {
      throw SchemaError(path + ": header must be subject_id,cycle_index,day,y,z,age_group");
    }
  }
  std::vector<CycleSeries> series;
  std::map<std::pair<std::string, long>, size_t> index;
  int row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    auto f = split_csv_line(line);
    if (f.size() != 6) throw ParseError("row " + std::to_string(row) + ": expected 6 fields");
    long ci = parse_int(f[1], "cycle_index", row);
    long day = parse_int(f[2], "day", row);
    auto key = std::make_pair(f[0], ci);
    auto it = index.find(key);
    if (it == index.end()) {
      CycleSeries s;
      s.subject_id = f[0];
      s.age_group = f[5];
      index[key] = series.size();
      series.push_back(std::move(s));
      it = index.find(key);
    }
    CycleSeries& s = series[it->second];
    if (day != static_cast<long>(s.z.size()) + 1) {
      throw ParseError("row " + std::to_string(row) + ": days of cycle " + f[0] + "#" + f[1] +
                       " must be contiguous from 1");
    }
    double y = f[3].empty() ? std::numeric_limits<double>::quiet_NaN()
                            : parse_double(f[3], "y", row);
    long z = parse_int(f[4], "z", row);
    if (z != 0 && z != 1) throw ParseError("row " + std::to_string(row) + ": z must be 0 or 1");
    s.y.push_back(y);
    s.z.push_back(static_cast<uint8_t>(z));
  }
  for (CycleSeries& s : series) s.validate_for_ingestion();
  return series;
}

void write_series_csv(const std::string& path, const std::vector<CycleSeries>& series) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << "subject_id,cycle_index,day,y,z,age_group\n";
  std::map<std::string, int> cycle_counter;
  for (const CycleSeries& s : series) {
    int ci = ++cycle_counter[s.subject_id];
    for (int t = 0; t < s.length(); ++t) {
      out << s.subject_id << ',' << ci << ',' << t + 1 << ','
          << fmt_double(s.y[static_cast<size_t>(t)]) << ','
          << static_cast<int>(s.z[static_cast<size_t>(t)]) << ',' << s.age_group << '\n';
    }
  }
}

double first_week_offset(const std::vector<std::optional<double>>& bbt) {
  std::vector<double> week;
  for (size_t t = 0; t < bbt.size() && t < 7; ++t) {
    if (bbt[t].has_value()) week.push_back(*bbt[t]);
  }
  if (week.empty()) {
    throw NotApplicableError("no BBT observation during the first seven days");
  }
  std::sort(week.begin(), week.end());
  size_t n = week.size();
  return n % 2 == 1 ? week[n / 2] : 0.5 * (week[n / 2 - 1] + week[n / 2]);
}

std::vector<double> standardize_bbt(const std::vector<std::optional<double>>& bbt, double* offset) {
  double off = first_week_offset(bbt);
  if (offset) *offset = off;
  std::vector<double> y(bbt.size(), std::numeric_limits<double>::quiet_NaN());
  for (size_t t = 0; t < bbt.size(); ++t) {
    if (bbt[t].has_value()) y[t] = *bbt[t] - off;
  }
  return y;
}

namespace {

struct DayRecord {
  long serial;
  std::string date;
  std::optional<double> bbt;
  int menses;
  std::string age_group;
};

void emit_cycle(const std::string& subject, const std::vector<DayRecord>& days, size_t begin,
                size_t end, const PreprocessConfig&, PreprocessReport* report,
                std::vector<CycleSeries>& out) {
  std::vector<std::optional<double>> bbt;
  for (size_t i = begin; i < end; ++i) bbt.push_back(days[i].bbt);
  double offset = 0.0;
  std::vector<double> y;
  try {
    y = standardize_bbt(bbt, &offset);
  } catch (const NotApplicableError&) {
    if (report) {
      DroppedCycle d{subject, days[begin].date, static_cast<int>(end - begin), "no_bbt_first7"};
      report->dropped.push_back(d);
      ++report->drop_counts[d.reason];
    }
    return;
  }
  CycleSeries s;
  s.subject_id = subject;
  s.age_group = days[begin].age_group;
  s.y = std::move(y);
  s.z.assign(end - begin, 0);
  s.z[0] = 1;
  out.push_back(std::move(s));
  if (report) {
    ++report->cycles_kept;
    report->offsets.emplace_back(subject + "#" + days[begin].date, offset);
  }
}

}  // namespace

std::vector<CycleSeries> build_cycles(const std::vector<RawRecord>& records,
                                      const PreprocessConfig& config, PreprocessReport* report) {
  // Group by subject, preserving first appearance order.
  std::vector<std::string> subjects;
  std::map<std::string, std::vector<DayRecord>> by_subject;
  for (const RawRecord& r : records) {
    auto it = by_subject.find(r.subject_id);
    if (it == by_subject.end()) subjects.push_back(r.subject_id);
    by_subject[r.subject_id].push_back({r.day_serial, r.date, r.bbt, r.menses, r.age_group});
  }

  std::vector<CycleSeries> out;
  for (const std::string& subject : subjects) {
    std::vector<DayRecord>& days = by_subject[subject];
    std::sort(days.begin(), days.end(),
              [](const DayRecord& a, const DayRecord& b) { return a.serial < b.serial; });

    // Fill small interior gaps with missing-y z=0 days; larger gaps split the
    // subject's record into independent segments.
    std::vector<std::vector<DayRecord>> segments(1);
    for (size_t i = 0; i < days.size(); ++i) {
      if (!segments.back().empty()) {
        long gap = days[i].serial - segments.back().back().serial - 1;
        if (gap > config.gap_split_days) {
          segments.emplace_back();
        } else {
          for (long g = 1; g <= gap; ++g) {
            DayRecord filler = segments.back().back();
            filler.serial += 1;
            filler.date = "";
            filler.bbt.reset();
            filler.menses = 0;
            segments.back().push_back(filler);
          }
        }
      }
      segments.back().push_back(days[i]);
    }

    for (const std::vector<DayRecord>& seg : segments) {
      std::vector<size_t> onsets;
      for (size_t i = 0; i < seg.size(); ++i) {
        if (seg[i].menses == 1) onsets.push_back(i);
      }
      auto drop = [&](size_t begin, size_t end, const std::string& reason) {
        if (!report || begin >= end) return;
        DroppedCycle d{subject, seg[begin].date.empty() ? "(gap)" : seg[begin].date,
                       static_cast<int>(end - begin), reason};
        report->dropped.push_back(d);
        ++report->drop_counts[reason];
      };
      if (onsets.empty()) {
        drop(0, seg.size(), "no_onset_start");
        continue;
      }
      drop(0, onsets[0], "no_onset_start");
      for (size_t k = 0; k + 1 < onsets.size(); ++k) {
        emit_cycle(subject, seg, onsets[k], onsets[k + 1], config, report, out);
      }
      drop(onsets.back(), seg.size(), "no_terminal_onset");
    }
  }
  return out;
}

std::vector<CycleSeries> select_cycles(const std::vector<CycleSeries>& cycles,
                                       PreprocessReport* report) {
  std::map<std::string, std::vector<int>> lengths;
  for (const CycleSeries& s : cycles) lengths[s.age_group].push_back(s.length());
  std::map<std::string, std::pair<int, int>> bounds;
  for (auto& kv : lengths) {
    std::vector<int>& l = kv.second;
    std::sort(l.begin(), l.end());
    size_t n = l.size();
    size_t lo_rank = static_cast<size_t>(std::floor(0.05 * static_cast<double>(n)));
    size_t hi_rank = static_cast<size_t>(std::ceil(0.95 * static_cast<double>(n)));
    if (hi_rank == 0) hi_rank = 1;
    bounds[kv.first] = {l[std::min(lo_rank, n - 1)], l[hi_rank - 1]};
  }
  std::vector<CycleSeries> kept;
  for (const CycleSeries& s : cycles) {
    auto b = bounds[s.age_group];
    if (s.length() >= b.first && s.length() <= b.second) {
      kept.push_back(s);
    } else if (report) {
      DroppedCycle d{s.subject_id, "", s.length(), "extreme_length"};
      report->dropped.push_back(d);
      ++report->drop_counts[d.reason];
    }
  }
  if (report) report->cycles_kept = static_cast<int>(kept.size());
  return kept;
}

std::vector<CycleSeries> load_any_csv(const std::string& path, const PreprocessConfig& config,
                                      bool apply_trim, PreprocessReport* report) {
  std::ifstream probe(path);
  if (!probe) throw ParseError("cannot open " + path);
  std::string header;
  std::getline(probe, header);
  probe.close();
  if (header.rfind("subject_id,cycle_index,day", 0) == 0) {
    std::vector<CycleSeries> series = load_series_csv(path);
    if (report) report->cycles_kept = static_cast<int>(series.size());
    return series;
  }
  std::vector<CycleSeries> cycles = build_cycles(load_raw_csv(path), config, report);
  if (apply_trim) cycles = select_cycles(cycles, report);
  for (const CycleSeries& s : cycles) s.validate_for_ingestion();
  return cycles;
}

// --- JSON ---

nlohmann::json params_to_json(const ModelParams& params) {
  nlohmann::json j;
  j["variant"] = variant_code(params.variant);
  j["stage1"] = {{"alpha", params.stage1.alpha},
                 {"beta", params.stage1.beta},
                 {"mu", params.stage1.mu},
                 {"sigma", params.stage1.sigma}};
  j["stage2"] = {{"alpha", params.stage2.alpha},
                 {"beta", params.stage2.beta},
                 {"mu", params.stage2.mu},
                 {"sigma", params.stage2.sigma}};
  if (params.trig.has_value()) {
    nlohmann::json t;
    t["a"] = params.trig->intercept;
    t["harmonics"] = nlohmann::json::array();
    for (const auto& h : params.trig->harmonics) {
      t["harmonics"].push_back({{"b", h.first}, {"c", h.second}});
    }
    j["trig"] = t;
  }
  return j;
}

ModelParams params_from_json(const nlohmann::json& j) {
  ModelParams p;
  auto v = variant_from_code(j.at("variant").get<std::string>());
  if (!v) throw ParseError("unknown variant code in params json");
  p.variant = *v;
  auto stage = [&](const nlohmann::json& s) {
    return StageParams(s.at("alpha").get<double>(), s.at("beta").get<double>(),
                       s.at("mu").get<double>(), s.at("sigma").get<double>());
  };
  p.stage1 = stage(j.at("stage1"));
  p.stage2 = stage(j.at("stage2"));
  if (j.contains("trig")) {
    TrigSeries t;
    t.intercept = j["trig"].at("a").get<double>();
    for (const auto& h : j["trig"].at("harmonics")) {
      t.harmonics.emplace_back(h.at("b").get<double>(), h.at("c").get<double>());
    }
    p.trig = t;
  }
  p.validate();
  return p;
}

nlohmann::json fit_result_to_json(const FitResult& r) {
  nlohmann::json j;
  j["params"] = params_to_json(r.params);
  j["loglik"] = r.loglik;
  j["n_evals"] = r.n_evals;
  j["converged"] = r.converged;
  j["param_names"] = r.param_names;
  j["hessian_singular"] = r.hessian_singular;
  if (!r.hessian.empty()) j["hessian"] = r.hessian;
  if (!r.ci95.empty()) {
    nlohmann::json ci = nlohmann::json::array();
    for (const auto& c : r.ci95) ci.push_back({c.first, c.second});
    j["ci95"] = ci;
  }
  return j;
}

FitResult fit_result_from_json(const nlohmann::json& j) {
  FitResult r;
  r.params = params_from_json(j.at("params"));
  r.loglik = j.at("loglik").get<double>();
  r.n_evals = j.at("n_evals").get<int>();
  r.converged = j.at("converged").get<bool>();
  r.param_names = j.at("param_names").get<std::vector<std::string>>();
  r.hessian_singular = j.at("hessian_singular").get<bool>();
  if (j.contains("hessian")) {
    r.hessian = j["hessian"].get<std::vector<std::vector<double>>>();
  }
  if (j.contains("ci95")) {
    for (const auto& c : j["ci95"]) {
      r.ci95.emplace_back(c.at(0).get<double>(), c.at(1).get<double>());
    }
  }
  return r;
}

nlohmann::json onset_to_json(const OnsetDistribution& dist) {
  nlohmann::json j;
  j["k_max"] = dist.k_max();
  j["h"] = dist.h;
  j["tail"] = dist.tail;
  j["point_prediction"] = point_predict(dist);
  return j;
}

OnsetDistribution onset_from_json(const nlohmann::json& j) {
  OnsetDistribution d;
  d.h = j.at("h").get<std::vector<double>>();
  d.tail = j.at("tail").get<double>();
  return d;
}

nlohmann::json bench_to_json(const BenchReport& r) {
  nlohmann::json j;
  j["models"] = r.models;
  j["horizons"] = r.horizons;
  j["rmse"] = nlohmann::json::array();
  for (const auto& row : r.rmse) {
    nlohmann::json jr = nlohmann::json::array();
    for (double v : row) jr.push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
    j["rmse"].push_back(jr);
  }
  j["n_used"] = r.n_used;
  j["fit_loglik"] = nlohmann::json::array();
  for (double v : r.fit_loglik) j["fit_loglik"].push_back(std::isnan(v) ? nlohmann::json() : nlohmann::json(v));
  j["calendar_offset"] = r.calendar_offset;
  j["degenerate"] = r.degenerate;
  j["next_day_fraction"] = r.next_day_fraction;
  j["exclusions"] = r.exclusions;
  j["metadata"] = r.metadata;
  return j;
}

BenchReport bench_from_json(const nlohmann::json& j) {
  BenchReport r;
  r.models = j.at("models").get<std::vector<std::string>>();
  r.horizons = j.at("horizons").get<std::vector<int>>();
  for (const auto& row : j.at("rmse")) {
    std::vector<double> v;
    for (const auto& x : row) {
      v.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
    }
    r.rmse.push_back(v);
  }
  r.n_used = j.at("n_used").get<std::vector<std::vector<int>>>();
  for (const auto& x : j.at("fit_loglik")) {
    r.fit_loglik.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
  }
  r.calendar_offset = j.at("calendar_offset").get<std::vector<int>>();
  r.degenerate = j.at("degenerate").get<std::vector<bool>>();
  r.next_day_fraction = j.at("next_day_fraction").get<std::vector<double>>();
  r.exclusions = j.at("exclusions").get<std::map<std::string, int>>();
  r.metadata = j.at("metadata").get<std::string>();
  return r;
}

nlohmann::json preprocess_report_to_json(const PreprocessReport& r) {
  nlohmann::json j;
  j["cycles_kept"] = r.cycles_kept;
  j["drop_counts"] = r.drop_counts;
  j["dropped"] = nlohmann::json::array();
  for (const DroppedCycle& d : r.dropped) {
    j["dropped"].push_back({{"subject_id", d.subject_id},
                            {"start_date", d.start_date},
                            {"length", d.length},
                            {"reason", d.reason}});
  }
  j["offsets"] = nlohmann::json::array();
  for (const auto& o : r.offsets) j["offsets"].push_back({{"cycle", o.first}, {"offset", o.second}});
  return j;
}

void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << j.dump(2) << '\n';
}

nlohmann::json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

void write_bench_csv(const std::string& path, const BenchReport& r) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << "model";
  for (int h : r.horizons) {
    out << ',' << (h == -1 ? std::string("prev_onset") : std::to_string(h) + "d_before");
  }
  out << '\n';
  for (size_t m = 0; m < r.models.size(); ++m) {
    out << r.models[m];
    for (size_t h = 0; h < r.horizons.size(); ++h) {
      out << ',' << fmt_double(r.rmse[m][h]);
    }
    out << '\n';
  }
}

void write_stage_stats_csv(const std::string& path,
                           const std::vector<std::pair<std::string, StageStats>>& by_group) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << "age_group,subset,stage,mean,median,sd,n_cycles,monophasic_pct,correlation\n";
  for (const auto& kv : by_group) {
    const StageStats& s = kv.second;
    auto row = [&](const char* subset, const char* stage, const StageMoments& m) {
      out << kv.first << ',' << subset << ',' << stage << ',' << fmt_double(m.mean) << ','
          << fmt_double(m.median) << ',' << fmt_double(m.sd) << ',' << s.n_cycles << ','
          << fmt_double(s.monophasic_pct) << ',' << fmt_double(s.correlation) << '\n';
    };
    row("all", "first", s.first_all);
    row("all", "second", s.second_all);
    row("without_monophasic", "first", s.first_nomono);
    row("without_monophasic", "second", s.second_nomono);
  }
}

void write_density_csv(const std::string& path, const FilterOutput& out_data,
                       const std::vector<PhaseDensity>* smoothed) {
  std::ofstream out(path);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << "day,bin,theta,filtering,predictive" << (smoothed ? ",smoothed" : "") << '\n';
  for (size_t t = 0; t < out_data.filtering.size(); ++t) {
    const PhaseGrid& grid = out_data.filtering[t].grid;
    for (int b = 0; b < grid.n_bins; ++b) {
      out << t + 1 << ',' << b << ',' << fmt_double(grid.center(b)) << ','
          << fmt_double(out_data.filtering[t].weights[static_cast<size_t>(b)]) << ','
          << fmt_double(out_data.predictive[t].weights[static_cast<size_t>(b)]);
      if (smoothed) {
        out << ',' << fmt_double((*smoothed)[t].weights[static_cast<size_t>(b)]);
      }
      out << '\n';
    }
  }
}

std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      size_t a = s.find_first_not_of(" \t\r");
      size_t b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    std::string t = trim(line);
    if (t.empty() || t.front() == '[') continue;  // section headers are cosmetic
    size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + " line " + std::to_string(row) + ": expected key = value");
    }
    std::string key = trim(t.substr(0, eq));
    std::string val = trim(t.substr(eq + 1));
    if (val.size() >= 2 && val.front() == '"' && val.back() == '"') {
      val = val.substr(1, val.size() - 2);
    }
    kv[key] = val;
  }
  return kv;
}

SimConfig sim_config_from_file(const std::string& path) {
  auto kv = parse_config_file(path);
  SimConfig cfg;
  auto get = [&](const char* key) -> std::optional<std::string> {
    auto it = kv.find(key);
    if (it == kv.end()) return std::nullopt;
    return it->second;
  };
  if (auto p = get("preset")) {
    cfg.params = preset(*p);
  } else {
    ModelParams mp;
    auto need = [&](const char* key) {
      auto v = get(key);
      if (!v) throw ParseError(path + ": missing key " + key + " (or use preset = <age-band>)");
      return std::stod(*v);
    };
    mp.stage1 = StageParams(need("alpha1"), need("beta1"), need("mu1"), need("sigma1"));
    mp.stage2 = StageParams(need("alpha2"), need("beta2"), need("mu2"), need("sigma2"));
    cfg.params = mp;
  }
  if (auto v = get("variant")) {
    auto var = variant_from_code(*v);
    if (!var) throw ParseError(path + ": unknown variant " + *v);
    cfg.params.variant = *var;
  }
  if (auto v = get("n_cycles")) cfg.n_cycles = std::stoi(*v);
  if (auto v = get("missing_rate")) cfg.missing_rate = std::stod(*v);
  if (auto v = get("seed")) cfg.seed = static_cast<uint64_t>(std::stoull(*v));
  if (auto v = get("max_days_per_cycle")) cfg.max_days_per_cycle = std::stoi(*v);
  cfg.params.validate();
  return cfg;
}

uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path);
  uint64_t h = 1469598103934665603ull;
  char buf[16384];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ull;
    }
  }
  return h;
}

void write_manifest(const std::string& dir, const std::string& command,
                    const std::vector<std::string>& args,
                    const std::vector<std::string>& input_paths,
                    const std::vector<std::string>& output_paths, const nlohmann::json& settings) {
  nlohmann::json j;
  j["tool"] = "mcycle";
  j["version"] = "0.1.0";
  j["command"] = command;
  j["args"] = args;
  j["settings"] = settings;
  j["inputs"] = nlohmann::json::array();
  for (const std::string& p : input_paths) {
    std::ifstream in(p, std::ios::binary | std::ios::ate);
    long bytes = in ? static_cast<long>(in.tellg()) : -1;
    j["inputs"].push_back({{"path", p}, {"bytes", bytes}, {"fnv1a64", fnv1a_file(p)}});
  }
  j["outputs"] = output_paths;
  std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  j["timestamp"] = buf;  // excluded from the reproducibility contract
  write_json(dir + "/manifest.json", j);
}

}  // namespace io
}  // namespace mcycle
