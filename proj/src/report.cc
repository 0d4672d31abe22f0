#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dtwin/error.h"
#include "dtwin/scenario.h"

namespace dtwin {

namespace {

using nlohmann::json;

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

std::optional<double> number_or_null(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) { return std::nullopt; }
  return j.at(key).get<double>();
}

Termination termination_from_string(const std::string& s) {
  for (Termination t : {Termination::kStopped, Termination::kCollision,
                        Termination::kPathEnd, Termination::kTimeout,
                        Termination::kThreadLost}) {
    if (s == to_string(t)) { return t; }
  }
  throw Error("unknown termination: " + s);
}

std::string g9(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string opt_g9(const std::optional<double>& v) {
  return v ? g9(*v) : std::string("-");
}

}  // namespace

const char* to_string(Termination t) {
  switch (t) {
    case Termination::kStopped: return "stopped";
    case Termination::kCollision: return "collision";
    case Termination::kPathEnd: return "path_end";
    case Termination::kTimeout: return "timeout";
    case Termination::kThreadLost: return "thread_lost";
  }
  return "?";
}

json to_json(const RunReport& r) {
  return {{"scenario", r.scenario},
          {"geometry", r.geometry},
          {"mode", to_string(r.mode)},
          {"seed", r.seed},
          {"stop_distance_s", optional_number(r.stop_distance_s)},
          {"peak_accel", r.peak_accel},
          {"peak_decel", r.peak_decel},
          {"min_gap", r.min_gap},
          {"collision", r.collision},
          {"reaction_time", optional_number(r.reaction_time)},
          {"completed", r.completed},
          {"termination", to_string(r.termination)},
          {"duration", r.duration},
          {"first_perception_t", optional_number(r.first_perception_t)},
          {"first_v2v_t", optional_number(r.first_v2v_t)},
          {"session_id", r.session_id}};
}

RunReport run_report_from_json(const json& j) {
  try {
    RunReport r;
    r.scenario = j.value("scenario", "");
    r.geometry = j.at("geometry").get<std::string>();
    r.mode = mode_from_string(j.at("mode").get<std::string>());
    r.seed = j.value("seed", std::uint64_t{0});
    r.stop_distance_s = number_or_null(j, "stop_distance_s");
    r.peak_accel = j.at("peak_accel").get<double>();
    r.peak_decel = j.at("peak_decel").get<double>();
    r.min_gap = j.at("min_gap").get<double>();
    r.collision = j.at("collision").get<bool>();
    r.reaction_time = number_or_null(j, "reaction_time");
    r.completed = j.at("completed").get<bool>();
    r.termination = termination_from_string(j.at("termination").get<std::string>());
    r.duration = j.value("duration", 0.0);
    r.first_perception_t = number_or_null(j, "first_perception_t");
    r.first_v2v_t = number_or_null(j, "first_v2v_t");
    r.session_id = j.value("session_id", "");
    return r;
  } catch (const json::exception& e) {
    throw Error(std::string("report: ") + e.what());
  }
}

CompareTable compare(std::vector<RunReport> reports) {
  if (reports.empty()) { throw Error("compare: no reports"); }
  for (const auto& r : reports) {
    if (r.geometry != reports.front().geometry) {
      throw Error("incomparable runs");
    }
  }
  // Runs that never stopped sort after every stopped run.
  std::stable_sort(reports.begin(), reports.end(),
                   [](const RunReport& a, const RunReport& b) {
                     if (!a.stop_distance_s || !b.stop_distance_s) {
                       return a.stop_distance_s.has_value() &&
                              !b.stop_distance_s.has_value();
                     }
                     return *a.stop_distance_s < *b.stop_distance_s;
                   });
  return {std::move(reports)};
}

std::string CompareTable::to_text() const {
  std::ostringstream out;
  char line[256];
  std::snprintf(line, sizeof(line), "%-5s %10s %10s %10s %9s %9s %9s %-11s\n",
                "mode", "stop_s[m]", "accel+", "decel-", "min_gap", "react[s]",
                "collision", "end");
  out << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof(line),
                  "%-5s %10s %10.3f %10.3f %9.3f %9s %9s %-11s\n",
                  to_string(r.mode), opt_g9(r.stop_distance_s).c_str(),
                  r.peak_accel, r.peak_decel, r.min_gap,
                  opt_g9(r.reaction_time).c_str(), r.collision ? "yes" : "no",
                  to_string(r.termination));
    out << line;
  }
  return out.str();
}

std::string CompareTable::to_csv() const {
  std::ostringstream out;
  out << "mode,stop_distance_s,peak_accel,peak_decel,min_gap,collision,"
         "reaction_time,completed,termination,session_id\n";
  for (const auto& r : rows) {
    out << to_string(r.mode) << ','
        << (r.stop_distance_s ? g9(*r.stop_distance_s) : "") << ','
        << g9(r.peak_accel) << ',' << g9(r.peak_decel) << ','
        << g9(r.min_gap) << ',' << (r.collision ? "true" : "false") << ','
        << (r.reaction_time ? g9(*r.reaction_time) : "") << ','
        << (r.completed ? "true" : "false") << ','
        << to_string(r.termination) << ',' << r.session_id << '\n';
  }
  return out.str();
}

std::size_t export_run(const RunReport& report,
                       std::span<const KpiSample> samples, std::ostream& out,
                       ExportFormat format) {
  std::string text;
  if (format == ExportFormat::kCsv) {
    text = "t,s,speed,throttle,brake,accel,peer_gap\n";
    for (const auto& s : samples) {
      text += g9(s.t) + ',' + g9(s.s) + ',' + g9(s.speed) + ',' +
              g9(s.throttle) + ',' + g9(s.brake) + ',' + g9(s.accel) + ',' +
              g9(s.peer_gap) + '\n';
    }
  } else {
    json j;
    j["report"] = to_json(report);
    j["samples"] = json::array();
    for (const auto& s : samples) {
      j["samples"].push_back({{"t", s.t},
                              {"s", s.s},
                              {"speed", s.speed},
                              {"throttle", s.throttle},
                              {"brake", s.brake},
                              {"accel", s.accel},
                              {"peer_gap", s.peer_gap}});
    }
    text = j.dump(1) + '\n';
  }
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.flush();
  if (!out) { throw Error("export: write failed"); }
  return text.size();
}

std::size_t export_run(const RunReport& report,
                       std::span<const KpiSample> samples,
                       const std::filesystem::path& path, ExportFormat format) {
  std::ofstream out(path, std::ios::binary);
  if (!out) { throw Error("export: cannot open " + path.string()); }
  return export_run(report, samples, out, format);
}

ImportedRun import_run_json(std::istream& in) {
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(std::string("report: ") + e.what());
  }
  ImportedRun run;
  if (!j.contains("report")) {
    run.report = run_report_from_json(j);
    return run;
  }
  run.report = run_report_from_json(j.at("report"));
  for (const auto& s : j.value("samples", json::array())) {
    run.samples.push_back({s.at("t").get<double>(), s.at("s").get<double>(),
                           s.at("speed").get<double>(),
                           s.at("throttle").get<double>(),
                           s.at("brake").get<double>(),
                           s.at("accel").get<double>(),
                           s.at("peer_gap").get<double>()});
  }
  return run;
}

ImportedRun import_run_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) { throw Error("cannot open report: " + path.string()); }
  return import_run_json(in);
}

}  // namespace dtwin
