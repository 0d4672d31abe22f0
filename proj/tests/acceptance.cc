// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "dtwin/dynamics.h"
#include "dtwin/pq.h"
#include "dtwin/scenario.h"
#include "dtwin/twin_thread.h"
#include "dtwin/v2x.h"

using namespace dtwin;

namespace {

int g_failures = 0;

void report(const char* name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name, detail.c_str());
  if (!ok) { ++g_failures; }
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ScenarioSpec shipped(Mode mode) {
  ScenarioSpec spec = load_scenario(DTWIN_SOURCE_DIR "/scenarios/jump_scare.json");
  spec.mode = mode;
  return spec;
}

struct Timed {
  RunResult result;
  double seconds = 0.0;
};

Timed timed_run(const ScenarioSpec& spec, RunObserver* observer = nullptr) {
  AutonomySource src(spec.mode, spec.controller);
  RunEnvironment env;
  env.observer = observer;
  const auto t0 = std::chrono::steady_clock::now();
  RunResult r = run(spec, src, env);
  const auto t1 = std::chrono::steady_clock::now();
  return {std::move(r), std::chrono::duration<double>(t1 - t0).count()};
}

void case_study_ordering() {
  const Timed av = timed_run(shipped(Mode::kAv));
  const Timed cav = timed_run(shipped(Mode::kCav));
  const auto& a = av.result.report;
  const auto& c = cav.result.report;
  const bool stops = a.stop_distance_s && c.stop_distance_s;
  const bool order = stops && *c.stop_distance_s < *a.stop_distance_s;
  const double da = std::abs(a.peak_decel);
  const double dc = std::abs(c.peak_decel);
  const bool ratio = dc > 0.0 && dc <= 0.25 * da;
  const bool safe = !a.collision && !c.collision;
  const bool fast = av.seconds < 5.0 && cav.seconds < 5.0;
  report("stop ordering", stops && order && ratio && safe && fast,
         fmt("stop cav %.2f m < av %.2f m, |decel| cav %.3f <= 0.25 * av %.3f, "
             "collision av=%d cav=%d, runtime av %.2f s cav %.2f s",
             c.stop_distance_s.value_or(NAN), a.stop_distance_s.value_or(NAN), dc,
             da, a.collision, c.collision, av.seconds, cav.seconds));
}

void threat_validity() {
  bool all = true;
  std::string detail;
  for (Mode m : {Mode::kAv, Mode::kCav}) {
    ScenarioSpec spec = shipped(m);
    spec.controller.braking_enabled = false;
    const Timed t = timed_run(spec);
    all = all && t.result.report.collision && t.seconds < 5.0;
    detail += fmt("%s collision=%d runtime %.2f s; ", to_string(m),
                  t.result.report.collision, t.seconds);
  }
  report("threat validity", all, detail);
}

void determinism() {
  bool all = true;
  std::string detail;
  for (Mode m : {Mode::kAv, Mode::kCav}) {
    std::string json[2], csv[2];
    for (int k = 0; k < 2; ++k) {
      const RunResult r = timed_run(shipped(m)).result;
      json[k] = to_json(r.report).dump(2);
      std::ostringstream out;
      export_run(r.report, r.samples, out, ExportFormat::kCsv);
      csv[k] = out.str();
    }
    const bool same = json[0] == json[1] && csv[0] == csv[1];
    all = all && same;
    detail += fmt("%s json %zu B csv %zu B identical=%d; ", to_string(m),
                  json[0].size(), csv[0].size(), same);
  }
  report("determinism", all, detail);
}

void dynamics_oracle() {
  double worst = 0.0;
  for (double v : {5.0, 10.0, 15.0}) {
    for (double b : {1.26, 7.59}) {
      VehicleConfig cfg;
      cfg.b_max = b;
      cfg.drag_coeff = 0.0;
      VehicleState st;
      st.speed = v;
      ControlCommand brake;
      brake.brake = 1.0;
      double dist = 0.0;
      for (int i = 0; i < 1'000'000 && st.speed > 0.0; ++i) {
        const VehicleState next = step(st, brake, cfg, IntegratorSettings{0.01});
        dist += distance(st.pose.position(), next.pose.position());
        st = next;
      }
      const double want = v * v / (2.0 * b);
      worst = std::max(worst, std::abs(dist - want) / want);
    }
  }
  report("dynamics oracle", worst < 0.01,
         fmt("worst relative error %.4f%% over 6 cases (limit 1%%)", 100.0 * worst));
}

void twin_convergence() {
  std::mt19937_64 rng(4242);
  std::uniform_real_distribution<double> u(0, 50);
  std::vector<StateUpdateMsg> base;
  for (int i = 1; i <= 100; ++i) {
    StateUpdateMsg m;
    m.vehicle_id = "ego";
    m.seq = i;
    m.state.vehicle_id = "ego";
    m.state.pose = Pose2D(u(rng), u(rng), 0.0);
    m.state.speed = u(rng) / 5;
    m.state.timestamp = i * 100'000;
    base.push_back(m);
  }
  const int rounds = 500;
  int ok = 0;
  std::uniform_int_distribution<std::size_t> pick(0, base.size() - 1);
  for (int r = 0; r < rounds; ++r) {
    auto msgs = base;
    for (int d = 0; d < 10; ++d) { msgs.push_back(base[pick(rng)]); }
    std::shuffle(msgs.begin(), msgs.end(), rng);
    TwinRegistry reg;
    for (const auto& m : msgs) { reg.ingest_state(m, 0); }
    const auto stored = reg.stored("ego");
    ok += stored && *stored == base.back() ? 1 : 0;
  }
  report("digital-thread convergence", ok == rounds,
         fmt("%d/%d permutations of 110 messages ended at the max-seq state", ok,
             rounds));
}

void v2x_statistics() {
  ChannelModel c;
  c.loss_prob = 0.1;
  c.rng_seed = 7;
  V2xBus bus(c);
  int delivered = 0;
  for (int i = 0; i < 10'000; ++i) {
    BasicSafetyMsg m;
    m.sender_id = "s";
    m.seq = i + 1;
    m.timestamp = i * 100'000;
    delivered += static_cast<int>(bus.broadcast(m, {0, 0}, {{"r", {100, 0}}}).size());
  }
  const double frac = delivered / 10'000.0;

  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> pos(-400, 400);
  std::uniform_real_distribution<double> range(1, 300);
  std::uniform_real_distribution<double> loss(0, 0.9);
  std::size_t beyond = 0, sends = 0;
  for (int round = 0; round < 200; ++round) {
    ChannelModel cc;
    cc.range = range(rng);
    cc.loss_prob = loss(rng);
    cc.rng_seed = rng();
    V2xBus b(cc);
    for (int i = 0; i < 50; ++i) {
      const Vec2 sender{pos(rng), pos(rng)};
      std::vector<Receiver> rs;
      for (int k = 0; k < 6; ++k) {
        rs.push_back({"r" + std::to_string(k), {pos(rng), pos(rng)}});
      }
      BasicSafetyMsg m;
      m.sender_id = "s";
      m.seq = i + 1;
      m.timestamp = i * 1000;
      ++sends;
      for (const auto& d : b.broadcast(m, sender, rs)) {
        for (const auto& r : rs) {
          if (r.id == d.receiver_id && distance(r.position, sender) > cc.range) {
            ++beyond;
          }
        }
      }
    }
  }
  report("v2x statistics", frac >= 0.89 && frac <= 0.91 && beyond == 0,
         fmt("delivered fraction %.4f in [0.89, 0.91]; %zu deliveries beyond range "
             "over %zu corpus sends",
             frac, beyond, sends));
}

void pq_maxima() {
  using pq::Factor;
  const auto obs = pq::factor_maxima(pq::SetName::kObservation);
  const auto inter = pq::factor_maxima(pq::SetName::kInteraction);
  auto val = [](const pq::FactorScores& s, Factor f) {
    return s.factors[static_cast<std::size_t>(f)]
               ? s.factors[static_cast<std::size_t>(f)]->score
               : -1;
  };
  const bool obs_ok = val(obs, Factor::kInvolvement) == 42 &&
                      val(obs, Factor::kSensoryFidelity) == 14 &&
                      val(obs, Factor::kAdaptationImmersion) == 14 &&
                      val(obs, Factor::kInterfaceQuality) == 7;
  const bool inter_ok = val(inter, Factor::kInvolvement) == 28 &&
                        val(inter, Factor::kSensoryFidelity) == -1 &&
                        val(inter, Factor::kAdaptationImmersion) == 28 &&
                        val(inter, Factor::kInterfaceQuality) == 14;
  std::mt19937_64 rng(1000);
  std::uniform_int_distribution<int> rating(1, 7);
  int partition_ok = 0;
  for (int i = 0; i < 1000; ++i) {
    pq::PqResponse r;
    r.participant_id = "p";
    r.configuration = "c";
    r.set = i % 2 ? pq::SetName::kInteraction : pq::SetName::kObservation;
    int total = 0;
    for (int id : pq::item_ids(r.set)) {
      const int v = rating(rng);
      r.ratings[id] = v;
      total += v;
    }
    const auto s = pq::score(r);
    int sum = 0;
    for (const auto& f : s.factors) { sum += f ? f->score : 0; }
    partition_ok += sum == total && s.overall == total ? 1 : 0;
  }
  report("pq factor maxima", obs_ok && inter_ok && partition_ok == 1000,
         fmt("observation (%d, %d, %d, %d), interaction (%d, -, %d, %d), partition "
             "%d/1000",
             val(obs, Factor::kInvolvement), val(obs, Factor::kSensoryFidelity),
             val(obs, Factor::kAdaptationImmersion),
             val(obs, Factor::kInterfaceQuality), val(inter, Factor::kInvolvement),
             val(inter, Factor::kAdaptationImmersion),
             val(inter, Factor::kInterfaceQuality), partition_ok));
}

bool balanced(const std::vector<std::vector<int>>& sq, int n) {
  if (static_cast<int>(sq.size()) != n) { return false; }
  std::vector<int> ref(n);
  for (int i = 0; i < n; ++i) { ref[i] = i; }
  for (const auto& row : sq) {
    auto sorted = row;
    std::sort(sorted.begin(), sorted.end());
    if (sorted != ref) { return false; }
  }
  for (int j = 0; j < n; ++j) {
    std::vector<int> col;
    for (const auto& row : sq) { col.push_back(row[j]); }
    std::sort(col.begin(), col.end());
    if (col != ref) { return false; }
  }
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      if (a == b) { continue; }
      int count = 0;
      for (const auto& row : sq) {
        for (int j = 0; j + 1 < n; ++j) {
          count += row[j] == a && row[j + 1] == b ? 1 : 0;
        }
      }
      if (count != 1) { return false; }
    }
  }
  return true;
}

void latin_square() {
  bool all = true;
  std::string detail;
  for (int n : {4, 2, 6, 8}) {
    const bool ok = balanced(pq::latin_square(n), n);
    all = all && ok;
    detail += fmt("n=%d %s (%d ordered pairs); ", n, ok ? "balanced" : "unbalanced",
                  n * (n - 1));
  }
  report("balanced latin square", all, detail);
}

class PositionLog : public RunObserver {
 public:
  void on_tick(const SceneSnapshot& s) override {
    const VehicleState* ego = nullptr;
    const VehicleState* peer = nullptr;
    for (const auto& v : s.vehicles) {
      if (v.vehicle_id == "ego") { ego = &v; }
      if (v.vehicle_id == "peer") { peer = &v; }
    }
    if (ego && peer) {
      gap[s.now] = distance(ego->pose.position(), peer->pose.position());
    }
  }
  void on_finish(const RunReport&) override {}

  double at(double t) const {
    const auto it = gap.lower_bound(static_cast<Micros>(std::llround(t * 1e6)));
    return it == gap.end() ? std::prev(gap.end())->second : it->second;
  }

  std::map<Micros, double> gap;
};

void awareness_ordering() {
  constexpr double kInf = std::numeric_limits<double>::infinity();
  bool all = true;
  int runs = 0, strict = 0;
  std::string worst;
  for (int d = 50; d <= 150; d += 10) {
    ScenarioSpec spec = shipped(Mode::kCav);
    spec.controller.braking_enabled = false;
    spec.peer_spawn = Pose2D(spec.peer_spawn.x(), -static_cast<double>(d),
                             spec.peer_spawn.heading());
    spec.peer_path = Polyline{{spec.peer_spawn.x(), -static_cast<double>(d)},
                               {spec.peer_spawn.x(), 120.0}};
    PositionLog log;
    const RunReport r = timed_run(spec, &log).result.report;
    ++runs;
    const double v2v = r.first_v2v_t.value_or(kInf);
    const double cam = r.first_perception_t.value_or(kInf);
    bool ok = v2v <= cam && std::isfinite(v2v);
    if (ok && log.at(v2v) > spec.frustum.range) {
      ok = v2v < cam;
      strict += ok ? 1 : 0;
    }
    if (!ok) {
      all = false;
      worst += fmt("d=%d v2v %.2f frustum %.2f; ", d, v2v, cam);
    }
  }
  report("awareness ordering", all,
         fmt("%d spawn distances 50..150 m, V2V strictly earlier in %d with contact "
             "gap > 40 m %s",
             runs, strict, worst.c_str()));
}

}  // namespace

int main() {
  case_study_ordering();
  threat_validity();
  determinism();
  dynamics_oracle();
  twin_convergence();
  v2x_statistics();
  pq_maxima();
  latin_square();
  awareness_ordering();
  std::printf("%d failure(s)\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
