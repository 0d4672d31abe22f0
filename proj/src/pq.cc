#include "dtwin/pq.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "dtwin/error.h"

namespace dtwin::pq {

namespace {

using F = Factor;

// Short tags only; item wording belongs to the published instrument.
constexpr PqItem kBank[] = {
    {1, F::kInvolvement, "control over events"},
    {2, F::kInvolvement, "environment responsiveness"},
    {3, F::kInvolvement, "natural interactions"},
    {4, F::kInvolvement, "visual involvement"},
    {5, F::kSensoryFidelity, "auditory involvement"},
    {6, F::kInvolvement, "natural movement mechanism"},
    {7, F::kInvolvement, "compelling object motion"},
    {8, F::kInvolvement, "consistency with real world"},
    {9, F::kAdaptationImmersion, "anticipating outcomes"},
    {10, F::kInvolvement, "visual survey"},
    {11, F::kSensoryFidelity, "identifying sounds"},
    {12, F::kSensoryFidelity, "localizing sounds"},
    {13, F::kSensoryFidelity, "haptic exploration"},
    {14, F::kInvolvement, "close examination"},
    {15, F::kSensoryFidelity, "multiple viewpoints"},
    {16, F::kSensoryFidelity, "manipulating objects"},
    {17, F::kInvolvement, "involvement in experience"},
    {18, F::kInvolvement, "action-outcome delay"},
    {19, F::kInterfaceQuality, "adjustment speed"},
    {20, F::kAdaptationImmersion, "proficiency at end"},
    {21, F::kAdaptationImmersion, "display quality interference"},
    {22, F::kInterfaceQuality, "control device interference"},
    {23, F::kInterfaceQuality, "task concentration"},
    {24, F::kAdaptationImmersion, "task focus"},
    {25, F::kAdaptationImmersion, "learning new techniques"},
    {29, F::kInvolvement, "sensory engagement"},
    {30, F::kAdaptationImmersion, "lost track of time"},
    {31, F::kAdaptationImmersion, "experience coherence"},
    {32, F::kAdaptationImmersion, "overall immersion"},
};

constexpr int kObservation[] = {4, 7, 8, 10, 14, 15, 16, 18, 20, 22, 30};
constexpr int kInteraction[] = {1, 2, 3, 6, 9, 19, 21, 23, 24, 31};

constexpr int kMinRating = 1;
constexpr int kMaxRating = 7;

bool check_bank() {
  std::set<int> seen;
  for (const auto& item : kBank) {
    if (!seen.insert(item.item_id).second) {
      throw Error("pq item bank: duplicate item " +
                  std::to_string(item.item_id));
    }
  }
  for (SetName s : {SetName::kObservation, SetName::kInteraction}) {
    for (int id : item_ids(s)) {
      if (!seen.count(id)) {
        throw Error("pq item bank: set item " + std::to_string(id) +
                    " has no factor");
      }
    }
  }
  return true;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) { out.push_back(field); }
  if (!line.empty() && line.back() == ',') { out.emplace_back(); }
  return out;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

int parse_int(const std::string& s, int line_no) {
  std::size_t used = 0;
  int v = 0;
  try {
    v = std::stoi(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) {
    throw Error("responses csv line " + std::to_string(line_no) +
                ": not an integer: '" + s + "'");
  }
  return v;
}

}  // namespace

const char* to_string(Factor f) {
  switch (f) {
    case Factor::kInvolvement: return "involvement";
    case Factor::kSensoryFidelity: return "sensory_fidelity";
    case Factor::kAdaptationImmersion: return "adaptation_immersion";
    case Factor::kInterfaceQuality: return "interface_quality";
  }
  return "?";
}

std::span<const PqItem> item_bank() {
  static const bool ok = check_bank();
  (void)ok;
  return kBank;
}

std::optional<Factor> factor_of(int item_id) {
  for (const auto& item : item_bank()) {
    if (item.item_id == item_id) { return item.factor; }
  }
  return std::nullopt;
}

const char* to_string(SetName s) {
  return s == SetName::kObservation ? "observation" : "interaction";
}

SetName set_from_string(const std::string& s) {
  if (s == "observation") { return SetName::kObservation; }
  if (s == "interaction") { return SetName::kInteraction; }
  throw Error("unknown item set: " + s);
}

std::span<const int> item_ids(SetName set) {
  if (set == SetName::kObservation) { return kObservation; }
  return kInteraction;
}

std::vector<std::string> validate_response(const std::map<int, int>& ratings,
                                           SetName set) {
  const auto ids = item_ids(set);
  std::map<int, std::string> problems;
  for (int id : ids) {
    auto it = ratings.find(id);
    if (it == ratings.end()) {
      problems[id] = "missing: " + std::to_string(id);
    } else if (it->second < kMinRating || it->second > kMaxRating) {
      problems[id] = "out of range: " + std::to_string(id);
    }
  }
  for (const auto& [id, rating] : ratings) {
    if (std::find(ids.begin(), ids.end(), id) == ids.end()) {
      problems[id] = "extra: " + std::to_string(id);
    }
  }
  std::vector<std::string> out;
  for (auto& [id, msg] : problems) { out.push_back(std::move(msg)); }
  return out;
}

FactorScores score(const PqResponse& response) {
  const auto problems = validate_response(response.ratings, response.set);
  if (!problems.empty()) {
    std::string msg = "invalid response:";
    for (const auto& p : problems) { msg += " " + p + ";"; }
    msg.pop_back();
    throw Error(msg);
  }
  FactorScores out;
  for (int id : item_ids(response.set)) {
    const auto f = static_cast<std::size_t>(*factor_of(id));
    const int r = response.ratings.at(id);
    auto& slot = out.factors[f];
    if (!slot) { slot = FactorScore{}; }
    slot->score += r;
    slot->max += kMaxRating;
    out.overall += r;
    out.overall_max += kMaxRating;
    if (f == static_cast<std::size_t>(Factor::kInterfaceQuality)) {
      out.interface_quality_reversed =
          out.interface_quality_reversed.value_or(0) + (kMaxRating + 1 - r);
    }
  }
  return out;
}

FactorScores factor_maxima(SetName set) {
  PqResponse r;
  r.set = set;
  for (int id : item_ids(set)) { r.ratings[id] = kMaxRating; }
  return score(r);
}

std::vector<GroupSummary> aggregate(std::span<const PqResponse> responses) {
  for (const auto& r : responses) {
    if (r.set != responses.front().set) {
      throw Error("aggregate: responses mix item sets");
    }
  }
  std::vector<std::string> order;
  std::map<std::string, std::vector<FactorScores>> groups;
  for (const auto& r : responses) {
    auto [it, fresh] = groups.try_emplace(r.configuration);
    if (fresh) { order.push_back(r.configuration); }
    it->second.push_back(score(r));
  }
  std::vector<GroupSummary> out;
  for (const auto& name : order) {
    const auto& scores = groups.at(name);
    GroupSummary g;
    g.configuration = name;
    g.n = static_cast<int>(scores.size());
    for (std::size_t f = 0; f < kFactorCount; ++f) {
      if (!scores.front().factors[f]) { continue; }
      double sum = 0.0;
      for (const auto& s : scores) { sum += s.factors[f]->score; }
      FactorStats st;
      st.n = g.n;
      st.mean = sum / g.n;
      if (g.n > 1) {
        double ss = 0.0;
        for (const auto& s : scores) {
          const double d = s.factors[f]->score - st.mean;
          ss += d * d;
        }
        st.std = std::sqrt(ss / (g.n - 1));
      } else {
        st.single = true;
      }
      g.factors[f] = st;
    }
    out.push_back(std::move(g));
  }
  return out;
}

std::vector<std::vector<int>> latin_square(int n) {
  if (n < 2 || n % 2 != 0) {
    throw Error("balanced square requires even n (or mirrored pair)");
  }
  // Offsets 0, +1, -1, +2, -2, ...
  std::vector<int> offsets{0};
  for (int k = 1; static_cast<int>(offsets.size()) < n; ++k) {
    offsets.push_back(k);
    if (static_cast<int>(offsets.size()) < n) { offsets.push_back(-k); }
  }
  std::vector<std::vector<int>> rows(n, std::vector<int>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      rows[i][j] = ((i + offsets[j]) % n + n) % n;
    }
  }
  return rows;
}

std::vector<PqResponse> read_responses_csv(std::istream& in, SetName set) {
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::vector<PqResponse> out;
  std::map<std::pair<std::string, std::string>, std::size_t> index;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') { line.pop_back(); }
    if (trim(line).empty()) { continue; }
    auto fields = split_csv_line(line);
    for (auto& f : fields) { f = trim(f); }
    if (!header_seen) {
      if (fields != std::vector<std::string>{"participant", "configuration",
                                             "item_id", "rating"}) {
        throw Error(
            "responses csv: header must be participant,configuration,"
            "item_id,rating");
      }
      header_seen = true;
      continue;
    }
    if (fields.size() != 4) {
      throw Error("responses csv line " + std::to_string(line_no) +
                  ": expected 4 fields");
    }
    const int item = parse_int(fields[2], line_no);
    const int rating = parse_int(fields[3], line_no);
    const auto key = std::make_pair(fields[0], fields[1]);
    auto it = index.find(key);
    if (it == index.end()) {
      it = index.emplace(key, out.size()).first;
      PqResponse r;
      r.participant_id = fields[0];
      r.configuration = fields[1];
      r.set = set;
      out.push_back(std::move(r));
    }
    auto& ratings = out[it->second].ratings;
    if (!ratings.emplace(item, rating).second) {
      throw Error("responses csv line " + std::to_string(line_no) +
                  ": duplicate item " + std::to_string(item));
    }
  }
  if (!header_seen) { throw Error("responses csv: empty input"); }
  return out;
}

void write_scores_csv(std::ostream& out,
                      std::span<const PqResponse> responses) {
  out << "participant,configuration,set,f1,f1_max,f2,f2_max,f3,f3_max,f4,"
         "f4_max,overall,overall_max,f4_reversed\n";
  for (const auto& r : responses) {
    const FactorScores s = score(r);
    out << r.participant_id << ',' << r.configuration << ','
        << to_string(r.set);
    for (const auto& f : s.factors) {
      if (f) {
        out << ',' << f->score << ',' << f->max;
      } else {
        out << ",,";
      }
    }
    out << ',' << s.overall << ',' << s.overall_max << ',';
    if (s.interface_quality_reversed) { out << *s.interface_quality_reversed; }
    out << '\n';
  }
}

}  // namespace dtwin::pq
