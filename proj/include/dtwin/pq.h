#pragma once

#include <array>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dtwin::pq {

enum class Factor {
  kInvolvement = 0,
  kSensoryFidelity = 1,
  kAdaptationImmersion = 2,
  kInterfaceQuality = 3,
};
inline constexpr std::size_t kFactorCount = 4;
const char* to_string(Factor f);

struct PqItem {
  int item_id = 0;
  Factor factor = Factor::kInvolvement;
  std::string_view tag;
};

/// The 29 scored items (1..25, 29..32). Checked at first use: every item
/// belongs to exactly one factor.
std::span<const PqItem> item_bank();
std::optional<Factor> factor_of(int item_id);

enum class SetName { kObservation, kInteraction };
const char* to_string(SetName s);
SetName set_from_string(const std::string& s);

std::span<const int> item_ids(SetName set);

struct PqResponse {
  std::string participant_id;
  std::string configuration;
  SetName set = SetName::kObservation;
  std::map<int, int> ratings;  // item_id -> 1..7
};

struct FactorScore {
  int score = 0;
  int max = 0;
};

struct FactorScores {
  std::array<std::optional<FactorScore>, kFactorCount> factors;
  int overall = 0;
  int overall_max = 0;

  const std::optional<FactorScore>& operator[](Factor f) const {
    return factors[static_cast<std::size_t>(f)];
  }
  /// Interface-quality on the reversed scale (8 - rating per item); absent
  /// when the set has no factor-4 items.
  std::optional<int> interface_quality_reversed;
};

/// Missing items, extra items and out-of-range values, in item order:
/// "missing: 31", "extra: 5", "out of range: 4". Empty means valid.
std::vector<std::string> validate_response(const std::map<int, int>& ratings,
                                           SetName set);

/// Throws Error("invalid response: ...") joining the validation messages.
FactorScores score(const PqResponse& response);

/// Maxima for a set, i.e. the score of an all-7 response.
FactorScores factor_maxima(SetName set);

struct FactorStats {
  double mean = 0.0;
  double std = 0.0;  // sample std (n - 1); 0 when n == 1
  int n = 0;
  bool single = false;
};

struct GroupSummary {
  std::string configuration;
  int n = 0;
  std::array<std::optional<FactorStats>, kFactorCount> factors;
};

/// Groups by configuration in first-seen order. Throws on mixed sets.
std::vector<GroupSummary> aggregate(std::span<const PqResponse> responses);

/// Balanced Latin square with 0-based condition labels. Row i is
/// [i, i+1, i-1, i+2, i-2, ...] mod n. Throws for odd or n < 2.
std::vector<std::vector<int>> latin_square(int n);

/// Long-format CSV `participant,configuration,item_id,rating` (header
/// required). Rows group into one response per (participant, configuration)
/// in first-seen order; no validation beyond parsing.
std::vector<PqResponse> read_responses_csv(std::istream& in, SetName set);

/// One row per response:
/// participant,configuration,set,f1,f1_max,f2,f2_max,f3,f3_max,f4,f4_max,
/// overall,overall_max,f4_reversed. Absent factors are empty fields.
void write_scores_csv(std::ostream& out, std::span<const PqResponse> responses);

}  // namespace dtwin::pq
