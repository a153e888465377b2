#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdlib>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mailtarget/activity.hpp"
#include "mailtarget/csv.hpp"
#include "mailtarget/date.hpp"
#include "mailtarget/errors.hpp"
#include "mailtarget/ingest.hpp"
#include "mailtarget/trends.hpp"

namespace mailtarget {

inline constexpr double kDefaultThreshold = 0.05;

// One proposed email for one user, as produced by an upstream recommender.
struct CandidateList {
  std::string user_id;
  std::vector<std::string> item_ids;
  std::string source;
};

struct ScoredCandidate {
  CandidateList candidate;
  double activity = 0.0;
  double affinity = 0.0;
  double combined = 0.0;  // activity * affinity
};

struct BatchPlan {
  Date window_id;
  std::vector<ScoredCandidate> selections;
  std::size_t budget = 0;
  double threshold = 0.0;
};

inline void validate_candidate(const CandidateList& candidate, const Corpus& corpus) {
  if (!corpus.find_user(candidate.user_id)) {
    throw DataError("candidate references unknown user id '" + candidate.user_id + "'");
  }
  if (candidate.item_ids.empty()) {
    throw DataError("candidate for user '" + candidate.user_id + "' has no items");
  }
  std::set<std::string_view> distinct;
  for (const auto& id : candidate.item_ids) {
    if (!corpus.find_item(id)) {
      throw DataError("candidate for user '" + candidate.user_id + "' references unknown item id '" +
                      id + "'");
    }
    if (!distinct.insert(id).second) {
      throw DataError("candidate for user '" + candidate.user_id + "' repeats item id '" + id + "'");
    }
  }
}

// Mean transition probability from the user's category to each item's category.
inline double list_affinity(const CandidateList& candidate, const Corpus& corpus,
                            const TransitionGraph& graph) {
  const CategoryId from = corpus.user(candidate.user_id).category;
  double sum = 0.0;
  for (const auto& id : candidate.item_ids) sum += graph.probability(from, corpus.item(id).category);
  return sum / static_cast<double>(candidate.item_ids.size());
}

// Returns nullopt when the user has no Activity Score in this window.
inline std::optional<ScoredCandidate> score_candidate(const CandidateList& candidate,
                                                      const Corpus& corpus,
                                                      std::span<const ActivityProfile> profiles,
                                                      const TransitionGraph& graph,
                                                      const ScoringWindow& window) {
  validate_candidate(candidate, corpus);
  const auto* profile = find_profile(profiles, candidate.user_id);
  if (!profile) return std::nullopt;
  const auto activity = compute_activity_score(*profile, window);
  if (!activity) return std::nullopt;
  const double affinity = list_affinity(candidate, corpus, graph);
  return ScoredCandidate{candidate, activity->value, affinity, activity->value * affinity};
}

inline std::vector<ScoredCandidate> score_candidates(std::span<const CandidateList> candidates,
                                                     const Corpus& corpus,
                                                     std::span<const ActivityProfile> profiles,
                                                     const TransitionGraph& graph,
                                                     const ScoringWindow& window) {
  std::vector<ScoredCandidate> scored;
  scored.reserve(candidates.size());
  for (const auto& c : candidates) {
    if (auto s = score_candidate(c, corpus, profiles, graph, window)) scored.push_back(std::move(*s));
  }
  return scored;
}

// Keeps each user's best candidate (ties: smallest item-id sequence), drops
// those below threshold, and takes the top `budget` ordered by combined score
// descending then user_id ascending.
inline BatchPlan select_batch(std::vector<ScoredCandidate> scored, std::size_t budget,
                              double threshold, Date window_id) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw ConfigError("threshold must lie in [0, 1]");
  }
  std::map<std::string_view, std::size_t, std::less<>> best;
  for (std::size_t i = 0; i < scored.size(); ++i) {
    auto [it, inserted] = best.emplace(scored[i].candidate.user_id, i);
    if (inserted) continue;
    const auto& current = scored[it->second];
    const auto& challenger = scored[i];
    if (challenger.combined > current.combined ||
        (challenger.combined == current.combined &&
         challenger.candidate.item_ids < current.candidate.item_ids)) {
      it->second = i;
    }
  }

  std::vector<ScoredCandidate> kept;
  kept.reserve(best.size());
  for (const auto& [user, index] : best) {
    if (scored[index].combined >= threshold) kept.push_back(std::move(scored[index]));
  }
  std::sort(kept.begin(), kept.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    if (a.combined != b.combined) return a.combined > b.combined;
    return a.candidate.user_id < b.candidate.user_id;
  });
  if (kept.size() > budget) kept.resize(budget);
  return BatchPlan{window_id, std::move(kept), budget, threshold};
}

// Control policy: every user with items in their own category gets one email
// holding that category's `items_per_email` smallest item ids. Scores are 0.
inline BatchPlan baseline_select(const Corpus& corpus, Date window_id, std::size_t items_per_email) {
  std::vector<std::vector<std::string_view>> by_category(corpus.num_categories());
  for (const auto& item : corpus.items()) by_category[item.category.value].push_back(item.item_id);
  for (auto& ids : by_category) {
    const auto k = std::min(items_per_email, ids.size());
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(k), ids.end());
    ids.resize(k);
  }

  std::vector<const UserRecord*> users;
  users.reserve(corpus.users().size());
  for (const auto& u : corpus.users()) users.push_back(&u);
  std::sort(users.begin(), users.end(),
            [](const UserRecord* a, const UserRecord* b) { return a->user_id < b->user_id; });

  BatchPlan plan{window_id, {}, 0, 0.0};
  for (const auto* user : users) {
    const auto& ids = by_category[user->category.value];
    if (ids.empty()) continue;
    CandidateList list{user->user_id, {ids.begin(), ids.end()}, "baseline"};
    plan.selections.push_back({std::move(list), 0.0, 0.0, 0.0});
  }
  plan.budget = plan.selections.size();
  return plan;
}

inline std::vector<std::string> split_item_ids(std::string_view field) {
  std::vector<std::string> ids;
  std::size_t start = 0;
  while (start <= field.size()) {
    const auto end = std::min(field.find(';', start), field.size());
    ids.emplace_back(field.substr(start, end - start));
    start = end + 1;
  }
  return ids;
}

inline std::string join_item_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) out.push_back(';');
    out += ids[i];
  }
  return out;
}

// candidates.csv: user_id,item_ids with ';'-separated item ids.
inline std::vector<CandidateList> read_candidates(std::istream& in, const std::string& source,
                                                  const Corpus& corpus) {
  std::vector<CandidateList> candidates;
  for (auto& r : csv::read(in, source, {"user_id", "item_ids"})) {
    CandidateList c{r.fields[0], split_item_ids(r.fields[1]), source};
    try {
      validate_candidate(c, corpus);
    } catch (const DataError& e) {
      throw DataError(source, r.line, e.what());
    }
    candidates.push_back(std::move(c));
  }
  return candidates;
}

inline void write_candidates(std::ostream& out, std::span<const CandidateList> candidates) {
  csv::write_row(out, {"user_id", "item_ids"});
  for (const auto& c : candidates) csv::write_row(out, {c.user_id, join_item_ids(c.item_ids)});
}

inline const std::vector<std::string>& plan_header() {
  static const std::vector<std::string> header{"window_id", "user_id", "item_ids",
                                               "activity",  "affinity", "combined"};
  return header;
}

// Rows in selection order, scores at 6 decimals.
inline void write_plan(std::ostream& out, const BatchPlan& plan) {
  csv::write_row(out, plan_header());
  const auto window = format_date(plan.window_id);
  for (const auto& s : plan.selections) {
    csv::write_row(out, {window, s.candidate.user_id, join_item_ids(s.candidate.item_ids),
                         format_fixed6(s.activity), format_fixed6(s.affinity),
                         format_fixed6(s.combined)});
  }
}

// Scores are read back at file precision. Budget is set to the row count.
inline BatchPlan read_plan(std::istream& in, const std::string& source, Date fallback_window) {
  BatchPlan plan{fallback_window, {}, 0, 0.0};
  bool first = true;
  for (auto& r : csv::read(in, source, plan_header())) {
    const auto window = parse_date(r.fields[0]);
    if (!window) throw DataError(source, r.line, "malformed window_id '" + r.fields[0] + "'");
    if (first) {
      plan.window_id = *window;
      first = false;
    } else if (*window != plan.window_id) {
      throw DataError(source, r.line, "plan mixes send windows");
    }
    double scores[3];
    for (int k = 0; k < 3; ++k) {
      const auto& f = r.fields[3 + k];
      char* end = nullptr;
      scores[k] = std::strtod(f.c_str(), &end);
      if (f.empty() || end != f.c_str() + f.size()) {
        throw DataError(source, r.line, "malformed score '" + f + "'");
      }
    }
    plan.selections.push_back(
        {{r.fields[1], split_item_ids(r.fields[2]), source}, scores[0], scores[1], scores[2]});
  }
  plan.budget = plan.selections.size();
  return plan;
}

}  // namespace mailtarget
