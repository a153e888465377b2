#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "mailtarget/date.hpp"
#include "mailtarget/errors.hpp"
#include "mailtarget/ingest.hpp"

namespace mailtarget {

inline constexpr int kDefaultWindowDays = 90;

// Eligibility window [oldest, today]. Users last active before `oldest` are
// not scored.
struct ScoringWindow {
  Date today;
  Date oldest;

  static ScoringWindow ending(Date today, int window_days) {
    if (window_days < 1) throw ConfigError("window length must be at least one day");
    return {today, today - std::chrono::days{window_days}};
  }

  long length_days() const { return days_between(oldest, today); }
};

struct ActivityProfile {
  std::string user_id;
  CategoryId category;
  std::optional<Date> last_active;
  ActivityKind last_kind = ActivityKind::Search;
};

struct ActivityScore {
  std::string user_id;
  double value = 0.0;
};

// Same-day tie-break for the recorded kind. Never affects the score.
inline int kind_priority(ActivityKind kind) {
  switch (kind) {
    case ActivityKind::Apply: return 2;
    case ActivityKind::Search: return 1;
    case ActivityKind::ResumeUpdate: return 0;
  }
  return 0;
}

// Linear recency score: 1 when last active today, 0 at the oldest eligible
// day. Returns nullopt (ineligible) for users without activity or active
// before the window opened.
inline std::optional<ActivityScore> compute_activity_score(const ActivityProfile& profile,
                                                           const ScoringWindow& window) {
  const long length = window.length_days();
  if (length <= 0) throw ConfigError("scoring window must satisfy oldest < today");
  if (!profile.last_active || *profile.last_active < window.oldest) return std::nullopt;
  const long gap = days_between(*profile.last_active, window.today);
  if (gap < 0) {
    throw std::domain_error("user '" + profile.user_id + "' last active " +
                            format_date(*profile.last_active) + ", after " +
                            format_date(window.today));
  }
  // (length - gap) / length is a single correctly rounded division, so the
  // endpoints are exact and distinct gaps give distinct scores.
  return ActivityScore{profile.user_id,
                       static_cast<double>(length - gap) / static_cast<double>(length)};
}

// One profile per user with at least one activity event, sorted by user_id.
inline std::vector<ActivityProfile> build_activity_profiles(const Corpus& corpus) {
  std::map<std::string_view, ActivityProfile, std::less<>> by_user;
  for (const auto& event : corpus.activity()) {
    auto it = by_user.find(event.user_id);
    if (it == by_user.end()) {
      const auto& user = corpus.user(event.user_id);
      by_user.emplace(event.user_id,
                      ActivityProfile{user.user_id, user.category, event.date, event.kind});
      continue;
    }
    auto& profile = it->second;
    if (event.date > *profile.last_active ||
        (event.date == *profile.last_active &&
         kind_priority(event.kind) > kind_priority(profile.last_kind))) {
      profile.last_active = event.date;
      profile.last_kind = event.kind;
    }
  }
  std::vector<ActivityProfile> profiles;
  profiles.reserve(by_user.size());
  for (auto& [id, profile] : by_user) profiles.push_back(std::move(profile));
  return profiles;
}

// Lookup in a user_id-sorted profile list.
inline const ActivityProfile* find_profile(std::span<const ActivityProfile> profiles,
                                           std::string_view user_id) {
  auto it = std::lower_bound(profiles.begin(), profiles.end(), user_id,
                             [](const ActivityProfile& p, std::string_view id) {
                               return std::string_view(p.user_id) < id;
                             });
  if (it == profiles.end() || it->user_id != user_id) return nullptr;
  return &*it;
}

}  // namespace mailtarget
