#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <unordered_set>
#include <vector>

#include "mailtarget/activity.hpp"
#include "mailtarget/date.hpp"
#include "mailtarget/errors.hpp"
#include "mailtarget/ingest.hpp"
#include "mailtarget/metrics.hpp"
#include "mailtarget/selector.hpp"

namespace mailtarget {

// Seeded generator. Each consumer uses its own stream so that, for example,
// changing candidate generation never perturbs the corpus. The engine is
// mt19937_64 seeded with seed_seq{seed lo, seed hi, stream}; uniform() takes
// the top 53 bits of one output, below(n) rejects outputs past the largest
// multiple of n.
class Rng {
 public:
  enum Stream : std::uint32_t { kCorpus = 1, kCandidates = 2, kResponses = 3 };

  Rng(std::uint64_t seed, Stream stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    engine_.seed(seq);
  }

  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("below(0)");
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

// Planted response model, distinct from the graph learned from history.
struct GroundTruth {
  std::size_t num_categories = 0;
  std::vector<double> affinity;  // row-major [user category][item category]
  double open_base = 0.8;
  double click_base = 0.6;
  double apply_base = 0.5;
  double recency_weight = 0.5;

  double at(CategoryId from, CategoryId to) const {
    return affinity[from.value * num_categories + to.value];
  }
  double& at(CategoryId from, CategoryId to) {
    return affinity[from.value * num_categories + to.value];
  }

  double mix(double recency, double affinity_mean) const {
    return recency_weight * recency + (1.0 - recency_weight) * affinity_mean;
  }
};

// Default planted affinities. Row a: own category 0.4 (even a) or 0.2 (odd
// a), the next category 0.8, the opposite category 0.2, all others 0.
inline GroundTruth default_ground_truth(std::size_t num_categories) {
  GroundTruth truth;
  truth.num_categories = num_categories;
  truth.affinity.assign(num_categories * num_categories, 0.0);
  const auto n = static_cast<std::uint32_t>(num_categories);
  for (std::uint32_t a = 0; a < n; ++a) {
    truth.at({a}, {a}) = a % 2 == 0 ? 0.4 : 0.2;
    const std::uint32_t opposite = (a + n / 2) % n;
    if (opposite != a) truth.at({a}, {opposite}) = 0.2;
    const std::uint32_t next = (a + 1) % n;
    if (next != a) truth.at({a}, {next}) = 0.8;
  }
  return truth;
}

struct SimulationConfig {
  std::uint64_t seed = 42;
  std::size_t num_users = 10000;
  std::size_t num_items = 50000;
  std::size_t num_categories = 8;
  // Last-active gap is floor((window_days + 1) * u^(1 / dispersion)) days:
  // 1 spreads uniformly over the window, smaller values pull towards today.
  double activity_dispersion = 1.0;
  // Share of users last active before the window (half of them never active).
  double inactive_fraction = 0.1;
  Date today = Date{std::chrono::year{2024} / 6 / 30};
  int window_days = kDefaultWindowDays;
  std::size_t history_per_category = 3;
  int history_days = 180;
  std::size_t candidates_per_user = 4;
  std::size_t list_length = 3;
  GroundTruth ground_truth = default_ground_truth(8);

  ScoringWindow window() const { return ScoringWindow::ending(today, window_days); }

  void validate() const {
    auto require = [](bool ok, const char* what) {
      if (!ok) throw ConfigError(std::string("invalid scenario: ") + what);
    };
    require(num_users > 0 && num_items > 0 && num_categories > 0, "sizes must be positive");
    require(num_categories <= num_items, "num_categories must not exceed num_items");
    require(activity_dispersion > 0.0, "activity_dispersion must be positive");
    require(inactive_fraction >= 0.0 && inactive_fraction <= 1.0,
            "inactive_fraction must lie in [0, 1]");
    require(window_days >= 1, "window_days must be at least 1");
    require(history_days >= 1, "history_days must be at least 1");
    require(candidates_per_user >= 1 && list_length >= 1,
            "candidates_per_user and list_length must be positive");
    const auto& g = ground_truth;
    require(g.num_categories == num_categories &&
                g.affinity.size() == num_categories * num_categories,
            "affinity matrix size does not match num_categories");
    for (double v : g.affinity) require(v >= 0.0 && v <= 1.0, "affinity entries must lie in [0, 1]");
    require(g.open_base > 0.0 && g.open_base <= 1.0, "open_base must lie in (0, 1]");
    require(g.click_base > 0.0 && g.click_base <= 1.0, "click_base must lie in (0, 1]");
    require(g.apply_base > 0.0 && g.apply_base <= 1.0, "apply_base must lie in (0, 1]");
    require(g.recency_weight >= 0.0 && g.recency_weight <= 1.0,
            "recency_weight must lie in [0, 1]");
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::string padded_id(char prefix, std::size_t value, std::size_t count) {
  const int width = static_cast<int>(std::to_string(count).size());
  char buf[40];
  std::snprintf(buf, sizeof buf, "%c%0*zu", prefix, width, value);
  return buf;
}

// Floyd's algorithm: `k` distinct indices from [0, n), in draw order.
inline std::vector<std::size_t> sample_distinct(Rng& rng, std::size_t n, std::size_t k) {
  k = std::min(k, n);
  std::vector<std::size_t> out;
  std::unordered_set<std::size_t> chosen;
  for (std::size_t j = n - k; j < n; ++j) {
    const auto t = static_cast<std::size_t>(rng.below(j + 1));
    const auto pick = chosen.count(t) ? j : t;
    chosen.insert(pick);
    out.push_back(pick);
  }
  return out;
}

}  // namespace detail

// Flat `key = value` scenario file. '#' starts a comment; values may be
// quoted. Affinity entries are set individually as `affinity.<from>.<to>`
// on top of the default matrix for num_categories.
inline SimulationConfig parse_scenario(std::istream& in, const std::string& source) {
  SimulationConfig config;
  std::map<std::string, std::pair<std::string, std::size_t>> values;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto text = detail::trim(line);
    if (text.empty()) continue;
    const auto eq = text.find('=');
    if (eq == std::string::npos) throw DataError(source, line_no, "expected 'key = value'");
    auto key = detail::trim(std::string_view(text).substr(0, eq));
    auto value = detail::trim(std::string_view(text).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    if (key.empty() || value.empty()) throw DataError(source, line_no, "empty key or value");
    if (!values.emplace(key, std::pair{value, line_no}).second) {
      throw DataError(source, line_no, "duplicate key '" + key + "'");
    }
  }

  auto real = [&](const std::string& key, double& out) {
    auto it = values.find(key);
    if (it == values.end()) return;
    const auto& [v, ln] = it->second;
    char* end = nullptr;
    out = std::strtod(v.c_str(), &end);
    if (end != v.c_str() + v.size() || !std::isfinite(out)) {
      throw DataError(source, ln, "'" + key + "' expects a number, got '" + v + "'");
    }
    values.erase(it);
  };
  auto count = [&](const std::string& key, auto& out) {
    auto it = values.find(key);
    if (it == values.end()) return;
    const auto& [v, ln] = it->second;
    std::uint64_t parsed = 0;
    auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), parsed);
    if (ec != std::errc{} || ptr != v.data() + v.size()) {
      throw DataError(source, ln, "'" + key + "' expects a non-negative integer, got '" + v + "'");
    }
    out = static_cast<std::remove_reference_t<decltype(out)>>(parsed);
    values.erase(it);
  };

  count("seed", config.seed);
  count("num_users", config.num_users);
  count("num_items", config.num_items);
  count("num_categories", config.num_categories);
  real("activity_dispersion", config.activity_dispersion);
  real("inactive_fraction", config.inactive_fraction);
  if (auto it = values.find("today"); it != values.end()) {
    auto d = parse_date(it->second.first);
    if (!d) throw DataError(source, it->second.second, "'today' expects YYYY-MM-DD");
    config.today = *d;
    values.erase(it);
  }
  count("window_days", config.window_days);
  count("history_per_category", config.history_per_category);
  count("history_days", config.history_days);
  count("candidates_per_user", config.candidates_per_user);
  count("list_length", config.list_length);

  auto& truth = config.ground_truth;
  truth = default_ground_truth(config.num_categories);
  real("open_base", truth.open_base);
  real("click_base", truth.click_base);
  real("apply_base", truth.apply_base);
  real("recency_weight", truth.recency_weight);

  for (auto it = values.begin(); it != values.end();) {
    const auto& key = it->first;
    unsigned from = 0, to = 0;
    char tail = 0;
    if (std::sscanf(key.c_str(), "affinity.%u.%u%c", &from, &to, &tail) != 2) {
      throw DataError(source, it->second.second, "unknown key '" + key + "'");
    }
    if (from >= config.num_categories || to >= config.num_categories) {
      throw DataError(source, it->second.second, "affinity entry outside the category range");
    }
    double v = 0.0;
    real(key, v);
    truth.at({from}, {to}) = v;
    it = values.begin();
  }
  config.validate();
  return config;
}

// Writes every key, including the full affinity matrix, so the output parses
// back to the same configuration.
inline void write_scenario(std::ostream& out, const SimulationConfig& c) {
  auto real = [](double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "seed = " << c.seed << '\n'
      << "num_users = " << c.num_users << '\n'
      << "num_items = " << c.num_items << '\n'
      << "num_categories = " << c.num_categories << '\n'
      << "activity_dispersion = " << real(c.activity_dispersion) << '\n'
      << "inactive_fraction = " << real(c.inactive_fraction) << '\n'
      << "today = " << format_date(c.today) << '\n'
      << "window_days = " << c.window_days << '\n'
      << "history_per_category = " << c.history_per_category << '\n'
      << "history_days = " << c.history_days << '\n'
      << "candidates_per_user = " << c.candidates_per_user << '\n'
      << "list_length = " << c.list_length << '\n'
      << "open_base = " << real(c.ground_truth.open_base) << '\n'
      << "click_base = " << real(c.ground_truth.click_base) << '\n'
      << "apply_base = " << real(c.ground_truth.apply_base) << '\n'
      << "recency_weight = " << real(c.ground_truth.recency_weight) << '\n';
  const auto n = static_cast<std::uint32_t>(c.num_categories);
  for (std::uint32_t a = 0; a < n; ++a) {
    for (std::uint32_t b = 0; b < n; ++b) {
      out << "affinity." << a << '.' << b << " = " << real(c.ground_truth.at({a}, {b})) << '\n';
    }
  }
}

// Draw order (stream kCorpus): one category draw per user in id order; then
// per user the activity draws; then per user, per item category, the sampled
// items and for each one a date draw and an interaction draw. Items are
// assigned to categories round-robin so every category is populated.
inline Corpus generate_corpus(const SimulationConfig& config) {
  config.validate();
  Rng rng(config.seed, Rng::kCorpus);
  CorpusBuilder builder(config.today);
  const auto n_cat = config.num_categories;

  for (std::size_t c = 0; c < n_cat; ++c) {
    builder.add_category({CategoryId{static_cast<std::uint32_t>(c)},
                          detail::padded_id('c', c, n_cat).replace(0, 1, "category-")});
  }
  std::vector<std::vector<std::size_t>> items_by_category(n_cat);
  std::vector<std::string> item_ids(config.num_items);
  for (std::size_t i = 0; i < config.num_items; ++i) {
    item_ids[i] = detail::padded_id('i', i, config.num_items);
    const auto cat = static_cast<std::uint32_t>(i % n_cat);
    items_by_category[cat].push_back(i);
    builder.add_item({item_ids[i], CategoryId{cat}, "Item " + std::to_string(i)});
  }
  std::vector<std::uint32_t> user_category(config.num_users);
  std::vector<std::string> user_ids(config.num_users);
  for (std::size_t u = 0; u < config.num_users; ++u) {
    user_ids[u] = detail::padded_id('u', u, config.num_users);
    user_category[u] = static_cast<std::uint32_t>(rng.below(n_cat));
    builder.add_user({user_ids[u], CategoryId{user_category[u]}});
  }

  const auto window = static_cast<std::uint64_t>(config.window_days);
  for (std::size_t u = 0; u < config.num_users; ++u) {
    std::uint64_t gap = 0;
    if (rng.uniform() < config.inactive_fraction) {
      if (rng.uniform() < 0.5) continue;  // never active
      gap = window + 1 + rng.below(window);
    } else {
      const double scaled = static_cast<double>(window + 1) *
                            std::pow(rng.uniform(), 1.0 / config.activity_dispersion);
      gap = std::min<std::uint64_t>(window, static_cast<std::uint64_t>(scaled));
    }
    const Date last = config.today - std::chrono::days{gap};
    const auto events = 1 + rng.below(3);
    for (std::uint64_t k = 0; k < events; ++k) {
      const auto kind = static_cast<ActivityKind>(rng.below(3));
      const auto back = k == 0 ? 0 : rng.below(30);
      builder.add_activity({user_ids[u], kind, last - std::chrono::days{back}});
    }
  }

  const auto& truth = config.ground_truth;
  for (std::size_t u = 0; u < config.num_users; ++u) {
    for (std::uint32_t b = 0; b < n_cat; ++b) {
      const auto& pool = items_by_category[b];
      const double p = truth.at({user_category[u]}, {b});
      for (auto pick : detail::sample_distinct(rng, pool.size(), config.history_per_category)) {
        const Date date = config.today - std::chrono::days{1 + rng.below(config.history_days)};
        const auto& item = item_ids[pool[pick]];
        builder.add_exposure({user_ids[u], item, ExposureKind::Seen, date});
        if (rng.uniform() < p) builder.add_exposure({user_ids[u], item, ExposureKind::Interacted, date});
      }
    }
  }
  return std::move(builder).finish();
}

// Stands in for the upstream recommender: per user, one list from the
// user's own category plus lists from distinct randomly chosen other
// categories, each holding `list_length` distinct items of that category.
inline std::vector<CandidateList> generate_candidates(const SimulationConfig& config,
                                                      const Corpus& corpus) {
  Rng rng(config.seed, Rng::kCandidates);
  const auto n_cat = corpus.num_categories();
  std::vector<std::vector<std::string_view>> items_by_category(n_cat);
  for (const auto& item : corpus.items()) items_by_category[item.category.value].push_back(item.item_id);

  std::vector<CandidateList> candidates;
  for (const auto& user : corpus.users()) {
    std::vector<std::uint32_t> others;
    for (std::uint32_t c = 0; c < n_cat; ++c) {
      if (c != user.category.value) others.push_back(c);
    }
    std::vector<std::uint32_t> chosen{user.category.value};
    for (auto idx : detail::sample_distinct(rng, others.size(), config.candidates_per_user - 1)) {
      chosen.push_back(others[idx]);
    }
    for (auto c : chosen) {
      const auto& pool = items_by_category[c];
      if (pool.empty()) continue;
      CandidateList list{user.user_id, {}, "simulator"};
      for (auto idx : detail::sample_distinct(rng, pool.size(), config.list_length)) {
        list.item_ids.emplace_back(pool[idx]);
      }
      candidates.push_back(std::move(list));
    }
  }
  return candidates;
}

// Replays the funnel for each selection in plan order. Every selection
// consumes exactly three uniforms (open, click, apply) whatever the outcome,
// so outcomes for one email never shift the draws of another.
inline std::vector<FunnelOutcome> simulate_responses(const BatchPlan& plan, const Corpus& corpus,
                                                     const GroundTruth& truth,
                                                     const ScoringWindow& window,
                                                     std::uint64_t seed) {
  if (truth.num_categories != corpus.num_categories()) {
    throw ConfigError("ground truth and corpus disagree on the number of categories");
  }
  const auto profiles = build_activity_profiles(corpus);
  Rng rng(seed, Rng::kResponses);
  const auto window_tag = format_date(plan.window_id);

  std::vector<FunnelOutcome> outcomes;
  outcomes.reserve(plan.selections.size());
  for (const auto& selection : plan.selections) {
    const auto& list = selection.candidate;
    validate_candidate(list, corpus);
    const CategoryId from = corpus.user(list.user_id).category;
    double affinity = 0.0;
    for (const auto& id : list.item_ids) affinity += truth.at(from, corpus.item(id).category);
    affinity /= static_cast<double>(list.item_ids.size());

    double recency = 0.0;
    if (const auto* profile = find_profile(profiles, list.user_id)) {
      if (auto score = compute_activity_score(*profile, window)) recency = score->value;
    }

    const double u_open = rng.uniform();
    const double u_click = rng.uniform();
    const double u_apply = rng.uniform();
    FunnelOutcome o{window_tag + "-" + list.user_id, list.user_id};
    o.opened = u_open < truth.open_base * truth.mix(recency, affinity);
    o.clicked = o.opened && u_click < truth.click_base * affinity;
    o.applied = o.clicked && u_apply < truth.apply_base * affinity;
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

}  // namespace mailtarget
