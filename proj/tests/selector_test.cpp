#include <gtest/gtest.h>

#include <algorithm>
#include <random>
#include <sstream>

#include "mailtarget/selector.hpp"
#include "test_support.hpp"

namespace mailtarget {
namespace {

using testing::CorpusSpec;
using testing::day;
using testing::days_before;

const Date kToday = day(2024, 6, 30);
constexpr CategoryId kA{0};
constexpr CategoryId kB{1};

TransitionGraph graph_with(std::initializer_list<std::tuple<CategoryId, CategoryId, PairCounts>> edges) {
  TransitionCounts counts(2);
  for (const auto& [from, to, c] : edges) counts.at(from, to) = c;
  return TransitionGraph::from_counts(counts, {.min_support = 1});
}

struct Scene {
  Corpus corpus;
  std::vector<ActivityProfile> profiles;
};

Scene scene(long days_inactive) {
  CorpusSpec spec;
  spec.users = {{"u1", kA}};
  spec.items = {{"a1", kA, ""}, {"a2", kA, ""}, {"b1", kB, ""}, {"b2", kB, ""}};
  spec.activity = {{"u1", ActivityKind::Search, days_before(kToday, days_inactive)}};
  Scene s{spec.build(), {}};
  s.profiles = build_activity_profiles(s.corpus);
  return s;
}

TEST(ScoreCandidate, ProductOfActivityAndMeanAffinity) {
  const auto s = scene(45);
  const auto graph = graph_with({{kA, kB, {10, 4}}});
  const auto window = ScoringWindow::ending(kToday, 90);
  const auto scored = score_candidate({"u1", {"b1"}, "t"}, s.corpus, s.profiles, graph, window);
  ASSERT_TRUE(scored);
  EXPECT_EQ(scored->activity, 0.5);
  EXPECT_DOUBLE_EQ(scored->affinity, 0.4);
  EXPECT_DOUBLE_EQ(scored->combined, 0.2);

  // Mean, not max, over the list: (0.4 + 0) / 2.
  const auto mixed = score_candidate({"u1", {"b1", "a1"}, "t"}, s.corpus, s.profiles, graph, window);
  EXPECT_DOUBLE_EQ(mixed->affinity, 0.2);
}

TEST(ScoreCandidate, FullActivityAndFullSelfAffinityGiveOne) {
  const auto s = scene(0);
  const auto graph = graph_with({{kA, kA, {6, 6}}});
  const auto scored = score_candidate({"u1", {"a1", "a2"}, "t"}, s.corpus, s.profiles, graph,
                                      ScoringWindow::ending(kToday, 90));
  EXPECT_EQ(scored->combined, 1.0);
}

TEST(ScoreCandidate, InactiveUserIsIneligible) {
  const auto s = scene(120);
  EXPECT_FALSE(score_candidate({"u1", {"a1"}, "t"}, s.corpus, s.profiles, graph_with({}),
                               ScoringWindow::ending(kToday, 90)));
}

TEST(ScoreCandidate, RejectsUnresolvableOrMalformedLists) {
  const auto s = scene(0);
  const auto graph = graph_with({});
  const auto window = ScoringWindow::ending(kToday, 90);
  EXPECT_THROW(score_candidate({"ghost", {"a1"}, "t"}, s.corpus, s.profiles, graph, window), DataError);
  EXPECT_THROW(score_candidate({"u1", {"zz"}, "t"}, s.corpus, s.profiles, graph, window), DataError);
  EXPECT_THROW(score_candidate({"u1", {}, "t"}, s.corpus, s.profiles, graph, window), DataError);
  EXPECT_THROW(score_candidate({"u1", {"a1", "a1"}, "t"}, s.corpus, s.profiles, graph, window),
               DataError);
}

ScoredCandidate scored(std::string user, double combined, std::vector<std::string> items = {"x"}) {
  return {{std::move(user), std::move(items), "t"}, 1.0, combined, combined};
}

std::vector<std::string> users_of(const BatchPlan& plan) {
  std::vector<std::string> out;
  for (const auto& s : plan.selections) out.push_back(s.candidate.user_id);
  return out;
}

TEST(SelectBatch, ZeroBudgetGivesEmptyPlan) {
  const auto plan = select_batch({scored("a", 0.9)}, 0, 0.0, kToday);
  EXPECT_TRUE(plan.selections.empty());
  EXPECT_EQ(plan.window_id, kToday);
}

// Brute force: the feasible subset (size <= budget, all >= threshold) with
// the largest total score.
std::vector<std::string> best_subset(const std::vector<ScoredCandidate>& c, std::size_t budget,
                                     double threshold) {
  double best_total = -1.0;
  std::vector<std::string> best;
  for (unsigned mask = 0; mask < (1u << c.size()); ++mask) {
    std::vector<std::string> users;
    double total = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < c.size(); ++i) {
      if (!(mask & (1u << i))) continue;
      ok = ok && c[i].combined >= threshold;
      users.push_back(c[i].candidate.user_id);
      total += c[i].combined;
    }
    if (ok && users.size() <= budget && total > best_total) {
      best_total = total;
      best = users;
    }
  }
  std::sort(best.begin(), best.end());
  return best;
}

TEST(SelectBatch, TopBudgetAboveThreshold) {
  const std::vector<ScoredCandidate> input{scored("u2", 0.5), scored("u3", 0.2), scored("u1", 0.9)};
  const auto plan = select_batch(input, 2, 0.3, kToday);
  EXPECT_EQ(users_of(plan), (std::vector<std::string>{"u1", "u2"}));
  auto picked = users_of(plan);
  std::sort(picked.begin(), picked.end());
  EXPECT_EQ(picked, best_subset(input, 2, 0.3));
  EXPECT_EQ(select_batch(input, 5, 0.3, kToday).selections.size(), 2u);
}

TEST(SelectBatch, OneEmailPerUser) {
  const auto plan = select_batch({scored("u", 0.4, {"b"}), scored("u", 0.6, {"c"})}, 5, 0.0, kToday);
  ASSERT_EQ(plan.selections.size(), 1u);
  EXPECT_EQ(plan.selections[0].combined, 0.6);

  const auto tie = select_batch({scored("u", 0.5, {"b", "a"}), scored("u", 0.5, {"a", "z"})}, 5, 0.0,
                                kToday);
  EXPECT_EQ(tie.selections[0].candidate.item_ids, (std::vector<std::string>{"a", "z"}));
}

TEST(SelectBatch, TiesBreakOnUserId) {
  const auto plan = select_batch({scored("c", 0.5), scored("a", 0.5), scored("b", 0.7)}, 2, 0.0, kToday);
  EXPECT_EQ(users_of(plan), (std::vector<std::string>{"b", "a"}));
}

TEST(SelectBatch, RejectsThresholdOutsideUnitInterval) {
  EXPECT_THROW(select_batch({}, 1, -0.1, kToday), ConfigError);
  EXPECT_THROW(select_batch({}, 1, 1.5, kToday), ConfigError);
}

// Scores on a 1/1024 grid keep scaled comparisons exact.
std::vector<ScoredCandidate> random_scored(std::mt19937_64& gen) {
  std::vector<ScoredCandidate> out;
  const auto n = gen() % 40;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back(scored("u" + std::to_string(gen() % 25), static_cast<double>(gen() % 1025) / 1024.0,
                         {"i" + std::to_string(gen() % 5)}));
  }
  return out;
}

TEST(SelectBatch, BudgetPrefixAndScalingInvariance) {
  std::mt19937_64 gen(5);
  for (int trial = 0; trial < 200; ++trial) {
    const auto input = random_scored(gen);
    const double threshold = static_cast<double>(gen() % 512) / 1024.0;
    const auto budget = gen() % 30;
    const auto plan = select_batch(input, budget, threshold, kToday);
    const auto next = select_batch(input, budget + 1, threshold, kToday);
    auto users = users_of(plan);
    auto next_users = users_of(next);
    ASSERT_LE(users.size(), next_users.size());
    EXPECT_TRUE(std::equal(users.begin(), users.end(), next_users.begin()));

    const double c = 0.01 + static_cast<double>(gen() % 1000) / 10.0;
    if (threshold * c > 1.0) continue;
    auto scaled = input;
    for (auto& s : scaled) s.combined *= c;
    EXPECT_EQ(users_of(select_batch(scaled, budget, threshold * c, kToday)), users);
  }
}

TEST(Baseline, SendsOwnCategorySmallestIdsToEveryone) {
  CorpusSpec spec;
  spec.categories = 3;
  spec.users = {{"u2", kA}, {"u1", kA}, {"u3", kB}, {"u4", CategoryId{2}}};
  spec.items = {{"a3", kA, ""}, {"a1", kA, ""}, {"a2", kA, ""}, {"b1", kB, ""}};
  const auto plan = baseline_select(spec.build(), kToday, 2);
  ASSERT_EQ(plan.selections.size(), 3u);  // u4's category has no items
  EXPECT_EQ(users_of(plan), (std::vector<std::string>{"u1", "u2", "u3"}));
  EXPECT_EQ(plan.selections[0].candidate.item_ids, (std::vector<std::string>{"a1", "a2"}));
  EXPECT_EQ(plan.selections[1].candidate.item_ids, (std::vector<std::string>{"a1", "a2"}));
  EXPECT_EQ(plan.selections[2].candidate.item_ids, (std::vector<std::string>{"b1"}));
  EXPECT_EQ(plan.budget, 3u);
}

TEST(Baseline, IgnoresActivity) {
  CorpusSpec spec;
  for (int u = 0; u < 5; ++u) spec.users.push_back({"u" + std::to_string(u), CategoryId{static_cast<std::uint32_t>(u % 2)}});
  spec.items = {{"a", kA, ""}, {"b", kB, ""}};
  EXPECT_EQ(baseline_select(spec.build(), kToday, 3).selections.size(), 5u);
}

TEST(ScoreBounds, CombinedNeverExceedsEitherFactor) {
  std::mt19937_64 gen(17);
  for (int trial = 0; trial < 20; ++trial) {
    auto spec = testing::random_corpus_spec(gen, 20, 4, 150);
    for (const auto& u : spec.users) {
      spec.activity.push_back({u.user_id, ActivityKind::Apply, days_before(kToday, static_cast<long>(gen() % 120))});
    }
    const auto corpus = spec.build();
    const auto graph = build_transition_graph(corpus, {.min_support = 1});
    double max_p = 0.0;
    for (const auto& [k, e] : graph.edges()) max_p = std::max(max_p, e.probability);
    const auto profiles = build_activity_profiles(corpus);
    for (const auto& u : corpus.users()) {
      CandidateList list{u.user_id, {}, "t"};
      for (const auto& item : corpus.items()) {
        if (gen() % 3 == 0) list.item_ids.push_back(item.item_id);
      }
      if (list.item_ids.empty()) list.item_ids.push_back(corpus.items()[0].item_id);
      const auto s = score_candidate(list, corpus, profiles, graph, ScoringWindow::ending(kToday, 90));
      if (!s) continue;
      EXPECT_GE(s->combined, 0.0);
      EXPECT_LE(s->combined, std::min(s->activity, max_p) + 1e-15);
    }
  }
}

TEST(PlanFile, WritesSelectionOrderAndReadsBack) {
  const auto plan = select_batch({scored("u2", 0.25, {"i1", "i2"}), scored("u1", 0.75)}, 5, 0.0, kToday);
  std::ostringstream out;
  write_plan(out, plan);
  EXPECT_EQ(out.str(),
            "window_id,user_id,item_ids,activity,affinity,combined\n"
            "2024-06-30,u1,x,1.000000,0.750000,0.750000\n"
            "2024-06-30,u2,i1;i2,1.000000,0.250000,0.250000\n");
  std::istringstream in(out.str());
  const auto back = read_plan(in, "plan.csv", day(2000, 1, 1));
  EXPECT_EQ(back.window_id, kToday);
  ASSERT_EQ(back.selections.size(), 2u);
  EXPECT_EQ(back.selections[1].candidate.item_ids, (std::vector<std::string>{"i1", "i2"}));
  EXPECT_EQ(back.selections[1].combined, 0.25);

  std::istringstream mixed(
      "window_id,user_id,item_ids,activity,affinity,combined\n"
      "2024-06-30,u1,x,1,1,1\n2024-07-01,u2,x,1,1,1\n");
  EXPECT_THROW(read_plan(mixed, "plan.csv", kToday), DataError);
}

TEST(CandidateFile, ValidatesRows) {
  const auto s = scene(0);
  std::istringstream good("user_id,item_ids\nu1,a1;b1\n");
  const auto lists = read_candidates(good, "candidates.csv", s.corpus);
  ASSERT_EQ(lists.size(), 1u);
  EXPECT_EQ(lists[0].item_ids, (std::vector<std::string>{"a1", "b1"}));

  std::istringstream bad("user_id,item_ids\nu1,a1\nu1,a1;a1\n");
  try {
    read_candidates(bad, "candidates.csv", s.corpus);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_EQ(e.row(), 3u);
  }
}

}  // namespace
}  // namespace mailtarget
