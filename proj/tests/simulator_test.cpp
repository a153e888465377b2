#include <gtest/gtest.h>

#include <set>
#include <sstream>

#include "mailtarget/simulator.hpp"
#include "mailtarget/trends.hpp"
#include "test_support.hpp"

namespace mailtarget {
namespace {

using testing::day;

SimulationConfig small_config(std::uint64_t seed = 1) {
  SimulationConfig c;
  c.seed = seed;
  c.num_users = 400;
  c.num_items = 200;
  c.num_categories = 4;
  c.ground_truth = default_ground_truth(4);
  return c;
}

TEST(Rng, BelowStaysInRangeAndStreamsDiffer) {
  Rng a(9, Rng::kCorpus), b(9, Rng::kCandidates);
  bool differ = false;
  for (int i = 0; i < 1000; ++i) {
    const auto x = a.below(7);
    EXPECT_LT(x, 7u);
    const double u = b.uniform();
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    differ = differ || x != b.below(7);
  }
  EXPECT_TRUE(differ);
}

TEST(DefaultGroundTruth, PatternAndValueSet) {
  const auto t = default_ground_truth(8);
  EXPECT_EQ(t.at({0}, {0}), 0.4);
  EXPECT_EQ(t.at({1}, {1}), 0.2);
  EXPECT_EQ(t.at({0}, {1}), 0.8);
  EXPECT_EQ(t.at({7}, {0}), 0.8);
  EXPECT_EQ(t.at({0}, {4}), 0.2);
  EXPECT_EQ(t.at({0}, {2}), 0.0);
  EXPECT_EQ(default_ground_truth(1).at({0}, {0}), 0.4);
}

TEST(GenerateCorpus, SameSeedSameBytes) {
  const auto a = generate_corpus(small_config(5));
  const auto b = generate_corpus(small_config(5));
  EXPECT_EQ(testing::serialize(a), testing::serialize(b));
  EXPECT_NE(testing::serialize(a), testing::serialize(generate_corpus(small_config(6))));
  EXPECT_EQ(a.users().size(), 400u);
  EXPECT_EQ(a.items().size(), 200u);
  EXPECT_EQ(a.synthesized_seen(), 0u);

  std::ostringstream ca, cb;
  write_candidates(ca, generate_candidates(small_config(5), a));
  write_candidates(cb, generate_candidates(small_config(5), b));
  EXPECT_EQ(ca.str(), cb.str());
}

TEST(GenerateCorpus, ZeroAffinityMeansNoInteractions) {
  auto config = small_config();
  config.ground_truth.at({2}, {3}) = 0.0;
  config.ground_truth.at({0}, {1}) = 0.0;
  const auto corpus = generate_corpus(config);
  const auto counts = count_transitions(corpus);
  EXPECT_GT(counts.at({2}, {3}).seen, 0u);
  EXPECT_EQ(counts.at({2}, {3}).interacted, 0u);
  EXPECT_EQ(counts.at({0}, {1}).interacted, 0u);
}

TEST(GenerateCorpus, ActivityStaysInsideHistoryAndWindowBounds) {
  auto config = small_config();
  config.inactive_fraction = 0.0;
  const auto corpus = generate_corpus(config);
  const auto profiles = build_activity_profiles(corpus);
  EXPECT_EQ(profiles.size(), corpus.users().size());
  for (const auto& p : profiles) {
    EXPECT_TRUE(compute_activity_score(p, config.window())) << p.user_id;
  }
}

TEST(GenerateCandidates, OwnCategoryFirstThenDistinctOthers) {
  const auto config = small_config();
  const auto corpus = generate_corpus(config);
  const auto candidates = generate_candidates(config, corpus);
  ASSERT_EQ(candidates.size(), corpus.users().size() * config.candidates_per_user);
  for (std::size_t u = 0; u < corpus.users().size(); ++u) {
    std::set<std::uint32_t> categories;
    for (std::size_t k = 0; k < config.candidates_per_user; ++k) {
      const auto& list = candidates[u * config.candidates_per_user + k];
      validate_candidate(list, corpus);
      EXPECT_EQ(list.item_ids.size(), config.list_length);
      const auto cat = corpus.item(list.item_ids[0]).category;
      for (const auto& id : list.item_ids) EXPECT_EQ(corpus.item(id).category, cat);
      if (k == 0) {
        EXPECT_EQ(cat, corpus.user(list.user_id).category);
      }
      categories.insert(cat.value);
    }
    EXPECT_EQ(categories.size(), config.candidates_per_user);
  }
}

TEST(GenerateCorpus, RecoversPlantedAffinity) {
  for (std::uint64_t seed : {11u, 12u, 13u}) {
    SimulationConfig config;
    config.seed = seed;
    config.num_categories = 2;
    config.num_users = 2000;
    config.num_items = 400;
    config.history_per_category = 10;
    config.ground_truth = default_ground_truth(2);
    config.ground_truth.at({0}, {1}) = 0.4;
    const auto counts = count_transitions(generate_corpus(config));
    const auto& c = counts.at({0}, {1});
    ASSERT_GE(c.seen, 9000u);
    EXPECT_NEAR(static_cast<double>(c.interacted) / static_cast<double>(c.seen), 0.4, 0.03);
  }
}

struct ReplayScene {
  Corpus corpus;
  BatchPlan plan;
};

// Every user active today; one single-item email per user.
ReplayScene replay_scene(std::size_t users) {
  testing::CorpusSpec spec;
  spec.categories = 1;
  spec.items = {{"i", CategoryId{0}, ""}};
  BatchPlan plan{spec.reference, {}, users, 0.0};
  for (std::size_t u = 0; u < users; ++u) {
    const auto id = "u" + std::to_string(u);
    spec.users.push_back({id, CategoryId{0}});
    spec.activity.push_back({id, ActivityKind::Search, spec.reference});
    plan.selections.push_back({{id, {"i"}, "t"}, 1.0, 1.0, 1.0});
  }
  return {spec.build(), plan};
}

GroundTruth flat_truth(double affinity) {
  GroundTruth t;
  t.num_categories = 1;
  t.affinity = {affinity};
  return t;
}

// With zero affinity nothing is clicked or applied; opens still follow the
// recency share of the open probability unless that share is zero.
TEST(SimulateResponses, ZeroAffinityFunnel) {
  const auto s = replay_scene(200);
  const auto window = ScoringWindow::ending(s.corpus.reference_date(), 90);
  auto truth = flat_truth(0.0);
  const auto mixed = compute_funnel(simulate_responses(s.plan, s.corpus, truth, window, 1));
  EXPECT_GT(mixed.counts.opens, 0u);
  EXPECT_EQ(mixed.counts.clicks + mixed.counts.apps, 0u);

  truth.recency_weight = 0.0;
  const auto m = compute_funnel(simulate_responses(s.plan, s.corpus, truth, window, 1));
  EXPECT_EQ(m.counts.opens + m.counts.clicks + m.counts.apps, 0u);
}

TEST(SimulateResponses, CertainFunnelAppliesEverywhere) {
  const auto s = replay_scene(200);
  auto truth = flat_truth(1.0);
  truth.open_base = truth.click_base = truth.apply_base = 1.0;
  const auto outcomes = simulate_responses(s.plan, s.corpus, truth,
                                           ScoringWindow::ending(s.corpus.reference_date(), 90), 1);
  EXPECT_EQ(compute_funnel(outcomes).counts.apps, 200u);
  EXPECT_EQ(outcomes[3].email_id, "2024-06-30-u3");
}

TEST(SimulateResponses, ObservedOpenRateConcentrates) {
  const auto s = replay_scene(10000);
  auto truth = flat_truth(0.3);
  truth.open_base = 1.0;
  truth.recency_weight = 0.0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto m = compute_funnel(simulate_responses(
        s.plan, s.corpus, truth, ScoringWindow::ending(s.corpus.reference_date(), 90), seed));
    EXPECT_NEAR(m.osr, 0.3, 0.02) << "seed " << seed;
  }
}

TEST(SimulateResponses, DeterministicHierarchicalAndMonotoneInAffinity) {
  const auto config = small_config(3);
  const auto corpus = generate_corpus(config);
  const auto plan = baseline_select(corpus, config.today, 3);
  const auto window = config.window();
  const auto first = simulate_responses(plan, corpus, config.ground_truth, window, 8);
  const auto again = simulate_responses(plan, corpus, config.ground_truth, window, 8);
  std::ostringstream a, b;
  write_outcomes(a, first);
  write_outcomes(b, again);
  EXPECT_EQ(a.str(), b.str());
  for (const auto& o : first) EXPECT_TRUE(satisfies_hierarchy(o));

  auto raised = config.ground_truth;
  for (auto& v : raised.affinity) v = std::min(1.0, v + 0.1);
  const auto higher = simulate_responses(plan, corpus, raised, window, 8);
  EXPECT_GE(compute_funnel(higher).counts.opens, compute_funnel(first).counts.opens);
  for (std::size_t i = 0; i < first.size(); ++i) EXPECT_GE(higher[i].opened, first[i].opened);
}

TEST(SimulateResponses, RejectsUnknownReferences) {
  const auto s = replay_scene(2);
  auto plan = s.plan;
  plan.selections[0].candidate.item_ids = {"missing"};
  EXPECT_THROW(simulate_responses(plan, s.corpus, flat_truth(0.5),
                                  ScoringWindow::ending(s.corpus.reference_date(), 90), 1),
               DataError);
}

TEST(Scenario, ParsesOverridesAndRoundTrips) {
  std::istringstream in(
      "# demo\n"
      "seed = 7\n"
      "num_users = 50\nnum_items = 60\nnum_categories = 3\n"
      "today = \"2024-01-15\"\n"
      "recency_weight = 0.25  # trailing comment\n"
      "affinity.2.0 = 0.6\n");
  const auto c = parse_scenario(in, "scenario.toml");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.num_categories, 3u);
  EXPECT_EQ(c.today, day(2024, 1, 15));
  EXPECT_EQ(c.ground_truth.recency_weight, 0.25);
  EXPECT_EQ(c.ground_truth.at({2}, {0}), 0.6);
  EXPECT_EQ(c.ground_truth.at({0}, {1}), 0.8);

  std::ostringstream out;
  write_scenario(out, c);
  std::istringstream back(out.str());
  const auto again = parse_scenario(back, "copy.toml");
  std::ostringstream out2;
  write_scenario(out2, again);
  EXPECT_EQ(out.str(), out2.str());
}

TEST(Scenario, RejectsBadInput) {
  auto parse = [](const std::string& text) {
    std::istringstream in(text);
    return parse_scenario(in, "scenario.toml");
  };
  EXPECT_THROW(parse("colour = blue\n"), DataError);
  EXPECT_THROW(parse("seed = -1\n"), DataError);
  EXPECT_THROW(parse("open_base = lots\n"), DataError);
  EXPECT_THROW(parse("seed = 1\nseed = 2\n"), DataError);
  EXPECT_THROW(parse("affinity.9.0 = 0.5\n"), DataError);
  EXPECT_THROW(parse("just words\n"), DataError);
  EXPECT_THROW(parse("affinity.0.0 = 1.5\n"), ConfigError);
  EXPECT_THROW(parse("num_items = 2\nnum_categories = 3\n"), ConfigError);
  EXPECT_THROW(parse("click_base = 0\n"), ConfigError);
}

}  // namespace
}  // namespace mailtarget
