#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "mailtarget/csv.hpp"
#include "mailtarget/errors.hpp"
#include "mailtarget/ingest.hpp"

namespace mailtarget {

inline constexpr std::uint64_t kDefaultMinSupport = 10;

struct GraphOptions {
  // Pairs with fewer distinct seen (user, item) pairs have no edge.
  std::uint64_t min_support = kDefaultMinSupport;
  // Additive smoothing: (interacted + alpha) / (seen + 2 alpha). Off by default.
  double laplace_alpha = 0.0;
};

struct PairCounts {
  std::uint64_t seen = 0;
  std::uint64_t interacted = 0;

  PairCounts& operator+=(const PairCounts& other) {
    seen += other.seen;
    interacted += other.interacted;
    return *this;
  }
  friend bool operator==(const PairCounts&, const PairCounts&) = default;
};

// Dense C x C table of de-duplicated exposure counts, indexed
// [user category][item category]. Partial tables merge by addition.
class TransitionCounts {
 public:
  explicit TransitionCounts(std::size_t num_categories = 0)
      : n_(num_categories), cells_(num_categories * num_categories) {}

  std::size_t num_categories() const noexcept { return n_; }
  PairCounts& at(CategoryId from, CategoryId to) { return cells_[from.value * n_ + to.value]; }
  const PairCounts& at(CategoryId from, CategoryId to) const {
    return cells_[from.value * n_ + to.value];
  }

  TransitionCounts& operator+=(const TransitionCounts& other) {
    if (other.n_ != n_) throw std::invalid_argument("merging counts over different taxonomies");
    for (std::size_t i = 0; i < cells_.size(); ++i) cells_[i] += other.cells_[i];
    return *this;
  }
  friend bool operator==(const TransitionCounts&, const TransitionCounts&) = default;

 private:
  std::size_t n_;
  std::vector<PairCounts> cells_;
};

// Counts each distinct (user, item) pair at most once per exposure kind.
inline TransitionCounts count_transitions(const Corpus& corpus) {
  std::vector<std::pair<std::size_t, std::size_t>> seen;
  std::vector<std::pair<std::size_t, std::size_t>> interacted;
  for (const auto& e : corpus.exposures()) {
    const auto pair = std::pair{*corpus.find_user(e.user_id), *corpus.find_item(e.item_id)};
    (e.kind == ExposureKind::Seen ? seen : interacted).push_back(pair);
  }
  TransitionCounts counts(corpus.num_categories());
  auto tally = [&](auto& pairs, std::uint64_t PairCounts::*field) {
    std::sort(pairs.begin(), pairs.end());
    pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
    for (const auto& [u, i] : pairs) {
      counts.at(corpus.users()[u].category, corpus.items()[i].category).*field += 1;
    }
  };
  tally(seen, &PairCounts::seen);
  tally(interacted, &PairCounts::interacted);
  return counts;
}

struct TransitionEdge {
  CategoryId from;
  CategoryId to;
  std::uint64_t seen_count = 0;
  std::uint64_t interaction_count = 0;
  double probability = 0.0;
};

// Directed category-affinity graph. Edge (a, b) carries the share of
// category-b items seen by category-a users that those users interacted with.
class TransitionGraph {
 public:
  TransitionGraph() = default;

  static TransitionGraph from_counts(const TransitionCounts& counts, GraphOptions options = {}) {
    TransitionGraph graph(counts.num_categories(), options);
    const auto n = static_cast<std::uint32_t>(counts.num_categories());
    for (std::uint32_t a = 0; a < n; ++a) {
      for (std::uint32_t b = 0; b < n; ++b) {
        const auto& c = counts.at(CategoryId{a}, CategoryId{b});
        graph.insert(CategoryId{a}, CategoryId{b}, c);
      }
    }
    return graph;
  }

  std::size_t num_categories() const noexcept { return num_categories_; }
  const GraphOptions& options() const noexcept { return options_; }
  const std::map<std::pair<std::uint32_t, std::uint32_t>, TransitionEdge>& edges() const noexcept {
    return edges_;
  }

  const TransitionEdge* edge(CategoryId from, CategoryId to) const {
    auto it = edges_.find({from.value, to.value});
    return it == edges_.end() ? nullptr : &it->second;
  }

  // 0 for absent edges; the self-edge is counted like any other.
  double probability(CategoryId from, CategoryId to) const {
    if (from.value >= num_categories_ || to.value >= num_categories_) {
      throw DataError("unknown category id in transition query (" + std::to_string(from.value) +
                      " -> " + std::to_string(to.value) + ")");
    }
    const auto* e = edge(from, to);
    return e ? e->probability : 0.0;
  }

  // Adds the edge when counts meet min_support; returns whether it was added.
  bool insert(CategoryId from, CategoryId to, const PairCounts& counts) {
    if (counts.interacted > counts.seen) {
      throw DataError("interaction count exceeds seen count for " + std::to_string(from.value) +
                      " -> " + std::to_string(to.value));
    }
    if (counts.seen == 0 || counts.seen < options_.min_support) return false;
    const double alpha = options_.laplace_alpha;
    const double p = (static_cast<double>(counts.interacted) + alpha) /
                     (static_cast<double>(counts.seen) + 2.0 * alpha);
    return edges_
        .emplace(std::pair{from.value, to.value},
                 TransitionEdge{from, to, counts.seen, counts.interacted, p})
        .second;
  }

 private:
  TransitionGraph(std::size_t num_categories, GraphOptions options)
      : num_categories_(num_categories), options_(options) {}

  friend TransitionGraph read_graph(std::istream&, const std::string&, std::size_t, GraphOptions);

  std::size_t num_categories_ = 0;
  GraphOptions options_;
  std::map<std::pair<std::uint32_t, std::uint32_t>, TransitionEdge> edges_;
};

inline TransitionGraph build_transition_graph(const Corpus& corpus, GraphOptions options = {}) {
  return TransitionGraph::from_counts(count_transitions(corpus), options);
}

inline double transition_probability(const TransitionGraph& graph, CategoryId from, CategoryId to) {
  return graph.probability(from, to);
}

inline std::string format_fixed6(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", value);
  return buf;
}

inline const std::vector<std::string>& graph_header() {
  static const std::vector<std::string> header{"from_category", "to_category", "seen",
                                               "interacted", "probability"};
  return header;
}

// Rows sorted by (from, to).
inline void write_graph(std::ostream& out, const TransitionGraph& graph) {
  csv::write_row(out, graph_header());
  for (const auto& [key, e] : graph.edges()) {
    csv::write_row(out, {std::to_string(e.from.value), std::to_string(e.to.value),
                         std::to_string(e.seen_count), std::to_string(e.interaction_count),
                         format_fixed6(e.probability)});
  }
}

namespace detail {

inline std::uint64_t parse_u64(const std::string& s, const std::string& source, std::size_t line,
                               const char* what) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) {
    throw DataError(source, line, std::string("malformed ") + what + " '" + s + "'");
  }
  return v;
}

}  // namespace detail

// Counts are taken from the file and probabilities recomputed from them.
// Rows below `options.min_support` are dropped.
inline TransitionGraph read_graph(std::istream& in, const std::string& source,
                                  std::size_t num_categories, GraphOptions options = {}) {
  TransitionGraph graph(num_categories, options);
  std::map<std::pair<std::uint64_t, std::uint64_t>, std::size_t> rows;
  for (const auto& r : csv::read(in, source, graph_header())) {
    const auto from = detail::parse_u64(r.fields[0], source, r.line, "from_category");
    const auto to = detail::parse_u64(r.fields[1], source, r.line, "to_category");
    if (from >= num_categories || to >= num_categories) {
      throw DataError(source, r.line, "unknown category id");
    }
    if (!rows.emplace(std::pair{from, to}, r.line).second) {
      throw DataError(source, r.line, "duplicate edge " + r.fields[0] + " -> " + r.fields[1]);
    }
    PairCounts counts{detail::parse_u64(r.fields[2], source, r.line, "seen count"),
                      detail::parse_u64(r.fields[3], source, r.line, "interacted count")};
    if (counts.seen == 0) throw DataError(source, r.line, "edge with zero seen count");
    if (counts.interacted > counts.seen) {
      throw DataError(source, r.line, "interacted count exceeds seen count");
    }
    graph.insert(CategoryId{static_cast<std::uint32_t>(from)},
                 CategoryId{static_cast<std::uint32_t>(to)}, counts);
  }
  return graph;
}

}  // namespace mailtarget
