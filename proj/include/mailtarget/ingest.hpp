#pragma once

#include <algorithm>
#include <cctype>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "mailtarget/csv.hpp"
#include "mailtarget/date.hpp"
#include "mailtarget/errors.hpp"

namespace mailtarget {

struct CategoryId {
  std::uint32_t value = 0;
  friend auto operator<=>(const CategoryId&, const CategoryId&) = default;
};

enum class ActivityKind { Search, Apply, ResumeUpdate };
enum class ExposureKind { Seen, Interacted };

inline std::optional<ActivityKind> parse_activity_kind(std::string_view s) {
  if (s == "search") return ActivityKind::Search;
  if (s == "apply") return ActivityKind::Apply;
  if (s == "resume_update") return ActivityKind::ResumeUpdate;
  return std::nullopt;
}

inline const char* to_string(ActivityKind kind) {
  switch (kind) {
    case ActivityKind::Search: return "search";
    case ActivityKind::Apply: return "apply";
    case ActivityKind::ResumeUpdate: return "resume_update";
  }
  return "?";
}

inline std::optional<ExposureKind> parse_exposure_kind(std::string_view s) {
  if (s == "seen") return ExposureKind::Seen;
  if (s == "interacted") return ExposureKind::Interacted;
  return std::nullopt;
}

inline const char* to_string(ExposureKind kind) {
  return kind == ExposureKind::Seen ? "seen" : "interacted";
}

struct Category {
  CategoryId id;
  std::string label;
};

struct UserRecord {
  std::string user_id;
  CategoryId category;
};

struct ItemRecord {
  std::string item_id;
  CategoryId category;
  std::string title;
};

struct ActivityEvent {
  std::string user_id;
  ActivityKind kind = ActivityKind::Search;
  Date date;
};

struct ExposureEvent {
  std::string user_id;
  std::string item_id;
  ExposureKind kind = ExposureKind::Seen;
  Date date;
};

inline constexpr const char* kCategoriesFile = "categories.csv";
inline constexpr const char* kUsersFile = "users.csv";
inline constexpr const char* kItemsFile = "items.csv";
inline constexpr const char* kActivityFile = "activity.csv";
inline constexpr const char* kExposureFile = "exposure.csv";

class CorpusBuilder;

// Validated, cross-referenced and normalized input data. Immutable once built.
class Corpus {
 public:
  const std::vector<Category>& categories() const noexcept { return categories_; }
  const std::vector<UserRecord>& users() const noexcept { return users_; }
  const std::vector<ItemRecord>& items() const noexcept { return items_; }
  const std::vector<ActivityEvent>& activity() const noexcept { return activity_; }
  // Includes Seen events synthesized for Interacted events lacking one.
  const std::vector<ExposureEvent>& exposures() const noexcept { return exposures_; }

  std::size_t num_categories() const noexcept { return categories_.size(); }
  std::size_t synthesized_seen() const noexcept { return synthesized_seen_; }
  Date reference_date() const noexcept { return reference_date_; }

  std::optional<std::size_t> find_user(std::string_view id) const {
    auto it = user_index_.find(id);
    if (it == user_index_.end()) return std::nullopt;
    return it->second;
  }
  std::optional<std::size_t> find_item(std::string_view id) const {
    auto it = item_index_.find(id);
    if (it == item_index_.end()) return std::nullopt;
    return it->second;
  }
  bool has_category(CategoryId id) const noexcept { return id.value < categories_.size(); }

  const UserRecord& user(std::string_view id) const {
    auto idx = find_user(id);
    if (!idx) throw DataError("unknown user id '" + std::string(id) + "'");
    return users_[*idx];
  }
  const ItemRecord& item(std::string_view id) const {
    auto idx = find_item(id);
    if (!idx) throw DataError("unknown item id '" + std::string(id) + "'");
    return items_[*idx];
  }

 private:
  friend class CorpusBuilder;

  std::vector<Category> categories_;
  std::vector<UserRecord> users_;
  std::vector<ItemRecord> items_;
  std::vector<ActivityEvent> activity_;
  std::vector<ExposureEvent> exposures_;
  std::map<std::string, std::size_t, std::less<>> user_index_;
  std::map<std::string, std::size_t, std::less<>> item_index_;
  std::size_t synthesized_seen_ = 0;
  Date reference_date_;
};

// Accumulates records in dependency order (categories, users, items, then
// events) and validates each one as it arrives. `line` is the 1-based line
// number used in diagnostics.
class CorpusBuilder {
 public:
  explicit CorpusBuilder(Date reference_date) { corpus_.reference_date_ = reference_date; }

  void add_category(Category category, std::size_t line = 0, std::string_view source = {}) {
    const std::string where = source.empty() ? kCategoriesFile : std::string(source);
    category_source_ = where;
    if (sealed_) throw DataError("categories must be added before other records");
    const std::string folded = fold(category.label);
    if (category.label.empty()) throw DataError(where, line, "empty category label");
    if (!category_ids_.insert(category.id.value).second) {
      throw DataError(where, line,
                      "duplicate category id " + std::to_string(category.id.value));
    }
    if (!labels_.insert(folded).second) {
      throw DataError(where, line, "duplicate category label '" + category.label + "'");
    }
    category_lines_.push_back(line);
    corpus_.categories_.push_back(std::move(category));
  }

  void add_user(UserRecord user, std::size_t line = 0, std::string_view source = {}) {
    const std::string where = source.empty() ? kUsersFile : std::string(source);
    seal();
    if (user.user_id.empty()) throw DataError(where, line, "empty user id");
    if (!corpus_.has_category(user.category)) {
      throw DataError(where, line,
                      "unknown category id " + std::to_string(user.category.value));
    }
    if (!corpus_.user_index_.emplace(user.user_id, corpus_.users_.size()).second) {
      throw DataError(where, line, "duplicate user id '" + user.user_id + "'");
    }
    corpus_.users_.push_back(std::move(user));
  }

  void add_item(ItemRecord item, std::size_t line = 0, std::string_view source = {}) {
    const std::string where = source.empty() ? kItemsFile : std::string(source);
    seal();
    if (item.item_id.empty()) throw DataError(where, line, "empty item id");
    if (!corpus_.has_category(item.category)) {
      throw DataError(where, line,
                      "unknown category id " + std::to_string(item.category.value));
    }
    if (!corpus_.item_index_.emplace(item.item_id, corpus_.items_.size()).second) {
      throw DataError(where, line, "duplicate item id '" + item.item_id + "'");
    }
    corpus_.items_.push_back(std::move(item));
  }

  void add_activity(ActivityEvent event, std::size_t line = 0, std::string_view source = {}) {
    const std::string where = source.empty() ? kActivityFile : std::string(source);
    seal();
    if (!corpus_.find_user(event.user_id)) {
      throw DataError(where, line, "unknown user id '" + event.user_id + "'");
    }
    check_not_future(where, line, event.date);
    corpus_.activity_.push_back(std::move(event));
  }

  void add_exposure(ExposureEvent event, std::size_t line = 0, std::string_view source = {}) {
    const std::string where = source.empty() ? kExposureFile : std::string(source);
    seal();
    if (!corpus_.find_user(event.user_id)) {
      throw DataError(where, line, "unknown user id '" + event.user_id + "'");
    }
    if (!corpus_.find_item(event.item_id)) {
      throw DataError(where, line, "unknown item id '" + event.item_id + "'");
    }
    check_not_future(where, line, event.date);
    corpus_.exposures_.push_back(std::move(event));
  }

  // Applies Interacted-implies-Seen normalization: for every (user, item)
  // pair with an Interacted event but no Seen event, a Seen event dated at
  // the earliest interaction is appended, ordered by (user_id, item_id).
  Corpus finish() && {
    seal();
    std::set<std::pair<std::string_view, std::string_view>> seen;
    std::map<std::pair<std::string_view, std::string_view>, Date> first_interaction;
    for (const auto& e : corpus_.exposures_) {
      const auto key = std::pair<std::string_view, std::string_view>{e.user_id, e.item_id};
      if (e.kind == ExposureKind::Seen) {
        seen.insert(key);
      } else {
        auto [it, inserted] = first_interaction.emplace(key, e.date);
        if (!inserted && e.date < it->second) it->second = e.date;
      }
    }
    std::vector<ExposureEvent> synthesized;
    for (const auto& [key, date] : first_interaction) {
      if (seen.count(key)) continue;
      synthesized.push_back(
          {std::string(key.first), std::string(key.second), ExposureKind::Seen, date});
    }
    corpus_.synthesized_seen_ = synthesized.size();
    for (auto& e : synthesized) corpus_.exposures_.push_back(std::move(e));
    return std::move(corpus_);
  }

 private:
  static std::string fold(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
  }

  void seal() {
    if (sealed_) return;
    sealed_ = true;
    const auto n = corpus_.categories_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (corpus_.categories_[i].id.value >= n) {
        throw DataError(category_source_, category_lines_[i],
                        "category ids must be dense 0.." + std::to_string(n ? n - 1 : 0));
      }
    }
    std::sort(corpus_.categories_.begin(), corpus_.categories_.end(),
              [](const Category& a, const Category& b) { return a.id < b.id; });
  }

  void check_not_future(const std::string& source, std::size_t line, Date date) const {
    if (date > corpus_.reference_date_) {
      throw DataError(source, line,
                      "event dated " + format_date(date) + " is after reference date " +
                          format_date(corpus_.reference_date_));
    }
  }

  Corpus corpus_;
  bool sealed_ = false;
  std::set<std::uint32_t> category_ids_;
  std::set<std::string> labels_;
  std::vector<std::size_t> category_lines_;
  std::string category_source_ = kCategoriesFile;
};

namespace detail {

inline CategoryId parse_category_field(const std::string& field, const std::string& source,
                                       std::size_t line) {
  if (field.empty() || field.size() > 9 ||
      !std::all_of(field.begin(), field.end(), [](unsigned char c) { return std::isdigit(c); })) {
    throw DataError(source, line, "malformed category id '" + field + "'");
  }
  return CategoryId{static_cast<std::uint32_t>(std::stoul(field))};
}

inline Date parse_date_field(const std::string& field, const std::string& source,
                             std::size_t line) {
  auto date = parse_date(field);
  if (!date) throw DataError(source, line, "malformed date '" + field + "'");
  return *date;
}

}  // namespace detail

struct DatasetPaths {
  std::filesystem::path categories;
  std::filesystem::path users;
  std::filesystem::path items;
  std::filesystem::path activity;
  std::filesystem::path exposure;

  static DatasetPaths in_directory(const std::filesystem::path& dir) {
    return {dir / kCategoriesFile, dir / kUsersFile, dir / kItemsFile, dir / kActivityFile,
            dir / kExposureFile};
  }
};

inline Corpus load_dataset(const DatasetPaths& paths, Date reference_date) {
  CorpusBuilder builder(reference_date);
  {
    const std::string src = paths.categories.string();
    for (auto& r : csv::read_file(src, {"id", "label"})) {
      builder.add_category(
          {detail::parse_category_field(r.fields[0], src, r.line), r.fields[1]},
          r.line, src);
    }
  }
  {
    const std::string src = paths.users.string();
    for (auto& r : csv::read_file(src, {"user_id", "category_id"})) {
      builder.add_user(
          {r.fields[0], detail::parse_category_field(r.fields[1], src, r.line)}, r.line, src);
    }
  }
  {
    const std::string src = paths.items.string();
    for (auto& r : csv::read_file(src, {"item_id", "category_id", "title"})) {
      builder.add_item({r.fields[0], detail::parse_category_field(r.fields[1], src, r.line),
                        r.fields[2]},
                       r.line, src);
    }
  }
  {
    const std::string src = paths.activity.string();
    for (auto& r : csv::read_file(src, {"user_id", "kind", "date"})) {
      auto kind = parse_activity_kind(r.fields[1]);
      if (!kind) throw DataError(src, r.line, "unknown activity kind '" + r.fields[1] + "'");
      builder.add_activity(
          {r.fields[0], *kind, detail::parse_date_field(r.fields[2], src, r.line)},
          r.line, src);
    }
  }
  {
    const std::string src = paths.exposure.string();
    for (auto& r :
         csv::read_file(src, {"user_id", "item_id", "kind", "date"})) {
      auto kind = parse_exposure_kind(r.fields[2]);
      if (!kind) throw DataError(src, r.line, "unknown exposure kind '" + r.fields[2] + "'");
      builder.add_exposure({r.fields[0], r.fields[1], *kind,
                            detail::parse_date_field(r.fields[3], src, r.line)},
                           r.line, src);
    }
  }
  return std::move(builder).finish();
}

inline void write_categories(std::ostream& out, const Corpus& corpus) {
  csv::write_row(out, {"id", "label"});
  for (const auto& c : corpus.categories()) csv::write_row(out, {std::to_string(c.id.value), c.label});
}

inline void write_users(std::ostream& out, const Corpus& corpus) {
  csv::write_row(out, {"user_id", "category_id"});
  for (const auto& u : corpus.users()) csv::write_row(out, {u.user_id, std::to_string(u.category.value)});
}

inline void write_items(std::ostream& out, const Corpus& corpus) {
  csv::write_row(out, {"item_id", "category_id", "title"});
  for (const auto& i : corpus.items()) {
    csv::write_row(out, {i.item_id, std::to_string(i.category.value), i.title});
  }
}

inline void write_activity(std::ostream& out, const Corpus& corpus) {
  csv::write_row(out, {"user_id", "kind", "date"});
  for (const auto& e : corpus.activity()) {
    csv::write_row(out, {e.user_id, to_string(e.kind), format_date(e.date)});
  }
}

inline void write_exposures(std::ostream& out, const Corpus& corpus) {
  csv::write_row(out, {"user_id", "item_id", "kind", "date"});
  for (const auto& e : corpus.exposures()) {
    csv::write_row(out, {e.user_id, e.item_id, to_string(e.kind), format_date(e.date)});
  }
}

// Writes the corpus in the ingest file formats. The output re-loads to an
// identical corpus; synthesized Seen rows are written explicitly.
inline void write_dataset(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto emit = [&](const char* name, void (*writer)(std::ostream&, const Corpus&)) {
    std::ofstream out(dir / name, std::ios::binary);
    if (!out) throw DataError("cannot write " + (dir / name).string());
    writer(out, corpus);
  };
  emit(kCategoriesFile, write_categories);
  emit(kUsersFile, write_users);
  emit(kItemsFile, write_items);
  emit(kActivityFile, write_activity);
  emit(kExposureFile, write_exposures);
}

}  // namespace mailtarget
