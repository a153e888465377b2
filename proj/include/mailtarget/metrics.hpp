#pragma once

#include <cstdint>
#include <cstdio>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "mailtarget/csv.hpp"
#include "mailtarget/errors.hpp"
#include "mailtarget/trends.hpp"

namespace mailtarget {

// Per-email response flags. Must satisfy applied => clicked => opened.
struct FunnelOutcome {
  std::string email_id;
  std::string user_id;
  bool opened = false;
  bool clicked = false;
  bool applied = false;
};

struct FunnelCounts {
  std::uint64_t sent = 0;
  std::uint64_t opens = 0;
  std::uint64_t clicks = 0;
  std::uint64_t apps = 0;

  FunnelCounts& operator+=(const FunnelCounts& o) {
    sent += o.sent;
    opens += o.opens;
    clicks += o.clicks;
    apps += o.apps;
    return *this;
  }
  friend bool operator==(const FunnelCounts&, const FunnelCounts&) = default;
};

struct FunnelMetrics {
  FunnelCounts counts;
  double osr = 0.0;  // opens / sent
  double ctr = 0.0;  // clicks / sent
  double aor = 0.0;  // apps / opens

  static FunnelMetrics from_counts(const FunnelCounts& c) {
    auto ratio = [](std::uint64_t num, std::uint64_t den) {
      return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    return {c, ratio(c.opens, c.sent), ratio(c.clicks, c.sent), ratio(c.apps, c.opens)};
  }
};

inline bool satisfies_hierarchy(const FunnelOutcome& o) {
  return (!o.clicked || o.opened) && (!o.applied || o.clicked);
}

inline FunnelCounts count_funnel(std::span<const FunnelOutcome> outcomes) {
  FunnelCounts c;
  for (const auto& o : outcomes) {
    if (!satisfies_hierarchy(o)) {
      throw DataError("outcome '" + o.email_id + "' violates applied => clicked => opened");
    }
    ++c.sent;
    c.opens += o.opened;
    c.clicks += o.clicked;
    c.apps += o.applied;
  }
  return c;
}

inline FunnelMetrics compute_funnel(std::span<const FunnelOutcome> outcomes) {
  return FunnelMetrics::from_counts(count_funnel(outcomes));
}

struct ComparisonRow {
  std::string metric;
  double control = 0.0;
  double proposed = 0.0;
  std::optional<double> change;  // (proposed - control) / control; empty when control is 0
  bool is_ratio = false;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
};

inline ComparisonReport compare_report(const FunnelMetrics& control, const FunnelMetrics& proposed) {
  auto row = [](std::string name, double c, double p, bool is_ratio) {
    std::optional<double> change;
    if (c != 0.0) change = (p - c) / c;
    return ComparisonRow{std::move(name), c, p, change, is_ratio};
  };
  return {{
      row("Total Apps", static_cast<double>(control.counts.apps),
          static_cast<double>(proposed.counts.apps), false),
      row("Total Sent", static_cast<double>(control.counts.sent),
          static_cast<double>(proposed.counts.sent), false),
      row("OSR", control.osr, proposed.osr, true),
      row("CTR", control.ctr, proposed.ctr, true),
      row("AOR", control.aor, proposed.aor, true),
  }};
}

namespace detail {

inline std::string percent(double fraction, bool sign) {
  char buf[64];
  std::snprintf(buf, sizeof buf, sign ? "%+.2f%%" : "%.2f%%", fraction * 100.0);
  return buf;
}

inline std::string report_value(const ComparisonRow& row, double v) {
  if (row.is_ratio) return percent(v, false);
  return std::to_string(static_cast<std::uint64_t>(v));
}

inline const char* metric_description(const std::string& metric) {
  if (metric == "OSR") return "Open to Send Ratio. Opens / Emails Sent";
  if (metric == "CTR") return "Click Through Rate. Clicks / Emails Sent";
  if (metric == "AOR") return "Apps to Open Ratio. Applications / Emails Opened";
  return "";
}

}  // namespace detail

inline void write_report_text(std::ostream& out, const ComparisonReport& report) {
  out << std::left << std::setw(58) << "Metric" << std::right << std::setw(12) << "Baseline"
      << std::setw(12) << "Proposed" << std::setw(12) << "Change" << '\n';
  for (const auto& row : report.rows) {
    std::string label = row.metric;
    if (row.is_ratio) label += std::string(": ") + detail::metric_description(row.metric);
    out << std::left << std::setw(58) << label << std::right << std::setw(12)
        << detail::report_value(row, row.control) << std::setw(12)
        << detail::report_value(row, row.proposed) << std::setw(12)
        << (row.change ? detail::percent(*row.change, true) : std::string("n/a")) << '\n';
  }
}

// metric,control,proposed,change with change as a fraction or "n/a".
inline void write_report_csv(std::ostream& out, const ComparisonReport& report) {
  csv::write_row(out, {"metric", "control", "proposed", "change"});
  for (const auto& row : report.rows) {
    auto value = [&](double v) {
      return row.is_ratio ? format_fixed6(v) : std::to_string(static_cast<std::uint64_t>(v));
    };
    csv::write_row(out, {row.metric, value(row.control), value(row.proposed),
                         row.change ? format_fixed6(*row.change) : std::string("n/a")});
  }
}

inline const std::vector<std::string>& outcome_header() {
  static const std::vector<std::string> header{"email_id", "user_id", "opened", "clicked",
                                               "applied"};
  return header;
}

inline void write_outcomes(std::ostream& out, std::span<const FunnelOutcome> outcomes) {
  csv::write_row(out, outcome_header());
  for (const auto& o : outcomes) {
    csv::write_row(out, {o.email_id, o.user_id, o.opened ? "1" : "0", o.clicked ? "1" : "0",
                         o.applied ? "1" : "0"});
  }
}

inline std::vector<FunnelOutcome> read_outcomes(std::istream& in, const std::string& source) {
  std::vector<FunnelOutcome> outcomes;
  for (const auto& r : csv::read(in, source, outcome_header())) {
    auto flag = [&](const std::string& f) {
      if (f == "1") return true;
      if (f == "0") return false;
      throw DataError(source, r.line, "flag must be 0 or 1, got '" + f + "'");
    };
    FunnelOutcome o{r.fields[0], r.fields[1], flag(r.fields[2]), flag(r.fields[3]),
                    flag(r.fields[4])};
    if (!satisfies_hierarchy(o)) {
      throw DataError(source, r.line,
                      "outcome '" + o.email_id + "' violates applied => clicked => opened");
    }
    outcomes.push_back(std::move(o));
  }
  return outcomes;
}

}  // namespace mailtarget
