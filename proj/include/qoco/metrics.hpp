#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qoco/common.hpp"

namespace qoco {

/// Population standard deviation over mean.
inline double jitter(std::span<const double> series) {
  if (series.empty()) throw Error("jitter needs a non-empty series");
  double sum = 0.0;
  for (const double x : series) sum += x;
  const double n = static_cast<double>(series.size());
  const double mean = sum / n;
  if (!(mean > 0.0)) throw Error("jitter needs a positive mean");
  double ss = 0.0;
  for (const double x : series) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / n) / mean;
}

/// 1-based nearest rank for quantile q (percent) over n values.
inline std::size_t nearest_rank(double q, std::size_t n) {
  const double x = q / 100.0 * static_cast<double>(n);
  double r = std::ceil(x);
  // q*n/100 that should be an integer can land a hair above it.
  if (r - x > 1.0 - 1e-9 * std::max(1.0, x)) r -= 1.0;
  return std::clamp<std::size_t>(static_cast<std::size_t>(r), 1, n);
}

inline double percentile(std::vector<double> values, double q) {
  if (values.empty()) throw Error("percentile needs a non-empty list");
  if (!(q > 0.0 && q <= 100.0)) throw Error("percentile q must lie in (0,100]");
  const auto k = nearest_rank(q, values.size()) - 1;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k), values.end());
  return values[k];
}

/// Exact running nearest-rank quantile: the top tail lives in a min-heap, the
/// rest in a max-heap.
class RunningQuantile {
 public:
  explicit RunningQuantile(double q) : q_(q) {}

  void add(double x) {
    if (!high_.empty() && x > high_.top()) {
      high_.push(x);
    } else {
      low_.push(x);
    }
    ++n_;
    const std::size_t want_high = n_ - nearest_rank(q_, n_) + 1;
    while (high_.size() < want_high) {
      high_.push(low_.top());
      low_.pop();
    }
    while (high_.size() > want_high) {
      low_.push(high_.top());
      high_.pop();
    }
    // Keep the partition ordered.
    while (!low_.empty() && !high_.empty() && low_.top() > high_.top()) {
      const double a = low_.top();
      const double b = high_.top();
      low_.pop();
      high_.pop();
      low_.push(b);
      high_.push(a);
    }
  }

  std::size_t count() const { return n_; }
  double value() const { return high_.empty() ? 0.0 : high_.top(); }

 private:
  double q_;
  std::size_t n_ = 0;
  std::priority_queue<double> low_;
  std::priority_queue<double, std::vector<double>, std::greater<>> high_;
};

struct CacheFullWindow {
  std::size_t index = 0;
  double seconds = 0.0;

  friend bool operator==(const CacheFullWindow&, const CacheFullWindow&) = default;
};

/// Seconds with W >= Wbar in each non-overlapping window; a trailing partial
/// window is reported as well.
inline std::vector<CacheFullWindow> cache_full_windows(std::span<const double> W, double Wbar,
                                                       double window_seconds, double tick = 1.0) {
  if (!(window_seconds > 0.0)) throw Error("window must be > 0");
  const auto per = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(window_seconds / tick)));
  std::vector<CacheFullWindow> out;
  for (std::size_t start = 0; start < W.size(); start += per) {
    CacheFullWindow w;
    w.index = out.size();
    const auto end = std::min(W.size(), start + per);
    std::size_t full = 0;
    for (std::size_t i = start; i < end; ++i) full += W[i] >= Wbar ? 1 : 0;
    w.seconds = static_cast<double>(full) * tick;
    out.push_back(w);
  }
  return out;
}

struct MetricsReport {
  std::string method;
  std::string workload;
  std::uint64_t seed = 0;
  double duration = 0.0;
  double mean_throughput = 0.0;  // bytes/second
  double jitter = 0.0;
  double mean_latency = 0.0;  // seconds
  double p999_latency = 0.0;  // seconds
  double window = 150.0;
  std::vector<CacheFullWindow> cache_full;
  std::uint64_t requests = 0;

  double cache_full_total() const {
    double s = 0.0;
    for (const auto& w : cache_full) s += w.seconds;
    return s;
  }
};

// ---------------------------------------------------------------------------
// Sectioned key/value files: "[section]" headers and "key=value" lines;
// '#' or ';' start comments.

struct Section {
  std::string name;
  std::size_t line = 0;
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::size_t> entry_lines;

  const std::string* find(std::string_view key) const {
    for (const auto& [k, v] : entries)
      if (k == key) return &v;
    return nullptr;
  }
};

inline std::vector<Section> parse_sections(const std::vector<std::string>& lines,
                                           const std::string& source,
                                           std::string_view required_header = {}) {
  std::vector<Section> out;
  bool header_seen = required_header.empty();
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    const auto lineno = i + 1;
    if (!header_seen) {
      if (line.empty()) continue;
      if (line != required_header)
        throw ParseError(source, lineno, "expected header '" + std::string(required_header) + "'");
      header_seen = true;
      continue;
    }
    if (line.empty() || line.front() == '#' || line.front() == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError(source, lineno, "unterminated section header");
      Section s;
      s.name = std::string(trim(line.substr(1, line.size() - 2)));
      if (s.name.empty()) throw ParseError(source, lineno, "empty section name");
      s.line = lineno;
      out.push_back(std::move(s));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, lineno, "expected key=value");
    if (out.empty()) throw ParseError(source, lineno, "key outside of any section");
    auto key = std::string(trim(line.substr(0, eq)));
    auto value = trim(line.substr(eq + 1));
    // Trailing comments.
    for (const char c : {'#', ';'}) {
      const auto pos = value.find(std::string(" ") + c);
      if (pos != std::string_view::npos) value = trim(value.substr(0, pos));
    }
    if (key.empty()) throw ParseError(source, lineno, "empty key");
    out.back().entries.emplace_back(std::move(key), std::string(value));
    out.back().entry_lines.push_back(lineno);
  }
  if (!header_seen && !required_header.empty())
    throw ParseError(source, 1, "missing header '" + std::string(required_header) + "'");
  return out;
}

inline constexpr std::string_view kReportHeader = "#qoco-report v1";

inline std::string format_windows(const std::vector<CacheFullWindow>& ws) {
  std::string s;
  for (const auto& w : ws) {
    if (!s.empty()) s += ';';
    s += std::to_string(w.index) + ":" + format_double(w.seconds);
  }
  return s;
}

inline void write_report_section(std::ostream& out, const MetricsReport& r) {
  out << '[' << r.method << "]\n";
  out << "workload=" << r.workload << '\n';
  out << "seed=" << r.seed << '\n';
  out << "duration=" << format_double(r.duration) << '\n';
  out << "mean_throughput=" << format_double(r.mean_throughput) << '\n';
  out << "jitter=" << format_double(r.jitter) << '\n';
  out << "mean_latency=" << format_double(r.mean_latency) << '\n';
  out << "p999_latency=" << format_double(r.p999_latency) << '\n';
  out << "requests=" << r.requests << '\n';
  out << "window=" << format_double(r.window) << '\n';
  out << "cache_full_total=" << format_double(r.cache_full_total()) << '\n';
  out << "cache_full_windows=" << format_windows(r.cache_full) << '\n';
}

inline void emit_reports(const std::vector<MetricsReport>& reports, const std::string& path) {
  auto out = open_for_write(path);
  out << kReportHeader << '\n';
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i > 0) out << '\n';
    write_report_section(out, reports[i]);
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

inline void emit_report(const MetricsReport& report, const std::string& path) {
  emit_reports({report}, path);
}

inline std::vector<MetricsReport> load_reports(const std::string& path) {
  const auto sections = parse_sections(read_lines(path), path, kReportHeader);
  std::vector<MetricsReport> out;
  for (const auto& s : sections) {
    MetricsReport r;
    r.method = s.name;
    auto need = [&](std::string_view key) -> const std::string& {
      const auto* v = s.find(key);
      if (!v) throw ParseError(path, s.line, "section [" + s.name + "] lacks '" + std::string(key) + "'");
      return *v;
    };
    auto num = [&](std::string_view key) {
      double d = 0.0;
      if (!parse_number(need(key), d))
        throw ParseError(path, s.line, "bad number for '" + std::string(key) + "'");
      return d;
    };
    r.workload = need("workload");
    if (!parse_number(need("seed"), r.seed)) throw ParseError(path, s.line, "bad seed");
    r.duration = num("duration");
    r.mean_throughput = num("mean_throughput");
    r.jitter = num("jitter");
    r.mean_latency = num("mean_latency");
    r.p999_latency = num("p999_latency");
    if (!parse_number(need("requests"), r.requests)) throw ParseError(path, s.line, "bad requests");
    r.window = num("window");
    const auto& ws = need("cache_full_windows");
    if (!ws.empty()) {
      for (const auto item : split(ws, ';')) {
        const auto parts = split(item, ':');
        CacheFullWindow w;
        if (parts.size() != 2 || !parse_number(parts[0], w.index) ||
            !parse_number(parts[1], w.seconds))
          throw ParseError(path, s.line, "bad cache_full_windows entry");
        r.cache_full.push_back(w);
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace qoco
