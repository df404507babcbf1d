#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "qoco/common.hpp"

namespace qoco {

enum class IoKind : std::uint8_t { Read, Write };

enum class ArrivalProcess : std::uint8_t { Constant, Poisson };

struct IoRequest {
  std::uint64_t id = 0;
  double arrival_time = 0.0;  // simulated seconds
  std::uint64_t size = 0;     // bytes
  IoKind kind = IoKind::Write;

  friend bool operator==(const IoRequest&, const IoRequest&) = default;
};

struct WorkloadSpec {
  std::string id;
  std::uint64_t block_size = 0;
  std::uint64_t io_size = 0;
  double read_ratio = 0.0;    // percent of requests that are reads
  double duration = 0.0;      // seconds
  double offered_rate = 0.0;  // requests per second
  ArrivalProcess arrival = ArrivalProcess::Poisson;

  void validate() const {
    if (block_size == 0) throw Error("workload " + id + ": block_size must be > 0");
    if (io_size < block_size) throw Error("workload " + id + ": io_size must be >= block_size");
    if (io_size % block_size != 0)
      throw Error("workload " + id + ": io_size must be a multiple of block_size");
    if (!(read_ratio >= 0.0 && read_ratio <= 100.0))
      throw Error("workload " + id + ": read_ratio must lie in [0,100]");
    if (!(duration > 0.0)) throw Error("workload " + id + ": duration must be > 0");
    if (!(offered_rate > 0.0)) throw Error("workload " + id + ": offered_rate must be > 0");
  }

  double offered_bandwidth() const { return offered_rate * static_cast<double>(io_size); }
};

struct WorkloadSequence {
  std::vector<WorkloadSpec> phases;

  double total_duration() const {
    double d = 0.0;
    for (const auto& p : phases) d += p.duration;
    return d;
  }

  /// Start time of each phase, in seconds.
  std::vector<double> phase_starts() const {
    std::vector<double> starts;
    double t = 0.0;
    for (const auto& p : phases) {
      starts.push_back(t);
      t += p.duration;
    }
    return starts;
  }

  void validate() const {
    if (phases.empty()) throw Error("workload sequence needs at least one phase");
    for (std::size_t i = 0; i < phases.size(); ++i) {
      phases[i].validate();
      if (i == 0) continue;
      const auto& a = phases[i - 1];
      const auto& b = phases[i];
      if (a.block_size == b.block_size && a.io_size == b.io_size && a.read_ratio == b.read_ratio)
        throw Error("workload sequence: phases " + std::to_string(i - 1) + " and " +
                    std::to_string(i) + " do not differ in block size, io size or read ratio");
    }
  }
};

namespace detail {

struct StandardRow {
  int first, last;
  std::uint64_t block, io;
  std::array<double, 4> ratios;
};

inline constexpr std::uint64_t KiB = 1024;

// Benchmark classes S-1..S-19; R/W column taken as the read share.
inline constexpr std::array<StandardRow, 6> kStandardRows{{
    {1, 4, 512, 4 * KiB, {0, 30, 50, 70}},
    {5, 7, 8 * KiB, 32 * KiB, {0, 30, 70, 0}},
    {8, 10, 8 * KiB, 256 * KiB, {0, 30, 70, 0}},
    {11, 13, 32 * KiB, 32 * KiB, {0, 30, 70, 0}},
    {14, 16, 32 * KiB, 256 * KiB, {0, 30, 70, 0}},
    {17, 19, 8 * KiB, 8 * KiB, {0, 30, 70, 0}},
}};

}  // namespace detail

inline std::vector<std::string> standard_spec_ids() {
  std::vector<std::string> ids;
  for (int i = 1; i <= 19; ++i) ids.push_back("S-" + std::to_string(i));
  return ids;
}

inline WorkloadSpec build_standard_spec(const std::string& id, double duration,
                                        double offered_rate,
                                        ArrivalProcess arrival = ArrivalProcess::Poisson) {
  int n = 0;
  const bool ok = id.size() > 2 && id.rfind("S-", 0) == 0 &&
                  parse_number(std::string_view(id).substr(2), n) && n >= 1 && n <= 19;
  if (!ok) {
    std::string valid;
    for (const auto& v : standard_spec_ids()) valid += (valid.empty() ? "" : ", ") + v;
    throw Error("unknown workload id '" + id + "'; valid ids: " + valid);
  }
  for (const auto& row : detail::kStandardRows) {
    if (n < row.first || n > row.last) continue;
    WorkloadSpec spec;
    spec.id = id;
    spec.block_size = row.block;
    spec.io_size = row.io;
    spec.read_ratio = row.ratios[static_cast<std::size_t>(n - row.first)];
    spec.duration = duration;
    spec.offered_rate = offered_rate;
    spec.arrival = arrival;
    spec.validate();
    return spec;
  }
  throw Error("unreachable: no row for " + id);
}

inline const std::vector<std::string>& changing_sequence_ids() {
  static const std::vector<std::string> ids{"S-17", "S-6", "S-18", "S-9", "S-18",
                                            "S-7",  "S-18", "S-8", "S-19"};
  return ids;
}

/// The nine-phase changing workload. When `offered_bandwidth` is positive each
/// phase's request rate is chosen so that it offers that many bytes per second.
inline WorkloadSequence build_changing_sequence(double phase_duration, double offered_rate = 1000.0,
                                                double offered_bandwidth = 0.0,
                                                ArrivalProcess arrival = ArrivalProcess::Poisson) {
  if (!(phase_duration > 0.0)) throw Error("phase_duration must be > 0");
  WorkloadSequence seq;
  for (const auto& id : changing_sequence_ids()) {
    auto spec = build_standard_spec(id, phase_duration, offered_rate, arrival);
    if (offered_bandwidth > 0.0)
      spec.offered_rate = offered_bandwidth / static_cast<double>(spec.io_size);
    seq.phases.push_back(std::move(spec));
  }
  seq.validate();
  return seq;
}

/// Pull-based request stream over a sequence of phases; deterministic in (sequence, seed).
class TraceGenerator {
 public:
  TraceGenerator(WorkloadSequence seq, std::uint64_t seed) : seq_(std::move(seq)), seed_(seed) {
    seq_.validate();
    start_phase(0, 0.0);
  }

  TraceGenerator(const WorkloadSpec& spec, std::uint64_t seed)
      : TraceGenerator(WorkloadSequence{{spec}}, seed) {}

  std::optional<IoRequest> next() {
    while (phase_ < seq_.phases.size()) {
      const auto& spec = seq_.phases[phase_];
      double local = 0.0;
      bool have = false;
      if (spec.arrival == ArrivalProcess::Constant) {
        const auto count =
            static_cast<std::uint64_t>(std::llround(spec.offered_rate * spec.duration));
        if (index_in_phase_ < count) {
          local = static_cast<double>(index_in_phase_) / spec.offered_rate;
          have = true;
        }
      } else {
        std::exponential_distribution<double> gap(spec.offered_rate);
        poisson_clock_ += gap(rng_);
        if (poisson_clock_ < spec.duration) {
          local = poisson_clock_;
          have = true;
        }
      }
      if (have) {
        ++index_in_phase_;
        IoRequest r;
        r.id = next_id_++;
        r.arrival_time = phase_offset_ + local;
        r.size = spec.io_size;
        r.kind = read_draw_(rng_) * 100.0 < spec.read_ratio ? IoKind::Read : IoKind::Write;
        return r;
      }
      start_phase(phase_ + 1, phase_offset_ + spec.duration);
    }
    return std::nullopt;
  }

  const WorkloadSequence& sequence() const { return seq_; }

 private:
  void start_phase(std::size_t phase, double offset) {
    phase_ = phase;
    phase_offset_ = offset;
    index_in_phase_ = 0;
    poisson_clock_ = 0.0;
    rng_.seed(mix_seed(seed_, phase));
  }

  WorkloadSequence seq_;
  std::uint64_t seed_;
  std::size_t phase_ = 0;
  double phase_offset_ = 0.0;
  std::uint64_t index_in_phase_ = 0;
  double poisson_clock_ = 0.0;
  std::uint64_t next_id_ = 0;
  std::mt19937_64 rng_;
  std::uniform_real_distribution<double> read_draw_{0.0, 1.0};
};

inline std::vector<IoRequest> generate_trace(const WorkloadSequence& seq, std::uint64_t seed) {
  TraceGenerator gen(seq, seed);
  std::vector<IoRequest> out;
  while (auto r = gen.next()) out.push_back(*r);
  return out;
}

inline std::vector<IoRequest> generate_trace(const WorkloadSpec& spec, std::uint64_t seed) {
  return generate_trace(WorkloadSequence{{spec}}, seed);
}

// ---------------------------------------------------------------------------
// Trace files: header "#qoco-trace v1", then "id,arrival_time_s,size_bytes,kind".

inline constexpr std::string_view kTraceHeader = "#qoco-trace v1";

inline void save_trace(const std::vector<IoRequest>& trace, const std::string& path) {
  auto out = open_for_write(path);
  out << kTraceHeader << '\n';
  for (const auto& r : trace) {
    out << r.id << ',' << format_double(r.arrival_time) << ',' << r.size << ','
        << (r.kind == IoKind::Read ? 'R' : 'W') << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

inline std::vector<IoRequest> load_trace(const std::string& path) {
  const auto lines = read_lines(path);
  std::vector<IoRequest> trace;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::string_view line = trim(lines[i]);
    const auto lineno = i + 1;
    if (line.empty()) continue;
    if (line.front() == '#') {
      if (i == 0 && line != kTraceHeader)
        throw ParseError(path, lineno, "unsupported trace header '" + std::string(line) + "'");
      continue;
    }
    const auto cols = split(line, ',');
    if (cols.size() != 4) throw ParseError(path, lineno, "expected 4 columns");
    IoRequest r;
    std::int64_t size = 0;
    if (!parse_number(cols[0], r.id)) throw ParseError(path, lineno, "bad id");
    if (!parse_number(cols[1], r.arrival_time) || !(r.arrival_time >= 0.0))
      throw ParseError(path, lineno, "bad arrival time");
    if (!parse_number(cols[2], size)) throw ParseError(path, lineno, "bad size");
    if (size < 0) throw ParseError(path, lineno, "negative size");
    r.size = static_cast<std::uint64_t>(size);
    const auto kind = trim(cols[3]);
    if (kind == "R") {
      r.kind = IoKind::Read;
    } else if (kind == "W") {
      r.kind = IoKind::Write;
    } else {
      throw ParseError(path, lineno, "kind must be R or W");
    }
    if (!trace.empty() && r.arrival_time < trace.back().arrival_time)
      throw ParseError(path, lineno, "arrival times must be nondecreasing");
    trace.push_back(r);
  }
  return trace;
}

}  // namespace qoco
