#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "qoco/collector.hpp"
#include "qoco/common.hpp"
#include "qoco/rl_core.hpp"

namespace qoco {

// Layout:
//   #qoco-qtable v1
//   #bands w=10,30,80 p=-0.1,0.1 b=15,100 decay=0.999
//   ExtremelyLow,Low,Underuse,FastDecrease,INVALID
//   ...
// One row per (state, action); masked pairs carry INVALID.

inline constexpr std::string_view kQTableHeader = "#qoco-qtable v1";

inline std::string bands_line(const DiscretizationConfig& b) {
  return "#bands w=" + format_double(b.w_edges[0]) + "," + format_double(b.w_edges[1]) + "," +
         format_double(b.w_edges[2]) + " p=" + format_double(b.p_edges[0]) + "," +
         format_double(b.p_edges[1]) + " b=" + format_double(b.b_edges[0]) + "," +
         format_double(b.b_edges[1]) + " decay=" + format_double(b.bdp_max_decay);
}

inline void save_qtable(const QTable& q, const DiscretizationConfig& bands, const std::string& path) {
  if (q.states() != kNumStates || q.actions() != kNumActions)
    throw Error("only 36x5 control tables can be saved");
  auto out = open_for_write(path);
  out << kQTableHeader << '\n' << bands_line(bands) << '\n';
  for (std::size_t s = 0; s < kNumStates; ++s) {
    const auto d = DiscreteState::from_index(s);
    for (std::size_t a = 0; a < kNumActions; ++a) {
      out << to_string(d.w) << ',' << to_string(d.p) << ',' << to_string(d.b) << ','
          << kActionNames[a] << ',';
      if (q.masked(s, a)) {
        out << "INVALID";
      } else {
        out << format_double(q.value(s, a));
      }
      out << '\n';
    }
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

/// Loads a table saved by save_qtable. The file's band line must match `bands`
/// and its INVALID cells must match the structural mask.
inline QTable load_qtable(const std::string& path, const DiscretizationConfig& bands,
                          const ActionSet& actions = {}) {
  const auto lines = read_lines(path);
  if (lines.empty() || trim(lines[0]) != kQTableHeader)
    throw ParseError(path, 1, "expected header '" + std::string(kQTableHeader) + "'");
  QTable q = make_control_qtable(actions);
  std::vector<bool> seen(kNumStates * kNumActions, false);
  bool bands_seen = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto line = trim(lines[i]);
    const auto lineno = i + 1;
    if (line.empty()) continue;
    if (line.rfind("#bands", 0) == 0) {
      if (line != bands_line(bands))
        throw ParseError(path, lineno,
                         "discretization mismatch: file has '" + std::string(line) +
                             "', configuration expects '" + bands_line(bands) + "'");
      bands_seen = true;
      continue;
    }
    if (line.front() == '#') continue;
    const auto cols = split(line, ',');
    if (cols.size() != 5) throw ParseError(path, lineno, "expected 5 columns");
    const auto w = level_from_name<WLevel>(trim(cols[0]), kWNames);
    const auto p = level_from_name<PLevel>(trim(cols[1]), kPNames);
    const auto b = level_from_name<BLevel>(trim(cols[2]), kBNames);
    if (!w || !p || !b) throw ParseError(path, lineno, "unknown state label");
    std::optional<std::size_t> a;
    for (std::size_t k = 0; k < kNumActions; ++k)
      if (kActionNames[k] == trim(cols[3])) a = k;
    if (!a) throw ParseError(path, lineno, "unknown action label '" + std::string(cols[3]) + "'");
    const std::size_t s = DiscreteState{*w, *p, *b}.index();
    const auto cell = trim(cols[4]);
    if (cell == "INVALID") {
      if (!q.masked(s, *a)) throw ParseError(path, lineno, "INVALID on a selectable action");
    } else {
      if (q.masked(s, *a)) throw ParseError(path, lineno, "value on a masked action");
      double v = 0.0;
      if (!parse_number(cell, v)) throw ParseError(path, lineno, "bad value");
      q.set_value(s, *a, v);
    }
    if (seen[s * kNumActions + *a]) throw ParseError(path, lineno, "duplicate row");
    seen[s * kNumActions + *a] = true;
  }
  if (!bands_seen) throw ParseError(path, 2, "missing #bands line");
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (!seen[k]) throw ParseError(path, lines.size(), "table is missing rows");
  return q;
}

}  // namespace qoco
