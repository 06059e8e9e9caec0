#include "aha/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "aha/errors.hpp"
#include "aha/tasks.hpp"

namespace aha {

namespace {

void require_uniform(const std::vector<GateTrace>& traces, const char* who) {
  if (traces.empty()) throw shape_error(std::string(who) + ": no traces");
  for (const auto& t : traces) {
    t.validate();
    if (t.layers != traces[0].layers || t.heads != traces[0].heads)
      throw shape_error(std::string(who) + ": traces disagree on layers/heads");
  }
}

char* fmt(char* buf, std::size_t cap, double v) {
  std::snprintf(buf, cap, "%.10g", v);
  return buf;
}

}  // namespace

void GateTrace::validate() const {
  if (layers < 1 || rows < 1 || heads < 1)
    throw shape_error("gate trace: layers, rows and heads must be positive");
  const auto expect = static_cast<std::size_t>(layers) * rows * heads;
  if (gates.size() != expect) throw shape_error("gate trace: payload size mismatch");
  for (auto g : gates)
    if (g > 1) throw shape_error("gate trace: entries must be 0 or 1");
  if (!tokens.empty() && tokens.size() != static_cast<std::size_t>(rows))
    throw shape_error("gate trace: token metadata length mismatch");
  if (!scored.empty() && scored.size() != static_cast<std::size_t>(rows))
    throw shape_error("gate trace: scored metadata length mismatch");
}

GateTrace make_trace(const std::vector<GateMatrix>& layer_gates, std::string task,
                     std::int64_t sample_id) {
  if (layer_gates.empty()) throw shape_error("make_trace: no layers");
  GateTrace t;
  t.layers = static_cast<int>(layer_gates.size());
  t.rows = layer_gates[0].n;
  t.heads = layer_gates[0].m;
  t.task = std::move(task);
  t.sample_id = sample_id;
  t.gates.reserve(static_cast<std::size_t>(t.layers) * t.rows * t.heads);
  for (const auto& g : layer_gates) {
    if (g.n != t.rows || g.m != t.heads)
      throw shape_error("make_trace: layers disagree on shape");
    t.gates.insert(t.gates.end(), g.values.begin(), g.values.end());
  }
  t.validate();
  return t;
}

double mu_f(const std::vector<GateTrace>& traces) {
  require_uniform(traces, "mu_f");
  std::int64_t on = 0, total = 0;
  for (const auto& t : traces) {
    for (auto g : t.gates) on += g;
    total += static_cast<std::int64_t>(t.gates.size());
  }
  return static_cast<double>(on) / static_cast<double>(total);
}

double mu_f_scored(const std::vector<GateTrace>& traces) {
  require_uniform(traces, "mu_f_scored");
  std::int64_t on = 0, total = 0;
  for (const auto& t : traces) {
    for (int l = 0; l < t.layers; ++l)
      for (int i = 0; i < t.rows; ++i) {
        if (!t.scored.empty() && !t.scored[static_cast<std::size_t>(i)]) continue;
        for (int h = 0; h < t.heads; ++h) on += t.at(l, i, h);
        total += t.heads;
      }
  }
  if (total == 0) throw shape_error("mu_f_scored: no scored rows");
  return static_cast<double>(on) / static_cast<double>(total);
}

std::vector<std::vector<double>> per_head_usage(const std::vector<GateTrace>& traces) {
  require_uniform(traces, "per_head_usage");
  const int L = traces[0].layers, m = traces[0].heads;
  std::vector<std::vector<std::int64_t>> on(L, std::vector<std::int64_t>(m, 0));
  std::int64_t rows = 0;
  for (const auto& t : traces) {
    rows += t.rows;
    for (int l = 0; l < L; ++l)
      for (int i = 0; i < t.rows; ++i)
        for (int h = 0; h < m; ++h) on[l][h] += t.at(l, i, h);
  }
  std::vector<std::vector<double>> grid(L, std::vector<double>(m, 0.0));
  for (int l = 0; l < L; ++l)
    for (int h = 0; h < m; ++h)
      grid[l][h] = static_cast<double>(on[l][h]) / static_cast<double>(rows);
  return grid;
}

std::vector<HeadUsage> sorted_usage_curve(const std::vector<std::vector<double>>& grid) {
  std::vector<HeadUsage> curve;
  for (int l = 0; l < static_cast<int>(grid.size()); ++l)
    for (int h = 0; h < static_cast<int>(grid[l].size()); ++h)
      curve.push_back({l, h, grid[l][h]});
  std::sort(curve.begin(), curve.end(), [](const HeadUsage& a, const HeadUsage& b) {
    if (a.usage != b.usage) return a.usage > b.usage;
    if (a.layer != b.layer) return a.layer < b.layer;
    return a.head < b.head;
  });
  return curve;
}

GapStat attention_gap(const std::vector<std::uint8_t>& gates) {
  if (gates.empty()) throw shape_error("attention_gap: empty gate stream");
  GapStat s;
  s.tokens = static_cast<std::int64_t>(gates.size());
  for (auto g : gates) s.triggers += (g != 0);
  s.mean_gap = s.triggers > 0
                   ? static_cast<double>(s.tokens) / static_cast<double>(s.triggers)
                   : std::numeric_limits<double>::infinity();
  return s;
}

UsageReport usage_report(const std::vector<GateTrace>& traces) {
  require_uniform(traces, "usage_report");
  const int L = traces[0].layers, m = traces[0].heads;
  UsageReport rep;
  rep.per_head_on.assign(L, std::vector<std::int64_t>(m, 0));
  rep.per_head_rows.assign(L, std::vector<std::int64_t>(m, 0));

  int max_rows = 0;
  for (const auto& t : traces) max_rows = std::max(max_rows, t.rows);
  std::vector<std::int64_t> tok_on(static_cast<std::size_t>(max_rows), 0);
  std::vector<std::int64_t> tok_total(static_cast<std::size_t>(max_rows), 0);
  std::vector<std::vector<std::vector<std::uint8_t>>> streams(
      L, std::vector<std::vector<std::uint8_t>>(m));

  for (const auto& t : traces) {
    for (int l = 0; l < L; ++l)
      for (int h = 0; h < m; ++h) {
        auto& stream = streams[l][h];
        for (int i = 0; i < t.rows; ++i) {
          const auto g = t.at(l, i, h);
          stream.push_back(g);
          rep.per_head_on[l][h] += g;
          tok_on[static_cast<std::size_t>(i)] += g;
        }
        rep.per_head_rows[l][h] += t.rows;
        for (int i = 0; i < t.rows; ++i) tok_total[static_cast<std::size_t>(i)] += 1;
      }
  }

  rep.per_head.assign(L, std::vector<double>(m, 0.0));
  std::int64_t on = 0;
  for (int l = 0; l < L; ++l)
    for (int h = 0; h < m; ++h) {
      rep.per_head[l][h] = static_cast<double>(rep.per_head_on[l][h]) /
                           static_cast<double>(rep.per_head_rows[l][h]);
      on += rep.per_head_on[l][h];
      rep.gate_count += rep.per_head_rows[l][h];
    }
  rep.mu_f_overall = static_cast<double>(on) / static_cast<double>(rep.gate_count);
  rep.mu_f_scored = mu_f_scored(traces);

  rep.per_token.resize(static_cast<std::size_t>(max_rows));
  for (int i = 0; i < max_rows; ++i)
    rep.per_token[static_cast<std::size_t>(i)] =
        static_cast<double>(tok_on[static_cast<std::size_t>(i)]) /
        static_cast<double>(tok_total[static_cast<std::size_t>(i)]);

  rep.gaps.assign(L, std::vector<GapStat>(m));
  for (int l = 0; l < L; ++l)
    for (int h = 0; h < m; ++h) rep.gaps[l][h] = attention_gap(streams[l][h]);
  return rep;
}

nlohmann::json usage_report_to_json(const UsageReport& rep) {
  nlohmann::json j;
  j["mu_f_overall"] = rep.mu_f_overall;
  j["mu_f_scored"] = rep.mu_f_scored;
  j["gate_count"] = rep.gate_count;
  j["per_head"] = rep.per_head;
  j["per_token"] = rep.per_token;
  auto gaps = nlohmann::json::array();
  for (const auto& row : rep.gaps) {
    auto jrow = nlohmann::json::array();
    for (const auto& g : row) {
      nlohmann::json cell;
      // JSON has no infinity; zero-trigger heads keep the raw counts and a
      // null gap so they stay distinguishable from any finite value.
      if (g.triggers > 0)
        cell["mean_gap"] = g.mean_gap;
      else
        cell["mean_gap"] = nullptr;
      cell["triggers"] = g.triggers;
      cell["tokens"] = g.tokens;
      jrow.push_back(cell);
    }
    gaps.push_back(jrow);
  }
  j["gaps"] = gaps;
  return j;
}

nlohmann::json token_trace_export(const std::vector<double>& per_token,
                                  const std::vector<int>& tokens) {
  if (per_token.size() != tokens.size())
    throw shape_error("token_trace_export: usage and token lengths disagree");
  if (tokens.empty()) throw shape_error("token_trace_export: empty sequence");
  nlohmann::json j;
  auto arr = nlohmann::json::array();
  double sum = 0.0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    arr.push_back({{"symbol", tasks::vocab::token_name(tokens[i])},
                   {"id", tokens[i]},
                   {"usage", per_token[i]}});
    sum += per_token[i];
  }
  j["tokens"] = arr;
  j["average"] = sum / static_cast<double>(tokens.size());
  return j;
}

WindowSweepReport window_sweep_report(std::vector<WindowSweepRow> rows) {
  if (rows.size() < 2) throw config_error("window sweep: need at least two window sizes");
  std::sort(rows.begin(), rows.end(),
            [](const WindowSweepRow& a, const WindowSweepRow& b) { return a.w < b.w; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].w == rows[i - 1].w)
      throw config_error("window sweep: duplicate window size");

  WindowSweepReport rep;
  std::string csv = "w,mu_f,accuracy,flag\n";
  char a[64], b[64];
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool inversion = i > 0 && rows[i].mu_f >= rows[i - 1].mu_f;
    if (inversion) rep.violations.push_back(rows[i].w);
    char line[200];
    std::snprintf(line, sizeof(line), "%d,%s,%s,%s\n", rows[i].w,
                  fmt(a, sizeof(a), rows[i].mu_f), fmt(b, sizeof(b), rows[i].accuracy),
                  inversion ? "inversion" : "ok");
    csv += line;
  }
  rep.csv = std::move(csv);
  rep.monotone_decreasing = rep.violations.empty();
  return rep;
}

std::string grid_csv(const std::vector<std::vector<double>>& grid) {
  std::string out;
  char buf[64];
  for (const auto& row : grid) {
    for (std::size_t h = 0; h < row.size(); ++h) {
      if (h) out += ',';
      out += fmt(buf, sizeof(buf), row[h]);
    }
    out += '\n';
  }
  return out;
}

}  // namespace aha
