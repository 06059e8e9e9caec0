#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aha/attention.hpp"
#include "json.hpp"

// Sparsity instrumentation: aggregate gate decisions into usage fractions,
// per-head grids, long-tail curves, trigger-gap statistics, and per-token
// trace exports.

namespace aha {

// One sequence's worth of routing decisions across all layers.
struct GateTrace {
  int layers = 0;  // L
  int rows = 0;    // n
  int heads = 0;   // m router columns per layer
  std::string task;
  std::int64_t sample_id = 0;
  std::vector<std::uint8_t> gates;   // layers*rows*heads, each 0 or 1
  std::vector<int> tokens;           // optional: token ids, empty or length rows
  std::vector<std::uint8_t> scored;  // optional: loss-mask flags, empty or length rows

  std::uint8_t at(int l, int i, int h) const {
    return gates[(static_cast<std::size_t>(l) * rows + i) * heads + h];
  }
  void validate() const;
};

// Packs a forward pass's per-layer gate matrices into one trace.
GateTrace make_trace(const std::vector<GateMatrix>& layer_gates, std::string task,
                     std::int64_t sample_id);

struct GapStat {
  double mean_gap = 0.0;  // tokens per trigger; +inf when the head never fires
  std::int64_t triggers = 0;
  std::int64_t tokens = 0;
};

struct UsageReport {
  double mu_f_overall = 0.0;
  double mu_f_scored = 0.0;  // restricted to scored rows where flags exist
  std::vector<std::vector<double>> per_head;            // L x m fractions
  std::vector<std::vector<std::int64_t>> per_head_on;   // raw counts behind per_head
  std::vector<std::vector<std::int64_t>> per_head_rows; // rows aggregated per cell
  std::vector<double> per_token;  // position-wise usage, averaged over layers/heads
  std::vector<std::vector<GapStat>> gaps;  // L x m
  std::int64_t gate_count = 0;
};

// Fraction of gates routed to full attention over every layer, row and head.
double mu_f(const std::vector<GateTrace>& traces);

// Same fraction restricted to rows whose scored flag is set; traces without
// flags count every row (single-token tasks score the whole sequence).
double mu_f_scored(const std::vector<GateTrace>& traces);

// Per-(layer, head) mean gate value across all traces.
std::vector<std::vector<double>> per_head_usage(const std::vector<GateTrace>& traces);

struct HeadUsage {
  int layer = 0;
  int head = 0;
  double usage = 0.0;
};

// Descending by usage; ties broken by (layer, head) so the order is stable.
std::vector<HeadUsage> sorted_usage_curve(const std::vector<std::vector<double>>& grid);

// Tokens per trigger for one head's gate stream.
GapStat attention_gap(const std::vector<std::uint8_t>& gates);

// Full aggregation over a set of traces (same layers/heads; rows may vary).
UsageReport usage_report(const std::vector<GateTrace>& traces);

nlohmann::json usage_report_to_json(const UsageReport& report);

// Per-token usage pairs (symbol, usage) plus the sequence-level average.
nlohmann::json token_trace_export(const std::vector<double>& per_token,
                                  const std::vector<int>& tokens);

struct WindowSweepRow {
  int w = 0;
  double mu_f = 0.0;
  double accuracy = 0.0;
};

struct WindowSweepReport {
  std::string csv;  // columns: w,mu_f,accuracy,flag
  bool monotone_decreasing = false;
  std::vector<int> violations;  // window sizes whose mu_f rose vs the previous w
};

// Rows are sorted by window size; a row is flagged when enlarging the window
// failed to reduce full-attention usage.
WindowSweepReport window_sweep_report(std::vector<WindowSweepRow> rows);

// L x m matrix as CSV lines, one row per layer.
std::string grid_csv(const std::vector<std::vector<double>>& grid);

}  // namespace aha
