#pragma once

#include <string>
#include <vector>

#include "aha/analysis.hpp"

// Gate trace files: a fixed magic, a little-endian u32 header length, a JSON
// header (version, shape, task metadata, optional tokens and scored flags),
// then one packed bitset of ceil(rows/8) bytes per (layer, head), bits filled
// least-significant first. Gates dominate disk during sweeps, so the payload
// is 1 bit per decision.

namespace aha {

inline constexpr int kTraceVersion = 1;
inline constexpr char kTraceMagic[4] = {'A', 'H', 'T', 'R'};
inline constexpr const char* kTraceExtension = ".ahatrace";

void write_trace(const std::string& path, const GateTrace& trace);
GateTrace read_trace(const std::string& path);

// Reads every *.ahatrace in a directory in sorted filename order.
std::vector<GateTrace> read_trace_dir(const std::string& dir);

}  // namespace aha
