#include "aha/trace_io.hpp"

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>

#include "aha/errors.hpp"
#include "json.hpp"

namespace aha {

namespace {

std::size_t packed_bytes(int rows) { return (static_cast<std::size_t>(rows) + 7) / 8; }

void put_u32le(std::ostream& out, std::uint32_t v) {
  char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
               static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b, 4);
}

std::uint32_t get_u32le(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw io_error("trace: truncated header length");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_trace(const std::string& path, const GateTrace& trace) {
  trace.validate();
  nlohmann::json header;
  header["version"] = kTraceVersion;
  header["layers"] = trace.layers;
  header["rows"] = trace.rows;
  header["heads"] = trace.heads;
  header["task"] = trace.task;
  header["sample_id"] = trace.sample_id;
  if (!trace.tokens.empty()) header["tokens"] = trace.tokens;
  if (!trace.scored.empty()) {
    std::vector<int> flags(trace.scored.begin(), trace.scored.end());
    header["scored"] = flags;
  }
  const std::string head = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write trace: " + path);
  out.write(kTraceMagic, 4);
  put_u32le(out, static_cast<std::uint32_t>(head.size()));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));

  const std::size_t stride = packed_bytes(trace.rows);
  std::vector<char> packed(stride);
  for (int l = 0; l < trace.layers; ++l)
    for (int h = 0; h < trace.heads; ++h) {
      std::fill(packed.begin(), packed.end(), 0);
      for (int i = 0; i < trace.rows; ++i)
        if (trace.at(l, i, h))
          packed[static_cast<std::size_t>(i) / 8] |= static_cast<char>(1 << (i % 8));
      out.write(packed.data(), static_cast<std::streamsize>(stride));
    }
  if (!out) throw io_error("short write on trace: " + path);
}

GateTrace read_trace(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot read trace: " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || !std::equal(magic, magic + 4, kTraceMagic))
    throw io_error("trace: bad magic in " + path);
  const std::uint32_t head_len = get_u32le(in);
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw io_error("trace: truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(head);
  } catch (const nlohmann::json::exception& e) {
    throw io_error("trace: header parse failed in " + path + ": " + e.what());
  }
  if (!header.contains("version") || header["version"].get<int>() != kTraceVersion)
    throw io_error("trace: unsupported version in " + path);

  GateTrace t;
  try {
    t.layers = header.at("layers").get<int>();
    t.rows = header.at("rows").get<int>();
    t.heads = header.at("heads").get<int>();
    t.task = header.at("task").get<std::string>();
    t.sample_id = header.at("sample_id").get<std::int64_t>();
    if (header.contains("tokens")) t.tokens = header["tokens"].get<std::vector<int>>();
    if (header.contains("scored")) {
      auto flags = header["scored"].get<std::vector<int>>();
      t.scored.assign(flags.begin(), flags.end());
    }
  } catch (const nlohmann::json::exception& e) {
    throw io_error("trace: malformed header in " + path + ": " + e.what());
  }
  if (t.layers < 1 || t.rows < 1 || t.heads < 1)
    throw io_error("trace: invalid shape in " + path);

  const std::size_t stride = packed_bytes(t.rows);
  t.gates.assign(static_cast<std::size_t>(t.layers) * t.rows * t.heads, 0);
  std::vector<char> packed(stride);
  for (int l = 0; l < t.layers; ++l)
    for (int h = 0; h < t.heads; ++h) {
      in.read(packed.data(), static_cast<std::streamsize>(stride));
      if (!in) throw io_error("trace: truncated payload in " + path);
      for (int i = 0; i < t.rows; ++i) {
        const auto bit = (packed[static_cast<std::size_t>(i) / 8] >> (i % 8)) & 1;
        t.gates[(static_cast<std::size_t>(l) * t.rows + i) * t.heads + h] =
            static_cast<std::uint8_t>(bit);
      }
    }
  if (in.peek() != std::char_traits<char>::eof())
    throw io_error("trace: trailing bytes in " + path);
  t.validate();
  return t;
}

std::vector<GateTrace> read_trace_dir(const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw io_error("not a trace directory: " + dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == kTraceExtension)
      paths.push_back(entry.path().string());
  }
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw io_error("no trace files under: " + dir);
  std::vector<GateTrace> traces;
  traces.reserve(paths.size());
  for (const auto& p : paths) traces.push_back(read_trace(p));
  return traces;
}

}  // namespace aha
