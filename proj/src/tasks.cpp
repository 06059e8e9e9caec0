#include "aha/tasks.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"

namespace aha::tasks {

namespace vocab {

std::string token_name(int id) {
  if (id < 0 || id >= kSize) throw shape_error("token id out of range: " + std::to_string(id));
  if (id < 10) return std::string(1, static_cast<char>('0' + id));
  switch (id) {
    case kComma: return ",";
    case kBos: return "^";
    case kKeyMarker: return "K";
    case kQuery: return "?";
    case kEquals: return "=";
    case kStop: return ".";
    default: break;
  }
  if (id >= kValue0 && id < kValue0 + kNumValues) return "v" + std::to_string(id - kValue0);
  if (id >= kFiller0 && id < kFiller0 + kNumFiller)
    return std::string(1, static_cast<char>('a' + id - kFiller0));
  return "r" + std::to_string(id);
}

std::string render(const std::vector<int>& tokens) {
  std::string out;
  for (int id : tokens) out += token_name(id);
  return out;
}

}  // namespace vocab

namespace {

void check_sample(const TaskSample& s) {
  bool any = false;
  for (auto m : s.loss_mask) any = any || m;
  if (!any) throw shape_error(s.task + ": sample has no scored positions");
  for (int id : s.tokens)
    if (id < 0 || id >= vocab::kSize)
      throw shape_error(s.task + ": token id out of vocabulary");
}

}  // namespace

TaskSample gen_counting(std::uint64_t seed, int length) {
  if (length < 8) throw config_error("gen_counting: length must be >= 8");
  Rng rng(seed, "counting");
  TaskSample s;
  s.task = "counting";
  s.tokens.reserve(static_cast<std::size_t>(length));
  long value = rng.uniform_int(1, 150);
  while (static_cast<int>(s.tokens.size()) < length) {
    const std::string digits = std::to_string(value);
    for (char c : digits) {
      if (static_cast<int>(s.tokens.size()) >= length) break;
      s.tokens.push_back(vocab::kDigit0 + (c - '0'));
    }
    if (static_cast<int>(s.tokens.size()) < length) s.tokens.push_back(vocab::kComma);
    ++value;
  }
  // First ~40% is prompt, the rest is the scored continuation.
  const int cut = std::max(1, (length * 2) / 5);
  s.loss_mask.assign(static_cast<std::size_t>(length), 0);
  for (int i = cut; i < length; ++i) s.loss_mask[static_cast<std::size_t>(i)] = 1;
  s.answer_begin = cut;
  s.answer_end = length;
  check_sample(s);
  return s;
}

TaskSample gen_needle(std::uint64_t seed, int length, int key_distance) {
  if (length < 8) throw config_error("gen_needle: length must be >= 8");
  // Layout: ^ filler... K v filler... ? v  with v planted key_distance
  // positions before the answer. Needs room for BOS and the K marker.
  if (key_distance < 2 || key_distance > length - 3)
    throw config_error("gen_needle: key_distance " + std::to_string(key_distance) +
                       " does not fit in length " + std::to_string(length));
  Rng rng(seed, "needle");
  TaskSample s;
  s.task = "needle";
  const int n = length;
  const int answer_pos = n - 1;
  const int query_pos = n - 2;
  const int value_pos = answer_pos - key_distance;
  const int marker_pos = value_pos - 1;
  const int value = vocab::kValue0 + static_cast<int>(rng.uniform_int(0, vocab::kNumValues - 1));

  s.tokens.assign(static_cast<std::size_t>(n), 0);
  s.tokens[0] = vocab::kBos;
  for (int i = 1; i < n; ++i)
    s.tokens[static_cast<std::size_t>(i)] =
        vocab::kFiller0 + static_cast<int>(rng.uniform_int(0, vocab::kNumFiller - 1));
  s.tokens[static_cast<std::size_t>(marker_pos)] = vocab::kKeyMarker;
  s.tokens[static_cast<std::size_t>(value_pos)] = value;
  s.tokens[static_cast<std::size_t>(query_pos)] = vocab::kQuery;
  s.tokens[static_cast<std::size_t>(answer_pos)] = value;

  s.loss_mask.assign(static_cast<std::size_t>(n), 0);
  s.loss_mask[static_cast<std::size_t>(answer_pos)] = 1;
  s.answer_begin = answer_pos;
  s.answer_end = answer_pos + 1;
  check_sample(s);
  return s;
}

LocalLmTable make_local_lm_table(std::uint64_t table_seed, int order) {
  if (order < 1 || order > 3) throw config_error("local_lm: order must be in [1,3]");
  LocalLmTable t;
  t.order = order;
  Rng rng(table_seed, "local_lm_table");
  std::size_t contexts = 1;
  for (int i = 0; i < order; ++i) contexts *= static_cast<std::size_t>(t.alphabet);
  t.probs.resize(contexts * static_cast<std::size_t>(t.alphabet));
  for (std::size_t c = 0; c < contexts; ++c) {
    double sum = 0.0;
    // Exponentiated normals give peaked rows: learnable but not degenerate.
    for (int a = 0; a < t.alphabet; ++a) {
      const double w = std::exp(rng.normal() * 1.2);
      t.probs[c * static_cast<std::size_t>(t.alphabet) + static_cast<std::size_t>(a)] = w;
      sum += w;
    }
    for (int a = 0; a < t.alphabet; ++a)
      t.probs[c * static_cast<std::size_t>(t.alphabet) + static_cast<std::size_t>(a)] /= sum;
  }
  return t;
}

double LocalLmTable::entropy_rate() const {
  const auto A = static_cast<std::size_t>(alphabet);
  std::size_t contexts = probs.size() / A;
  // Stationary distribution over contexts: context (s1..sk) moves to
  // (s2..sk, a) with probability P(a | s1..sk).
  std::vector<double> pi(contexts, 1.0 / static_cast<double>(contexts));
  std::vector<double> next(contexts);
  for (int iter = 0; iter < 100000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t c = 0; c < contexts; ++c) {
      const std::size_t shifted = (c * A) % contexts;  // drop oldest symbol
      for (std::size_t a = 0; a < A; ++a) next[shifted + a] += pi[c] * probs[c * A + a];
    }
    double delta = 0.0;
    for (std::size_t c = 0; c < contexts; ++c) {
      delta += std::fabs(next[c] - pi[c]);
      pi[c] = next[c];
    }
    if (delta < 1e-14) break;
  }
  double h = 0.0;
  for (std::size_t c = 0; c < contexts; ++c) {
    double hc = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
      const double p = probs[c * A + a];
      if (p > 0.0) hc -= p * std::log(p);
    }
    h += pi[c] * hc;
  }
  return h;
}

TaskSample gen_local_lm(std::uint64_t seed, int length, const LocalLmTable& table) {
  if (length < 8) throw config_error("gen_local_lm: length must be >= 8");
  Rng rng(seed, "local_lm");
  const auto A = static_cast<std::size_t>(table.alphabet);
  std::size_t contexts = table.probs.size() / A;

  TaskSample s;
  s.task = "local_lm";
  s.tokens.reserve(static_cast<std::size_t>(length));
  std::size_t ctx = 0;
  for (int i = 0; i < table.order; ++i) {
    const auto sym = static_cast<std::size_t>(rng.uniform_int(0, table.alphabet - 1));
    s.tokens.push_back(vocab::kFiller0 + static_cast<int>(sym));
    ctx = (ctx * A + sym) % contexts;
  }
  while (static_cast<int>(s.tokens.size()) < length) {
    const double u = rng.uniform();
    double acc = 0.0;
    std::size_t sym = A - 1;
    for (std::size_t a = 0; a < A; ++a) {
      acc += table.probs[ctx * A + a];
      if (u < acc) {
        sym = a;
        break;
      }
    }
    s.tokens.push_back(vocab::kFiller0 + static_cast<int>(sym));
    ctx = (ctx * A + sym) % contexts;
  }

  // Skip a short burn-in so the scored region is near the stationary regime.
  const int burnin = std::min(length - 1, table.order + 4);
  s.loss_mask.assign(static_cast<std::size_t>(length), 0);
  for (int i = burnin; i < length; ++i) s.loss_mask[static_cast<std::size_t>(i)] = 1;
  s.answer_begin = burnin;
  s.answer_end = length;
  check_sample(s);
  return s;
}

TaskSample gen_local_lm(std::uint64_t seed, int length, int order) {
  return gen_local_lm(seed, length, make_local_lm_table(1000 + static_cast<std::uint64_t>(order), order));
}

MixedStream::MixedStream(std::uint64_t seed, std::vector<double> weights, Options opt)
    : rng_(seed, "mixed_stream"), opt_(opt),
      table_(make_local_lm_table(opt.table_seed, opt.order)) {
  if (weights.size() != 3)
    throw config_error("mixed_stream: need 3 weights (counting, needle, local_lm)");
  double sum = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw config_error("mixed_stream: negative weight");
    sum += w;
  }
  if (std::fabs(sum - 1.0) > 1e-9)
    throw config_error("mixed_stream: weights must sum to 1");
  cumulative_.resize(3);
  double acc = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    acc += weights[i];
    cumulative_[i] = acc;
  }
  cumulative_[2] = 1.0;  // guard against accumulated round-off
}

TaskSample MixedStream::next() {
  const double u = rng_.uniform();
  const std::uint64_t sub = rng_.next_u64();
  if (u < cumulative_[0]) return gen_counting(sub, opt_.length);
  if (u < cumulative_[1]) return gen_needle(sub, opt_.length, opt_.key_distance);
  return gen_local_lm(sub, opt_.length, table_);
}

std::string sample_to_json(const TaskSample& s) {
  nlohmann::json j;
  j["tokens"] = s.tokens;
  j["loss_mask"] = std::vector<int>(s.loss_mask.begin(), s.loss_mask.end());
  j["task"] = s.task;
  j["answer_begin"] = s.answer_begin;
  j["answer_end"] = s.answer_end;
  j["text"] = vocab::render(s.tokens);
  return j.dump();
}

TaskSample sample_from_json(const std::string& line) {
  TaskSample s;
  try {
    auto j = nlohmann::json::parse(line);
    s.tokens = j.at("tokens").get<std::vector<int>>();
    const auto mask = j.at("loss_mask").get<std::vector<int>>();
    s.loss_mask.assign(mask.begin(), mask.end());
    s.task = j.at("task").get<std::string>();
    s.answer_begin = j.at("answer_begin").get<int>();
    s.answer_end = j.at("answer_end").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw io_error(std::string("sample parse error: ") + e.what());
  }
  if (s.tokens.size() != s.loss_mask.size())
    throw io_error("sample parse error: tokens/loss_mask length mismatch");
  check_sample(s);
  return s;
}

void write_jsonl(const std::string& path, const std::vector<TaskSample>& samples) {
  std::ofstream out(path);
  if (!out) throw io_error("cannot write samples: " + path);
  for (const auto& s : samples) out << sample_to_json(s) << '\n';
  if (!out) throw io_error("short write on samples: " + path);
}

std::vector<TaskSample> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot read samples: " + path);
  std::vector<TaskSample> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out.push_back(sample_from_json(line));
  }
  return out;
}

}  // namespace aha::tasks
