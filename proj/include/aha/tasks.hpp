#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "aha/errors.hpp"
#include "aha/rng.hpp"

// Synthetic tasks with controlled context range: counting (locally solvable),
// needle retrieval (requires attention across a chosen distance), and an
// order-k Markov stream (optimal prediction needs only the last k symbols).
// Convention: loss_mask[i] == true means token i is a prediction target,
// scored from the logits at position i-1.

namespace aha::tasks {

// Fixed 64-symbol vocabulary shared by every task.
namespace vocab {
constexpr int kSize = 64;
constexpr int kDigit0 = 0;      // 0..9: digits
constexpr int kComma = 10;
constexpr int kBos = 11;        // '^'
constexpr int kKeyMarker = 12;  // 'K'
constexpr int kQuery = 13;      // '?'
constexpr int kEquals = 14;
constexpr int kStop = 15;       // '.'
constexpr int kValue0 = 16;     // 16..31: sixteen retrievable value symbols
constexpr int kNumValues = 16;
constexpr int kFiller0 = 32;    // 32..57: filler letters a..z
constexpr int kNumFiller = 26;
// 58..63 reserved.

std::string token_name(int id);
std::string render(const std::vector<int>& tokens);
}  // namespace vocab

struct TaskSample {
  std::vector<int> tokens;
  std::vector<std::uint8_t> loss_mask;
  std::string task;
  int answer_begin = -1;  // [answer_begin, answer_end) span of scored tokens
  int answer_end = -1;
};

// Ascending comma-separated numbers; loss on the continuation (last ~60%).
TaskSample gen_counting(std::uint64_t seed, int length);

// A key marker and value symbol planted `key_distance` tokens before the
// final position, random filler around them, a query marker at n-2 and the
// value to reproduce at n-1; only the final token is scored.
TaskSample gen_needle(std::uint64_t seed, int length, int key_distance);

// Order-k Markov chain over an 8-letter alphabet.
struct LocalLmTable {
  int order = 1;
  int alphabet = 8;
  std::vector<double> probs;  // [alphabet^order][alphabet], rows sum to 1

  // Mean conditional entropy (nats per token) under the stationary context
  // distribution, found by power iteration on the context chain.
  double entropy_rate() const;
};

LocalLmTable make_local_lm_table(std::uint64_t table_seed, int order);

TaskSample gen_local_lm(std::uint64_t seed, int length, const LocalLmTable& table);
// Spec'd convenience form: a fixed per-order table seed.
TaskSample gen_local_lm(std::uint64_t seed, int length, int order);

struct MixedStreamOptions {
  int length = 48;
  int key_distance = 24;
  int order = 1;
  std::uint64_t table_seed = 1000;
};

// Reproducible weighted interleaving of the three generators.
class MixedStream {
 public:
  using Options = MixedStreamOptions;

  MixedStream(std::uint64_t seed, std::vector<double> weights,
              Options opt = MixedStreamOptions());

  TaskSample next();

 private:
  Rng rng_;
  std::vector<double> cumulative_;
  Options opt_;
  LocalLmTable table_;
};

// JSON-lines export/import for inspection and replay.
std::string sample_to_json(const TaskSample& s);
TaskSample sample_from_json(const std::string& line);
void write_jsonl(const std::string& path, const std::vector<TaskSample>& samples);
std::vector<TaskSample> read_jsonl(const std::string& path);

}  // namespace aha::tasks
