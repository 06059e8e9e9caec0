#include "aha/experiment.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "aha/trace_io.hpp"

namespace fs = std::filesystem;

namespace aha {

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("cannot write: " + path);
  out << text;
  if (!out) throw io_error("short write: " + path);
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

[[noreturn]] void bad_key(const std::string& path, const std::string& key) {
  throw config_error("unknown config key: " + path + "/" + key);
}

void expect_keys(const nlohmann::json& j, const std::string& path,
                 std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw config_error("expected an object at " + path);
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) ok = true;
    if (!ok) bad_key(path, item.key());
  }
}

template <class T>
void read_field(const nlohmann::json& j, const std::string& path, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw config_error("bad value at " + path + "/" + key + ": " + e.what());
  }
}

void read_seed_field(const nlohmann::json& j, const std::string& path, const char* key,
                     std::uint64_t& out) {
  if (!j.contains(key)) return;
  std::int64_t v = 0;
  read_field(j, path, key, v);
  if (v < 0) throw config_error("bad value at " + path + "/" + key + ": must be >= 0");
  out = static_cast<std::uint64_t>(v);
}

void parse_model(const nlohmann::json& j, ModelConfig& m) {
  expect_keys(j, "/model",
              {"vocab", "d", "layers", "heads", "mlp_hidden", "max_seq_len", "window", "tau"});
  read_field(j, "/model", "vocab", m.vocab);
  read_field(j, "/model", "d", m.d);
  read_field(j, "/model", "layers", m.layers);
  read_field(j, "/model", "heads", m.heads);
  read_field(j, "/model", "mlp_hidden", m.mlp_hidden);
  read_field(j, "/model", "max_seq_len", m.max_seq_len);
  read_field(j, "/model", "window", m.window);
  read_field(j, "/model", "tau", m.tau);
}

void parse_train(const nlohmann::json& j, TrainConfig& t) {
  expect_keys(j, "/train",
              {"lambda", "lr", "beta1", "beta2", "eps", "weight_decay", "warmup_ratio", "steps",
               "batch_size", "freeze_base", "clip_norm"});
  if (j.contains("lambda") && j.at("lambda").is_array())
    throw config_error(
        "train.lambda is a list; one run takes a single value - use `aha sweep --axis "
        "lambda=...` to scan it");
  read_field(j, "/train", "lambda", t.lambda);
  read_field(j, "/train", "lr", t.lr);
  read_field(j, "/train", "beta1", t.beta1);
  read_field(j, "/train", "beta2", t.beta2);
  read_field(j, "/train", "eps", t.eps);
  read_field(j, "/train", "weight_decay", t.weight_decay);
  read_field(j, "/train", "warmup_ratio", t.warmup_ratio);
  read_field(j, "/train", "steps", t.steps);
  read_field(j, "/train", "batch_size", t.batch_size);
  read_field(j, "/train", "freeze_base", t.freeze_base);
  read_field(j, "/train", "clip_norm", t.clip_norm);
}

void parse_task(const nlohmann::json& j, TaskMixConfig& t) {
  expect_keys(j, "/task", {"mix", "length", "key_distance", "order", "table_seed"});
  read_field(j, "/task", "mix", t.mix);
  read_field(j, "/task", "length", t.length);
  read_field(j, "/task", "key_distance", t.key_distance);
  read_field(j, "/task", "order", t.order);
  read_seed_field(j, "/task", "table_seed", t.table_seed);
}

}  // namespace

Precision precision_from_env() {
  const char* env = std::getenv("AHA_PRECISION");
  if (env == nullptr || std::string(env).empty() || std::string(env) == "f64")
    return Precision::f64;
  if (std::string(env) == "f32") return Precision::f32;
  throw config_error(std::string("AHA_PRECISION must be f32 or f64, got: ") + env);
}

void TaskMixConfig::validate() const {
  if (mix.size() != 3) throw config_error("task.mix needs exactly three weights");
  double sum = 0.0;
  for (double w : mix) {
    if (w < 0.0) throw config_error("task.mix weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw config_error("task.mix weights must sum to 1");
  if (length < 8) throw config_error("task.length must be at least 8");
  if (order < 1 || order > 3) throw config_error("task.order must lie in [1,3]");
  if (mix[1] > 0.0 && (key_distance < 2 || key_distance > length - 3))
    throw config_error("task.key_distance must lie in [2, length-3]");
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  task.validate();
  if (eval_samples < 1) throw config_error("eval_samples must be positive");
  if (model.vocab < tasks::vocab::kSize)
    throw config_error("model.vocab must cover the task vocabulary (64 symbols)");
  if (task.length - 1 > model.max_seq_len)
    throw config_error("task.length exceeds model.max_seq_len + 1");
}

ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
  expect_keys(j, "", {"seed", "seeds", "eval_samples", "model", "train", "task"});
  ExperimentConfig cfg;
  read_seed_field(j, "", "seed", cfg.seed);
  if (j.contains("seeds")) {
    std::vector<std::int64_t> raw;
    read_field(j, "", "seeds", raw);
    cfg.seeds.clear();
    for (auto v : raw) {
      if (v < 0) throw config_error("bad value at /seeds: entries must be >= 0");
      cfg.seeds.push_back(static_cast<std::uint64_t>(v));
    }
  }
  read_field(j, "", "eval_samples", cfg.eval_samples);
  if (j.contains("model")) parse_model(j.at("model"), cfg.model);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("task")) parse_task(j.at("task"), cfg.task);
  cfg.model.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot read config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config parse failed in " + path + ": " + e.what());
  }
  return parse_experiment_config(j);
}

nlohmann::json resolved_config_json(const ExperimentConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  if (!cfg.seeds.empty()) j["seeds"] = cfg.seeds;
  j["eval_samples"] = cfg.eval_samples;
  j["model"] = {{"vocab", cfg.model.vocab},
                {"d", cfg.model.d},
                {"layers", cfg.model.layers},
                {"heads", cfg.model.heads},
                {"mlp_hidden", cfg.model.mlp()},
                {"max_seq_len", cfg.model.max_seq_len},
                {"window", cfg.model.window},
                {"tau", cfg.model.tau}};
  j["train"] = {{"lambda", cfg.train.lambda},
                {"lr", cfg.train.lr},
                {"beta1", cfg.train.beta1},
                {"beta2", cfg.train.beta2},
                {"eps", cfg.train.eps},
                {"weight_decay", cfg.train.weight_decay},
                {"warmup_ratio", cfg.train.warmup_ratio},
                {"steps", cfg.train.steps},
                {"batch_size", cfg.train.batch_size},
                {"freeze_base", cfg.train.freeze_base},
                {"clip_norm", cfg.train.clip_norm}};
  j["task"] = {{"mix", cfg.task.mix},
               {"length", cfg.task.length},
               {"key_distance", cfg.task.key_distance},
               {"order", cfg.task.order},
               {"table_seed", cfg.task.table_seed}};
  return j;
}

std::vector<double> task_weights(const std::string& task_name) {
  if (task_name == "counting") return {1.0, 0.0, 0.0};
  if (task_name == "needle") return {0.0, 1.0, 0.0};
  if (task_name == "local_lm") return {0.0, 0.0, 1.0};
  if (task_name == "mixed") return {1.0 / 3, 1.0 / 3, 1.0 / 3};
  throw config_error("unknown task: " + task_name +
                     " (expected counting|needle|local_lm|mixed)");
}

tasks::MixedStream make_stream(const TaskMixConfig& task, std::uint64_t seed,
                               std::string_view purpose, const std::vector<double>& weights) {
  tasks::MixedStreamOptions opt;
  opt.length = task.length;
  opt.key_distance = task.key_distance;
  opt.order = task.order;
  opt.table_seed = task.table_seed;
  return tasks::MixedStream(Rng(seed, purpose).next_u64(), weights, opt);
}

nlohmann::json eval_summary_json(const EvalSummary& s, const std::string& task,
                                 GateForce force, int samples) {
  nlohmann::json j;
  j["version"] = 1;
  j["task"] = task;
  j["force_gates"] = to_string(force);
  j["samples"] = samples;
  j["loss"] = s.loss;
  j["accuracy"] = s.accuracy;
  j["scored_tokens"] = s.scored;
  j["usage"] = usage_report_to_json(s.usage);
  return j;
}

SweepAxis parse_axis(const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos)
    throw config_error("axis must look like w=4,8,16 or lambda=0,0.003: " + spec);
  const std::string name = spec.substr(0, eq);
  SweepAxis axis;
  if (name == "w")
    axis.kind = SweepAxis::Kind::window;
  else if (name == "lambda")
    axis.kind = SweepAxis::Kind::lambda;
  else
    throw config_error("unknown sweep axis: " + name + " (expected w or lambda)");

  std::string rest = spec.substr(eq + 1);
  std::size_t pos = 0;
  while (pos <= rest.size()) {
    const auto comma = rest.find(',', pos);
    const std::string tok =
        rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    if (tok.empty()) throw config_error("empty value in sweep axis: " + spec);
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(tok, &used);
    } catch (const std::exception&) {
      throw config_error("bad numeric value in sweep axis: " + tok);
    }
    if (used != tok.size()) throw config_error("bad numeric value in sweep axis: " + tok);
    if (axis.kind == SweepAxis::Kind::window) {
      if (v < 1.0 || v != std::floor(v))
        throw config_error("window values must be positive integers: " + tok);
    } else if (v < 0.0) {
      throw config_error("lambda values must be >= 0: " + tok);
    }
    axis.values.push_back(v);
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (axis.values.empty()) throw config_error("sweep axis has no values: " + spec);
  for (std::size_t i = 0; i < axis.values.size(); ++i)
    for (std::size_t k = i + 1; k < axis.values.size(); ++k)
      if (axis.values[i] == axis.values[k])
        throw config_error("duplicate value in sweep axis: " + spec);
  return axis;
}

namespace {

// Trains one configuration into out_dir, leaving the full artifact set:
// resolved config, step CSV, checkpoint, eval metrics, usage report, traces.
template <class T>
EvalSummary run_train_t(const ExperimentConfig& cfg, const std::string& out_dir) {
  fs::create_directories(out_dir);
  write_text(out_dir + "/config.json", resolved_config_json(cfg).dump(2) + "\n");

  StepCsvWriter csv(out_dir + "/steps.csv");
  auto stream = make_stream(cfg.task, cfg.seed, "train-data", cfg.task.mix);
  auto result = train<T>(cfg.model, cfg.train, [&] { return stream.next(); },
                         [&](const StepRecord& r) { csv.append(r); });

  nlohmann::json meta;
  meta["experiment"] = resolved_config_json(cfg);
  meta["final_step"] = cfg.train.steps;
  save_checkpoint(out_dir + "/model.ckpt", cfg.model, result.params, meta);

  auto eval_stream = make_stream(cfg.task, cfg.seed, "eval-data", cfg.task.mix);
  auto summary = evaluate<T>(result.params, cfg.model, [&] { return eval_stream.next(); },
                             cfg.eval_samples);
  write_text(out_dir + "/eval.json",
             eval_summary_json(summary, "mixed", GateForce::automatic, cfg.eval_samples).dump(2) +
                 "\n");
  write_text(out_dir + "/usage.json", usage_report_to_json(summary.usage).dump(2) + "\n");

  const std::string traces = out_dir + "/traces";
  fs::create_directories(traces);
  for (std::size_t i = 0; i < summary.traces.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "/%04zu.ahatrace", i);
    write_trace(traces + name, summary.traces[i]);
  }
  return summary;
}

template <class T>
void run_eval_t(const EvalOptions& opt) {
  auto ck = load_checkpoint<T>(opt.ckpt_path);
  ModelConfig mcfg = ck.config;
  if (opt.window_override > 0 && opt.window_override != mcfg.window) {
    std::cerr << "warning: eval window " << opt.window_override
              << " differs from the training window " << mcfg.window
              << "; usage statistics may not transfer\n";
    mcfg.window = opt.window_override;
    mcfg.validate();
  }
  TaskMixConfig task;
  task.length = opt.length;
  task.key_distance = opt.key_distance;
  task.order = opt.order;
  task.validate();
  auto stream = make_stream(task, opt.seed, "eval-data", task_weights(opt.task));
  auto summary =
      evaluate<T>(ck.params, mcfg, [&] { return stream.next(); }, opt.samples, opt.force);
  const auto j = eval_summary_json(summary, opt.task, opt.force, opt.samples);
  std::cout << j.dump(2) << '\n';
  if (!opt.out_json.empty()) write_text(opt.out_json, j.dump(2) + "\n");
  if (!opt.trace_dir.empty()) {
    fs::create_directories(opt.trace_dir);
    for (std::size_t i = 0; i < summary.traces.size(); ++i) {
      char name[32];
      std::snprintf(name, sizeof(name), "/%04zu.ahatrace", i);
      write_trace(opt.trace_dir + name, summary.traces[i]);
    }
  }
}

struct SweepPoint {
  double value = 0.0;
  double mu_f = 0.0;
  double accuracy = 0.0;
};

std::string lambda_sweep_csv(const std::vector<SweepPoint>& points) {
  std::string csv = "lambda,mu_f,accuracy,flag\n";
  for (std::size_t i = 0; i < points.size(); ++i) {
    const bool inversion = i > 0 && points[i].mu_f > points[i - 1].mu_f;
    csv += fmt_double(points[i].value) + "," + fmt_double(points[i].mu_f) + "," +
           fmt_double(points[i].accuracy) + "," + (inversion ? "inversion" : "ok") + "\n";
  }
  return csv;
}

std::string window_sweep_csv(const std::vector<SweepPoint>& points) {
  if (points.size() >= 2) {
    std::vector<WindowSweepRow> rows;
    for (const auto& p : points)
      rows.push_back({static_cast<int>(p.value), p.mu_f, p.accuracy});
    return window_sweep_report(rows).csv;
  }
  // A single completed point cannot be judged for monotonicity; emit it as-is
  // so single-point sweeps compose with train+eval and partial flushes work.
  std::string csv = "w,mu_f,accuracy,flag\n";
  for (const auto& p : points)
    csv += std::to_string(static_cast<int>(p.value)) + "," + fmt_double(p.mu_f) + "," +
           fmt_double(p.accuracy) + ",ok\n";
  return csv;
}

template <class T>
void run_sweep_t(const ExperimentConfig& base, const SweepAxis& axis,
                 const std::vector<std::uint64_t>& seeds, const std::string& out_dir) {
  fs::create_directories(out_dir);
  std::vector<SweepPoint> points;
  auto flush_partial = [&] {
    if (points.empty()) return;
    const std::string csv = axis.kind == SweepAxis::Kind::window ? window_sweep_csv(points)
                                                                 : lambda_sweep_csv(points);
    write_text(out_dir + "/sweep_partial.csv", csv);
  };

  for (double value : axis.values) {
    SweepPoint point{value, 0.0, 0.0};
    for (std::uint64_t s : seeds) {
      ExperimentConfig cfg = base;
      cfg.seed = s;
      cfg.model.seed = s;
      cfg.train.seed = s;
      if (axis.kind == SweepAxis::Kind::window)
        cfg.model.window = static_cast<int>(value);
      else
        cfg.train.lambda = value;
      cfg.validate();

      char sub[96];
      if (axis.kind == SweepAxis::Kind::window)
        std::snprintf(sub, sizeof(sub), "/w%d_seed%llu", static_cast<int>(value),
                      static_cast<unsigned long long>(s));
      else
        std::snprintf(sub, sizeof(sub), "/lambda%g_seed%llu", value,
                      static_cast<unsigned long long>(s));
      EvalSummary summary;
      try {
        summary = run_train_t<T>(cfg, out_dir + sub);
      } catch (...) {
        flush_partial();  // completed points survive a failing one
        throw;
      }
      point.mu_f += summary.usage.mu_f_overall;
      point.accuracy += summary.accuracy;
    }
    point.mu_f /= static_cast<double>(seeds.size());
    point.accuracy /= static_cast<double>(seeds.size());
    points.push_back(point);
  }

  const std::string csv = axis.kind == SweepAxis::Kind::window ? window_sweep_csv(points)
                                                               : lambda_sweep_csv(points);
  write_text(out_dir + "/sweep.csv", csv);
  std::cout << csv;
}

}  // namespace

void run_train(const std::string& config_path, const std::string& out_dir) {
  const auto cfg = load_experiment_config(config_path);
  if (precision_from_env() == Precision::f32)
    run_train_t<float>(cfg, out_dir);
  else
    run_train_t<double>(cfg, out_dir);
}

void run_eval(const EvalOptions& opt) {
  if (precision_from_env() == Precision::f32)
    run_eval_t<float>(opt);
  else
    run_eval_t<double>(opt);
}

void run_sweep(const std::string& config_path, const std::string& axis_spec, int seed_count,
               const std::string& out_dir) {
  const auto cfg = load_experiment_config(config_path);
  const auto axis = parse_axis(axis_spec);
  std::vector<std::uint64_t> seeds = cfg.seeds;
  if (seeds.empty()) {
    if (seed_count < 1) throw config_error("sweep needs at least one seed");
    for (int i = 0; i < seed_count; ++i) seeds.push_back(cfg.seed + static_cast<std::uint64_t>(i));
  }
  if (precision_from_env() == Precision::f32)
    run_sweep_t<float>(cfg, axis, seeds, out_dir);
  else
    run_sweep_t<double>(cfg, axis, seeds, out_dir);
}

void run_analyze(const std::string& trace_dir, const std::string& out_dir) {
  if (!fs::is_directory(trace_dir)) throw io_error("not a trace directory: " + trace_dir);
  std::vector<std::string> paths;
  for (const auto& entry : fs::directory_iterator(trace_dir))
    if (entry.is_regular_file() && entry.path().extension() == kTraceExtension)
      paths.push_back(entry.path().string());
  std::sort(paths.begin(), paths.end());
  if (paths.empty()) throw io_error("no traces under: " + trace_dir);

  std::vector<GateTrace> traces;
  int corrupt = 0;
  for (const auto& p : paths) {
    try {
      traces.push_back(read_trace(p));
    } catch (const error& e) {
      std::cerr << "warning: skipping corrupt trace " << p << ": " << e.what() << '\n';
      ++corrupt;
    }
  }
  if (traces.empty()) throw io_error("no readable traces under: " + trace_dir);

  const auto rep = usage_report(traces);
  fs::create_directories(out_dir);
  write_text(out_dir + "/heatmap.csv", grid_csv(rep.per_head));

  std::string curve = "layer,head,usage\n";
  for (const auto& c : sorted_usage_curve(rep.per_head))
    curve += std::to_string(c.layer) + "," + std::to_string(c.head) + "," + fmt_double(c.usage) +
             "\n";
  write_text(out_dir + "/sorted_curve.csv", curve);

  std::string gaps = "layer,head,mean_gap,triggers,tokens\n";
  for (int l = 0; l < static_cast<int>(rep.gaps.size()); ++l)
    for (int h = 0; h < static_cast<int>(rep.gaps[l].size()); ++h) {
      const auto& g = rep.gaps[l][h];
      gaps += std::to_string(l) + "," + std::to_string(h) + "," +
              (g.triggers > 0 ? fmt_double(g.mean_gap) : std::string("inf")) + "," +
              std::to_string(g.triggers) + "," + std::to_string(g.tokens) + "\n";
    }
  write_text(out_dir + "/gaps.csv", gaps);

  auto token_traces = nlohmann::json::array();
  for (const auto& t : traces) {
    if (t.tokens.empty()) continue;
    nlohmann::json entry;
    entry["sample_id"] = t.sample_id;
    entry["task"] = t.task;
    entry["trace"] = token_trace_export(usage_report({t}).per_token, t.tokens);
    token_traces.push_back(entry);
  }
  write_text(out_dir + "/token_traces.json", token_traces.dump(2) + "\n");

  nlohmann::json summary;
  summary["version"] = 1;
  summary["traces"] = static_cast<int>(traces.size());
  summary["corrupt"] = corrupt;
  summary["mu_f_overall"] = rep.mu_f_overall;
  summary["mu_f_scored"] = rep.mu_f_scored;
  summary["gate_count"] = rep.gate_count;
  write_text(out_dir + "/summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump(2) << '\n';
}

}  // namespace aha
