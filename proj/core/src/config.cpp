#include "avail/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace avail::harness {

namespace {

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string to_upper(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  return s;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct Entry {
  std::string section, key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

void parse_bool(const std::string& raw, bool& out, const std::string& key) {
  if (raw == "true" || raw == "1" || raw == "yes") {
    out = true;
  } else if (raw == "false" || raw == "0" || raw == "no") {
    out = false;
  } else {
    throw ConfigError("invalid boolean for " + key + ": '" + raw + "'");
  }
}

template <typename T>
Entry num_entry(std::string section, std::string key, T ExperimentConfig::Run::* field);

#define AVAIL_NUM_ENTRY(section, key, expr)                                               \
  Entry{section, key, [](const ExperimentConfig& c) {                                     \
          if constexpr (std::is_floating_point_v<std::decay_t<decltype(c.expr)>>)         \
            return format_double(c.expr);                                                 \
          else                                                                            \
            return std::to_string(c.expr);                                                \
        },                                                                                \
        [](ExperimentConfig& c, const std::string& raw) {                                 \
          try {                                                                           \
            if constexpr (std::is_floating_point_v<std::decay_t<decltype(c.expr)>>)       \
              c.expr = std::stod(raw);                                                    \
            else                                                                          \
              c.expr = static_cast<std::decay_t<decltype(c.expr)>>(std::stoll(raw));      \
          } catch (const std::exception&) {                                               \
            throw ConfigError(std::string("invalid value for ") + section "." key + ": '" + \
                              raw + "'");                                                 \
          }                                                                               \
        }}

#define AVAIL_STR_ENTRY(section, key, expr)                                      \
  Entry{section, key, [](const ExperimentConfig& c) { return c.expr; },          \
        [](ExperimentConfig& c, const std::string& raw) { c.expr = raw; }}

#define AVAIL_BOOL_ENTRY(section, key, expr)                                         \
  Entry{section, key,                                                               \
        [](const ExperimentConfig& c) { return c.expr ? std::string("true") : std::string("false"); }, \
        [](ExperimentConfig& c, const std::string& raw) {                            \
          parse_bool(raw, c.expr, section "." key);                                  \
        }}

std::string seeds_to_string(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (size_t i = 0; i < seeds.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(seeds[i]);
  }
  return out;
}

const std::vector<Entry>& registry() {
  static const std::vector<Entry> entries = {
      AVAIL_STR_ENTRY("run", "method", run.method),
      AVAIL_STR_ENTRY("run", "scheduler", run.scheduler),
      Entry{"run", "seeds",
            [](const ExperimentConfig& c) { return seeds_to_string(c.run.seeds); },
            [](ExperimentConfig& c, const std::string& raw) {
              c.run.seeds.clear();
              std::stringstream ss(raw);
              std::string tok;
              while (std::getline(ss, tok, ',')) {
                tok = trim(tok);
                if (tok.empty()) continue;
                try {
                  c.run.seeds.push_back(std::stoull(tok));
                } catch (const std::exception&) {
                  throw ConfigError("invalid seed '" + tok + "'");
                }
              }
            }},
      AVAIL_NUM_ENTRY("run", "budget_steps", run.budget_steps),
      AVAIL_NUM_ENTRY("run", "task_horizon", run.task_horizon),
      AVAIL_NUM_ENTRY("run", "eval_interval", run.eval_interval),
      AVAIL_NUM_ENTRY("run", "eval_episodes", run.eval_episodes),
      AVAIL_NUM_ENTRY("run", "eval_success_window", run.eval_success_window),
      AVAIL_NUM_ENTRY("run", "chain_slots", run.chain_slots),
      AVAIL_NUM_ENTRY("run", "warmup_steps", run.warmup_steps),
      AVAIL_STR_ENTRY("run", "out_dir", run.out_dir),
      AVAIL_STR_ENTRY("run", "run_name", run.run_name),
      AVAIL_BOOL_ENTRY("run", "checkpoint", run.checkpoint),
      AVAIL_BOOL_ENTRY("run", "log_progress", run.log_progress),

      AVAIL_STR_ENTRY("graph", "edges", graph.edges),
      AVAIL_STR_ENTRY("graph", "milestones_path", graph.milestones_path),
      AVAIL_NUM_ENTRY("graph", "milestones_per_task", graph.milestones_per_task),
      AVAIL_NUM_ENTRY("graph", "example_margin", graph.example_margin),

      AVAIL_NUM_ENTRY("env", "arena_half_width", env.arena_half_width),
      AVAIL_NUM_ENTRY("env", "arena_height", env.arena_height),
      AVAIL_NUM_ENTRY("env", "tether_radius", env.tether_radius),
      AVAIL_NUM_ENTRY("env", "max_step", env.max_step),
      AVAIL_NUM_ENTRY("env", "grasp_radius", env.grasp_radius),
      AVAIL_NUM_ENTRY("env", "success_radius", env.success_radius),
      AVAIL_NUM_ENTRY("env", "pickup_height", env.pickup_height),
      AVAIL_NUM_ENTRY("env", "pickup_target_x", env.pickup_target_x),
      AVAIL_NUM_ENTRY("env", "pickup_target_y", env.pickup_target_y),
      AVAIL_NUM_ENTRY("env", "reposition_max_z", env.reposition_max_z),
      AVAIL_NUM_ENTRY("env", "hand_init_z", env.hand_init_z),

      AVAIL_NUM_ENTRY("augment", "sigma", augment.sigma),
      AVAIL_BOOL_ENTRY("augment", "clip_to_valid", augment.clip_to_valid),

      AVAIL_NUM_ENTRY("rl", "lr", rl.lr),
      AVAIL_NUM_ENTRY("rl", "gamma", rl.gamma),
      AVAIL_NUM_ENTRY("rl", "tau", rl.tau),
      AVAIL_NUM_ENTRY("rl", "batch_size", rl.batch_size),
      AVAIL_NUM_ENTRY("rl", "hidden_dim", rl.hidden_dim),
      AVAIL_NUM_ENTRY("rl", "m_augmentations", rl.m_augmentations),
      AVAIL_NUM_ENTRY("rl", "l_augmentations", rl.l_augmentations),
      AVAIL_NUM_ENTRY("rl", "critic_dropout", rl.critic_dropout),
      AVAIL_NUM_ENTRY("rl", "buffer_capacity", rl.buffer_capacity),
      AVAIL_NUM_ENTRY("rl", "init_log_alpha", rl.init_log_alpha),
      AVAIL_BOOL_ENTRY("rl", "entropy_tuning", rl.entropy_tuning),

      AVAIL_NUM_ENTRY("classifier", "lr", classifier.lr),
      AVAIL_NUM_ENTRY("classifier", "batch_size", classifier.batch_size),
      AVAIL_NUM_ENTRY("classifier", "hidden_dim", classifier.hidden_dim),
      AVAIL_NUM_ENTRY("classifier", "hidden_layers", classifier.hidden_layers),
      AVAIL_NUM_ENTRY("classifier", "dropout", classifier.dropout),
      AVAIL_NUM_ENTRY("classifier", "mixup_alpha", classifier.mixup_alpha),
      AVAIL_NUM_ENTRY("classifier", "label_smoothing", classifier.label_smoothing),
      AVAIL_NUM_ENTRY("classifier", "steps_per_iteration", classifier.steps_per_iteration),
      AVAIL_NUM_ENTRY("classifier", "negative_window", classifier.negative_window),
      AVAIL_NUM_ENTRY("classifier", "positive_fraction", classifier.positive_fraction),

      AVAIL_NUM_ENTRY("taskmodel", "hidden_dim", taskmodel.hidden_dim),
      AVAIL_NUM_ENTRY("taskmodel", "epochs", taskmodel.epochs),
      AVAIL_NUM_ENTRY("taskmodel", "lr", taskmodel.lr),
      AVAIL_NUM_ENTRY("taskmodel", "batch_size", taskmodel.batch_size),
      AVAIL_NUM_ENTRY("taskmodel", "holdout_fraction", taskmodel.holdout_fraction),
      AVAIL_BOOL_ENTRY("taskmodel", "sample_task", taskmodel.sample_task),
  };
  return entries;
}

#undef AVAIL_NUM_ENTRY
#undef AVAIL_STR_ENTRY
#undef AVAIL_BOOL_ENTRY

const Entry* find_entry(const std::string& section, const std::string& key) {
  for (const auto& e : registry())
    if (e.section == section && e.key == key) return &e;
  return nullptr;
}

void apply_env_overrides(ExperimentConfig& cfg) {
  for (const auto& e : registry()) {
    const std::string var = "AVAIL_" + to_upper(e.section) + "_" + to_upper(e.key);
    if (const char* v = std::getenv(var.c_str())) e.set(cfg, v);
  }
}

}  // namespace

std::vector<std::pair<std::string, std::string>> ExperimentConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> out;
  out.reserve(registry().size());
  for (const auto& e : registry()) out.emplace_back(e.section + "." + e.key, e.get(*this));
  return out;
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::edge_list() const {
  std::vector<std::pair<std::string, std::string>> out;
  std::stringstream ss(graph.edges);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    tok = trim(tok);
    if (tok.empty()) continue;
    const size_t sep = tok.find('>');
    if (sep == std::string::npos)
      throw ConfigError("graph.edges entry '" + tok + "' is not of the form task>next");
    out.emplace_back(trim(tok.substr(0, sep)), trim(tok.substr(sep + 1)));
  }
  return out;
}

void ExperimentConfig::validate() const {
  if (run.task_horizon < 1) throw ConfigError("invariant violated: task_horizon >= 1");
  if (run.budget_steps < 0) throw ConfigError("invariant violated: budget_steps >= 0");
  if (run.budget_steps % run.task_horizon != 0)
    throw ConfigError("invariant violated: budget_steps must be divisible by task_horizon");
  if (run.seeds.empty()) throw ConfigError("invariant violated: seeds must be non-empty");
  if (run.eval_interval < 1) throw ConfigError("invariant violated: eval_interval >= 1");
  if (run.eval_episodes < 1) throw ConfigError("invariant violated: eval_episodes >= 1");
  if (run.chain_slots < 1) throw ConfigError("invariant violated: chain_slots >= 1");
  if (rl.batch_size < 2 || classifier.batch_size < 2)
    throw ConfigError("invariant violated: batch sizes must be at least 2");
  if (!(classifier.positive_fraction > 0.0 && classifier.positive_fraction < 1.0))
    throw ConfigError("invariant violated: classifier positive_fraction in (0,1)");
  if (!(graph.example_margin >= 0.0 && graph.example_margin < 1.0))
    throw ConfigError("invariant violated: example_margin in [0,1)");
  if (augment.sigma < 0.0) throw ConfigError("invariant violated: augment sigma >= 0");
  // fail early on bad enum-ish strings
  (void)taskgraph::scheduler_from_name(run.scheduler);
  if (run.method != "avail" && run.method != "sac-sparse" && run.method != "sac-vice" &&
      run.method != "forward-backward" && run.method != "r3l-lite")
    throw ConfigError("unknown method: " + run.method);
}

ExperimentConfig default_config() { return ExperimentConfig{}; }

ExperimentConfig config_from_string(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const Entry* e = find_entry(section, key);
    if (!e)
      throw ConfigError("unknown config key: " + (section.empty() ? key : section + "." + key));
    e->set(cfg, value);
  }
  apply_env_overrides(cfg);
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_string(ss.str());
}

std::string config_to_string(const ExperimentConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& e : registry()) {
    if (e.section != section) {
      if (!out.empty()) out += "\n";
      section = e.section;
      out += "[" + section + "]\n";
    }
    out += e.key + " = " + e.get(cfg) + "\n";
  }
  return out;
}

void save_config(const ExperimentConfig& cfg, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("save_config: cannot open " + path);
  out << config_to_string(cfg);
  if (!out) throw IoError("save_config: write failed");
}

}  // namespace avail::harness
