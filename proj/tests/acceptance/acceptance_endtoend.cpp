// Acceptance criteria 7 and 8: the scaled end-to-end comparison. Budget
// 150k steps, T = 100, 3 seeds per method. Runs are deterministic per
// (config, seed), so finished runs are cached under AVAIL_ACCEPT_CACHE
// (default ./acceptance_cache) and reused; interrupted runs resume from
// their checkpoints. A cold cache needs roughly a day of single-core
// compute - see the README for how to pre-warm it.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "avail/harness.hpp"
#include "avail/orchestrator.hpp"
#include "doctest.h"

using namespace avail;
namespace fs = std::filesystem;

namespace {

constexpr long kBudget = 150000;
constexpr int kHorizon = 100;
const std::vector<std::uint64_t> kSeeds = {0, 1, 2};

std::string cache_dir() {
  if (const char* v = std::getenv("AVAIL_ACCEPT_CACHE")) return v;
  return "acceptance_cache";
}

struct RunSpec {
  std::string label;      // cache key and method column
  std::string method;     // config method
  std::string scheduler;  // config scheduler (avail only)
};

const RunSpec kLearned{"avail-learned", "avail", "learned"};
const RunSpec kNaive{"avail-naive", "avail", "naive"};
const RunSpec kSparse{"sac-sparse", "sac-sparse", "learned"};
const RunSpec kForwardBackward{"forward-backward", "forward-backward", "learned"};
const RunSpec kOracle{"avail-oracle", "avail", "oracle"};

harness::ExperimentConfig accept_config(const RunSpec& spec, std::uint64_t seed) {
  auto cfg = harness::default_config();  // table defaults everywhere
  cfg.run.method = spec.method;
  cfg.run.scheduler = spec.scheduler;
  cfg.run.budget_steps = kBudget;
  cfg.run.task_horizon = kHorizon;
  cfg.run.seeds = {seed};
  cfg.run.out_dir = cache_dir();
  cfg.run.run_name = "accept-" + spec.label;
  cfg.run.log_progress = true;
  cfg.validate();
  return cfg;
}

struct RunResult {
  std::vector<orch::EvalRow> rows;
  double final_full_chain = 0.0;
  long steps_to_06 = -1;
};

RunResult summarize(const std::vector<orch::EvalRow>& rows) {
  RunResult r;
  r.rows = rows;
  for (const auto& row : rows) {  // rows are ordered by step; the last one wins
    if (row.task != "full_chain") continue;
    r.final_full_chain = row.success_rate;
    if (r.steps_to_06 < 0 && row.success_rate >= 0.6) r.steps_to_06 = row.step;
  }
  return r;
}

RunResult ensure_run(const RunSpec& spec, std::uint64_t seed) {
  const std::string dir =
      cache_dir() + "/accept-" + spec.label + "-" + std::to_string(seed);
  const auto cfg = accept_config(spec, seed);

  if (fs::exists(dir + "/rows.csv") && fs::exists(dir + "/summary.json")) {
    auto rows_file = harness::read_rows_csv(dir + "/rows.csv");
    std::vector<orch::EvalRow> rows;
    for (const auto& row : rows_file) rows.push_back({row.step, row.task, row.success});
    if (!rows.empty() && rows.back().step == kBudget) {
      std::printf("[ACCEPT] cached %s seed %llu\n", spec.label.c_str(),
                  static_cast<unsigned long long>(seed));
      std::fflush(stdout);
      return summarize(rows);
    }
  }
  orch::RunArtifacts artifacts;
  if (fs::exists(dir + "/checkpoint/meta.bin")) {
    std::printf("[ACCEPT] resuming %s seed %llu\n", spec.label.c_str(),
                static_cast<unsigned long long>(seed));
    std::fflush(stdout);
    artifacts = orch::resume_train(cfg, dir);
  } else {
    std::printf("[ACCEPT] running %s seed %llu (budget %ld)\n", spec.label.c_str(),
                static_cast<unsigned long long>(seed), kBudget);
    std::fflush(stdout);
    fs::remove_all(dir);
    artifacts = harness::run_single(cfg, seed);
  }
  return summarize(artifacts.rows);
}

double mean_final(const std::vector<RunResult>& runs) {
  double acc = 0.0;
  for (const auto& r : runs) acc += r.final_full_chain;
  return acc / static_cast<double>(runs.size());
}

double mean_steps_to_06(const std::vector<RunResult>& runs, long censor) {
  double acc = 0.0;
  for (const auto& r : runs) acc += r.steps_to_06 < 0 ? censor : r.steps_to_06;
  return acc / static_cast<double>(runs.size());
}

std::vector<RunResult> ensure_all(const RunSpec& spec) {
  std::vector<RunResult> out;
  for (const auto seed : kSeeds) out.push_back(ensure_run(spec, seed));
  return out;
}

void report(const char* id, const char* what, bool pass) {
  std::printf("[ACCEPT] %-3s %-46s %s\n", id, what, pass ? "PASS" : "FAIL");
  std::fflush(stdout);
}

}  // namespace

TEST_CASE("criteria 7 and 8: end-to-end learning comparison at 150k steps") {
  // priority order keeps partial caches useful
  auto learned = ensure_all(kLearned);
  auto naive = ensure_all(kNaive);
  auto sparse = ensure_all(kSparse);
  auto fb = ensure_all(kForwardBackward);
  auto oracle = ensure_all(kOracle);

  // 7a: AVAIL (learned) mean pickup success >= 0.8, every seed >= 0.7
  const double learned_mean = mean_final(learned);
  double learned_min = 1.0;
  for (const auto& r : learned) learned_min = std::min(learned_min, r.final_full_chain);
  {
    const bool pass = learned_mean >= 0.8 && learned_min >= 0.7;
    report("C7a", "avail-learned pickup success >= 0.8", pass);
    std::printf("        mean %.3f, worst seed %.3f\n", learned_mean, learned_min);
    CHECK(learned_mean >= 0.8);
    CHECK(learned_min >= 0.7);
  }

  // 7b: AVAIL > ForwardBackward > SacSparse, sparse <= 0.2
  const double fb_mean = mean_final(fb);
  const double sparse_mean = mean_final(sparse);
  {
    const bool pass = learned_mean > fb_mean && fb_mean > sparse_mean && sparse_mean <= 0.2;
    report("C7b", "ordering avail > fwd-backward > sac-sparse", pass);
    std::printf("        avail %.3f > fb %.3f > sparse %.3f (sparse <= 0.2)\n", learned_mean,
                fb_mean, sparse_mean);
    CHECK(learned_mean > fb_mean);
    CHECK(fb_mean > sparse_mean);
    CHECK(sparse_mean <= 0.2);
  }

  // 7c: oracle scheduler within 0.15 of learned
  const double oracle_mean = mean_final(oracle);
  {
    const double gap = std::abs(oracle_mean - learned_mean);
    const bool pass = gap <= 0.15;
    report("C7c", "oracle scheduler within 0.15 of learned", pass);
    std::printf("        oracle %.3f vs learned %.3f (gap %.3f)\n", oracle_mean, learned_mean,
                gap);
    CHECK(gap <= 0.15);
  }

  // 8: scheduler efficiency - steps to 0.6 pickup success, learned vs naive.
  // The 1.1x bound is informational under seed noise; 1.5x is the hard gate.
  {
    const long censor = kBudget + 5000;  // never-reached runs count past-budget
    const double learned_steps = mean_steps_to_06(learned, censor);
    const double naive_steps = mean_steps_to_06(naive, censor);
    const double ratio = learned_steps / std::max(1.0, naive_steps);
    std::printf("[ACCEPT] C8  scheduler efficiency ratio (learned/naive): %.3f\n", ratio);
    std::printf("        learned mean steps-to-0.6: %.0f, naive: %.0f\n", learned_steps,
                naive_steps);
    if (ratio > 1.1)
      std::printf("        note: above the 1.1 informational bound (seed noise allowed)\n");
    const bool pass = ratio <= 1.5;
    report("C8", "learned <= 1.5x naive steps-to-0.6 (hard gate)", pass);

    // the ratio is recorded in the run summary regardless of pass/fail
    std::ofstream out(cache_dir() + "/scheduler_efficiency.json");
    out << "{\n  \"learned_mean_steps_to_0.6\": " << learned_steps
        << ",\n  \"naive_mean_steps_to_0.6\": " << naive_steps
        << ",\n  \"ratio\": " << ratio << ",\n  \"informational_bound_1.1_met\": "
        << (ratio <= 1.1 ? "true" : "false") << "\n}\n";

    CHECK(ratio <= 1.5);
  }
}
