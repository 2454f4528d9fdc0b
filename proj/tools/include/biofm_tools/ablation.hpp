#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "biofm/config.hpp"

namespace biofm::tools {

enum class Suite { PositivePairs, Frameworks, Augmentations, Dispersion };

std::string to_string(Suite s);
Suite suite_from_string(const std::string& s);

// One training configuration of a suite, e.g. "segment" or "byol".
struct Member {
  std::string name;
  RunConfig config;
};

std::vector<Member> suite_members(Suite suite, const RunConfig& base);

struct MemberResult {
  std::string member;
  int seed_index = 0;
  std::uint64_t train_seed = 0;
  std::vector<EpochMetrics> history;
  std::vector<ReportRow> report;

  // Report value or NaN when absent.
  double value(const std::string& target, const std::string& task, const std::string& metric) const;
};

// Train, embed, probe and measure one member under one seed. Results live in
// `<root>/runs/<key>/`; a directory whose echoed config matches is reused.
MemberResult run_member(const Member& member, int seed_index, const std::filesystem::path& root, std::ostream* log);

struct OrderingCheck {
  std::string check;
  std::string seed;  // seed index, or "majority" / "median"
  double lhs = 0, rhs = 0;
  bool holds = false;
};

struct SuiteReport {
  Suite suite;
  std::vector<MemberResult> results;
  std::vector<OrderingCheck> checks;
};

struct SuiteOptions {
  int seeds = 3;
  int jobs = 1;  // > 1: members run in forked worker processes
  std::ostream* log = nullptr;
};

SuiteReport run_suite(Suite suite, const RunConfig& base, const std::filesystem::path& out_dir,
                      const SuiteOptions& options = {});

std::string comparison_csv(const SuiteReport& report);
std::string orderings_csv(const SuiteReport& report);

// Loads or generates (and caches under `root/corpora`) the corpus of `config`.
Corpus corpus_for(const CorpusConfig& config, const std::filesystem::path& root);

}  // namespace biofm::tools
