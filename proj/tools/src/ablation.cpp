#include "biofm_tools/ablation.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "biofm/checkpoint.hpp"
#include "biofm/io.hpp"

namespace biofm::tools {

std::string to_string(Suite s) {
  switch (s) {
    case Suite::PositivePairs: return "positive-pairs";
    case Suite::Frameworks: return "frameworks";
    case Suite::Augmentations: return "augmentations";
    case Suite::Dispersion: return "dispersion";
  }
  return "?";
}

Suite suite_from_string(const std::string& s) {
  if (s == "positive-pairs") return Suite::PositivePairs;
  if (s == "frameworks") return Suite::Frameworks;
  if (s == "augmentations") return Suite::Augmentations;
  if (s == "dispersion") return Suite::Dispersion;
  throw ValidationError("unknown suite '" + s + "' (expected positive-pairs|frameworks|augmentations|dispersion)");
}

namespace {

RunConfig with_modality(const RunConfig& base, Modality modality) {
  RunConfig c = base;
  c.corpus.modality = modality == Modality::Ppg ? ModalityConfig::ppg() : ModalityConfig::ecg();
  c.augmentation = modality == Modality::Ppg ? AugmentationPolicy::ppg_default() : AugmentationPolicy::ecg_default();
  const int channels = c.corpus.modality.channels;
  if (base.encoder_preset == "paper") c.encoder = EncoderConfig::paper(channels);
  else if (base.encoder_preset == "desk") c.encoder = EncoderConfig::desk(channels);
  else c.encoder.in_channels = channels;
  return c;
}

}  // namespace

std::vector<Member> suite_members(Suite suite, const RunConfig& base) {
  std::vector<Member> out;
  switch (suite) {
    case Suite::PositivePairs:
      for (PairMode mode : {PairMode::Participant, PairMode::Segment}) {
        RunConfig c = base;
        c.train.pair_mode = mode;
        out.push_back({to_string(mode), c});
      }
      break;
    case Suite::Frameworks:
      for (Framework f : {Framework::Ours, Framework::OursNoKoleo, Framework::SimClr, Framework::Byol}) {
        RunConfig c = base;
        c.train.framework = f;
        c.train.lr.reset();
        if (base.train.lr && f != Framework::Byol) c.train.lr = base.train.lr;
        out.push_back({to_string(f), c});
      }
      break;
    case Suite::Augmentations: {
      out.push_back({"full", base});
      const auto channels = static_cast<std::size_t>(base.corpus.modality.channels);
      for (AugmentationKind k : kAugmentationOrder) {
        if (k == AugmentationKind::ChannelPermute && channels < 2) continue;
        RunConfig c = base;
        c.augmentation = AugmentationPolicy::isolated(k, base.augmentation.params);
        out.push_back({to_string(k), c});
      }
      break;
    }
    case Suite::Dispersion:
      out.push_back({"low_jitter_ecg", with_modality(base, Modality::Ecg)});
      out.push_back({"high_jitter_ppg", with_modality(base, Modality::Ppg)});
      break;
  }
  for (auto& m : out) m.config.validate();
  return out;
}

double MemberResult::value(const std::string& target, const std::string& task, const std::string& metric) const {
  const ReportRow* r = find_row(report, target, task, metric);
  return r ? r->value : std::numeric_limits<double>::quiet_NaN();
}

namespace {

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

}  // namespace

Corpus corpus_for(const CorpusConfig& config, const std::filesystem::path& root) {
  const std::string key = to_json(config).dump();
  const auto dir = root / "corpora" / (to_string(config.modality.modality) + "-" + hex32(io::crc32(key)));
  if (std::filesystem::exists(dir / "manifest.json")) {
    Corpus c = load_corpus(dir);
    if (to_json(c.config).dump() == key) return c;
  }
  return generate_corpus(config, dir);
}

MemberResult run_member(const Member& member, int seed_index, const std::filesystem::path& root, std::ostream* log) {
  RunConfig cfg = member.config;
  cfg.train.seed = member.config.train.seed + static_cast<std::uint64_t>(seed_index);
  cfg.eval.seed = cfg.train.seed;
  const std::string echo = to_json(cfg).dump(2) + "\n";
  // Keyed by content so identical configs in different suites share one run.
  const auto dir = root / "runs" / hex32(io::crc32(echo));

  MemberResult result;
  result.member = member.name;
  result.seed_index = seed_index;
  result.train_seed = cfg.train.seed;
  if (std::filesystem::exists(dir / "report.csv") && std::filesystem::exists(dir / "config.json") &&
      io::read_text(dir / "config.json") == echo) {
    result.history = parse_metrics_csv(io::read_text(dir / "metrics.csv"));
    result.report = parse_report_csv(io::read_text(dir / "report.csv"));
    if (log) *log << "[" << member.name << " seed " << seed_index << "] reused " << dir.string() << "\n";
    return result;
  }

  const Corpus corpus = corpus_for(cfg.corpus, root);
  std::filesystem::create_directories(dir);
  io::write_atomic(dir / "config.json", echo);
  PretrainOptions opts;
  opts.out_dir = dir;
  opts.on_epoch = [&](const EpochMetrics& m) {
    if (log) {
      *log << "[" << member.name << " seed " << seed_index << "] epoch " << m.epoch << " train_loss "
           << io::format_double(m.train_loss) << " val_loss " << io::format_double(m.val_loss) << " ser "
           << io::format_double(m.effective_rank) << "\n";
      log->flush();
    }
  };
  PretrainResult trained = run_pretraining(corpus, cfg.setup(), opts);
  result.history = trained.history;
  result.report = evaluate_all(*trained.state.online, corpus, cfg.eval);
  io::write_atomic(dir / "report.csv", report_csv(result.report));
  return result;
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

const MemberResult* find(const SuiteReport& r, const std::string& member, int seed) {
  for (const auto& m : r.results)
    if (m.member == member && m.seed_index == seed) return &m;
  return nullptr;
}

double final_val_loss(const MemberResult& m) { return m.history.empty() ? NAN : m.history.back().val_loss; }

// Per-seed comparisons lhs < rhs (or lhs > rhs) plus a majority row.
void per_seed_check(SuiteReport& r, int seeds, const std::string& name, const std::string& a, const std::string& b,
                    bool greater, const std::function<double(const MemberResult&)>& metric) {
  int wins = 0;
  for (int s = 0; s < seeds; ++s) {
    const MemberResult* x = find(r, a, s);
    const MemberResult* y = find(r, b, s);
    if (!x || !y) continue;
    const double lhs = metric(*x), rhs = metric(*y);
    const bool holds = greater ? lhs > rhs : lhs < rhs;
    wins += holds;
    r.checks.push_back({name, std::to_string(s), lhs, rhs, holds});
  }
  r.checks.push_back({name, "majority", static_cast<double>(wins), static_cast<double>(seeds), 2 * wins > seeds});
}

void median_check(SuiteReport& r, const std::string& name, const std::string& a, const std::string& b,
                  bool required, const std::function<double(const MemberResult&)>& metric) {
  std::vector<double> va, vb;
  for (const auto& m : r.results) {
    if (m.member == a) va.push_back(metric(m));
    if (m.member == b) vb.push_back(metric(m));
  }
  const double lhs = median(va), rhs = median(vb);
  r.checks.push_back({name, required ? "median" : "median_reported", lhs, rhs, lhs >= rhs});
}

}  // namespace

SuiteReport run_suite(Suite suite, const RunConfig& base, const std::filesystem::path& out_dir,
                      const SuiteOptions& options) {
  if (options.seeds < 1) throw ValidationError("ablation needs at least one seed");
  const auto members = suite_members(suite, base);
  std::filesystem::create_directories(out_dir);
  io::write_atomic(out_dir / "config.json", to_json(base).dump(2) + "\n");

  if (options.jobs > 1) {
    // Workers fill the run cache; the sequential pass below then only reads it.
    std::vector<std::pair<const Member*, int>> work;
    for (int s = 0; s < options.seeds; ++s)
      for (const auto& m : members) work.emplace_back(&m, s);
    for (auto& m : members) corpus_for(m.config.corpus, out_dir);
    std::size_t next = 0;
    int running = 0, failed = 0;
    while (next < work.size() || running > 0) {
      while (running < options.jobs && next < work.size()) {
        const auto [m, s] = work[next++];
        const pid_t pid = fork();
        if (pid == 0) {
          try {
            run_member(*m, s, out_dir, nullptr);
            _exit(0);
          } catch (...) {
            _exit(1);
          }
        }
        if (pid < 0) throw Error("fork failed");
        ++running;
      }
      int status = 0;
      if (wait(&status) > 0) {
        --running;
        if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failed;
      }
    }
    if (failed && options.log) *options.log << failed << " worker(s) failed; rerunning them in-process\n";
  }

  SuiteReport report;
  report.suite = suite;
  for (int s = 0; s < options.seeds; ++s)
    for (const auto& m : members) report.results.push_back(run_member(m, s, out_dir, options.log));

  auto ser = [](const MemberResult& m) { return m.value("embedding", "unsupervised", "smooth_effective_rank"); };
  auto age_auc = [](const MemberResult& m) { return m.value("pseudo_age", "classification", "auc"); };
  auto dispersion = [](const MemberResult& m) { return m.value("embedding", "unsupervised", "dispersion_ratio"); };
  switch (suite) {
    case Suite::PositivePairs:
      per_seed_check(report, options.seeds, "participant_pseudo_age_auc_gt_segment", "participant", "segment", true, age_auc);
      break;
    case Suite::Frameworks:
      median_check(report, "ours_ser_ge_ours_no_koleo", "ours", "ours_no_koleo", true, ser);
      median_check(report, "ours_ser_ge_byol", "ours", "byol", true, ser);
      median_check(report, "ours_ser_vs_simclr", "ours", "simclr", false, ser);
      break;
    case Suite::Dispersion:
      per_seed_check(report, options.seeds, "low_jitter_dispersion_lt_high_jitter", "low_jitter_ecg", "high_jitter_ppg",
                     false, dispersion);
      per_seed_check(report, options.seeds, "low_jitter_val_loss_lt_high_jitter", "low_jitter_ecg", "high_jitter_ppg",
                     false, final_val_loss);
      break;
    case Suite::Augmentations:
      for (const auto& m : members) {
        if (m.name == "full") continue;
        median_check(report, "full_pseudo_age_auc_vs_" + m.name, "full", m.name, false, age_auc);
      }
      break;
  }
  io::write_atomic(out_dir / "comparison.csv", comparison_csv(report));
  io::write_atomic(out_dir / "orderings.csv", orderings_csv(report));
  return report;
}

std::string comparison_csv(const SuiteReport& report) {
  static const std::vector<std::array<const char*, 3>> columns = {
      {"pseudo_age", "classification", "auc"},  {"pseudo_age", "classification", "pauc"},
      {"pseudo_age", "regression", "mae"},      {"pseudo_bmi", "classification", "auc"},
      {"pseudo_bmi", "classification", "pauc"}, {"pseudo_bmi", "regression", "mae"},
      {"pseudo_sex", "classification", "auc"},  {"pseudo_sex", "classification", "pauc"},
      {"embedding", "unsupervised", "smooth_effective_rank"},
      {"embedding", "unsupervised", "dispersion_ratio"}};
  std::ostringstream os;
  os << "suite,member,seed,train_seed";
  for (const auto& c : columns) os << ',' << (std::string(c[0]) == "embedding" ? "" : std::string(c[0]) + "_") << c[2];
  os << ",final_train_loss,final_val_loss\n";
  for (const auto& m : report.results) {
    os << to_string(report.suite) << ',' << m.member << ',' << m.seed_index << ',' << m.train_seed;
    for (const auto& c : columns) os << ',' << io::format_double(m.value(c[0], c[1], c[2]));
    os << ',' << io::format_double(m.history.empty() ? NAN : m.history.back().train_loss) << ','
       << io::format_double(final_val_loss(m)) << '\n';
  }
  return os.str();
}

std::string orderings_csv(const SuiteReport& report) {
  std::ostringstream os;
  os << "suite,check,seed,lhs,rhs,holds\n";
  for (const auto& c : report.checks) {
    os << to_string(report.suite) << ',' << c.check << ',' << c.seed << ',' << io::format_double(c.lhs) << ','
       << io::format_double(c.rhs) << ',' << (c.holds ? "true" : "false") << '\n';
  }
  return os.str();
}

}  // namespace biofm::tools
