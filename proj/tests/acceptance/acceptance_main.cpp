// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   biofm_acceptance [--work-dir DIR] [--reuse] [--only 1,2,...]

#include <chrono>
#include <cstring>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "biofm/augment.hpp"
#include "biofm/checkpoint.hpp"
#include "biofm/config.hpp"
#include "biofm/evalsuite.hpp"
#include "biofm/io.hpp"
#include "biofm/objective.hpp"
#include "biofm_tools/ablation.hpp"
#include "biofm_tools/cli.hpp"
#include "gradient_suite.hpp"
#include "oracles.hpp"

using namespace biofm;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Var<double> from_mat(const oracle::Mat& m) {
  Tensor<double> t({m.size(), m[0].size()});
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) t.at(i, j) = m[i][j];
  return make_var(std::move(t));
}

Eigen::MatrixXd to_eigen(const oracle::Mat& m) {
  Eigen::MatrixXd e(static_cast<Eigen::Index>(m.size()), static_cast<Eigen::Index>(m[0].size()));
  for (std::size_t i = 0; i < m.size(); ++i)
    for (std::size_t j = 0; j < m[0].size(); ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m[i][j];
  return e;
}

RunConfig desk_base() {
  return run_config_from_json(nlohmann::json::parse(R"({"corpus": {"modality": "ppg"}, "train": {"epochs": 10}})"));
}

// 1. Finite-difference gradient checks.
void gradients(Outcome& o) {
  const auto t0 = std::chrono::steady_clock::now();
  std::size_t cases = 0, elements = 0;
  double worst = 0;
  auto absorb = [&](const std::vector<oracle::GradCase>& list) {
    for (const auto& c : list) {
      ++cases;
      elements += c.report.checked;
      worst = std::max(worst, c.report.worst_rel);
      o.require(c.report.ok(), c.name + " " + c.report.worst_where);
    }
  };
  absorb(oracle::primitive_gradient_cases());
  absorb(oracle::composite_gradient_cases());
  const double secs = seconds_since(t0);
  o.require(secs < 300, "runtime");
  o.detail << cases << " cases, " << elements << " elements, worst rel " << worst << ", " << secs << " s";
}

// 2. Closed-form loss values.
void identities(Outcome& o) {
  auto infonce = [](const oracle::Mat& a, double tau) {
    Graph<double> g(false);
    return loss::infonce(g, from_mat(a), from_mat(a), tau)->value[0];
  };
  Graph<double> g(false);
  const double a = infonce(oracle::Mat(3, oracle::Vec{0.6, 0.8}), 0.04);
  const double b = infonce({{1, 0}, {0, 1}}, 0.04);
  const double k = loss::koleo(g, from_mat({{1, 0}, {-1, 0}}), 1e-8)->value[0];
  const oracle::Mat p = {{1, 2, 3}, {-1, 0.5, 2}}, n = {{-1, -2, -3}, {1, -0.5, -2}};
  const double aligned = loss::byol(g, from_mat(p), from_mat(p))->value[0];
  const double anti = loss::byol(g, from_mat(p), from_mat(n))->value[0];
  o.require(std::abs(a - std::log(2.0)) <= 1e-9, "infonce identical rows");
  o.require(std::abs(b + 25.0) <= 1e-9, "infonce orthogonal");
  o.require(std::abs(k + std::log(4.0)) <= 1e-7, "koleo antipodal");
  o.require(aligned == 0.0 && anti == 4.0, "byol endpoints");
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const double v = loss::byol(g, from_mat(oracle::random_mat(8, 16, rng)), from_mat(oracle::random_mat(8, 16, rng)))->value[0];
    o.require(v >= 0 && v <= 4, "byol bounds");
  }
  o.detail << "infonce " << a << ", " << b << "; koleo " << k << "; byol " << aligned << ", " << anti;
}

// 3. Library against independent oracles, 100 random instances each.
void oracles(Outcome& o) {
  Rng rng(12);
  double w_info = 0, w_koleo = 0, w_auc = 0, w_ser = 0, w_ridge = 0;
  for (int t = 0; t < 100; ++t) {
    Graph<double> g(false);
    const auto a = oracle::random_mat(8, 16, rng), b = oracle::random_mat(8, 16, rng);
    w_info = std::max(w_info, std::abs(loss::infonce(g, from_mat(a), from_mat(b), 0.04)->value[0] - oracle::infonce(a, b, 0.04)));
    const auto h = oracle::random_mat(16, 8, rng);
    w_koleo = std::max(w_koleo, std::abs(loss::koleo(g, from_mat(h), 1e-8)->value[0] - oracle::koleo(h, 1e-8)));

    std::vector<double> s(50);
    std::vector<int> y(50);
    for (std::size_t i = 0; i < s.size(); ++i) {
      y[i] = i % 2;
      s[i] = std::round(3 * (normal(rng) + 0.5 * y[i])) / 3;
    }
    w_auc = std::max(w_auc, std::abs(roc_auc(s, y) - oracle::pairwise_auc(s, y)));

    const auto H = oracle::random_mat(32, 12, rng);
    w_ser = std::max(w_ser, std::abs(smooth_effective_rank(to_eigen(H)) - oracle::smooth_effective_rank(H)));

    const auto X = oracle::random_mat(30, 5, rng);
    oracle::Vec target(30);
    for (double& v : target) v = normal(rng);
    const double alpha = std::pow(10.0, uniform(rng, -2.0, 2.0));
    const auto m = ridge_fit(to_eigen(X), Eigen::Map<const Eigen::VectorXd>(target.data(), 30), alpha);
    const auto ref = oracle::ridge_normal_equations(X, target, alpha);
    for (int j = 0; j < 5; ++j) w_ridge = std::max(w_ridge, std::abs(m.weights(j) - ref.w[j]));
    w_ridge = std::max(w_ridge, std::abs(m.intercept - ref.b));
  }
  o.require(w_info <= 1e-9, "infonce");
  o.require(w_koleo <= 1e-9, "koleo");
  o.require(w_auc <= 1e-12, "roc_auc");
  o.require(w_ser <= 1e-6, "smooth_effective_rank");
  o.require(w_ridge <= 1e-8, "ridge");
  o.detail << "max abs diff infonce " << w_info << ", koleo " << w_koleo << ", auc " << w_auc << ", ser " << w_ser
           << ", ridge " << w_ridge;
}

// 4. Desk run avoids collapse and reduces its training loss.
void anti_collapse(Outcome& o, const fs::path& root) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig base = desk_base();
  const auto r = tools::run_member({"ours", base}, 0, root, &std::cerr);
  const double secs = seconds_since(t0);
  const auto& first = r.history.front();
  const auto& last = r.history.back();
  const double threshold = 0.25 * base.encoder.embedding_dim;
  o.require(static_cast<int>(r.history.size()) == base.train.epochs, "epoch count");
  o.require(last.effective_rank > threshold, "validation SER");
  o.require(last.train_loss < first.train_loss, "train loss decrease");
  o.require(secs < 1800, "runtime");
  o.detail << "val SER " << last.effective_rank << " (> " << threshold << "), train loss " << first.train_loss << " -> "
           << last.train_loss << ", val loss " << first.val_loss << " -> " << last.val_loss << ", " << secs << " s";
}

const tools::OrderingCheck* find_check(const tools::SuiteReport& r, const std::string& name, const std::string& seed) {
  for (const auto& c : r.checks)
    if (c.check == name && c.seed == seed) return &c;
  return nullptr;
}

void describe_seeds(Outcome& o, const tools::SuiteReport& r, const std::string& name) {
  o.detail << name << ":";
  for (const auto& c : r.checks)
    if (c.check == name) o.detail << " " << c.seed << "=" << c.lhs << "/" << c.rhs << (c.holds ? "+" : "-");
  o.detail << "; ";
}

tools::SuiteReport suite(tools::Suite s, const fs::path& root) {
  tools::SuiteOptions opt;
  opt.seeds = 3;
  opt.log = &std::cerr;
  const auto report = tools::run_suite(s, desk_base(), root, opt);
  io::write_atomic(root / (tools::to_string(s) + "_comparison.csv"), tools::comparison_csv(report));
  io::write_atomic(root / (tools::to_string(s) + "_orderings.csv"), tools::orderings_csv(report));
  return report;
}

// 5. Participant-level pairs beat segment-level pairs on the age probe.
void positive_pairs(Outcome& o, const fs::path& root) {
  const auto r = suite(tools::Suite::PositivePairs, root);
  const auto* m = find_check(r, "participant_pseudo_age_auc_gt_segment", "majority");
  o.require(m && m->holds, "majority of seeds");
  describe_seeds(o, r, "participant_pseudo_age_auc_gt_segment");
}

// 6. Median SER: ours >= ours_no_koleo and ours >= byol.
void frameworks(Outcome& o, const fs::path& root) {
  const auto r = suite(tools::Suite::Frameworks, root);
  const auto* a = find_check(r, "ours_ser_ge_ours_no_koleo", "median");
  const auto* b = find_check(r, "ours_ser_ge_byol", "median");
  const auto* c = find_check(r, "ours_ser_vs_simclr", "median_reported");
  o.require(a && a->holds, "ours >= ours_no_koleo");
  o.require(b && b->holds, "ours >= byol");
  if (a) o.detail << "median SER ours " << a->lhs << " vs ours_no_koleo " << a->rhs << "; ";
  if (b) o.detail << "vs byol " << b->rhs << "; ";
  if (c) o.detail << "vs simclr " << c->rhs << " (reported only)";
}

// 7. Low-jitter corpus: lower dispersion and lower validation loss.
void dispersion(Outcome& o, const fs::path& root) {
  const auto r = suite(tools::Suite::Dispersion, root);
  const auto* d = find_check(r, "low_jitter_dispersion_lt_high_jitter", "majority");
  const auto* v = find_check(r, "low_jitter_val_loss_lt_high_jitter", "majority");
  o.require(d && d->holds, "dispersion majority");
  o.require(v && v->holds, "validation loss majority");
  describe_seeds(o, r, "low_jitter_dispersion_lt_high_jitter");
  describe_seeds(o, r, "low_jitter_val_loss_lt_high_jitter");
}

// 8. EMA with frozen online weights contracts the gap by m per step.
void ema(Outcome& o) {
  Network<double> online(EncoderConfig::desk(4), HeadConfig{}, false, 1);
  Network<double> target(EncoderConfig::desk(4), HeadConfig{}, false, 2);
  const auto& theta = online.shared_params();
  const auto& xi = target.shared_params();
  auto gap = [&] {
    double s = 0;
    for (std::size_t k = 0; k < theta.size(); ++k)
      for (std::size_t i = 0; i < theta[k].var->value.size(); ++i)
        s += std::pow(xi[k].var->value[i] - theta[k].var->value[i], 2);
    return std::sqrt(s);
  };
  const double g0 = gap();
  double worst = 0;
  for (int k = 1; k <= 200; ++k) {
    ema_update(theta, xi, 0.99);
    const double want = std::pow(0.99, k) * g0;
    worst = std::max(worst, std::abs(gap() - want) / want);
  }
  o.require(worst <= 1e-6, "relative error");
  o.detail << "200 steps, worst relative error " << worst;
}

int cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = tools::run_cli(args, out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

// 9. Byte-identical pipeline, bitwise checkpoints, exact resume.
void persistence(Outcome& o, const fs::path& root) {
  const auto cfg_json = nlohmann::json::parse(R"({
    "corpus": {"modality": "ppg", "n_participants": 80, "segments_per_participant": 8, "seed": 17},
    "train": {"batch_pairs": 16, "epochs": 3, "seed": 2, "max_val_batches": 2, "ser_batch": 32},
    "eval": {"ser_batch": 32}
  })");
  fs::create_directories(root);
  const auto cfg = root / "config.json";
  io::write_atomic(cfg, cfg_json.dump(2));
  std::vector<std::string> reports;
  for (const std::string run : {"a", "b"}) {
    const auto d = root / run;
    fs::remove_all(d);
    bool ok = cli({"gen-corpus", "--config", cfg.string(), "--out", (d / "corpus").string()}) == 0 &&
              cli({"pretrain", "--config", cfg.string(), "--corpus", (d / "corpus").string(), "--out",
                   (d / "run").string()}) == 0 &&
              cli({"embed", "--checkpoint", (d / "run" / "final").string(), "--corpus", (d / "corpus").string(),
                   "--out", (d / "emb").string()}) == 0 &&
              cli({"probe", "--embeddings", (d / "emb").string(), "--corpus", (d / "corpus").string(), "--config",
                   cfg.string(), "--out", (d / "probe").string()}) == 0;
    o.require(ok, "pipeline run " + run);
    if (!ok) return;
    reports.push_back(io::read_text(d / "probe" / "probes.csv") + io::read_text(d / "run" / "metrics.csv"));
  }
  o.require(reports[0] == reports[1], "byte-identical reports");

  const RunConfig rc = run_config_from_json(cfg_json);
  const Corpus corpus = load_corpus(root / "a" / "corpus");
  const Checkpoint ck = load_checkpoint(root / "a" / "run" / "final");
  save_checkpoint(ck, root / "copy");
  const Checkpoint back = load_checkpoint(root / "copy");
  bool bitwise = back.tensors.size() == ck.tensors.size();
  for (const auto& [name, t] : ck.tensors) {
    const auto it = back.tensors.find(name);
    bitwise = bitwise && it != back.tensors.end() && it->second == t &&
              std::memcmp(it->second.ptr(), t.ptr(), t.size() * sizeof(float)) == 0;
  }
  bitwise = bitwise && io::read_bytes(root / "copy" / "weights.bin") == io::read_bytes(root / "a" / "run" / "final" / "weights.bin");
  o.require(bitwise, "checkpoint round trip");

  PretrainOptions first;
  first.out_dir = root / "resume";
  fs::remove_all(first.out_dir);
  first.stop_after_epochs = 1;
  run_pretraining(corpus, rc.setup(), first);
  PretrainOptions rest;
  rest.out_dir = root / "resume";
  rest.resume_from = root / "resume" / "last";
  const auto resumed = run_pretraining(corpus, rc.setup(), rest);
  const auto ref = parse_metrics_csv(io::read_text(root / "a" / "run" / "metrics.csv"));
  double worst = 0;
  o.require(resumed.history.size() == ref.size(), "resumed epoch count");
  for (std::size_t e = 0; e < std::min(ref.size(), resumed.history.size()); ++e) {
    worst = std::max(worst, std::abs(resumed.history[e].train_loss - ref[e].train_loss));
    worst = std::max(worst, std::abs(resumed.history[e].val_loss - ref[e].val_loss));
  }
  o.require(worst <= 1e-5, "resume trajectory");
  o.detail << "reports identical " << (reports[0] == reports[1] ? "yes" : "no") << ", checkpoint bitwise "
           << (bitwise ? "yes" : "no") << ", resume max loss diff " << worst;
}

// 10. Augmentation application rates, identity limits, permutation uniformity.
void augmentation(Outcome& o) {
  Rng data(30);
  Segment s({4, 64});
  for (float& v : s.storage()) v = static_cast<float>(normal(data));
  const int n = 10000;
  double worst_z = 0;
  for (AugmentationKind kind : kAugmentationOrder) {
    for (double p : {0.15, 0.4, 0.8}) {
      AugmentationPolicy pol;
      pol.entries = {{kind, p}};
      Rng rng(derive_seed({31, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(p * 100)}));
      int changed = 0;
      for (int i = 0; i < n; ++i) changed += augment::apply_policy(s, pol, rng) != s;
      const double q = kind == AugmentationKind::ChannelPermute ? p * 23.0 / 24.0 : p;
      const double z = std::abs(changed / double(n) - q) / std::sqrt(q * (1 - q) / n);
      worst_z = std::max(worst_z, z);
      o.require(z <= 3, "rate " + to_string(kind));
    }
  }
  Rng rng(32);
  o.require(augment::cut_out_window(s, 5, 0) == s, "cut_out identity");
  o.require(augment::add_gaussian_noise(s, 0.0, rng) == s, "noise identity");
  o.require(augment::magnitude_warp_with_knots(s, {1, 1, 1, 1}) == s, "magnitude identity");
  const auto tw = augment::time_warp_with_offsets(s, {0, 0, 0, 0});
  double tw_err = 0;
  for (std::size_t i = 0; i < s.size(); ++i) tw_err = std::max(tw_err, std::abs(double(tw[i]) - s[i]));
  o.require(tw_err <= 1e-6, "time warp identity");
  o.require(augment::permute_channels(s, {0, 1, 2, 3}) == s, "permute identity");

  std::map<std::vector<std::size_t>, int> counts;
  for (int i = 0; i < 24000; ++i) ++counts[augment::random_permutation(4, rng)];
  double worst_rel = counts.size() == 24 ? 0 : 1;
  for (const auto& [perm, c] : counts) worst_rel = std::max(worst_rel, std::abs(c / 24000.0 * 24 - 1));
  o.require(counts.size() == 24 && worst_rel <= 0.2, "permutation uniformity");
  o.detail << "worst rate deviation " << worst_z << " sigma, time warp identity error " << tw_err
           << ", worst permutation deviation " << 100 * worst_rel << "%";
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "biofm_acceptance";
  bool reuse = false;
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) work = argv[++i];
    else if (a == "--reuse") reuse = true;
    else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      for (std::string t; std::getline(ss, t, ',');) only.insert(std::stoi(t));
    } else {
      std::cerr << "usage: biofm_acceptance [--work-dir DIR] [--reuse] [--only 1,2,...]\n";
      return 2;
    }
  }
  if (!reuse) fs::remove_all(work);
  fs::create_directories(work);

  const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria = {
      {"gradient suite", gradients},
      {"loss identities", identities},
      {"oracle equivalence", oracles},
      {"anti-collapse desk run", [&](Outcome& o) { anti_collapse(o, work / "ablations"); }},
      {"positive-pair ordering", [&](Outcome& o) { positive_pairs(o, work / "ablations"); }},
      {"framework ordering", [&](Outcome& o) { frameworks(o, work / "ablations"); }},
      {"dispersion ordering", [&](Outcome& o) { dispersion(o, work / "ablations"); }},
      {"EMA exactness", ema},
      {"determinism and persistence", [&](Outcome& o) { persistence(o, work / "pipeline"); }},
      {"augmentation statistics", augmentation},
  };

  const auto start = std::chrono::steady_clock::now();
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      criteria[i].second(o);
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << " [exception: " << e.what() << "]";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << id << " (" << criteria[i].first << "): "
              << o.detail.str() << " [" << seconds_since(t0) << " s]" << std::endl;
  }
  std::cout << "total " << seconds_since(start) << " s, " << failed << " failed" << std::endl;
  return failed ? 1 : 0;
}
