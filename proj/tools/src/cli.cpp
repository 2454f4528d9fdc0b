#include "biofm_tools/cli.hpp"

#include <CLI11.hpp>

#include "biofm/checkpoint.hpp"
#include "biofm/config.hpp"
#include "biofm/io.hpp"
#include "biofm_tools/ablation.hpp"

namespace biofm::tools {

namespace {

namespace fs = std::filesystem;

void echo_config(const fs::path& dir, const Json& resolved) {
  fs::create_directories(dir);
  io::write_atomic(dir / "config.json", resolved.dump(2) + "\n");
}

Json provenance(const std::string& command, std::initializer_list<std::pair<const char*, std::string>> inputs) {
  Json j;
  j["command"] = command;
  for (const auto& [k, v] : inputs) j["inputs"][k] = v;
  return j;
}

int gen_corpus(const fs::path& config_path, const fs::path& out_dir, std::ostream& out) {
  const RunConfig cfg = load_run_config(config_path);
  const Corpus corpus = generate_corpus(cfg.corpus, out_dir);
  echo_config(out_dir / "resolved", to_json(cfg));
  out << "wrote " << corpus.segments.size() << " segments of " << corpus.participants.size() << " participants to "
      << out_dir.string() << "\n";
  return 0;
}

int pretrain(const fs::path& config_path, const fs::path& corpus_dir, const fs::path& out_dir,
             const std::string& resume, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_run_config(config_path);
  const Corpus corpus = load_corpus(corpus_dir);
  if (corpus.config.modality.modality != cfg.corpus.modality.modality) {
    throw ValidationError("config expects a " + to_string(cfg.corpus.modality.modality) + " corpus, " +
                          corpus_dir.string() + " holds " + to_string(corpus.config.modality.modality));
  }
  Json resolved = to_json(cfg);
  resolved["corpus"] = to_json(corpus.config);
  resolved["inputs"] = {{"corpus", corpus_dir.string()}, {"resume", resume}};
  echo_config(out_dir, resolved);
  PretrainOptions opts;
  opts.out_dir = out_dir;
  if (!resume.empty()) opts.resume_from = fs::path(resume);
  const int epochs = cfg.train.epochs;
  opts.on_epoch = [&](const EpochMetrics& m) {
    err << "epoch " << m.epoch + 1 << "/" << epochs << " train_loss " << io::format_double(m.train_loss)
        << " val_loss " << io::format_double(m.val_loss) << " ser " << io::format_double(m.effective_rank) << " lr "
        << io::format_double(m.lr) << "\n";
    err.flush();
  };
  const PretrainResult r = run_pretraining(corpus, cfg.setup(), opts);
  out << "trained " << to_string(cfg.train.framework) << " for " << r.history.size() << " epochs; checkpoints in "
      << out_dir.string() << "\n";
  return 0;
}

int embed(const fs::path& checkpoint, const fs::path& corpus_dir, const fs::path& out_dir, const std::string& split,
          std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const Corpus corpus = load_corpus(corpus_dir);
  auto net = load_online_network(ckpt);
  std::optional<Split> only;
  if (!split.empty()) only = split_from_string(split);
  const EmbeddingTable table = embed_corpus(*net, corpus, ckpt.input_channels(), ckpt.input_length(), only);
  write_embeddings(table, out_dir);
  Json resolved = provenance("embed", {{"checkpoint", checkpoint.string()}, {"corpus", corpus_dir.string()},
                                       {"split", split.empty() ? "all" : split}});
  resolved["checkpoint_manifest"] = Json::parse(ckpt.manifest.dump());
  echo_config(out_dir, resolved);
  out << "wrote " << table.rows.size() << " embeddings of dimension " << table.dim() << " to " << out_dir.string()
      << "\n";
  return 0;
}

EvalConfig eval_config(const std::string& config_path) {
  return config_path.empty() ? EvalConfig{} : load_run_config(config_path).eval;
}

int probe(const fs::path& embeddings, const fs::path& corpus_dir, const std::string& config_path,
          const fs::path& out_dir, std::ostream& out) {
  const EvalConfig cfg = eval_config(config_path);
  const EmbeddingTable table = read_embeddings(embeddings);
  const Corpus corpus = load_corpus(corpus_dir);
  const auto rows = run_probes(table, corpus.participants, cfg);
  Json resolved = provenance("probe", {{"embeddings", embeddings.string()}, {"corpus", corpus_dir.string()}});
  resolved["eval"] = to_json(cfg);
  echo_config(out_dir, resolved);
  io::write_atomic(out_dir / "probes.csv", report_csv(rows));
  out << report_csv(rows);
  return 0;
}

int metrics(const fs::path& embeddings, const std::string& config_path, const fs::path& out_dir, bool per_dim,
            const std::string& split, std::ostream& out) {
  const EvalConfig cfg = eval_config(config_path);
  EmbeddingTable table = read_embeddings(embeddings);
  if (!split.empty()) table = select_splits(table, {split_from_string(split)});
  const auto rows = embedding_metrics(table, cfg, per_dim);
  Json resolved = provenance("metrics", {{"embeddings", embeddings.string()}, {"split", split.empty() ? "all" : split}});
  resolved["eval"] = to_json(cfg);
  resolved["per_dimension"] = per_dim;
  echo_config(out_dir, resolved);
  io::write_atomic(out_dir / "metrics.csv", report_csv(rows));
  out << report_csv(rows);
  return 0;
}

int ablate(const std::string& suite, const fs::path& config_path, const fs::path& out_dir, int seeds, int jobs,
           std::ostream& out, std::ostream& err) {
  const RunConfig cfg = load_run_config(config_path);
  SuiteOptions opts;
  opts.seeds = seeds;
  opts.jobs = jobs;
  opts.log = &err;
  const SuiteReport report = run_suite(suite_from_string(suite), cfg, out_dir, opts);
  out << comparison_csv(report) << "\n" << orderings_csv(report);
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Self-supervised pre-training on synthetic biosignal corpora", "biofm"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "biofm 0.1.0");

  std::string config, out_dir, corpus, resume, checkpoint, embeddings, split, suite;
  bool per_dim = false;
  int seeds = 3, jobs = 1;

  auto* gen = app.add_subcommand("gen-corpus", "Generate a synthetic corpus");
  gen->add_option("--config", config, "Run config (JSON)")->required();
  gen->add_option("--out", out_dir, "Output corpus directory")->required();

  auto* pre = app.add_subcommand("pretrain", "Pre-train an encoder");
  pre->add_option("--config", config, "Run config (JSON)")->required();
  pre->add_option("--corpus", corpus, "Corpus directory")->required();
  pre->add_option("--out", out_dir, "Run directory")->required();
  pre->add_option("--resume", resume, "Checkpoint directory to continue from");

  auto* emb = app.add_subcommand("embed", "Embed a corpus with a checkpoint");
  emb->add_option("--checkpoint", checkpoint, "Checkpoint directory")->required();
  emb->add_option("--corpus", corpus, "Corpus directory")->required();
  emb->add_option("--out", out_dir, "Output embeddings directory")->required();
  emb->add_option("--split", split, "Only embed this split (train|val|test)");

  auto* prb = app.add_subcommand("probe", "Participant-level linear probes");
  prb->add_option("--embeddings", embeddings, "Embeddings directory")->required();
  prb->add_option("--corpus", corpus, "Corpus directory holding labels.csv")->required();
  prb->add_option("--config", config, "Run config (JSON); eval section is used");
  prb->add_option("--out", out_dir, "Output directory")->required();

  auto* met = app.add_subcommand("metrics", "Smooth effective rank and dispersion ratio");
  met->add_option("--embeddings", embeddings, "Embeddings directory")->required();
  met->add_option("--config", config, "Run config (JSON); eval section is used");
  met->add_option("--out", out_dir, "Output directory")->required();
  met->add_option("--split", split, "Only use rows of this split");
  met->add_flag("--per-dim", per_dim, "Also report the dispersion ratio of every dimension");

  auto* abl = app.add_subcommand("ablate", "Run an ablation suite across seeds");
  abl->add_option("--suite", suite, "positive-pairs | frameworks | augmentations | dispersion")->required();
  abl->add_option("--config", config, "Base run config (JSON)")->required();
  abl->add_option("--out", out_dir, "Output directory")->required();
  abl->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
  abl->add_option("--jobs", jobs, "Worker processes (default 1: sequential)")->check(CLI::PositiveNumber);

  std::vector<const char*> argv = {"biofm"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*gen) return gen_corpus(config, out_dir, out);
    if (*pre) return pretrain(config, corpus, out_dir, resume, out, err);
    if (*emb) return embed(checkpoint, corpus, out_dir, split, out);
    if (*prb) return probe(embeddings, corpus, config, out_dir, out);
    if (*met) return metrics(embeddings, config, out_dir, per_dim, split, out);
    if (*abl) return ablate(suite, config, out_dir, seeds, jobs, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace biofm::tools
