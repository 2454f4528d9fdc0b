#include "biofm/evalsuite.hpp"

#include <algorithm>
#include <charconv>
#include <map>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "biofm/io.hpp"
#include "biofm/pretrain.hpp"
#include "biofm/rng.hpp"

namespace biofm {

EmbeddingTable embed_corpus(Network<float>& net, const Corpus& corpus, std::size_t expected_channels,
                            std::size_t expected_length, std::optional<Split> split) {
  const auto& m = corpus.config.modality;
  if (static_cast<std::size_t>(m.channels) != expected_channels || m.segment_length() != expected_length) {
    throw ValidationError("network expects inputs of " + std::to_string(expected_channels) + " x " +
                          std::to_string(expected_length) + ", corpus segments are " + std::to_string(m.channels) +
                          " x " + std::to_string(m.segment_length()));
  }
  std::vector<const SegmentRecord*> segs;
  for (const auto& s : corpus.segments)
    if (!split || s.split == *split) segs.push_back(&s);
  EmbeddingTable table;
  table.modality = to_string(m.modality);
  const Tensor<float> emb = embed_segments(net, segs);
  table.values.resize(static_cast<Eigen::Index>(emb.dim(0)), static_cast<Eigen::Index>(emb.dim(1)));
  for (std::size_t i = 0; i < emb.dim(0); ++i) {
    table.rows.push_back({segs[i]->segment_id, segs[i]->participant_id, segs[i]->split});
    for (std::size_t d = 0; d < emb.dim(1); ++d) table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = emb.at(i, d);
  }
  return table;
}

void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::vector<float> flat;
  flat.reserve(static_cast<std::size_t>(table.values.size()));
  for (Eigen::Index i = 0; i < table.values.rows(); ++i)
    for (Eigen::Index d = 0; d < table.values.cols(); ++d) flat.push_back(static_cast<float>(table.values(i, d)));
  std::vector<std::uint8_t> blob;
  io::append_f32_le(blob, flat);
  std::ostringstream index;
  index << "segment_id,participant_id,split,row\n";
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    const auto& r = table.rows[i];
    index << r.segment_id << ',' << r.participant_id << ',' << to_string(r.split) << ',' << i << '\n';
  }
  const std::string index_text = index.str();
  io::write_atomic(dir / "embeddings.bin", blob);
  io::write_atomic(dir / "index.csv", index_text);
  nlohmann::ordered_json m = {{"format", "biofm-embeddings"},
                              {"version", 1},
                              {"modality", table.modality},
                              {"rows", table.rows.size()},
                              {"dim", table.dim()},
                              {"checksums", {{"embeddings.bin", io::crc32(blob)}, {"index.csv", io::crc32(index_text)}}}};
  io::write_atomic(dir / "manifest.json", m.dump(2) + "\n");
}

EmbeddingTable read_embeddings(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) throw IoError("no embeddings manifest in " + dir.string());
  nlohmann::json m;
  try {
    m = nlohmann::json::parse(io::read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError(std::string("corrupt embeddings manifest: ") + e.what());
  }
  if (m.value("format", "") != "biofm-embeddings") throw IoError("not a biofm embeddings directory");
  const auto blob = io::read_bytes(dir / "embeddings.bin");
  const std::string index = io::read_text(dir / "index.csv");
  const auto rows = m.at("rows").get<std::size_t>(), dim = m.at("dim").get<std::size_t>();
  if (blob.size() != rows * dim * sizeof(float)) throw IoError("embeddings.bin is truncated");
  if (io::crc32(blob) != m.at("checksums").at("embeddings.bin").get<std::uint32_t>() ||
      io::crc32(index) != m.at("checksums").at("index.csv").get<std::uint32_t>()) {
    throw IoError("embeddings checksum mismatch");
  }
  EmbeddingTable table;
  table.modality = m.at("modality").get<std::string>();
  std::vector<float> flat(rows * dim);
  io::read_f32_le(blob, 0, flat);
  table.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t d = 0; d < dim; ++d) table.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(d)) = flat[i * dim + d];
  std::istringstream is(index);
  std::string line;
  std::getline(is, line);
  if (line != "segment_id,participant_id,split,row") throw IoError("embeddings index.csv: unexpected header");
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != 4) throw IoError("embeddings index.csv: wrong column count");
    table.rows.push_back({std::stoi(f[0]), std::stoi(f[1]), split_from_string(f[2])});
  }
  if (table.rows.size() != rows) throw IoError("embeddings index.csv row count does not match manifest");
  return table;
}

ParticipantMatrix aggregate_by_participant(const EmbeddingTable& table) {
  std::map<int, std::vector<Eigen::Index>> groups;
  std::map<int, Split> split;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    groups[table.rows[i].participant_id].push_back(static_cast<Eigen::Index>(i));
    split[table.rows[i].participant_id] = table.rows[i].split;
  }
  ParticipantMatrix out;
  out.values.resize(static_cast<Eigen::Index>(groups.size()), table.values.cols());
  Eigen::Index r = 0;
  for (const auto& [pid, rows] : groups) {
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(table.values.cols());
    for (Eigen::Index i : rows) acc += table.values.row(i);
    out.values.row(r++) = acc / static_cast<double>(rows.size());
    out.ids.push_back(pid);
    out.splits.push_back(split[pid]);
  }
  return out;
}

Eigen::VectorXd RidgeModel::predict(const Eigen::MatrixXd& X) const {
  return (X * weights).array() + intercept;
}

RidgeModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha) {
  if (X.rows() != y.size() || X.rows() < 2) throw ValidationError("ridge: need at least two rows with one target each");
  if (!(alpha >= 0)) throw ValidationError("ridge: alpha must be non-negative");
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - mu;
  Eigen::MatrixXd A = Xc.transpose() * Xc;
  A.diagonal().array() += alpha;
  RidgeModel m;
  m.alpha = alpha;
  if (alpha == 0.0 && Eigen::FullPivLU<Eigen::MatrixXd>(A).rank() < A.rows()) {
    throw ValidationError("ridge: singular system with alpha = 0");
  }
  m.weights = A.ldlt().solve(Xc.transpose() * (y.array() - y_mean).matrix());
  m.intercept = y_mean - mu.dot(m.weights);
  return m;
}

double select_ridge_alpha(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const std::vector<double>& grid,
                          int folds, std::uint64_t seed) {
  if (grid.empty()) throw ValidationError("ridge: empty alpha grid");
  const Eigen::Index n = X.rows();
  const int k = std::min<int>(folds, static_cast<int>(n));
  if (k < 2) throw ValidationError("ridge: cross-validation needs at least two rows");
  std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng = make_rng({seed, 0xCF01DULL});
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(n));
  for (std::size_t p = 0; p < perm.size(); ++p) fold[static_cast<std::size_t>(perm[p])] = static_cast<int>(p % static_cast<std::size_t>(k));

  double best_alpha = grid[0], best_mse = std::numeric_limits<double>::infinity();
  for (double alpha : grid) {
    double sse = 0;
    for (int f = 0; f < k; ++f) {
      std::vector<Eigen::Index> tr, te;
      for (Eigen::Index i = 0; i < n; ++i) (fold[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
      if (tr.size() < 2) continue;
      const RidgeModel m = ridge_fit(X(tr, Eigen::all), y(tr), alpha);
      sse += (m.predict(X(te, Eigen::all)) - y(te)).squaredNorm();
    }
    const double mse = sse / static_cast<double>(n);
    if (mse < best_mse) {
      best_mse = mse;
      best_alpha = alpha;
    }
  }
  return best_alpha;
}

namespace {

void check_binary(std::span<const double> scores, std::span<const int> labels, std::size_t& n_pos, std::size_t& n_neg) {
  if (scores.size() != labels.size()) throw ValidationError("scores and labels differ in length");
  n_pos = n_neg = 0;
  for (int l : labels) {
    if (l == 1) ++n_pos;
    else if (l == 0) ++n_neg;
    else throw ValidationError("labels must be 0 or 1");
  }
  if (n_pos == 0 || n_neg == 0) throw ValidationError("ROC metrics need both classes present");
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  std::size_t n_pos = 0, n_neg = 0;
  check_binary(scores, labels, n_pos, n_neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k)
      if (labels[order[k]] == 1) rank_sum += midrank;
    i = j;
  }
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1) / 2) / (np * nn);
}

double partial_auc(std::span<const double> scores, std::span<const int> labels, double fpr_max) {
  if (!(fpr_max > 0 && fpr_max <= 1)) throw ValidationError("partial AUC bound must be in (0,1]");
  std::size_t n_pos = 0, n_neg = 0;
  check_binary(scores, labels, n_pos, n_neg);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double area = 0, fpr = 0, tpr = 0;
  for (std::size_t i = 0; i < order.size() && fpr < fpr_max;) {
    std::size_t j = i, pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == 1 ? pos : neg) += 1;
      ++j;
    }
    const double next_fpr = fpr + static_cast<double>(neg) / static_cast<double>(n_neg);
    const double next_tpr = tpr + static_cast<double>(pos) / static_cast<double>(n_pos);
    if (next_fpr > fpr_max) {
      const double t = (fpr_max - fpr) / (next_fpr - fpr);
      area += (fpr_max - fpr) * (tpr + (tpr + t * (next_tpr - tpr))) / 2;
      fpr = fpr_max;
      break;
    }
    area += (next_fpr - fpr) * (tpr + next_tpr) / 2;
    fpr = next_fpr;
    tpr = next_tpr;
    i = j;
  }
  return area / fpr_max;
}

double mean_absolute_error(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size() || predictions.empty()) throw ValidationError("MAE needs equal, non-empty inputs");
  double s = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += std::abs(predictions[i] - targets[i]);
  return s / static_cast<double>(predictions.size());
}

double smooth_effective_rank(const Eigen::MatrixXd& H) {
  if (H.size() == 0) throw ValidationError("effective rank of an empty matrix");
  const Eigen::VectorXd sigma = Eigen::BDCSVD<Eigen::MatrixXd>(H).singularValues();
  const double total = sigma.sum();
  if (!(total > 0)) throw ValidationError("effective rank of an all-zero matrix is undefined");
  double entropy = 0;
  for (Eigen::Index k = 0; k < sigma.size(); ++k) {
    const double p = sigma(k) / total;
    if (p > 0) entropy -= p * std::log(p);
  }
  return std::exp(entropy);
}

double mean_smooth_effective_rank(const Eigen::MatrixXd& H, std::size_t batch, std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(H.rows());
  if (batch < 2 || n < batch) {
    throw ValidationError("effective rank needs at least one full batch of " + std::to_string(batch) + " rows, have " +
                          std::to_string(n));
  }
  std::vector<Eigen::Index> perm(n);
  std::iota(perm.begin(), perm.end(), Eigen::Index{0});
  Rng rng = make_rng({seed, 0x5E2ULL});
  std::shuffle(perm.begin(), perm.end(), rng);
  double total = 0;
  const std::size_t n_batches = n / batch;
  for (std::size_t b = 0; b < n_batches; ++b) {
    std::vector<Eigen::Index> rows(perm.begin() + static_cast<std::ptrdiff_t>(b * batch),
                                   perm.begin() + static_cast<std::ptrdiff_t>((b + 1) * batch));
    total += smooth_effective_rank(H(rows, Eigen::all));
  }
  return total / static_cast<double>(n_batches);
}

DispersionReport dispersion_ratio(const Eigen::MatrixXd& values, std::span<const int> participant_ids) {
  if (static_cast<std::size_t>(values.rows()) != participant_ids.size()) {
    throw ValidationError("dispersion: one participant id per row required");
  }
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < participant_ids.size(); ++i) groups[participant_ids[i]].push_back(static_cast<Eigen::Index>(i));
  if (groups.size() < 2) throw ValidationError("dispersion needs at least two participants");
  const Eigen::Index D = values.cols();
  const double P = static_cast<double>(groups.size());
  Eigen::MatrixXd means(static_cast<Eigen::Index>(groups.size()), D);
  Eigen::VectorXd within = Eigen::VectorXd::Zero(D);
  Eigen::Index g = 0;
  for (const auto& [pid, rows] : groups) {
    const Eigen::MatrixXd block = values(rows, Eigen::all);
    const Eigen::RowVectorXd mu = block.colwise().mean();
    means.row(g++) = mu;
    within += ((block.rowwise() - mu).array().square().colwise().sum() / static_cast<double>(rows.size())).matrix().transpose();
  }
  within /= P;
  const Eigen::RowVectorXd grand = means.colwise().mean();
  const Eigen::VectorXd across = ((means.rowwise() - grand).array().square().colwise().sum() / P).matrix().transpose();

  DispersionReport r;
  double sum = 0;
  std::size_t finite = 0;
  for (Eigen::Index d = 0; d < D; ++d) {
    double v = std::numeric_limits<double>::infinity();
    if (across(d) >= 1e-12) v = std::sqrt(within(d)) / std::sqrt(across(d));
    r.per_dim.push_back(v);
    if (std::isfinite(v)) {
      sum += v;
      ++finite;
    } else {
      ++r.n_infinite;
    }
  }
  r.mean = finite ? sum / static_cast<double>(finite) : std::numeric_limits<double>::infinity();
  return r;
}

std::string to_string(TaskKind k) { return k == TaskKind::Classification ? "classification" : "regression"; }

void EvalConfig::validate() const {
  for (const auto& t : targets) {
    if (t != "pseudo_age" && t != "pseudo_bmi" && t != "pseudo_sex") {
      throw ValidationError("unknown probe target '" + t + "' (expected pseudo_age|pseudo_bmi|pseudo_sex)");
    }
  }
  if (ridge_grid.empty()) throw ValidationError("eval.ridge_grid must not be empty");
  for (double a : ridge_grid)
    if (!(a > 0)) throw ValidationError("eval.ridge_grid entries must be positive");
  if (cv_folds < 2) throw ValidationError("eval.cv_folds must be >= 2");
  if (ser_batch < 2) throw ValidationError("eval.ser_batch must be >= 2");
  if (test_splits.empty()) throw ValidationError("eval.test_splits must not be empty");
  for (Split s : test_splits)
    if (s == Split::Train) throw ValidationError("eval.test_splits must not include train");
}

std::vector<ReportRow> probe_task(const std::string& target, TaskKind kind, const Eigen::MatrixXd& X_train,
                                  const Eigen::VectorXd& y_train, const Eigen::MatrixXd& X_test,
                                  const Eigen::VectorXd& y_test, const EvalConfig& cfg) {
  if (X_test.rows() == 0) throw ValidationError("probe " + target + ": no test participants");
  const auto n_train = static_cast<std::size_t>(X_train.rows()), n_test = static_cast<std::size_t>(X_test.rows());
  std::vector<int> labels;
  if (kind == TaskKind::Classification) {
    std::size_t pos_train = 0;
    for (Eigen::Index i = 0; i < y_train.size(); ++i) pos_train += y_train(i) > 0.5;
    if (pos_train == 0 || pos_train == n_train) {
      throw ValidationError("probe " + target + ": training labels contain a single class");
    }
    for (Eigen::Index i = 0; i < y_test.size(); ++i) labels.push_back(y_test(i) > 0.5 ? 1 : 0);
    const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (pos == 0 || pos == labels.size()) {
      throw ValidationError("probe " + target + ": test labels contain a single class");
    }
  }
  const double alpha = select_ridge_alpha(X_train, y_train, cfg.ridge_grid, cfg.cv_folds, cfg.seed);
  const Eigen::VectorXd pred = ridge_fit(X_train, y_train, alpha).predict(X_test);
  std::vector<double> p(pred.data(), pred.data() + pred.size());
  std::vector<ReportRow> rows;
  if (kind == TaskKind::Classification) {
    rows.push_back({target, "classification", "auc", roc_auc(p, labels), n_train, n_test, alpha});
    rows.push_back({target, "classification", "pauc", partial_auc(p, labels, 0.1), n_train, n_test, alpha});
  } else {
    std::vector<double> y(y_test.data(), y_test.data() + y_test.size());
    rows.push_back({target, "regression", "mae", mean_absolute_error(p, y), n_train, n_test, alpha});
  }
  return rows;
}

namespace {

double target_value(const ParticipantLatent& p, const std::string& target) {
  if (target == "pseudo_age") return p.pseudo_age;
  if (target == "pseudo_bmi") return p.pseudo_bmi;
  return p.pseudo_sex;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::vector<ReportRow> run_probes(const EmbeddingTable& table, const std::vector<ParticipantLatent>& labels,
                                  const EvalConfig& cfg) {
  cfg.validate();
  const ParticipantMatrix pm = aggregate_by_participant(table);
  std::map<int, const ParticipantLatent*> by_id;
  for (const auto& l : labels) by_id[l.participant_id] = &l;

  std::vector<Eigen::Index> train, test;
  std::vector<const ParticipantLatent*> joined(pm.ids.size(), nullptr);
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < pm.ids.size(); ++i) {
    const auto it = by_id.find(pm.ids[i]);
    if (it == by_id.end()) {
      ++excluded;
      continue;
    }
    joined[i] = it->second;
    const auto row = static_cast<Eigen::Index>(i);
    if (pm.splits[i] == Split::Train) train.push_back(row);
    else if (std::find(cfg.test_splits.begin(), cfg.test_splits.end(), pm.splits[i]) != cfg.test_splits.end()) test.push_back(row);
  }
  if (train.size() < static_cast<std::size_t>(cfg.cv_folds)) {
    throw ValidationError("probes need at least " + std::to_string(cfg.cv_folds) + " labelled training participants");
  }
  const Eigen::MatrixXd X_train = pm.values(train, Eigen::all), X_test = pm.values(test, Eigen::all);

  std::vector<ReportRow> rows;
  rows.push_back({"labels", "join", "excluded_participants", static_cast<double>(excluded), 0, 0, std::nullopt});
  for (const auto& target : cfg.targets) {
    auto values = [&](const std::vector<Eigen::Index>& idx) {
      Eigen::VectorXd y(static_cast<Eigen::Index>(idx.size()));
      for (std::size_t k = 0; k < idx.size(); ++k) y(static_cast<Eigen::Index>(k)) = target_value(*joined[static_cast<std::size_t>(idx[k])], target);
      return y;
    };
    const Eigen::VectorXd y_train = values(train), y_test = values(test);
    double threshold = 0.5;
    if (target != "pseudo_sex") {
      std::vector<double> all;
      for (const auto* p : joined)
        if (p) all.push_back(target_value(*p, target));
      threshold = median(all);
    }
    const Eigen::VectorXd c_train = (y_train.array() > threshold).cast<double>();
    const Eigen::VectorXd c_test = (y_test.array() > threshold).cast<double>();
    for (auto& r : probe_task(target, TaskKind::Classification, X_train, c_train, X_test, c_test, cfg)) rows.push_back(r);
    rows.push_back({target, "classification", "threshold", threshold, train.size(), test.size(), std::nullopt});
    if (target != "pseudo_sex") {
      for (auto& r : probe_task(target, TaskKind::Regression, X_train, y_train, X_test, y_test, cfg)) rows.push_back(r);
    }
  }
  return rows;
}

std::vector<ReportRow> embedding_metrics(const EmbeddingTable& table, const EvalConfig& cfg, bool per_dimension) {
  std::vector<ReportRow> rows;
  const std::size_t n = table.rows.size();
  const double ser = mean_smooth_effective_rank(table.values, static_cast<std::size_t>(cfg.ser_batch), cfg.seed);
  rows.push_back({"embedding", "unsupervised", "smooth_effective_rank", ser, n, 0, std::nullopt});
  rows.push_back({"embedding", "unsupervised", "ser_batch_size", static_cast<double>(cfg.ser_batch), n, 0, std::nullopt});
  std::vector<int> ids;
  for (const auto& r : table.rows) ids.push_back(r.participant_id);
  const DispersionReport d = dispersion_ratio(table.values, ids);
  rows.push_back({"embedding", "unsupervised", "dispersion_ratio", d.mean, n, 0, std::nullopt});
  rows.push_back({"embedding", "unsupervised", "dispersion_infinite_dims", static_cast<double>(d.n_infinite), n, 0, std::nullopt});
  if (per_dimension) {
    for (std::size_t k = 0; k < d.per_dim.size(); ++k) {
      rows.push_back({"dim_" + std::to_string(k), "unsupervised", "dispersion_ratio", d.per_dim[k], n, 0, std::nullopt});
    }
  }
  return rows;
}

EmbeddingTable select_splits(const EmbeddingTable& table, const std::vector<Split>& splits) {
  std::vector<Eigen::Index> keep;
  EmbeddingTable out;
  out.modality = table.modality;
  for (std::size_t i = 0; i < table.rows.size(); ++i) {
    if (std::find(splits.begin(), splits.end(), table.rows[i].split) == splits.end()) continue;
    keep.push_back(static_cast<Eigen::Index>(i));
    out.rows.push_back(table.rows[i]);
  }
  out.values = table.values(keep, Eigen::all);
  return out;
}

std::vector<ReportRow> evaluate_all(Network<float>& net, const Corpus& corpus, const EvalConfig& cfg,
                                    EmbeddingTable* embeddings) {
  const auto& m = corpus.config.modality;
  EmbeddingTable table = embed_corpus(net, corpus, static_cast<std::size_t>(m.channels), m.segment_length());
  std::vector<ReportRow> rows = run_probes(table, corpus.participants, cfg);
  for (auto& r : embedding_metrics(select_splits(table, cfg.test_splits), cfg)) rows.push_back(std::move(r));
  if (embeddings) *embeddings = std::move(table);
  return rows;
}

std::string report_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream os;
  os << "target,task,metric,value,n_train,n_test,alpha\n";
  for (const auto& r : rows) {
    os << r.target << ',' << r.task << ',' << r.metric << ',' << io::format_double(r.value) << ',' << r.n_train << ','
       << r.n_test << ',' << (r.alpha ? io::format_double(*r.alpha) : "") << '\n';
  }
  return os.str();
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != "target,task,metric,value,n_train,n_test,alpha") {
    throw IoError("report: unexpected header");
  }
  auto num = [](const std::string& s) {
    double v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc()) throw IoError("report: malformed number '" + s + "'");
    return v;
  };
  std::vector<ReportRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = io::split_csv_line(line);
    if (f.size() != 7) throw IoError("report: wrong column count");
    ReportRow r{f[0], f[1], f[2], num(f[3]), std::stoul(f[4]), std::stoul(f[5]), std::nullopt};
    if (!f[6].empty()) r.alpha = num(f[6]);
    rows.push_back(r);
  }
  return rows;
}

const ReportRow* find_row(const std::vector<ReportRow>& rows, const std::string& target, const std::string& task,
                          const std::string& metric) {
  for (const auto& r : rows)
    if (r.target == target && r.task == task && r.metric == metric) return &r;
  return nullptr;
}

}  // namespace biofm
