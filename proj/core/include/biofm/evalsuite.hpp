#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "biofm/corpus.hpp"
#include "biofm/encoder.hpp"

namespace biofm {

struct EmbeddingRow {
  int segment_id = 0;
  int participant_id = 0;
  Split split = Split::Train;
};

struct EmbeddingTable {
  std::string modality;
  std::vector<EmbeddingRow> rows;
  Eigen::MatrixXd values;  // rows x dim

  std::size_t dim() const { return static_cast<std::size_t>(values.cols()); }
};

// Embeds every segment (or only `split`) with the network in eval mode.
// Throws ValidationError if the corpus shape differs from `expected_channels` x `expected_length`.
EmbeddingTable embed_corpus(Network<float>& net, const Corpus& corpus, std::size_t expected_channels,
                            std::size_t expected_length, std::optional<Split> split = std::nullopt);

// embeddings.bin (float32 LE, row-major), index.csv and manifest.json.
void write_embeddings(const EmbeddingTable& table, const std::filesystem::path& dir);
EmbeddingTable read_embeddings(const std::filesystem::path& dir);

struct ParticipantMatrix {
  std::vector<int> ids;
  std::vector<Split> splits;
  Eigen::MatrixXd values;  // mean embedding per participant
};

ParticipantMatrix aggregate_by_participant(const EmbeddingTable& table);

struct RidgeModel {
  Eigen::VectorXd weights;
  double intercept = 0;
  double alpha = 0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

// Minimizes ||y - b - X w||^2 + alpha ||w||^2 with an unpenalized intercept.
RidgeModel ridge_fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double alpha);

// Grid value with the lowest K-fold validation MSE; ties go to the earlier grid entry.
double select_ridge_alpha(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                          const std::vector<double>& grid, int folds, std::uint64_t seed);

// Probability that a random positive outscores a random negative (ties count 1/2).
double roc_auc(std::span<const double> scores, std::span<const int> labels);
// Area under the ROC curve for FPR in [0, fpr_max], divided by fpr_max.
double partial_auc(std::span<const double> scores, std::span<const int> labels, double fpr_max = 0.1);
double mean_absolute_error(std::span<const double> predictions, std::span<const double> targets);

// exp of the Shannon entropy of the normalized singular value spectrum.
double smooth_effective_rank(const Eigen::MatrixXd& H);
// Rows are shuffled with `seed` and cut into consecutive batches of `batch`
// rows (a trailing partial batch is dropped); returns the mean over batches.
double mean_smooth_effective_rank(const Eigen::MatrixXd& H, std::size_t batch, std::uint64_t seed);

struct DispersionReport {
  std::vector<double> per_dim;  // +inf where participant means do not vary
  double mean = 0;              // over finite entries
  std::size_t n_infinite = 0;
};

// Per dimension: sqrt(mean within-participant variance) / sqrt(variance of
// participant means), population variances.
DispersionReport dispersion_ratio(const Eigen::MatrixXd& values, std::span<const int> participant_ids);

enum class TaskKind { Classification, Regression };
std::string to_string(TaskKind k);

struct EvalConfig {
  std::vector<std::string> targets = {"pseudo_age", "pseudo_bmi", "pseudo_sex"};
  std::vector<double> ridge_grid = {0.01, 0.1, 1.0, 10.0, 100.0};
  int cv_folds = 5;
  int ser_batch = 64;
  std::vector<Split> test_splits = {Split::Val, Split::Test};
  std::uint64_t seed = 0;

  void validate() const;
};

struct ReportRow {
  std::string target, task, metric;
  double value = 0;
  std::size_t n_train = 0, n_test = 0;
  std::optional<double> alpha;
};

// Ridge probe from X_train to y_train, scored on the test rows. Classification
// labels are 0/1 and scored by AUC and pAUC of the continuous prediction;
// regression is scored by MAE.
std::vector<ReportRow> probe_task(const std::string& target, TaskKind kind, const Eigen::MatrixXd& X_train,
                                  const Eigen::VectorXd& y_train, const Eigen::MatrixXd& X_test,
                                  const Eigen::VectorXd& y_test, const EvalConfig& cfg);

// Participant-level probes for every configured target. Participants without a
// label row are excluded and counted in the report.
std::vector<ReportRow> run_probes(const EmbeddingTable& table, const std::vector<ParticipantLatent>& labels,
                                  const EvalConfig& cfg);

// Unsupervised metrics: mean smooth effective rank and dispersion ratio.
std::vector<ReportRow> embedding_metrics(const EmbeddingTable& table, const EvalConfig& cfg,
                                         bool per_dimension = false);

// Embeds the corpus, runs every probe and computes the unsupervised metrics on
// the rows of the evaluation splits.
std::vector<ReportRow> evaluate_all(Network<float>& net, const Corpus& corpus, const EvalConfig& cfg,
                                    EmbeddingTable* embeddings = nullptr);

// Rows of the given splits only.
EmbeddingTable select_splits(const EmbeddingTable& table, const std::vector<Split>& splits);

std::string report_csv(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(const std::string& text);
const ReportRow* find_row(const std::vector<ReportRow>& rows, const std::string& target,
                          const std::string& task, const std::string& metric);

}  // namespace biofm
