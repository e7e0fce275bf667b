#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "miladv/attack.hpp"
#include "miladv/train.hpp"

namespace miladv {

struct MetricRow {
  std::string dataset;
  std::string model;
  std::string perturbation = "none";
  double xi = 0.0;
  std::string mode = "-";
  double acc = 0.0;
  double recall = 0.0;
  double decrease = 0.0;
  double fooling_rate = 0.0;
  std::uint64_t seed = 0;
};

/// Fraction of bags whose prediction equals the label. Throws on empty input.
double accuracy(const AttentionMILModel& model, const BagDataset& dataset);
double accuracy_under(const AttentionMILModel& model, const BagDataset& dataset, const Vector& epsilon);
double accuracy_under(const AttentionMILModel& model, const BagDataset& dataset,
                      std::span<const Vector> per_bag);

/// True positives over positives. Throws if the dataset has no positive bag.
double recall(const AttentionMILModel& model, const BagDataset& dataset);
double recall_under(const AttentionMILModel& model, const BagDataset& dataset, const Vector& epsilon);
double recall_under(const AttentionMILModel& model, const BagDataset& dataset,
                    std::span<const Vector> per_bag);

/// Clean accuracy minus accuracy on the perturbed bags.
double decrease(const AttentionMILModel& model, const BagDataset& dataset, const Vector& epsilon);
double decrease(const AttentionMILModel& model, const BagDataset& dataset, std::span<const Vector> per_bag);

/// One row per xi; xi == 0 is the unperturbed baseline. `base` supplies every
/// attack setting except xi.
std::vector<MetricRow> xi_sweep(const AttentionMILModel& model, const BagDataset& dataset,
                                PerturbationAlgorithm algorithm, const std::vector<double>& xis,
                                const AttackConfig& base, const std::string& dataset_id = "data",
                                const std::string& model_id = "model");

struct TransferMatrix {
  std::vector<std::string> sources;
  std::vector<std::string> targets;
  Matrix cells;  // cells(s, t): decrease of target t under source s's universal perturbation
  std::vector<Perturbation> perturbations;
  std::vector<double> source_fooling_rates;
};

TransferMatrix transfer_matrix(std::span<const AttentionMILModel> models, std::span<const std::string> ids,
                               const BagDataset& dataset, const AttackConfig& config);

struct AttentionSummary {
  std::vector<double> bin_centers;
  std::vector<std::size_t> counts;
  std::vector<double> kde_x;
  std::vector<double> kde_density;
  double bandwidth = 0.0;
};

/// Fixed-width histogram on [0, 1] plus a Gaussian KDE with Silverman's
/// bandwidth, evaluated on `grid_points` evenly spaced points of [0, 1].
AttentionSummary attention_summary(std::span<const double> values, std::size_t bins = 50,
                                   std::size_t grid_points = 201);

struct AugmentResult {
  BagDataset dataset;
  std::vector<std::uint64_t> source_ids;  // original bag behind each appended bag
  std::size_t fooled = 0;                 // appended bags whose perturbation flipped the model
};

/// Appends ceil(ratio * N) MI-CAP("att") perturbed copies of clean-correct
/// bags, keeping their original labels. ratio must lie in [0, 1).
AugmentResult adversarial_augment(const BagDataset& dataset, const AttentionMILModel& model, double ratio,
                                  const AttackConfig& config);

struct DefenceRow {
  double ratio = 0.0;
  std::size_t n_adversarial = 0;
  double clean_acc = 0.0;
  double clean_recall = 0.0;
  double attacked_acc = 0.0;
  double attacked_recall = 0.0;
  double decrease = 0.0;
};

/// Trains on `train_set` (ratio 0), then for each positive ratio augments
/// with adversarial bags from that baseline model and retrains from the same
/// initialisation. Each model is scored on `test_set` clean and under a
/// white-box MI-CAP("att") attack at `attack.xi`.
std::vector<DefenceRow> defence_experiment(const BagDataset& train_set, const BagDataset& test_set,
                                           const ModelHyper& hyper, const TrainConfig& train_config,
                                           const AttackConfig& attack, const std::vector<double>& ratios);

void write_metric_rows_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path,
                           const std::string& header_comment = {});
void write_transfer_csv(const TransferMatrix& m, const std::filesystem::path& path,
                        const std::string& header_comment = {});
void write_histogram_csv(const AttentionSummary& s, const std::filesystem::path& path,
                         const std::string& header_comment = {});
void write_kde_csv(const AttentionSummary& s, const std::filesystem::path& path,
                   const std::string& header_comment = {});
void write_defence_csv(const std::vector<DefenceRow>& rows, const std::filesystem::path& path,
                       const std::string& header_comment = {});

/// Shortest decimal form that round-trips.
std::string format_double(double v);

}  // namespace miladv
