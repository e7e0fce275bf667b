#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "miladv/model.hpp"

namespace miladv {

enum class GradientMode { ave, att };
enum class ProjectionNorm { l2, linf };
enum class PerturbationAlgorithm { cap, uap, random, mean };

std::string to_string(GradientMode m);
std::string to_string(ProjectionNorm n);
std::string to_string(PerturbationAlgorithm a);
GradientMode parse_mode(const std::string& s);
ProjectionNorm parse_norm(const std::string& s);
PerturbationAlgorithm parse_algorithm(const std::string& s);

struct AttackConfig {
  std::size_t max_inner = 10;  // L1
  std::size_t max_epochs = 50; // L2
  double delta = 0.5;          // fooling-rate threshold
  double xi = std::numeric_limits<double>::infinity();
  double eta = 1e-8;
  /// Each step is scaled by (1 + overshoot) so that a step landing exactly
  /// on the decision boundary still crosses it.
  double overshoot = 0.02;
  GradientMode mode = GradientMode::ave;
  ProjectionNorm norm = ProjectionNorm::l2;
  std::uint64_t seed = 0;
  bool shuffle_each_epoch = false;

  /// Throws ConfigError unless L1, L2 >= 1, delta in (0,1], xi > 0, eta > 0,
  /// overshoot >= 0.
  void validate() const;
};

struct PerturbationMeta {
  PerturbationAlgorithm algorithm = PerturbationAlgorithm::uap;
  GradientMode mode = GradientMode::ave;
  ProjectionNorm norm = ProjectionNorm::l2;
  double xi = std::numeric_limits<double>::infinity();
  std::string source_model;
  std::uint64_t seed = 0;
  double norm_l2 = 0.0;
  double norm_linf = 0.0;
};

struct Perturbation {
  Vector epsilon;
  PerturbationMeta meta;

  /// Recomputes the cached norms from `epsilon`.
  void refresh_norms();
};

struct BagAttackRow {
  std::uint64_t bag_id = 0;
  int label = 0;
  int clean_prediction = 0;
  int perturbed_prediction = 0;
  bool fooled = false;
  std::size_t iterations = 0;
  double epsilon_l2 = 0.0;  // per-bag perturbation norm (cap only)
};

struct AttackReport {
  double fooling_rate = 0.0;
  std::vector<BagAttackRow> per_bag;
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  std::size_t skipped_zero_increments = 0;
  bool no_clean_correct = false;
  std::vector<double> epoch_rates;  // uap only
};

/// Result of one customized attack.
struct CapResult {
  Vector epsilon;
  std::size_t iterations = 0;
  bool success = false;
  int clean_prediction = 0;
  int perturbed_prediction = 0;
};

/// `ave`: mean of the rows. `att`: the row of the highest-attention instance.
Vector aggregate_gradient(const GradientMatrix& grad, GradientMode mode, const ForwardTrace& trace);

/// w = g_cur - g_prev; returns |p_tau - p_hat| * w / (||w||^2 + eta).
Vector deepfool_step(const Vector& g_cur, const Vector& g_prev, double p_tau, double p_hat, double eta);

/// Euclidean projection onto the xi-ball of the chosen norm.
Vector project(const Vector& epsilon, double xi, ProjectionNorm norm);

/// Customized perturbation for one bag. Iterates until the prediction differs
/// from the clean one or L1 steps are used, then projects onto the xi-ball
/// when xi is finite. `success` is judged on the returned epsilon.
CapResult mi_cap(const AttentionMILModel& model, const Bag& bag, const AttackConfig& config);

/// Runs mi_cap on every bag; report rows follow dataset order.
std::pair<std::vector<Vector>, AttackReport> mi_cap_dataset(const AttentionMILModel& model,
                                                            const BagDataset& dataset,
                                                            const AttackConfig& config);

/// Universal perturbation. Returns the highest-fooling-rate epsilon seen.
std::pair<Perturbation, AttackReport> mi_uap(const AttentionMILModel& model, const BagDataset& dataset,
                                             const AttackConfig& config);

/// Flipped clean-correct bags over clean-correct bags; 0 when there are none.
double fooling_rate(const AttentionMILModel& model, const BagDataset& dataset, const Vector& epsilon);

/// `random`: uniform in [-1,1]^d, then projected. `mean`: constant vector on
/// the ball boundary (xi/sqrt(d) per component for L2, xi for Linf).
Perturbation baseline_perturbation(PerturbationAlgorithm kind, std::size_t dim, double xi,
                                   std::uint64_t seed, ProjectionNorm norm = ProjectionNorm::l2);

/// Fooling rate recomputed from report rows.
double fooling_rate_from_rows(const std::vector<BagAttackRow>& rows);

}  // namespace miladv
