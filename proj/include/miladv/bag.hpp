#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace miladv {

/// Row-major so that each instance is a contiguous row.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// A bag of instances sharing one label. Row j of `instances` is x_j.
struct Bag {
  std::uint64_t id = 0;
  Matrix instances;
  int label = 0;
  /// Ground-truth instance labels; only known for generated data.
  std::optional<std::vector<std::uint8_t>> instance_labels;

  std::size_t size() const { return static_cast<std::size_t>(instances.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(instances.cols()); }
};

struct NormalizationStats {
  Vector min;
  Vector max;
};

struct GenerationConfig {
  std::size_t n_bags = 200;
  std::size_t bag_size_min = 5;
  std::size_t bag_size_max = 10;
  int target_class = 9;
  std::uint64_t seed = 0;
  // Synthetic mode only.
  double positive_bag_fraction = 0.5;
  double cluster_separation = 4.0;
  std::size_t dimension = 10;
  /// A positive bag of size n holds between ceil(f * n) (at least 1) and n
  /// positive instances.
  double min_positive_instance_fraction = 0.5;
};

struct BagDataset {
  std::vector<Bag> bags;
  std::size_t dimension = 0;
  std::optional<NormalizationStats> normalization_stats;
  std::uint64_t seed = 0;

  std::size_t size() const { return bags.size(); }
  bool empty() const { return bags.empty(); }
  std::size_t positives() const;
  std::size_t total_instances() const;
};

/// MIL assumption: positive iff any instance is positive.
int bag_label_from_instances(std::span<const std::uint8_t> instance_labels);

/// Checks n_i >= 1, shared dimension, finite entries and label consistency.
/// Throws DimensionError / FormatError on violation.
void validate(const BagDataset& dataset);

/// Two isotropic unit-variance Gaussians: negatives at the origin, positives
/// shifted by `cluster_separation` along every axis.
BagDataset generate_synthetic_dataset(const GenerationConfig& config);

/// Bags of images sampled uniformly from a labelled pool; a bag is positive
/// iff it holds an image of `config.target_class`.
BagDataset build_image_bags(std::span<const Vector> images, std::span<const int> labels,
                            const GenerationConfig& config);

/// Per-feature min-max scaling over every instance of every bag. Constant
/// features map to 0.
BagDataset normalize(const BagDataset& dataset);

/// Applies previously fitted statistics (e.g. train stats to a test split).
/// Results may fall outside [0, 1].
BagDataset normalize_with(const BagDataset& dataset, const NormalizationStats& stats);

/// B ⊕ ε: adds `epsilon` to every instance. No clipping.
Bag apply_perturbation(const Bag& bag, const Vector& epsilon);

/// Clamps every feature to [0, 1]; used only when exporting images.
Bag clip_unit(const Bag& bag);

}  // namespace miladv
