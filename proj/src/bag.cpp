#include "miladv/bag.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "miladv/errors.hpp"
#include "miladv/rng.hpp"

namespace miladv {

std::size_t BagDataset::positives() const {
  return static_cast<std::size_t>(
      std::count_if(bags.begin(), bags.end(), [](const Bag& b) { return b.label == 1; }));
}

std::size_t BagDataset::total_instances() const {
  std::size_t n = 0;
  for (const auto& b : bags) n += b.size();
  return n;
}

int bag_label_from_instances(std::span<const std::uint8_t> instance_labels) {
  if (instance_labels.empty()) throw Error("empty bag");
  return std::any_of(instance_labels.begin(), instance_labels.end(),
                     [](std::uint8_t v) { return v == 1; })
             ? 1
             : 0;
}

void validate(const BagDataset& dataset) {
  if (dataset.dimension < 1) throw DimensionError("dataset dimension must be >= 1");
  for (const auto& bag : dataset.bags) {
    const std::string where = "bag " + std::to_string(bag.id);
    if (bag.size() < 1) throw DimensionError(where + ": empty bag");
    if (bag.dim() != dataset.dimension)
      throw DimensionError(where + ": dimension " + std::to_string(bag.dim()) + " != " +
                           std::to_string(dataset.dimension));
    if (!bag.instances.allFinite()) throw FormatError(where + ": non-finite feature");
    if (bag.label != 0 && bag.label != 1) throw FormatError(where + ": label must be 0 or 1");
    if (bag.instance_labels) {
      if (bag.instance_labels->size() != bag.size())
        throw FormatError(where + ": instance label count mismatch");
      if (bag_label_from_instances(*bag.instance_labels) != bag.label)
        throw FormatError(where + ": bag label inconsistent with instance labels");
    }
  }
}

namespace {

void check_sizes(const GenerationConfig& c) {
  if (c.n_bags < 2) throw ConfigError("n_bags must be >= 2");
  if (c.bag_size_min < 1) throw ConfigError("bag_size_min must be >= 1");
  if (c.bag_size_min > c.bag_size_max) throw ConfigError("bag_size_min > bag_size_max");
}

std::size_t draw_size(Rng& rng, const GenerationConfig& c) {
  return static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(c.bag_size_min),
                                              static_cast<std::int64_t>(c.bag_size_max)));
}

}  // namespace

BagDataset generate_synthetic_dataset(const GenerationConfig& config) {
  check_sizes(config);
  if (!(config.positive_bag_fraction > 0.0 && config.positive_bag_fraction < 1.0))
    throw ConfigError("positive_bag_fraction must lie in (0, 1)");
  if (!(config.cluster_separation > 0.0)) throw ConfigError("cluster_separation must be > 0");
  if (config.dimension < 1) throw ConfigError("dimension must be >= 1");
  if (!(config.min_positive_instance_fraction >= 0.0 && config.min_positive_instance_fraction <= 1.0))
    throw ConfigError("min_positive_instance_fraction must lie in [0, 1]");

  Rng rng(config.seed);
  const std::size_t n = config.n_bags;
  const auto n_pos = static_cast<std::size_t>(std::llround(config.positive_bag_fraction * n));

  std::vector<int> labels(n, 0);
  std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n_pos), 1);
  const auto order = permutation(rng, n);

  BagDataset ds;
  ds.dimension = config.dimension;
  ds.seed = config.seed;
  ds.bags.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Bag bag;
    bag.id = i;
    bag.label = labels[order[i]];
    const std::size_t size = draw_size(rng, config);
    std::vector<std::uint8_t> inst(size, 0);
    if (bag.label == 1) {
      const auto lo = std::max<std::int64_t>(
          1, static_cast<std::int64_t>(std::ceil(config.min_positive_instance_fraction * static_cast<double>(size))));
      const auto k = static_cast<std::size_t>(uniform_int(rng, lo, static_cast<std::int64_t>(size)));
      for (auto j : sample_without_replacement(rng, size, k)) inst[j] = 1;
    }
    bag.instances.resize(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(config.dimension));
    for (std::size_t j = 0; j < size; ++j) {
      const double shift = inst[j] ? config.cluster_separation : 0.0;
      for (std::size_t f = 0; f < config.dimension; ++f)
        bag.instances(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(f)) =
            shift + standard_normal(rng);
    }
    bag.instance_labels = std::move(inst);
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

BagDataset build_image_bags(std::span<const Vector> images, std::span<const int> labels,
                            const GenerationConfig& config) {
  check_sizes(config);
  if (images.size() != labels.size())
    throw DimensionError("image and label counts differ: " + std::to_string(images.size()) +
                         " vs " + std::to_string(labels.size()));
  if (images.empty()) throw ConfigError("empty image pool");
  if (config.bag_size_max > images.size())
    throw ConfigError("bag_size_max exceeds the image pool size");
  if (std::find(labels.begin(), labels.end(), config.target_class) == labels.end())
    throw ConfigError("no image of target class " + std::to_string(config.target_class) +
                      " in the pool; positive bags cannot be formed");

  const auto d = static_cast<std::size_t>(images.front().size());
  for (const auto& img : images)
    if (static_cast<std::size_t>(img.size()) != d) throw DimensionError("images differ in length");

  Rng rng(config.seed);
  BagDataset ds;
  ds.dimension = d;
  ds.seed = config.seed;
  ds.bags.reserve(config.n_bags);
  for (std::size_t i = 0; i < config.n_bags; ++i) {
    Bag bag;
    bag.id = i;
    const std::size_t size = draw_size(rng, config);
    const auto picks = sample_without_replacement(rng, images.size(), size);
    bag.instances.resize(static_cast<Eigen::Index>(size), static_cast<Eigen::Index>(d));
    std::vector<std::uint8_t> inst(size);
    for (std::size_t j = 0; j < size; ++j) {
      bag.instances.row(static_cast<Eigen::Index>(j)) = images[picks[j]].transpose();
      inst[j] = labels[picks[j]] == config.target_class ? 1 : 0;
    }
    bag.label = bag_label_from_instances(inst);
    bag.instance_labels = std::move(inst);
    ds.bags.push_back(std::move(bag));
  }
  return ds;
}

BagDataset normalize(const BagDataset& dataset) {
  if (dataset.empty()) throw ConfigError("cannot normalize an empty dataset");
  const auto d = static_cast<Eigen::Index>(dataset.dimension);
  NormalizationStats stats{Vector::Constant(d, std::numeric_limits<double>::infinity()),
                           Vector::Constant(d, -std::numeric_limits<double>::infinity())};
  for (const auto& bag : dataset.bags) {
    stats.min = stats.min.cwiseMin(bag.instances.colwise().minCoeff().transpose());
    stats.max = stats.max.cwiseMax(bag.instances.colwise().maxCoeff().transpose());
  }
  return normalize_with(dataset, stats);
}

BagDataset normalize_with(const BagDataset& dataset, const NormalizationStats& stats) {
  const auto d = static_cast<Eigen::Index>(dataset.dimension);
  if (stats.min.size() != d || stats.max.size() != d)
    throw DimensionError("normalization stats do not match dataset dimension");
  Vector scale(d);
  for (Eigen::Index f = 0; f < d; ++f) {
    const double range = stats.max[f] - stats.min[f];
    scale[f] = range > 0.0 ? 1.0 / range : 0.0;
  }
  BagDataset out = dataset;
  for (auto& bag : out.bags) {
    for (Eigen::Index j = 0; j < bag.instances.rows(); ++j)
      bag.instances.row(j) =
          ((bag.instances.row(j).transpose() - stats.min).array() * scale.array()).transpose();
  }
  out.normalization_stats = stats;
  return out;
}

Bag apply_perturbation(const Bag& bag, const Vector& epsilon) {
  if (static_cast<std::size_t>(epsilon.size()) != bag.dim())
    throw DimensionError("perturbation dimension " + std::to_string(epsilon.size()) +
                         " != bag dimension " + std::to_string(bag.dim()));
  Bag out = bag;
  out.instances.rowwise() += epsilon.transpose();
  return out;
}

Bag clip_unit(const Bag& bag) {
  Bag out = bag;
  out.instances = out.instances.cwiseMax(0.0).cwiseMin(1.0);
  return out;
}

}  // namespace miladv
