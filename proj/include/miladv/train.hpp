#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miladv/model.hpp"

namespace miladv {

enum class OptimizerKind { sgd, adam };

std::string to_string(OptimizerKind k);
OptimizerKind parse_optimizer(const std::string& s);

struct TrainConfig {
  std::size_t epochs = 50;
  double learning_rate = 1e-4;
  OptimizerKind optimizer = OptimizerKind::adam;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  /// Seeds the per-epoch bag shuffle.
  std::uint64_t seed = 0;
};

struct TrainResult {
  AttentionMILModel model;
  std::vector<double> epoch_loss;  // mean NLL per epoch
};

/// One bag per optimisation step, bag order reshuffled every epoch.
/// Throws TrainingError on a non-finite loss, naming epoch and bag id.
TrainResult train(AttentionMILModel model, const BagDataset& dataset, const TrainConfig& config);

}  // namespace miladv
