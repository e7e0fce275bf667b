#include "miladv/train.hpp"

#include <cmath>

#include "miladv/errors.hpp"
#include "miladv/rng.hpp"

namespace miladv {

std::string to_string(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd"; }

OptimizerKind parse_optimizer(const std::string& s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ConfigError("unknown optimizer '" + s + "' (expected sgd|adam)");
}

TrainResult train(AttentionMILModel model, const BagDataset& dataset, const TrainConfig& config) {
  if (dataset.empty()) throw ConfigError("cannot train on an empty dataset");
  if (config.epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  check_compatible(model, dataset);

  Rng rng(config.seed);
  auto& params = model.params;
  Parameters grad = params.zeros_like();
  Parameters m1 = params.zeros_like();
  Parameters m2 = params.zeros_like();
  std::uint64_t step = 0;

  TrainResult result;
  result.epoch_loss.reserve(config.epochs);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    double total = 0.0;
    for (std::size_t i : permutation(rng, dataset.size())) {
      const Bag& bag = dataset.bags[i];
      Parameters::zip([](auto& g) { g.setZero(); }, grad);
      const double loss = loss_and_gradient(model, bag, grad);
      if (!std::isfinite(loss))
        throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1) + ", bag " +
                            std::to_string(bag.id));
      total += loss;
      ++step;

      if (config.optimizer == OptimizerKind::sgd) {
        Parameters::zip([&](auto& w, const auto& g) { w -= config.learning_rate * g; }, params, grad);
      } else {
        const double b1 = config.adam_beta1;
        const double b2 = config.adam_beta2;
        const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
        const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
        Parameters::zip(
            [&](auto& w, const auto& g, auto& m, auto& v) {
              m = b1 * m + (1.0 - b1) * g;
              v = b2 * v + (1.0 - b2) * g.cwiseProduct(g);
              w.array() -= config.learning_rate * (m.array() / c1) /
                           ((v.array() / c2).sqrt() + config.adam_eps);
            },
            params, grad, m1, m2);
      }
    }
    result.epoch_loss.push_back(total / static_cast<double>(dataset.size()));
  }
  result.model = std::move(model);
  return result;
}

}  // namespace miladv
