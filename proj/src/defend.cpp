#include <algorithm>
#include <cmath>

#include "miladv/errors.hpp"
#include "miladv/eval.hpp"
#include "miladv/rng.hpp"

namespace miladv {

AugmentResult adversarial_augment(const BagDataset& dataset, const AttentionMILModel& model, double ratio,
                                  const AttackConfig& config) {
  if (!(ratio >= 0.0 && ratio < 1.0)) throw ConfigError("augmentation ratio must lie in [0, 1)");
  check_compatible(model, dataset);
  AugmentResult out{dataset, {}, 0};
  if (ratio == 0.0 || dataset.empty()) return out;

  // The small slack keeps products such as 0.1 * 200 from rounding up.
  const auto count = static_cast<std::size_t>(std::ceil(ratio * static_cast<double>(dataset.size()) - 1e-9));

  std::vector<std::size_t> correct;
  std::vector<std::size_t> wrong;
  for (std::size_t i = 0; i < dataset.size(); ++i)
    (predict(model, dataset.bags[i]) == dataset.bags[i].label ? correct : wrong).push_back(i);
  Rng rng(derive_seed(config.seed, "augment"));
  std::vector<std::size_t> pick;
  for (auto k : permutation(rng, correct.size())) pick.push_back(correct[k]);
  // Fall back to misclassified bags only when too few are classified correctly.
  for (auto k : permutation(rng, wrong.size())) pick.push_back(wrong[k]);
  pick.resize(count);

  AttackConfig cfg = config;
  cfg.mode = GradientMode::att;
  std::uint64_t next_id = 0;
  for (const auto& b : dataset.bags) next_id = std::max(next_id, b.id + 1);

  for (std::size_t i : pick) {
    const Bag& src = dataset.bags[i];
    const CapResult cap = mi_cap(model, src, cfg);
    Bag adv = apply_perturbation(src, cap.epsilon);
    adv.id = next_id++;
    out.dataset.bags.push_back(std::move(adv));
    out.source_ids.push_back(src.id);
    out.fooled += cap.success;
  }
  return out;
}

std::vector<DefenceRow> defence_experiment(const BagDataset& train_set, const BagDataset& test_set,
                                           const ModelHyper& hyper, const TrainConfig& train_config,
                                           const AttackConfig& attack, const std::vector<double>& ratios) {
  AttackConfig cfg = attack;
  cfg.mode = GradientMode::att;
  const AttentionMILModel init = init_model(train_set.dimension, hyper);
  const AttentionMILModel base = train(init, train_set, train_config).model;

  auto score = [&](const AttentionMILModel& m, double ratio, std::size_t n_adv) {
    DefenceRow row;
    row.ratio = ratio;
    row.n_adversarial = n_adv;
    row.clean_acc = accuracy(m, test_set);
    row.clean_recall = recall(m, test_set);
    const auto eps = mi_cap_dataset(m, test_set, cfg).first;
    row.attacked_acc = accuracy_under(m, test_set, eps);
    row.attacked_recall = recall_under(m, test_set, eps);
    row.decrease = row.clean_acc - row.attacked_acc;
    return row;
  };

  std::vector<DefenceRow> rows;
  for (double ratio : ratios) {
    if (ratio == 0.0) {
      rows.push_back(score(base, 0.0, 0));
      continue;
    }
    const AugmentResult aug = adversarial_augment(train_set, base, ratio, cfg);
    const AttentionMILModel hardened = train(init, aug.dataset, train_config).model;
    rows.push_back(score(hardened, ratio, aug.source_ids.size()));
  }
  return rows;
}

}  // namespace miladv
