#pragma once

#include <filesystem>
#include <vector>

#include <json.hpp>

#include "miladv/attack.hpp"

namespace miladv {

nlohmann::json to_json(const Perturbation& p);
Perturbation perturbation_from_json(const nlohmann::json& j);

/// `<name>.pert.json`
void save_perturbation(const Perturbation& p, const std::filesystem::path& path,
                       const nlohmann::json& repro = nullptr);
Perturbation load_perturbation(const std::filesystem::path& path);

nlohmann::json to_json(const AttackReport& r);

/// Per-bag rows as CSV; `header_comment` lines are prefixed with '#'.
void write_attack_rows_csv(const std::vector<BagAttackRow>& rows, const std::filesystem::path& path,
                           const std::string& header_comment = {});

/// Per-bag customized perturbations: {bags: [{id, epsilon}], ...meta}.
nlohmann::json cap_set_to_json(const BagDataset& dataset, const std::vector<Vector>& eps,
                               const PerturbationMeta& meta);
/// Returns epsilons aligned with `dataset` order, matched by bag id.
std::vector<Vector> cap_set_from_json(const nlohmann::json& j, const BagDataset& dataset);

}  // namespace miladv
