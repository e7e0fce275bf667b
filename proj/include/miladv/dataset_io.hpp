#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "miladv/bag.hpp"

namespace miladv {

inline constexpr std::uint32_t kBagsVersion = 1;

/// Writes the binary `.bags` container.
void save_bags(const BagDataset& dataset, const std::filesystem::path& path);

/// Reads a `.bags` container. Normalization stats and seed come from the
/// manifest, so they are left unset here.
BagDataset load_bags(const std::filesystem::path& path);

/// `<stem>.manifest.json` next to a `.bags` file.
std::filesystem::path manifest_path_for(const std::filesystem::path& bags_path);

nlohmann::json make_manifest(const BagDataset& dataset, const nlohmann::json& generation);

/// Loads `.bags` plus the sibling manifest when present.
BagDataset load_dataset(const std::filesystem::path& bags_path);

}  // namespace miladv
