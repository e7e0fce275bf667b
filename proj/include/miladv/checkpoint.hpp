#pragma once

#include <filesystem>

#include <json.hpp>

#include "miladv/model.hpp"

namespace miladv {

inline constexpr std::uint32_t kModelVersion = 1;

/// Binary `.milmodel`: magic "MILM", version, variant, d, h, a (u32 LE), then
/// every parameter as LE f64 in declaration order, row-major.
void save_model(const AttentionMILModel& model, const std::filesystem::path& path);
AttentionMILModel load_model(const std::filesystem::path& path);

/// `<stem>.model.json` next to a `.milmodel`.
std::filesystem::path model_json_path_for(const std::filesystem::path& model_path);

}  // namespace miladv
