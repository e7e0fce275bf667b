#include "miladv/dataset_io.hpp"

#include <fstream>

#include "binary_io.hpp"
#include "miladv/errors.hpp"
#include "miladv/repro.hpp"

namespace miladv {

using detail::read_le;
using detail::write_le;

void save_bags(const BagDataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(path.string() + ": cannot write");
  out.write("MILB", 4);
  write_le<std::uint32_t>(out, kBagsVersion);
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.size()));
  write_le<std::uint32_t>(out, static_cast<std::uint32_t>(dataset.dimension));
  for (const auto& bag : dataset.bags) {
    write_le<std::uint64_t>(out, bag.id);
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(bag.label));
    write_le<std::uint8_t>(out, bag.instance_labels ? 1 : 0);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(bag.size()));
    for (Eigen::Index j = 0; j < bag.instances.rows(); ++j)
      for (Eigen::Index f = 0; f < bag.instances.cols(); ++f) write_le<double>(out, bag.instances(j, f));
    if (bag.instance_labels)
      for (auto v : *bag.instance_labels) write_le<std::uint8_t>(out, v);
  }
  if (!out) throw Error(path.string() + ": write failed");
}

BagDataset load_bags(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  const std::string name = path.string();
  if (!in) throw FormatError(name + ": cannot open");
  detail::expect_magic(in, "MILB", name);
  const auto version = read_le<std::uint32_t>(in, name);
  if (version != kBagsVersion)
    throw FormatError(name + " @ offset 4: unsupported version " + std::to_string(version));
  const auto n = read_le<std::uint32_t>(in, name);
  const auto d = read_le<std::uint32_t>(in, name);

  BagDataset ds;
  ds.dimension = d;
  ds.bags.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) {
    Bag bag;
    bag.id = read_le<std::uint64_t>(in, name);
    bag.label = read_le<std::uint8_t>(in, name);
    const auto has_inst = read_le<std::uint8_t>(in, name);
    const auto size = read_le<std::uint32_t>(in, name);
    bag.instances.resize(size, d);
    for (std::uint32_t j = 0; j < size; ++j)
      for (std::uint32_t f = 0; f < d; ++f) bag.instances(j, f) = read_le<double>(in, name);
    if (has_inst) {
      std::vector<std::uint8_t> inst(size);
      for (auto& v : inst) v = read_le<std::uint8_t>(in, name);
      bag.instance_labels = std::move(inst);
    }
    ds.bags.push_back(std::move(bag));
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw FormatError(name + " @ offset " + std::to_string(static_cast<long long>(in.tellg())) +
                      ": trailing bytes");
  validate(ds);
  return ds;
}

std::filesystem::path manifest_path_for(const std::filesystem::path& bags_path) {
  auto p = bags_path;
  p.replace_extension(".manifest.json");
  return p;
}

namespace {

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector from_json(const nlohmann::json& j) {
  const auto xs = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

}  // namespace

nlohmann::json make_manifest(const BagDataset& dataset, const nlohmann::json& generation) {
  nlohmann::json m;
  m["n_bags"] = dataset.size();
  m["dimension"] = dataset.dimension;
  m["positives"] = dataset.positives();
  m["total_instances"] = dataset.total_instances();
  m["seed"] = dataset.seed;
  m["generation"] = generation;
  if (dataset.normalization_stats)
    m["normalization_stats"] = {{"min", to_std(dataset.normalization_stats->min)},
                                {"max", to_std(dataset.normalization_stats->max)}};
  else
    m["normalization_stats"] = nullptr;
  return m;
}

BagDataset load_dataset(const std::filesystem::path& bags_path) {
  auto ds = load_bags(bags_path);
  const auto mp = manifest_path_for(bags_path);
  if (std::filesystem::exists(mp)) {
    const auto m = read_json(mp);
    if (m.contains("seed")) ds.seed = m["seed"].get<std::uint64_t>();
    if (m.contains("normalization_stats") && m["normalization_stats"].is_object())
      ds.normalization_stats = NormalizationStats{from_json(m["normalization_stats"]["min"]),
                                                  from_json(m["normalization_stats"]["max"])};
  }
  return ds;
}

}  // namespace miladv
