#include "miladv/perturbation_io.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <unordered_map>

#include "miladv/errors.hpp"
#include "miladv/repro.hpp"

namespace miladv {

namespace {

// JSON has no infinity; an unbounded xi is written as null.
nlohmann::json xi_to_json(double xi) { return std::isinf(xi) ? nlohmann::json(nullptr) : nlohmann::json(xi); }

double xi_from_json(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::infinity() : j.get<double>();
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_vector(const std::vector<double>& xs) {
  return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

void meta_to_json(nlohmann::json& j, const PerturbationMeta& m) {
  j["algorithm"] = to_string(m.algorithm);
  j["mode"] = to_string(m.mode);
  j["xi"] = xi_to_json(m.xi);
  j["projection_norm"] = to_string(m.norm);
  j["source_model"] = m.source_model;
  j["seed"] = m.seed;
}

PerturbationMeta meta_from_json(const nlohmann::json& j) {
  PerturbationMeta m;
  m.algorithm = parse_algorithm(j.at("algorithm").get<std::string>());
  m.mode = parse_mode(j.at("mode").get<std::string>());
  m.xi = xi_from_json(j.at("xi"));
  m.norm = parse_norm(j.at("projection_norm").get<std::string>());
  m.source_model = j.value("source_model", "");
  m.seed = j.value("seed", std::uint64_t{0});
  return m;
}

}  // namespace

nlohmann::json to_json(const Perturbation& p) {
  nlohmann::json j;
  j["d"] = p.epsilon.size();
  j["epsilon"] = to_std(p.epsilon);
  meta_to_json(j, p.meta);
  j["norm_l2"] = p.meta.norm_l2;
  j["norm_linf"] = p.meta.norm_linf;
  return j;
}

Perturbation perturbation_from_json(const nlohmann::json& j) {
  try {
    Perturbation p;
    p.epsilon = to_vector(j.at("epsilon").get<std::vector<double>>());
    if (static_cast<std::size_t>(p.epsilon.size()) != j.at("d").get<std::size_t>())
      throw FormatError("perturbation: d does not match epsilon length");
    p.meta = meta_from_json(j);
    p.refresh_norms();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("perturbation: ") + e.what());
  }
}

void save_perturbation(const Perturbation& p, const std::filesystem::path& path, const nlohmann::json& repro) {
  auto j = to_json(p);
  if (!repro.is_null()) j["repro"] = repro;
  write_json(path, j);
}

Perturbation load_perturbation(const std::filesystem::path& path) {
  return perturbation_from_json(read_json(path));
}

nlohmann::json to_json(const AttackReport& r) {
  nlohmann::json j;
  j["fooling_rate"] = r.fooling_rate;
  j["epochs_run"] = r.epochs_run;
  j["best_epoch"] = r.best_epoch;
  j["skipped_zero_increments"] = r.skipped_zero_increments;
  j["no_clean_correct"] = r.no_clean_correct;
  j["epoch_rates"] = r.epoch_rates;
  auto& rows = j["per_bag"] = nlohmann::json::array();
  for (const auto& b : r.per_bag)
    rows.push_back({{"bag_id", b.bag_id},
                    {"label", b.label},
                    {"clean_prediction", b.clean_prediction},
                    {"perturbed_prediction", b.perturbed_prediction},
                    {"fooled", b.fooled},
                    {"iterations", b.iterations},
                    {"epsilon_l2", b.epsilon_l2}});
  return j;
}

void write_attack_rows_csv(const std::vector<BagAttackRow>& rows, const std::filesystem::path& path,
                           const std::string& header_comment) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot write");
  if (!header_comment.empty()) out << "# " << header_comment << '\n';
  out << "bag_id,label,clean_prediction,perturbed_prediction,fooled,iterations,epsilon_l2\n";
  out.precision(17);
  for (const auto& b : rows)
    out << b.bag_id << ',' << b.label << ',' << b.clean_prediction << ',' << b.perturbed_prediction << ','
        << (b.fooled ? 1 : 0) << ',' << b.iterations << ',' << b.epsilon_l2 << '\n';
}

nlohmann::json cap_set_to_json(const BagDataset& dataset, const std::vector<Vector>& eps,
                               const PerturbationMeta& meta) {
  if (eps.size() != dataset.size()) throw DimensionError("one perturbation per bag required");
  nlohmann::json j;
  j["d"] = dataset.dimension;
  meta_to_json(j, meta);
  auto& bags = j["bags"] = nlohmann::json::array();
  for (std::size_t i = 0; i < eps.size(); ++i)
    bags.push_back({{"id", dataset.bags[i].id}, {"norm_l2", eps[i].norm()}, {"epsilon", to_std(eps[i])}});
  return j;
}

std::vector<Vector> cap_set_from_json(const nlohmann::json& j, const BagDataset& dataset) {
  std::unordered_map<std::uint64_t, Vector> by_id;
  for (const auto& b : j.at("bags"))
    by_id.emplace(b.at("id").get<std::uint64_t>(), to_vector(b.at("epsilon").get<std::vector<double>>()));
  std::vector<Vector> out;
  out.reserve(dataset.size());
  for (const auto& bag : dataset.bags) {
    auto it = by_id.find(bag.id);
    if (it == by_id.end()) throw FormatError("no customized perturbation for bag " + std::to_string(bag.id));
    if (static_cast<std::size_t>(it->second.size()) != dataset.dimension)
      throw DimensionError("customized perturbation dimension mismatch for bag " + std::to_string(bag.id));
    out.push_back(it->second);
  }
  return out;
}

}  // namespace miladv
