#include "miladv/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>

#include "miladv/errors.hpp"

namespace miladv {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

namespace {

// Perturbed-bag predictions; `perturb(i, bag)` returns the bag to score.
template <class Perturb>
std::vector<int> predictions(const AttentionMILModel& model, const BagDataset& dataset, Perturb&& perturb) {
  check_compatible(model, dataset);
  std::vector<int> out;
  out.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) out.push_back(predict(model, perturb(i, dataset.bags[i])));
  return out;
}

std::vector<int> clean_predictions(const AttentionMILModel& model, const BagDataset& dataset) {
  return predictions(model, dataset, [](std::size_t, const Bag& b) -> const Bag& { return b; });
}

std::vector<int> universal_predictions(const AttentionMILModel& model, const BagDataset& dataset,
                                       const Vector& eps) {
  return predictions(model, dataset, [&](std::size_t, const Bag& b) { return apply_perturbation(b, eps); });
}

std::vector<int> per_bag_predictions(const AttentionMILModel& model, const BagDataset& dataset,
                                     std::span<const Vector> eps) {
  if (eps.size() != dataset.size()) throw DimensionError("one perturbation per bag required");
  return predictions(model, dataset, [&](std::size_t i, const Bag& b) { return apply_perturbation(b, eps[i]); });
}

double acc_of(const BagDataset& dataset, const std::vector<int>& pred) {
  if (dataset.empty()) throw ConfigError("accuracy of an empty dataset");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == dataset.bags[i].label;
  return static_cast<double>(hit) / static_cast<double>(dataset.size());
}

double recall_of(const BagDataset& dataset, const std::vector<int>& pred) {
  std::size_t pos = 0;
  std::size_t tp = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (dataset.bags[i].label != 1) continue;
    ++pos;
    tp += pred[i] == 1;
  }
  if (pos == 0) throw ConfigError("recall undefined: dataset has no positive bag");
  return static_cast<double>(tp) / static_cast<double>(pos);
}

}  // namespace

double accuracy(const AttentionMILModel& model, const BagDataset& dataset) {
  if (dataset.empty()) throw ConfigError("accuracy of an empty dataset");
  return acc_of(dataset, clean_predictions(model, dataset));
}

double accuracy_under(const AttentionMILModel& model, const BagDataset& dataset, const Vector& epsilon) {
  if (dataset.empty()) throw ConfigError("accuracy of an empty dataset");
  return acc_of(dataset, universal_predictions(model, dataset, epsilon));
}

double accuracy_under(const AttentionMILModel& model, const BagDataset& dataset,
                      std::span<const Vector> per_bag) {
  if (dataset.empty()) throw ConfigError("accuracy of an empty dataset");
  return acc_of(dataset, per_bag_predictions(model, dataset, per_bag));
}

double recall(const AttentionMILModel& model, const BagDataset& dataset) {
  return recall_of(dataset, clean_predictions(model, dataset));
}

double recall_under(const AttentionMILModel& model, const BagDataset& dataset, const Vector& epsilon) {
  return recall_of(dataset, universal_predictions(model, dataset, epsilon));
}

double recall_under(const AttentionMILModel& model, const BagDataset& dataset,
                    std::span<const Vector> per_bag) {
  return recall_of(dataset, per_bag_predictions(model, dataset, per_bag));
}

double decrease(const AttentionMILModel& model, const BagDataset& dataset, const Vector& epsilon) {
  return accuracy(model, dataset) - accuracy_under(model, dataset, epsilon);
}

double decrease(const AttentionMILModel& model, const BagDataset& dataset, std::span<const Vector> per_bag) {
  return accuracy(model, dataset) - accuracy_under(model, dataset, per_bag);
}

std::vector<MetricRow> xi_sweep(const AttentionMILModel& model, const BagDataset& dataset,
                                PerturbationAlgorithm algorithm, const std::vector<double>& xis,
                                const AttackConfig& base, const std::string& dataset_id,
                                const std::string& model_id) {
  if (!std::is_sorted(xis.begin(), xis.end())) throw ConfigError("xi grid must be sorted ascending");
  if (!xis.empty() && xis.front() < 0.0) throw ConfigError("xi must be >= 0");
  check_compatible(model, dataset);

  const double clean_acc = accuracy(model, dataset);
  std::vector<MetricRow> rows;
  for (double xi : xis) {
    MetricRow row;
    row.dataset = dataset_id;
    row.model = model_id;
    row.xi = xi;
    row.seed = base.seed;
    if (xi == 0.0) {
      row.acc = clean_acc;
      row.recall = recall(model, dataset);
      rows.push_back(row);
      continue;
    }
    AttackConfig cfg = base;
    cfg.xi = xi;
    row.perturbation = to_string(algorithm);
    row.mode = algorithm == PerturbationAlgorithm::cap || algorithm == PerturbationAlgorithm::uap
                   ? to_string(cfg.mode)
                   : "-";
    if (algorithm == PerturbationAlgorithm::cap) {
      auto [eps, report] = mi_cap_dataset(model, dataset, cfg);
      row.acc = accuracy_under(model, dataset, eps);
      row.recall = recall_under(model, dataset, eps);
      row.fooling_rate = report.fooling_rate;
    } else {
      Vector eps = algorithm == PerturbationAlgorithm::uap
                       ? mi_uap(model, dataset, cfg).first.epsilon
                       : baseline_perturbation(algorithm, model.dim, xi, cfg.seed, cfg.norm).epsilon;
      row.acc = accuracy_under(model, dataset, eps);
      row.recall = recall_under(model, dataset, eps);
      row.fooling_rate = fooling_rate(model, dataset, eps);
    }
    row.decrease = clean_acc - row.acc;
    rows.push_back(row);
  }
  return rows;
}

TransferMatrix transfer_matrix(std::span<const AttentionMILModel> models, std::span<const std::string> ids,
                               const BagDataset& dataset, const AttackConfig& config) {
  if (models.empty()) throw ConfigError("transfer_matrix needs at least one model");
  if (ids.size() != models.size()) throw ConfigError("one id per model required");
  for (const auto& m : models)
    if (m.dim != models.front().dim)
      throw DimensionError("models disagree on input dimension (" + std::to_string(m.dim) + " vs " +
                           std::to_string(models.front().dim) + ")");
  check_compatible(models.front(), dataset);

  TransferMatrix t;
  t.sources.assign(ids.begin(), ids.end());
  t.targets = t.sources;
  const auto n = static_cast<Eigen::Index>(models.size());
  t.cells.resize(n, n);
  for (Eigen::Index s = 0; s < n; ++s) {
    auto [pert, report] = mi_uap(models[static_cast<std::size_t>(s)], dataset, config);
    pert.meta.source_model = ids[static_cast<std::size_t>(s)];
    for (Eigen::Index c = 0; c < n; ++c)
      t.cells(s, c) = decrease(models[static_cast<std::size_t>(c)], dataset, pert.epsilon);
    t.perturbations.push_back(std::move(pert));
    t.source_fooling_rates.push_back(report.fooling_rate);
  }
  return t;
}

AttentionSummary attention_summary(std::span<const double> values, std::size_t bins, std::size_t grid_points) {
  if (values.empty()) throw ConfigError("attention_summary: empty input");
  if (bins < 1 || grid_points < 2) throw ConfigError("attention_summary: need >= 1 bin and >= 2 grid points");
  for (double v : values)
    if (!(v >= 0.0 && v <= 1.0)) throw ConfigError("attention_summary: value outside [0, 1]");

  AttentionSummary s;
  const double width = 1.0 / static_cast<double>(bins);
  s.counts.assign(bins, 0);
  for (std::size_t b = 0; b < bins; ++b) s.bin_centers.push_back((static_cast<double>(b) + 0.5) * width);
  for (double v : values) ++s.counts[std::min(bins - 1, static_cast<std::size_t>(v * static_cast<double>(bins)))];

  // Silverman: 0.9 * min(sd, IQR / 1.34) * n^(-1/5).
  const auto n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = values.size() > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto quantile = [&](double q) {
    const double pos = q * (n - 1.0);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
  };
  const double iqr = quantile(0.75) - quantile(0.25);
  double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  s.bandwidth = 0.9 * spread * std::pow(n, -0.2);
  if (!(s.bandwidth > 0.0)) s.bandwidth = width;  // all values identical

  const double norm = 1.0 / (n * s.bandwidth * std::sqrt(2.0 * std::numbers::pi));
  for (std::size_t g = 0; g < grid_points; ++g) {
    const double x = static_cast<double>(g) / static_cast<double>(grid_points - 1);
    double acc = 0.0;
    for (double v : sorted) {
      const double z = (x - v) / s.bandwidth;
      acc += std::exp(-0.5 * z * z);
    }
    s.kde_x.push_back(x);
    s.kde_density.push_back(acc * norm);
  }
  return s;
}

namespace {

std::ofstream open_csv(const std::filesystem::path& path, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw Error(path.string() + ": cannot write");
  if (!comment.empty()) out << "# " << comment << '\n';
  return out;
}

}  // namespace

void write_metric_rows_csv(const std::vector<MetricRow>& rows, const std::filesystem::path& path,
                           const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  out << "dataset,model,perturbation,xi,mode,acc,recall,decrease,fooling_rate,seed\n";
  for (const auto& r : rows)
    out << r.dataset << ',' << r.model << ',' << r.perturbation << ',' << format_double(r.xi) << ',' << r.mode
        << ',' << format_double(r.acc) << ',' << format_double(r.recall) << ',' << format_double(r.decrease)
        << ',' << format_double(r.fooling_rate) << ',' << r.seed << '\n';
}

void write_transfer_csv(const TransferMatrix& m, const std::filesystem::path& path,
                        const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  out << "source";
  for (const auto& t : m.targets) out << ',' << t;
  out << '\n';
  for (std::size_t s = 0; s < m.sources.size(); ++s) {
    out << m.sources[s];
    for (Eigen::Index t = 0; t < m.cells.cols(); ++t)
      out << ',' << format_double(m.cells(static_cast<Eigen::Index>(s), t));
    out << '\n';
  }
}

void write_histogram_csv(const AttentionSummary& s, const std::filesystem::path& path,
                         const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  out << "bin_center,count\n";
  for (std::size_t i = 0; i < s.counts.size(); ++i)
    out << format_double(s.bin_centers[i]) << ',' << s.counts[i] << '\n';
}

void write_kde_csv(const AttentionSummary& s, const std::filesystem::path& path,
                   const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  out << "x,density\n";
  for (std::size_t i = 0; i < s.kde_x.size(); ++i)
    out << format_double(s.kde_x[i]) << ',' << format_double(s.kde_density[i]) << '\n';
}

void write_defence_csv(const std::vector<DefenceRow>& rows, const std::filesystem::path& path,
                       const std::string& header_comment) {
  auto out = open_csv(path, header_comment);
  out << "ratio,n_adversarial,clean_acc,clean_recall,attacked_acc,attacked_recall,decrease\n";
  for (const auto& r : rows)
    out << format_double(r.ratio) << ',' << r.n_adversarial << ',' << format_double(r.clean_acc) << ','
        << format_double(r.clean_recall) << ',' << format_double(r.attacked_acc) << ','
        << format_double(r.attacked_recall) << ',' << format_double(r.decrease) << '\n';
}

}  // namespace miladv
