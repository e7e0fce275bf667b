#include "miladv/attack.hpp"

#include <algorithm>
#include <cmath>

#include "miladv/errors.hpp"
#include "miladv/rng.hpp"

namespace miladv {

std::string to_string(GradientMode m) { return m == GradientMode::att ? "att" : "ave"; }
std::string to_string(ProjectionNorm n) { return n == ProjectionNorm::linf ? "linf" : "l2"; }

std::string to_string(PerturbationAlgorithm a) {
  switch (a) {
    case PerturbationAlgorithm::cap: return "cap";
    case PerturbationAlgorithm::uap: return "uap";
    case PerturbationAlgorithm::random: return "random";
    case PerturbationAlgorithm::mean: return "mean";
  }
  return "?";
}

GradientMode parse_mode(const std::string& s) {
  if (s == "ave") return GradientMode::ave;
  if (s == "att") return GradientMode::att;
  throw ConfigError("unknown gradient mode '" + s + "' (expected ave|att)");
}

ProjectionNorm parse_norm(const std::string& s) {
  if (s == "l2" || s == "L2") return ProjectionNorm::l2;
  if (s == "linf" || s == "Linf") return ProjectionNorm::linf;
  throw ConfigError("unknown projection norm '" + s + "' (expected l2|linf)");
}

PerturbationAlgorithm parse_algorithm(const std::string& s) {
  if (s == "cap") return PerturbationAlgorithm::cap;
  if (s == "uap") return PerturbationAlgorithm::uap;
  if (s == "random") return PerturbationAlgorithm::random;
  if (s == "mean") return PerturbationAlgorithm::mean;
  throw ConfigError("unknown algorithm '" + s + "' (expected cap|uap|random|mean)");
}

void AttackConfig::validate() const {
  if (max_inner < 1) throw ConfigError("L1 must be >= 1");
  if (max_epochs < 1) throw ConfigError("L2 must be >= 1");
  if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0, 1]");
  if (!(xi > 0.0)) throw ConfigError("xi must be > 0");
  if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
  if (!(overshoot >= 0.0)) throw ConfigError("overshoot must be >= 0");
}

void Perturbation::refresh_norms() {
  meta.norm_l2 = epsilon.norm();
  meta.norm_linf = epsilon.size() ? epsilon.lpNorm<Eigen::Infinity>() : 0.0;
}

Vector aggregate_gradient(const GradientMatrix& grad, GradientMode mode, const ForwardTrace& trace) {
  if (grad.rows.rows() != trace.attention.size())
    throw DimensionError("gradient rows do not match attention length");
  if (mode == GradientMode::ave) return grad.rows.colwise().mean().transpose();
  return grad.rows.row(static_cast<Eigen::Index>(attention_argmax(trace))).transpose();
}

Vector deepfool_step(const Vector& g_cur, const Vector& g_prev, double p_tau, double p_hat, double eta) {
  if (g_cur.size() != g_prev.size()) throw DimensionError("gradient lengths differ");
  const Vector w = g_cur - g_prev;
  return (std::abs(p_tau - p_hat) / (w.squaredNorm() + eta)) * w;
}

Vector project(const Vector& epsilon, double xi, ProjectionNorm norm) {
  if (!(xi > 0.0)) throw ConfigError("xi must be > 0");
  if (std::isinf(xi)) return epsilon;
  if (norm == ProjectionNorm::linf) return epsilon.cwiseMax(-xi).cwiseMin(xi);
  const double n = epsilon.norm();
  if (n <= xi) return epsilon;
  return epsilon * (xi / n);
}

CapResult mi_cap(const AttentionMILModel& model, const Bag& bag, const AttackConfig& config) {
  config.validate();
  check_compatible(model, bag);

  CapResult r;
  ForwardTrace trace = forward(model, bag);
  r.clean_prediction = trace.predicted;
  const int clean = trace.predicted;
  const int tau = 1 - clean;

  r.epsilon = Vector::Zero(static_cast<Eigen::Index>(model.dim));
  while (trace.predicted == clean && r.iterations < config.max_inner) {
    ++r.iterations;
    const Bag perturbed = apply_perturbation(bag, r.epsilon);
    const GradientMatrix g_hat = input_gradient(model, perturbed, trace.predicted);
    const GradientMatrix g_tilde = input_gradient(model, perturbed, tau);
    // ε is shared by all n instances, so ∂p/∂ε is the sum of the gradient
    // rows: n times the "ave" aggregate. The step length uses that gradient.
    const double scale = config.mode == GradientMode::ave ? static_cast<double>(bag.size()) : 1.0;
    const Vector g_prev = scale * aggregate_gradient(g_hat, config.mode, trace);
    const Vector g_cur = scale * aggregate_gradient(g_tilde, config.mode, trace);
    r.epsilon += (1.0 + config.overshoot) *
                 deepfool_step(g_cur, g_prev, trace.probs[tau], trace.probs[clean], config.eta);
    trace = forward(model, apply_perturbation(bag, r.epsilon));
  }

  if (std::isfinite(config.xi)) {
    r.epsilon = project(r.epsilon, config.xi, config.norm);
    r.perturbed_prediction = predict(model, apply_perturbation(bag, r.epsilon));
  } else {
    r.perturbed_prediction = trace.predicted;
  }
  r.success = r.perturbed_prediction != clean;
  return r;
}

double fooling_rate_from_rows(const std::vector<BagAttackRow>& rows) {
  std::size_t correct = 0;
  std::size_t fooled = 0;
  for (const auto& row : rows) {
    if (row.label != row.clean_prediction) continue;
    ++correct;
    if (row.perturbed_prediction != row.clean_prediction) ++fooled;
  }
  return correct ? static_cast<double>(fooled) / static_cast<double>(correct) : 0.0;
}

std::pair<std::vector<Vector>, AttackReport> mi_cap_dataset(const AttentionMILModel& model,
                                                            const BagDataset& dataset,
                                                            const AttackConfig& config) {
  check_compatible(model, dataset);
  std::vector<Vector> eps;
  eps.reserve(dataset.size());
  AttackReport report;
  for (const auto& bag : dataset.bags) {
    CapResult r = mi_cap(model, bag, config);
    report.per_bag.push_back({bag.id, bag.label, r.clean_prediction, r.perturbed_prediction, r.success,
                              r.iterations, r.epsilon.norm()});
    eps.push_back(std::move(r.epsilon));
  }
  report.fooling_rate = fooling_rate_from_rows(report.per_bag);
  report.no_clean_correct = std::none_of(report.per_bag.begin(), report.per_bag.end(),
                                         [](const auto& row) { return row.label == row.clean_prediction; });
  return {std::move(eps), std::move(report)};
}

namespace {

std::vector<BagAttackRow> universal_rows(const AttentionMILModel& model, const BagDataset& dataset,
                                         const std::vector<int>& clean, const Vector& epsilon) {
  std::vector<BagAttackRow> rows;
  rows.reserve(dataset.size());
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const Bag& bag = dataset.bags[i];
    const int p = predict(model, apply_perturbation(bag, epsilon));
    rows.push_back({bag.id, bag.label, clean[i], p, p != clean[i], 0, 0.0});
  }
  return rows;
}

}  // namespace

double fooling_rate(const AttentionMILModel& model, const BagDataset& dataset, const Vector& epsilon) {
  check_compatible(model, dataset);
  std::vector<int> clean;
  clean.reserve(dataset.size());
  for (const auto& bag : dataset.bags) clean.push_back(predict(model, bag));
  return fooling_rate_from_rows(universal_rows(model, dataset, clean, epsilon));
}

std::pair<Perturbation, AttackReport> mi_uap(const AttentionMILModel& model, const BagDataset& dataset,
                                             const AttackConfig& config) {
  config.validate();
  if (dataset.empty()) throw ConfigError("mi_uap: empty dataset");
  check_compatible(model, dataset);

  const std::size_t n = dataset.size();
  std::vector<int> clean(n);
  for (std::size_t i = 0; i < n; ++i) clean[i] = predict(model, dataset.bags[i]);

  Perturbation best;
  best.meta.algorithm = PerturbationAlgorithm::uap;
  best.meta.mode = config.mode;
  best.meta.norm = config.norm;
  best.meta.xi = config.xi;
  best.meta.seed = config.seed;
  best.epsilon = Vector::Zero(static_cast<Eigen::Index>(model.dim));

  AttackReport report;
  bool any_correct = false;
  for (std::size_t i = 0; i < n; ++i) any_correct = any_correct || clean[i] == dataset.bags[i].label;
  if (!any_correct) {
    report.no_clean_correct = true;
    report.per_bag = universal_rows(model, dataset, clean, best.epsilon);
    best.refresh_norms();
    return {std::move(best), std::move(report)};
  }

  // Increments come from unprojected customized attacks at the current epsilon.
  AttackConfig inner = config;
  inner.xi = std::numeric_limits<double>::infinity();

  Rng rng(derive_seed(config.seed, "uap-order"));
  Vector eps = best.epsilon;
  double best_rate = -1.0;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    if (config.shuffle_each_epoch) order = permutation(rng, n);
    for (std::size_t i : order) {
      const Bag perturbed = apply_perturbation(dataset.bags[i], eps);
      if (predict(model, perturbed) != clean[i]) continue;
      const CapResult step = mi_cap(model, perturbed, inner);
      if (step.epsilon.isZero(0.0)) {
        ++report.skipped_zero_increments;
        continue;
      }
      eps = project(eps + step.epsilon, config.xi, config.norm);
    }
    const double rate = fooling_rate_from_rows(universal_rows(model, dataset, clean, eps));
    report.epoch_rates.push_back(rate);
    report.epochs_run = epoch;
    if (rate > best_rate) {
      best_rate = rate;
      best.epsilon = eps;
      report.best_epoch = epoch;
    }
    if (rate >= config.delta) break;
  }

  report.per_bag = universal_rows(model, dataset, clean, best.epsilon);
  report.fooling_rate = fooling_rate_from_rows(report.per_bag);
  best.refresh_norms();
  return {std::move(best), std::move(report)};
}

Perturbation baseline_perturbation(PerturbationAlgorithm kind, std::size_t dim, double xi,
                                   std::uint64_t seed, ProjectionNorm norm) {
  if (!(xi > 0.0)) throw ConfigError("xi must be > 0");
  if (dim < 1) throw ConfigError("dimension must be >= 1");
  const auto d = static_cast<Eigen::Index>(dim);
  Perturbation p;
  p.meta.algorithm = kind;
  p.meta.xi = xi;
  p.meta.norm = norm;
  p.meta.seed = seed;
  if (kind == PerturbationAlgorithm::random) {
    Rng rng(seed);
    p.epsilon.resize(d);
    for (Eigen::Index i = 0; i < d; ++i) p.epsilon[i] = uniform(rng, -1.0, 1.0);
    p.epsilon = project(p.epsilon, xi, norm);
  } else if (kind == PerturbationAlgorithm::mean) {
    const double c = norm == ProjectionNorm::l2 ? xi / std::sqrt(static_cast<double>(dim)) : xi;
    p.epsilon = Vector::Constant(d, c);
  } else {
    throw ConfigError("baseline_perturbation supports random|mean only");
  }
  p.refresh_norms();
  return p;
}

}  // namespace miladv
