// One line per acceptance criterion. `acceptance 3 4` runs a subset.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <miladv/attack.hpp>
#include <miladv/eval.hpp>
#include <miladv/idx.hpp>
#include <miladv/repro.hpp>
#include <miladv/rng.hpp>
#include <miladv/train.hpp>

#include "oracles.hpp"

using namespace miladv;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kDataSeed = 0;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << v;
  return s.str();
}

fs::path mnist_dir() {
  if (const char* env = std::getenv("MILADV_MNIST_DIR")) return env;
  return MILADV_MNIST_DIR;
}

struct MnistBags {
  BagDataset train;
  BagDataset test;
};

const MnistBags& mnist_bags() {
  static const MnistBags bags = [] {
    const fs::path d = mnist_dir();
    const IdxImages tr = load_idx_images(d / "train-images-idx3-ubyte", d / "train-labels-idx1-ubyte");
    const IdxImages te = load_idx_images(d / "test-images-idx3-ubyte", d / "test-labels-idx1-ubyte");
    GenerationConfig c;
    c.target_class = 9;
    c.bag_size_min = 5;
    c.bag_size_max = 10;
    MnistBags b;
    c.n_bags = 200;
    c.seed = derive_seed(kDataSeed, "data:train");
    b.train = build_image_bags(tr.images, tr.labels, c);
    c.n_bags = 100;
    c.seed = derive_seed(kDataSeed, "data:test");
    b.test = build_image_bags(te.images, te.labels, c);
    return b;
  }();
  return bags;
}

ModelHyper hyper_for(std::uint64_t seed) {
  ModelHyper h;
  h.seed = derive_seed(seed, "init");
  return h;
}

TrainConfig train_config_for(std::uint64_t seed) {
  TrainConfig t;
  t.epochs = 50;
  t.learning_rate = 1e-4;
  t.seed = derive_seed(seed, "train");
  return t;
}

// MNIST models keyed by seed, trained once and shared across criteria.
const AttentionMILModel& mnist_model(std::uint64_t seed) {
  static std::map<std::uint64_t, AttentionMILModel> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) {
    const BagDataset& tr = mnist_bags().train;
    it = cache.emplace(seed, train(init_model(tr.dimension, hyper_for(seed)), tr, train_config_for(seed)).model).first;
  }
  return it->second;
}

AttackConfig budget_config(double xi, ProjectionNorm norm, GradientMode mode, std::uint64_t seed) {
  AttackConfig c;
  c.xi = xi;
  c.norm = norm;
  c.mode = mode;
  c.seed = derive_seed(seed, "attack");
  return c;
}

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  Rng rng(101);
  double worst = 0.0;
  std::size_t bad = 0, entries = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = trial % 2 == 0 ? 8 : 784;
    ModelHyper h;
    h.hidden = static_cast<std::size_t>(uniform_int(rng, 4, 16));
    h.attention = static_cast<std::size_t>(uniform_int(rng, 2, 8));
    h.variant = trial % 4 < 2 ? AttentionVariant::plain : AttentionVariant::gated;
    h.seed = rng();
    const AttentionMILModel m = init_model(d, h);
    const Bag bag = oracle::random_bag(rng, static_cast<std::size_t>(uniform_int(rng, 1, 10)), d);
    const int cls = static_cast<int>(uniform_int(rng, 0, 1));
    const Matrix g = input_gradient(m, bag, cls).rows;
    const Matrix fd = oracle::finite_difference_gradient(m, bag, cls, 1e-5);
    for (Eigen::Index i = 0; i < g.size(); ++i) {
      const double a = g.data()[i], b = fd.data()[i];
      ++entries;
      if (!oracle::close(a, b, 1e-4, 1e-8)) ++bad;
      const double diff = std::abs(a - b);
      if (diff > 1e-8) worst = std::max(worst, diff / std::max(std::abs(a), std::abs(b)));
    }
  }
  return {bad == 0, std::to_string(entries) + " entries, " + std::to_string(bad) +
                        " outside tolerance, worst relative error above the floor " + fmt(worst, 3)};
}

Outcome permutation_invariance() {
  Rng rng(202);
  double worst_p = 0.0, worst_a = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ModelHyper h;
    h.hidden = 16;
    h.attention = 8;
    h.variant = trial % 2 ? AttentionVariant::gated : AttentionVariant::plain;
    h.seed = static_cast<std::uint64_t>(trial / 10);
    const AttentionMILModel m = init_model(12, h);
    const Bag bag = oracle::random_bag(rng, static_cast<std::size_t>(uniform_int(rng, 2, 10)), 12);
    const auto perm = permutation(rng, bag.size());
    Bag shuffled = bag;
    for (std::size_t j = 0; j < perm.size(); ++j)
      shuffled.instances.row(static_cast<Eigen::Index>(j)) = bag.instances.row(static_cast<Eigen::Index>(perm[j]));
    const ForwardTrace a = forward(m, bag);
    const ForwardTrace b = forward(m, shuffled);
    worst_p = std::max(worst_p, (a.probs - b.probs).cwiseAbs().maxCoeff());
    for (std::size_t j = 0; j < perm.size(); ++j)
      worst_a = std::max(worst_a, std::abs(b.attention[static_cast<Eigen::Index>(j)] -
                                           a.attention[static_cast<Eigen::Index>(perm[j])]));
  }
  return {worst_p <= 1e-9 && worst_a <= 1e-9,
          "max probability change " + fmt(worst_p, 3) + ", max attention mismatch " + fmt(worst_a, 3)};
}

Outcome clean_accuracy() {
  const auto t0 = std::chrono::steady_clock::now();
  const AttentionMILModel& m = mnist_model(0);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const double acc = accuracy(m, mnist_bags().test);
  const AttentionSummary attn = attention_summary(collect_attention(m, mnist_bags().test));
  const auto modal = std::max_element(attn.counts.begin(), attn.counts.end()) - attn.counts.begin();
  return {acc >= 0.85 && secs < 300.0, "test accuracy " + fmt(acc) + " (need >= 0.85), test recall " +
                                           fmt(recall(m, mnist_bags().test)) + ", modal attention bin " +
                                           std::to_string(modal) + ", training " + fmt(secs, 3) + " s"};
}

Outcome cap_effectiveness() {
  const AttentionMILModel& m = mnist_model(0);
  const BagDataset& te = mnist_bags().test;
  const auto [eps, report] = mi_cap_dataset(m, te, budget_config(0.2, ProjectionNorm::linf, GradientMode::ave, 0));
  const double dec = decrease(m, te, eps);
  const auto [eps2, r2] = mi_cap_dataset(m, te, budget_config(0.2, ProjectionNorm::l2, GradientMode::ave, 0));
  return {dec >= 0.15, "Linf decrease " + fmt(dec) + " (need >= 0.15), fooling rate " + fmt(report.fooling_rate) +
                           "; L2 ball for reference: decrease " + fmt(decrease(m, te, eps2))};
}

Outcome cap_optimality() {
  const oracle::LinearScorer ls = oracle::make_linear_scorer(6, 303);
  Rng rng(304);
  AttackConfig cfg;
  double worst = 0.0;
  int failed = 0;
  for (int i = 0; i < 50; ++i) {
    const Bag bag = oracle::random_bag(rng, static_cast<std::size_t>(uniform_int(rng, 1, 10)), 6);
    const int clean = predict(ls.model, bag);
    const Vector dir = (clean == 0 ? 1.0 : -1.0) * ls.u.normalized();
    const double truth = oracle::bisect_boundary(ls.model, bag, dir);
    const CapResult r = mi_cap(ls.model, bag, cfg);
    const double rel = std::abs(r.epsilon.norm() - truth) / truth;
    worst = std::max(worst, rel);
    if (!r.success || rel > 0.10) ++failed;
  }
  return {failed == 0, "worst relative gap to the bisected distance " + fmt(worst, 3) + ", " +
                           std::to_string(failed) + "/50 bags outside 10%"};
}

Outcome uap_threshold() {
  GenerationConfig c;
  c.n_bags = 200;
  c.cluster_separation = 4.0;
  c.seed = derive_seed(kDataSeed, "data:synthetic");
  const BagDataset ds = generate_synthetic_dataset(c);
  ModelHyper h = hyper_for(0);
  const AttentionMILModel m = train(init_model(ds.dimension, h), ds, train_config_for(0)).model;
  // Distance between the two cluster centres.
  const double xi = c.cluster_separation * std::sqrt(static_cast<double>(c.dimension));
  AttackConfig cfg = budget_config(xi, ProjectionNorm::l2, GradientMode::ave, 0);
  cfg.max_inner = 10;
  cfg.max_epochs = 50;
  cfg.delta = 0.5;
  const auto [p, report] = mi_uap(m, ds, cfg);
  return {report.fooling_rate >= 0.5, "fooling rate " + fmt(report.fooling_rate) + " after " +
                                          std::to_string(report.epochs_run) + " epochs at xi " + fmt(xi) +
                                          " (clean accuracy " + fmt(accuracy(m, ds)) + ")"};
}

Outcome xi_trend() {
  double low = 0.0, high = 0.0;
  bool zero_ok = true;
  std::string per_seed;
  for (std::uint64_t s : {0, 1, 2}) {
    const AttentionMILModel& m = mnist_model(s);
    AttackConfig base = budget_config(1.0, ProjectionNorm::l2, GradientMode::ave, s);
    const auto rows = xi_sweep(m, mnist_bags().test, PerturbationAlgorithm::uap, {0.0, 0.01, 1.0}, base);
    zero_ok = zero_ok && rows[0].decrease == 0.0;
    low += rows[1].recall / 3.0;
    high += rows[2].recall / 3.0;
    per_seed += " " + fmt(rows[1].recall, 3) + "/" + fmt(rows[2].recall, 3);
  }
  return {high <= low && zero_ok, "mean recall xi=0.01 " + fmt(low) + ", xi=1 " + fmt(high) +
                                      " (per seed" + per_seed + "), xi=0 decrease is " +
                                      (zero_ok ? "exactly 0" : "nonzero")};
}

Outcome projection_properties() {
  Rng rng(808);
  int bad = 0;
  for (int i = 0; i < 1000; ++i) {
    Vector e(static_cast<Eigen::Index>(uniform_int(rng, 1, 50)));
    const double scale = uniform(rng, 0.01, 10.0);
    for (auto& x : e) x = scale * standard_normal(rng);
    const double xi = uniform(rng, 0.01, 5.0);
    for (auto n : {ProjectionNorm::l2, ProjectionNorm::linf}) {
      const Vector p = project(e, xi, n);
      const double norm = n == ProjectionNorm::l2 ? p.norm() : p.cwiseAbs().maxCoeff();
      if ((project(p, xi, n) - p).cwiseAbs().maxCoeff() > 1e-12) ++bad;
      if (norm > xi + 1e-12) ++bad;
      const Vector inside = e * (0.5 * xi / (n == ProjectionNorm::l2 ? e.norm() : e.cwiseAbs().maxCoeff()));
      if (project(inside, xi, n) != inside) ++bad;
    }
  }
  return {bad == 0, std::to_string(bad) + " violations over 1000 vectors x 2 norms"};
}

Outcome transfer() {
  const AttentionMILModel& a = mnist_model(0);
  const AttentionMILModel& b = mnist_model(1);
  const std::vector<AttentionMILModel> models = {a, b};
  const std::vector<std::string> ids = {"seed0", "seed1"};
  const TransferMatrix t =
      transfer_matrix(models, ids, mnist_bags().test, budget_config(0.2, ProjectionNorm::linf, GradientMode::ave, 0));
  return {t.cells(0, 1) > 0.05, "A->B decrease " + fmt(t.cells(0, 1)) + " (need > 0.05); A->A " +
                                    fmt(t.cells(0, 0)) + ", B->B " + fmt(t.cells(1, 1)) + ", B->A " +
                                    fmt(t.cells(1, 0))};
}

Outcome defence() {
  double gain = 0.0, clean_drop = 0.0;
  std::string per_seed;
  for (std::uint64_t s : {0, 1, 2}) {
    const auto rows = defence_experiment(mnist_bags().train, mnist_bags().test, hyper_for(s), train_config_for(s),
                                         budget_config(0.2, ProjectionNorm::linf, GradientMode::att, s), {0.0, 0.1});
    gain += (rows[1].attacked_acc - rows[0].attacked_acc) / 3.0;
    clean_drop += (rows[0].clean_acc - rows[1].clean_acc) / 3.0;
    per_seed += " [" + fmt(rows[0].clean_acc, 3) + "," + fmt(rows[0].attacked_acc, 3) + " -> " +
                fmt(rows[1].clean_acc, 3) + "," + fmt(rows[1].attacked_acc, 3) + "]";
  }
  return {gain >= 0.05 && clean_drop <= 0.05, "mean post-attack gain " + fmt(gain) + " (need >= 0.05), mean clean drop " +
                                                  fmt(clean_drop) + " (need <= 0.05); clean,attacked per seed" +
                                                  per_seed};
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + MILCLI_PATH + "\" " + args + " > /dev/null";
  return std::system(cmd.c_str());
}

std::map<std::string, std::string> hash_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) out[e.path().filename().string()] = file_hash(e.path());
  return out;
}

Outcome determinism() {
  const fs::path root = fs::temp_directory_path() / "miladv_acceptance_cli";
  fs::remove_all(root);
  const std::string o = (root / "out").string();
  const std::string q = "--seed 5 --out-dir \"" + o + "\" ";
  const std::vector<std::string> pipeline = {
      q + "gen-data --synthetic --name train --n-bags 40 --dimension 6",
      q + "gen-data --synthetic --name test --n-bags 20 --dimension 6",
      q + "train --data " + o + "/train.bags --name m1 --epochs 5 --lr 0.01 --hidden 8 --attention 4",
      "--seed 6 --out-dir \"" + o + "\" train --data " + o + "/train.bags --name m2 --epochs 5 --lr 0.01 --hidden 8 --attention 4 --variant gated",
      q + "attack --model " + o + "/m1.milmodel --data " + o + "/test.bags --algo uap --xi 2 --name uap",
      q + "attack --model " + o + "/m1.milmodel --data " + o + "/test.bags --algo cap --mode att --xi 0.5 --name cap",
      q + "attack --model " + o + "/m1.milmodel --data " + o + "/test.bags --algo random --xi 0.5 --name rnd",
      q + "eval --model " + o + "/m1.milmodel --data " + o + "/test.bags --perturbation " + o + "/uap.pert.json",
      q + "sweep --model " + o + "/m1.milmodel --data " + o + "/test.bags --xis 0,0.5,2 --max-epochs 5",
      q + "transfer --models " + o + "/m1.milmodel," + o + "/m2.milmodel --data " + o + "/test.bags --xi 2 --max-epochs 5",
      q + "defend --train-data " + o + "/train.bags --test-data " + o + "/test.bags --ratios 0,0.1 --epochs 3 --lr 0.01 --hidden 8 --attention 4",
      q + "attn --model " + o + "/m1.milmodel --data " + o + "/test.bags",
  };
  std::vector<std::map<std::string, std::string>> runs;
  for (int pass = 0; pass < 2; ++pass) {
    fs::remove_all(o);
    for (const auto& args : pipeline)
      if (run_cli(args) != 0) return {false, "command failed: milcli " + args};
    runs.push_back(hash_dir(o));
  }
  std::size_t differing = 0;
  for (const auto& [name, h] : runs[0])
    if (runs[1].count(name) == 0 || runs[1].at(name) != h) ++differing;
  return {differing == 0 && runs[0].size() == runs[1].size() && !runs[0].empty(),
          std::to_string(runs[0].size()) + " output files across " + std::to_string(pipeline.size()) +
              " commands, " + std::to_string(differing) + " differ between reruns"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::tuple<std::string, std::function<Outcome()>, double>> criteria = {
      {"gradient oracle vs finite differences", gradient_oracle, 30},
      {"permutation invariance", permutation_invariance, 0},
      {"clean MNIST-bag accuracy >= 0.85", clean_accuracy, 300},
      {"MI-CAP(ave) decrease >= 0.15 at xi=0.2", cap_effectiveness, 120},
      {"MI-CAP optimality on a linear scorer", cap_optimality, 0},
      {"MI-UAP fooling rate >= delta on synthetic bags", uap_threshold, 600},
      {"recall falls with xi under MI-UAP", xi_trend, 0},
      {"projection properties", projection_properties, 0},
      {"universal perturbation transfers across seeds", transfer, 0},
      {"adversarial augmentation defence", defence, 0},
      {"CLI determinism", determinism, 0},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome r;
    try {
      r = std::get<1>(criteria[i])();
    } catch (const std::exception& e) {
      r = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const double limit = std::get<2>(criteria[i]);
    if (limit > 0 && secs > limit) {
      r.pass = false;
      r.detail += " | over the " + fmt(limit, 3) + " s budget";
    }
    failed += !r.pass;
    std::cout << (r.pass ? "PASS" : "FAIL") << " criterion " << id << ": " << std::get<0>(criteria[i]) << " | " << r.detail
              << " | " << fmt(secs, 3) << " s" << std::endl;
  }
  return failed ? 1 : 0;
}
