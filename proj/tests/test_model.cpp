#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <miladv/checkpoint.hpp>
#include <miladv/errors.hpp>
#include <miladv/model.hpp>
#include <miladv/train.hpp>

#include "oracles.hpp"

using namespace miladv;
namespace fs = std::filesystem;

namespace {

AttentionMILModel small_model(std::size_t d, AttentionVariant v, std::uint64_t seed) {
  ModelHyper h;
  h.hidden = 6;
  h.attention = 4;
  h.variant = v;
  h.seed = seed;
  return init_model(d, h);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("init is deterministic and sized by the hyperparameters") {
  ModelHyper h;
  h.seed = 3;
  const AttentionMILModel a = init_model(784, h);
  const AttentionMILModel b = init_model(784, h);
  CHECK(a.params.embed_w == b.params.embed_w);
  CHECK(a.params.head_b == b.params.head_b);
  CHECK(a.params.count() == 784 * 128 + 128 + 128 * 64 + 64 + 128 * 2 + 2);
  h.variant = AttentionVariant::gated;
  CHECK(init_model(784, h).params.count() == a.params.count() + 128 * 64);
  const double bound = 1.0 / std::sqrt(784.0);
  CHECK(a.params.embed_w.cwiseAbs().maxCoeff() <= bound);
  CHECK_THROWS_AS(init_model(0, h), ConfigError);
}

TEST_CASE("forward basics") {
  Rng rng(1);
  for (auto v : {AttentionVariant::plain, AttentionVariant::gated}) {
    const AttentionMILModel m = small_model(5, v, 2);
    const Bag one = oracle::random_bag(rng, 1, 5);
    const ForwardTrace t1 = forward(m, one);
    CHECK(t1.attention.size() == 1);
    CHECK(t1.attention[0] == 1.0);
    const Bag many = oracle::random_bag(rng, 7, 5);
    const ForwardTrace t = forward(m, many);
    CHECK(std::abs(t.probs.sum() - 1.0) <= 1e-9);
    CHECK(std::abs(t.attention.sum() - 1.0) <= 1e-9);
    CHECK(t.predicted == (t.probs[1] > t.probs[0] ? 1 : 0));
  }
  const AttentionMILModel m = small_model(5, AttentionVariant::plain, 2);
  CHECK_THROWS_AS(forward(m, oracle::random_bag(rng, 3, 4)), DimensionError);
}

TEST_CASE("tied probabilities predict class 0") {
  AttentionMILModel m = small_model(3, AttentionVariant::plain, 4);
  m.params.head_w.setZero();
  m.params.head_b.setZero();
  Rng rng(2);
  const ForwardTrace t = forward(m, oracle::random_bag(rng, 4, 3));
  CHECK(t.probs[0] == t.probs[1]);
  CHECK(t.predicted == 0);
}

TEST_CASE("permutation invariance") {
  Rng rng(9);
  for (auto v : {AttentionVariant::plain, AttentionVariant::gated}) {
    const AttentionMILModel m = small_model(6, v, 5);
    const Bag bag = oracle::random_bag(rng, 8, 6);
    const ForwardTrace ref = forward(m, bag);
    for (int trial = 0; trial < 20; ++trial) {
      const auto perm = permutation(rng, bag.size());
      Bag shuffled = bag;
      for (std::size_t j = 0; j < perm.size(); ++j)
        shuffled.instances.row(static_cast<Eigen::Index>(j)) = bag.instances.row(static_cast<Eigen::Index>(perm[j]));
      const ForwardTrace t = forward(m, shuffled);
      CHECK((t.probs - ref.probs).cwiseAbs().maxCoeff() <= 1e-9);
      for (std::size_t j = 0; j < perm.size(); ++j)
        CHECK(std::abs(t.attention[static_cast<Eigen::Index>(j)] - ref.attention[static_cast<Eigen::Index>(perm[j])]) <= 1e-12);
    }
  }
}

TEST_CASE("input gradient matches finite differences") {
  Rng rng(17);
  for (auto v : {AttentionVariant::plain, AttentionVariant::gated}) {
    for (int trial = 0; trial < 4; ++trial) {
      const AttentionMILModel m = small_model(5, v, 10 + static_cast<std::uint64_t>(trial));
      const Bag bag = oracle::random_bag(rng, 1 + static_cast<std::size_t>(trial) * 3, 5);
      for (int cls : {0, 1}) {
        const GradientMatrix g = input_gradient(m, bag, cls);
        const Matrix fd = oracle::finite_difference_gradient(m, bag, cls);
        CHECK(g.cls == cls);
        REQUIRE(g.rows.rows() == fd.rows());
        for (Eigen::Index j = 0; j < fd.rows(); ++j)
          for (Eigen::Index k = 0; k < fd.cols(); ++k) CHECK(oracle::close(g.rows(j, k), fd(j, k), 1e-4, 1e-8));
      }
    }
  }
}

TEST_CASE("the two class gradients are negatives of each other") {
  Rng rng(4);
  const AttentionMILModel m = small_model(4, AttentionVariant::gated, 1);
  const Bag bag = oracle::random_bag(rng, 5, 4);
  const Matrix sum = input_gradient(m, bag, 0).rows + input_gradient(m, bag, 1).rows;
  CHECK(sum.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("parameter gradient matches finite differences of the loss") {
  Rng rng(23);
  for (auto v : {AttentionVariant::plain, AttentionVariant::gated}) {
    AttentionMILModel m = small_model(3, v, 8);
    Bag bag = oracle::random_bag(rng, 4, 3);
    bag.label = 1;
    Parameters grad = m.params.zeros_like();
    loss_and_gradient(m, bag, grad);
    const double h = 1e-6;
    Parameters::zip(
        [&](auto& p, auto& g) {
          for (Eigen::Index i = 0; i < p.size(); ++i) {
            const double x = p.data()[i];
            Parameters scratch = m.params.zeros_like();
            p.data()[i] = x + h;
            const double up = loss_and_gradient(m, bag, scratch);
            p.data()[i] = x - h;
            const double down = loss_and_gradient(m, bag, scratch);
            p.data()[i] = x;
            CHECK(oracle::close(g.data()[i], (up - down) / (2 * h), 1e-4, 1e-8));
          }
        },
        m.params, grad);
  }
}

TEST_CASE("training fits a separable synthetic set") {
  GenerationConfig c;
  c.n_bags = 60;
  c.dimension = 4;
  c.seed = 3;
  const BagDataset ds = generate_synthetic_dataset(c);
  ModelHyper h;
  h.hidden = 8;
  h.attention = 4;
  h.seed = 1;
  TrainConfig tc;
  tc.epochs = 15;
  tc.learning_rate = 1e-2;
  const TrainResult r = train(init_model(4, h), ds, tc);
  CHECK(r.epoch_loss.size() == 15);
  CHECK(r.epoch_loss.back() < r.epoch_loss.front());
  int hits = 0;
  for (const Bag& b : ds.bags) hits += predict(r.model, b) == b.label;
  CHECK(hits >= 57);

  const TrainResult again = train(init_model(4, h), ds, tc);
  CHECK(again.model.params.embed_w == r.model.params.embed_w);

  tc.optimizer = OptimizerKind::sgd;
  tc.learning_rate = 0.1;
  const TrainResult sgd = train(init_model(4, h), ds, tc);
  CHECK(sgd.epoch_loss.back() < sgd.epoch_loss.front());
}

TEST_CASE("training rejects bad configs and diverging runs") {
  GenerationConfig c;
  c.n_bags = 4;
  c.dimension = 2;
  const BagDataset ds = generate_synthetic_dataset(c);
  const AttentionMILModel m = small_model(2, AttentionVariant::plain, 0);
  TrainConfig tc;
  tc.epochs = 0;
  CHECK_THROWS_AS(train(m, ds, tc), ConfigError);
  tc.epochs = 1;
  tc.learning_rate = 0.0;
  CHECK_THROWS_AS(train(m, ds, tc), ConfigError);
  CHECK_THROWS_AS(train(m, BagDataset{}, TrainConfig{}), ConfigError);

  AttentionMILModel broken = m;
  broken.params.head_b[0] = INFINITY;
  CHECK_THROWS_AS(train(broken, ds, TrainConfig{}), TrainingError);
}

TEST_CASE("checkpoint round-trips exactly") {
  const fs::path dir = fs::temp_directory_path() / "miladv_tests";
  fs::create_directories(dir);
  const fs::path path = dir / "m.milmodel";
  for (auto v : {AttentionVariant::plain, AttentionVariant::gated}) {
    const AttentionMILModel m = small_model(7, v, 12);
    save_model(m, path);
    const AttentionMILModel back = load_model(path);
    CHECK(back.gated() == m.gated());
    CHECK(back.dim == 7);
    Parameters::zip([](const auto& a, const auto& b) { CHECK(a == b); }, m.params, back.params);
  }
  std::ofstream(path, std::ios::binary | std::ios::app) << 'x';
  CHECK_THROWS_AS(load_model(path), FormatError);
  CHECK(model_json_path_for(dir / "net.milmodel") == dir / "net.model.json");
}

}
