#include "miladv/model.hpp"

#include <cmath>
#include <string>

#include "miladv/errors.hpp"
#include "miladv/rng.hpp"

namespace miladv {

std::string to_string(AttentionVariant v) { return v == AttentionVariant::gated ? "gated" : "plain"; }

AttentionVariant parse_variant(const std::string& s) {
  if (s == "plain") return AttentionVariant::plain;
  if (s == "gated") return AttentionVariant::gated;
  throw ConfigError("unknown attention variant '" + s + "' (expected plain|gated)");
}

Parameters Parameters::zeros_like() const {
  Parameters z;
  zip([](auto& dst, const auto& src) { dst.setZero(src.rows(), src.cols()); }, z, *this);
  return z;
}

std::size_t Parameters::count() const {
  std::size_t n = 0;
  zip([&](const auto& t) { n += static_cast<std::size_t>(t.size()); }, *this);
  return n;
}

bool Parameters::all_finite() const {
  bool ok = true;
  zip([&](const auto& t) { ok = ok && t.allFinite(); }, *this);
  return ok;
}

AttentionMILModel init_model(std::size_t dim, const ModelHyper& hyper) {
  if (dim < 1 || hyper.hidden < 1 || hyper.attention < 1)
    throw ConfigError("model dimensions must be >= 1");
  const auto d = static_cast<Eigen::Index>(dim);
  const auto h = static_cast<Eigen::Index>(hyper.hidden);
  const auto a = static_cast<Eigen::Index>(hyper.attention);

  Rng rng(hyper.seed);
  auto fill = [&rng](auto& t, Eigen::Index rows, Eigen::Index cols, Eigen::Index fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    t.resize(rows, cols);
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = uniform(rng, -bound, bound);
  };

  AttentionMILModel m;
  m.dim = dim;
  m.hyper = hyper;
  auto& p = m.params;
  fill(p.embed_w, d, h, d);
  fill(p.embed_b, h, 1, d);
  fill(p.attn_V, h, a, h);
  fill(p.attn_w, a, 1, a);
  if (hyper.variant == AttentionVariant::gated)
    fill(p.attn_U, h, a, h);
  else
    p.attn_U.resize(0, 0);
  fill(p.head_w, h, 2, h);
  fill(p.head_b, 2, 1, h);
  return m;
}

void check_compatible(const AttentionMILModel& model, const Bag& bag) {
  if (bag.dim() != model.dim)
    throw DimensionError("bag " + std::to_string(bag.id) + " has dimension " +
                         std::to_string(bag.dim()) + ", model expects " + std::to_string(model.dim));
  if (bag.size() < 1) throw DimensionError("bag " + std::to_string(bag.id) + " is empty");
}

void check_compatible(const AttentionMILModel& model, const BagDataset& dataset) {
  if (dataset.dimension != model.dim)
    throw DimensionError("dataset dimension " + std::to_string(dataset.dimension) +
                         " does not match model dimension " + std::to_string(model.dim));
}

namespace {

Vector softmax(const Vector& s) {
  const Vector e = (s.array() - s.maxCoeff()).exp();
  return e / e.sum();
}

struct Cache {
  Matrix hidden;     // n x h, tanh(X E + c)
  Matrix attn_tanh;  // n x a, tanh(H V)
  Matrix attn_gate;  // n x a, sigmoid(H U), gated only
  Matrix attn_act;   // n x a, product fed to attn_w
  Vector alpha;      // n
  Vector embedding;  // h
  Eigen::Vector2d probs;
};

Cache run_forward(const AttentionMILModel& model, const Bag& bag) {
  check_compatible(model, bag);
  const auto& p = model.params;
  Cache c;
  c.hidden = ((bag.instances * p.embed_w).rowwise() + p.embed_b.transpose()).array().tanh();
  c.attn_tanh = (c.hidden * p.attn_V).array().tanh();
  if (model.gated()) {
    c.attn_gate = (1.0 + (-(c.hidden * p.attn_U).array()).exp()).inverse();
    c.attn_act = c.attn_tanh.cwiseProduct(c.attn_gate);
  } else {
    c.attn_act = c.attn_tanh;
  }
  c.alpha = softmax(c.attn_act * p.attn_w);
  c.embedding = c.hidden.transpose() * c.alpha;
  const Vector logits = p.head_w.transpose() * c.embedding + p.head_b;
  c.probs = softmax(logits);
  return c;
}

// Reverse pass from dL/dlogits. Accumulates parameter gradients into `grad`
// when given and returns dL/dX when `want_input` is set.
Matrix run_backward(const AttentionMILModel& model, const Bag& bag, const Cache& c,
                    const Eigen::Vector2d& dlogits, Parameters* grad, bool want_input) {
  const auto& p = model.params;

  const Vector d_embedding = p.head_w * dlogits;
  // b = H^T alpha
  Matrix d_hidden = c.alpha * d_embedding.transpose();
  const Vector d_alpha = c.hidden * d_embedding;
  // alpha = softmax(scores)
  const Vector d_scores = c.alpha.cwiseProduct((d_alpha.array() - c.alpha.dot(d_alpha)).matrix());
  const Matrix d_act = d_scores * p.attn_w.transpose();

  Matrix d_tanh_pre;
  Matrix d_gate_pre;
  if (model.gated()) {
    d_tanh_pre = d_act.cwiseProduct(c.attn_gate).array() * (1.0 - c.attn_tanh.array().square());
    d_gate_pre = d_act.cwiseProduct(c.attn_tanh).array() * c.attn_gate.array() *
                 (1.0 - c.attn_gate.array());
    d_hidden.noalias() += d_gate_pre * p.attn_U.transpose();
  } else {
    d_tanh_pre = d_act.array() * (1.0 - c.attn_tanh.array().square());
  }
  d_hidden.noalias() += d_tanh_pre * p.attn_V.transpose();
  const Matrix d_pre = d_hidden.array() * (1.0 - c.hidden.array().square());

  if (grad) {
    grad->head_w.noalias() += c.embedding * dlogits.transpose();
    grad->head_b += dlogits;
    grad->attn_w.noalias() += c.attn_act.transpose() * d_scores;
    grad->attn_V.noalias() += c.hidden.transpose() * d_tanh_pre;
    if (model.gated()) grad->attn_U.noalias() += c.hidden.transpose() * d_gate_pre;
    grad->embed_w.noalias() += bag.instances.transpose() * d_pre;
    grad->embed_b += d_pre.colwise().sum().transpose();
  }
  if (!want_input) return {};
  return d_pre * p.embed_w.transpose();
}

ForwardTrace to_trace(Cache&& c) {
  ForwardTrace t;
  t.probs = c.probs;
  t.embedding = std::move(c.embedding);
  t.attention = std::move(c.alpha);
  t.predicted = t.probs[1] > t.probs[0] ? 1 : 0;
  return t;
}

}  // namespace

ForwardTrace forward(const AttentionMILModel& model, const Bag& bag) {
  return to_trace(run_forward(model, bag));
}

int predict(const AttentionMILModel& model, const Bag& bag) { return forward(model, bag).predicted; }

GradientMatrix input_gradient(const AttentionMILModel& model, const Bag& bag, int cls) {
  if (cls != 0 && cls != 1) throw ConfigError("class index must be 0 or 1");
  const Cache c = run_forward(model, bag);
  // d p_c / d logits = p_c (e_c - p)
  Eigen::Vector2d e = Eigen::Vector2d::Zero();
  e[cls] = 1.0;
  const Eigen::Vector2d dlogits = c.probs[cls] * (e - c.probs);
  return {run_backward(model, bag, c, dlogits, nullptr, true), cls};
}

double loss_and_gradient(const AttentionMILModel& model, const Bag& bag, Parameters& grad) {
  const Cache c = run_forward(model, bag);
  // Recompute log p_y from logits for accuracy near saturation.
  const Vector logits = model.params.head_w.transpose() * c.embedding + model.params.head_b;
  const double lse = logits.maxCoeff() + std::log((logits.array() - logits.maxCoeff()).exp().sum());
  const double loss = lse - logits[bag.label];
  Eigen::Vector2d dlogits = c.probs;
  dlogits[bag.label] -= 1.0;
  run_backward(model, bag, c, dlogits, &grad, false);
  return loss;
}

std::size_t attention_argmax(const ForwardTrace& trace) {
  std::size_t best = 0;
  for (Eigen::Index j = 1; j < trace.attention.size(); ++j)
    if (trace.attention[j] > trace.attention[static_cast<Eigen::Index>(best)])
      best = static_cast<std::size_t>(j);
  return best;
}

std::vector<double> collect_attention(const AttentionMILModel& model, const BagDataset& dataset) {
  check_compatible(model, dataset);
  std::vector<double> out;
  out.reserve(dataset.total_instances());
  for (const auto& bag : dataset.bags) {
    const auto t = forward(model, bag);
    out.insert(out.end(), t.attention.data(), t.attention.data() + t.attention.size());
  }
  return out;
}

}  // namespace miladv
