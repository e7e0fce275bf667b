#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "miladv/bag.hpp"

namespace miladv {

enum class AttentionVariant { plain, gated };

std::string to_string(AttentionVariant v);
AttentionVariant parse_variant(const std::string& s);

struct ModelHyper {
  std::size_t hidden = 128;
  std::size_t attention = 64;
  AttentionVariant variant = AttentionVariant::plain;
  std::uint64_t seed = 0;
};

/// Learnable tensors in checkpoint declaration order. `attn_U` is empty for
/// the plain variant.
struct Parameters {
  Matrix embed_w;  // d x h
  Vector embed_b;  // h
  Matrix attn_V;   // h x a
  Vector attn_w;   // a
  Matrix attn_U;   // h x a (gated only)
  Matrix head_w;   // h x 2
  Vector head_b;   // 2

  /// Calls f(tensor...) on corresponding tensors of several parameter sets.
  template <class F, class... P>
  static void zip(F&& f, P&... sets) {
    f(sets.embed_w...);
    f(sets.embed_b...);
    f(sets.attn_V...);
    f(sets.attn_w...);
    f(sets.attn_U...);
    f(sets.head_w...);
    f(sets.head_b...);
  }

  Parameters zeros_like() const;
  std::size_t count() const;
  bool all_finite() const;
};

struct AttentionMILModel {
  std::size_t dim = 0;
  ModelHyper hyper;
  Parameters params;

  bool gated() const { return hyper.variant == AttentionVariant::gated; }
};

struct ForwardTrace {
  Eigen::Vector2d probs;
  Vector embedding;
  Vector attention;
  int predicted = 0;
};

/// Rows are ∂p_c/∂x_j for the class `cls`.
struct GradientMatrix {
  Matrix rows;
  int cls = 0;
};

/// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every tensor.
AttentionMILModel init_model(std::size_t dim, const ModelHyper& hyper);

ForwardTrace forward(const AttentionMILModel& model, const Bag& bag);

/// Predicted label only.
int predict(const AttentionMILModel& model, const Bag& bag);

/// Exact gradient of p_cls with respect to every instance, including the
/// dependence of each attention weight on all instances.
GradientMatrix input_gradient(const AttentionMILModel& model, const Bag& bag, int cls);

/// Negative log-likelihood of `bag.label` and its parameter gradient.
double loss_and_gradient(const AttentionMILModel& model, const Bag& bag, Parameters& grad);

/// argmax_j alpha_j, lowest index on ties.
std::size_t attention_argmax(const ForwardTrace& trace);

/// Attention weights of every bag, concatenated in dataset order.
std::vector<double> collect_attention(const AttentionMILModel& model, const BagDataset& dataset);

/// Throws DimensionError if the bag dimension differs from the model's.
void check_compatible(const AttentionMILModel& model, const Bag& bag);
void check_compatible(const AttentionMILModel& model, const BagDataset& dataset);

}  // namespace miladv
