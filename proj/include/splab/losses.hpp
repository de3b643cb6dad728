#pragma once

#include "splab/tensor.hpp"

namespace splab {

struct LossValue {
  double value = 0.0;
  Vec grad;  // d value / d logits
};

Vec softmax(std::span<const double> z);

/// ½‖s − t‖²
LossValue l2_logit_loss(std::span<const double> student, std::span<const double> target);
/// −log softmax(s)[label]
LossValue cross_entropy(std::span<const double> logits, std::size_t label);
/// −Σ p_k log softmax(s)_k
LossValue soft_cross_entropy(std::span<const double> logits, std::span<const double> probs);
/// Negated margin max(z_t − max_{k≠t} z_k, −κ); ascending it lowers the margin.
LossValue cw_margin_loss(std::span<const double> logits, std::size_t target, double kappa = 0.0);
/// max_k |s_k − t_k|, subgradient on the first maximizing coordinate.
LossValue linf_logit_gap(std::span<const double> student, std::span<const double> target);

}  // namespace splab
