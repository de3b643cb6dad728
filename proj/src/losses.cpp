#include "splab/losses.hpp"

#include <algorithm>
#include <cmath>

namespace splab {

Vec softmax(std::span<const double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  Vec p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (double& v : p) v /= s;
  return p;
}

LossValue l2_logit_loss(std::span<const double> student, std::span<const double> target) {
  LossValue out{0.0, sub(student, target)};
  for (double g : out.grad) out.value += 0.5 * g * g;
  return out;
}

LossValue cross_entropy(std::span<const double> logits, std::size_t label) {
  if (label >= logits.size()) throw ShapeError("cross_entropy: label out of range");
  LossValue out{0.0, softmax(logits)};
  out.value = -std::log(std::max(out.grad[label], 1e-300));
  out.grad[label] -= 1.0;
  return out;
}

LossValue soft_cross_entropy(std::span<const double> logits, std::span<const double> probs) {
  if (probs.size() != logits.size()) throw ShapeError("soft_cross_entropy: length mismatch");
  const Vec p = softmax(logits);
  LossValue out{0.0, Vec(p.size())};
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (probs[k] > 0.0) out.value -= probs[k] * std::log(std::max(p[k], 1e-300));
    out.grad[k] = p[k] - probs[k];
  }
  return out;
}

LossValue cw_margin_loss(std::span<const double> logits, std::size_t target, double kappa) {
  if (logits.size() < 2) throw ShapeError("cw_margin_loss: need at least two classes");
  if (target >= logits.size()) throw ShapeError("cw_margin_loss: target out of range");
  std::size_t other = target == 0 ? 1 : 0;
  for (std::size_t k = 0; k < logits.size(); ++k)
    if (k != target && logits[k] > logits[other]) other = k;
  const double margin = logits[target] - logits[other];
  LossValue out{0.0, Vec(logits.size(), 0.0)};
  if (margin > -kappa) {
    out.value = -margin;
    out.grad[target] = -1.0;
    out.grad[other] = 1.0;
  } else {
    out.value = kappa;
  }
  return out;
}

LossValue linf_logit_gap(std::span<const double> student, std::span<const double> target) {
  if (student.size() != target.size()) throw ShapeError("linf_logit_gap: length mismatch");
  LossValue out{0.0, Vec(student.size(), 0.0)};
  std::size_t best = 0;
  for (std::size_t k = 0; k < student.size(); ++k) {
    const double g = std::abs(student[k] - target[k]);
    if (g > out.value) {
      out.value = g;
      best = k;
    }
  }
  const double diff = student[best] - target[best];
  out.grad[best] = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
  return out;
}

}  // namespace splab
