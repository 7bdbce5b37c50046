#pragma once

#include <string>

#include "casediag/ops.hpp"
#include "casediag/tensor.hpp"

namespace casediag {

struct LossConfig {
  double margin = 1.0;    // contrastive margin m
  double omega = 1.5;     // segmentation loss weight
  double dice_eps = 1e-5;

  void validate() const {
    if (margin <= 0) throw ConfigError("loss: margin must be > 0");
    if (omega < 0) throw ConfigError("loss: omega must be >= 0");
    if (dice_eps <= 0) throw ConfigError("loss: dice_eps must be > 0");
  }

  bool operator==(const LossConfig&) const = default;
};

/// l_c = y*d + (1-y)*max(0, m-d). y=1 means the pair shares the
/// benign/malignant class. The subgradient at d == m (y=0) is 0.
template <typename Scalar>
Tensor<Scalar> contrastive_loss(const Tensor<Scalar>& d, int y, Scalar margin) {
  if (d.numel() != 1)
    throw DimensionError("contrastive_loss: d must be scalar, got shape " + shape_str(d.shape()));
  if (d.value() < Scalar(0))
    throw DomainError("contrastive_loss: distance must be >= 0, got " +
                      std::to_string(double(d.value())));
  if (y != 0 && y != 1)
    throw ParameterError("contrastive_loss: y must be 0 or 1, got " + std::to_string(y));
  if (y == 1) return d;
  return relu(add_scalar(scale(d, Scalar(-1)), margin));
}

/// Soft Dice term 1 - (2*sum(p.*g) + eps) / (sum(p) + sum(g) + eps) with
/// p = sigmoid(logits).
template <typename Scalar>
Tensor<Scalar> dice_loss(const Tensor<Scalar>& pred_logits, const Tensor<Scalar>& target_mask,
                         Scalar eps) {
  detail::check_same_shape("dice_loss", pred_logits, target_mask);
  if (((target_mask.values() != Scalar(0)) && (target_mask.values() != Scalar(1))).any())
    throw DomainError("dice_loss: target mask must be binary");
  Tensor<Scalar> p = sigmoid(pred_logits);
  Tensor<Scalar> num = add_scalar(scale(sum(mul(p, target_mask)), Scalar(2)), eps);
  Tensor<Scalar> den = add_scalar(add(sum(p), sum(target_mask)), eps);
  return add_scalar(scale(div(num, den), Scalar(-1)), Scalar(1));
}

/// DiceCE segmentation loss: soft Dice plus mean binary cross-entropy,
/// summed with equal weight.
template <typename Scalar>
Tensor<Scalar> dice_ce_loss(const Tensor<Scalar>& pred_logits, const Tensor<Scalar>& target_mask,
                            Scalar eps) {
  return add(dice_loss(pred_logits, target_mask, eps), bce_with_logits(pred_logits, target_mask));
}

/// L = l_c(d, y) + omega * (l_s(M1~, M1) + l_s(M2~, M2)).
template <typename Scalar>
Tensor<Scalar> combined_loss(const Tensor<Scalar>& d, int y, const Tensor<Scalar>& pred_mask1,
                             const Tensor<Scalar>& target_mask1, const Tensor<Scalar>& pred_mask2,
                             const Tensor<Scalar>& target_mask2, const LossConfig& cfg) {
  Tensor<Scalar> lc = contrastive_loss(d, y, Scalar(cfg.margin));
  Tensor<Scalar> ls = add(dice_ce_loss(pred_mask1, target_mask1, Scalar(cfg.dice_eps)),
                          dice_ce_loss(pred_mask2, target_mask2, Scalar(cfg.dice_eps)));
  return add(lc, scale(ls, Scalar(cfg.omega)));
}

}  // namespace casediag
