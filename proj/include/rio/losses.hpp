#pragma once

#include <string>

namespace rio {

enum class LossKind { kQuadratic, kFair, kHuber, kCauchy, kWelsch };

// Robust loss rho applied to normalized residuals x = ||r|| / sigma.
// loss_value is the cost contribution, loss_weight the IRLS weight
// w(x) = rho'(x)/x with w(0) = 1.
struct RobustLoss {
  LossKind kind{LossKind::kQuadratic};
  double tuning_constant{1.0};  // dimensionless, unused for quadratic

  static RobustLoss make(LossKind kind);
};

double loss_value(const RobustLoss& loss, double x);
double loss_weight(const RobustLoss& loss, double x);

// Tuning constant giving 95% asymptotic efficiency at the unit Gaussian.
// Throws std::invalid_argument for the quadratic kind.
double efficiency_tuning_constant(LossKind kind);

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);

}  // namespace rio
