#include "rio/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace rio {

namespace {
// 95% asymptotic efficiency at the unit Gaussian, verified against the
// quadrature oracle in the test suite (e(c) in [0.949, 0.951]).
constexpr double kFairConstant = 1.3997768125;
constexpr double kHuberConstant = 1.3449975183;
constexpr double kCauchyConstant = 2.3849471194;
constexpr double kWelschConstant = 2.9846371763;
}  // namespace

RobustLoss RobustLoss::make(LossKind kind) {
  RobustLoss loss;
  loss.kind = kind;
  loss.tuning_constant = kind == LossKind::kQuadratic ? 1.0 : efficiency_tuning_constant(kind);
  return loss;
}

double loss_value(const RobustLoss& loss, double x) {
  const double ax = std::abs(x);
  const double c = loss.tuning_constant;
  switch (loss.kind) {
    case LossKind::kQuadratic:
      return 0.5 * x * x;
    case LossKind::kFair:
      return c * c * (ax / c - std::log1p(ax / c));
    case LossKind::kHuber:
      return ax <= c ? 0.5 * x * x : c * ax - 0.5 * c * c;
    case LossKind::kCauchy:
      return 0.5 * c * c * std::log1p((x / c) * (x / c));
    case LossKind::kWelsch:
      return 0.5 * c * c * (1.0 - std::exp(-(x / c) * (x / c)));
  }
  throw std::logic_error("loss_value: unknown kind");
}

double loss_weight(const RobustLoss& loss, double x) {
  const double ax = std::abs(x);
  const double c = loss.tuning_constant;
  switch (loss.kind) {
    case LossKind::kQuadratic:
      return 1.0;
    case LossKind::kFair:
      return 1.0 / (1.0 + ax / c);
    case LossKind::kHuber:
      return ax <= c ? 1.0 : c / ax;
    case LossKind::kCauchy:
      return 1.0 / (1.0 + (x / c) * (x / c));
    case LossKind::kWelsch:
      return std::exp(-(x / c) * (x / c));
  }
  throw std::logic_error("loss_weight: unknown kind");
}

double efficiency_tuning_constant(LossKind kind) {
  switch (kind) {
    case LossKind::kQuadratic:
      throw std::invalid_argument("quadratic loss has no tuning constant");
    case LossKind::kFair:
      return kFairConstant;
    case LossKind::kHuber:
      return kHuberConstant;
    case LossKind::kCauchy:
      return kCauchyConstant;
    case LossKind::kWelsch:
      return kWelschConstant;
  }
  throw std::logic_error("efficiency_tuning_constant: unknown kind");
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "quadratic") return LossKind::kQuadratic;
  if (name == "fair") return LossKind::kFair;
  if (name == "huber") return LossKind::kHuber;
  if (name == "cauchy") return LossKind::kCauchy;
  if (name == "welsch") return LossKind::kWelsch;
  throw std::invalid_argument("unknown loss kind: " + name +
                              " (expected quadratic|fair|huber|cauchy|welsch)");
}

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::kQuadratic: return "quadratic";
    case LossKind::kFair: return "fair";
    case LossKind::kHuber: return "huber";
    case LossKind::kCauchy: return "cauchy";
    case LossKind::kWelsch: return "welsch";
  }
  return "unknown";
}

}  // namespace rio
