#include "rio/state.hpp"

#include <stdexcept>

namespace rio {

NavState retract(const NavState& state, const Vec15& delta) {
  if (!delta.allFinite()) {
    throw std::invalid_argument("retract: non-finite state delta");
  }
  NavState out = state;
  out.rotation = state.rotation * Rotation::exp(delta.segment<3>(kRotBlock));
  out.position += delta.segment<3>(kPosBlock);
  out.velocity += delta.segment<3>(kVelBlock);
  out.gyro_bias += delta.segment<3>(kBgBlock);
  out.accel_bias += delta.segment<3>(kBaBlock);
  return out;
}

Vec15 local_coordinates(const NavState& origin, const NavState& target) {
  Vec15 delta;
  delta.segment<3>(kRotBlock) = (origin.rotation.inverse() * target.rotation).log();
  delta.segment<3>(kPosBlock) = target.position - origin.position;
  delta.segment<3>(kVelBlock) = target.velocity - origin.velocity;
  delta.segment<3>(kBgBlock) = target.gyro_bias - origin.gyro_bias;
  delta.segment<3>(kBaBlock) = target.accel_bias - origin.accel_bias;
  return delta;
}

}  // namespace rio
