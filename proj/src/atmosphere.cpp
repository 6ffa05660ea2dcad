#include "rio/atmosphere.hpp"

#include <cmath>
#include <stdexcept>

namespace rio {

namespace {
constexpr double kReferencePressure = 101290.0;  // [Pa]
constexpr double kTemperatureScale = 288.08;     // [K]
constexpr double kExponent = 1.0 / 5.256;
constexpr double kOffset = 273.1 + 15.04;        // [K]
constexpr double kLapseRate = -0.00649;          // [K/m]
}  // namespace

double pressure_to_altitude(double pressure_pa) {
  if (pressure_pa <= 0.0) {
    throw std::domain_error("pressure_to_altitude: pressure must be positive");
  }
  const double temperature = kTemperatureScale * std::pow(pressure_pa / kReferencePressure, kExponent);
  return (temperature - kOffset) / kLapseRate;
}

double altitude_to_pressure(double altitude_m) {
  const double temperature = kLapseRate * altitude_m + kOffset;
  if (temperature <= 0.0) {
    throw std::domain_error("altitude_to_pressure: altitude outside invertible range");
  }
  return kReferencePressure * std::pow(temperature / kTemperatureScale, 5.256);
}

double altitude_pressure_derivative(double pressure_pa) {
  const double t = kTemperatureScale * std::pow(pressure_pa / kReferencePressure, kExponent);
  return t * kExponent / (pressure_pa * kLapseRate);
}

}  // namespace rio
