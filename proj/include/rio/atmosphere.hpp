#pragma once

namespace rio {

// Troposphere pressure-altitude model used by the barometric factor:
//   h(p) = (288.08 (p/101290)^(1/5.256) - 273.1 - 15.04) / -0.00649
// Note h(101290 Pa) = 9.245 m, not zero; the altitude offset h0 absorbs it.
double pressure_to_altitude(double pressure_pa);

// Inverse of pressure_to_altitude. Throws std::domain_error outside the
// invertible branch (temperature term must stay positive).
double altitude_to_pressure(double altitude_m);

// d(altitude)/d(pressure) [m/Pa], used to map altitude noise into pressure.
double altitude_pressure_derivative(double pressure_pa);

}  // namespace rio
