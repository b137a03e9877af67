#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace flatff {

/// Cartesian 3-vector in reduced length units.
struct Vec3 {
  std::array<double, 3> e{};

  constexpr Vec3() = default;
  constexpr Vec3(double x, double y, double z) : e{x, y, z} {}

  constexpr double& operator[](std::size_t k) { return e[k]; }
  constexpr double operator[](std::size_t k) const { return e[k]; }

  constexpr Vec3& operator+=(const Vec3& o) {
    for (std::size_t k = 0; k < 3; ++k) e[k] += o.e[k];
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    for (std::size_t k = 0; k < 3; ++k) e[k] -= o.e[k];
    return *this;
  }
  constexpr Vec3& operator*=(double s) {
    for (auto& c : e) c *= s;
    return *this;
  }

  friend constexpr Vec3 operator+(Vec3 a, const Vec3& b) { return a += b; }
  friend constexpr Vec3 operator-(Vec3 a, const Vec3& b) { return a -= b; }
  friend constexpr Vec3 operator*(Vec3 a, double s) { return a *= s; }
  friend constexpr Vec3 operator*(double s, Vec3 a) { return a *= s; }
  friend constexpr Vec3 operator-(Vec3 a) { return a *= -1.0; }
  friend constexpr bool operator==(const Vec3&, const Vec3&) = default;
};

constexpr double dot(const Vec3& a, const Vec3& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

inline double norm(const Vec3& a) { return std::sqrt(dot(a, a)); }

inline bool is_finite(const Vec3& a) {
  return std::isfinite(a[0]) && std::isfinite(a[1]) && std::isfinite(a[2]);
}

}  // namespace flatff
