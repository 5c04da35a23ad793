#pragma once

#include <array>
#include <cmath>
#include <cstddef>

namespace diffraster {

template <typename T>
struct Vec2 {
  T x{}, y{};

  constexpr Vec2() = default;
  constexpr Vec2(T x_, T y_) : x(x_), y(y_) {}

  constexpr Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
  constexpr Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
  constexpr Vec2 operator*(T s) const { return {x * s, y * s}; }
  constexpr Vec2 operator/(T s) const { return {x / s, y / s}; }
  constexpr Vec2 operator-() const { return {-x, -y}; }
  constexpr Vec2& operator+=(const Vec2& o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  constexpr Vec2& operator-=(const Vec2& o) {
    x -= o.x;
    y -= o.y;
    return *this;
  }
  constexpr bool operator==(const Vec2&) const = default;
};

template <typename T>
constexpr T dot(const Vec2<T>& a, const Vec2<T>& b) {
  return a.x * b.x + a.y * b.y;
}

// 2D cross product (z component of the 3D cross of the embedded vectors).
template <typename T>
constexpr T cross2(const Vec2<T>& a, const Vec2<T>& b) {
  return a.x * b.y - a.y * b.x;
}

template <typename T>
T norm(const Vec2<T>& v) {
  return std::sqrt(dot(v, v));
}

template <typename T>
struct Vec3 {
  T x{}, y{}, z{};

  constexpr Vec3() = default;
  constexpr Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}

  constexpr Vec3 operator+(const Vec3& o) const {
    return {x + o.x, y + o.y, z + o.z};
  }
  constexpr Vec3 operator-(const Vec3& o) const {
    return {x - o.x, y - o.y, z - o.z};
  }
  constexpr Vec3 operator*(T s) const { return {x * s, y * s, z * s}; }
  constexpr Vec3 operator/(T s) const { return {x / s, y / s, z / s}; }
  constexpr Vec3 operator-() const { return {-x, -y, -z}; }
  constexpr Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  constexpr Vec3& operator-=(const Vec3& o) {
    x -= o.x;
    y -= o.y;
    z -= o.z;
    return *this;
  }
  constexpr Vec3& operator*=(T s) {
    x *= s;
    y *= s;
    z *= s;
    return *this;
  }
  constexpr T operator[](std::size_t i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr T& operator[](std::size_t i) { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr bool operator==(const Vec3&) const = default;
};

template <typename T>
constexpr Vec3<T> operator*(T s, const Vec3<T>& v) {
  return v * s;
}

template <typename T>
constexpr T dot(const Vec3<T>& a, const Vec3<T>& b) {
  return a.x * b.x + a.y * b.y + a.z * b.z;
}

template <typename T>
constexpr Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

template <typename T>
T norm(const Vec3<T>& v) {
  return std::sqrt(dot(v, v));
}

template <typename T>
Vec3<T> normalized(const Vec3<T>& v) {
  return v / norm(v);
}

// Adjoint of c = cross(a, b): accumulates into grad_a / grad_b given the
// upstream gradient on c.
template <typename T>
void cross_backward(const Vec3<T>& a, const Vec3<T>& b, const Vec3<T>& grad_c,
                    Vec3<T>& grad_a, Vec3<T>& grad_b) {
  grad_a += cross(b, grad_c);
  grad_b += cross(grad_c, a);
}

// Adjoint of u = v / |v|. `v` is the pre-normalization input; returns the
// gradient with respect to v given the gradient on u.
template <typename T>
Vec3<T> normalize_backward(const Vec3<T>& v, const Vec3<T>& grad_unit) {
  const T n = norm(v);
  const Vec3<T> u = v / n;
  return (grad_unit - u * dot(grad_unit, u)) / n;
}

template <typename T>
struct Vec4 {
  T x{}, y{}, z{}, w{};
};

// Row-major 4x4 matrix; transforms column vectors (m * v).
template <typename T>
struct Mat4 {
  std::array<std::array<T, 4>, 4> m{};

  static constexpr Mat4 identity() {
    Mat4 r;
    for (int i = 0; i < 4; ++i) r.m[i][i] = T(1);
    return r;
  }

  constexpr Mat4 operator*(const Mat4& o) const {
    Mat4 r;
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        T s = T(0);
        for (int k = 0; k < 4; ++k) s += m[i][k] * o.m[k][j];
        r.m[i][j] = s;
      }
    return r;
  }

  constexpr Vec4<T> operator*(const Vec4<T>& v) const {
    return {m[0][0] * v.x + m[0][1] * v.y + m[0][2] * v.z + m[0][3] * v.w,
            m[1][0] * v.x + m[1][1] * v.y + m[1][2] * v.z + m[1][3] * v.w,
            m[2][0] * v.x + m[2][1] * v.y + m[2][2] * v.z + m[2][3] * v.w,
            m[3][0] * v.x + m[3][1] * v.y + m[3][2] * v.z + m[3][3] * v.w};
  }

  constexpr Vec4<T> transform_point(const Vec3<T>& p) const {
    return *this * Vec4<T>{p.x, p.y, p.z, T(1)};
  }
};

}  // namespace diffraster
