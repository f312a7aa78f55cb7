#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>

#include "condwalk/error.hpp"

namespace condwalk {

inline constexpr int kMaxDim = 6;

/// A point of Z^d with a small fixed capacity, so sites never allocate.
class Site {
 public:
  Site() = default;
  explicit Site(int dim) : dim_(check_dim(dim)) {}
  Site(std::initializer_list<std::int64_t> coords) : dim_(check_dim(static_cast<int>(coords.size()))) {
    int i = 0;
    for (auto c : coords) x_[i++] = c;
  }
  explicit Site(std::span<const std::int64_t> coords) : dim_(check_dim(static_cast<int>(coords.size()))) {
    for (int i = 0; i < dim_; ++i) x_[i] = coords[i];
  }

  static Site unit(int dim, int axis, int sign = 1) {
    Site s(dim);
    s.x_[axis] = sign;
    return s;
  }

  int dim() const noexcept { return dim_; }
  std::int64_t operator[](int i) const noexcept { return x_[i]; }
  std::int64_t& operator[](int i) noexcept { return x_[i]; }
  std::span<const std::int64_t> coords() const noexcept { return {x_.data(), static_cast<std::size_t>(dim_)}; }

  Site& operator+=(const Site& o) noexcept {
    for (int i = 0; i < dim_; ++i) x_[i] += o.x_[i];
    return *this;
  }
  Site& operator-=(const Site& o) noexcept {
    for (int i = 0; i < dim_; ++i) x_[i] -= o.x_[i];
    return *this;
  }
  friend Site operator+(Site a, const Site& b) noexcept { return a += b; }
  friend Site operator-(Site a, const Site& b) noexcept { return a -= b; }

  /// Move along direction index `dir` in the order (+e1, -e1, +e2, -e2, ...).
  Site step(int dir) const noexcept {
    Site s = *this;
    s.x_[dir / 2] += (dir % 2 == 0) ? 1 : -1;
    return s;
  }

  std::int64_t l1_norm() const noexcept {
    std::int64_t n = 0;
    for (int i = 0; i < dim_; ++i) n += x_[i] < 0 ? -x_[i] : x_[i];
    return n;
  }

  double dot(std::span<const double> v) const noexcept {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += static_cast<double>(x_[i]) * v[i];
    return s;
  }

  friend bool operator==(const Site& a, const Site& b) noexcept {
    if (a.dim_ != b.dim_) return false;
    for (int i = 0; i < a.dim_; ++i)
      if (a.x_[i] != b.x_[i]) return false;
    return true;
  }
  friend std::strong_ordering operator<=>(const Site& a, const Site& b) noexcept {
    if (auto c = a.dim_ <=> b.dim_; c != 0) return c;
    for (int i = 0; i < a.dim_; ++i)
      if (auto c = a.x_[i] <=> b.x_[i]; c != 0) return c;
    return std::strong_ordering::equal;
  }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < dim_; ++i) {
      if (i) s += ",";
      s += std::to_string(x_[i]);
    }
    return s + ")";
  }

 private:
  static int check_dim(int d) {
    if (d < 1 || d > kMaxDim) fail(ErrorKind::kInvalidArgument, "dimension out of range: " + std::to_string(d));
    return d;
  }

  std::array<std::int64_t, kMaxDim> x_{};
  int dim_ = 0;
};

inline bool adjacent(const Site& a, const Site& b) noexcept { return a.dim() == b.dim() && (a - b).l1_norm() == 1; }

struct SiteHash {
  std::size_t operator()(const Site& s) const noexcept {
    std::uint64_t h = 0x9E3779B97F4A7C15ULL ^ static_cast<std::uint64_t>(s.dim());
    for (int i = 0; i < s.dim(); ++i) {
      h ^= static_cast<std::uint64_t>(s[i]) + 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
  }
};

/// Axis-aligned box of lattice sites, bounds inclusive.
struct LatticeBox {
  Site lo;
  Site hi;

  bool contains(const Site& s) const noexcept {
    for (int i = 0; i < s.dim(); ++i)
      if (s[i] < lo[i] || s[i] > hi[i]) return false;
    return true;
  }

  std::size_t volume() const noexcept {
    std::size_t v = 1;
    for (int i = 0; i < lo.dim(); ++i) v *= static_cast<std::size_t>(hi[i] - lo[i] + 1);
    return v;
  }

  static LatticeBox centered(const Site& c, std::int64_t radius) {
    LatticeBox b{c, c};
    for (int i = 0; i < c.dim(); ++i) {
      b.lo[i] -= radius;
      b.hi[i] += radius;
    }
    return b;
  }

  template <class F>
  void for_each(F&& f) const {
    Site s = lo;
    const int d = lo.dim();
    for (;;) {
      f(static_cast<const Site&>(s));
      int i = 0;
      while (i < d) {
        if (++s[i] <= hi[i]) break;
        s[i] = lo[i];
        ++i;
      }
      if (i == d) return;
    }
  }
};

}  // namespace condwalk
