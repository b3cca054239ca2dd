#pragma once

#include <cmath>
#include <cstdint>
#include <new>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace diveoff {

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

// Fixed 64-byte alignment for all numeric buffers. Identical computations
// then take identical SIMD code paths regardless of where the allocator put
// them, which keeps training bit-reproducible run to run.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, size_t) noexcept { ::operator delete(p, kAlign); }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
  template <class U>
  bool operator!=(const AlignedAllocator<U>&) const {
    return false;
  }
};

using AlignedF64 = std::vector<double, AlignedAllocator<double>>;

// Dense row-major tensor of doubles. Rank is 1 or 2 everywhere in this
// project; rank-2 shape is {rows, cols}.
struct Tensor {
  std::vector<int> shape;
  AlignedF64 data;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(d.begin(), d.end()) {
    require(static_cast<int64_t>(data.size()) == count(shape), "tensor: data length != product of shape");
  }

  static int64_t count(const std::vector<int>& s) {
    int64_t n = 1;
    for (int d : s) {
      require(d >= 0, "tensor: negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    Tensor t;
    t.shape = std::move(s);
    t.data.assign(static_cast<size_t>(count(t.shape)), 0.0);
    return t;
  }

  static Tensor full(std::vector<int> s, double v) {
    Tensor t = zeros(std::move(s));
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor vec(std::vector<double> v) {
    Tensor t;
    t.shape = {static_cast<int>(v.size())};
    t.data.assign(v.begin(), v.end());
    return t;
  }

  static Tensor matrix(int r, int c, std::vector<double> v) {
    require(static_cast<int64_t>(v.size()) == int64_t(r) * c, "tensor: matrix data size mismatch");
    Tensor t;
    t.shape = {r, c};
    t.data.assign(v.begin(), v.end());
    return t;
  }

  static Tensor scalar(double v) { return Tensor({1}, {v}); }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.empty() ? 1 : shape[0]; }
  int cols() const { return rank() < 2 ? 1 : shape[1]; }

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols() + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols() + j]; }
  double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline void require_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw std::runtime_error("non-finite values in " + what);
}

inline void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw std::runtime_error("non-finite value in " + what);
}

}  // namespace diveoff
