#pragma once

#include <cstddef>
#include <initializer_list>
#include <new>
#include <numeric>
#include <vector>

#include "segcl/error.hpp"

namespace segcl {

/// 64-byte-aligned allocator. Keeping every buffer on the same alignment
/// keeps vectorized kernels on one code path, so numerical results do not
/// depend on where the heap happened to place an allocation.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t alignment = 64;

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(alignment)));
  }
  void deallocate(T* p, std::size_t) { ::operator delete(p, std::align_val_t(alignment)); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

template <typename T>
using AlignedVec = std::vector<T, AlignedAllocator<T>>;

/// Dense row-major n-d array. Thin value type: shape + flat storage.
template <typename T>
struct Tensor {
  std::vector<int> shape;
  AlignedVec<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) { data.assign(numel_of(shape), T(0)); }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      require(d >= 0, "tensor.shape", "negative dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  std::size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  void reshape(std::vector<int> s) {
    require(numel_of(s) == data.size(), "tensor.shape", "reshape changes element count");
    shape = std::move(s);
  }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  // Rank-specific accessors used by image code (N,C,H,W) and matrices (N,M).
  T& at4(int n, int c, int y, int x) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  const T& at4(int n, int c, int y, int x) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + y) * shape[3] + x];
  }
  T& at3(int a, int b, int c) {
    return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
  }
  const T& at3(int a, int b, int c) const {
    return data[(static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c];
  }
  T& at2(int r, int c) { return data[static_cast<std::size_t>(r) * shape[1] + c]; }
  const T& at2(int r, int c) const { return data[static_cast<std::size_t>(r) * shape[1] + c]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }
};

template <typename T>
void axpy(T alpha, const Tensor<T>& x, Tensor<T>& y) {
  require(x.numel() == y.numel(), "tensor.shape", "axpy size mismatch");
  for (std::size_t i = 0; i < x.numel(); ++i) y[i] += alpha * x[i];
}

}  // namespace segcl
