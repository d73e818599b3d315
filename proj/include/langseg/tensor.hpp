#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "langseg/errors.hpp"
#include "langseg/rng.hpp"

namespace langseg {

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_product(const Shape& shape);

// 64-byte-aligned storage. Keeps every buffer the GEMM backend sees at a
// constant alignment, so vector peeling decisions (and therefore summation
// order) cannot vary with heap layout; bitwise run-to-run determinism
// depends on this.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::size_t kAlign = 64;

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), std::align_val_t(kAlign)));
  }
  void deallocate(T* p, std::size_t n) {
    ::operator delete(p, n * sizeof(T), std::align_val_t(kAlign));
  }
  template <class U>
  bool operator==(const AlignedAllocator<U>&) const {
    return true;
  }
};

using DoubleVec = std::vector<double, AlignedAllocator<double>>;

// Dense row-major tensor of doubles. Values are treated as immutable once an
// operation has produced them; mutation is reserved for construction sites
// (parameter init, optimizer updates, gradient accumulation).
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(checked_size(shape_), 0.0) {}

  Tensor(Shape shape, const std::vector<double>& data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    check_length();
  }

  Tensor(Shape shape, DoubleVec data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_length();
  }

  Tensor(Shape shape, std::initializer_list<double> data)
      : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    check_length();
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, double value) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = value;
    return t;
  }

  static Tensor scalar(double value) { return Tensor({1}, {value}); }

  static Tensor uniform(Shape shape, double lo, double hi, SplitMix64& rng) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = rng.next_range(lo, hi);
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_[i]; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  DoubleVec& values() { return data_; }
  const DoubleVec& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  // [d0, d1] row-major
  double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
  double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

  // [d0, d1, d2]
  double& at(std::size_t i, std::size_t j, std::size_t k) {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }
  double at(std::size_t i, std::size_t j, std::size_t k) const {
    return data_[(i * shape_[1] + j) * shape_[2] + k];
  }

  // [d0, d1, d2, d3]
  double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  double item() const {
    if (size() != 1) {
      throw ShapeError("item() requires a single-element tensor, got shape " +
                       shape_to_string(shape_));
    }
    return data_[0];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;

  bool operator==(const Tensor& other) const {
    return shape_ == other.shape_ && data_ == other.data_;
  }

 private:
  static std::size_t checked_size(const Shape& shape);

  void check_length() const {
    if (data_.size() != checked_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_to_string(shape_));
    }
  }

  Shape shape_;
  DoubleVec data_;
};

// Flat binary tensor format: ASCII header "TNSR v1 <rank> <d0> <d1> ...\n"
// followed by little-endian 8-byte doubles in row-major order.
void write_tnsr(std::ostream& out, const Tensor& t);
Tensor read_tnsr(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace langseg
