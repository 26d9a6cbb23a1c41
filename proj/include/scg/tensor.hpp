#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace scg {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

/// Raised for every shape or extent mismatch in the tensor library.
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised when an operation is evaluated outside its mathematical domain.
class DomainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major N-dimensional array.
///
/// Storage is a contiguous Eigen column vector; `matrix()` exposes a
/// row-major view where the first extent is the row count and the
/// remaining extents are flattened into columns. Rank-1 tensors view as a
/// single row.
template <typename Scalar>
class Tensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, Array data);
  Tensor(Shape shape, std::initializer_list<Scalar> values);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, Scalar value);
  static Tensor scalar(Scalar value) { return full({1}, value); }
  static Tensor from_matrix(const RowMatrix& m);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return static_cast<std::size_t>(data_.size()); }
  std::size_t rows() const noexcept { return shape_.empty() ? 0 : (rank() == 1 ? 1 : shape_[0]); }
  std::size_t cols() const noexcept { return rows() == 0 ? 0 : size() / rows(); }
  bool empty() const noexcept { return data_.size() == 0; }

  Array& data() noexcept { return data_; }
  const Array& data() const noexcept { return data_; }
  Scalar* raw() noexcept { return data_.data(); }
  const Scalar* raw() const noexcept { return data_.data(); }

  MatrixMap matrix();
  ConstMatrixMap matrix() const;

  Scalar& operator[](std::size_t i) { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar operator[](std::size_t i) const { return data_[static_cast<Eigen::Index>(i)]; }
  Scalar& at(std::size_t r, std::size_t c);
  Scalar at(std::size_t r, std::size_t c) const;
  Scalar item() const;

  bool requires_grad() const noexcept { return requires_grad_; }
  Tensor& set_requires_grad(bool on = true) {
    requires_grad_ = on;
    return *this;
  }

  /// Gradient buffer; present only after `zero_grad` or an accumulation.
  const std::optional<Array>& grad() const noexcept { return grad_; }
  std::optional<Array>& grad() noexcept { return grad_; }
  void zero_grad() { grad_ = Array::Zero(data_.size()); }
  void accumulate_grad(const Array& g);

  Tensor reshaped(Shape shape) const;

  template <typename Other>
  Tensor<Other> cast() const {
    Tensor<Other> out(shape_);
    out.data() = data_.template cast<Other>();
    out.set_requires_grad(requires_grad_);
    return out;
  }

 private:
  Shape shape_;
  Array data_;
  bool requires_grad_ = false;
  std::optional<Array> grad_;
};

/// Binary tensor container: "SCGT", u32 version, u32 rank, u64 extents,
/// then little-endian float32 row-major values. Several records may be
/// concatenated in one file.
inline constexpr std::uint32_t kContainerVersion = 1;

void write_tensor(std::ostream& out, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& in);

void save_tensors(const std::string& path, const std::vector<Tensor<float>>& tensors);
std::vector<Tensor<float>> load_tensors(const std::string& path);

template <typename Scalar>
void save_tensor(const std::string& path, const Tensor<Scalar>& t) {
  save_tensors(path, {t.template cast<float>()});
}

}  // namespace scg
