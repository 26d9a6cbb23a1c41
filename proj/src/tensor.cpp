#include "scg/tensor.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>

namespace scg {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  if (shape.size() == 1) os << ',';
  os << ')';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw DimensionError("tensor rank must be at least 1");
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + to_string(shape));
  }
}

}  // namespace

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_ = Array::Zero(static_cast<Eigen::Index>(shape_size(shape_)));
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, Array data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (shape_size(shape_) != static_cast<std::size_t>(data_.size())) {
    throw DimensionError("shape " + to_string(shape_) + " holds " +
                         std::to_string(shape_size(shape_)) + " values, got " +
                         std::to_string(data_.size()));
  }
}

template <typename Scalar>
Tensor<Scalar>::Tensor(Shape shape, std::initializer_list<Scalar> values)
    : Tensor(std::move(shape),
             Eigen::Map<const Array>(values.begin(), static_cast<Eigen::Index>(values.size()))) {}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::full(Shape shape, Scalar value) {
  Tensor t(std::move(shape));
  t.data_.setConstant(value);
  return t;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::from_matrix(const RowMatrix& m) {
  Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  t.matrix() = m;
  return t;
}

template <typename Scalar>
typename Tensor<Scalar>::MatrixMap Tensor<Scalar>::matrix() {
  return MatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                   static_cast<Eigen::Index>(cols()));
}

template <typename Scalar>
typename Tensor<Scalar>::ConstMatrixMap Tensor<Scalar>::matrix() const {
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(cols()));
}

template <typename Scalar>
Scalar& Tensor<Scalar>::at(std::size_t r, std::size_t c) {
  return data_[static_cast<Eigen::Index>(r * cols() + c)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::at(std::size_t r, std::size_t c) const {
  return data_[static_cast<Eigen::Index>(r * cols() + c)];
}

template <typename Scalar>
Scalar Tensor<Scalar>::item() const {
  if (size() != 1) throw DimensionError("item() on tensor of shape " + to_string(shape_));
  return data_[0];
}

template <typename Scalar>
void Tensor<Scalar>::accumulate_grad(const Array& g) {
  if (g.size() != data_.size()) {
    throw DimensionError("gradient of size " + std::to_string(g.size()) +
                         " for tensor of shape " + to_string(shape_));
  }
  if (!grad_) grad_ = Array::Zero(data_.size());
  *grad_ += g;
}

template <typename Scalar>
Tensor<Scalar> Tensor<Scalar>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template class Tensor<float>;
template class Tensor<double>;

// Container IO. Values are written byte-by-byte in little-endian order so
// files are portable regardless of host byte order.

namespace {

constexpr std::array<char, 4> kMagic = {'S', 'C', 'G', 'T'};

template <typename U>
void put_le(std::ostream& out, U value) {
  std::array<char, sizeof(U)> bytes{};
  for (std::size_t i = 0; i < sizeof(U); ++i) {
    bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <typename U>
U get_le(std::istream& in) {
  std::array<unsigned char, sizeof(U)> bytes{};
  in.read(reinterpret_cast<char*>(bytes.data()), bytes.size());
  if (!in) throw std::runtime_error("tensor container: unexpected end of file");
  U value = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) value |= static_cast<U>(bytes[i]) << (8 * i);
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor<float>& t) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint32_t>(out, kContainerVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
  for (std::size_t i = 0; i < t.size(); ++i) put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(t[i]));
}

Tensor<float> read_tensor(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (!in || magic != kMagic) throw std::runtime_error("tensor container: bad magic bytes");
  const auto version = get_le<std::uint32_t>(in);
  if (version != kContainerVersion) {
    throw std::runtime_error("tensor container: unsupported version " + std::to_string(version));
  }
  const auto rank = get_le<std::uint32_t>(in);
  if (rank == 0 || rank > 8) throw std::runtime_error("tensor container: bad rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(get_le<std::uint64_t>(in));
  Tensor<float> t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = std::bit_cast<float>(get_le<std::uint32_t>(in));
  return t;
}

void save_tensors(const std::string& path, const std::vector<Tensor<float>>& tensors) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (const auto& t : tensors) write_tensor(out, t);
  if (!out) throw std::runtime_error("failed writing " + path);
}

std::vector<Tensor<float>> load_tensors(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open tensor container " + path);
  std::vector<Tensor<float>> out;
  while (in.peek() != std::char_traits<char>::eof()) out.push_back(read_tensor(in));
  return out;
}

}  // namespace scg
