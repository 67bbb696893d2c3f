#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vamkit {

/// Extents of a rank-4 (N, C, H, W) tensor.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t count() const { return n * c * h * w; }
    bool empty() const { return n == 0 || c == 0 || h == 0 || w == 0; }
    std::string str() const;

    friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense row-major (N, C, H, W) array.
///
/// The library computes in float32 (`Tensor`); the same code is instantiated
/// for double (`TensorD`) so gradient checks can run without float rounding.
/// A default-constructed tensor is empty and rejected by every compute
/// operation. Operations return new tensors and never modify their inputs.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    /// Throws on a zero extent or a non-finite fill value.
    explicit BasicTensor(Shape shape, T fill = T(0));
    /// Takes ownership of `data`; its length must equal shape.count().
    BasicTensor(Shape shape, std::vector<T> data);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* raw() { return data_.data(); }
    const T* raw() const { return data_.data(); }

    std::size_t index(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return ((n * shape_.c + c) * shape_.h + h) * shape_.w + w;
    }
    T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) { return data_[index(n, c, h, w)]; }
    T at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const { return data_[index(n, c, h, w)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    T operator[](std::size_t i) const { return data_[i]; }

    /// Same data viewed under another shape with the same element count.
    BasicTensor reshaped(Shape shape) const;

    friend bool operator==(const BasicTensor&, const BasicTensor&) = default;

private:
    Shape shape_{};
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& t) {
    if (t.empty()) return {};
    return BasicTensor<To>(t.shape(), std::vector<To>(t.data().begin(), t.data().end()));
}

enum class BinaryOp { add, sub, mul };

/// Reduction axes as a bit set.
enum Axis : unsigned { kAxisN = 1u, kAxisC = 2u, kAxisH = 4u, kAxisW = 8u };

Tensor tensor_new(Shape shape, float fill);

template <typename T>
BasicTensor<T> ew_binary(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryOp op);
template <typename T>
BasicTensor<T> add(const BasicTensor<T>& a, const BasicTensor<T>& b) { return ew_binary(a, b, BinaryOp::add); }
template <typename T>
BasicTensor<T> sub(const BasicTensor<T>& a, const BasicTensor<T>& b) { return ew_binary(a, b, BinaryOp::sub); }
template <typename T>
BasicTensor<T> mul(const BasicTensor<T>& a, const BasicTensor<T>& b) { return ew_binary(a, b, BinaryOp::mul); }

/// Sums over the axes in `axes` (a combination of Axis flags); reduced axes keep extent 1.
template <typename T>
BasicTensor<T> reduce_sum(const BasicTensor<T>& a, unsigned axes);

/// Sum of all elements with a 64-bit accumulator.
template <typename T>
double total(const BasicTensor<T>& a);

/// Throws vamkit::Error naming `what` if any element is NaN or infinite.
template <typename T>
void check_finite(const BasicTensor<T>& a, std::string_view what);
template <typename T>
void check_nonempty(const BasicTensor<T>& a, std::string_view what);
template <typename T>
void check_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, std::string_view what);

/// Blob format: four little-endian u32 extents (N, C, H, W) followed by
/// N*C*H*W little-endian IEEE-754 float32 values.
void write_blob(std::ostream& out, const Tensor& t);
Tensor read_blob(std::istream& in, std::string_view source);
void save_blob(const std::filesystem::path& path, const Tensor& t);
Tensor load_blob(const std::filesystem::path& path);

}  // namespace vamkit
