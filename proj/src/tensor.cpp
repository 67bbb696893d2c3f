#include "vamkit/tensor.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "vamkit/error.hpp"

namespace vamkit {

std::string Shape::str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," + std::to_string(h) + "," +
           std::to_string(w) + ")";
}

namespace {

void check_shape(const Shape& s) {
    if (s.empty()) throw Error("zero extent in shape " + s.str());
}

}  // namespace

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
    check_shape(shape);
    if (!std::isfinite(fill)) throw Error("non-finite fill value");
    data_.assign(shape.count(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    check_shape(shape);
    if (data_.size() != shape.count())
        throw Error("data length " + std::to_string(data_.size()) + " does not match shape " + shape.str());
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const {
    return BasicTensor(shape, data_);
}

Tensor tensor_new(Shape shape, float fill) { return Tensor(shape, fill); }

template <typename T>
void check_nonempty(const BasicTensor<T>& a, std::string_view what) {
    if (a.empty()) throw Error(std::string(what) + ": empty tensor");
}

template <typename T>
void check_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, std::string_view what) {
    if (a.shape() != b.shape())
        throw Error(std::string(what) + ": shape mismatch " + a.shape().str() + " vs " + b.shape().str());
}

template <typename T>
void check_finite(const BasicTensor<T>& a, std::string_view what) {
    for (T v : a.data()) {
        if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite value");
    }
}

template <typename T>
BasicTensor<T> ew_binary(const BasicTensor<T>& a, const BasicTensor<T>& b, BinaryOp op) {
    check_nonempty(a, "ew_binary");
    check_same_shape(a, b, "ew_binary");
    std::vector<T> out(a.size());
    const auto x = a.data();
    const auto y = b.data();
    switch (op) {
        case BinaryOp::add:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
            break;
        case BinaryOp::sub:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
            break;
        case BinaryOp::mul:
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
            break;
    }
    BasicTensor<T> result(a.shape(), std::move(out));
    check_finite(result, "ew_binary");
    return result;
}

template <typename T>
BasicTensor<T> reduce_sum(const BasicTensor<T>& a, unsigned axes) {
    check_nonempty(a, "reduce_sum");
    const Shape in = a.shape();
    const Shape out_shape{(axes & kAxisN) ? 1 : in.n, (axes & kAxisC) ? 1 : in.c, (axes & kAxisH) ? 1 : in.h,
                          (axes & kAxisW) ? 1 : in.w};
    std::vector<double> acc(out_shape.count(), 0.0);
    for (std::size_t n = 0; n < in.n; ++n)
        for (std::size_t c = 0; c < in.c; ++c)
            for (std::size_t h = 0; h < in.h; ++h)
                for (std::size_t w = 0; w < in.w; ++w) {
                    const std::size_t on = (axes & kAxisN) ? 0 : n;
                    const std::size_t oc = (axes & kAxisC) ? 0 : c;
                    const std::size_t oh = (axes & kAxisH) ? 0 : h;
                    const std::size_t ow = (axes & kAxisW) ? 0 : w;
                    acc[((on * out_shape.c + oc) * out_shape.h + oh) * out_shape.w + ow] += a.at(n, c, h, w);
                }
    std::vector<T> out(acc.begin(), acc.end());
    BasicTensor<T> result(out_shape, std::move(out));
    check_finite(result, "reduce_sum");
    return result;
}

template <typename T>
double total(const BasicTensor<T>& a) {
    double s = 0.0;
    for (T v : a.data()) s += v;
    return s;
}

namespace {

void put_u32(std::ostream& out, std::uint32_t v) {
    const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                                static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    out.write(b.data(), 4);
}

std::uint32_t get_u32(const unsigned char* b) {
    return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) | (std::uint32_t(b[2]) << 16) |
           (std::uint32_t(b[3]) << 24);
}

}  // namespace

void write_blob(std::ostream& out, const Tensor& t) {
    check_nonempty(t, "write_blob");
    const Shape s = t.shape();
    for (std::size_t e : {s.n, s.c, s.h, s.w}) put_u32(out, static_cast<std::uint32_t>(e));
    for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
    if (!out) throw IoError("write_blob: stream failure");
}

Tensor read_blob(std::istream& in, std::string_view source) {
    std::array<unsigned char, 16> header{};
    in.read(reinterpret_cast<char*>(header.data()), header.size());
    if (in.gcount() != static_cast<std::streamsize>(header.size()))
        throw IoError(std::string(source) + ": short read in tensor header");
    const Shape s{get_u32(&header[0]), get_u32(&header[4]), get_u32(&header[8]), get_u32(&header[12])};
    if (s.empty()) throw IoError(std::string(source) + ": zero extent in tensor header");
    std::vector<unsigned char> bytes(s.count() * 4);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
        throw IoError(std::string(source) + ": short read in tensor data");
    std::vector<float> data(s.count());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] = std::bit_cast<float>(get_u32(&bytes[4 * i]));
    Tensor t(s, std::move(data));
    check_finite(t, source);
    return t;
}

#define VAMKIT_INSTANTIATE(T)                                                                   \
    template class BasicTensor<T>;                                                               \
    template BasicTensor<T> ew_binary(const BasicTensor<T>&, const BasicTensor<T>&, BinaryOp);   \
    template BasicTensor<T> reduce_sum(const BasicTensor<T>&, unsigned);                         \
    template double total(const BasicTensor<T>&);                                                \
    template void check_finite(const BasicTensor<T>&, std::string_view);                         \
    template void check_nonempty(const BasicTensor<T>&, std::string_view);                       \
    template void check_same_shape(const BasicTensor<T>&, const BasicTensor<T>&, std::string_view);

VAMKIT_INSTANTIATE(float)
VAMKIT_INSTANTIATE(double)
#undef VAMKIT_INSTANTIATE

void save_blob(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    write_blob(out, t);
}

Tensor load_blob(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_blob(in, path.string());
}

}  // namespace vamkit
