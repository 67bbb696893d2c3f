#include <gtest/gtest.h>

#include <sstream>

#include "vamkit/error.hpp"
#include "vamkit/rng.hpp"
#include "vamkit/tensor.hpp"

using namespace vamkit;

namespace {

Tensor vec(std::vector<float> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{1, n, 1, 1}, std::move(v));
}

Tensor random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Stream rng(seed);
    Tensor t(s);
    for (float& v : t.data()) v = static_cast<float>(rng.uniform(lo, hi));
    return t;
}

}  // namespace

TEST(TensorNew, ZeroFill) {
    const Tensor t = tensor_new({1, 1, 2, 2}, 0.0f);
    ASSERT_EQ(t.size(), 4u);
    for (float v : t.data()) EXPECT_EQ(v, 0.0f);
}

TEST(TensorNew, OnesCountAndSum) {
    const Tensor t = tensor_new({2, 3, 4, 4}, 1.0f);
    EXPECT_EQ(t.size(), 96u);
    EXPECT_EQ(total(t), 96.0);
}

TEST(TensorNew, ZeroExtentRejected) {
    try {
        tensor_new({1, 1, 1, 0}, 0.0f);
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("zero extent"), std::string::npos);
    }
}

TEST(TensorNew, NonFiniteFillRejected) {
    EXPECT_THROW(tensor_new({1, 1, 1, 1}, std::numeric_limits<float>::infinity()), Error);
}

TEST(EwBinary, Examples) {
    EXPECT_EQ(mul(vec({2, 4}), vec({0.5f, 0.5f})), vec({1, 2}));
    const Tensor x = random_tensor({2, 3, 2, 2}, 5);
    EXPECT_EQ(add(x, Tensor(x.shape(), 0.0f)), x);
}

TEST(EwBinary, ShapeMismatch) {
    try {
        add(vec({1}), Tensor(Shape{1, 2, 1, 1}, 0.0f));
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("shape mismatch"), std::string::npos);
    }
}

TEST(EwBinary, OverflowReported) {
    EXPECT_THROW(mul(vec({3e38f}), vec({10.0f})), Error);
}

TEST(EwBinary, MulCommutativeWithOnesIdentity) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Tensor a = random_tensor({2, 3, 4, 5}, seed);
        const Tensor b = random_tensor({2, 3, 4, 5}, seed + 100);
        EXPECT_EQ(mul(a, b), mul(b, a));
        EXPECT_EQ(mul(a, Tensor(a.shape(), 1.0f)), a);
    }
}

TEST(ReduceSum, Examples) {
    const Tensor s = reduce_sum(vec({1, 2, 3}), kAxisC);
    EXPECT_EQ(s.shape(), (Shape{1, 1, 1, 1}));
    EXPECT_EQ(s[0], 6.0f);

    const Tensor x = random_tensor({2, 3, 2, 2}, 9);
    EXPECT_EQ(reduce_sum(x, 0), x);

    const Tensor c = reduce_sum(tensor_new({1, 4, 2, 2}, 1.0f), kAxisH | kAxisW);
    EXPECT_EQ(c.shape(), (Shape{1, 4, 1, 1}));
    for (float v : c.data()) EXPECT_EQ(v, 4.0f);
}

TEST(ReduceSum, AllAxesMatchesArithmeticSum) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Tensor x = random_tensor({4, 8, 16, 16}, seed, -1e3, 1e3);
        double expected = 0.0;
        for (float v : x.data()) expected += v;
        const Tensor s = reduce_sum(x, kAxisN | kAxisC | kAxisH | kAxisW);
        EXPECT_LE(std::abs(s[0] - expected), 1e-6 * std::max(1.0, std::abs(expected)) + 1e-6 * 1e3);
    }
}

TEST(Blob, RoundTrip) {
    const Tensor x = random_tensor({2, 3, 4, 5}, 1);
    std::stringstream buf;
    write_blob(buf, x);
    EXPECT_EQ(buf.str().size(), 16u + 4u * x.size());
    EXPECT_EQ(read_blob(buf, "mem"), x);
}

TEST(Blob, TruncatedIsShortRead) {
    const Tensor x = random_tensor({1, 2, 2, 2}, 1);
    std::stringstream buf;
    write_blob(buf, x);
    std::string bytes = buf.str();
    bytes.resize(bytes.size() - 3);
    std::stringstream cut(bytes);
    try {
        read_blob(cut, "mem");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("short read"), std::string::npos);
    }
}
