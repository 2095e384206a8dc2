#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "latnet/errors.hpp"
#include "latnet/tensor.hpp"

using namespace latnet;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Independent of the Eigen-backed implementation: plain triple loop.
Tensor matmul_reference(const Tensor& a, const Tensor& b) {
    const Index m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    for (Index i = 0; i < m; ++i)
        for (Index j = 0; j < n; ++j) {
            double acc = 0.0;
            for (Index p = 0; p < k; ++p) acc += a(i, p) * b(p, j);
            out(i, j) = acc;
        }
    return out;
}

// Direct 6-loop convolution with zero padding.
Tensor conv_reference(const Tensor& x, const Tensor& kern, const Tensor& bias, Index stride,
                      Index pad) {
    const Index ci = x.dim(0), h = x.dim(1), w = x.dim(2);
    const Index co = kern.dim(0), kh = kern.dim(2), kw = kern.dim(3);
    const Index oh = (h + 2 * pad - kh) / stride + 1;
    const Index ow = (w + 2 * pad - kw) / stride + 1;
    Tensor out({co, oh, ow});
    for (Index o = 0; o < co; ++o)
        for (Index y = 0; y < oh; ++y)
            for (Index z = 0; z < ow; ++z) {
                double acc = bias[o];
                for (Index c = 0; c < ci; ++c)
                    for (Index u = 0; u < kh; ++u)
                        for (Index v = 0; v < kw; ++v) {
                            const Index iy = y * stride + u - pad;
                            const Index iz = z * stride + v - pad;
                            if (iy < 0 || iy >= h || iz < 0 || iz >= w) continue;
                            acc += x(c, iy, iz) * kern(o, c, u, v);
                        }
                out(o, y, z) = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("tensor construction and indexing") {
    Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(t.rank() == 2);
    CHECK(t.size() == 6);
    CHECK(t(0, 0) == 1.0);
    CHECK(t(1, 2) == 6.0);
    CHECK(t[5] == 6.0);

    Tensor z = Tensor::zeros({4});
    CHECK(z.array().abs().sum() == 0.0);

    Tensor id = Tensor::identity(3);
    CHECK(id(0, 0) == 1.0);
    CHECK(id(0, 1) == 0.0);
    CHECK(id.array().sum() == 3.0);

    CHECK_THROWS_AS(Tensor({2, 2}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({-1, 2}), ShapeError);
}

TEST_CASE("reshape preserves data and rejects bad sizes") {
    Rng rng(7);
    Tensor t = random_tensor(rng, {3, 4});
    Tensor r = reshape(t, {2, 6});
    CHECK(r.shape() == Shape{2, 6});
    for (Index i = 0; i < t.size(); ++i) CHECK(r[i] == t[i]);
    CHECK_THROWS_AS(reshape(t, {5, 2}), ShapeError);
}

TEST_CASE("sign, clamp, norms") {
    Tensor t({5}, {-2.0, -0.0, 0.0, 0.5, 3.0});
    Tensor s = sign(t);
    CHECK(s[0] == -1.0);
    CHECK(s[1] == 0.0);  // sign(0) = 0
    CHECK(s[2] == 0.0);
    CHECK(s[3] == 1.0);
    CHECK(s[4] == 1.0);

    Tensor c = clamp(t, -1.0, 1.0);
    CHECK(c[0] == -1.0);
    CHECK(c[4] == 1.0);
    CHECK(c[3] == 0.5);

    CHECK(linf_norm(t) == 3.0);
    CHECK(l2_norm(Tensor({2}, {3.0, 4.0})) == doctest::Approx(5.0).epsilon(1e-12));
    CHECK(norm_of(t, Norm::linf) == 3.0);
}

TEST_CASE("matmul matches triple-loop reference") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const Index m = 1 + static_cast<Index>(rng.below(8));
        const Index k = 1 + static_cast<Index>(rng.below(8));
        const Index n = 1 + static_cast<Index>(rng.below(8));
        Tensor a = random_tensor(rng, {m, k});
        Tensor b = random_tensor(rng, {k, n});
        Tensor got = matmul(a, b);
        Tensor want = matmul_reference(a, b);
        REQUIRE(got.shape() == want.shape());
        for (Index i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
    Tensor a = random_tensor(rng, {4, 4});
    Tensor id = Tensor::identity(4);
    CHECK(matmul(a, id) == a);
    CHECK_THROWS_AS(matmul(random_tensor(rng, {2, 3}), random_tensor(rng, {2, 3})), ShapeError);
}

TEST_CASE("conv2d matches direct six-loop reference") {
    Rng rng(13);
    struct Case {
        Index ci, h, w, co, kh, kw, stride, pad;
    };
    const Case cases[] = {
        {1, 5, 5, 2, 3, 3, 1, 0}, {2, 6, 6, 3, 3, 3, 1, 1}, {3, 8, 7, 2, 5, 3, 1, 2},
        {2, 8, 8, 4, 2, 2, 2, 0}, {1, 28, 28, 4, 5, 5, 1, 2},
    };
    for (const Case& c : cases) {
        Tensor x = random_tensor(rng, {c.ci, c.h, c.w});
        Tensor k = random_tensor(rng, {c.co, c.ci, c.kh, c.kw});
        Tensor b = random_tensor(rng, {c.co});
        Tensor got = conv2d(x, k, b, c.stride, c.pad);
        Tensor want = conv_reference(x, k, b, c.stride, c.pad);
        REQUIRE(got.shape() == want.shape());
        for (Index i = 0; i < got.size(); ++i)
            CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv2d rejects inconsistent geometry") {
    Rng rng(17);
    Tensor x = random_tensor(rng, {2, 6, 6});
    Tensor k = random_tensor(rng, {3, 2, 3, 3});
    Tensor b = random_tensor(rng, {3});
    CHECK_THROWS_AS(conv2d(x, random_tensor(rng, {3, 1, 3, 3}), b, 1, 0), ShapeError);
    CHECK_THROWS_AS(conv2d(x, k, random_tensor(rng, {2}), 1, 0), ShapeError);
    CHECK_THROWS_AS(conv2d(x, k, b, 4, 0), ShapeError);  // (6-3) % 4 != 0
    CHECK_THROWS_AS(conv2d(x, random_tensor(rng, {3, 2, 7, 7}), b, 1, 0), ShapeError);
}

TEST_CASE("splitmix64 streams are deterministic and split-independent") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng parent(1);
    Rng s1 = parent.split(1);
    Rng s2 = parent.split(2);
    CHECK(s1.next_u64() != s2.next_u64());

    // splitting does not advance the parent
    Rng p1(9), p2(9);
    (void)p1.split(3);
    CHECK(p1.next_u64() == p2.next_u64());
}

TEST_CASE("rng uniform and below ranges") {
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const double u = rng.uniform();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        const double v = rng.uniform(-2.0, 3.0);
        CHECK(v >= -2.0);
        CHECK(v < 3.0);
        CHECK(rng.below(7) < 7);
    }
}

TEST_CASE("rng normal moments") {
    Rng rng(99);
    const int n = 20000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.03);
    CHECK(std::abs(var - 1.0) < 0.05);
}

TEST_CASE("sample_uniform_ball respects budgets") {
    Rng rng(23);
    Tensor center = random_tensor(rng, {16}, 0.2, 0.8);

    for (int i = 0; i < 50; ++i) {
        Tensor p = sample_uniform_ball(rng, center, 0.1, Norm::linf);
        CHECK(linf_norm(p - center) <= 0.1 + 1e-12);
        Tensor q = sample_uniform_ball(rng, center, 0.25, Norm::l2);
        CHECK(l2_norm(q - center) <= 0.25 + 1e-12);
    }

    // zero budget returns the center and consumes no randomness
    Rng r1(77), r2(77);
    Tensor same = sample_uniform_ball(r1, center, 0.0, Norm::linf);
    CHECK(same == center);
    CHECK(r1.next_u64() == r2.next_u64());

    CHECK_THROWS_AS(sample_uniform_ball(rng, center, -0.1, Norm::linf), ArgumentError);
}

TEST_CASE("l2 ball sampling is not concentrated at the surface") {
    Rng rng(31);
    Tensor center = Tensor::zeros({3});
    int inner = 0;
    const int n = 2000;
    for (int i = 0; i < n; ++i) {
        Tensor p = sample_uniform_ball(rng, center, 1.0, Norm::l2);
        if (l2_norm(p) < 0.9) ++inner;
    }
    // uniform volume: P(r < 0.9) = 0.9^3 = 0.729
    CHECK(inner > n * 0.65);
    CHECK(inner < n * 0.80);
}
