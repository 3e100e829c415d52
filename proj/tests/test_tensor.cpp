#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "transt/gradcheck.hpp"
#include "transt/rng.hpp"
#include "transt/tensor.hpp"

using namespace transt;

namespace {

// Independent brute-force oracle: plain triple loop, ijt order.
Tensor naive_matmul(const Tensor& a, const Tensor& b) {
    const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
    Tensor c = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t) acc += a.at(i, t) * b.at(t, j);
            c.at(i, j) = acc;
        }
    return c;
}

template <class E>
std::string thrown_message(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const E& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("matmul identity and scalar cases") {
    Tape t;
    Tensor a = Tensor::matrix(2, 2, {3.5, -1.0, 0.25, 7.0});
    Tensor out = t.matmul(Tensor::identity(2), a);
    for (int i = 0; i < 4; ++i) CHECK(out.data[i] == a.data[i]);

    Tensor s = t.matmul(Tensor::matrix(1, 1, {2.0}), Tensor::matrix(1, 1, {3.0}));
    CHECK(s.item() == 6.0);
}

TEST_CASE("matmul matches triple-loop oracle") {
    Rng rng(7);
    Tape t;
    Tensor a = Tensor::uniform(rng, {5, 4}, -2.0, 2.0);
    Tensor b = Tensor::uniform(rng, {4, 3}, -2.0, 2.0);
    Tensor got = t.matmul(a, b);
    Tensor want = naive_matmul(a, b);
    for (std::size_t i = 0; i < want.data.size(); ++i)
        CHECK(std::fabs(got.data[i] - want.data[i]) <= 1e-12);
}

TEST_CASE("matmul matches oracle on random sizes up to 32x32") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 1 + static_cast<int>(rng.next_below(32));
        const int k = 1 + static_cast<int>(rng.next_below(32));
        const int n = 1 + static_cast<int>(rng.next_below(32));
        Tensor a = Tensor::uniform(rng, {m, k}, -3.0, 3.0);
        Tensor b = Tensor::uniform(rng, {k, n}, -3.0, 3.0);
        Tape t;
        Tensor got = t.matmul(a, b);
        Tensor want = naive_matmul(a, b);
        double worst = 0.0;
        for (std::size_t i = 0; i < want.data.size(); ++i)
            worst = std::max(worst, std::fabs(got.data[i] - want.data[i]));
        CHECK(worst <= 1e-12);
    }
}

TEST_CASE("matmul shape mismatch names both shapes") {
    Tape t;
    std::string what = thrown_message<ShapeError>([&] {
        t.matmul(Tensor::zeros({2, 3}), Tensor::zeros({4, 2}));
    });
    CHECK(what.find("[2x3]") != std::string::npos);
    CHECK(what.find("[4x2]") != std::string::npos);
}

TEST_CASE("softmax_rows basics") {
    Tape t;
    Tensor u = t.softmax_rows(Tensor::matrix(1, 4, {0.7, 0.7, 0.7, 0.7}));
    for (double v : u.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

    Tensor two = t.softmax_rows(Tensor::matrix(1, 2, {0.0, std::log(2.0)}));
    CHECK(two.data[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(two.data[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    Tensor big = t.softmax_rows(Tensor::matrix(1, 2, {1000.0, 1000.0}));
    CHECK(all_finite(big));
    CHECK(big.data[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(big.data[1] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("softmax rows sum to one for arbitrary finite input") {
    Rng rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const int m = 1 + static_cast<int>(rng.next_below(8));
        const int n = 1 + static_cast<int>(rng.next_below(12));
        Tensor x = Tensor::uniform(rng, {m, n}, -700.0, 700.0);
        Tape t;
        Tensor y = t.softmax_rows(x);
        REQUIRE(all_finite(y));
        for (int i = 0; i < m; ++i) {
            double s = 0.0;
            for (int j = 0; j < n; ++j) {
                CHECK(y.at(i, j) >= 0.0);
                s += y.at(i, j);
            }
            CHECK(std::fabs(s - 1.0) <= 1e-9);
        }
    }
}

TEST_CASE("elementwise basics") {
    Tape t;
    Tensor r = t.relu(Tensor({3}, {-1.0, 0.0, 2.0}));
    CHECK(r.data == std::vector<double>{0.0, 0.0, 2.0});

    Rng rng(3);
    Tensor x = Tensor::uniform(rng, {2, 3}, -1.0, 1.0);
    Tensor same = t.add(x, Tensor::zeros({2, 3}));
    CHECK(same.data == x.data);

    CHECK(t.sigmoid(Tensor::scalar(0.0)).item() == 0.5);
    CHECK(all_finite(t.sigmoid(Tensor::scalar(-800.0))));  // underflows to 0, stays finite
    CHECK(all_finite(t.sigmoid(Tensor::scalar(800.0))));
    CHECK(t.sigmoid(Tensor::scalar(800.0)).item() == 1.0);

    std::string what = thrown_message<ShapeError>([&] {
        t.add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2}));
    });
    CHECK(what.find("[2x3]") != std::string::npos);
    CHECK(what.find("[3x2]") != std::string::npos);
}

TEST_CASE("backward of sum of squares is 2x") {
    Tape t;
    Tensor x = t.leaf(Tensor({4}, {1.0, -2.0, 0.5, 3.0}));
    Tensor loss = t.sum(t.mul(x, x));
    auto grads = t.backward(loss);
    REQUIRE(grads.count(x.node) == 1);
    const Tensor& g = grads.at(x.node);
    for (int i = 0; i < 4; ++i) CHECK(g.data[i] == doctest::Approx(2.0 * x.data[i]).epsilon(1e-14));
}

TEST_CASE("leaf without requires_grad is absent from the gradient map") {
    Tape t;
    Tensor x = t.leaf(Tensor({2}, {1.0, 2.0}), true);
    Tensor c = t.leaf(Tensor({2}, {3.0, 4.0}), false);
    Tensor loss = t.sum(t.mul(x, c));
    auto grads = t.backward(loss);
    CHECK(grads.size() == 1);
    CHECK(grads.count(x.node) == 1);
}

TEST_CASE("backward rejects non-scalar loss") {
    Tape t;
    Tensor x = t.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
    Tensor y = t.mul(x, x);
    CHECK_THROWS_AS(t.backward(y), ContractError);
}

TEST_CASE("unreached watched leaf gets a zero gradient") {
    Tape t;
    Tensor x = t.leaf(Tensor({2}, {1.0, 2.0}));
    Tensor unused = t.leaf(Tensor({3}, {5.0, 6.0, 7.0}));
    Tensor loss = t.sum(x);
    auto grads = t.backward(loss);
    REQUIRE(grads.count(unused.node) == 1);
    CHECK(grads.at(unused.node).shape == std::vector<int>{3});
    for (double v : grads.at(unused.node).data) CHECK(v == 0.0);
}

TEST_CASE("gradient of matmul-softmax chain matches finite differences") {
    Rng rng(5);
    std::vector<NamedTensor> params = {
        {"a", Tensor::uniform(rng, {3, 4}, -1.0, 1.0)},
        {"b", Tensor::uniform(rng, {4, 5}, -1.0, 1.0)},
    };
    auto f = [](Tape& t, const std::vector<Tensor>& p) {
        return t.sum(t.mul(t.softmax_rows(t.matmul(p[0], p[1])),
                           t.softmax_rows(t.matmul(p[0], p[1]))));
    };
    auto report = finite_diff_check(f, params, 1e-5, 1e-5);
    CHECK(report.pass);
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("finite_diff_check on a quadratic is essentially exact") {
    std::vector<NamedTensor> params = {{"theta", Tensor({1}, {1.7})}};
    auto f = [](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.mul(p[0], p[0])); };
    auto report = finite_diff_check(f, params, 1e-4, 1e-10);
    CHECK(report.pass);
    CHECK(report.max_rel_err <= 1e-10);
}

TEST_CASE("finite_diff_compare flags a corrupted gradient") {
    std::vector<NamedTensor> params = {{"theta", Tensor({2}, {0.3, -0.9})}};
    auto f = [](Tape& t, const std::vector<Tensor>& p) { return t.sum(t.mul(p[0], p[0])); };
    auto analytic = tape_gradients(f, params);
    analytic[0].data[0] += 0.1;
    auto report = finite_diff_compare(f, params, analytic, 1e-5, 1e-4);
    CHECK(!report.pass);
    CHECK(report.params[0].worst_coord == 0);
}

// Kink-free random inputs so the subgradient choice cannot poison the check.
TEST_CASE("every op passes finite differences on random tensors") {
    Rng rng(99);
    auto away_from_zero = [&](const std::vector<int>& shape) {
        Tensor t = Tensor::uniform(rng, shape, 0.2, 1.0);
        for (double& v : t.data)
            if (rng.next_double() < 0.5) v = -v;
        return t;
    };
    Tensor a = away_from_zero({3, 4});
    Tensor b = away_from_zero({3, 4});
    for (std::size_t i = 0; i < b.data.size(); ++i)
        if (std::fabs(a.data[i] - b.data[i]) < 0.05) b.data[i] += 0.2;
    Tensor pos = Tensor::uniform(rng, {3, 4}, 0.5, 2.0);
    Tensor bias = away_from_zero({4});

    struct Case {
        const char* name;
        std::vector<NamedTensor> params;
        ScalarFn f;
    };
    std::vector<Case> cases;
    cases.push_back({"matmul",
                     {{"a", away_from_zero({3, 4})}, {"b", away_from_zero({4, 2})}},
                     [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.matmul(p[0], p[1]));
                     }});
    cases.push_back({"transpose", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.mul(t.transpose(p[0]), t.transpose(p[0])));
                     }});
    cases.push_back({"softmax_rows", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.softmax_rows(p[0]);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"add", {{"a", a}, {"b", b}}, [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.add(p[0], p[1]);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"sub", {{"a", a}, {"b", b}}, [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.sub(p[0], p[1]);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"mul", {{"a", a}, {"b", b}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.mul(p[0], p[1]));
                     }});
    cases.push_back({"div", {{"a", a}, {"b", pos}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.div(p[0], p[1]));
                     }});
    cases.push_back({"add_scalar", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.add_scalar(p[0], 0.7);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"mul_scalar", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.mul_scalar(p[0], -1.3);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"maximum", {{"a", a}, {"b", b}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.maximum(p[0], p[1]));
                     }});
    cases.push_back({"minimum", {{"a", a}, {"b", b}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.minimum(p[0], p[1]));
                     }});
    cases.push_back({"relu", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.relu(p[0]));
                     }});
    cases.push_back({"sigmoid", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.sigmoid(p[0]));
                     }});
    cases.push_back({"log", {{"a", pos}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.log(p[0]));
                     }});
    cases.push_back({"abs", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.abs(p[0]));
                     }});
    cases.push_back({"clamp", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(t.clamp(p[0], -0.9, 0.9));
                     }});
    cases.push_back({"sum", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.sum(p[0]);
                     }});
    cases.push_back({"mean", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         return t.mean(t.mul(p[0], p[0]));
                     }});
    cases.push_back({"add_row", {{"a", a}, {"bias", bias}},
                     [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.add_row(p[0], p[1]);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"concat_cols", {{"a", a}, {"b", b}},
                     [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.concat_cols({p[0], p[1]});
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"slice_cols", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.slice_cols(p[0], 1, 2);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"gather_rows", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.gather_rows(p[0], {2, 0, 2});
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"conv2d",
                     {{"x", away_from_zero({2, 5, 5})},
                      {"w", away_from_zero({3, 2, 3, 3})},
                      {"b", away_from_zero({3})}},
                     [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.conv2d(p[0], p[1], p[2], 2);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"flatten_spatial", {{"x", away_from_zero({2, 3, 4})}},
                     [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.flatten_spatial(p[0]);
                         return t.sum(t.mul(y, y));
                     }});
    cases.push_back({"layer_norm_rows", {{"a", a}}, [](Tape& t, const std::vector<Tensor>& p) {
                         Tensor y = t.layer_norm_rows(p[0]);
                         return t.sum(t.mul(y, y));
                     }});

    for (const Case& c : cases) {
        INFO(c.name);
        auto report = finite_diff_check(c.f, c.params, 1e-5, 1e-5);
        INFO(report.summary());
        CHECK(report.pass);
    }
}

TEST_CASE("conv2d center-only kernel reproduces the input") {
    Rng rng(13);
    Tensor x = Tensor::uniform(rng, {2, 4, 4}, -1.0, 1.0);
    Tensor w = Tensor::zeros({2, 2, 3, 3});
    // w[c][c][1][1] = 1
    for (int c = 0; c < 2; ++c) w.data[((c * 2 + c) * 3 + 1) * 3 + 1] = 1.0;
    Tape t;
    Tensor y = t.conv2d(x, w, Tensor::zeros({2}), 1);
    CHECK(y.shape == x.shape);
    for (std::size_t i = 0; i < x.data.size(); ++i)
        CHECK(y.data[i] == doctest::Approx(x.data[i]).epsilon(1e-15));

    // stride 2 with the same kernel picks every other pixel
    Tensor y2 = t.conv2d(x, w, Tensor::zeros({2}), 2);
    CHECK(y2.shape == std::vector<int>{2, 2, 2});
    for (int c = 0; c < 2; ++c)
        for (int i = 0; i < 2; ++i)
            for (int j = 0; j < 2; ++j)
                CHECK(y2.data[(c * 2 + i) * 2 + j] ==
                      doctest::Approx(x.data[(c * 4 + 2 * i) * 4 + 2 * j]));
}

TEST_CASE("flatten_spatial index layout") {
    // x[c][h][w] with values 100*c + 10*h + w
    Tensor x = Tensor::zeros({2, 2, 3});
    for (int c = 0; c < 2; ++c)
        for (int h = 0; h < 2; ++h)
            for (int w = 0; w < 3; ++w) x.data[(c * 2 + h) * 3 + w] = 100.0 * c + 10.0 * h + w;
    Tape t;
    Tensor f = t.flatten_spatial(x);
    CHECK(f.shape == std::vector<int>{6, 2});
    CHECK(f.at(0, 0) == 0.0);    // (h=0,w=0,c=0)
    CHECK(f.at(0, 1) == 100.0);  // c=1
    CHECK(f.at(2, 0) == 2.0);    // (h=0,w=2)
    CHECK(f.at(3, 0) == 10.0);   // (h=1,w=0)
    CHECK(f.at(5, 1) == 112.0);
}

TEST_CASE("rng streams are reproducible") {
    Rng a(20240817), b(20240817);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

    Rng r1(5), r2(5);
    Tensor t1 = Tensor::uniform(r1, {16, 16}, -1.0, 1.0);
    Tensor t2 = Tensor::uniform(r2, {16, 16}, -1.0, 1.0);
    CHECK(t1.data == t2.data);

    // normal() consumes a fixed number of draws
    Rng n1(9), n2(9);
    for (int i = 0; i < 10; ++i) CHECK(n1.normal(0.0, 1.0) == n2.normal(0.0, 1.0));
}

TEST_CASE("tensor invariant: shape must match data length") {
    CHECK_THROWS_AS(Tensor({2, 3}, {1.0, 2.0}), ShapeError);
    CHECK_THROWS_AS(Tensor({0}, {}), ShapeError);
    CHECK_THROWS_AS(Tensor({2, -1}, {1.0, 2.0}), ShapeError);
}
