#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cocktail/augmentation.hpp"
#include "cocktail/errors.hpp"

#include <cmath>
#include <set>

using namespace cocktail;

namespace {

Matrix random_matrix(size_t rows, size_t cols, Rng& rng) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.normal(0.0, 1.0);
    return m;
}

bool rows_are_convex_mixes(const AugmentedBatch& b, const Matrix& x, const Matrix& y) {
    if (b.partner.empty()) return false;
    for (size_t r = 0; r < x.rows; ++r) {
        const size_t p = b.partner[r];
        for (size_t c = 0; c < x.cols; ++c) {
            const double want = b.lambda * x(r, c) + (1.0 - b.lambda) * x(p, c);
            if (std::fabs(b.x(r, c) - want) > 1e-12) return false;
        }
        for (size_t c = 0; c < y.cols; ++c) {
            const double want = b.lambda * y(r, c) + (1.0 - b.lambda) * y(p, c);
            if (std::fabs(b.y_soft(r, c) - want) > 1e-12) return false;
        }
    }
    return true;
}

} // namespace

TEST_CASE("one-hot targets") {
    const Matrix y = one_hot({2, 0, 1}, 3);
    CHECK(y.rows == 3);
    CHECK(y.cols == 3);
    CHECK(y(0, 2) == 1.0);
    CHECK(y(1, 0) == 1.0);
    CHECK(y(2, 1) == 1.0);
    double sum = 0.0;
    for (double v : y.data) sum += v;
    CHECK(sum == 3.0);
    CHECK_THROWS_AS(one_hot({3}, 3), ContractViolation);
}

TEST_CASE("mixup blends rows and targets with one shared lambda") {
    Rng rng(5);
    const Matrix x = random_matrix(16, 6, rng);
    const Matrix y = one_hot(std::vector<int>(16, 1), 4);
    Rng aug(9);
    const AugmentedBatch b = mixup(x, y, 0.4, aug);
    CHECK(b.kind == "mixup");
    CHECK(b.lambda >= 0.0);
    CHECK(b.lambda <= 1.0);
    CHECK(rows_are_convex_mixes(b, x, y));
    // soft labels stay row-stochastic
    for (size_t r = 0; r < b.y_soft.rows; ++r) {
        double s = 0.0;
        for (size_t c = 0; c < b.y_soft.cols; ++c) s += b.y_soft(r, c);
        CHECK(s == doctest::Approx(1.0));
    }
}

TEST_CASE("mixup with a pinned permutation and lambda is exact") {
    Rng rng(6);
    const Matrix x = random_matrix(3, 2, rng);
    const Matrix y = one_hot({0, 1, 2}, 3);
    const AugmentedBatch b = mixup_with(x, y, {1, 2, 0}, 0.25);
    CHECK(b.x(0, 0) == doctest::Approx(0.25 * x(0, 0) + 0.75 * x(1, 0)));
    CHECK(b.y_soft(0, 0) == doctest::Approx(0.25));
    CHECK(b.y_soft(0, 1) == doctest::Approx(0.75));
    CHECK(b.y_soft(2, 2) == doctest::Approx(0.25));
    CHECK(b.y_soft(2, 0) == doctest::Approx(0.75));
}

TEST_CASE("mixup demands a positive concentration") {
    Rng rng(7);
    const Matrix x = random_matrix(4, 3, rng);
    const Matrix y = one_hot({0, 1, 0, 1}, 2);
    Rng aug(8);
    CHECK_THROWS_AS(mixup(x, y, 0.0, aug), ContractViolation);
}

TEST_CASE("cutmix copies a partner feature block of size round((1-lambda)d)") {
    Rng rng(11);
    const Matrix x = random_matrix(8, 10, rng);
    const Matrix y = one_hot({0, 1, 0, 1, 0, 1, 0, 1}, 2);
    const std::vector<size_t> perm{1, 0, 3, 2, 5, 4, 7, 6};
    const std::vector<size_t> subset{0, 3, 7};
    const AugmentedBatch b = cutmix_with(x, y, perm, subset);
    CHECK(b.kind == "cutmix");
    CHECK(b.lambda == doctest::Approx(1.0 - 3.0 / 10.0));
    const std::set<size_t> s(subset.begin(), subset.end());
    for (size_t r = 0; r < x.rows; ++r)
        for (size_t c = 0; c < x.cols; ++c) {
            const double want = s.count(c) ? x(perm[r], c) : x(r, c);
            CHECK(b.x(r, c) == want);
        }
    // targets soften by the surviving fraction
    CHECK(b.y_soft(0, 0) == doctest::Approx(0.7));
    CHECK(b.y_soft(0, 1) == doctest::Approx(0.3));
}

TEST_CASE("cutmix subset size tracks the drawn lambda") {
    Rng rng(13);
    const Matrix x = random_matrix(6, 20, rng);
    const Matrix y = one_hot({0, 1, 2, 0, 1, 2}, 3);
    for (int i = 0; i < 50; ++i) {
        const AugmentedBatch b = cutmix(x, y, 1.0, rng);
        REQUIRE(b.kind == "cutmix");
        // |S| = round((1-λdrawn)·d) and λ' = 1 − |S|/d, so |S| = (1-λ')·d exactly
        const double k = std::round((1.0 - b.lambda) * 20.0);
        CHECK(double(b.features.size()) == k);
    }
}

TEST_CASE("cutmix below its gate probability is the identity") {
    Rng rng(17);
    const Matrix x = random_matrix(4, 5, rng);
    const Matrix y = one_hot({0, 1, 0, 1}, 2);
    const AugmentedBatch b = cutmix(x, y, 0.0, rng);
    CHECK(b.lambda == 1.0);
    CHECK(b.partner.empty());
    CHECK(b.x.data == x.data);
    CHECK(b.y_soft.data == y.data);
}

TEST_CASE("cutout zeroes the chosen fraction per affected row, labels untouched") {
    Rng rng(19);
    Matrix x = random_matrix(64, 10, rng);
    for (auto& v : x.data) v += 3.0; // keep natural zeros out of the data
    const Matrix y = one_hot(std::vector<int>(64, 0), 2);
    Rng aug(23);
    const AugmentedBatch b = cutout(x, y, 0.5, 0.3, aug);
    CHECK(b.kind == "cutout");
    CHECK(b.y_soft.data == y.data); // hard labels survive
    size_t touched = 0;
    for (size_t r = 0; r < x.rows; ++r) {
        size_t zeros = 0;
        for (size_t c = 0; c < x.cols; ++c) zeros += b.x(r, c) == 0.0;
        if (zeros > 0) {
            CHECK(zeros == 3); // round(0.3 * 10)
            ++touched;
        }
    }
    CHECK(touched > 16); // roughly half the rows
    CHECK(touched < 48);

    Rng aug2(29);
    const AugmentedBatch none = cutout(x, y, 0.0, 0.3, aug2);
    CHECK(none.x.data == x.data);
}

TEST_CASE("the adversarial step moves each coordinate by epsilon against the sign") {
    Matrix x(2, 3);
    x.data = {1.0, -2.0, 0.5, 0.0, 3.0, -1.0};
    Matrix g(2, 3);
    g.data = {0.2, -0.4, 0.0, 1.0, -0.1, 0.3};
    const Matrix adv = fgsm(x, g, 0.25);
    CHECK(adv.data == std::vector<double>{1.25, -2.25, 0.5, 0.25, 2.75, -0.75});
    CHECK_THROWS_AS(fgsm(x, Matrix(1, 3), 0.1), ContractViolation);
}
