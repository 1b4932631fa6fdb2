#include "cocktail/augmentation.hpp"

#include "cocktail/errors.hpp"

#include <cmath>

namespace cocktail {

Matrix one_hot(const std::vector<int>& y, size_t n_classes) {
    Matrix out(y.size(), n_classes);
    for (size_t r = 0; r < y.size(); ++r) {
        require(y[r] >= 0 && static_cast<size_t>(y[r]) < n_classes,
                "class index out of range");
        out(r, static_cast<size_t>(y[r])) = 1.0;
    }
    return out;
}

AugmentedBatch mixup_with(const Matrix& x, const Matrix& y,
                          const std::vector<size_t>& perm, double lambda) {
    require(x.rows == y.rows, "feature and target row counts differ");
    require(perm.size() == x.rows, "permutation size mismatch");
    AugmentedBatch out;
    out.kind = "mixup";
    out.lambda = lambda;
    out.partner = perm;
    out.x = Matrix(x.rows, x.cols);
    out.y_soft = Matrix(y.rows, y.cols);
    for (size_t r = 0; r < x.rows; ++r) {
        const size_t p = perm[r];
        for (size_t c = 0; c < x.cols; ++c)
            out.x(r, c) = lambda * x(r, c) + (1.0 - lambda) * x(p, c);
        for (size_t c = 0; c < y.cols; ++c)
            out.y_soft(r, c) = lambda * y(r, c) + (1.0 - lambda) * y(p, c);
    }
    return out;
}

AugmentedBatch mixup(const Matrix& x, const Matrix& y, double alpha, Rng& rng) {
    require(alpha > 0.0, "mixup alpha must be positive");
    const auto perm = rng.permutation(x.rows);
    const double lambda = rng.beta_symmetric(alpha);
    return mixup_with(x, y, perm, lambda);
}

AugmentedBatch cutmix_with(const Matrix& x, const Matrix& y,
                           const std::vector<size_t>& perm,
                           const std::vector<size_t>& subset) {
    require(x.rows == y.rows, "feature and target row counts differ");
    require(perm.size() == x.rows, "permutation size mismatch");
    AugmentedBatch out;
    out.kind = "cutmix";
    out.partner = perm;
    out.features = subset;
    out.lambda =
        1.0 - static_cast<double>(subset.size()) / static_cast<double>(x.cols);
    out.x = x;
    out.y_soft = Matrix(y.rows, y.cols);
    for (size_t r = 0; r < x.rows; ++r) {
        const size_t p = perm[r];
        for (size_t f : subset) {
            require(f < x.cols, "cutmix feature index out of range");
            out.x(r, f) = x(p, f);
        }
        for (size_t c = 0; c < y.cols; ++c)
            out.y_soft(r, c) = out.lambda * y(r, c) + (1.0 - out.lambda) * y(p, c);
    }
    return out;
}

AugmentedBatch cutmix(const Matrix& x, const Matrix& y, double prob, Rng& rng) {
    require(prob >= 0.0 && prob <= 1.0, "cutmix probability outside [0, 1]");
    require(x.rows == y.rows, "feature and target row counts differ");
    if (!rng.bernoulli(prob)) {
        AugmentedBatch out;
        out.kind = "cutmix";
        out.x = x;
        out.y_soft = y;
        return out;
    }
    const auto perm = rng.permutation(x.rows);
    const double lambda = rng.uniform01();
    const auto k = static_cast<size_t>(
        std::llround((1.0 - lambda) * static_cast<double>(x.cols)));
    const auto feature_order = rng.permutation(x.cols);
    std::vector<size_t> subset(feature_order.begin(), feature_order.begin() + k);
    return cutmix_with(x, y, perm, subset);
}

AugmentedBatch cutout(const Matrix& x, const Matrix& y, double prob, double ratio,
                      Rng& rng) {
    require(prob >= 0.0 && prob <= 1.0, "cutout probability outside [0, 1]");
    require(ratio >= 0.0 && ratio <= 1.0, "cutout ratio outside [0, 1]");
    require(x.rows == y.rows, "feature and target row counts differ");
    AugmentedBatch out;
    out.kind = "cutout";
    out.x = x;
    out.y_soft = y;
    const auto k = static_cast<size_t>(
        std::llround(ratio * static_cast<double>(x.cols)));
    for (size_t r = 0; r < x.rows; ++r) {
        if (!rng.bernoulli(prob) || k == 0) continue;
        const auto feature_order = rng.permutation(x.cols);
        for (size_t i = 0; i < k; ++i) out.x(r, feature_order[i]) = 0.0;
    }
    return out;
}

Matrix fgsm(const Matrix& x, const Matrix& dinput, double epsilon) {
    require(epsilon >= 0.0, "adversarial step size must be nonnegative");
    require(x.rows == dinput.rows && x.cols == dinput.cols,
            "input and gradient shapes differ");
    Matrix out = x;
    for (size_t i = 0; i < out.data.size(); ++i) {
        const double g = dinput.data[i];
        out.data[i] += epsilon * (g > 0.0 ? 1.0 : g < 0.0 ? -1.0 : 0.0);
    }
    return out;
}

} // namespace cocktail
