#ifndef COCKTAIL_AUGMENTATION_HPP
#define COCKTAIL_AUGMENTATION_HPP

#include "cocktail/matrix.hpp"
#include "cocktail/rng.hpp"

#include <string>
#include <vector>

namespace cocktail {

Matrix one_hot(const std::vector<int>& y, size_t n_classes);

struct AugmentedBatch {
    Matrix x;
    Matrix y_soft;                 // convex combinations of one-hot rows
    std::string kind;              // which augmentation produced it
    double lambda = 1.0;           // realized mixing weight (1 = untouched)
    std::vector<size_t> partner;   // row permutation used, empty if none
    std::vector<size_t> features;  // feature subset copied/masked, empty if none
};

// x_i := λ x_i + (1−λ) x_{π(i)}, same for targets; one λ ~ Beta(alpha, alpha)
// and one permutation π per batch (π drawn first).
AugmentedBatch mixup(const Matrix& x, const Matrix& y, double alpha, Rng& rng);
AugmentedBatch mixup_with(const Matrix& x, const Matrix& y,
                          const std::vector<size_t>& perm, double lambda);

// With batch-level probability `prob`: draw π and λ ~ U(0,1), copy a random
// feature subset S with |S| = round((1−λ)·d) from the π-partner, and soften
// targets by λ' = 1 − |S|/d. Otherwise the identity.
AugmentedBatch cutmix(const Matrix& x, const Matrix& y, double prob, Rng& rng);
AugmentedBatch cutmix_with(const Matrix& x, const Matrix& y,
                           const std::vector<size_t>& perm,
                           const std::vector<size_t>& subset);

// Per row, with probability `prob`, zero round(ratio·d) uniformly chosen
// features (0 is the standardized mean); targets stay hard.
AugmentedBatch cutout(const Matrix& x, const Matrix& y, double prob, double ratio,
                      Rng& rng);

// x + epsilon·sign(dinput) with sign(0) = 0; dinput is the loss gradient
// w.r.t. x from a clean backward pass.
Matrix fgsm(const Matrix& x, const Matrix& dinput, double epsilon);

} // namespace cocktail

#endif
