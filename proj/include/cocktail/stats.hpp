#ifndef COCKTAIL_STATS_HPP
#define COCKTAIL_STATS_HPP

#include "cocktail/config_space.hpp"
#include "cocktail/matrix.hpp"

#include <map>
#include <string>
#include <vector>

namespace cocktail {

// Mean per-class recall over the classes present in y_true.
double balanced_accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                         size_t n_classes);

struct WilcoxonResult {
    size_t n_effective = 0; // pairs left after dropping zero differences
    double w_plus = 0.0, w_minus = 0.0;
    double statistic = 0.0; // min(W+, W-)
    double p_value = 1.0;   // two-sided
    bool exact = false;     // exact sign enumeration vs normal approximation
    bool no_effect = false; // every difference was zero
    long wins = 0, ties = 0, losses = 0; // a>b / a==b / a<b
};

// Paired signed-rank test: zero differences dropped, mid-ranks on tied
// magnitudes, exact two-sided p for n <= 25, tie-corrected normal
// approximation with continuity correction beyond that.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b);

struct ScoreTable {
    std::vector<std::string> methods;  // columns
    std::vector<std::string> datasets; // rows
    Matrix scores;                     // datasets x methods; NaN = missing cell
};

// CSV with header "dataset,<method>,..."; empty cells are missing.
ScoreTable score_table_from_csv(const std::string& text);
std::string score_table_to_csv(const ScoreTable& t);

// Per-dataset ranks by descending score (rank 1 best, mid-ranks on ties,
// missing cells skipped), averaged per method over the datasets it appears in.
std::vector<double> mean_ranks(const ScoreTable& t);

struct PairwiseComparison {
    size_t a = 0, b = 0; // method indices, a < b
    WilcoxonResult test;
    double p_holm = 1.0; // step-down adjusted p
    bool significant = false;
};

struct CdReport {
    std::vector<std::string> methods;
    std::vector<double> mean_rank;
    std::vector<PairwiseComparison> pairs;
    // Maximal runs of rank-adjacent methods with no significant pair inside,
    // as method indices sorted by rank; the plot-ready connection bars.
    std::vector<std::vector<size_t>> cliques;
    double alpha = 0.05;
};

// All pairwise signed-rank tests on pairwise-complete datasets, Holm
// correction at `alpha`, and the rank-contiguous non-significant groupings.
CdReport cd_groups(const ScoreTable& t, double alpha);

// Holm step-down adjusted p-values, same order as the input.
std::vector<double> holm_adjust(const std::vector<double>& p);

struct FrequencyReport {
    std::map<std::string, long> regularizer; // all 13 names always present
    std::map<std::string, long> family;      // runs with >=1 member active
    long n_runs = 0;
};

FrequencyReport regularizer_frequencies(const std::vector<Configuration>& incumbents);

// Incumbent-metric step curve of one run: metrics[i] holds from times[i]
// (ascending) until the next step; higher is better.
struct AnytimeCurve {
    std::vector<double> times;
    std::vector<double> metrics;
};

struct RankOverTime {
    std::vector<std::string> methods;
    std::vector<double> cutoffs;
    Matrix mean_rank;                              // methods x cutoffs; NaN = absent
    std::vector<std::vector<long>> datasets_used;  // methods x cutoffs
};

// At each cutoff, rank the methods that have at least one completed trial on
// a dataset (descending metric, mid-ranks) and average per method over the
// datasets where it was present; curves[m][d] may be empty (never completed).
RankOverTime rank_over_time(const std::vector<std::string>& methods,
                            const std::vector<std::string>& datasets,
                            const std::vector<std::vector<AnytimeCurve>>& curves,
                            const std::vector<double>& cutoffs);

} // namespace cocktail

#endif
