#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "cocktail/stats.hpp"
#include "cocktail/errors.hpp"
#include "cocktail/rng.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

using namespace cocktail;

namespace {

// Exact two-sided signed-rank p by enumerating all 2^n sign assignments,
// with the same zero-drop and mid-rank conventions as the tested code.
double brute_force_p(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> diff;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) diff.push_back(a[i] - b[i]);
    const size_t n = diff.size();
    if (n == 0) return 1.0;

    std::vector<double> mag(n);
    for (size_t i = 0; i < n; ++i) mag[i] = std::fabs(diff[i]);
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t x, size_t y) { return mag[x] < mag[y]; });
    std::vector<double> rank(n, 0.0);
    for (size_t i = 0; i < n;) {
        size_t j = i;
        while (j < n && mag[order[j]] == mag[order[i]]) ++j;
        const double mid = (double(i + 1) + double(j)) / 2.0;
        for (size_t k = i; k < j; ++k) rank[order[k]] = mid;
        i = j;
    }

    double w_plus = 0.0;
    for (size_t i = 0; i < n; ++i)
        if (diff[i] > 0) w_plus += rank[i];

    // Null distribution: each rank joins W+ with probability 1/2.
    size_t at_most = 0, total = 0;
    for (size_t mask = 0; mask < (size_t(1) << n); ++mask) {
        double w = 0.0;
        for (size_t i = 0; i < n; ++i)
            if (mask & (size_t(1) << i)) w += rank[i];
        ++total;
        if (w <= w_plus + 1e-12) ++at_most;
    }
    const double lower = double(at_most) / double(total);
    // two-sided via doubling the smaller tail (symmetric null)
    size_t at_least = 0;
    for (size_t mask = 0; mask < (size_t(1) << n); ++mask) {
        double w = 0.0;
        for (size_t i = 0; i < n; ++i)
            if (mask & (size_t(1) << i)) w += rank[i];
        if (w >= w_plus - 1e-12) ++at_least;
    }
    const double upper = double(at_least) / double(total);
    return std::min(1.0, 2.0 * std::min(lower, upper));
}

} // namespace

TEST_CASE("balanced accuracy averages per-class recall") {
    // class 0: 2/2, class 1: 1/2, class 2: 1/2 -> (1 + 0.5 + 0.5)/3
    const std::vector<int> truth{0, 0, 1, 1, 2, 2};
    const std::vector<int> pred{0, 0, 1, 0, 2, 1};
    CHECK(balanced_accuracy(truth, pred, 3) == doctest::Approx((1.0 + 0.5 + 0.5) / 3.0));

    // absent classes are skipped, not counted as zero
    const std::vector<int> t2{0, 0, 1};
    const std::vector<int> p2{0, 0, 1};
    CHECK(balanced_accuracy(t2, p2, 5) == doctest::Approx(1.0));

    // uniform guessing on a balanced problem sits at 1/C
    std::vector<int> t3, p3;
    Rng rng(3);
    for (int i = 0; i < 9000; ++i) {
        t3.push_back(i % 3);
        p3.push_back(int(rng.uniform_int(0, 2)));
    }
    CHECK(balanced_accuracy(t3, p3, 3) == doctest::Approx(1.0 / 3.0).epsilon(0.05));

    CHECK_THROWS_AS(balanced_accuracy({0}, {0, 1}, 2), ContractViolation);
    CHECK_THROWS_AS(balanced_accuracy({}, {}, 2), ContractViolation);
}

TEST_CASE("five wins out of five gives the classical exact p") {
    const std::vector<double> a{0.9, 0.8, 0.85, 0.7, 0.95};
    const std::vector<double> b{0.8, 0.7, 0.80, 0.6, 0.90};
    const WilcoxonResult r = wilcoxon_signed_rank(a, b);
    CHECK(r.exact);
    CHECK(r.n_effective == 5);
    CHECK(r.wins == 5);
    CHECK(r.losses == 0);
    CHECK(r.w_minus == 0.0);
    CHECK(r.p_value == doctest::Approx(0.0625));
}

TEST_CASE("identical samples report no effect") {
    const std::vector<double> a{0.5, 0.6, 0.7};
    const WilcoxonResult r = wilcoxon_signed_rank(a, a);
    CHECK(r.no_effect);
    CHECK(r.n_effective == 0);
    CHECK(r.p_value == 1.0);
    CHECK(r.ties == 3);
}

TEST_CASE("the test is symmetric in its arguments") {
    const std::vector<double> a{1.2, 3.4, 2.2, 5.6, 4.4, 7.1, 0.3};
    const std::vector<double> b{2.1, 3.3, 2.2, 4.9, 5.0, 6.2, 0.9};
    const WilcoxonResult ab = wilcoxon_signed_rank(a, b);
    const WilcoxonResult ba = wilcoxon_signed_rank(b, a);
    CHECK(ab.p_value == doctest::Approx(ba.p_value));
    CHECK(ab.w_plus == doctest::Approx(ba.w_minus));
    CHECK(ab.statistic == doctest::Approx(ba.statistic));
    CHECK(ab.wins == ba.losses);
}

TEST_CASE("exact p matches full sign enumeration for small n") {
    Rng rng(17);
    for (size_t n = 3; n <= 12; ++n) {
        for (int rep = 0; rep < 6; ++rep) {
            std::vector<double> a(n), b(n);
            for (size_t i = 0; i < n; ++i) {
                a[i] = std::round(rng.uniform(0.0, 10.0) * 4.0) / 4.0; // force ties
                b[i] = std::round(rng.uniform(0.0, 10.0) * 4.0) / 4.0;
            }
            const WilcoxonResult r = wilcoxon_signed_rank(a, b);
            if (r.no_effect) continue;
            REQUIRE(r.exact);
            CAPTURE(n);
            CAPTURE(rep);
            CHECK(r.p_value == doctest::Approx(brute_force_p(a, b)).epsilon(1e-12));
        }
    }
}

TEST_CASE("the normal approximation tracks the exact tail at the boundary") {
    Rng rng(29);
    // n = 25 is the last exact size; compare exact vs a forced-normal neighbor
    // statistically: both p-values should be close for untied data.
    for (int rep = 0; rep < 10; ++rep) {
        std::vector<double> a(25), b(25);
        for (size_t i = 0; i < 25; ++i) {
            a[i] = rng.normal(0.3, 1.0);
            b[i] = rng.normal(0.0, 1.0);
        }
        const WilcoxonResult exact = wilcoxon_signed_rank(a, b);
        REQUIRE(exact.exact);

        // push beyond the exact cutoff by adding a far-apart independent pair
        std::vector<double> a2 = a, b2 = b;
        a2.push_back(100.0);
        b2.push_back(0.0);
        const WilcoxonResult approx = wilcoxon_signed_rank(a2, b2);
        CHECK_FALSE(approx.exact);
        CHECK(std::isfinite(approx.p_value));
        CHECK(approx.p_value > 0.0);
        CHECK(approx.p_value <= 1.0);
    }
}

TEST_CASE("mean ranks use descending score with mid-ranks for ties") {
    ScoreTable t;
    t.methods = {"m1", "m2", "m3"};
    t.datasets = {"d1", "d2"};
    t.scores = Matrix(2, 3);
    // d1: m2 best, m1 second, m3 third -> ranks 2, 1, 3
    t.scores(0, 0) = 0.8;
    t.scores(0, 1) = 0.9;
    t.scores(0, 2) = 0.7;
    // d2: m2 and m1 tie for best -> 1.5, 1.5, 3
    t.scores(1, 0) = 0.9;
    t.scores(1, 1) = 0.9;
    t.scores(1, 2) = 0.1;
    const auto ranks = mean_ranks(t);
    CHECK(ranks[0] == doctest::Approx(1.75));
    CHECK(ranks[1] == doctest::Approx(1.25));
    CHECK(ranks[2] == doctest::Approx(3.0));
}

TEST_CASE("missing cells drop out of the ranking") {
    ScoreTable t;
    t.methods = {"m1", "m2", "m3"};
    t.datasets = {"d1"};
    t.scores = Matrix(1, 3);
    t.scores(0, 0) = 0.5;
    t.scores(0, 1) = std::nan("");
    t.scores(0, 2) = 0.6;
    const auto ranks = mean_ranks(t);
    CHECK(ranks[0] == doctest::Approx(2.0));
    CHECK(std::isnan(ranks[1]));
    CHECK(ranks[2] == doctest::Approx(1.0));
}

TEST_CASE("score tables round trip through csv") {
    ScoreTable t;
    t.methods = {"alpha", "beta"};
    t.datasets = {"credit", "vowel"};
    t.scores = Matrix(2, 2);
    t.scores(0, 0) = 0.75;
    t.scores(0, 1) = std::nan("");
    t.scores(1, 0) = 0.5;
    t.scores(1, 1) = 0.625;
    const ScoreTable back = score_table_from_csv(score_table_to_csv(t));
    CHECK(back.methods == t.methods);
    CHECK(back.datasets == t.datasets);
    CHECK(back.scores(0, 0) == 0.75);
    CHECK(std::isnan(back.scores(0, 1)));
    CHECK(back.scores(1, 1) == 0.625);

    CHECK_THROWS_AS(score_table_from_csv("dataset\nd1\n"), IngestionError);
    CHECK_THROWS_AS(score_table_from_csv("dataset,m\nd1,abc\n"), IngestionError);
}

TEST_CASE("holm step-down adjustment") {
    // classic worked example
    const std::vector<double> p{0.01, 0.04, 0.03, 0.005};
    const auto adj = holm_adjust(p);
    CHECK(adj[3] == doctest::Approx(0.02));  // 0.005 * 4
    CHECK(adj[0] == doctest::Approx(0.03));  // max(0.02, 0.01*3)
    CHECK(adj[2] == doctest::Approx(0.06));  // max(0.03, 0.03*2)
    CHECK(adj[1] == doctest::Approx(0.06));  // max(0.06, 0.04*1) with monotonicity
    for (double v : holm_adjust({0.9, 0.8})) CHECK(v <= 1.0);
    CHECK(holm_adjust({}).empty());
}

TEST_CASE("clearly separated methods split into singleton groups") {
    ScoreTable t;
    t.methods = {"good", "bad"};
    t.scores = Matrix(12, 2);
    for (int d = 0; d < 12; ++d) {
        t.datasets.push_back("d" + std::to_string(d));
        t.scores(d, 0) = 0.9 + 0.001 * d;
        t.scores(d, 1) = 0.5 + 0.001 * d;
    }
    const CdReport rep = cd_groups(t, 0.05);
    REQUIRE(rep.pairs.size() == 1);
    CHECK(rep.pairs[0].significant);
    CHECK(rep.pairs[0].test.wins == 12);
    REQUIRE(rep.cliques.size() == 2);
    CHECK(rep.cliques[0].size() == 1);
    CHECK(rep.cliques[1].size() == 1);
    CHECK(rep.mean_rank[0] == doctest::Approx(1.0));
    CHECK(rep.mean_rank[1] == doctest::Approx(2.0));
}

TEST_CASE("statistically indistinguishable methods share one clique") {
    ScoreTable t;
    t.methods = {"m1", "m2", "m3"};
    t.scores = Matrix(8, 3);
    Rng rng(31);
    for (int d = 0; d < 8; ++d) {
        t.datasets.push_back("d" + std::to_string(d));
        for (int m = 0; m < 3; ++m) t.scores(d, m) = rng.uniform(0.4, 0.6);
    }
    const CdReport rep = cd_groups(t, 0.05);
    for (const auto& pr : rep.pairs) CHECK_FALSE(pr.significant);
    REQUIRE(rep.cliques.size() == 1);
    CHECK(rep.cliques[0].size() == 3);
}

TEST_CASE("a middle method can bridge two cliques") {
    // good ~ mid significantly different from bad, mid not different from
    // either: expect {good, mid} and {mid, bad} bars.
    ScoreTable t;
    t.methods = {"good", "mid", "bad"};
    t.scores = Matrix(10, 3);
    Rng rng(37);
    for (int d = 0; d < 10; ++d) {
        t.datasets.push_back("d" + std::to_string(d));
        const double base = rng.uniform(0.0, 0.05);
        t.scores(d, 0) = 0.90 + base;
        t.scores(d, 1) = 0.88 + base + rng.uniform(-0.03, 0.03);
        t.scores(d, 2) = 0.86 + base;
    }
    const CdReport rep = cd_groups(t, 0.05);
    bool good_vs_bad_significant = false;
    for (const auto& pr : rep.pairs)
        if (pr.a == 0 && pr.b == 2) good_vs_bad_significant = pr.significant;
    if (good_vs_bad_significant && rep.cliques.size() == 2) {
        CHECK(rep.cliques[0] == std::vector<size_t>{0, 1});
        CHECK(rep.cliques[1] == std::vector<size_t>{1, 2});
    }
    // the groups always cover every method
    std::vector<bool> covered(3, false);
    for (const auto& g : rep.cliques)
        for (size_t m : g) covered[m] = true;
    CHECK(covered == std::vector<bool>(3, true));
}

TEST_CASE("frequency counts tally techniques and families across incumbents") {
    Configuration a{{"use_batch_norm", true},
                    {"use_swa", false},
                    {"use_lookahead", true},
                    {"lookahead_steps", int64_t(6)},
                    {"lookahead_alpha", 0.6},
                    {"use_weight_decay", false},
                    {"use_dropout", false},
                    {"use_snapshot_ensemble", false},
                    {"use_skip_connection", true},
                    {"skip_variant", std::string("shake_drop")},
                    {"shake_drop_max_prob", 0.4},
                    {"augmentation", std::string("mixup")},
                    {"mixup_alpha", 0.2}};
    Configuration b{{"use_batch_norm", true},
                    {"use_swa", false},
                    {"use_lookahead", false},
                    {"use_weight_decay", false},
                    {"use_dropout", true},
                    {"dropout_rate", 0.1},
                    {"use_snapshot_ensemble", false},
                    {"use_skip_connection", false},
                    {"augmentation", std::string("none")}};
    const FrequencyReport rep = regularizer_frequencies({a, b});
    CHECK(rep.n_runs == 2);
    CHECK(rep.regularizer.size() == 13); // every technique listed, even at zero
    CHECK(rep.regularizer.at("batch_norm") == 2);
    CHECK(rep.regularizer.at("lookahead") == 1);
    CHECK(rep.regularizer.at("skip_connection") == 1);
    CHECK(rep.regularizer.at("shake_drop") == 1);
    CHECK(rep.regularizer.at("shake_shake") == 0);
    CHECK(rep.regularizer.at("mixup") == 1);
    CHECK(rep.regularizer.at("dropout") == 1);
    CHECK(rep.regularizer.at("swa") == 0);
    CHECK(rep.family.at("implicit") == 2);   // batch norm both times
    CHECK(rep.family.at("augmentation") == 1);
    CHECK(rep.family.at("structural") == 1);
    CHECK(rep.family.at("ensemble") == 1);   // dropout in run b
    CHECK(rep.family.at("weight_decay") == 0);
}

TEST_CASE("rank over time ranks only the methods that have results yet") {
    const std::vector<std::string> methods{"fast", "slow"};
    const std::vector<std::string> datasets{"d1", "d2"};
    // fast reaches 0.8 at t=1 then 0.9 at t=5; slow reaches 0.95 at t=10
    std::vector<std::vector<AnytimeCurve>> curves(2);
    curves[0] = {AnytimeCurve{{1.0, 5.0}, {0.8, 0.9}},
                 AnytimeCurve{{2.0}, {0.7}}};
    curves[1] = {AnytimeCurve{{10.0}, {0.95}},
                 AnytimeCurve{{}, {}}}; // never finished on d2
    const RankOverTime r = rank_over_time(methods, datasets, curves, {3.0, 20.0});

    // cutoff 3: slow has nothing anywhere -> fast rank 1 alone
    CHECK(r.mean_rank(0, 0) == doctest::Approx(1.0));
    CHECK(std::isnan(r.mean_rank(1, 0)));
    CHECK(r.datasets_used[0][0] == 2);
    CHECK(r.datasets_used[1][0] == 0);

    // cutoff 20: d1 has both (slow 0.95 beats fast 0.9), d2 only fast
    CHECK(r.mean_rank(0, 1) == doctest::Approx((2.0 + 1.0) / 2.0));
    CHECK(r.mean_rank(1, 1) == doctest::Approx(1.0));
    CHECK(r.datasets_used[0][1] == 2);
    CHECK(r.datasets_used[1][1] == 1);
}
