#include "cocktail/stats.hpp"

#include "cocktail/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace cocktail {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

// Mid-ranks (1-based) of `values` sorted ascending.
std::vector<double> ascending_mid_ranks(const std::vector<double>& values) {
    const size_t n = values.size();
    std::vector<size_t> order(n);
    for (size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](size_t i, size_t j) { return values[i] < values[j]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = mid;
        i = j + 1;
    }
    return ranks;
}

// Exact null distribution of 2·W+ via subset-sum counting over the doubled
// ranks (mid-ranks double to integers). Returns P(W+ <= w_obs).
double exact_left_tail(const std::vector<double>& ranks, double w_obs) {
    std::vector<long> doubled(ranks.size());
    long total = 0;
    for (size_t i = 0; i < ranks.size(); ++i) {
        doubled[i] = std::lround(2.0 * ranks[i]);
        total += doubled[i];
    }
    std::vector<double> count(static_cast<size_t>(total) + 1, 0.0);
    count[0] = 1.0;
    for (long r : doubled)
        for (long s = total; s >= r; --s) count[static_cast<size_t>(s)] +=
            count[static_cast<size_t>(s - r)];
    const long bound = static_cast<long>(std::floor(2.0 * w_obs + 0.5));
    double below = 0.0, all = 0.0;
    for (long s = 0; s <= total; ++s) {
        all += count[static_cast<size_t>(s)];
        if (s <= bound) below += count[static_cast<size_t>(s)];
    }
    return below / all;
}

struct RankedRow {
    std::vector<size_t> members; // method indices with a score
    std::vector<double> ranks;   // same order, 1 = best
};

RankedRow rank_row_descending(const std::vector<double>& scores) {
    RankedRow row;
    std::vector<double> negated;
    for (size_t m = 0; m < scores.size(); ++m) {
        if (std::isnan(scores[m])) continue;
        row.members.push_back(m);
        negated.push_back(-scores[m]); // ascending ranks of -score = descending
    }
    row.ranks = ascending_mid_ranks(negated);
    return row;
}

std::vector<std::string> split_plain_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace

double balanced_accuracy(const std::vector<int>& y_true, const std::vector<int>& y_pred,
                         size_t n_classes) {
    require(!y_true.empty(), "balanced accuracy of an empty label set");
    require(y_true.size() == y_pred.size(), "label vectors differ in length");
    std::vector<long> present(n_classes, 0), correct(n_classes, 0);
    for (size_t i = 0; i < y_true.size(); ++i) {
        require(y_true[i] >= 0 && static_cast<size_t>(y_true[i]) < n_classes &&
                    y_pred[i] >= 0 && static_cast<size_t>(y_pred[i]) < n_classes,
                "class label out of range");
        ++present[static_cast<size_t>(y_true[i])];
        if (y_true[i] == y_pred[i]) ++correct[static_cast<size_t>(y_true[i])];
    }
    double sum = 0.0;
    long classes = 0;
    for (size_t c = 0; c < n_classes; ++c) {
        if (present[c] == 0) continue;
        sum += static_cast<double>(correct[c]) / static_cast<double>(present[c]);
        ++classes;
    }
    return sum / static_cast<double>(classes);
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a,
                                    const std::vector<double>& b) {
    require(a.size() == b.size(), "paired score vectors differ in length");
    require(a.size() >= 3, "signed-rank test needs at least 3 pairs");
    WilcoxonResult res;
    std::vector<double> mags;
    std::vector<int> signs;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        if (d > 0)
            ++res.wins;
        else if (d < 0)
            ++res.losses;
        else
            ++res.ties;
        if (d != 0.0) {
            mags.push_back(std::fabs(d));
            signs.push_back(d > 0 ? 1 : -1);
        }
    }
    res.n_effective = mags.size();
    if (mags.empty()) {
        res.no_effect = true;
        res.exact = true;
        res.p_value = 1.0;
        return res;
    }
    const auto ranks = ascending_mid_ranks(mags);
    for (size_t i = 0; i < ranks.size(); ++i)
        (signs[i] > 0 ? res.w_plus : res.w_minus) += ranks[i];
    res.statistic = std::min(res.w_plus, res.w_minus);

    const size_t n = mags.size();
    if (n <= 25) {
        res.exact = true;
        res.p_value = std::min(1.0, 2.0 * exact_left_tail(ranks, res.statistic));
    } else {
        res.exact = false;
        const double dn = static_cast<double>(n);
        double var = dn * (dn + 1.0) * (2.0 * dn + 1.0) / 24.0;
        // tie correction: -sum(t^3 - t)/48 over groups of equal magnitude
        size_t i = 0;
        std::vector<double> sorted = mags;
        std::sort(sorted.begin(), sorted.end());
        while (i < n) {
            size_t j = i;
            while (j + 1 < n && sorted[j + 1] == sorted[i]) ++j;
            const double t = static_cast<double>(j - i + 1);
            var -= (t * t * t - t) / 48.0;
            i = j + 1;
        }
        const double mean = dn * (dn + 1.0) / 4.0;
        const double z = (res.statistic - mean + 0.5) / std::sqrt(var);
        res.p_value = std::min(1.0, 2.0 * normal_cdf(z));
    }
    if (res.p_value <= 0.0) res.p_value = std::numeric_limits<double>::min();
    return res;
}

ScoreTable score_table_from_csv(const std::string& text) {
    ScoreTable t;
    std::istringstream in(text);
    std::string line;
    std::vector<std::vector<double>> rows;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_plain_csv(line);
        if (!header_done) {
            if (fields.size() < 2)
                throw IngestionError("score table needs a dataset column and methods");
            for (size_t i = 1; i < fields.size(); ++i) t.methods.push_back(fields[i]);
            header_done = true;
            continue;
        }
        if (fields.size() != t.methods.size() + 1)
            throw IngestionError("score row '" + fields[0] + "' has wrong field count");
        t.datasets.push_back(fields[0]);
        std::vector<double> row;
        for (size_t i = 1; i < fields.size(); ++i) {
            if (fields[i].empty()) {
                row.push_back(kNaN);
                continue;
            }
            try {
                size_t used = 0;
                double v = std::stod(fields[i], &used);
                if (used != fields[i].size()) throw IngestionError("");
                row.push_back(v);
            } catch (const std::exception&) {
                throw IngestionError("score row '" + fields[0] + "': bad number '" +
                              fields[i] + "'");
            }
        }
        rows.push_back(std::move(row));
    }
    if (!header_done || rows.empty()) throw IngestionError("score table has no data rows");
    t.scores = Matrix(rows.size(), t.methods.size());
    for (size_t r = 0; r < rows.size(); ++r)
        for (size_t c = 0; c < t.methods.size(); ++c) t.scores(r, c) = rows[r][c];
    return t;
}

std::string score_table_to_csv(const ScoreTable& t) {
    std::ostringstream out;
    out << "dataset";
    for (const auto& m : t.methods) out << "," << m;
    out << "\n";
    out.precision(17);
    for (size_t r = 0; r < t.datasets.size(); ++r) {
        out << t.datasets[r];
        for (size_t c = 0; c < t.methods.size(); ++c) {
            out << ",";
            if (!std::isnan(t.scores(r, c))) out << t.scores(r, c);
        }
        out << "\n";
    }
    return out.str();
}

std::vector<double> mean_ranks(const ScoreTable& t) {
    require(t.methods.size() >= 2, "ranking needs at least 2 methods");
    std::vector<double> sum(t.methods.size(), 0.0);
    std::vector<long> used(t.methods.size(), 0);
    for (size_t r = 0; r < t.datasets.size(); ++r) {
        std::vector<double> row(t.methods.size());
        for (size_t m = 0; m < t.methods.size(); ++m) row[m] = t.scores(r, m);
        const auto ranked = rank_row_descending(row);
        for (size_t k = 0; k < ranked.members.size(); ++k) {
            sum[ranked.members[k]] += ranked.ranks[k];
            ++used[ranked.members[k]];
        }
    }
    std::vector<double> out(t.methods.size(), kNaN);
    for (size_t m = 0; m < t.methods.size(); ++m)
        if (used[m] > 0) out[m] = sum[m] / static_cast<double>(used[m]);
    return out;
}

std::vector<double> holm_adjust(const std::vector<double>& p) {
    const size_t m = p.size();
    std::vector<size_t> order(m);
    for (size_t i = 0; i < m; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](size_t i, size_t j) { return p[i] < p[j]; });
    std::vector<double> adj(m, 1.0);
    double running = 0.0;
    for (size_t k = 0; k < m; ++k) {
        const double scaled = static_cast<double>(m - k) * p[order[k]];
        running = std::max(running, std::min(1.0, scaled));
        adj[order[k]] = running;
    }
    return adj;
}

CdReport cd_groups(const ScoreTable& t, double alpha) {
    require(alpha > 0.0 && alpha <= 1.0, "significance level outside (0, 1]");
    CdReport rep;
    rep.methods = t.methods;
    rep.alpha = alpha;
    rep.mean_rank = mean_ranks(t);

    const size_t n_methods = t.methods.size();
    std::vector<double> raw_p;
    for (size_t i = 0; i < n_methods; ++i)
        for (size_t j = i + 1; j < n_methods; ++j) {
            std::vector<double> a, b;
            for (size_t r = 0; r < t.datasets.size(); ++r) {
                const double va = t.scores(r, i), vb = t.scores(r, j);
                if (std::isnan(va) || std::isnan(vb)) continue;
                a.push_back(va);
                b.push_back(vb);
            }
            PairwiseComparison cmp;
            cmp.a = i;
            cmp.b = j;
            if (a.size() >= 3) {
                cmp.test = wilcoxon_signed_rank(a, b);
            } else {
                cmp.test.no_effect = true; // too few complete pairs to test
                cmp.test.p_value = 1.0;
                cmp.test.exact = true;
            }
            raw_p.push_back(cmp.test.p_value);
            rep.pairs.push_back(std::move(cmp));
        }
    const auto adjusted = holm_adjust(raw_p);
    std::vector<std::vector<bool>> sig(n_methods, std::vector<bool>(n_methods, false));
    for (size_t k = 0; k < rep.pairs.size(); ++k) {
        rep.pairs[k].p_holm = adjusted[k];
        rep.pairs[k].significant = adjusted[k] < alpha;
        sig[rep.pairs[k].a][rep.pairs[k].b] = rep.pairs[k].significant;
        sig[rep.pairs[k].b][rep.pairs[k].a] = rep.pairs[k].significant;
    }

    // Connection bars: maximal rank-contiguous segments with no significant
    // pair inside; segments swallowed by a longer one are dropped.
    std::vector<size_t> by_rank(n_methods);
    for (size_t i = 0; i < n_methods; ++i) by_rank[i] = i;
    std::sort(by_rank.begin(), by_rank.end(), [&](size_t i, size_t j) {
        if (rep.mean_rank[i] != rep.mean_rank[j])
            return rep.mean_rank[i] < rep.mean_rank[j];
        return i < j;
    });
    size_t prev_end = 0;
    for (size_t start = 0; start < n_methods; ++start) {
        size_t end = start;
        while (end + 1 < n_methods) {
            bool clean = true;
            for (size_t k = start; k <= end && clean; ++k)
                clean = !sig[by_rank[k]][by_rank[end + 1]];
            if (!clean) break;
            ++end;
        }
        if (rep.cliques.empty() || end > prev_end) {
            std::vector<size_t> group;
            for (size_t k = start; k <= end; ++k) group.push_back(by_rank[k]);
            rep.cliques.push_back(std::move(group));
            prev_end = end;
        }
        if (end + 1 >= n_methods) break;
    }
    return rep;
}

FrequencyReport regularizer_frequencies(const std::vector<Configuration>& incumbents) {
    FrequencyReport rep;
    rep.n_runs = static_cast<long>(incumbents.size());
    for (const auto& name : regularizer_names()) rep.regularizer[name] = 0;
    std::vector<std::string> families = {"weight_decay", "augmentation", "ensemble",
                                         "structural", "implicit"};
    for (const auto& f : families) rep.family[f] = 0;
    for (const auto& c : incumbents) {
        const auto active = active_regularizers(c);
        std::set<std::string> active_families;
        for (const auto& name : active) {
            ++rep.regularizer[name];
            active_families.insert(regularizer_families().at(name));
        }
        for (const auto& f : active_families) ++rep.family[f];
    }
    return rep;
}

RankOverTime rank_over_time(const std::vector<std::string>& methods,
                            const std::vector<std::string>& datasets,
                            const std::vector<std::vector<AnytimeCurve>>& curves,
                            const std::vector<double>& cutoffs) {
    require(curves.size() == methods.size(), "one curve list per method");
    for (const auto& per_method : curves)
        require(per_method.size() == datasets.size(), "one curve per dataset");
    for (size_t i = 1; i < cutoffs.size(); ++i)
        require(cutoffs[i - 1] <= cutoffs[i], "cutoffs must ascend");

    RankOverTime out;
    out.methods = methods;
    out.cutoffs = cutoffs;
    out.mean_rank = Matrix(methods.size(), cutoffs.size(), kNaN);
    out.datasets_used.assign(methods.size(),
                             std::vector<long>(cutoffs.size(), 0));

    auto value_at = [](const AnytimeCurve& curve, double t) -> double {
        double v = kNaN;
        for (size_t i = 0; i < curve.times.size(); ++i) {
            if (curve.times[i] > t) break;
            v = curve.metrics[i];
        }
        return v;
    };

    for (size_t ci = 0; ci < cutoffs.size(); ++ci) {
        std::vector<double> sum(methods.size(), 0.0);
        std::vector<long> used(methods.size(), 0);
        for (size_t d = 0; d < datasets.size(); ++d) {
            std::vector<double> row(methods.size(), kNaN);
            for (size_t m = 0; m < methods.size(); ++m)
                row[m] = value_at(curves[m][d], cutoffs[ci]);
            const auto ranked = rank_row_descending(row);
            for (size_t k = 0; k < ranked.members.size(); ++k) {
                sum[ranked.members[k]] += ranked.ranks[k];
                ++used[ranked.members[k]];
            }
        }
        for (size_t m = 0; m < methods.size(); ++m) {
            out.datasets_used[m][ci] = used[m];
            if (used[m] > 0)
                out.mean_rank(m, ci) = sum[m] / static_cast<double>(used[m]);
        }
    }
    return out;
}

} // namespace cocktail
