// Acceptance suite: one binary, one printed pass/fail line per criterion.
// Exit code 0 iff every criterion passes. An optional list of criterion
// numbers on the command line restricts the run (debugging aid).

#include "cocktail/augmentation.hpp"
#include "cocktail/bohb.hpp"
#include "cocktail/config_space.hpp"
#include "cocktail/dataset.hpp"
#include "cocktail/network.hpp"
#include "cocktail/protocol.hpp"
#include "cocktail/stats.hpp"
#include "cocktail/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace cocktail;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradient suite: every skip mode x batch norm x dropout x the soft-label
//    weighted cross entropy of every augmentation, parameters and inputs
//    against central finite differences on a 3-block width-8 network.
// ---------------------------------------------------------------------------

Matrix random_matrix(size_t rows, size_t cols, Rng& rng, double scale = 1.0) {
    Matrix m(rows, cols);
    for (auto& v : m.data) v = rng.normal(0.0, scale);
    return m;
}

// Weighted soft-label cross entropy of one frozen stochastic forward: the
// seed fixes dropout masks, batch statistics, and shake coefficients, so the
// realized loss is a differentiable function of parameters and inputs.
double ce_loss(const NetworkState& base, const Matrix& x, const Matrix& y_soft,
               const std::vector<double>& w, uint64_t fwd_seed) {
    NetworkState net = base; // forward updates running stats on the copy only
    Rng rng(fwd_seed);
    const ForwardResult fr = forward_train(net, x, rng);
    return weighted_cross_entropy(fr.logits, y_soft, w).loss;
}

// Central difference with a shrinking step: a rectifier kink within h of an
// activation ruins one step size but not all of them, while a genuinely wrong
// gradient stays wrong at every h.
double fd_rel_error(const std::function<double(double)>& loss_at, double at,
                    double analytic) {
    double best = std::numeric_limits<double>::infinity();
    for (double h : {1e-5, 1e-6, 3e-7}) {
        const double fd = (loss_at(at + h) - loss_at(at - h)) / (2.0 * h);
        const double rel = std::fabs(fd - analytic) /
                           std::max({1e-6, std::fabs(fd), std::fabs(analytic)});
        best = std::min(best, rel);
        if (best < 1e-5) break;
    }
    (void)at;
    return best;
}

struct GradCheck {
    double max_rel = 0.0;
    size_t n_checked = 0;
};

GradCheck check_combo(const BackboneConfig& cfg, const Matrix& xa, const Matrix& ys,
                      const std::vector<double>& w, uint64_t seed) {
    Rng init_rng(seed);
    NetworkState base = init_network(cfg, init_rng);
    // Zero-initialized biases put dead rows exactly on the rectifier kink,
    // where no finite difference equals the one-sided derivative; jitter all
    // parameters so the check runs at a differentiable point.
    Rng jitter(seed + 7);
    for (auto& slice : parameter_slices(base))
        for (size_t i = 0; i < slice.n; ++i)
            slice.p[i] += jitter.uniform(-0.05, 0.05);

    const uint64_t fwd_seed = seed + 13;
    NetworkState net = base;
    Rng fwd_rng(fwd_seed);
    const ForwardResult fr = forward_train(net, xa, fwd_rng);
    const LossResult lr = weighted_cross_entropy(fr.logits, ys, w);
    Rng bwd_rng(seed + 17);
    BackwardResult bw =
        backward(net, fr.trace, lr.dlogits, bwd_rng, ShakeBackward::ReuseForward);

    auto analytic = gradient_slices(bw.grads, net);
    NetworkState probe = base;
    auto params = parameter_slices(probe);

    GradCheck out;
    for (size_t s = 0; s < params.size(); ++s) {
        for (size_t i = 0; i < params[s].n; ++i) {
            double& p = params[s].p[i];
            const double keep = p;
            auto loss_at = [&](double v) {
                p = v;
                const double loss = ce_loss(probe, xa, ys, w, fwd_seed);
                p = keep;
                return loss;
            };
            out.max_rel = std::max(out.max_rel, fd_rel_error(loss_at, keep, analytic[s].p[i]));
            ++out.n_checked;
        }
    }
    Matrix xp = xa;
    for (size_t i = 0; i < xp.data.size(); ++i) {
        const double keep = xp.data[i];
        auto loss_at = [&](double v) {
            xp.data[i] = v;
            const double loss = ce_loss(base, xp, ys, w, fwd_seed);
            xp.data[i] = keep;
            return loss;
        };
        out.max_rel = std::max(out.max_rel, fd_rel_error(loss_at, keep, bw.dinput.data[i]));
        ++out.n_checked;
    }
    return out;
}

Outcome criterion_gradients() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const std::vector<std::string> augs = {"none", "mixup", "cutmix", "cutout",
                                           "adversarial"};
    const std::vector<double> w = {1.5, 1.0, 0.5};
    const size_t batch = 8, n_inputs = 5, n_classes = 3;

    double worst = 0.0;
    size_t combos = 0, checked = 0;
    uint64_t combo_seed = 1000;
    for (SkipMode mode : {SkipMode::None, SkipMode::Residual, SkipMode::ShakeShake,
                          SkipMode::ShakeDrop})
        for (bool bn : {false, true})
            for (double drop : {0.0, 0.3})
                for (const auto& aug : augs) {
                    combo_seed += 97;
                    BackboneConfig cfg;
                    cfg.n_layers = 8; // stem + three two-sublayer blocks + head
                    cfg.width = 8;
                    cfg.n_inputs = n_inputs;
                    cfg.n_classes = n_classes;
                    cfg.use_batch_norm = bn;
                    cfg.dropout_rate = drop;
                    cfg.skip_mode = mode;
                    cfg.shake_drop_max_prob = 0.6;

                    Rng data_rng(combo_seed);
                    const Matrix x = random_matrix(batch, n_inputs, data_rng);
                    std::vector<int> labels(batch);
                    for (size_t i = 0; i < batch; ++i)
                        labels[i] = static_cast<int>(i % n_classes);
                    const Matrix y1h = one_hot(labels, n_classes);

                    Matrix xa = x;
                    Matrix ys = y1h;
                    Rng aug_rng(combo_seed + 1);
                    if (aug == "mixup") {
                        const AugmentedBatch b = mixup(x, y1h, 0.4, aug_rng);
                        xa = b.x;
                        ys = b.y_soft;
                    } else if (aug == "cutmix") {
                        const AugmentedBatch b = cutmix(x, y1h, 1.0, aug_rng);
                        xa = b.x;
                        ys = b.y_soft;
                    } else if (aug == "cutout") {
                        const AugmentedBatch b = cutout(x, y1h, 1.0, 0.4, aug_rng);
                        xa = b.x;
                        ys = b.y_soft;
                    } else if (aug == "adversarial") {
                        // One clean pass supplies the input gradient; the
                        // perturbed batch is then a fixed network input.
                        Rng ir(combo_seed + 2);
                        NetworkState tmp = init_network(cfg, ir);
                        Rng fr_rng(combo_seed + 3);
                        const ForwardResult fr = forward_train(tmp, x, fr_rng);
                        const LossResult lr = weighted_cross_entropy(fr.logits, y1h, w);
                        Rng br(combo_seed + 4);
                        const BackwardResult bw = backward(tmp, fr.trace, lr.dlogits, br,
                                                           ShakeBackward::ReuseForward);
                        xa = fgsm(x, bw.dinput, 0.05);
                    }

                    const GradCheck g = check_combo(cfg, xa, ys, w, combo_seed + 5);
                    worst = std::max(worst, g.max_rel);
                    checked += g.n_checked;
                    ++combos;
                }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(combos == 80, "expected 80 combinations");
    o.require(worst < 1e-4, "max relative error " + fmt(worst) + " >= 1e-4");
    o.require(secs < 60.0, "runtime " + fmt(secs) + "s >= 60s");
    o.detail << combos << " combos, " << checked << " derivatives, max rel err "
             << fmt(worst);
    return o;
}

// ---------------------------------------------------------------------------
// 2. Schedule exactness: full rate at cycle starts, snapshots at cycle ends.
// ---------------------------------------------------------------------------

Outcome criterion_schedule() {
    Outcome o;
    const Schedule sched = Schedule::geometric(15, 2, 105);
    o.require(sched.cycle_lengths == std::vector<size_t>({15, 30, 60}),
              "cycle lengths not 15/30/60");
    o.require(cosine_lr(sched, 0.0, 1e-3) == 1e-3, "rate at epoch 0 not exactly 1e-3");
    o.require(cosine_lr(sched, 15.0, 1e-3) == 1e-3, "rate at epoch 15 not exactly 1e-3");
    o.require(cosine_lr(sched, 45.0, 1e-3) == 1e-3, "rate at epoch 45 not exactly 1e-3");

    BackboneConfig tiny;
    tiny.n_layers = 2;
    tiny.width = 2;
    tiny.n_inputs = 2;
    tiny.n_classes = 2;
    Rng rng(3);
    const NetworkState net = init_network(tiny, rng);
    std::vector<NetworkState> snaps;
    std::vector<size_t> fired;
    for (size_t e = 0; e < 105; ++e) {
        if (!sched.is_cycle_end(e)) continue; // the trainer's capture gate
        snapshot_capture(snaps, net, e, sched);
        fired.push_back(e);
    }
    o.require(fired == std::vector<size_t>({14, 44, 104}),
              "snapshots not exactly at epochs 14/44/104");
    o.require(snaps.size() == 3, "snapshot count not 3");
    bool rejected = false;
    try {
        snapshot_capture(snaps, net, 15, sched); // mid-cycle epochs are rejected
    } catch (const std::exception&) {
        rejected = true;
    }
    o.require(rejected && snaps.size() == 3, "mid-cycle capture was not rejected");
    o.detail << "restart rates exact, snapshots at 14/44/104";
    return o;
}

// ---------------------------------------------------------------------------
// 3. Suggestion threshold: on the 19-dimensional space, no model-based
//    suggestion may precede the 20th successful observation.
// ---------------------------------------------------------------------------

Outcome criterion_threshold() {
    Outcome o;
    const SearchSpace space = cocktail_space();
    o.require(space.dimension() == 19, "space dimension not 19");

    RunOptions ro;
    ro.max_configs = 40;
    ro.workers = 1; // completion order == suggestion order
    ro.seed = 5;
    const ObjectiveFn objective = [&space](const Configuration& c, double,
                                           uint64_t seed) {
        double s = 0.0;
        for (double v : space.encode(c))
            if (v >= 0.0) s += (v - 0.25) * (v - 0.25);
        return std::make_pair(s, seed % 7 != 0); // sprinkle failures in
    };
    const RunLoopResult rr = run_loop(space, objective, ro);

    size_t ok_before = 0, early_model = 0, model_total = 0;
    for (const auto& t : rr.observations) {
        if (t.obs.source == "model") {
            ++model_total;
            if (ok_before < 20) ++early_model;
        }
        if (t.obs.ok) ++ok_before;
    }
    o.require(rr.observations.size() == 40, "expected 40 observations");
    o.require(early_model == 0,
              std::to_string(early_model) + " model suggestions before 20 successes");
    o.require(model_total > 0, "no model-based suggestion ever fired");
    o.detail << model_total << " model suggestions, none before 20 successes";
    return o;
}

// ---------------------------------------------------------------------------
// 4. Optimizer convergence on f(x) = (x - 0.3)^2 over seeds 1..10.
// ---------------------------------------------------------------------------

Outcome criterion_convergence() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    HyperparameterDef def;
    def.name = "x";
    def.kind = ParamKind::UniformReal;
    def.lo = 0.0;
    def.hi = 1.0;
    const SearchSpace line({def});

    const ObjectiveFn objective = [](const Configuration& c, double, uint64_t) {
        const double x = config_real(c, "x", 1e9);
        return std::make_pair((x - 0.3) * (x - 0.3), true);
    };

    std::vector<double> errors;
    for (uint64_t seed = 1; seed <= 10; ++seed) {
        RunOptions ro;
        ro.max_configs = 100;
        ro.workers = 1;
        ro.seed = seed;
        const RunLoopResult rr = run_loop(line, objective, ro);
        o.require(rr.incumbent.valid, "no incumbent for seed " + std::to_string(seed));
        errors.push_back(std::fabs(config_real(rr.incumbent.config, "x", 1e9) - 0.3));
    }
    std::sort(errors.begin(), errors.end());
    const double median = (errors[4] + errors[5]) / 2.0;
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(median <= 0.05, "median error " + fmt(median) + " > 0.05");
    o.require(secs < 30.0, "runtime " + fmt(secs) + "s >= 30s");
    o.detail << "median |incumbent - 0.3| = " << fmt(median) << " over 10 seeds";
    return o;
}

// ---------------------------------------------------------------------------
// 5. Signed-rank p-values against brute-force sign enumeration.
// ---------------------------------------------------------------------------

struct BruteResult {
    double p = 1.0;
    bool no_effect = false;
};

// Independent oracle: drop zero differences, mid-rank tied magnitudes, and
// enumerate all 2^n sign assignments for the two-sided tail.
BruteResult brute_wilcoxon(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d;
    for (size_t i = 0; i < a.size(); ++i) {
        const double di = a[i] - b[i];
        if (std::fabs(di) > 1e-12) d.push_back(di);
    }
    if (d.empty()) return {1.0, true};
    const size_t n = d.size();

    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](size_t x, size_t y) {
        return std::fabs(d[x]) < std::fabs(d[y]);
    });
    std::vector<double> rank(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n &&
               std::fabs(std::fabs(d[idx[j + 1]]) - std::fabs(d[idx[i]])) <= 1e-12)
            ++j;
        const double mid = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (size_t k = i; k <= j; ++k) rank[idx[k]] = mid;
        i = j + 1;
    }

    double w_obs = 0.0;
    for (size_t k = 0; k < n; ++k)
        if (d[k] > 0.0) w_obs += rank[k];

    const size_t total = size_t(1) << n;
    size_t le = 0, ge = 0;
    for (size_t mask = 0; mask < total; ++mask) {
        double w = 0.0;
        for (size_t k = 0; k < n; ++k)
            if (mask & (size_t(1) << k)) w += rank[k];
        if (w <= w_obs + 1e-9) ++le;
        if (w >= w_obs - 1e-9) ++ge;
    }
    const double tail = static_cast<double>(std::min(le, ge)) / static_cast<double>(total);
    return {std::min(1.0, 2.0 * tail), false};
}

Outcome criterion_wilcoxon() {
    Outcome o;
    Rng rng(1234);
    size_t compared = 0;
    double worst = 0.0;
    for (size_t n = 3; n <= 12; ++n) {
        for (int rep = 0; rep < 8; ++rep) {
            std::vector<double> a(n), b(n);
            for (size_t k = 0; k < n; ++k) {
                // quarter-rounded values force tied magnitudes and zeros
                a[k] = std::round(4.0 * rng.normal(0.0, 1.0)) / 4.0;
                b[k] = std::round(4.0 * rng.normal(0.0, 1.0)) / 4.0;
            }
            const BruteResult oracle = brute_wilcoxon(a, b);
            const WilcoxonResult r = wilcoxon_signed_rank(a, b);
            if (oracle.no_effect) {
                o.require(r.no_effect && r.p_value == 1.0, "no-effect case mishandled");
                continue;
            }
            o.require(r.exact, "n <= 12 did not use the exact path");
            const double diff = std::fabs(r.p_value - oracle.p);
            worst = std::max(worst, diff);
            o.require(diff <= 1e-12, "p mismatch " + fmt(diff) + " at n=" +
                                         std::to_string(n));
            ++compared;
        }
    }
    o.require(compared > 50, "too few informative cases");

    // five straight wins over five datasets
    const std::vector<double> a5 = {0.85, 0.80, 0.93, 0.77, 0.88};
    const std::vector<double> b5 = {0.80, 0.70, 0.90, 0.75, 0.81};
    const WilcoxonResult r5 = wilcoxon_signed_rank(a5, b5);
    o.require(r5.wins == 5, "not counted as five wins");
    o.require(std::fabs(r5.p_value - 0.0625) <= 1e-15,
              "all-wins p " + fmt(r5.p_value) + " != 0.0625");
    o.detail << compared << " enumerated cases, max |dp| = " << fmt(worst)
             << ", all-wins p = " << fmt(r5.p_value);
    return o;
}

// ---------------------------------------------------------------------------
// 6. Regularization benefit at desk scale: tuned cocktail vs. the all-off
//    configuration on a noisy synthetic binary task, five seeds.
// ---------------------------------------------------------------------------

RawDataset synthetic_noisy(size_t per_class, uint64_t gen_seed) {
    const size_t n_inf = 20, n_noise = 20, n = 2 * per_class;
    Rng rng(gen_seed);
    RawDataset d;
    d.name = "noisy-blobs";
    d.target_name = "label";
    d.features.resize(n_inf + n_noise);
    for (size_t j = 0; j < n_inf + n_noise; ++j) {
        d.features[j].name = "f" + std::to_string(j);
        d.features[j].kind = ColumnKind::Numeric;
        d.features[j].numeric.resize(n);
    }
    std::vector<int> label(n);
    for (size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        label[i] = cls;
        const double sign = cls == 0 ? -1.0 : 1.0;
        for (size_t j = 0; j < n_inf; ++j)
            d.features[j].numeric[i] =
                rng.normal(sign * (0.2 + 0.02 * static_cast<double>(j)), 1.0);
        for (size_t j = n_inf; j < n_inf + n_noise; ++j)
            d.features[j].numeric[i] = rng.normal(0.0, 1.0);
    }
    // flip exactly 20% of each class so the class counts stay balanced
    const size_t n_flip = per_class / 5;
    for (int cls = 0; cls < 2; ++cls) {
        std::vector<size_t> members;
        for (size_t i = 0; i < n; ++i)
            if (label[i] == cls) members.push_back(i);
        const std::vector<size_t> order = rng.permutation(members.size());
        for (size_t k = 0; k < n_flip; ++k) label[members[order[k]]] = 1 - cls;
    }
    d.target.resize(n);
    for (size_t i = 0; i < n; ++i) d.target[i] = label[i] ? "pos" : "neg";
    d.n_rows = n;
    return d;
}

Configuration all_off_config() {
    return {{"use_batch_norm", false},
            {"use_swa", false},
            {"use_lookahead", false},
            {"use_weight_decay", false},
            {"use_dropout", false},
            {"use_snapshot_ensemble", false},
            {"use_skip_connection", false},
            {"augmentation", std::string("none")}};
}

Outcome criterion_benefit() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    const RawDataset raw = synthetic_noisy(416, 7); // 416/class -> 500 train rows

    TrainerOptions trainer;
    trainer.n_layers = 4;
    trainer.width = 16;
    trainer.batch_size = 64;
    trainer.base_lr = 3e-3;
    trainer.initial_cycle = 10;
    trainer.cycle_multiplier = 2;
    trainer.total_epochs = 30; // cycles 10 + 20

    const SearchSpace space = cocktail_space();
    int wins = 0;
    for (uint64_t seed = 1; seed <= 5; ++seed) {
        const SplitDataset data = encode_and_split(raw, 1000 + seed);
        o.require(data.x_train.rows == 500, "train partition is not 500 rows");

        SearchSettings settings;
        settings.trainer = trainer;
        settings.max_configs = 60;
        settings.workers = 1;
        settings.seed = seed;
        RunJournal j = search(data, space, settings);
        const RefitResult refit = refit_and_test(j, data);
        o.require(refit.present, "refit missing for seed " + std::to_string(seed));

        const SplitDataset merged = merge_train_val(data);
        const TrainResult base = train(all_off_config(), merged.train_val_view(), seed,
                                       trainer.total_epochs, trainer);
        o.require(!base.report.failed, "all-off training failed");
        const Matrix proba = model_predict_proba(base.model, merged.x_test());
        const double base_ba = balanced_accuracy(
            merged.y_test(), predict_classes(proba), merged.n_classes);

        if (refit.test_balanced_accuracy >= base_ba) ++wins;
        o.detail << " s" << seed << ":" << fmt(refit.test_balanced_accuracy) << "/"
                 << fmt(base_ba);
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.require(wins >= 4, "tuned cocktail won only " + std::to_string(wins) + "/5");
    o.require(secs < 1800.0, "runtime " + fmt(secs) + "s >= 30min");
    o.detail << " wins " << wins << "/5";
    return o;
}

// ---------------------------------------------------------------------------
// 7. Protocol integrity: replay identity, refit standardization, test audit.
// ---------------------------------------------------------------------------

RawDataset blob_raw(size_t per_class, uint64_t seed) {
    Rng rng(seed);
    RawDataset d;
    d.name = "blobs";
    d.target_name = "y";
    d.features.resize(4);
    const size_t n = 2 * per_class;
    for (size_t j = 0; j < 4; ++j) {
        d.features[j].name = "f" + std::to_string(j);
        d.features[j].kind = ColumnKind::Numeric;
        d.features[j].numeric.resize(n);
    }
    for (size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 2);
        const double center = cls == 0 ? -1.0 : 1.0;
        for (size_t j = 0; j < 4; ++j)
            d.features[j].numeric[i] = rng.normal(center, 0.5);
        d.target.push_back(cls == 0 ? "neg" : "pos");
    }
    d.n_rows = n;
    return d;
}

SearchSettings small_search_settings(size_t n_trials, uint64_t seed) {
    SearchSettings s;
    s.trainer.n_layers = 3;
    s.trainer.width = 8;
    s.trainer.batch_size = 16;
    s.trainer.base_lr = 1e-2;
    s.trainer.initial_cycle = 2;
    s.trainer.cycle_multiplier = 2;
    s.trainer.total_epochs = 6; // cycles 2 + 4
    s.max_configs = n_trials;
    s.workers = 1;
    s.seed = seed;
    return s;
}

Outcome criterion_protocol() {
    Outcome o;
    const SplitDataset data = encode_and_split(blob_raw(40, 5), 6);
    const SearchSpace space = cocktail_space();
    RunJournal j = search(data, space, small_search_settings(12, 17));
    o.require(data.test_access_count() == 0, "search touched the test partition");
    o.require(!j.trajectory.empty(), "no incumbent was found");

    // disk round trip, then replay must land on the identical incumbent
    const std::string path =
        (std::filesystem::temp_directory_path() / "acceptance-journal.jsonl").string();
    save_journal(j, path);
    const RunJournal loaded = load_journal(path);
    std::filesystem::remove(path);
    const auto replayed = replay_incumbent(loaded);
    o.require(replayed.has_value(), "replay found no incumbent");
    if (replayed && !j.trajectory.empty()) {
        const IncumbentPoint& live = j.trajectory.back();
        o.require(replayed->trial_id == live.trial_id, "replay picked another trial");
        o.require(replayed->objective == live.objective, "replay objective differs");
        o.require(config_to_json(replayed->config) == config_to_json(live.config),
                  "replay configuration differs");
    }

    // the refit partition recomputes standardization over train+val
    const SplitDataset merged = merge_train_val(data);
    const size_t rows = merged.x_train.rows;
    o.require(rows == data.x_train.rows + data.x_val.rows, "merge lost rows");
    double max_mean = 0.0, max_var_err = 0.0, max_old = 0.0;
    for (size_t c = 0; c < merged.x_train.cols; ++c) {
        double s = 0.0, s2 = 0.0, sold = 0.0;
        for (size_t r = 0; r < rows; ++r) {
            s += merged.x_train(r, c);
            s2 += merged.x_train(r, c) * merged.x_train(r, c);
        }
        for (size_t r = 0; r < data.x_train.rows; ++r) sold += data.x_train(r, c);
        for (size_t r = 0; r < data.x_val.rows; ++r) sold += data.x_val(r, c);
        const double mean = s / static_cast<double>(rows);
        max_mean = std::max(max_mean, std::fabs(mean));
        max_var_err = std::max(
            max_var_err, std::fabs(s2 / static_cast<double>(rows) - mean * mean - 1.0));
        max_old = std::max(max_old, std::fabs(sold / static_cast<double>(rows)));
    }
    o.require(max_mean < 1e-9, "merged columns not centered on the union");
    o.require(max_var_err < 1e-9, "merged columns not unit variance on the union");
    o.require(max_old > 1e-4, "old standardization already centered the union");

    const RefitResult r = refit_and_test(j, data);
    o.require(r.present, "refit did not run");
    o.require(r.epochs == 6, "refit did not use the full budget");
    o.require(std::isfinite(r.test_loss), "refit test loss not finite");
    o.require(data.test_access_count() > 0, "refit never read the test partition");
    o.detail << "replay identical, union re-standardized (old-stat drift "
             << fmt(max_old) << "), test reads 0 before / >0 after";
    return o;
}

// ---------------------------------------------------------------------------
// 8. Anytime machinery: monotone slices and absent-method exclusion.
// ---------------------------------------------------------------------------

Outcome criterion_anytime() {
    Outcome o;
    const SplitDataset data = encode_and_split(blob_raw(40, 11), 12);
    const SearchSpace space = cocktail_space();
    const RunJournal j = search(data, space, small_search_settings(10, 23));
    o.require(!j.trajectory.empty(), "no incumbent was found");

    const double t_end = j.trials.back().end_ms;
    double prev = std::numeric_limits<double>::infinity();
    bool full_seen = false;
    for (double frac : {0.25, 0.5, 1.0}) {
        const AnytimeSlice s = anytime_slice(j, t_end * frac);
        if (!s.any) continue;
        o.require(s.objective <= prev, "incumbent worsened as the cutoff grew");
        prev = s.objective;
        if (frac == 1.0) {
            full_seen = true;
            o.require(s.objective == j.trajectory.back().objective,
                      "full-run slice is not the final incumbent");
        }
    }
    o.require(full_seen, "full-run slice missing");

    double first_end = std::numeric_limits<double>::infinity();
    for (const auto& t : j.trials)
        if (t.ok) first_end = std::min(first_end, t.end_ms);
    const AnytimeSlice before =
        anytime_slice(j, std::nextafter(first_end, -std::numeric_limits<double>::infinity()));
    o.require(!before.any, "slice exists before the first completed trial");
    o.require(anytime_slice(j, first_end).any, "first completion not visible at its time");

    // ranking excludes a method on datasets where it has no completed trial yet
    std::vector<std::vector<AnytimeCurve>> curves(2);
    curves[0] = {AnytimeCurve{{10.0}, {0.6}}};
    curves[1] = {AnytimeCurve{{100.0}, {0.9}}};
    const RankOverTime rot =
        rank_over_time({"alpha", "beta"}, {"d0"}, curves, {50.0, 150.0});
    o.require(rot.mean_rank(0, 0) == 1.0, "present method not ranked alone");
    o.require(std::isnan(rot.mean_rank(1, 0)), "absent method was ranked");
    o.require(rot.datasets_used[1][0] == 0, "absent method counted a dataset");
    o.require(rot.mean_rank(0, 1) == 2.0 && rot.mean_rank(1, 1) == 1.0,
              "late cutoff ranks wrong");
    o.detail << "slices monotone, empty before first completion, absent methods excluded";
    return o;
}

// ---------------------------------------------------------------------------
// 9. Space soundness over 1e5 samples.
// ---------------------------------------------------------------------------

Outcome criterion_space() {
    Outcome o;
    const SearchSpace space = cocktail_space();
    o.require(space.dimension() == 19, "space dimension not 19");

    size_t lines = 0;
    std::istringstream desc(space.describe());
    for (std::string line; std::getline(desc, line);)
        if (!line.empty()) ++lines;
    o.require(lines == 19, "describe() does not print 19 definitions");

    Rng rng(99);
    size_t invalid = 0, aug_conflicts = 0, shake_conflicts = 0, gate_conflicts = 0;
    for (size_t i = 0; i < 100000; ++i) {
        const Configuration c = space.sample(rng);
        if (!space.validate(c).empty()) ++invalid;

        const std::string aug = config_text(c, "augmentation", "");
        int aug_groups = 0;
        aug_groups += c.count("mixup_alpha") ? 1 : 0;
        aug_groups += c.count("cutmix_prob") ? 1 : 0;
        aug_groups += (c.count("cutout_prob") || c.count("cutout_ratio")) ? 1 : 0;
        aug_groups += c.count("adversarial_epsilon") ? 1 : 0;
        const int expected = aug == "none" ? 0 : 1;
        if (aug_groups != expected) ++aug_conflicts;
        if (aug_groups == 1) {
            const bool matches =
                (aug == "mixup" && c.count("mixup_alpha")) ||
                (aug == "cutmix" && c.count("cutmix_prob")) ||
                (aug == "cutout" && c.count("cutout_prob") && c.count("cutout_ratio")) ||
                (aug == "adversarial" && c.count("adversarial_epsilon"));
            if (!matches) ++aug_conflicts;
        }

        const bool gate = config_bool(c, "use_skip_connection", false);
        const bool has_variant = c.count("skip_variant") > 0;
        if (gate != has_variant) ++gate_conflicts;
        const std::string variant = config_text(c, "skip_variant", "");
        const bool has_sd = c.count("shake_drop_max_prob") > 0;
        if (has_sd != (variant == "shake_drop")) ++shake_conflicts;
        if (variant == "shake_shake" && has_sd) ++shake_conflicts;
    }
    o.require(invalid == 0, std::to_string(invalid) + " samples failed validation");
    o.require(aug_conflicts == 0,
              std::to_string(aug_conflicts) + " augmentation exclusivity violations");
    o.require(gate_conflicts == 0,
              std::to_string(gate_conflicts) + " skip-gate/variant mismatches");
    o.require(shake_conflicts == 0,
              std::to_string(shake_conflicts) + " shake-variant violations");
    o.detail << "100000 samples valid, augmentations and shake variants exclusive, "
             << lines << " definitions";
    return o;
}

} // namespace

int main(int argc, char** argv) {
    struct Entry {
        int id;
        const char* label;
        std::function<Outcome()> fn;
    };
    const std::vector<Entry> entries = {
        {1, "gradients match finite differences across skip modes, batch norm, "
            "dropout, and augmented losses",
         criterion_gradients},
        {2, "cosine restarts hit the full rate at cycle starts and snapshot at "
            "cycle ends",
         criterion_schedule},
        {3, "no model-based suggestion before dimension+1 successful observations",
         criterion_threshold},
        {4, "one-dimensional search concentrates at the parabola minimum",
         criterion_convergence},
        {5, "exact signed-rank p-values equal brute-force enumeration",
         criterion_wilcoxon},
        {6, "tuned cocktail matches or beats the all-off baseline on noisy data",
         criterion_benefit},
        {7, "journal replay, union re-standardization, and the test-access audit",
         criterion_protocol},
        {8, "anytime slices are monotone and absent methods are excluded",
         criterion_anytime},
        {9, "sampled configurations validate with exclusive augmentation and "
            "shake variants",
         criterion_space},
    };

    std::set<int> wanted;
    for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));

    bool all_pass = true;
    int ran = 0, passed = 0;
    for (const auto& e : entries) {
        if (!wanted.empty() && !wanted.count(e.id)) continue;
        ++ran;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = e.fn();
        } catch (const std::exception& ex) {
            o.pass = false;
            o.detail << "unexpected exception: " << ex.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] %d %s — %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", e.id,
                    e.label, o.detail.str().c_str(), secs);
        std::fflush(stdout);
        if (o.pass)
            ++passed;
        else
            all_pass = false;
    }
    std::printf("acceptance: %d/%d criteria passed\n", passed, ran);
    return all_pass ? 0 : 1;
}
