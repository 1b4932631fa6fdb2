#include "cocktail/bohb.hpp"

#include "cocktail/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>

namespace cocktail {
namespace {

constexpr double kTwoPi = 6.28318530717958647692;

bool is_sentinel(double v) { return v < -0.5; }

bool categorical_kind(ParamKind k) {
    return k == ParamKind::Boolean || k == ParamKind::Categorical;
}

size_t level_count(const HyperparameterDef& def) {
    return def.kind == ParamKind::Boolean ? 2 : def.levels.size();
}

size_t slot_to_level(double v, size_t n_levels) {
    if (n_levels <= 1) return 0;
    const double scaled = std::clamp(v, 0.0, 1.0) * static_cast<double>(n_levels - 1);
    return static_cast<size_t>(std::llround(scaled));
}

double gaussian_pdf(double x, double mean, double bw) {
    const double z = (x - mean) / bw;
    return std::exp(-0.5 * z * z) / (bw * std::sqrt(kTwoPi));
}

} // namespace

KdeModel::Side KdeModel::fit_side(const SearchSpace& space,
                                  const std::vector<std::vector<double>>& points,
                                  const SurrogateOptions& opts) {
    const auto& defs = space.params();
    const size_t d = defs.size();
    Side side;
    side.dims.resize(d);
    const size_t n = points.size();
    for (size_t j = 0; j < d; ++j) {
        DimKernel& dim = side.dims[j];
        dim.categorical = categorical_kind(defs[j].kind);
        dim.conditional = defs[j].condition.has_value();
        if (dim.categorical) {
            const size_t levels = level_count(defs[j]);
            const size_t cells = levels + (dim.conditional ? 1 : 0);
            std::vector<double> counts(cells, 0.0);
            for (const auto& p : points) {
                if (dim.conditional && is_sentinel(p[j]))
                    counts[levels] += 1.0;
                else
                    counts[slot_to_level(p[j], levels)] += 1.0;
            }
            dim.table.resize(cells);
            const double denom = static_cast<double>(n + cells);
            for (size_t c = 0; c < cells; ++c) dim.table[c] = (counts[c] + 1.0) / denom;
            dim.level_slots.resize(levels);
            for (size_t c = 0; c < levels; ++c)
                dim.level_slots[c] =
                    levels <= 1 ? 0.0
                                : static_cast<double>(c) / static_cast<double>(levels - 1);
        } else {
            for (const auto& p : points)
                if (!is_sentinel(p[j])) dim.active.push_back(p[j]);
            const size_t na = dim.active.size();
            // Activity as a Laplace-smoothed two-level frequency.
            dim.p_active = (static_cast<double>(na) + 1.0) / (static_cast<double>(n) + 2.0);
            dim.p_inactive = 1.0 - dim.p_active;
            double bw = opts.bandwidth_floor;
            if (na >= 2) {
                double mean = 0.0;
                for (double v : dim.active) mean += v;
                mean /= static_cast<double>(na);
                double var = 0.0;
                for (double v : dim.active) var += (v - mean) * (v - mean);
                var /= static_cast<double>(na);
                // Scott's rule: sigma * n^(-1/(d+4)) per dimension.
                bw = std::sqrt(var) *
                     std::pow(static_cast<double>(na), -1.0 / (static_cast<double>(d) + 4.0));
            }
            dim.bandwidth = std::max(bw, opts.bandwidth_floor);
        }
    }
    return side;
}

KdeModel::KdeModel(const SearchSpace& space, const std::vector<std::vector<double>>& good,
                   const std::vector<std::vector<double>>& bad,
                   const SurrogateOptions& opts, double fidelity)
    : good_points_(good), fidelity_(fidelity), n_good_(good.size()), n_bad_(bad.size()),
      widening_(opts.bandwidth_widening) {
    require(!good.empty() && !bad.empty(), "density model needs points on both sides");
    const size_t d = space.dimension();
    for (const auto& p : good) require(p.size() == d, "encoded point has wrong length");
    for (const auto& p : bad) require(p.size() == d, "encoded point has wrong length");
    good_ = fit_side(space, good, opts);
    bad_ = fit_side(space, bad, opts);
}

double KdeModel::log_density(const Side& side, const std::vector<double>& encoded) {
    double lg = 0.0;
    for (size_t j = 0; j < side.dims.size(); ++j) {
        const DimKernel& dim = side.dims[j];
        const double v = encoded[j];
        if (dim.categorical) {
            size_t cell;
            if (dim.conditional && is_sentinel(v))
                cell = dim.level_slots.size();
            else
                cell = slot_to_level(v, dim.level_slots.size());
            lg += std::log(dim.table[cell]);
            continue;
        }
        if (is_sentinel(v)) {
            lg += std::log(std::max(dim.p_inactive, 1e-12));
            continue;
        }
        double density = 1.0; // uniform reference when no active points exist
        if (!dim.active.empty()) {
            double acc = 0.0;
            for (double a : dim.active) acc += gaussian_pdf(v, a, dim.bandwidth);
            density = acc / static_cast<double>(dim.active.size());
        }
        lg += std::log(dim.p_active) + std::log(std::max(density, 1e-300));
    }
    return lg;
}

double KdeModel::log_density_good(const std::vector<double>& encoded) const {
    return log_density(good_, encoded);
}

double KdeModel::log_density_bad(const std::vector<double>& encoded) const {
    return log_density(bad_, encoded);
}

std::vector<double> KdeModel::sample_good(Rng& rng) const {
    const auto& datum =
        good_points_[static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(good_points_.size()) - 1))];
    std::vector<double> out(datum.size());
    for (size_t j = 0; j < datum.size(); ++j) {
        const DimKernel& dim = good_.dims[j];
        if (dim.categorical) {
            // Draw a cell from the smoothed frequency table.
            double u = rng.uniform01();
            size_t cell = dim.table.size() - 1;
            for (size_t c = 0; c < dim.table.size(); ++c) {
                if (u < dim.table[c]) {
                    cell = c;
                    break;
                }
                u -= dim.table[c];
            }
            out[j] = cell < dim.level_slots.size() ? dim.level_slots[cell] : kInactiveSlot;
            continue;
        }
        if (is_sentinel(datum[j])) {
            out[j] = kInactiveSlot;
            continue;
        }
        out[j] = std::clamp(rng.normal(datum[j], dim.bandwidth * widening_), 0.0, 1.0);
    }
    return out;
}

BohbState::BohbState(const SearchSpace& space, SurrogateOptions opts)
    : space_(&space), opts_(std::move(opts)), threshold_(space.dimension() + 1) {
    require(!opts_.fidelities.empty(), "at least one fidelity level required");
    require(std::is_sorted(opts_.fidelities.begin(), opts_.fidelities.end()),
            "fidelities must ascend");
    require(opts_.random_fraction >= 0.0 && opts_.random_fraction <= 1.0,
            "random fraction outside [0, 1]");
    require(opts_.good_fraction > 0.0 && opts_.good_fraction < 1.0,
            "good fraction outside (0, 1)");
    require(opts_.n_candidates >= 1, "candidate count must be positive");
}

Configuration BohbState::suggest(Rng& rng, std::string* source) {
    if (models_.empty() || rng.uniform01() < opts_.random_fraction) {
        if (source) *source = "random";
        return space_->sample(rng);
    }
    const KdeModel& model = models_.rbegin()->second; // highest modeled fidelity
    Configuration best;
    double best_score = -std::numeric_limits<double>::infinity();
    for (size_t k = 0; k < opts_.n_candidates; ++k) {
        const auto vec = model.sample_good(rng);
        Configuration cand = space_->decode(vec);
        const auto enc = space_->encode(cand);
        const double score = model.log_density_good(enc) - model.log_density_bad(enc);
        if (score > best_score) {
            best_score = score;
            best = std::move(cand);
        }
    }
    if (source) *source = "model";
    return best;
}

size_t BohbState::ok_count(double fidelity) const {
    size_t n = 0;
    for (const auto& o : log_)
        if (o.ok && o.fidelity == fidelity) ++n;
    return n;
}

void BohbState::observe(const Observation& obs) {
    const bool known = std::find(opts_.fidelities.begin(), opts_.fidelities.end(),
                                 obs.fidelity) != opts_.fidelities.end();
    require(known, "observation at an undeclared fidelity");
    Observation stored = obs;
    if (stored.encoded.empty()) stored.encoded = space_->encode(stored.config);
    if (!stored.ok) stored.objective = kWorstObjective;
    log_.push_back(std::move(stored));
    const Observation& added = log_.back();
    if (added.ok && added.fidelity == opts_.fidelities.back() &&
        added.objective < incumbent_.objective) {
        incumbent_.valid = true;
        incumbent_.config = added.config;
        incumbent_.objective = added.objective;
        incumbent_.fidelity = added.fidelity;
        incumbent_.observation_index = log_.size() - 1;
    }
    if (ok_count(added.fidelity) >= threshold_) refit(added.fidelity);
}

void BohbState::refit(double fidelity) {
    // Good side: best ceil(gamma * n_ok) of the ok observations at this
    // fidelity; bad side: the remaining ok ones plus every failure.
    std::vector<const Observation*> ok, failed;
    for (const auto& o : log_) {
        if (o.fidelity != fidelity) continue;
        (o.ok ? ok : failed).push_back(&o);
    }
    std::stable_sort(ok.begin(), ok.end(), [](const Observation* a, const Observation* b) {
        return a->objective < b->objective;
    });
    const size_t n_good = std::min(
        ok.size() - 1,
        static_cast<size_t>(std::ceil(opts_.good_fraction * static_cast<double>(ok.size()))));
    std::vector<std::vector<double>> good, bad;
    for (size_t i = 0; i < ok.size(); ++i)
        (i < std::max<size_t>(n_good, 1) ? good : bad).push_back(ok[i]->encoded);
    for (const auto* o : failed) bad.push_back(o->encoded);
    if (good.empty() || bad.empty()) return; // not enough spread to model
    models_.insert_or_assign(fidelity,
                             KdeModel(*space_, good, bad, opts_, fidelity));
}

std::vector<Bracket> hyperband_brackets(double min_budget, double max_budget, double eta) {
    require(min_budget > 0.0 && max_budget >= min_budget, "invalid budget range");
    require(eta > 1.0, "halving rate must exceed 1");
    const int s_max = static_cast<int>(
        std::floor(std::log(max_budget / min_budget) / std::log(eta) + 1e-9));
    std::vector<Bracket> plan;
    for (int s = s_max; s >= 0; --s) {
        const double n0 = std::ceil(static_cast<double>(s_max + 1) /
                                        static_cast<double>(s + 1) * std::pow(eta, s) -
                                    1e-9);
        Bracket bracket;
        for (int i = 0; i <= s; ++i) {
            const size_t ni =
                static_cast<size_t>(std::floor(n0 / std::pow(eta, i) + 1e-9));
            if (ni == 0) break;
            bracket.stages.push_back({ni, max_budget / std::pow(eta, s - i)});
        }
        plan.push_back(std::move(bracket));
    }
    return plan;
}

namespace {

struct LoopCtx {
    std::mutex mu;
    BohbState state;
    Rng master;
    const SearchSpace* space;
    const ObjectiveFn* objective;
    const std::function<void(const TimedObservation&, const Incumbent&)>* on_result =
        nullptr;
    RunLoopResult out;
    size_t started = 0;
    size_t max_configs = 0;
    double max_walltime_s = 0.0;
    uint64_t seed = 0;
    std::chrono::steady_clock::time_point t0;

    LoopCtx(const SearchSpace& s, SurrogateOptions surrogate, uint64_t seed_)
        : state(s, std::move(surrogate)), master(seed_), space(&s), seed(seed_) {}

    double elapsed_ms() const {
        return std::chrono::duration<double, std::milli>(
                   std::chrono::steady_clock::now() - t0)
            .count();
    }
    bool budget_fired() const {
        if (started >= max_configs) return true;
        return max_walltime_s > 0.0 && elapsed_ms() / 1000.0 > max_walltime_s;
    }
};

struct Job {
    Configuration cfg;
    double fidelity = 0.0;
    std::string source;
};

// provider is called with ctx.mu held; false = stage exhausted.
void drive_workers(LoopCtx& ctx, size_t workers,
                   const std::function<bool(Job&)>& provider) {
    auto body = [&ctx, &provider] {
        for (;;) {
            Job job;
            size_t trial_id;
            double t_start;
            {
                std::lock_guard<std::mutex> lk(ctx.mu);
                if (ctx.budget_fired() || !provider(job)) return;
                trial_id = ctx.started++;
                t_start = ctx.elapsed_ms();
            }
            const uint64_t trial_seed = ctx.seed + trial_id + 1;
            std::pair<double, bool> r{kWorstObjective, false};
            try {
                r = (*ctx.objective)(job.cfg, job.fidelity, trial_seed);
            } catch (...) {
                r = {kWorstObjective, false};
            }
            if (!std::isfinite(r.first)) r = {kWorstObjective, false};
            {
                std::lock_guard<std::mutex> lk(ctx.mu);
                Observation obs;
                obs.config = job.cfg;
                obs.encoded = ctx.space->encode(job.cfg);
                obs.fidelity = job.fidelity;
                obs.objective = r.first;
                obs.ok = r.second;
                obs.source = job.source;
                ctx.state.observe(obs);
                TimedObservation timed;
                timed.obs = std::move(obs);
                timed.trial_id = trial_id;
                timed.seed = trial_seed;
                timed.start_ms = t_start;
                timed.end_ms = ctx.elapsed_ms();
                ctx.out.observations.push_back(std::move(timed));
                if (ctx.on_result)
                    (*ctx.on_result)(ctx.out.observations.back(),
                                     ctx.state.incumbent());
            }
        }
    };
    if (workers <= 1) {
        body();
        return;
    }
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
}

} // namespace

RunLoopResult run_loop(const SearchSpace& space, const ObjectiveFn& objective,
                       const RunOptions& opts) {
    require(opts.workers >= 1, "at least one worker required");
    LoopCtx ctx(space, opts.surrogate, opts.seed);
    ctx.objective = &objective;
    if (opts.on_result) ctx.on_result = &opts.on_result;
    ctx.max_configs = opts.max_configs > 0 ? opts.max_configs : 40 * space.dimension();
    ctx.max_walltime_s = opts.max_walltime_s;
    ctx.t0 = std::chrono::steady_clock::now();
    ctx.out.dimensionality = space.dimension();
    ctx.out.max_configs = ctx.max_configs;

    const auto& ladder = opts.surrogate.fidelities;
    if (!opts.multi_fidelity || ladder.size() == 1) {
        const double budget = ladder.back();
        drive_workers(ctx, opts.workers, [&ctx, budget](Job& job) {
            job.fidelity = budget;
            job.cfg = ctx.state.suggest(ctx.master, &job.source);
            return true;
        });
    } else {
        // Successive halving over the declared fidelity ladder, repeated
        // until a budget rule fires. Bracket s starts at ladder index
        // K-1-s and keeps the best floor(n/eta) configurations per stage.
        const size_t k_levels = ladder.size();
        bool done = false;
        while (!done) {
            for (size_t s = k_levels; s-- > 0 && !done;) {
                const double n0 = std::ceil(static_cast<double>(k_levels) /
                                                static_cast<double>(s + 1) *
                                                std::pow(opts.eta, static_cast<double>(s)) -
                                            1e-9);
                size_t cohort = static_cast<size_t>(n0);
                std::vector<std::pair<double, Configuration>> survivors;
                for (size_t stage = 0; stage <= s && !done; ++stage) {
                    const double budget = ladder[k_levels - 1 - s + stage];
                    const size_t before = ctx.out.observations.size();
                    if (stage == 0) {
                        size_t issued = 0;
                        drive_workers(ctx, opts.workers,
                                      [&ctx, &issued, cohort, budget](Job& job) {
                                          if (issued >= cohort) return false;
                                          ++issued;
                                          job.fidelity = budget;
                                          job.cfg = ctx.state.suggest(ctx.master,
                                                                      &job.source);
                                          return true;
                                      });
                    } else {
                        size_t next_idx = 0;
                        drive_workers(ctx, opts.workers,
                                      [&survivors, &next_idx, budget](Job& job) {
                                          if (next_idx >= survivors.size()) return false;
                                          job.fidelity = budget;
                                          job.cfg = survivors[next_idx++].second;
                                          job.source = "promotion";
                                          return true;
                                      });
                    }
                    std::lock_guard<std::mutex> lk(ctx.mu);
                    done = ctx.budget_fired();
                    std::vector<std::pair<double, Configuration>> results;
                    for (size_t i = before; i < ctx.out.observations.size(); ++i) {
                        const auto& o = ctx.out.observations[i].obs;
                        results.emplace_back(o.ok ? o.objective : kWorstObjective,
                                             o.config);
                    }
                    std::stable_sort(results.begin(), results.end(),
                                     [](const auto& a, const auto& b) {
                                         return a.first < b.first;
                                     });
                    const size_t keep = static_cast<size_t>(std::floor(
                        static_cast<double>(results.size()) / opts.eta + 1e-9));
                    results.resize(std::min(results.size(), keep));
                    survivors = std::move(results);
                    cohort = survivors.size();
                    if (survivors.empty()) break;
                }
            }
        }
    }

    std::lock_guard<std::mutex> lk(ctx.mu);
    ctx.out.incumbent = ctx.state.incumbent();
    ctx.out.walltime_s = ctx.elapsed_ms() / 1000.0;
    return std::move(ctx.out);
}

} // namespace cocktail
