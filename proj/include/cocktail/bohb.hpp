#ifndef COCKTAIL_BOHB_HPP
#define COCKTAIL_BOHB_HPP

#include "cocktail/config_space.hpp"
#include "cocktail/rng.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace cocktail {

// Objective value recorded for evaluations that blew up; keeps failures
// orderable (always worst) without poisoning incumbent updates.
constexpr double kWorstObjective = 1e30;

struct Observation {
    Configuration config;
    std::vector<double> encoded; // canonical slot vector of `config`
    double fidelity = 0.0;       // training budget the result was obtained at
    double objective = kWorstObjective; // lower is better
    bool ok = false;
    std::string source = "random"; // suggestion origin: "random" or "model"
};

struct SurrogateOptions {
    double random_fraction = 1.0 / 3.0; // p: chance of a pure random suggestion
    double good_fraction = 0.15;        // gamma: share of observations deemed good
    size_t n_candidates = 64;           // N_s: draws scored per model suggestion
    double bandwidth_floor = 1e-3;
    double bandwidth_widening = 3.0;    // inflates kernels when sampling candidates
    std::vector<double> fidelities = {105.0}; // ascending; last = maximum budget
};

// Product-kernel density estimate over encoded configurations, one kernel per
// space dimension. Boolean/categorical dimensions use frequency-smoothed
// probability tables; continuous/integer dimensions use Gaussian kernels with
// Scott's-rule bandwidths (floored). Dimensions that can be inactive treat
// the sentinel slot as one extra category alongside a density over the active
// values, so the conditional structure stays probability-weighted.
class KdeModel {
public:
    KdeModel() = default;
    KdeModel(const SearchSpace& space, const std::vector<std::vector<double>>& good,
             const std::vector<std::vector<double>>& bad, const SurrogateOptions& opts,
             double fidelity);

    double fidelity() const { return fidelity_; }
    size_t n_good() const { return n_good_; }
    size_t n_bad() const { return n_bad_; }

    double log_density_good(const std::vector<double>& encoded) const;
    double log_density_bad(const std::vector<double>& encoded) const;

    // One candidate slot vector drawn around a random good observation, with
    // kernels widened by the exploration factor. May encode an inconsistent
    // activity pattern; decode it through the space to canonicalize.
    std::vector<double> sample_good(Rng& rng) const;

private:
    struct DimKernel {
        bool categorical = false;
        bool conditional = false;
        std::vector<double> level_slots; // categorical: encoded level positions
        std::vector<double> table;       // categorical: smoothed level frequencies
        std::vector<double> active;      // continuous: active observed slots
        double bandwidth = 1e-3;
        double p_active = 1.0;           // smoothed share of active observations
        double p_inactive = 0.0;
    };
    struct Side {
        std::vector<DimKernel> dims;
    };

    static Side fit_side(const SearchSpace& space,
                         const std::vector<std::vector<double>>& points,
                         const SurrogateOptions& opts);
    static double log_density(const Side& side, const std::vector<double>& encoded);

    Side good_, bad_;
    std::vector<std::vector<double>> good_points_;
    double fidelity_ = 0.0;
    size_t n_good_ = 0, n_bad_ = 0;
    double widening_ = 3.0;
};

struct Incumbent {
    bool valid = false;
    Configuration config;
    double objective = kWorstObjective;
    double fidelity = 0.0;
    size_t observation_index = 0; // position in the log when it took the lead
};

// Mutable optimizer state: the observation log, per-fidelity density models,
// and the incumbent. Callers serialize access (see run_loop).
class BohbState {
public:
    BohbState(const SearchSpace& space, SurrogateOptions opts);

    // Draws the next configuration; *source reports "random" or "model".
    // Model-based suggestions require a fitted model and survive the random
    // fraction; they sample the highest modeled fidelity's good density and
    // keep the candidate with the best good/bad density ratio.
    Configuration suggest(Rng& rng, std::string* source);

    void observe(const Observation& obs);

    const std::vector<Observation>& log() const { return log_; }
    const Incumbent& incumbent() const { return incumbent_; }
    const SurrogateOptions& options() const { return opts_; }
    const SearchSpace& space() const { return *space_; }
    size_t model_threshold() const { return threshold_; }
    size_t ok_count(double fidelity) const;
    bool has_model() const { return !models_.empty(); }

private:
    void refit(double fidelity);

    const SearchSpace* space_;
    SurrogateOptions opts_;
    std::vector<Observation> log_;
    std::map<double, KdeModel> models_;
    Incumbent incumbent_;
    size_t threshold_; // space dimensionality + 1
};

struct BracketStage {
    size_t n_configs = 0;
    double budget = 0.0;
};

struct Bracket {
    std::vector<BracketStage> stages; // ascending budgets, shrinking cohorts
};

// Successive-halving bracket plan: s_max = floor(log_eta(max/min)); bracket s
// starts ceil((s_max+1)/(s+1) * eta^s) configurations at budget max/eta^s and
// promotes the best floor(n/eta) each stage while multiplying the budget by
// eta.
std::vector<Bracket> hyperband_brackets(double min_budget, double max_budget,
                                        double eta);

// Evaluation boundary: (configuration, fidelity, seed) -> (objective, ok).
using ObjectiveFn =
    std::function<std::pair<double, bool>(const Configuration&, double, uint64_t)>;

struct TimedObservation {
    Observation obs;
    size_t trial_id = 0;
    uint64_t seed = 0;
    double start_ms = 0.0; // offsets from run start
    double end_ms = 0.0;
};

struct RunOptions {
    SurrogateOptions surrogate;
    size_t max_configs = 0;      // 0 -> 40 x dimensionality
    double max_walltime_s = 0.0; // 0 -> unlimited
    size_t workers = 1;
    uint64_t seed = 11;
    bool multi_fidelity = false; // default: every trial at the maximum budget
    double eta = 3.0;            // halving rate for multi-fidelity brackets
    // Invoked under the state lock after every observation lands (journaling
    // hook); the incumbent reflects the observation just recorded.
    std::function<void(const TimedObservation&, const Incumbent&)> on_result;
};

struct RunLoopResult {
    std::vector<TimedObservation> observations; // completion order
    Incumbent incumbent;
    size_t dimensionality = 0;
    size_t max_configs = 0;
    double walltime_s = 0.0;
};

// Drives suggest -> evaluate -> observe with up to `workers` concurrent
// evaluations until a budget rule fires. State access is mutex-serialized;
// evaluation failures are recorded (worst objective) and the loop continues.
RunLoopResult run_loop(const SearchSpace& space, const ObjectiveFn& objective,
                       const RunOptions& opts);

} // namespace cocktail

#endif
