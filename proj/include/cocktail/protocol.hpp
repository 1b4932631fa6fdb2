#ifndef COCKTAIL_PROTOCOL_HPP
#define COCKTAIL_PROTOCOL_HPP

#include "cocktail/bohb.hpp"
#include "cocktail/config_space.hpp"
#include "cocktail/dataset.hpp"
#include "cocktail/training.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cocktail {

enum class ObjectiveMetric { ValidationLoss, OneMinusBalancedAccuracy };

std::string objective_metric_name(ObjectiveMetric m);
ObjectiveMetric objective_metric_from_name(const std::string& s);

struct TrialRecord {
    size_t id = 0;
    Configuration config;
    uint64_t seed = 0;
    double budget_epochs = 0.0;
    double objective = kWorstObjective; // what the optimizer minimized
    double train_loss = 0.0;            // last completed epoch
    double val_loss = 0.0;              // of the returned model
    double val_balanced_accuracy = 0.0;
    size_t selected_epoch = 0;
    bool ok = false;
    std::string source = "random"; // suggestion origin audit
    std::string failure_reason;
    double start_ms = 0.0; // offsets from the run's start
    double end_ms = 0.0;
};

struct IncumbentPoint {
    double at_ms = 0.0;
    size_t trial_id = 0;
    double objective = kWorstObjective;
    double val_loss = 0.0;
    double val_balanced_accuracy = 0.0;
    Configuration config;
};

struct RefitResult {
    bool present = false;
    Configuration config;
    size_t epochs = 0;
    size_t seed = 0;
    double test_balanced_accuracy = 0.0;
    double test_loss = 0.0;
    double wall_seconds = 0.0;
};

// One optimization run, newline-delimited on disk: a `meta` line, then
// `trial` and `incumbent` lines in completion order, then at most one
// `refit` line. Fields serialize in fixed (alphabetical) order.
struct RunJournal {
    int schema_version = 1;
    std::string dataset;
    std::string space_fingerprint;
    std::string space_json; // full space definition for replay/restriction
    std::string objective_metric = "val_loss";
    uint64_t seed = 11;
    size_t workers = 1;
    size_t max_configs = 0;
    double max_walltime_s = 0.0;
    size_t dimensionality = 0;
    size_t total_epochs = 105;
    int64_t started_unix_ms = 0;
    TrainerOptions trainer;
    std::vector<TrialRecord> trials;
    std::vector<IncumbentPoint> trajectory;
    RefitResult refit;
};

struct SearchSettings {
    TrainerOptions trainer;
    SurrogateOptions surrogate; // fidelities filled from trainer when empty
    size_t max_configs = 0;     // 0 -> 40 x dimensionality
    double max_walltime_s = 0.0;
    size_t workers = 1;
    uint64_t seed = 11;
    ObjectiveMetric objective = ObjectiveMetric::ValidationLoss;
    bool multi_fidelity = false;
    double eta = 3.0;
    std::string journal_path; // empty -> in-memory only
};

// Flush cadence for live journal writes; reads COCKTAIL_FLUSH_INTERVAL
// (records per flush, >= 1), defaulting to 1 (flush every record).
size_t journal_flush_interval();

uint64_t space_fingerprint(const SearchSpace& space);

// Trains one configuration on the dataset's train split and scores it on the
// validation split. Training failures yield ok=false and the worst objective;
// this never throws for a valid configuration.
TrialRecord evaluate_config(const Configuration& c, const SplitDataset& data,
                            uint64_t seed, size_t budget_epochs,
                            const TrainerOptions& opts,
                            ObjectiveMetric metric = ObjectiveMetric::ValidationLoss);

// Full optimization run: drives the suggest/evaluate/observe loop with the
// trainer as objective, journaling every trial and incumbent change. The
// search only ever touches the train/validation view; test rows stay behind
// the dataset's audited accessor.
RunJournal search(const SplitDataset& data, const SearchSpace& space,
                  const SearchSettings& settings);

// Re-derives the incumbent by replaying the trial records in order: the
// lowest-objective ok trial at the highest budget.
std::optional<IncumbentPoint> replay_incumbent(const RunJournal& journal);

// Retrains the incumbent configuration on train+val (statistics recomputed
// over the union) with the run's seed, then scores the held-out test split.
RefitResult refit_and_test(RunJournal& journal, const SplitDataset& data);

// The incumbent as of a wall-clock cutoff (offset ms from run start); `any`
// is false before the first completed trial.
struct AnytimeSlice {
    bool any = false;
    Configuration config;
    double objective = kWorstObjective;
    double val_loss = 0.0;
    double val_balanced_accuracy = 0.0;
    size_t trial_id = 0;
    double at_ms = 0.0;
};

AnytimeSlice anytime_slice(const RunJournal& journal, double cutoff_ms);

void save_journal(const RunJournal& journal, const std::string& path);
RunJournal load_journal(const std::string& path);

} // namespace cocktail

#endif
