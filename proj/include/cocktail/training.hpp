#ifndef COCKTAIL_TRAINING_HPP
#define COCKTAIL_TRAINING_HPP

#include "cocktail/config_space.hpp"
#include "cocktail/dataset.hpp"
#include "cocktail/network.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cocktail {

// Cosine-annealing cycles with warm restarts; geometric budgets (15, 30, 60
// for the default 105-epoch run) restart the rate at full value.
struct Schedule {
    std::vector<size_t> cycle_lengths;

    static Schedule geometric(size_t initial, size_t multiplier, size_t total);
    size_t total() const;
    size_t cycle_index(double epoch) const;   // cycle containing this position
    bool is_restart(size_t epoch) const;      // epoch starts a cycle
    bool is_cycle_end(size_t epoch) const;    // epoch is the last of a cycle
};

// Annealed rate at a (possibly fractional) 0-based epoch position:
// eta = eta_min + (base - eta_min)/2 * (1 + cos(pi * t_cur / t_cycle)).
double cosine_lr(const Schedule& sched, double epoch, double base_lr);

struct OptimizerState {
    std::vector<std::vector<double>> m, v; // aligned with parameter slices
    long step = 0;
    double base_lr = 1e-3;
    double beta1 = 0.9, beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0; // decoupled; applied to weight matrices only
};

OptimizerState make_optimizer(NetworkState& net, double base_lr, double weight_decay);

// One decoupled-decay adaptive step at rate `lr`; returns false (leaving a
// partially updated state unusable for the caller's purposes) when a
// non-finite gradient is met — the trial-failure signal, never a throw.
bool adamw_step(OptimizerState& opt, std::vector<ParamSlice> params,
                std::vector<ParamSlice> grads, double lr);

struct LookaheadState {
    std::vector<std::vector<double>> slow;
    int64_t k = 5;
    double alpha = 0.5;
    int64_t since_sync = 0;
};

LookaheadState make_lookahead(NetworkState& net, int64_t k, double alpha);

// Call after every optimizer step; every k-th call folds the fast weights
// into the slow ones (slow += alpha*(fast-slow)) and resets fast := slow.
bool lookahead_sync(LookaheadState& la, NetworkState& net);

struct SwaAverage {
    std::vector<std::vector<double>> avg;
    long count = 0;
};

SwaAverage make_swa(NetworkState& net);
void swa_update(SwaAverage& swa, NetworkState& net);
void swa_write_back(const SwaAverage& swa, NetworkState& target);

// Batch-statistics pass: replaces every BN layer's running statistics with
// the average batch statistics over one deterministic sweep of x (dropout
// off; shake noise drawn from rng).
void recalibrate_batch_norm(NetworkState& net, const Matrix& x, size_t batch_size,
                            Rng& rng);

// Deep-copies the network at a cosine-cycle end into the snapshot list.
void snapshot_capture(std::vector<NetworkState>& snapshots, const NetworkState& net,
                      size_t epoch, const Schedule& sched);

struct LossResult {
    double loss = 0.0;
    Matrix dlogits;
    double weight_sum = 0.0;
};

// Row-weighted soft-label cross entropy: each row weighs by the class-weight
// expectation under its soft target; dlogits is the exact gradient.
LossResult weighted_cross_entropy(const Matrix& logits, const Matrix& y_soft,
                                  const std::vector<double>& class_weights);

// Prediction = mean of member softmax outputs.
struct TrainedModel {
    std::vector<NetworkState> members;
};

Matrix model_predict_proba(const TrainedModel& model, const Matrix& x);
std::vector<int> predict_classes(const Matrix& proba);

// Row-weighted negative log likelihood straight from probabilities (the loss
// of an averaged ensemble, where logits no longer exist).
double weighted_nll(const Matrix& proba, const Matrix& y_soft,
                    const std::vector<double>& class_weights);

// Multi-member binary checkpoint; bit-exact round trip.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path);

struct TrainerOptions {
    size_t n_layers = 9;
    size_t width = 512;
    size_t batch_size = 128;
    double base_lr = 1e-3;
    size_t initial_cycle = 15;
    size_t cycle_multiplier = 2;
    size_t total_epochs = 105;
    bool early_stopping = false;
    bool weighted_loss = true;
};

struct TrainReport {
    std::vector<double> train_loss;             // one entry per epoch run
    std::vector<double> val_loss;
    std::vector<double> val_balanced_accuracy;
    size_t selected_epoch = 0;
    double final_val_loss = 0.0;                // of the returned model
    double final_val_balanced_accuracy = 0.0;
    double wall_seconds = 0.0;
    bool failed = false;
    std::string failure_reason;
};

struct TrainResult {
    TrainedModel model;
    TrainReport report;
};

// The full fixed pipeline: shuffled mini-batches, the configuration's one
// augmentation, forward/backward, decoupled-decay steps on the cosine
// schedule, optional Lookahead/SWA/snapshots, per-epoch validation metrics.
// Deterministic given (cfg, opts, seed). budget_epochs caps the epochs run;
// the schedule geometry always spans opts.total_epochs.
TrainResult train(const Configuration& cfg, const TrainValView& data, uint64_t seed,
                  size_t budget_epochs, const TrainerOptions& opts);

} // namespace cocktail

#endif
