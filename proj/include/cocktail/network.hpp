#ifndef COCKTAIL_NETWORK_HPP
#define COCKTAIL_NETWORK_HPP

#include "cocktail/matrix.hpp"
#include "cocktail/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace cocktail {

enum class SkipMode { None, Residual, ShakeShake, ShakeDrop };

std::string skip_mode_name(SkipMode m);
SkipMode skip_mode_from_name(const std::string& s);

// Fixed MLP backbone: `n_layers` weight layers deep — an input stem, a body
// of width-preserving hidden layers, and a linear head. With a skip mode the
// body is grouped into two-sublayer blocks (plus one plain trailing sublayer
// when the body depth is odd); Shake-Shake blocks carry two parallel branches.
struct BackboneConfig {
    size_t n_layers = 9;
    size_t width = 512;
    size_t n_inputs = 0;
    size_t n_classes = 0;
    bool use_batch_norm = false;
    double dropout_rate = 0.0; // 0 = off; shared by all hidden sublayers
    SkipMode skip_mode = SkipMode::None;
    double shake_drop_max_prob = 0.0; // only read when skip_mode = ShakeDrop

    size_t body_sublayers() const { return n_layers - 2; }
    size_t n_blocks() const {
        return skip_mode == SkipMode::None ? 0 : body_sublayers() / 2;
    }
    size_t n_plain() const {
        return skip_mode == SkipMode::None ? body_sublayers() : body_sublayers() % 2;
    }
};

struct LinearLayer {
    Matrix w;               // fan_in x fan_out; z = x·w + b
    std::vector<double> b;
};

struct BatchNorm {
    std::vector<double> gamma, beta;        // learned scale/shift
    std::vector<double> run_mean, run_var;  // eval-mode statistics
};

struct Sublayer {
    LinearLayer lin;
    BatchNorm bn; // empty vectors when batch norm is off
};

struct Block {
    std::vector<Sublayer> branch1; // two sublayers
    std::vector<Sublayer> branch2; // two sublayers, Shake-Shake only
};

struct NetworkState {
    BackboneConfig cfg;
    Sublayer stem;
    std::vector<Block> blocks;
    std::vector<Sublayer> plain;
    LinearLayer head;
};

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

// Everything the backward pass needs about one realized stochastic forward.
struct SublayerTrace {
    Matrix input;                 // rows into the linear layer
    Matrix xhat;                  // batch-normalized activations (empty if BN off)
    std::vector<double> bn_mean, bn_var, inv_std; // per-feature batch stats
    Matrix pre_act;               // value entering the rectifier
    Matrix drop_mask;             // scaled inverted-dropout mask (empty if off)
};

struct BlockTrace {
    std::vector<SublayerTrace> branch1, branch2;
    double alpha = 0.0; // branch mix (Shake-Shake) or signed scale (Shake-Drop)
    int gate = 1;       // Shake-Drop Bernoulli gate
};

struct ForwardTrace {
    SublayerTrace stem;
    std::vector<BlockTrace> blocks;
    std::vector<SublayerTrace> plain;
    Matrix head_input;
    size_t batch = 0;
};

struct GradSublayer {
    Matrix dw;
    std::vector<double> db, dgamma, dbeta;
};

struct GradBlock {
    std::vector<GradSublayer> branch1, branch2;
};

struct NetworkGrads {
    GradSublayer stem;
    std::vector<GradBlock> blocks;
    std::vector<GradSublayer> plain;
    Matrix dhead_w;
    std::vector<double> dhead_b;
};

struct ForwardResult {
    Matrix logits;
    ForwardTrace trace;
};

struct BackwardResult {
    NetworkGrads grads;
    Matrix dinput; // loss gradient w.r.t. the batch rows (adversarial step input)
};

// Backward noise for the shake blocks: fresh draws give the regularizing
// mismatch between forward and backward; reusing the forward coefficients
// differentiates the realized forward exactly (finite-difference checks).
enum class ShakeBackward { FreshNoise, ReuseForward };

// He-scaled normal init (std = sqrt(2/fan_in)), zero biases, identity BN.
NetworkState init_network(const BackboneConfig& cfg, Rng& rng);

// Stochastic training forward: dropout masks on, BN batch statistics (running
// stats updated in place), shake coefficients drawn per block per batch.
ForwardResult forward_train(NetworkState& state, const Matrix& x, Rng& rng);

// Deterministic inference forward: dropout off, BN running statistics, shake
// blocks at their expectation coefficients.
Matrix forward_eval(const NetworkState& state, const Matrix& x);

// Exact gradients of the traced pass for all parameters and the input.
BackwardResult backward(const NetworkState& state, const ForwardTrace& trace,
                        const Matrix& dlogits, Rng& rng,
                        ShakeBackward noise = ShakeBackward::FreshNoise);

// softmax(forward_eval(x)) row-wise.
Matrix predict_proba(const NetworkState& state, const Matrix& x);

// Shake-Drop keep probability of block `index` (0-based) out of `n_blocks`:
// linear decay from 1 toward 1 - max_prob at the deepest block.
double shake_drop_keep_prob(size_t index, size_t n_blocks, double max_prob);

struct ParamSlice {
    double* p = nullptr;
    size_t n = 0;
    bool decay = false; // weight matrices only: the decoupled-decay targets
};

// All learnable parameters (gradients) in one fixed traversal order.
std::vector<ParamSlice> parameter_slices(NetworkState& state);
std::vector<ParamSlice> gradient_slices(NetworkGrads& grads, const NetworkState& state);

NetworkGrads make_grads(const NetworkState& state);

// Batch-norm layers in traversal order, paired with the same order of
// sublayer traces, so averaged batch statistics can be written back.
std::vector<BatchNorm*> batch_norms(NetworkState& state);
std::vector<const SublayerTrace*> sublayer_traces(const ForwardTrace& trace);

// Versioned little-endian binary checkpoint of one network; bit-exact round
// trip of every parameter and running statistic.
void save_network(const NetworkState& state, std::ostream& out);
NetworkState load_network(std::istream& in);

} // namespace cocktail

#endif
