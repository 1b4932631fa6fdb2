#include "cocktail/training.hpp"

#include "cocktail/augmentation.hpp"
#include "cocktail/errors.hpp"
#include "cocktail/stats.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>

namespace cocktail {
namespace {

Matrix gather_rows(const Matrix& x, const std::vector<size_t>& idx, size_t begin,
                   size_t end) {
    Matrix out(end - begin, x.cols);
    for (size_t r = begin; r < end; ++r)
        for (size_t c = 0; c < x.cols; ++c) out(r - begin, c) = x(idx[r], c);
    return out;
}

std::vector<int> gather_labels(const std::vector<int>& y, const std::vector<size_t>& idx,
                               size_t begin, size_t end) {
    std::vector<int> out(end - begin);
    for (size_t r = begin; r < end; ++r) out[r - begin] = y[idx[r]];
    return out;
}

constexpr uint64_t kModelMagic = 0x31454c504d464e00ULL; // ensemble file tag

void write_u64_stream(std::ostream& out, uint64_t v) {
    out.write(reinterpret_cast<const char*>(&v), 8);
}

uint64_t read_u64_stream(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw IoError("model file truncated");
    return v;
}

} // namespace

double weighted_nll(const Matrix& proba, const Matrix& y_soft,
                    const std::vector<double>& class_weights) {
    require(proba.rows == y_soft.rows && proba.cols == y_soft.cols,
            "probabilities and targets differ in shape");
    require(class_weights.size() == proba.cols, "one weight per class required");
    double nll = 0.0, wsum = 0.0;
    for (size_t r = 0; r < proba.rows; ++r) {
        double omega = 0.0, row = 0.0;
        for (size_t c = 0; c < proba.cols; ++c) {
            omega += y_soft(r, c) * class_weights[c];
            row += y_soft(r, c) * std::log(std::max(proba(r, c), 1e-300));
        }
        nll -= omega * row;
        wsum += omega;
    }
    return nll / wsum;
}

Schedule Schedule::geometric(size_t initial, size_t multiplier, size_t total) {
    require(initial >= 1 && multiplier >= 1 && total >= initial,
            "invalid schedule geometry");
    Schedule s;
    size_t len = initial, sum = 0;
    while (sum < total) {
        s.cycle_lengths.push_back(len);
        sum += len;
        len *= multiplier;
    }
    require(sum == total, "cycle lengths do not tile the epoch budget exactly");
    return s;
}

size_t Schedule::total() const {
    size_t sum = 0;
    for (size_t len : cycle_lengths) sum += len;
    return sum;
}

size_t Schedule::cycle_index(double epoch) const {
    require(epoch >= 0.0 && epoch < static_cast<double>(total()),
            "epoch outside the schedule");
    double start = 0.0;
    for (size_t i = 0; i < cycle_lengths.size(); ++i) {
        const double end = start + static_cast<double>(cycle_lengths[i]);
        if (epoch < end) return i;
        start = end;
    }
    throw ContractViolation("unreachable: schedule tiling");
}

bool Schedule::is_restart(size_t epoch) const {
    size_t start = 0;
    for (size_t len : cycle_lengths) {
        if (epoch == start) return true;
        start += len;
    }
    return false;
}

bool Schedule::is_cycle_end(size_t epoch) const {
    size_t end = 0;
    for (size_t len : cycle_lengths) {
        end += len;
        if (epoch + 1 == end) return true;
    }
    return false;
}

double cosine_lr(const Schedule& sched, double epoch, double base_lr) {
    const size_t cycle = sched.cycle_index(epoch);
    double start = 0.0;
    for (size_t i = 0; i < cycle; ++i)
        start += static_cast<double>(sched.cycle_lengths[i]);
    const double t_cur = epoch - start;
    const double t_cycle = static_cast<double>(sched.cycle_lengths[cycle]);
    constexpr double kPi = 3.14159265358979323846;
    return 0.5 * base_lr * (1.0 + std::cos(kPi * t_cur / t_cycle));
}

OptimizerState make_optimizer(NetworkState& net, double base_lr, double weight_decay) {
    require(base_lr > 0.0, "learning rate must be positive");
    require(weight_decay >= 0.0, "weight decay must be nonnegative");
    OptimizerState opt;
    opt.base_lr = base_lr;
    opt.weight_decay = weight_decay;
    for (const auto& slice : parameter_slices(net)) {
        opt.m.emplace_back(slice.n, 0.0);
        opt.v.emplace_back(slice.n, 0.0);
    }
    return opt;
}

bool adamw_step(OptimizerState& opt, std::vector<ParamSlice> params,
                std::vector<ParamSlice> grads, double lr) {
    require(params.size() == grads.size() && params.size() == opt.m.size(),
            "optimizer slice count mismatch");
    for (size_t s = 0; s < grads.size(); ++s) {
        require(params[s].n == grads[s].n && params[s].n == opt.m[s].size(),
                "optimizer slice shape mismatch");
        for (size_t i = 0; i < grads[s].n; ++i)
            if (!std::isfinite(grads[s].p[i])) return false;
    }
    const long t = opt.step + 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(t));
    for (size_t s = 0; s < params.size(); ++s) {
        double* theta = params[s].p;
        const double* g = grads[s].p;
        auto& m = opt.m[s];
        auto& v = opt.v[s];
        const double decay = params[s].decay ? opt.weight_decay : 0.0;
        for (size_t i = 0; i < params[s].n; ++i) {
            m[i] = opt.beta1 * m[i] + (1.0 - opt.beta1) * g[i];
            v[i] = opt.beta2 * v[i] + (1.0 - opt.beta2) * g[i] * g[i];
            const double m_hat = m[i] / bc1;
            const double v_hat = v[i] / bc2;
            theta[i] -= lr * m_hat / (std::sqrt(v_hat) + opt.eps) + lr * decay * theta[i];
        }
    }
    opt.step = t;
    return true;
}

LookaheadState make_lookahead(NetworkState& net, int64_t k, double alpha) {
    require(k >= 1, "lookahead step count must be at least 1");
    require(alpha >= 0.0 && alpha <= 1.0, "lookahead alpha outside [0, 1]");
    LookaheadState la;
    la.k = k;
    la.alpha = alpha;
    for (const auto& slice : parameter_slices(net))
        la.slow.emplace_back(slice.p, slice.p + slice.n);
    return la;
}

bool lookahead_sync(LookaheadState& la, NetworkState& net) {
    if (++la.since_sync < la.k) return false;
    la.since_sync = 0;
    auto slices = parameter_slices(net);
    require(slices.size() == la.slow.size(), "lookahead slice count mismatch");
    for (size_t s = 0; s < slices.size(); ++s) {
        double* fast = slices[s].p;
        auto& slow = la.slow[s];
        for (size_t i = 0; i < slices[s].n; ++i) {
            slow[i] += la.alpha * (fast[i] - slow[i]);
            fast[i] = slow[i];
        }
    }
    return true;
}

SwaAverage make_swa(NetworkState& net) {
    SwaAverage swa;
    for (const auto& slice : parameter_slices(net)) swa.avg.emplace_back(slice.n, 0.0);
    return swa;
}

void swa_update(SwaAverage& swa, NetworkState& net) {
    auto slices = parameter_slices(net);
    require(slices.size() == swa.avg.size(), "average slice count mismatch");
    const double next = static_cast<double>(swa.count + 1);
    for (size_t s = 0; s < slices.size(); ++s)
        for (size_t i = 0; i < slices[s].n; ++i)
            swa.avg[s][i] += (slices[s].p[i] - swa.avg[s][i]) / next;
    ++swa.count;
}

void swa_write_back(const SwaAverage& swa, NetworkState& target) {
    require(swa.count > 0, "writing back an empty parameter average");
    auto slices = parameter_slices(target);
    require(slices.size() == swa.avg.size(), "average slice count mismatch");
    for (size_t s = 0; s < slices.size(); ++s)
        for (size_t i = 0; i < slices[s].n; ++i) slices[s].p[i] = swa.avg[s][i];
}

void recalibrate_batch_norm(NetworkState& net, const Matrix& x, size_t batch_size,
                            Rng& rng) {
    if (!net.cfg.use_batch_norm || x.rows == 0) return;
    require(batch_size >= 1, "batch size must be positive");
    const double saved_rate = net.cfg.dropout_rate;
    net.cfg.dropout_rate = 0.0; // statistics of the undropped activations
    auto bns = batch_norms(net);
    std::vector<std::vector<double>> mean_acc, var_acc;
    size_t n_batches = 0;
    for (size_t start = 0; start < x.rows; start += batch_size) {
        const size_t end = std::min(x.rows, start + batch_size);
        Matrix xb(end - start, x.cols);
        for (size_t r = start; r < end; ++r)
            for (size_t c = 0; c < x.cols; ++c) xb(r - start, c) = x(r, c);
        auto fr = forward_train(net, xb, rng);
        const auto traces = sublayer_traces(fr.trace);
        if (mean_acc.empty()) {
            mean_acc.resize(traces.size());
            var_acc.resize(traces.size());
            for (size_t l = 0; l < traces.size(); ++l) {
                mean_acc[l].assign(traces[l]->bn_mean.size(), 0.0);
                var_acc[l].assign(traces[l]->bn_var.size(), 0.0);
            }
        }
        for (size_t l = 0; l < traces.size(); ++l)
            for (size_t j = 0; j < mean_acc[l].size(); ++j) {
                mean_acc[l][j] += traces[l]->bn_mean[j];
                var_acc[l][j] += traces[l]->bn_var[j];
            }
        ++n_batches;
    }
    for (size_t l = 0; l < bns.size(); ++l)
        for (size_t j = 0; j < bns[l]->run_mean.size(); ++j) {
            bns[l]->run_mean[j] = mean_acc[l][j] / static_cast<double>(n_batches);
            bns[l]->run_var[j] = var_acc[l][j] / static_cast<double>(n_batches);
        }
    net.cfg.dropout_rate = saved_rate;
}

void snapshot_capture(std::vector<NetworkState>& snapshots, const NetworkState& net,
                      size_t epoch, const Schedule& sched) {
    require(sched.is_cycle_end(epoch), "snapshots are captured only at cycle ends");
    snapshots.push_back(net);
}

LossResult weighted_cross_entropy(const Matrix& logits, const Matrix& y_soft,
                                  const std::vector<double>& class_weights) {
    require(logits.rows == y_soft.rows && logits.cols == y_soft.cols,
            "logits and targets differ in shape");
    require(class_weights.size() == logits.cols, "one weight per class required");
    const size_t n = logits.rows, k = logits.cols;
    LossResult res;
    res.dlogits = Matrix(n, k);
    Matrix proba(n, k);
    std::vector<double> omega(n, 0.0);
    double loss_acc = 0.0, wsum = 0.0;
    for (size_t r = 0; r < n; ++r) {
        double zmax = logits(r, 0);
        for (size_t c = 1; c < k; ++c) zmax = std::max(zmax, logits(r, c));
        double lse = 0.0;
        for (size_t c = 0; c < k; ++c) lse += std::exp(logits(r, c) - zmax);
        lse = std::log(lse);
        double row_loss = 0.0;
        for (size_t c = 0; c < k; ++c) {
            const double logp = logits(r, c) - zmax - lse;
            proba(r, c) = std::exp(logp);
            omega[r] += y_soft(r, c) * class_weights[c];
            row_loss -= y_soft(r, c) * logp;
        }
        loss_acc += omega[r] * row_loss;
        wsum += omega[r];
    }
    res.loss = loss_acc / wsum;
    res.weight_sum = wsum;
    for (size_t r = 0; r < n; ++r)
        for (size_t c = 0; c < k; ++c)
            res.dlogits(r, c) = omega[r] * (proba(r, c) - y_soft(r, c)) / wsum;
    return res;
}

Matrix model_predict_proba(const TrainedModel& model, const Matrix& x) {
    require(!model.members.empty(), "prediction from an empty ensemble");
    Matrix acc = predict_proba(model.members[0], x);
    for (size_t m = 1; m < model.members.size(); ++m) {
        const Matrix p = predict_proba(model.members[m], x);
        for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += p.data[i];
    }
    const double inv = 1.0 / static_cast<double>(model.members.size());
    for (auto& v : acc.data) v *= inv;
    return acc;
}

std::vector<int> predict_classes(const Matrix& proba) {
    std::vector<int> out(proba.rows, 0);
    for (size_t r = 0; r < proba.rows; ++r) {
        size_t best = 0;
        for (size_t c = 1; c < proba.cols; ++c)
            if (proba(r, c) > proba(r, best)) best = c;
        out[r] = static_cast<int>(best);
    }
    return out;
}

void save_model(const TrainedModel& model, const std::string& path) {
    require(!model.members.empty(), "saving an empty ensemble");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open model file for writing: " + path);
    write_u64_stream(out, kModelMagic);
    write_u64_stream(out, 1);
    write_u64_stream(out, model.members.size());
    for (const auto& member : model.members) save_network(member, out);
    if (!out) throw IoError("failed to write model file: " + path);
}

TrainedModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file: " + path);
    if (read_u64_stream(in) != kModelMagic) throw IoError("not a model file: " + path);
    if (read_u64_stream(in) != 1) throw IoError("unsupported model file version");
    const uint64_t count = read_u64_stream(in);
    if (count == 0 || count > 4096) throw IoError("implausible ensemble size");
    TrainedModel model;
    for (uint64_t i = 0; i < count; ++i) model.members.push_back(load_network(in));
    return model;
}

TrainResult train(const Configuration& cfg, const TrainValView& data, uint64_t seed,
                  size_t budget_epochs, const TrainerOptions& opts) {
    require(data.x_train != nullptr && data.y_train != nullptr &&
                data.x_val != nullptr && data.y_val != nullptr &&
                data.class_weights != nullptr,
            "training needs a bound data view");
    require(data.x_train->rows >= 1, "training split is empty");
    require(budget_epochs >= 1 && budget_epochs <= opts.total_epochs,
            "epoch budget outside the schedule");
    const Schedule sched =
        Schedule::geometric(opts.initial_cycle, opts.cycle_multiplier, opts.total_epochs);

    const bool use_bn = config_bool(cfg, "use_batch_norm");
    const bool use_drop = config_bool(cfg, "use_dropout");
    const bool use_skip = config_bool(cfg, "use_skip_connection");
    const bool use_wd = config_bool(cfg, "use_weight_decay");
    const bool use_la = config_bool(cfg, "use_lookahead");
    const bool use_swa = config_bool(cfg, "use_swa");
    const bool use_se = config_bool(cfg, "use_snapshot_ensemble");
    const std::string aug = config_text(cfg, "augmentation", "none");

    BackboneConfig bc;
    bc.n_layers = opts.n_layers;
    bc.width = opts.width;
    bc.n_inputs = data.x_train->cols;
    bc.n_classes = data.n_classes;
    bc.use_batch_norm = use_bn;
    bc.dropout_rate = use_drop ? config_real(cfg, "dropout_rate", 0.0) : 0.0;
    bc.skip_mode = use_skip
                       ? skip_mode_from_name(config_text(cfg, "skip_variant", "residual"))
                       : SkipMode::None;
    bc.shake_drop_max_prob = bc.skip_mode == SkipMode::ShakeDrop
                                 ? config_real(cfg, "shake_drop_max_prob", 0.0)
                                 : 0.0;

    const double weight_decay = use_wd ? config_real(cfg, "weight_decay_lambda", 0.0) : 0.0;
    const double base_lr = cfg.count("learning_rate") > 0
                               ? config_real(cfg, "learning_rate", opts.base_lr)
                               : opts.base_lr;
    const double mixup_alpha = config_real(cfg, "mixup_alpha", 0.0);
    const double cutmix_prob = config_real(cfg, "cutmix_prob", 0.0);
    const double cutout_prob = config_real(cfg, "cutout_prob", 0.0);
    const double cutout_ratio = config_real(cfg, "cutout_ratio", 0.0);
    const double adv_eps = config_real(cfg, "adversarial_epsilon", 0.0);

    const auto wall_start = std::chrono::steady_clock::now();
    TrainResult out;
    TrainReport& rep = out.report;
    auto finish = [&](NetworkState&& fallback) -> TrainResult& {
        if (out.model.members.empty()) out.model.members.push_back(std::move(fallback));
        rep.wall_seconds = std::chrono::duration<double>(
                               std::chrono::steady_clock::now() - wall_start)
                               .count();
        return out;
    };

    Rng rng(seed);
    NetworkState net = init_network(bc, rng);
    OptimizerState opt = make_optimizer(net, base_lr, weight_decay);
    LookaheadState la;
    if (use_la)
        la = make_lookahead(net, config_int(cfg, "lookahead_steps", 5),
                            config_real(cfg, "lookahead_alpha", 0.5));
    SwaAverage swa = make_swa(net);
    std::vector<NetworkState> snapshots;
    std::vector<double> weights =
        opts.weighted_loss ? *data.class_weights
                           : std::vector<double>(data.n_classes, 1.0);

    const Matrix& x_train = *data.x_train;
    const std::vector<int>& y_train = *data.y_train;
    const size_t n_train = x_train.rows;
    const bool has_val = data.x_val->rows > 0;

    NetworkState best_net;
    bool have_best = false;
    double best_ba = -1.0;
    size_t best_epoch = 0;
    const bool track_best = opts.early_stopping && !use_se && !use_swa && has_val;
    const size_t last_cycle = sched.cycle_lengths.size() - 1;

    for (size_t epoch = 0; epoch < budget_epochs; ++epoch) {
        const double lr = cosine_lr(sched, static_cast<double>(epoch), base_lr);
        const auto order = rng.permutation(n_train);
        double loss_acc = 0.0, w_acc = 0.0;
        for (size_t start = 0; start < n_train; start += opts.batch_size) {
            const size_t end = std::min(n_train, start + opts.batch_size);
            Matrix xb = gather_rows(x_train, order, start, end);
            const auto yb = gather_labels(y_train, order, start, end);
            const Matrix y1 = one_hot(yb, data.n_classes);

            Matrix xin = xb;
            Matrix y_soft = y1;
            if (aug == "mixup" && mixup_alpha > 0.0) {
                auto ab = mixup(xb, y1, mixup_alpha, rng);
                xin = std::move(ab.x);
                y_soft = std::move(ab.y_soft);
            } else if (aug == "cutmix" && cutmix_prob > 0.0) {
                auto ab = cutmix(xb, y1, cutmix_prob, rng);
                xin = std::move(ab.x);
                y_soft = std::move(ab.y_soft);
            } else if (aug == "cutout" && cutout_prob > 0.0) {
                auto ab = cutout(xb, y1, cutout_prob, cutout_ratio, rng);
                xin = std::move(ab.x);
                y_soft = std::move(ab.y_soft);
            } else if (aug == "adversarial" && adv_eps > 0.0) {
                auto clean = forward_train(net, xb, rng);
                auto closs = weighted_cross_entropy(clean.logits, y1, weights);
                if (!std::isfinite(closs.loss)) {
                    rep.failed = true;
                    rep.failure_reason = "non-finite loss on the clean batch";
                    rep.selected_epoch = epoch;
                    return finish(std::move(net));
                }
                auto cback = backward(net, clean.trace, closs.dlogits, rng);
                xin = fgsm(xb, cback.dinput, adv_eps);
            }

            auto fr = forward_train(net, xin, rng);
            auto lres = weighted_cross_entropy(fr.logits, y_soft, weights);
            if (!std::isfinite(lres.loss)) {
                rep.failed = true;
                rep.failure_reason = "non-finite training loss";
                rep.selected_epoch = epoch;
                return finish(std::move(net));
            }
            auto br = backward(net, fr.trace, lres.dlogits, rng);
            if (!adamw_step(opt, parameter_slices(net), gradient_slices(br.grads, net),
                            lr)) {
                rep.failed = true;
                rep.failure_reason = "non-finite gradient";
                rep.selected_epoch = epoch;
                return finish(std::move(net));
            }
            if (use_la) lookahead_sync(la, net);
            loss_acc += lres.loss * lres.weight_sum;
            w_acc += lres.weight_sum;
        }
        rep.train_loss.push_back(loss_acc / w_acc);

        const size_t cycle = sched.cycle_index(static_cast<double>(epoch));
        if (use_swa && (use_se || cycle == last_cycle)) swa_update(swa, net);
        if (use_se && sched.is_cycle_end(epoch)) {
            if (use_swa && swa.count > 0) {
                NetworkState member = net;
                swa_write_back(swa, member);
                recalibrate_batch_norm(member, x_train, opts.batch_size, rng);
                snapshots.push_back(std::move(member));
                swa = make_swa(net);
            } else {
                snapshot_capture(snapshots, net, epoch, sched);
            }
        }

        if (has_val) {
            const Matrix vlogits = forward_eval(net, *data.x_val);
            const Matrix vhot = one_hot(*data.y_val, data.n_classes);
            const auto vloss = weighted_cross_entropy(vlogits, vhot, weights);
            const double ba = balanced_accuracy(
                *data.y_val, predict_classes(softmax_rows(vlogits)), data.n_classes);
            rep.val_loss.push_back(vloss.loss);
            rep.val_balanced_accuracy.push_back(ba);
            if (track_best && ba > best_ba) {
                best_ba = ba;
                best_epoch = epoch;
                best_net = net;
                have_best = true;
            }
        } else {
            rep.val_loss.push_back(0.0);
            rep.val_balanced_accuracy.push_back(0.0);
        }
    }

    rep.selected_epoch = budget_epochs - 1;
    if (use_se && !snapshots.empty()) {
        out.model.members = std::move(snapshots);
    } else if (use_swa && swa.count > 0) {
        NetworkState member = net;
        swa_write_back(swa, member);
        recalibrate_batch_norm(member, x_train, opts.batch_size, rng);
        out.model.members.push_back(std::move(member));
    } else if (track_best && have_best) {
        rep.selected_epoch = best_epoch;
        out.model.members.push_back(std::move(best_net));
    }

    if (has_val && !out.model.members.empty()) {
        const Matrix proba = model_predict_proba(out.model, *data.x_val);
        rep.final_val_loss = weighted_nll(
            proba, one_hot(*data.y_val, data.n_classes), weights);
        rep.final_val_balanced_accuracy = balanced_accuracy(
            *data.y_val, predict_classes(proba), data.n_classes);
    } else if (has_val) {
        const Matrix proba = predict_proba(net, *data.x_val);
        rep.final_val_loss = weighted_nll(
            proba, one_hot(*data.y_val, data.n_classes), weights);
        rep.final_val_balanced_accuracy = balanced_accuracy(
            *data.y_val, predict_classes(proba), data.n_classes);
    }
    return finish(std::move(net));
}

} // namespace cocktail
