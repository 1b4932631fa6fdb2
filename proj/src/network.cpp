#include "cocktail/network.hpp"

#include "cocktail/errors.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>

namespace cocktail {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {

void check_config(const BackboneConfig& cfg) {
    require(cfg.n_layers >= 2, "backbone needs at least 2 weight layers");
    require(cfg.width >= 1 && cfg.n_inputs >= 1, "backbone needs positive widths");
    require(cfg.n_classes >= 2, "backbone needs at least 2 classes");
    require(cfg.dropout_rate >= 0.0 && cfg.dropout_rate <= 0.8,
            "dropout rate outside [0, 0.8]");
    if (cfg.skip_mode == SkipMode::ShakeDrop)
        require(cfg.shake_drop_max_prob >= 0.0 && cfg.shake_drop_max_prob <= 1.0,
                "shake-drop max prob outside [0, 1]");
}

void add_bias(Matrix& z, const std::vector<double>& b) {
    for (size_t r = 0; r < z.rows; ++r) {
        double* row = z.row(r);
        for (size_t c = 0; c < z.cols; ++c) row[c] += b[c];
    }
}

std::vector<double> column_sums(const Matrix& m) {
    std::vector<double> s(m.cols, 0.0);
    for (size_t r = 0; r < m.rows; ++r) {
        const double* row = m.row(r);
        for (size_t c = 0; c < m.cols; ++c) s[c] += row[c];
    }
    return s;
}

LinearLayer init_linear(size_t fan_in, size_t fan_out, Rng& rng) {
    LinearLayer lin;
    lin.w = Matrix(fan_in, fan_out);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    for (size_t i = 0; i < lin.w.data.size(); ++i) lin.w.data[i] = rng.normal(0.0, stddev);
    lin.b.assign(fan_out, 0.0);
    return lin;
}

BatchNorm init_bn(size_t n) {
    BatchNorm bn;
    bn.gamma.assign(n, 1.0);
    bn.beta.assign(n, 0.0);
    bn.run_mean.assign(n, 0.0);
    bn.run_var.assign(n, 1.0);
    return bn;
}

Sublayer init_sublayer(size_t fan_in, size_t fan_out, bool use_bn, Rng& rng) {
    Sublayer s;
    s.lin = init_linear(fan_in, fan_out, rng);
    if (use_bn) s.bn = init_bn(fan_out);
    return s;
}

// linear -> batch norm -> rectifier -> inverted dropout. Mask elements are
// drawn row-major; running statistics updated in place.
Matrix sublayer_forward_train(Sublayer& s, bool use_bn, double rate, const Matrix& x,
                              Rng& rng, SublayerTrace& tr) {
    tr.input = x;
    Matrix z = matmul(x, s.lin.w);
    add_bias(z, s.lin.b);
    const size_t n = z.rows, d = z.cols;
    Matrix h;
    if (use_bn) {
        tr.bn_mean.assign(d, 0.0);
        tr.bn_var.assign(d, 0.0);
        tr.inv_std.assign(d, 0.0);
        for (size_t c = 0; c < d; ++c) {
            double sum = 0.0;
            for (size_t r = 0; r < n; ++r) sum += z(r, c);
            tr.bn_mean[c] = sum / static_cast<double>(n);
        }
        for (size_t c = 0; c < d; ++c) {
            double ss = 0.0;
            for (size_t r = 0; r < n; ++r) {
                double diff = z(r, c) - tr.bn_mean[c];
                ss += diff * diff;
            }
            tr.bn_var[c] = ss / static_cast<double>(n);
            tr.inv_std[c] = 1.0 / std::sqrt(tr.bn_var[c] + kBnEps);
        }
        tr.xhat = Matrix(n, d);
        h = Matrix(n, d);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < d; ++c) {
                tr.xhat(r, c) = (z(r, c) - tr.bn_mean[c]) * tr.inv_std[c];
                h(r, c) = s.bn.gamma[c] * tr.xhat(r, c) + s.bn.beta[c];
            }
        for (size_t c = 0; c < d; ++c) {
            s.bn.run_mean[c] =
                (1.0 - kBnMomentum) * s.bn.run_mean[c] + kBnMomentum * tr.bn_mean[c];
            s.bn.run_var[c] =
                (1.0 - kBnMomentum) * s.bn.run_var[c] + kBnMomentum * tr.bn_var[c];
        }
    } else {
        h = std::move(z);
    }
    tr.pre_act = h;
    Matrix a(n, d);
    for (size_t i = 0; i < a.data.size(); ++i)
        a.data[i] = h.data[i] > 0.0 ? h.data[i] : 0.0;
    if (rate > 0.0) {
        const double scale = 1.0 / (1.0 - rate);
        tr.drop_mask = Matrix(n, d);
        for (size_t i = 0; i < tr.drop_mask.data.size(); ++i)
            tr.drop_mask.data[i] = rng.bernoulli(1.0 - rate) ? scale : 0.0;
        for (size_t i = 0; i < a.data.size(); ++i) a.data[i] *= tr.drop_mask.data[i];
    }
    return a;
}

Matrix sublayer_forward_eval(const Sublayer& s, bool use_bn, const Matrix& x) {
    Matrix z = matmul(x, s.lin.w);
    add_bias(z, s.lin.b);
    if (use_bn) {
        for (size_t r = 0; r < z.rows; ++r)
            for (size_t c = 0; c < z.cols; ++c) {
                double xhat = (z(r, c) - s.bn.run_mean[c]) /
                              std::sqrt(s.bn.run_var[c] + kBnEps);
                z(r, c) = s.bn.gamma[c] * xhat + s.bn.beta[c];
            }
    }
    for (size_t i = 0; i < z.data.size(); ++i)
        z.data[i] = z.data[i] > 0.0 ? z.data[i] : 0.0;
    return z;
}

GradSublayer make_grad_sublayer(const Sublayer& s, bool use_bn) {
    GradSublayer g;
    g.dw = Matrix(s.lin.w.rows, s.lin.w.cols);
    g.db.assign(s.lin.b.size(), 0.0);
    if (use_bn) {
        g.dgamma.assign(s.bn.gamma.size(), 0.0);
        g.dbeta.assign(s.bn.beta.size(), 0.0);
    }
    return g;
}

Matrix sublayer_backward(const Sublayer& s, bool use_bn, double rate,
                         const SublayerTrace& tr, Matrix dout, GradSublayer& g) {
    if (rate > 0.0)
        for (size_t i = 0; i < dout.data.size(); ++i)
            dout.data[i] *= tr.drop_mask.data[i];
    for (size_t i = 0; i < dout.data.size(); ++i)
        if (tr.pre_act.data[i] <= 0.0) dout.data[i] = 0.0;

    Matrix dz;
    if (use_bn) {
        const size_t n = dout.rows, d = dout.cols;
        g.dgamma.assign(d, 0.0);
        g.dbeta.assign(d, 0.0);
        std::vector<double> sum_dxhat(d, 0.0), sum_dxhat_xhat(d, 0.0);
        Matrix dxhat(n, d);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < d; ++c) {
                g.dgamma[c] += dout(r, c) * tr.xhat(r, c);
                g.dbeta[c] += dout(r, c);
                dxhat(r, c) = dout(r, c) * s.bn.gamma[c];
                sum_dxhat[c] += dxhat(r, c);
                sum_dxhat_xhat[c] += dxhat(r, c) * tr.xhat(r, c);
            }
        dz = Matrix(n, d);
        const double inv_n = 1.0 / static_cast<double>(n);
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < d; ++c)
                dz(r, c) = tr.inv_std[c] * inv_n *
                           (static_cast<double>(n) * dxhat(r, c) - sum_dxhat[c] -
                            tr.xhat(r, c) * sum_dxhat_xhat[c]);
    } else {
        dz = std::move(dout);
    }
    g.dw = matmul_at_b(tr.input, dz);
    g.db = column_sums(dz);
    return matmul_a_bt(dz, s.lin.w);
}

Matrix branch_forward_train(std::vector<Sublayer>& branch, bool use_bn, double rate,
                            const Matrix& x, Rng& rng,
                            std::vector<SublayerTrace>& traces) {
    traces.resize(branch.size());
    Matrix a = x;
    for (size_t i = 0; i < branch.size(); ++i)
        a = sublayer_forward_train(branch[i], use_bn, rate, a, rng, traces[i]);
    return a;
}

Matrix branch_forward_eval(const std::vector<Sublayer>& branch, bool use_bn,
                           const Matrix& x) {
    Matrix a = x;
    for (const auto& s : branch) a = sublayer_forward_eval(s, use_bn, a);
    return a;
}

Matrix branch_backward(const std::vector<Sublayer>& branch, bool use_bn, double rate,
                       const std::vector<SublayerTrace>& traces, Matrix dout,
                       std::vector<GradSublayer>& grads) {
    grads.resize(branch.size());
    for (size_t i = branch.size(); i-- > 0;)
        dout = sublayer_backward(branch[i], use_bn, rate, traces[i], std::move(dout),
                                 grads[i]);
    return dout;
}

Matrix scaled(const Matrix& m, double c) {
    Matrix out = m;
    for (auto& v : out.data) v *= c;
    return out;
}

void add_scaled(Matrix& acc, const Matrix& m, double c) {
    for (size_t i = 0; i < acc.data.size(); ++i) acc.data[i] += c * m.data[i];
}

// Coefficient draws come before the branch passes: Shake-Shake takes one
// mix alpha ~ U(0,1); Shake-Drop takes its gate then alpha ~ U(-1,1).
Matrix block_forward_train(Block& blk, const BackboneConfig& cfg, size_t index,
                           size_t n_blocks, const Matrix& x, Rng& rng, BlockTrace& tr) {
    const bool bn = cfg.use_batch_norm;
    const double rate = cfg.dropout_rate;
    switch (cfg.skip_mode) {
        case SkipMode::Residual: {
            Matrix f = branch_forward_train(blk.branch1, bn, rate, x, rng, tr.branch1);
            Matrix out = x;
            add_scaled(out, f, 1.0);
            return out;
        }
        case SkipMode::ShakeShake: {
            tr.alpha = rng.uniform01();
            Matrix f1 = branch_forward_train(blk.branch1, bn, rate, x, rng, tr.branch1);
            Matrix f2 = branch_forward_train(blk.branch2, bn, rate, x, rng, tr.branch2);
            Matrix out = x;
            add_scaled(out, f1, tr.alpha);
            add_scaled(out, f2, 1.0 - tr.alpha);
            return out;
        }
        case SkipMode::ShakeDrop: {
            const double keep =
                shake_drop_keep_prob(index, n_blocks, cfg.shake_drop_max_prob);
            tr.gate = rng.bernoulli(keep);
            tr.alpha = rng.uniform(-1.0, 1.0);
            const double coef =
                static_cast<double>(tr.gate) + tr.alpha * (1.0 - tr.gate);
            Matrix f = branch_forward_train(blk.branch1, bn, rate, x, rng, tr.branch1);
            Matrix out = x;
            add_scaled(out, f, coef);
            return out;
        }
        case SkipMode::None:
            break;
    }
    throw ContractViolation("block forward in a blockless mode");
}

Matrix block_forward_eval(const Block& blk, const BackboneConfig& cfg, size_t index,
                          size_t n_blocks, const Matrix& x) {
    const bool bn = cfg.use_batch_norm;
    switch (cfg.skip_mode) {
        case SkipMode::Residual: {
            Matrix out = x;
            add_scaled(out, branch_forward_eval(blk.branch1, bn, x), 1.0);
            return out;
        }
        case SkipMode::ShakeShake: {
            Matrix out = x;
            add_scaled(out, branch_forward_eval(blk.branch1, bn, x), 0.5);
            add_scaled(out, branch_forward_eval(blk.branch2, bn, x), 0.5);
            return out;
        }
        case SkipMode::ShakeDrop: {
            const double keep =
                shake_drop_keep_prob(index, n_blocks, cfg.shake_drop_max_prob);
            Matrix out = x;
            add_scaled(out, branch_forward_eval(blk.branch1, bn, x), keep);
            return out;
        }
        case SkipMode::None:
            break;
    }
    throw ContractViolation("block forward in a blockless mode");
}

Matrix block_backward(const Block& blk, const BackboneConfig& cfg, const BlockTrace& tr,
                      const Matrix& dout, Rng& rng, ShakeBackward noise, GradBlock& g) {
    const bool bn = cfg.use_batch_norm;
    const double rate = cfg.dropout_rate;
    switch (cfg.skip_mode) {
        case SkipMode::Residual: {
            Matrix dx = branch_backward(blk.branch1, bn, rate, tr.branch1, dout,
                                        g.branch1);
            add_scaled(dx, dout, 1.0);
            return dx;
        }
        case SkipMode::ShakeShake: {
            const double beta =
                noise == ShakeBackward::ReuseForward ? tr.alpha : rng.uniform01();
            Matrix dx = branch_backward(blk.branch1, bn, rate, tr.branch1,
                                        scaled(dout, beta), g.branch1);
            Matrix dx2 = branch_backward(blk.branch2, bn, rate, tr.branch2,
                                         scaled(dout, 1.0 - beta), g.branch2);
            add_scaled(dx, dx2, 1.0);
            add_scaled(dx, dout, 1.0);
            return dx;
        }
        case SkipMode::ShakeDrop: {
            const double mix =
                noise == ShakeBackward::ReuseForward ? tr.alpha : rng.uniform01();
            const double coef =
                static_cast<double>(tr.gate) + mix * (1.0 - tr.gate);
            Matrix dx = branch_backward(blk.branch1, bn, rate, tr.branch1,
                                        scaled(dout, coef), g.branch1);
            add_scaled(dx, dout, 1.0);
            return dx;
        }
        case SkipMode::None:
            break;
    }
    throw ContractViolation("block backward in a blockless mode");
}

NetworkState make_empty_network(const BackboneConfig& cfg) {
    check_config(cfg);
    NetworkState s;
    s.cfg = cfg;
    s.stem.lin.w = Matrix(cfg.n_inputs, cfg.width);
    s.stem.lin.b.assign(cfg.width, 0.0);
    if (cfg.use_batch_norm) s.stem.bn = init_bn(cfg.width);
    s.blocks.resize(cfg.n_blocks());
    for (auto& blk : s.blocks) {
        blk.branch1.resize(2);
        if (cfg.skip_mode == SkipMode::ShakeShake) blk.branch2.resize(2);
        for (auto* branch : {&blk.branch1, &blk.branch2})
            for (auto& sub : *branch) {
                sub.lin.w = Matrix(cfg.width, cfg.width);
                sub.lin.b.assign(cfg.width, 0.0);
                if (cfg.use_batch_norm) sub.bn = init_bn(cfg.width);
            }
    }
    s.plain.resize(cfg.n_plain());
    for (auto& sub : s.plain) {
        sub.lin.w = Matrix(cfg.width, cfg.width);
        sub.lin.b.assign(cfg.width, 0.0);
        if (cfg.use_batch_norm) sub.bn = init_bn(cfg.width);
    }
    s.head.w = Matrix(cfg.width, cfg.n_classes);
    s.head.b.assign(cfg.n_classes, 0.0);
    return s;
}

template <typename Fn>
void visit_sublayers(NetworkState& s, Fn&& fn) {
    fn(s.stem);
    for (auto& blk : s.blocks) {
        for (auto& sub : blk.branch1) fn(sub);
        for (auto& sub : blk.branch2) fn(sub);
    }
    for (auto& sub : s.plain) fn(sub);
}

void write_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void write_u64(std::ostream& out, uint64_t v) { write_bytes(out, &v, 8); }
void write_f64(std::ostream& out, double v) { write_bytes(out, &v, 8); }

void write_doubles(std::ostream& out, const std::vector<double>& v) {
    write_u64(out, v.size());
    if (!v.empty()) write_bytes(out, v.data(), v.size() * 8);
}

uint64_t read_u64(std::istream& in) {
    uint64_t v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw IoError("checkpoint truncated");
    return v;
}

double read_f64(std::istream& in) {
    double v = 0;
    in.read(reinterpret_cast<char*>(&v), 8);
    if (!in) throw IoError("checkpoint truncated");
    return v;
}

std::vector<double> read_doubles(std::istream& in, size_t expect) {
    const uint64_t n = read_u64(in);
    if (n != expect) throw IoError("checkpoint array size mismatch");
    std::vector<double> v(n, 0.0);
    if (n > 0) {
        in.read(reinterpret_cast<char*>(v.data()),
                static_cast<std::streamsize>(n * 8));
        if (!in) throw IoError("checkpoint truncated");
    }
    return v;
}

constexpr uint64_t kNetworkMagic = 0x314e504c4d464e00ULL; // "NFMLPN1" tag

} // namespace

std::string skip_mode_name(SkipMode m) {
    switch (m) {
        case SkipMode::None: return "none";
        case SkipMode::Residual: return "residual";
        case SkipMode::ShakeShake: return "shake_shake";
        case SkipMode::ShakeDrop: return "shake_drop";
    }
    throw ContractViolation("unreachable skip mode");
}

SkipMode skip_mode_from_name(const std::string& s) {
    if (s == "none") return SkipMode::None;
    if (s == "residual") return SkipMode::Residual;
    if (s == "shake_shake") return SkipMode::ShakeShake;
    if (s == "shake_drop") return SkipMode::ShakeDrop;
    throw IoError("unknown skip mode: " + s);
}

double shake_drop_keep_prob(size_t index, size_t n_blocks, double max_prob) {
    require(index < n_blocks, "shake-drop block index out of range");
    const double p_min = 1.0 - max_prob;
    const double depth_frac =
        static_cast<double>(index + 1) / static_cast<double>(n_blocks);
    return 1.0 - depth_frac * (1.0 - p_min);
}

NetworkState init_network(const BackboneConfig& cfg, Rng& rng) {
    check_config(cfg);
    NetworkState s;
    s.cfg = cfg;
    s.stem = init_sublayer(cfg.n_inputs, cfg.width, cfg.use_batch_norm, rng);
    s.blocks.resize(cfg.n_blocks());
    for (auto& blk : s.blocks) {
        blk.branch1.resize(2);
        for (auto& sub : blk.branch1)
            sub = init_sublayer(cfg.width, cfg.width, cfg.use_batch_norm, rng);
        if (cfg.skip_mode == SkipMode::ShakeShake) {
            blk.branch2.resize(2);
            for (auto& sub : blk.branch2)
                sub = init_sublayer(cfg.width, cfg.width, cfg.use_batch_norm, rng);
        }
    }
    s.plain.resize(cfg.n_plain());
    for (auto& sub : s.plain)
        sub = init_sublayer(cfg.width, cfg.width, cfg.use_batch_norm, rng);
    s.head = init_linear(cfg.width, cfg.n_classes, rng);
    return s;
}

ForwardResult forward_train(NetworkState& state, const Matrix& x, Rng& rng) {
    const auto& cfg = state.cfg;
    require(x.cols == cfg.n_inputs, "forward: input width mismatch");
    require(x.rows >= 1, "forward: empty batch");
    ForwardResult res;
    res.trace.batch = x.rows;
    Matrix a = sublayer_forward_train(state.stem, cfg.use_batch_norm, cfg.dropout_rate,
                                      x, rng, res.trace.stem);
    res.trace.blocks.resize(state.blocks.size());
    for (size_t i = 0; i < state.blocks.size(); ++i)
        a = block_forward_train(state.blocks[i], cfg, i, state.blocks.size(), a, rng,
                                res.trace.blocks[i]);
    res.trace.plain.resize(state.plain.size());
    for (size_t i = 0; i < state.plain.size(); ++i)
        a = sublayer_forward_train(state.plain[i], cfg.use_batch_norm, cfg.dropout_rate,
                                   a, rng, res.trace.plain[i]);
    res.trace.head_input = a;
    res.logits = matmul(a, state.head.w);
    add_bias(res.logits, state.head.b);
    return res;
}

Matrix forward_eval(const NetworkState& state, const Matrix& x) {
    const auto& cfg = state.cfg;
    require(x.cols == cfg.n_inputs, "forward: input width mismatch");
    Matrix a = sublayer_forward_eval(state.stem, cfg.use_batch_norm, x);
    for (size_t i = 0; i < state.blocks.size(); ++i)
        a = block_forward_eval(state.blocks[i], cfg, i, state.blocks.size(), a);
    for (const auto& sub : state.plain)
        a = sublayer_forward_eval(sub, cfg.use_batch_norm, a);
    Matrix logits = matmul(a, state.head.w);
    add_bias(logits, state.head.b);
    return logits;
}

BackwardResult backward(const NetworkState& state, const ForwardTrace& trace,
                        const Matrix& dlogits, Rng& rng, ShakeBackward noise) {
    const auto& cfg = state.cfg;
    require(trace.batch > 0, "backward: missing forward trace");
    require(dlogits.rows == trace.batch && dlogits.cols == cfg.n_classes,
            "backward: dlogits shape mismatch");
    require(trace.blocks.size() == state.blocks.size() &&
                trace.plain.size() == state.plain.size(),
            "backward: trace does not match this network");

    BackwardResult res;
    res.grads = make_grads(state);
    res.grads.dhead_w = matmul_at_b(trace.head_input, dlogits);
    res.grads.dhead_b = column_sums(dlogits);
    Matrix da = matmul_a_bt(dlogits, state.head.w);
    for (size_t i = state.plain.size(); i-- > 0;)
        da = sublayer_backward(state.plain[i], cfg.use_batch_norm, cfg.dropout_rate,
                               trace.plain[i], std::move(da), res.grads.plain[i]);
    for (size_t i = state.blocks.size(); i-- > 0;)
        da = block_backward(state.blocks[i], cfg, trace.blocks[i], da, rng, noise,
                            res.grads.blocks[i]);
    res.dinput = sublayer_backward(state.stem, cfg.use_batch_norm, cfg.dropout_rate,
                                   trace.stem, std::move(da), res.grads.stem);
    return res;
}

Matrix predict_proba(const NetworkState& state, const Matrix& x) {
    return softmax_rows(forward_eval(state, x));
}

NetworkGrads make_grads(const NetworkState& state) {
    const bool bn = state.cfg.use_batch_norm;
    NetworkGrads g;
    g.stem = make_grad_sublayer(state.stem, bn);
    g.blocks.resize(state.blocks.size());
    for (size_t i = 0; i < state.blocks.size(); ++i) {
        for (const auto& sub : state.blocks[i].branch1)
            g.blocks[i].branch1.push_back(make_grad_sublayer(sub, bn));
        for (const auto& sub : state.blocks[i].branch2)
            g.blocks[i].branch2.push_back(make_grad_sublayer(sub, bn));
    }
    for (const auto& sub : state.plain) g.plain.push_back(make_grad_sublayer(sub, bn));
    g.dhead_w = Matrix(state.head.w.rows, state.head.w.cols);
    g.dhead_b.assign(state.head.b.size(), 0.0);
    return g;
}

std::vector<ParamSlice> parameter_slices(NetworkState& state) {
    std::vector<ParamSlice> out;
    auto add = [&](std::vector<double>& v, bool decay) {
        if (!v.empty()) out.push_back({v.data(), v.size(), decay});
    };
    visit_sublayers(state, [&](Sublayer& sub) {
        add(sub.lin.w.data, true);
        add(sub.lin.b, false);
        add(sub.bn.gamma, false);
        add(sub.bn.beta, false);
    });
    add(state.head.w.data, true);
    add(state.head.b, false);
    return out;
}

std::vector<ParamSlice> gradient_slices(NetworkGrads& grads, const NetworkState& state) {
    std::vector<ParamSlice> out;
    auto add = [&](std::vector<double>& v, bool decay) {
        if (!v.empty()) out.push_back({v.data(), v.size(), decay});
    };
    auto add_sub = [&](GradSublayer& g) {
        add(g.dw.data, true);
        add(g.db, false);
        add(g.dgamma, false);
        add(g.dbeta, false);
    };
    add_sub(grads.stem);
    for (auto& blk : grads.blocks) {
        for (auto& g : blk.branch1) add_sub(g);
        for (auto& g : blk.branch2) add_sub(g);
    }
    for (auto& g : grads.plain) add_sub(g);
    add(grads.dhead_w.data, true);
    add(grads.dhead_b, false);
    require(out.size() == parameter_slices(const_cast<NetworkState&>(state)).size(),
            "gradient traversal out of step with parameters");
    return out;
}

std::vector<BatchNorm*> batch_norms(NetworkState& state) {
    std::vector<BatchNorm*> out;
    visit_sublayers(state, [&](Sublayer& sub) { out.push_back(&sub.bn); });
    return out;
}

std::vector<const SublayerTrace*> sublayer_traces(const ForwardTrace& trace) {
    std::vector<const SublayerTrace*> out;
    out.push_back(&trace.stem);
    for (const auto& blk : trace.blocks) {
        for (const auto& tr : blk.branch1) out.push_back(&tr);
        for (const auto& tr : blk.branch2) out.push_back(&tr);
    }
    for (const auto& tr : trace.plain) out.push_back(&tr);
    return out;
}

void save_network(const NetworkState& state, std::ostream& out) {
    const auto& cfg = state.cfg;
    write_u64(out, kNetworkMagic);
    write_u64(out, 1); // format version
    write_u64(out, cfg.n_layers);
    write_u64(out, cfg.width);
    write_u64(out, cfg.n_inputs);
    write_u64(out, cfg.n_classes);
    write_u64(out, cfg.use_batch_norm ? 1 : 0);
    write_f64(out, cfg.dropout_rate);
    write_u64(out, static_cast<uint64_t>(cfg.skip_mode));
    write_f64(out, cfg.shake_drop_max_prob);
    visit_sublayers(const_cast<NetworkState&>(state), [&](Sublayer& sub) {
        write_doubles(out, sub.lin.w.data);
        write_doubles(out, sub.lin.b);
        write_doubles(out, sub.bn.gamma);
        write_doubles(out, sub.bn.beta);
        write_doubles(out, sub.bn.run_mean);
        write_doubles(out, sub.bn.run_var);
    });
    write_doubles(out, state.head.w.data);
    write_doubles(out, state.head.b);
    if (!out) throw IoError("failed to write network checkpoint");
}

NetworkState load_network(std::istream& in) {
    if (read_u64(in) != kNetworkMagic) throw IoError("not a network checkpoint");
    if (read_u64(in) != 1) throw IoError("unsupported checkpoint version");
    BackboneConfig cfg;
    cfg.n_layers = read_u64(in);
    cfg.width = read_u64(in);
    cfg.n_inputs = read_u64(in);
    cfg.n_classes = read_u64(in);
    cfg.use_batch_norm = read_u64(in) != 0;
    cfg.dropout_rate = read_f64(in);
    const uint64_t mode = read_u64(in);
    if (mode > 3) throw IoError("checkpoint has an unknown skip mode");
    cfg.skip_mode = static_cast<SkipMode>(mode);
    cfg.shake_drop_max_prob = read_f64(in);

    NetworkState s = make_empty_network(cfg);
    visit_sublayers(s, [&](Sublayer& sub) {
        sub.lin.w.data = read_doubles(in, sub.lin.w.data.size());
        sub.lin.b = read_doubles(in, sub.lin.b.size());
        sub.bn.gamma = read_doubles(in, sub.bn.gamma.size());
        sub.bn.beta = read_doubles(in, sub.bn.beta.size());
        sub.bn.run_mean = read_doubles(in, sub.bn.run_mean.size());
        sub.bn.run_var = read_doubles(in, sub.bn.run_var.size());
    });
    s.head.w.data = read_doubles(in, s.head.w.data.size());
    s.head.b = read_doubles(in, s.head.b.size());
    return s;
}

} // namespace cocktail
