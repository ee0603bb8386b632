#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "stembuck/common.hpp"
#include "stembuck/rng.hpp"

namespace stembuck {

// Small LSTM with a two-layer head, sized for scalar sequences:
//
//   pre   = W_ih x_t + b_ih + W_hh h_{t-1} + b_hh          (4H rows: i,f,g,o)
//   i,f,o = sigmoid(pre_i), sigmoid(pre_f), sigmoid(pre_o)
//   g     = tanh(pre_g)
//   c_t   = f . c_{t-1} + i . g
//   h_t   = o . tanh(c_t)
//   y_t   = W2 relu(W1 h_t + b1) + b2                       (K outputs)
//
// Parameters live in one flat vector so the optimizer, gradient checking and
// checkpointing can treat the model as a plain coordinate vector.
struct LstmParams {
    int input_size = 1;
    int hidden_size = 10;
    int output_size = 2;
    std::vector<double> flat;

    struct Entry {
        std::string name;
        int rows = 0, cols = 0;
        size_t offset = 0;
        size_t count() const { return static_cast<size_t>(rows) * static_cast<size_t>(cols); }
    };

    std::vector<Entry> layout() const {
        const int I = input_size, H = hidden_size, K = output_size;
        std::vector<Entry> e;
        size_t off = 0;
        const auto add = [&](const char* name, int r, int c) {
            e.push_back({name, r, c, off});
            off += static_cast<size_t>(r) * static_cast<size_t>(c);
        };
        add("w_ih", 4 * H, I);
        add("w_hh", 4 * H, H);
        add("b_ih", 4 * H, 1);
        add("b_hh", 4 * H, 1);
        add("head_w1", H, H);
        add("head_b1", H, 1);
        add("head_w2", K, H);
        add("head_b2", K, 1);
        return e;
    }

    size_t param_count() const {
        const int I = input_size, H = hidden_size, K = output_size;
        return static_cast<size_t>(4 * H * I + 4 * H * H + 8 * H + H * H + H + K * H + K);
    }

    // flat offsets, same order as layout()
    size_t off_w_ih() const { return 0; }
    size_t off_w_hh() const { return off_w_ih() + static_cast<size_t>(4 * hidden_size * input_size); }
    size_t off_b_ih() const { return off_w_hh() + static_cast<size_t>(4 * hidden_size * hidden_size); }
    size_t off_b_hh() const { return off_b_ih() + static_cast<size_t>(4 * hidden_size); }
    size_t off_head_w1() const { return off_b_hh() + static_cast<size_t>(4 * hidden_size); }
    size_t off_head_b1() const { return off_head_w1() + static_cast<size_t>(hidden_size * hidden_size); }
    size_t off_head_w2() const { return off_head_b1() + static_cast<size_t>(hidden_size); }
    size_t off_head_b2() const { return off_head_w2() + static_cast<size_t>(output_size * hidden_size); }

    static LstmParams create(int input_size, int hidden_size, int output_size) {
        LstmParams p;
        p.input_size = input_size;
        p.hidden_size = hidden_size;
        p.output_size = output_size;
        p.flat.assign(p.param_count(), 0.0);
        return p;
    }

    // Uniform fan-in initialization in [-1/sqrt(H), 1/sqrt(H)].
    void init_uniform(uint64_t seed) {
        Rng rng(seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_size));
        for (double& v : flat) v = rng.uniform(-bound, bound);
    }

    bool all_finite() const {
        for (const double v : flat) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }
};

// Everything the backward pass needs, stored flat (T x width blocks) so a
// training loop can reuse the buffers across sequences.
struct LstmCache {
    int steps = 0;
    std::vector<double> x;                    // T x I
    std::vector<double> gi, gf, gg, go;       // T x H, post-activation gates
    std::vector<double> c, tc, h;             // T x H
    std::vector<double> z1, a1;               // T x H, head hidden layer
    std::vector<double> y;                    // T x K, head outputs

    void resize(int T, int I, int H, int K) {
        steps = T;
        x.assign(static_cast<size_t>(T) * I, 0.0);
        const size_t th = static_cast<size_t>(T) * H;
        gi.assign(th, 0.0); gf.assign(th, 0.0); gg.assign(th, 0.0); go.assign(th, 0.0);
        c.assign(th, 0.0); tc.assign(th, 0.0); h.assign(th, 0.0);
        z1.assign(th, 0.0); a1.assign(th, 0.0);
        y.assign(static_cast<size_t>(T) * K, 0.0);
    }

    double output(int t, int k, int K) const { return y[static_cast<size_t>(t) * K + k]; }
};

namespace detail {
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }
}

// Forward pass over a whole sequence; initial hidden and cell states are
// zero. Fills `cache` with the activations.
inline void lstm_forward(const LstmParams& params, const std::vector<double>& inputs,
                         LstmCache& cache) {
    const int I = params.input_size, H = params.hidden_size, K = params.output_size;
    if (inputs.empty() || inputs.size() % static_cast<size_t>(I) != 0) {
        throw invalid_input("lstm_forward: input length must be a nonzero multiple of input_size");
    }
    for (const double v : inputs) {
        if (!std::isfinite(v)) throw invalid_input("lstm_forward: non-finite input");
    }
    const int T = static_cast<int>(inputs.size()) / I;
    cache.resize(T, I, H, K);
    std::copy(inputs.begin(), inputs.end(), cache.x.begin());

    const double* w_ih = params.flat.data() + params.off_w_ih();
    const double* w_hh = params.flat.data() + params.off_w_hh();
    const double* b_ih = params.flat.data() + params.off_b_ih();
    const double* b_hh = params.flat.data() + params.off_b_hh();
    const double* w1 = params.flat.data() + params.off_head_w1();
    const double* b1 = params.flat.data() + params.off_head_b1();
    const double* w2 = params.flat.data() + params.off_head_w2();
    const double* b2 = params.flat.data() + params.off_head_b2();

    std::vector<double> pre(static_cast<size_t>(4) * H);
    for (int t = 0; t < T; ++t) {
        const double* xt = cache.x.data() + static_cast<size_t>(t) * I;
        const double* h_prev = t > 0 ? cache.h.data() + static_cast<size_t>(t - 1) * H : nullptr;
        const double* c_prev = t > 0 ? cache.c.data() + static_cast<size_t>(t - 1) * H : nullptr;

        for (int u = 0; u < 4 * H; ++u) {
            double acc = b_ih[u] + b_hh[u];
            const double* wi = w_ih + static_cast<size_t>(u) * I;
            for (int i = 0; i < I; ++i) acc += wi[i] * xt[i];
            if (h_prev) {
                const double* wh = w_hh + static_cast<size_t>(u) * H;
                for (int j = 0; j < H; ++j) acc += wh[j] * h_prev[j];
            }
            pre[u] = acc;
        }

        double* gi = cache.gi.data() + static_cast<size_t>(t) * H;
        double* gf = cache.gf.data() + static_cast<size_t>(t) * H;
        double* gg = cache.gg.data() + static_cast<size_t>(t) * H;
        double* go = cache.go.data() + static_cast<size_t>(t) * H;
        double* ct = cache.c.data() + static_cast<size_t>(t) * H;
        double* tct = cache.tc.data() + static_cast<size_t>(t) * H;
        double* ht = cache.h.data() + static_cast<size_t>(t) * H;
        for (int u = 0; u < H; ++u) {
            gi[u] = detail::sigmoid(pre[u]);
            gf[u] = detail::sigmoid(pre[H + u]);
            gg[u] = std::tanh(pre[2 * H + u]);
            go[u] = detail::sigmoid(pre[3 * H + u]);
            ct[u] = gf[u] * (c_prev ? c_prev[u] : 0.0) + gi[u] * gg[u];
            tct[u] = std::tanh(ct[u]);
            ht[u] = go[u] * tct[u];
        }

        double* z1t = cache.z1.data() + static_cast<size_t>(t) * H;
        double* a1t = cache.a1.data() + static_cast<size_t>(t) * H;
        for (int j = 0; j < H; ++j) {
            double acc = b1[j];
            const double* w1r = w1 + static_cast<size_t>(j) * H;
            for (int l = 0; l < H; ++l) acc += w1r[l] * ht[l];
            z1t[j] = acc;
            a1t[j] = acc > 0.0 ? acc : 0.0;
        }
        double* yt = cache.y.data() + static_cast<size_t>(t) * K;
        for (int k = 0; k < K; ++k) {
            double acc = b2[k];
            const double* w2r = w2 + static_cast<size_t>(k) * H;
            for (int j = 0; j < H; ++j) acc += w2r[j] * a1t[j];
            yt[k] = acc;
        }
    }
}

inline LstmCache lstm_forward(const LstmParams& params, const std::vector<double>& inputs) {
    LstmCache cache;
    lstm_forward(params, inputs, cache);
    return cache;
}

// Backpropagation through time. `d_outputs` is dLoss/dy (T x K, flat);
// gradients are ADDED into `grad`, which must already have param_count()
// entries (lets a mini-batch accumulate without temporaries).
inline void lstm_backward_accumulate(const LstmParams& params, const LstmCache& cache,
                                     const std::vector<double>& d_outputs,
                                     std::vector<double>& grad) {
    const int I = params.input_size, H = params.hidden_size, K = params.output_size;
    const int T = cache.steps;
    if (d_outputs.size() != static_cast<size_t>(T) * K) {
        throw invalid_input("lstm_backward: d_outputs does not match cached forward pass");
    }
    if (grad.size() != params.param_count()) {
        throw invalid_input("lstm_backward: gradient buffer has wrong size");
    }

    const double* w_hh = params.flat.data() + params.off_w_hh();
    const double* w1 = params.flat.data() + params.off_head_w1();
    const double* w2 = params.flat.data() + params.off_head_w2();

    double* g_w_ih = grad.data() + params.off_w_ih();
    double* g_w_hh = grad.data() + params.off_w_hh();
    double* g_b_ih = grad.data() + params.off_b_ih();
    double* g_b_hh = grad.data() + params.off_b_hh();
    double* g_w1 = grad.data() + params.off_head_w1();
    double* g_b1 = grad.data() + params.off_head_b1();
    double* g_w2 = grad.data() + params.off_head_w2();
    double* g_b2 = grad.data() + params.off_head_b2();

    std::vector<double> dh_carry(H, 0.0), dc_carry(H, 0.0);
    std::vector<double> dh(H), dc(H), dz1(H), dpre(static_cast<size_t>(4) * H);

    for (int t = T - 1; t >= 0; --t) {
        const double* xt = cache.x.data() + static_cast<size_t>(t) * I;
        const double* gi = cache.gi.data() + static_cast<size_t>(t) * H;
        const double* gf = cache.gf.data() + static_cast<size_t>(t) * H;
        const double* gg = cache.gg.data() + static_cast<size_t>(t) * H;
        const double* go = cache.go.data() + static_cast<size_t>(t) * H;
        const double* ct = cache.c.data() + static_cast<size_t>(t) * H;
        const double* tct = cache.tc.data() + static_cast<size_t>(t) * H;
        const double* ht = cache.h.data() + static_cast<size_t>(t) * H;
        const double* z1t = cache.z1.data() + static_cast<size_t>(t) * H;
        const double* a1t = cache.a1.data() + static_cast<size_t>(t) * H;
        const double* dyt = d_outputs.data() + static_cast<size_t>(t) * K;
        const double* h_prev = t > 0 ? cache.h.data() + static_cast<size_t>(t - 1) * H : nullptr;
        const double* c_prev = t > 0 ? cache.c.data() + static_cast<size_t>(t - 1) * H : nullptr;

        // head
        for (int j = 0; j < H; ++j) {
            double da1 = 0.0;
            for (int k = 0; k < K; ++k) da1 += w2[static_cast<size_t>(k) * H + j] * dyt[k];
            dz1[j] = z1t[j] > 0.0 ? da1 : 0.0;
        }
        for (int k = 0; k < K; ++k) {
            g_b2[k] += dyt[k];
            double* row = g_w2 + static_cast<size_t>(k) * H;
            for (int j = 0; j < H; ++j) row[j] += dyt[k] * a1t[j];
        }
        for (int j = 0; j < H; ++j) {
            g_b1[j] += dz1[j];
            double* row = g_w1 + static_cast<size_t>(j) * H;
            for (int l = 0; l < H; ++l) row[l] += dz1[j] * ht[l];
        }
        for (int l = 0; l < H; ++l) {
            double acc = dh_carry[l];
            for (int j = 0; j < H; ++j) acc += w1[static_cast<size_t>(j) * H + l] * dz1[j];
            dh[l] = acc;
        }

        // cell
        for (int u = 0; u < H; ++u) {
            const double d_o = dh[u] * tct[u];
            dc[u] = dh[u] * go[u] * (1.0 - tct[u] * tct[u]) + dc_carry[u];
            const double d_i = dc[u] * gg[u];
            const double d_f = dc[u] * (c_prev ? c_prev[u] : 0.0);
            const double d_g = dc[u] * gi[u];
            dpre[u] = d_i * gi[u] * (1.0 - gi[u]);
            dpre[H + u] = d_f * gf[u] * (1.0 - gf[u]);
            dpre[2 * H + u] = d_g * (1.0 - gg[u] * gg[u]);
            dpre[3 * H + u] = d_o * go[u] * (1.0 - go[u]);
        }

        for (int u = 0; u < 4 * H; ++u) {
            const double d = dpre[u];
            g_b_ih[u] += d;
            g_b_hh[u] += d;
            double* wi_row = g_w_ih + static_cast<size_t>(u) * I;
            for (int i = 0; i < I; ++i) wi_row[i] += d * xt[i];
            if (h_prev) {
                double* wh_row = g_w_hh + static_cast<size_t>(u) * H;
                for (int j = 0; j < H; ++j) wh_row[j] += d * h_prev[j];
            }
        }

        for (int j = 0; j < H; ++j) {
            double acc = 0.0;
            for (int u = 0; u < 4 * H; ++u) acc += w_hh[static_cast<size_t>(u) * H + j] * dpre[u];
            dh_carry[j] = acc;
        }
        for (int u = 0; u < H; ++u) dc_carry[u] = dc[u] * gf[u];
        (void)ct;
    }
}

inline std::vector<double> lstm_backward(const LstmParams& params, const LstmCache& cache,
                                         const std::vector<double>& d_outputs) {
    std::vector<double> grad(params.param_count(), 0.0);
    lstm_backward_accumulate(params, cache, d_outputs, grad);
    return grad;
}

// Incremental inference: keeps (h, c) between calls so autoregressive
// rollouts cost one cell evaluation per step. Produces the same outputs as
// lstm_forward over the accumulated inputs.
class LstmStepper {
public:
    explicit LstmStepper(const LstmParams& params)
        : params_(&params),
          h_(static_cast<size_t>(params.hidden_size), 0.0),
          c_(static_cast<size_t>(params.hidden_size), 0.0),
          y_(static_cast<size_t>(params.output_size), 0.0) {}

    void reset() {
        std::fill(h_.begin(), h_.end(), 0.0);
        std::fill(c_.begin(), c_.end(), 0.0);
    }

    // Advances one step with a scalar input; returns the head outputs.
    const std::vector<double>& step(double x) {
        const LstmParams& p = *params_;
        const int H = p.hidden_size, K = p.output_size;
        const double* w_ih = p.flat.data() + p.off_w_ih();
        const double* w_hh = p.flat.data() + p.off_w_hh();
        const double* b_ih = p.flat.data() + p.off_b_ih();
        const double* b_hh = p.flat.data() + p.off_b_hh();
        const double* w1 = p.flat.data() + p.off_head_w1();
        const double* b1 = p.flat.data() + p.off_head_b1();
        const double* w2 = p.flat.data() + p.off_head_w2();
        const double* b2 = p.flat.data() + p.off_head_b2();

        std::vector<double> pre(static_cast<size_t>(4) * H);
        for (int u = 0; u < 4 * H; ++u) {
            double acc = b_ih[u] + b_hh[u] + w_ih[u] * x;
            const double* wh = w_hh + static_cast<size_t>(u) * H;
            for (int j = 0; j < H; ++j) acc += wh[j] * h_[static_cast<size_t>(j)];
            pre[u] = acc;
        }
        std::vector<double> a1(static_cast<size_t>(H));
        for (int u = 0; u < H; ++u) {
            const double gi = detail::sigmoid(pre[u]);
            const double gf = detail::sigmoid(pre[H + u]);
            const double gg = std::tanh(pre[2 * H + u]);
            const double go = detail::sigmoid(pre[3 * H + u]);
            c_[static_cast<size_t>(u)] = gf * c_[static_cast<size_t>(u)] + gi * gg;
            h_[static_cast<size_t>(u)] = go * std::tanh(c_[static_cast<size_t>(u)]);
        }
        for (int j = 0; j < H; ++j) {
            double acc = b1[j];
            const double* w1r = w1 + static_cast<size_t>(j) * H;
            for (int l = 0; l < H; ++l) acc += w1r[l] * h_[static_cast<size_t>(l)];
            a1[static_cast<size_t>(j)] = acc > 0.0 ? acc : 0.0;
        }
        for (int k = 0; k < K; ++k) {
            double acc = b2[k];
            const double* w2r = w2 + static_cast<size_t>(k) * H;
            for (int j = 0; j < H; ++j) acc += w2r[j] * a1[static_cast<size_t>(j)];
            y_[static_cast<size_t>(k)] = acc;
        }
        return y_;
    }

private:
    const LstmParams* params_;
    std::vector<double> h_, c_, y_;
};

}  // namespace stembuck
