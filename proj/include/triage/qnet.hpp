#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "triage/errors.hpp"
#include "triage/mdp.hpp"
#include "triage/protocols.hpp"
#include "triage/random.hpp"
#include "triage/trajectory.hpp"

namespace triage::qnet {

// ---------------------------------------------------------------------------
// Dense row-major matrix, just enough for the nets here.
// ---------------------------------------------------------------------------
struct Mat {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0) {}

    double* row(int r) { return v.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<std::size_t>(r) * cols; }
    double& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }
};

namespace detail {

// out(MxC) = x(MxK) * w(KxC) + b(C); w is a row-major slice of a flat array.
inline void affine(const Mat& x, const double* w, const double* b, Mat& out) {
    const int m = x.rows, k = x.cols, c = out.cols;
    for (int i = 0; i < m; ++i) {
        double* o = out.row(i);
        if (b)
            std::memcpy(o, b, sizeof(double) * static_cast<std::size_t>(c));
        else
            std::fill(o, o + c, 0.0);
        const double* xi = x.row(i);
        for (int j = 0; j < k; ++j) {
            const double xv = xi[j];
            const double* wr = w + static_cast<std::size_t>(j) * c;
            for (int l = 0; l < c; ++l) o[l] += xv * wr[l];
        }
    }
}

// Gradients for the affine above. dx may be null when not needed.
inline void affine_backward(const Mat& x, const double* w, const Mat& dout, Mat* dx, double* dw,
                            double* db) {
    const int m = x.rows, k = x.cols, c = dout.cols;
    if (db)
        for (int i = 0; i < m; ++i) {
            const double* g = dout.row(i);
            for (int l = 0; l < c; ++l) db[l] += g[l];
        }
    if (dw)
        for (int i = 0; i < m; ++i) {
            const double* xi = x.row(i);
            const double* g = dout.row(i);
            for (int j = 0; j < k; ++j) {
                double* dwr = dw + static_cast<std::size_t>(j) * c;
                const double xv = xi[j];
                for (int l = 0; l < c; ++l) dwr[l] += xv * g[l];
            }
        }
    if (dx)
        for (int i = 0; i < m; ++i) {
            double* dxi = dx->row(i);
            const double* g = dout.row(i);
            for (int j = 0; j < k; ++j) {
                const double* wr = w + static_cast<std::size_t>(j) * c;
                double acc = 0;
                for (int l = 0; l < c; ++l) acc += wr[l] * g[l];
                dxi[j] += acc;
            }
        }
}

constexpr double kLayerNormEps = 1e-5;

} // namespace detail

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------
struct QNetConfig {
    int n_features = 38; // k: condition-vector width
    int n_groups = 4;
    bool fairness_features = false; // append 2*n_groups normalized counters per token
    int embed_dim = 64;             // reported full-scale value 1024
    int num_heads = 4;              // reported full-scale value 16
    int hidden_dim = 128;           // reported full-scale value 1024
    int num_layers = 2;
    int max_tokens = 32; // C + 2*Lambda
    bool attention_off = false; // ablation: no cross-token mixing

    int input_dim() const { return n_features + 1 + (fairness_features ? 2 * n_groups : 0); }

    void validate() const {
        if (embed_dim <= 0 || hidden_dim <= 0 || num_layers <= 0 || n_features <= 0)
            throw ConfigError("qnet dims must be positive");
        if (num_heads <= 0 || embed_dim % num_heads != 0)
            throw ConfigError("embed_dim must be divisible by num_heads");
        if (max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    }

    nlohmann::json to_json() const {
        return {{"n_features", n_features},   {"n_groups", n_groups},
                {"fairness_features", fairness_features},
                {"embed_dim", embed_dim},     {"num_heads", num_heads},
                {"hidden_dim", hidden_dim},   {"num_layers", num_layers},
                {"max_tokens", max_tokens},   {"attention_off", attention_off}};
    }
    static QNetConfig from_json(const nlohmann::json& j) {
        QNetConfig c;
        c.n_features = j.at("n_features").get<int>();
        c.n_groups = j.at("n_groups").get<int>();
        c.fairness_features = j.at("fairness_features").get<bool>();
        c.embed_dim = j.at("embed_dim").get<int>();
        c.num_heads = j.at("num_heads").get<int>();
        c.hidden_dim = j.at("hidden_dim").get<int>();
        c.num_layers = j.at("num_layers").get<int>();
        c.max_tokens = j.at("max_tokens").get<int>();
        c.attention_off = j.at("attention_off").get<bool>();
        return c;
    }
};

// Flat-array offsets for every tensor; pre-LN transformer blocks with a
// final norm and a 2-wide output head.
struct ParamLayout {
    struct Layer {
        std::size_t ln1_g, ln1_b;
        std::size_t wq, bq, wk, bk, wv, bv, wo, bo;
        std::size_t ln2_g, ln2_b;
        std::size_t w1, b1, w2, b2;
    };
    std::size_t w_in, b_in;
    std::vector<Layer> layers;
    std::size_t lnf_g, lnf_b;
    std::size_t w_out, b_out;
    std::size_t total = 0;

    explicit ParamLayout(const QNetConfig& c) {
        std::size_t p = 0;
        auto take = [&p](std::size_t n) {
            std::size_t at = p;
            p += n;
            return at;
        };
        const auto d = static_cast<std::size_t>(c.input_dim());
        const auto e = static_cast<std::size_t>(c.embed_dim);
        const auto f = static_cast<std::size_t>(c.hidden_dim);
        w_in = take(d * e);
        b_in = take(e);
        layers.resize(static_cast<std::size_t>(c.num_layers));
        for (auto& l : layers) {
            l.ln1_g = take(e);
            l.ln1_b = take(e);
            l.wq = take(e * e);
            l.bq = take(e);
            l.wk = take(e * e);
            l.bk = take(e);
            l.wv = take(e * e);
            l.bv = take(e);
            l.wo = take(e * e);
            l.bo = take(e);
            l.ln2_g = take(e);
            l.ln2_b = take(e);
            l.w1 = take(e * f);
            l.b1 = take(f);
            l.w2 = take(f * e);
            l.b2 = take(e);
        }
        lnf_g = take(e);
        lnf_b = take(e);
        w_out = take(e * 2);
        b_out = take(2);
        total = p;
    }
};

inline std::size_t param_count(const QNetConfig& c) { return ParamLayout(c).total; }

// Activation footprint of one forward pass with M tokens; the H*M^2
// attention maps are the quadratic term.
inline std::size_t activation_count(const QNetConfig& c, int m_tokens) {
    const auto m = static_cast<std::size_t>(m_tokens);
    const auto e = static_cast<std::size_t>(c.embed_dim);
    const auto f = static_cast<std::size_t>(c.hidden_dim);
    const auto h = static_cast<std::size_t>(c.num_heads);
    std::size_t per_layer = m * e        // ln1
                            + 3 * m * e  // q,k,v
                            + h * m * m  // attention weights
                            + m * e      // head concat
                            + m * e      // attention out
                            + m * e      // residual 1
                            + m * e      // ln2
                            + 2 * m * f  // ff pre/post activation
                            + m * e      // ff out
                            + m * e;     // residual 2
    return m * static_cast<std::size_t>(c.input_dim()) + m * e +
           static_cast<std::size_t>(c.num_layers) * per_layer + m * e + m * 2;
}

struct QNetParams {
    QNetConfig config;
    std::vector<double> flat;

    static QNetParams init(const QNetConfig& config, std::uint64_t seed) {
        config.validate();
        ParamLayout lay(config);
        QNetParams p;
        p.config = config;
        p.flat.assign(lay.total, 0.0);
        RandomStream rng = RandomStream(seed).fork("qnet-init");
        auto fill = [&](std::size_t off, std::size_t fan_in, std::size_t count) {
            const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < count; ++i) p.flat[off + i] = rng.uniform(-s, s);
        };
        auto ones = [&](std::size_t off, std::size_t count) {
            for (std::size_t i = 0; i < count; ++i) p.flat[off + i] = 1.0;
        };
        const auto d = static_cast<std::size_t>(config.input_dim());
        const auto e = static_cast<std::size_t>(config.embed_dim);
        const auto f = static_cast<std::size_t>(config.hidden_dim);
        fill(lay.w_in, d, d * e);
        for (const auto& l : lay.layers) {
            ones(l.ln1_g, e);
            fill(l.wq, e, e * e);
            fill(l.wk, e, e * e);
            fill(l.wv, e, e * e);
            fill(l.wo, e, e * e);
            ones(l.ln2_g, e);
            fill(l.w1, e, e * f);
            fill(l.w2, f, f * e);
        }
        ones(lay.lnf_g, e);
        fill(lay.w_out, e, e * 2);
        return p;
    }
};

// ---------------------------------------------------------------------------
// State tokens: one row per Normal bed ([x, I] plus, when enabled, the two
// normalized group-frequency distributions). Vacant and terminal beds carry
// no decision and are not presented to the network.
// ---------------------------------------------------------------------------
struct StateMatrix {
    Mat tokens;
    std::vector<int> bed_index;       // token row -> bed
    std::vector<std::uint8_t> locked; // ventilated under the withdrawal rule
};

inline StateMatrix build_state_matrix(const mdp::SimState& state, const CohortDataset& cohort,
                                      const QNetConfig& config, bool withdrawal_on) {
    StateMatrix sm;
    const int d = config.input_dim();
    std::vector<int> beds;
    for (std::size_t i = 0; i < state.beds.size(); ++i)
        if (state.beds[i].is_normal()) beds.push_back(static_cast<int>(i));
    // max_tokens documents the training-time bound (C + 2*Lambda); the
    // attention stack itself handles any token count, so larger evaluation
    // states are accepted rather than rejected.
    const int m = static_cast<int>(beds.size());
    sm.tokens = Mat(m, d);
    sm.bed_index = beds;
    sm.locked.assign(static_cast<std::size_t>(m), 0);

    std::vector<double> fair;
    if (config.fairness_features) {
        fair.resize(static_cast<std::size_t>(2 * config.n_groups), 0.0);
        double n_sum = 0, m_sum = 0;
        for (auto v : state.counters.arrivals) n_sum += static_cast<double>(v);
        for (auto v : state.counters.ventilated) m_sum += static_cast<double>(v);
        for (int g = 0; g < config.n_groups; ++g) {
            fair[static_cast<std::size_t>(g)] =
                n_sum > 0 ? static_cast<double>(state.counters.arrivals[static_cast<std::size_t>(g)]) / n_sum : 0.0;
            fair[static_cast<std::size_t>(config.n_groups + g)] =
                m_sum > 0 ? static_cast<double>(state.counters.ventilated[static_cast<std::size_t>(g)]) / m_sum : 0.0;
        }
    }

    for (int r = 0; r < m; ++r) {
        const auto& bed = state.beds[static_cast<std::size_t>(beds[static_cast<std::size_t>(r)])];
        const auto& occ = *bed.occupant;
        const auto& x = cohort.trajectories[static_cast<std::size_t>(occ.patient)]
                            .conditions[static_cast<std::size_t>(occ.cursor)];
        if (static_cast<int>(x.size()) != config.n_features)
            throw ShapeError("condition vector width " + std::to_string(x.size()) +
                             " != configured n_features " + std::to_string(config.n_features));
        double* row = sm.tokens.row(r);
        std::copy(x.begin(), x.end(), row);
        row[config.n_features] = bed.ventilated ? 1.0 : 0.0;
        if (config.fairness_features)
            std::copy(fair.begin(), fair.end(), row + config.n_features + 1);
        if (withdrawal_on && bed.ventilated) sm.locked[static_cast<std::size_t>(r)] = 1;
    }
    return sm;
}

// ---------------------------------------------------------------------------
// Forward pass (with optional tape for backprop)
// ---------------------------------------------------------------------------
namespace detail {

struct LayerTape {
    Mat ln1_out;
    std::vector<double> ln1_mean, ln1_istd;
    Mat q, k, v;
    std::vector<Mat> attn; // per head, MxM row-softmax
    Mat concat;            // heads side by side
    Mat attn_out;
    Mat res1;
    Mat ln2_out;
    std::vector<double> ln2_mean, ln2_istd;
    Mat ff_pre, ff_act, ff_out;
    Mat res2;
};

struct Tape {
    Mat input;
    Mat embed;
    std::vector<LayerTape> layers;
    Mat lnf_out;
    std::vector<double> lnf_mean, lnf_istd;
    Mat out;
};

inline void layer_norm(const Mat& x, const double* g, const double* b, Mat& out,
                       std::vector<double>& mean, std::vector<double>& istd) {
    const int m = x.rows, e = x.cols;
    mean.resize(static_cast<std::size_t>(m));
    istd.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        double mu = 0;
        for (int j = 0; j < e; ++j) mu += xi[j];
        mu /= e;
        double var = 0;
        for (int j = 0; j < e; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= e;
        const double inv = 1.0 / std::sqrt(var + kLayerNormEps);
        mean[static_cast<std::size_t>(i)] = mu;
        istd[static_cast<std::size_t>(i)] = inv;
        double* oi = out.row(i);
        for (int j = 0; j < e; ++j) oi[j] = g[j] * ((xi[j] - mu) * inv) + b[j];
    }
}

inline void layer_norm_backward(const Mat& x, const double* g, const std::vector<double>& mean,
                                const std::vector<double>& istd, const Mat& dout, Mat& dx,
                                double* dg, double* db) {
    const int m = x.rows, e = x.cols;
    for (int i = 0; i < m; ++i) {
        const double* xi = x.row(i);
        const double* doi = dout.row(i);
        double* dxi = dx.row(i);
        const double mu = mean[static_cast<std::size_t>(i)];
        const double inv = istd[static_cast<std::size_t>(i)];
        double sum_dy = 0, sum_dy_xhat = 0;
        for (int j = 0; j < e; ++j) {
            const double xhat = (xi[j] - mu) * inv;
            const double dy = doi[j] * g[j];
            sum_dy += dy;
            sum_dy_xhat += dy * xhat;
            if (dg) dg[j] += doi[j] * xhat;
            if (db) db[j] += doi[j];
        }
        const double inv_e = 1.0 / e;
        for (int j = 0; j < e; ++j) {
            const double xhat = (xi[j] - mu) * inv;
            const double dy = doi[j] * g[j];
            dxi[j] += inv * (dy - inv_e * sum_dy - xhat * inv_e * sum_dy_xhat);
        }
    }
}

} // namespace detail

inline Mat forward(const QNetParams& params, const Mat& input, detail::Tape* tape = nullptr) {
    const QNetConfig& c = params.config;
    if (input.cols != c.input_dim())
        throw ShapeError("input dim " + std::to_string(input.cols) + " != expected " +
                         std::to_string(c.input_dim()));
    if (input.rows < 1) throw ShapeError("forward requires at least one token");
    for (double v : input.v)
        if (!std::isfinite(v)) throw NumericError("non-finite network input");

    const ParamLayout lay(c);
    const double* P = params.flat.data();
    const int m = input.rows, e = c.embed_dim, f = c.hidden_dim, h = c.num_heads;
    const int dh = e / h;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    detail::Tape local;
    detail::Tape& tp = tape ? *tape : local;
    tp.input = input;
    tp.layers.assign(static_cast<std::size_t>(c.num_layers), {});

    tp.embed = Mat(m, e);
    detail::affine(input, P + lay.w_in, P + lay.b_in, tp.embed);

    Mat x = tp.embed;
    for (int li = 0; li < c.num_layers; ++li) {
        auto& L = lay.layers[static_cast<std::size_t>(li)];
        auto& T = tp.layers[static_cast<std::size_t>(li)];

        T.ln1_out = Mat(m, e);
        detail::layer_norm(x, P + L.ln1_g, P + L.ln1_b, T.ln1_out, T.ln1_mean, T.ln1_istd);

        if (!c.attention_off) {
            T.q = Mat(m, e);
            T.k = Mat(m, e);
            T.v = Mat(m, e);
            detail::affine(T.ln1_out, P + L.wq, P + L.bq, T.q);
            detail::affine(T.ln1_out, P + L.wk, P + L.bk, T.k);
            detail::affine(T.ln1_out, P + L.wv, P + L.bv, T.v);

            T.attn.assign(static_cast<std::size_t>(h), Mat());
            T.concat = Mat(m, e);
            for (int hi = 0; hi < h; ++hi) {
                Mat& A = T.attn[static_cast<std::size_t>(hi)];
                A = Mat(m, m);
                const int off = hi * dh;
                for (int i = 0; i < m; ++i) {
                    const double* qi = T.q.row(i) + off;
                    double* ai = A.row(i);
                    double mx = -1e300;
                    for (int j = 0; j < m; ++j) {
                        const double* kj = T.k.row(j) + off;
                        double s = 0;
                        for (int l = 0; l < dh; ++l) s += qi[l] * kj[l];
                        ai[j] = s * scale;
                        mx = std::max(mx, ai[j]);
                    }
                    double z = 0;
                    for (int j = 0; j < m; ++j) {
                        ai[j] = std::exp(ai[j] - mx);
                        z += ai[j];
                    }
                    for (int j = 0; j < m; ++j) ai[j] /= z;
                    double* ci = T.concat.row(i) + off;
                    for (int l = 0; l < dh; ++l) ci[l] = 0;
                    for (int j = 0; j < m; ++j) {
                        const double w = ai[j];
                        const double* vj = T.v.row(j) + off;
                        for (int l = 0; l < dh; ++l) ci[l] += w * vj[l];
                    }
                }
            }
            T.attn_out = Mat(m, e);
            detail::affine(T.concat, P + L.wo, P + L.bo, T.attn_out);
            for (int i = 0; i < m; ++i) {
                double* xi = x.row(i);
                const double* ao = T.attn_out.row(i);
                for (int j = 0; j < e; ++j) xi[j] += ao[j];
            }
        }
        T.res1 = x; // post-attention residual input to the FF block

        T.ln2_out = Mat(m, e);
        detail::layer_norm(x, P + L.ln2_g, P + L.ln2_b, T.ln2_out, T.ln2_mean, T.ln2_istd);
        T.ff_pre = Mat(m, f);
        detail::affine(T.ln2_out, P + L.w1, P + L.b1, T.ff_pre);
        T.ff_act = T.ff_pre;
        for (double& v : T.ff_act.v) v = v > 0 ? v : 0.0;
        T.ff_out = Mat(m, e);
        detail::affine(T.ff_act, P + L.w2, P + L.b2, T.ff_out);
        for (int i = 0; i < m; ++i) {
            double* xi = x.row(i);
            const double* fo = T.ff_out.row(i);
            for (int j = 0; j < e; ++j) xi[j] += fo[j];
        }
        T.res2 = x;
    }

    tp.lnf_out = Mat(m, e);
    detail::layer_norm(x, P + lay.lnf_g, P + lay.lnf_b, tp.lnf_out, tp.lnf_mean, tp.lnf_istd);
    tp.out = Mat(m, 2);
    detail::affine(tp.lnf_out, P + lay.w_out, P + lay.b_out, tp.out);
    return tp.out;
}

// Backprop of dout (Mx2) through the tape; parameter grads accumulate into
// grad (same layout as params.flat).
inline void backward(const QNetParams& params, const detail::Tape& tp, const Mat& dout,
                     std::vector<double>& grad) {
    const QNetConfig& c = params.config;
    const ParamLayout lay(c);
    const double* P = params.flat.data();
    double* G = grad.data();
    const int m = tp.input.rows, e = c.embed_dim, h = c.num_heads;
    const int dh = e / h;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    Mat d_lnf(m, e);
    detail::affine_backward(tp.lnf_out, P + lay.w_out, dout, &d_lnf, G + lay.w_out, G + lay.b_out);

    // x_final is res2 of the last layer
    Mat dx(m, e);
    {
        const Mat& x_final = tp.layers.back().res2;
        detail::layer_norm_backward(x_final, P + lay.lnf_g, tp.lnf_mean, tp.lnf_istd, d_lnf, dx,
                                    G + lay.lnf_g, G + lay.lnf_b);
    }

    for (int li = c.num_layers - 1; li >= 0; --li) {
        const auto& L = lay.layers[static_cast<std::size_t>(li)];
        const auto& T = tp.layers[static_cast<std::size_t>(li)];

        // FF block: res2 = res1 + W2*relu(W1*ln2(res1)); dx currently holds d(res2)
        Mat d_ff_act(m, c.hidden_dim);
        detail::affine_backward(T.ff_act, P + L.w2, dx, &d_ff_act, G + L.w2, G + L.b2);
        for (std::size_t i = 0; i < d_ff_act.v.size(); ++i)
            if (T.ff_pre.v[i] <= 0) d_ff_act.v[i] = 0;
        Mat d_ln2(m, e);
        detail::affine_backward(T.ln2_out, P + L.w1, d_ff_act, &d_ln2, G + L.w1, G + L.b1);
        detail::layer_norm_backward(T.res1, P + L.ln2_g, T.ln2_mean, T.ln2_istd, d_ln2, dx,
                                    G + L.ln2_g, G + L.ln2_b);
        // residual: d(res1) = dx (already accumulated in place)

        if (!c.attention_off) {
            // attention block: res1 = x_in + Wo*concat(heads)
            Mat d_concat(m, e);
            detail::affine_backward(T.concat, P + L.wo, dx, &d_concat, G + L.wo, G + L.bo);

            Mat dq(m, e), dk(m, e), dv(m, e);
            for (int hi = 0; hi < h; ++hi) {
                const Mat& A = T.attn[static_cast<std::size_t>(hi)];
                const int off = hi * dh;
                // dA and dV
                Mat dA(m, m);
                for (int i = 0; i < m; ++i) {
                    const double* dci = d_concat.row(i) + off;
                    const double* ai = A.row(i);
                    double* dai = dA.row(i);
                    for (int j = 0; j < m; ++j) {
                        const double* vj = T.v.row(j) + off;
                        double s = 0;
                        for (int l = 0; l < dh; ++l) s += dci[l] * vj[l];
                        dai[j] = s;
                        double* dvj = dv.row(j) + off;
                        const double w = ai[j];
                        for (int l = 0; l < dh; ++l) dvj[l] += w * dci[l];
                    }
                }
                // softmax backward row-wise, then scores -> q,k
                for (int i = 0; i < m; ++i) {
                    const double* ai = A.row(i);
                    double* dai = dA.row(i);
                    double dot = 0;
                    for (int j = 0; j < m; ++j) dot += dai[j] * ai[j];
                    const double* qi = T.q.row(i) + off;
                    double* dqi = dq.row(i) + off;
                    for (int j = 0; j < m; ++j) {
                        const double ds = ai[j] * (dai[j] - dot) * scale;
                        const double* kj = T.k.row(j) + off;
                        double* dkj = dk.row(j) + off;
                        for (int l = 0; l < dh; ++l) {
                            dqi[l] += ds * kj[l];
                            dkj[l] += ds * qi[l];
                        }
                    }
                }
            }
            Mat d_ln1(m, e);
            detail::affine_backward(T.ln1_out, P + L.wq, dq, &d_ln1, G + L.wq, G + L.bq);
            detail::affine_backward(T.ln1_out, P + L.wk, dk, &d_ln1, G + L.wk, G + L.bk);
            detail::affine_backward(T.ln1_out, P + L.wv, dv, &d_ln1, G + L.wv, G + L.bv);
            const Mat& x_in =
                li == 0 ? tp.embed : tp.layers[static_cast<std::size_t>(li - 1)].res2;
            detail::layer_norm_backward(x_in, P + L.ln1_g, T.ln1_mean, T.ln1_istd, d_ln1, dx,
                                        G + L.ln1_g, G + L.ln1_b);
        } else {
            // ln1 unused when attention is off; nothing to add
        }
    }

    detail::affine_backward(tp.input, P + lay.w_in, dx, nullptr, G + lay.w_in, G + lay.b_in);
}

// ---------------------------------------------------------------------------
// Joint additive Q and constrained greedy selection
// ---------------------------------------------------------------------------
inline double joint_q(const QNetParams& params, const Mat& tokens,
                      const std::vector<std::uint8_t>& action_bits) {
    if (static_cast<int>(action_bits.size()) != tokens.rows)
        throw ShapeError("joint_q: action length != token count");
    Mat out = forward(params, tokens);
    double q = 0;
    for (int i = 0; i < out.rows; ++i) q += out.at(i, action_bits[static_cast<std::size_t>(i)] ? 1 : 0);
    return q;
}

inline double joint_q_from_output(const Mat& out, const std::vector<std::uint8_t>& action_bits) {
    if (static_cast<int>(action_bits.size()) != out.rows)
        throw ShapeError("joint_q: action length != output rows");
    double q = 0;
    for (int i = 0; i < out.rows; ++i) q += out.at(i, action_bits[static_cast<std::size_t>(i)] ? 1 : 0);
    return q;
}

// Token-level greedy selection given per-token ventilation improvements.
// Exact argmax leaves slots empty when every remaining d_i is <= 0;
// force_fill reproduces the literal top-k fill instead.
inline std::vector<std::uint8_t> greedy_bits(const std::vector<double>& d,
                                             const std::vector<std::uint8_t>& locked, int capacity,
                                             bool force_fill) {
    const int m = static_cast<int>(d.size());
    std::vector<std::uint8_t> bits(static_cast<std::size_t>(m), 0);
    int locked_count = 0;
    for (int i = 0; i < m; ++i)
        if (locked[static_cast<std::size_t>(i)]) {
            bits[static_cast<std::size_t>(i)] = 1;
            ++locked_count;
        }
    if (locked_count > capacity)
        throw ContractError("greedy selection: capacity below committed ventilators");
    int slots = capacity - locked_count;
    std::vector<int> order;
    for (int i = 0; i < m; ++i)
        if (!locked[static_cast<std::size_t>(i)]) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (d[static_cast<std::size_t>(a)] != d[static_cast<std::size_t>(b)])
            return d[static_cast<std::size_t>(a)] > d[static_cast<std::size_t>(b)];
        return a < b; // ties by token (bed) index
    });
    for (int i : order) {
        if (slots <= 0) break;
        if (!force_fill && !(d[static_cast<std::size_t>(i)] > 0)) break;
        bits[static_cast<std::size_t>(i)] = 1;
        --slots;
    }
    return bits;
}

inline mdp::Action greedy_action(const QNetParams& params, const mdp::SimState& state,
                                 const CohortDataset& cohort, int capacity, bool withdrawal_on,
                                 bool force_fill = false) {
    mdp::Action action;
    action.assign.assign(state.bed_count(), 0);
    StateMatrix sm = build_state_matrix(state, cohort, params.config, withdrawal_on);
    if (sm.tokens.rows == 0) return action;
    Mat out = forward(params, sm.tokens);
    std::vector<double> d(static_cast<std::size_t>(out.rows));
    for (int i = 0; i < out.rows; ++i) d[static_cast<std::size_t>(i)] = out.at(i, 1) - out.at(i, 0);
    auto bits = greedy_bits(d, sm.locked, capacity, force_fill);
    for (std::size_t i = 0; i < bits.size(); ++i)
        action.assign[static_cast<std::size_t>(sm.bed_index[i])] = bits[i];
    return action;
}

// ---------------------------------------------------------------------------
// Huber loss (SmoothL1, delta = 1 by default)
// ---------------------------------------------------------------------------
inline double huber(double err, double delta = 1.0) {
    const double a = std::abs(err);
    return a <= delta ? 0.5 * err * err : delta * (a - 0.5 * delta);
}

inline double huber_grad(double err, double delta = 1.0) {
    return std::clamp(err, -delta, delta);
}

// Loss and parameter gradient of huber(joint_q(s,a) - target) for one sample.
inline double loss_and_grad(const QNetParams& params, const Mat& tokens,
                            const std::vector<std::uint8_t>& action_bits, double target,
                            std::vector<double>& grad, double grad_weight = 1.0,
                            double delta = 1.0) {
    detail::Tape tape;
    Mat out = forward(params, tokens, &tape);
    const double pred = joint_q_from_output(out, action_bits);
    const double err = pred - target;
    Mat dout(out.rows, 2);
    const double g = huber_grad(err, delta) * grad_weight;
    for (int i = 0; i < out.rows; ++i) dout.at(i, action_bits[static_cast<std::size_t>(i)] ? 1 : 0) = g;
    backward(params, tape, dout, grad);
    return huber(err, delta);
}

// Max relative error between analytic and central finite-difference
// gradients (step 1e-4); denominator floored so true-zero gradients do not
// dominate the ratio.
inline double grad_check(const QNetParams& params, const Mat& tokens,
                         const std::vector<std::uint8_t>& action_bits, double target) {
    std::vector<double> grad(params.flat.size(), 0.0);
    QNetParams work = params;
    loss_and_grad(work, tokens, action_bits, target, grad);
    const double step = 1e-4;
    double worst = 0;
    for (std::size_t i = 0; i < work.flat.size(); ++i) {
        const double keep = work.flat[i];
        work.flat[i] = keep + step;
        const double up = huber(joint_q(work, tokens, action_bits) - target);
        work.flat[i] = keep - step;
        const double dn = huber(joint_q(work, tokens, action_bits) - target);
        work.flat[i] = keep;
        const double fd = (up - dn) / (2 * step);
        const double denom = std::max({std::abs(grad[i]), std::abs(fd), 1e-4});
        worst = std::max(worst, std::abs(grad[i] - fd) / denom);
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Classical enumerated-action Q head (small N comparison)
// ---------------------------------------------------------------------------
struct ClassicalConfig {
    int n_beds = 6;
    int capacity = 4;
    int n_features = 38;
    int n_groups = 4;
    bool fairness_features = false;
    int hidden_dim = 128;

    static constexpr int kMaxBeds = 18; // enumerated head is out of memory beyond this

    int input_dim() const {
        return n_beds * (n_features + 1) + (fairness_features ? 2 * n_groups : 0);
    }

    void validate() const {
        if (n_beds < 1) throw ConfigError("n_beds must be >= 1");
        if (n_beds > kMaxBeds)
            throw CapabilityError("classical Q head supports at most " +
                                  std::to_string(kMaxBeds) + " beds (requested " +
                                  std::to_string(n_beds) + ")");
        if (capacity < 0 || capacity > n_beds) throw ConfigError("capacity must lie in [0, n_beds]");
        if (hidden_dim <= 0 || n_features <= 0) throw ConfigError("dims must be positive");
    }

    nlohmann::json to_json() const {
        return {{"n_beds", n_beds},         {"capacity", capacity},
                {"n_features", n_features}, {"n_groups", n_groups},
                {"fairness_features", fairness_features}, {"hidden_dim", hidden_dim}};
    }
    static ClassicalConfig from_json(const nlohmann::json& j) {
        ClassicalConfig c;
        c.n_beds = j.at("n_beds").get<int>();
        c.capacity = j.at("capacity").get<int>();
        c.n_features = j.at("n_features").get<int>();
        c.n_groups = j.at("n_groups").get<int>();
        c.fairness_features = j.at("fairness_features").get<bool>();
        c.hidden_dim = j.at("hidden_dim").get<int>();
        return c;
    }
};

// All capacity-feasible bitmasks for (N, C), ascending numeric order; the
// action index <-> bitmask correspondence is fixed by this table.
inline std::vector<std::uint32_t> enumerate_actions(int n_beds, int capacity) {
    if (n_beds > ClassicalConfig::kMaxBeds)
        throw CapabilityError("action enumeration beyond " +
                              std::to_string(ClassicalConfig::kMaxBeds) + " beds");
    std::vector<std::uint32_t> table;
    const std::uint32_t limit = 1u << n_beds;
    for (std::uint32_t mask = 0; mask < limit; ++mask)
        if (std::popcount(mask) <= capacity) table.push_back(mask);
    return table;
}

// Two hidden ReLU layers, |A| linear outputs.
struct ClassicalParams {
    ClassicalConfig config;
    std::vector<std::uint32_t> actions;
    std::vector<double> flat;

    struct Layout {
        std::size_t w1, b1, w2, b2, w3, b3, total;
        Layout(int in, int hidden, int out) {
            std::size_t p = 0;
            auto take = [&p](std::size_t n) {
                std::size_t at = p;
                p += n;
                return at;
            };
            w1 = take(static_cast<std::size_t>(in) * hidden);
            b1 = take(static_cast<std::size_t>(hidden));
            w2 = take(static_cast<std::size_t>(hidden) * hidden);
            b2 = take(static_cast<std::size_t>(hidden));
            w3 = take(static_cast<std::size_t>(hidden) * out);
            b3 = take(static_cast<std::size_t>(out));
            total = p;
        }
    };

    Layout layout() const {
        return Layout(config.input_dim(), config.hidden_dim, static_cast<int>(actions.size()));
    }

    static ClassicalParams init(const ClassicalConfig& config, std::uint64_t seed) {
        config.validate();
        ClassicalParams p;
        p.config = config;
        p.actions = enumerate_actions(config.n_beds, config.capacity);
        Layout lay(config.input_dim(), config.hidden_dim, static_cast<int>(p.actions.size()));
        p.flat.assign(lay.total, 0.0);
        RandomStream rng = RandomStream(seed).fork("classical-init");
        auto fill = [&](std::size_t off, std::size_t fan_in, std::size_t count) {
            const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (std::size_t i = 0; i < count; ++i) p.flat[off + i] = rng.uniform(-s, s);
        };
        fill(lay.w1, static_cast<std::size_t>(config.input_dim()),
             static_cast<std::size_t>(config.input_dim()) * config.hidden_dim);
        fill(lay.w2, static_cast<std::size_t>(config.hidden_dim),
             static_cast<std::size_t>(config.hidden_dim) * config.hidden_dim);
        fill(lay.w3, static_cast<std::size_t>(config.hidden_dim),
             static_cast<std::size_t>(config.hidden_dim) * p.actions.size());
        return p;
    }
};

inline std::size_t classical_param_count(const ClassicalConfig& c) {
    const std::size_t in = static_cast<std::size_t>(c.input_dim());
    const std::size_t h = static_cast<std::size_t>(c.hidden_dim);
    const std::size_t out = enumerate_actions(c.n_beds, c.capacity).size();
    return in * h + h + h * h + h + h * out + out;
}

// Flat state vector [x_1..x_N, I_1..I_N, counters...] with the
// special-condition encodings: Survived = 1, Dead = -1, Vacant = 0 across a
// bed's condition block.
inline std::vector<double> build_flat_state(const mdp::SimState& state,
                                            const CohortDataset& cohort,
                                            const ClassicalConfig& config) {
    if (static_cast<int>(state.bed_count()) != config.n_beds)
        throw ShapeError("flat state: bed count " + std::to_string(state.bed_count()) +
                         " != configured " + std::to_string(config.n_beds));
    std::vector<double> out(static_cast<std::size_t>(config.input_dim()), 0.0);
    const int k = config.n_features;
    double* indicators = out.data() + static_cast<std::size_t>(config.n_beds) * k;
    for (int i = 0; i < config.n_beds; ++i) {
        const auto& bed = state.beds[static_cast<std::size_t>(i)];
        double* block = out.data() + static_cast<std::size_t>(i) * k;
        switch (bed.condition) {
            case mdp::BedCondition::Normal: {
                const auto& occ = *bed.occupant;
                const auto& x = cohort.trajectories[static_cast<std::size_t>(occ.patient)]
                                    .conditions[static_cast<std::size_t>(occ.cursor)];
                std::copy(x.begin(), x.end(), block);
                break;
            }
            case mdp::BedCondition::Survived:
                std::fill(block, block + k, 1.0);
                break;
            case mdp::BedCondition::Dead:
                std::fill(block, block + k, -1.0);
                break;
            case mdp::BedCondition::Vacant:
                break;
        }
        indicators[i] = bed.ventilated ? 1.0 : 0.0;
    }
    if (config.fairness_features) {
        double n_sum = 0, m_sum = 0;
        for (auto v : state.counters.arrivals) n_sum += static_cast<double>(v);
        for (auto v : state.counters.ventilated) m_sum += static_cast<double>(v);
        double* tail = indicators + config.n_beds;
        for (int g = 0; g < config.n_groups; ++g) {
            tail[g] = n_sum > 0 ? static_cast<double>(state.counters.arrivals[static_cast<std::size_t>(g)]) / n_sum : 0.0;
            tail[config.n_groups + g] =
                m_sum > 0 ? static_cast<double>(state.counters.ventilated[static_cast<std::size_t>(g)]) / m_sum : 0.0;
        }
    }
    return out;
}

struct ClassicalTape {
    std::vector<double> input, h1_pre, h1, h2_pre, h2, out;
};

inline std::vector<double> classical_forward(const ClassicalParams& params,
                                             const std::vector<double>& flat_state,
                                             ClassicalTape* tape = nullptr) {
    const auto& c = params.config;
    if (static_cast<int>(flat_state.size()) != c.input_dim())
        throw ShapeError("classical input dim mismatch");
    const auto lay = params.layout();
    const double* P = params.flat.data();
    const int in = c.input_dim(), h = c.hidden_dim, out_n = static_cast<int>(params.actions.size());

    ClassicalTape local;
    ClassicalTape& tp = tape ? *tape : local;
    tp.input = flat_state;
    auto dense = [&](const std::vector<double>& x, std::size_t w, std::size_t b, int n_in,
                     int n_out, std::vector<double>& y) {
        y.assign(static_cast<std::size_t>(n_out), 0.0);
        for (int o = 0; o < n_out; ++o) y[static_cast<std::size_t>(o)] = P[b + static_cast<std::size_t>(o)];
        for (int i = 0; i < n_in; ++i) {
            const double xv = x[static_cast<std::size_t>(i)];
            const double* wr = P + w + static_cast<std::size_t>(i) * n_out;
            for (int o = 0; o < n_out; ++o) y[static_cast<std::size_t>(o)] += xv * wr[o];
        }
    };
    dense(tp.input, lay.w1, lay.b1, in, h, tp.h1_pre);
    tp.h1 = tp.h1_pre;
    for (double& v : tp.h1) v = v > 0 ? v : 0;
    dense(tp.h1, lay.w2, lay.b2, h, h, tp.h2_pre);
    tp.h2 = tp.h2_pre;
    for (double& v : tp.h2) v = v > 0 ? v : 0;
    dense(tp.h2, lay.w3, lay.b3, h, out_n, tp.out);
    return tp.out;
}

inline void classical_backward(const ClassicalParams& params, const ClassicalTape& tp,
                               const std::vector<double>& dout, std::vector<double>& grad) {
    const auto& c = params.config;
    const auto lay = params.layout();
    const double* P = params.flat.data();
    double* G = grad.data();
    const int in = c.input_dim(), h = c.hidden_dim, out_n = static_cast<int>(params.actions.size());

    auto dense_bw = [&](const std::vector<double>& x, std::size_t w, std::size_t b,
                        const std::vector<double>& dy, int n_in, int n_out,
                        std::vector<double>* dx) {
        for (int o = 0; o < n_out; ++o) G[b + static_cast<std::size_t>(o)] += dy[static_cast<std::size_t>(o)];
        for (int i = 0; i < n_in; ++i) {
            double* gw = G + w + static_cast<std::size_t>(i) * n_out;
            const double xv = x[static_cast<std::size_t>(i)];
            for (int o = 0; o < n_out; ++o) gw[o] += xv * dy[static_cast<std::size_t>(o)];
        }
        if (dx) {
            dx->assign(static_cast<std::size_t>(n_in), 0.0);
            for (int i = 0; i < n_in; ++i) {
                const double* wr = P + w + static_cast<std::size_t>(i) * n_out;
                double acc = 0;
                for (int o = 0; o < n_out; ++o) acc += wr[o] * dy[static_cast<std::size_t>(o)];
                (*dx)[static_cast<std::size_t>(i)] = acc;
            }
        }
    };
    std::vector<double> dh2;
    dense_bw(tp.h2, lay.w3, lay.b3, dout, h, out_n, &dh2);
    for (int i = 0; i < h; ++i)
        if (tp.h2_pre[static_cast<std::size_t>(i)] <= 0) dh2[static_cast<std::size_t>(i)] = 0;
    std::vector<double> dh1;
    dense_bw(tp.h1, lay.w2, lay.b2, dh2, h, h, &dh1);
    for (int i = 0; i < h; ++i)
        if (tp.h1_pre[static_cast<std::size_t>(i)] <= 0) dh1[static_cast<std::size_t>(i)] = 0;
    dense_bw(tp.input, lay.w1, lay.b1, dh1, in, h, nullptr);
}

// Best feasible action index for the classical head: capacity is built into
// the table; the withdrawal lock and Normal-bed restriction are applied as a
// mask over the enumeration.
// Best feasible action index. With force_fill the search is restricted to
// actions that use every available ventilator (the literal fill rule);
// without it any feasible allocation count competes.
inline std::size_t classical_argmax(const ClassicalParams& params,
                                    const std::vector<double>& q_values,
                                    std::uint32_t normal_mask, std::uint32_t locked_mask,
                                    int capacity = -1, bool force_fill = false) {
    if (q_values.size() != params.actions.size())
        throw ShapeError("classical argmax: output width mismatch");
    if (capacity < 0) capacity = params.config.capacity;
    const int required =
        force_fill ? std::min(capacity, std::popcount(normal_mask)) : -1;
    std::size_t best = params.actions.size();
    double best_q = -1e300;
    for (std::size_t idx = 0; idx < params.actions.size(); ++idx) {
        const std::uint32_t a = params.actions[idx];
        if (std::popcount(a) > capacity) continue;
        if ((a & ~normal_mask) != 0) continue;
        if ((a & locked_mask) != locked_mask) continue;
        if (required >= 0 && std::popcount(a) != required) continue;
        if (q_values[idx] > best_q) {
            best_q = q_values[idx];
            best = idx;
        }
    }
    if (best == params.actions.size()) {
        if (required >= 0)
            return classical_argmax(params, q_values, normal_mask, locked_mask, capacity, false);
        throw ContractError("classical argmax: no feasible action (locked beyond capacity)");
    }
    return best;
}

inline std::uint32_t normal_mask_of(const mdp::SimState& state) {
    std::uint32_t m = 0;
    for (std::size_t i = 0; i < state.bed_count(); ++i)
        if (state.beds[i].is_normal()) m |= 1u << i;
    return m;
}

inline std::uint32_t locked_mask_of(const mdp::SimState& state, bool withdrawal_on) {
    if (!withdrawal_on) return 0;
    std::uint32_t m = 0;
    for (std::size_t i = 0; i < state.bed_count(); ++i)
        if (state.beds[i].is_normal() && state.beds[i].ventilated) m |= 1u << i;
    return m;
}

// ---------------------------------------------------------------------------
// Model container: magic + version + JSON header + raw little-endian doubles.
// Bit-exact round trips.
// ---------------------------------------------------------------------------
struct ModelMeta {
    std::uint64_t seed = 0;
    double lambda = 0;
    double mu = 0;
    int capacity = 0;
    std::string mode = "off_policy";
    // greedy semantics the model was trained under; deployment replays them
    bool force_fill = false;

    nlohmann::json to_json() const {
        return {{"seed", seed},         {"lambda", lambda}, {"mu", mu},
                {"capacity", capacity}, {"mode", mode},     {"force_fill", force_fill}};
    }
    static ModelMeta from_json(const nlohmann::json& j) {
        ModelMeta m;
        m.seed = j.at("seed").get<std::uint64_t>();
        m.lambda = j.at("lambda").get<double>();
        m.mu = j.at("mu").get<double>();
        m.capacity = j.at("capacity").get<int>();
        m.mode = j.at("mode").get<std::string>();
        m.force_fill = j.value("force_fill", false);
        return m;
    }
};

struct ModelFile {
    std::string type; // "transformer" | "classical"
    std::optional<QNetParams> transformer;
    std::optional<ClassicalParams> classical;
    ModelMeta meta;
};

namespace detail {
constexpr char kModelMagic[4] = {'T', 'X', 'Q', 'M'};
constexpr std::uint32_t kModelVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
void read_pod(std::istream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}
} // namespace detail

inline void save_model(const ModelFile& model, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ParseError("cannot open model file for writing: " + path);
    nlohmann::json header;
    header["type"] = model.type;
    header["meta"] = model.meta.to_json();
    const std::vector<double>* flat = nullptr;
    if (model.type == "transformer") {
        header["config"] = model.transformer->config.to_json();
        flat = &model.transformer->flat;
    } else if (model.type == "classical") {
        header["config"] = model.classical->config.to_json();
        flat = &model.classical->flat;
    } else {
        throw ConfigError("unknown model type '" + model.type + "'");
    }
    const std::string hs = header.dump();
    out.write(detail::kModelMagic, 4);
    detail::write_pod(out, detail::kModelVersion);
    detail::write_pod(out, static_cast<std::uint64_t>(hs.size()));
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    detail::write_pod(out, static_cast<std::uint64_t>(flat->size()));
    out.write(reinterpret_cast<const char*>(flat->data()),
              static_cast<std::streamsize>(flat->size() * sizeof(double)));
    if (!out) throw ParseError("short write to model file: " + path);
}

inline ModelFile load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open model file: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::kModelMagic, 4) != 0)
        throw ParseError(path + ": not a model file");
    std::uint32_t version = 0;
    detail::read_pod(in, version);
    if (version != detail::kModelVersion)
        throw ParseError(path + ": unsupported model version " + std::to_string(version));
    std::uint64_t hlen = 0;
    detail::read_pod(in, hlen);
    std::string hs(hlen, '\0');
    in.read(hs.data(), static_cast<std::streamsize>(hlen));
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": bad model header: " + e.what());
    }
    ModelFile model;
    model.type = header.at("type").get<std::string>();
    model.meta = ModelMeta::from_json(header.at("meta"));
    std::uint64_t count = 0;
    std::vector<double> flat;
    auto read_flat = [&]() {
        detail::read_pod(in, count);
        flat.resize(count);
        in.read(reinterpret_cast<char*>(flat.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw ParseError(path + ": truncated parameter block");
    };
    if (model.type == "transformer") {
        QNetParams p;
        p.config = QNetConfig::from_json(header.at("config"));
        read_flat();
        if (flat.size() != param_count(p.config))
            throw ParseError(path + ": parameter count does not match config");
        p.flat = std::move(flat);
        model.transformer = std::move(p);
    } else if (model.type == "classical") {
        ClassicalParams p;
        p.config = ClassicalConfig::from_json(header.at("config"));
        p.actions = enumerate_actions(p.config.n_beds, p.config.capacity);
        read_flat();
        if (flat.size() != classical_param_count(p.config))
            throw ParseError(path + ": parameter count does not match config");
        p.flat = std::move(flat);
        model.classical = std::move(p);
    } else {
        throw ParseError(path + ": unknown model type '" + model.type + "'");
    }
    return model;
}

// ---------------------------------------------------------------------------
// Learned allocation policy: the trained Q head behind the shared protocol
// interface.
// ---------------------------------------------------------------------------
class LearnedPolicy final : public protocols::AllocationPolicy {
public:
    LearnedPolicy(ModelFile model, std::string name = "learned")
        : model_(std::move(model)), name_(std::move(name)) {}

    static std::unique_ptr<LearnedPolicy> from_file(const std::string& path) {
        return std::make_unique<LearnedPolicy>(load_model(path));
    }

    std::string name() const override { return name_; }

    const ModelFile& model() const { return model_; }

    mdp::Action decide(const mdp::SimState& state, const CohortDataset& cohort, int capacity,
                       bool withdrawal_on, RandomStream&) const override {
        if (model_.type == "transformer")
            return greedy_action(*model_.transformer, state, cohort, capacity, withdrawal_on,
                                 model_.meta.force_fill);
        const auto& params = *model_.classical;
        mdp::Action action;
        action.assign.assign(state.bed_count(), 0);
        if (state.normal_count() == 0) return action;
        auto flat = build_flat_state(state, cohort, params.config);
        auto q = classical_forward(params, flat);
        const std::uint32_t chosen = params.actions[classical_argmax(
            params, q, normal_mask_of(state), locked_mask_of(state, withdrawal_on),
            std::min(capacity, params.config.capacity), model_.meta.force_fill)];
        for (std::size_t i = 0; i < state.bed_count(); ++i)
            action.assign[i] = (chosen >> i) & 1u;
        return action;
    }

private:
    ModelFile model_;
    std::string name_;
};

// Full protocol factory: the five baselines plus "learned:<model-path>".
inline std::unique_ptr<protocols::AllocationPolicy> make_protocol(
    const std::string& spec, const protocols::DtThresholds& dt = {}) {
    if (spec.rfind("learned:", 0) == 0) {
        auto path = spec.substr(8);
        if (path.empty()) throw ConfigError("learned protocol requires a model path");
        return LearnedPolicy::from_file(path);
    }
    return protocols::make_baseline(spec, dt);
}

} // namespace triage::qnet
