#pragma once

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "treeattn/parameter.hpp"
#include "treeattn/tape.hpp"

namespace treeattn {

// Recurrent/recursive composition cells. Sequential steps are the n=1 cases
// of the child-sum tree composers, so chain reduction holds exactly by
// construction. All weight matrices are (hidden x input) / (hidden x hidden),
// initialized uniform(-1/sqrt(hidden), +1/sqrt(hidden)); biases start at zero.

struct RnnWeights {
    Parameter W, U, b;

    RnnWeights() = default;
    RnnWeights(const std::string& prefix, int hidden, int input, UniformRng& rng) {
        const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
        W = Parameter(prefix + ".W", uniform_matrix(hidden, input, s, rng));
        U = Parameter(prefix + ".U", uniform_matrix(hidden, hidden, s, rng));
        b = Parameter(prefix + ".b", Tensor({hidden}));
    }

    void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&W, &U, &b}); }
};

// One forget-gate weight set shared across all children.
struct LstmWeights {
    Parameter Wi, Ui, bi;
    Parameter Wf, Uf, bf;
    Parameter Wo, Uo, bo;
    Parameter Wu, Uu, bu;

    LstmWeights() = default;
    LstmWeights(const std::string& prefix, int hidden, int input, UniformRng& rng) {
        const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
        auto mat = [&](const char* g, int c) { return Parameter(prefix + "." + g, uniform_matrix(hidden, c, s, rng)); };
        auto bias = [&](const char* g) { return Parameter(prefix + "." + g, Tensor({hidden})); };
        Wi = mat("Wi", input), Ui = mat("Ui", hidden), bi = bias("bi");
        Wf = mat("Wf", input), Uf = mat("Uf", hidden), bf = bias("bf");
        Wo = mat("Wo", input), Uo = mat("Uo", hidden), bo = bias("bo");
        Wu = mat("Wu", input), Uu = mat("Uu", hidden), bu = bias("bu");
    }

    void collect(std::vector<Parameter*>& out) {
        out.insert(out.end(), {&Wi, &Ui, &bi, &Wf, &Uf, &bf, &Wo, &Uo, &bo, &Wu, &Uu, &bu});
    }
};

// Candidate carries no bias; reset-gate weights shared across children.
struct GruWeights {
    Parameter Wr, Ur, br;
    Parameter Wz, Uz, bz;
    Parameter Wh, Uh;

    GruWeights() = default;
    GruWeights(const std::string& prefix, int hidden, int input, UniformRng& rng) {
        const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
        auto mat = [&](const char* g, int c) { return Parameter(prefix + "." + g, uniform_matrix(hidden, c, s, rng)); };
        auto bias = [&](const char* g) { return Parameter(prefix + "." + g, Tensor({hidden})); };
        Wr = mat("Wr", input), Ur = mat("Ur", hidden), br = bias("br");
        Wz = mat("Wz", input), Uz = mat("Uz", hidden), bz = bias("bz");
        Wh = mat("Wh", input), Uh = mat("Uh", hidden);
    }

    void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&Wr, &Ur, &br, &Wz, &Uz, &bz, &Wh, &Uh}); }
};

struct AttentionWeights {
    Parameter Wm, Um, w;   // scoring: m_k = tanh(Wm h_k + Um s), score = w . m_k
    Parameter Wa, ba;      // replacement transform tanh(Wa g + ba)

    AttentionWeights() = default;
    AttentionWeights(const std::string& prefix, int hidden, UniformRng& rng) {
        const double s = 1.0 / std::sqrt(static_cast<double>(hidden));
        Wm = Parameter(prefix + ".Wm", uniform_matrix(hidden, hidden, s, rng));
        Um = Parameter(prefix + ".Um", uniform_matrix(hidden, hidden, s, rng));
        w = Parameter(prefix + ".w", uniform_vector(hidden, s, rng));
        Wa = Parameter(prefix + ".Wa", uniform_matrix(hidden, hidden, s, rng));
        ba = Parameter(prefix + ".ba", Tensor({hidden}));
    }

    void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&Wm, &Um, &w, &Wa, &ba}); }
};

// Per-tape bindings of the weight bundles: one param node per weight per
// example graph, reused across all composition sites.
struct RnnNodes {
    Value W, U, b;
    static RnnNodes bind(Tape& t, RnnWeights& w) { return {t.param(w.W), t.param(w.U), t.param(w.b)}; }
};

struct LstmNodes {
    Value Wi, Ui, bi, Wf, Uf, bf, Wo, Uo, bo, Wu, Uu, bu;
    static LstmNodes bind(Tape& t, LstmWeights& w) {
        return {t.param(w.Wi), t.param(w.Ui), t.param(w.bi), t.param(w.Wf), t.param(w.Uf), t.param(w.bf),
                t.param(w.Wo), t.param(w.Uo), t.param(w.bo), t.param(w.Wu), t.param(w.Uu), t.param(w.bu)};
    }
};

struct GruNodes {
    Value Wr, Ur, br, Wz, Uz, bz, Wh, Uh;
    static GruNodes bind(Tape& t, GruWeights& w) {
        return {t.param(w.Wr), t.param(w.Ur), t.param(w.br), t.param(w.Wz),
                t.param(w.Uz), t.param(w.bz), t.param(w.Wh), t.param(w.Uh)};
    }
};

struct AttentionNodes {
    Value Wm, Um, w, Wa, ba;
    static AttentionNodes bind(Tape& t, AttentionWeights& a) {
        return {t.param(a.Wm), t.param(a.Um), t.param(a.w), t.param(a.Wa), t.param(a.ba)};
    }
};

namespace detail {

// pre-activation Wx + U h + b, skipping the U term when h is absent
inline Value gate_pre(Tape& t, Value wx, Value u, Value h, Value b, bool has_h) {
    return has_h ? t.add(t.add(wx, t.matvec(u, h)), b) : t.add(wx, b);
}

}  // namespace detail

// h = tanh(Wx + U h_prev + b)
inline Value rnn_step(Tape& t, const RnnNodes& w, Value x, Value h_prev) {
    return t.tanh(t.add(t.add(t.matvec(w.W, x), t.matvec(w.U, h_prev)), w.b));
}

// Child-sum tree LSTM:
//   htilde = sum_k h_k
//   i = sigma(Wi x + Ui htilde + bi), o and u analogous (u through tanh)
//   f_k = sigma(Wf x + Uf h_k + bf) per child, shared weights
//   c = i . u + sum_k f_k . c_k,  h = o . tanh(c)
inline std::pair<Value, Value> tree_lstm_compose(Tape& t, const LstmNodes& w, Value x,
                                                 std::span<const std::pair<Value, Value>> children) {
    const bool internal = !children.empty();
    Value htilde;
    if (internal) {
        std::vector<Value> hs;
        hs.reserve(children.size());
        for (const auto& [h, c] : children) hs.push_back(h);
        htilde = hs.size() == 1 ? hs[0] : t.add_n(hs);
    }
    Value i = t.sigmoid(detail::gate_pre(t, t.matvec(w.Wi, x), w.Ui, htilde, w.bi, internal));
    Value o = t.sigmoid(detail::gate_pre(t, t.matvec(w.Wo, x), w.Uo, htilde, w.bo, internal));
    Value u = t.tanh(detail::gate_pre(t, t.matvec(w.Wu, x), w.Uu, htilde, w.bu, internal));
    Value c = t.mul(i, u);
    if (internal) {
        Value wfx = t.matvec(w.Wf, x);
        std::vector<Value> kept;
        kept.reserve(children.size() + 1);
        kept.push_back(c);
        for (const auto& [h, ck] : children) {
            Value f = t.sigmoid(t.add(t.add(wfx, t.matvec(w.Uf, h)), w.bf));
            kept.push_back(t.mul(f, ck));
        }
        c = t.add_n(kept);
    }
    return {t.mul(o, t.tanh(c)), c};
}

inline std::pair<Value, Value> lstm_step(Tape& t, const LstmNodes& w, Value x, Value h_prev, Value c_prev) {
    const std::pair<Value, Value> child[] = {{h_prev, c_prev}};
    return tree_lstm_compose(t, w, x, child);
}

// Child-sum tree GRU:
//   htilde = sum_k h_k
//   r_k = sigma(Wr x + Ur h_k + br) per child
//   hhat = tanh(Wh x + Uh sum_k r_k . h_k)   (no bias)
//   z = sigma(Wz x + Uz htilde + bz)
//   h = z . htilde + (1 - z) . hhat
inline Value tree_gru_compose(Tape& t, const GruNodes& w, Value x, std::span<const Value> children) {
    const bool internal = !children.empty();
    Value htilde;
    Value reset_sum;
    if (internal) {
        std::vector<Value> hs(children.begin(), children.end());
        htilde = hs.size() == 1 ? hs[0] : t.add_n(hs);
        Value wrx = t.matvec(w.Wr, x);
        std::vector<Value> gated;
        gated.reserve(children.size());
        for (Value h : children) {
            Value r = t.sigmoid(t.add(t.add(wrx, t.matvec(w.Ur, h)), w.br));
            gated.push_back(t.mul(r, h));
        }
        reset_sum = gated.size() == 1 ? gated[0] : t.add_n(gated);
    }
    Value whx = t.matvec(w.Wh, x);
    Value hhat = t.tanh(internal ? t.add(whx, t.matvec(w.Uh, reset_sum)) : whx);
    Value z = t.sigmoid(detail::gate_pre(t, t.matvec(w.Wz, x), w.Uz, htilde, w.bz, internal));
    Value ones = t.leaf([&] {
        Tensor v = Tensor::zeros_like(t.value(z));
        v.fill(1.0);
        return v;
    }());
    Value zbar_h = t.mul(t.sub(ones, z), hhat);
    return internal ? t.add(t.mul(z, htilde), zbar_h) : zbar_h;
}

inline Value gru_step(Tape& t, const GruNodes& w, Value x, Value h_prev) {
    const Value child[] = {h_prev};
    return tree_gru_compose(t, w, x, child);
}

struct AttentionResult {
    Value alphas;  // n probabilities
    Value g;       // weighted child representation
};

// Soft attention with the per-sentence part Um*s precomputed by the caller.
inline AttentionResult soft_attention_cached(Tape& t, const AttentionNodes& w,
                                             std::span<const Value> children_h, Value um_s) {
    if (children_h.empty()) throw std::invalid_argument("soft_attention: empty child set");
    std::vector<Value> scores;
    scores.reserve(children_h.size());
    for (Value h : children_h) {
        Value m = t.tanh(t.add(t.matvec(w.Wm, h), um_s));
        scores.push_back(t.dot(w.w, m));
    }
    Value alphas = t.softmax(t.stack(scores));
    std::vector<Value> weighted;
    weighted.reserve(children_h.size());
    for (size_t k = 0; k < children_h.size(); ++k)
        weighted.push_back(t.scalar_mul(t.select(alphas, static_cast<int>(k)), children_h[k]));
    Value g = weighted.size() == 1 ? weighted[0] : t.add_n(weighted);
    return {alphas, g};
}

// m_k = tanh(Wm h_k + Um s); alpha = softmax_k(w . m_k); g = sum_k alpha_k h_k
inline AttentionResult soft_attention(Tape& t, const AttentionNodes& w, std::span<const Value> children_h,
                                      Value s) {
    return soft_attention_cached(t, w, children_h, t.matvec(w.Um, s));
}

namespace detail {

inline Value attentive_htilde(Tape& t, const AttentionNodes& att, Value g) {
    return t.tanh(t.add(t.matvec(att.Wa, g), att.ba));
}

}  // namespace detail

struct AttentiveLstmOut {
    Value h, c;
    Value alphas;  // invalid on leaves (attention bypassed)
};

// Tree LSTM with htilde replaced by tanh(Wa g + ba) in the i/o/u gates.
// Forget gates keep the raw child states; leaves bypass attention.
inline AttentiveLstmOut attentive_tree_lstm_compose(Tape& t, const LstmNodes& w, const AttentionNodes& att,
                                                    Value x, std::span<const std::pair<Value, Value>> children,
                                                    Value um_s) {
    if (children.empty()) {
        auto [h, c] = tree_lstm_compose(t, w, x, children);
        return {h, c, Value{}};
    }
    std::vector<Value> hs;
    hs.reserve(children.size());
    for (const auto& [h, c] : children) hs.push_back(h);
    AttentionResult a = soft_attention_cached(t, att, hs, um_s);
    Value htilde = detail::attentive_htilde(t, att, a.g);

    Value i = t.sigmoid(t.add(t.add(t.matvec(w.Wi, x), t.matvec(w.Ui, htilde)), w.bi));
    Value o = t.sigmoid(t.add(t.add(t.matvec(w.Wo, x), t.matvec(w.Uo, htilde)), w.bo));
    Value u = t.tanh(t.add(t.add(t.matvec(w.Wu, x), t.matvec(w.Uu, htilde)), w.bu));
    Value wfx = t.matvec(w.Wf, x);
    std::vector<Value> kept;
    kept.reserve(children.size() + 1);
    kept.push_back(t.mul(i, u));
    for (const auto& [h, ck] : children) {
        Value f = t.sigmoid(t.add(t.add(wfx, t.matvec(w.Uf, h)), w.bf));
        kept.push_back(t.mul(f, ck));
    }
    Value c = t.add_n(kept);
    return {t.mul(o, t.tanh(c)), c, a.alphas};
}

struct AttentiveGruOut {
    Value h;
    Value alphas;  // invalid on leaves
};

// Tree GRU with htilde replaced by tanh(Wa g + ba) in both of its
// occurrences (the z gate and the final interpolation). Reset terms keep
// the raw child states; leaves bypass attention.
inline AttentiveGruOut attentive_tree_gru_compose(Tape& t, const GruNodes& w, const AttentionNodes& att,
                                                  Value x, std::span<const Value> children, Value um_s) {
    if (children.empty()) return {tree_gru_compose(t, w, x, children), Value{}};

    AttentionResult a = soft_attention_cached(t, att, children, um_s);
    Value htilde = detail::attentive_htilde(t, att, a.g);

    Value wrx = t.matvec(w.Wr, x);
    std::vector<Value> gated;
    gated.reserve(children.size());
    for (Value h : children) {
        Value r = t.sigmoid(t.add(t.add(wrx, t.matvec(w.Ur, h)), w.br));
        gated.push_back(t.mul(r, h));
    }
    Value reset_sum = gated.size() == 1 ? gated[0] : t.add_n(gated);
    Value hhat = t.tanh(t.add(t.matvec(w.Wh, x), t.matvec(w.Uh, reset_sum)));
    Value z = t.sigmoid(t.add(t.add(t.matvec(w.Wz, x), t.matvec(w.Uz, htilde)), w.bz));
    Value ones = t.leaf([&] {
        Tensor v = Tensor::zeros_like(t.value(z));
        v.fill(1.0);
        return v;
    }());
    Value h = t.add(t.mul(z, htilde), t.mul(t.sub(ones, z), hhat));
    return {h, a.alphas};
}

}  // namespace treeattn
