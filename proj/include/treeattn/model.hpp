#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "treeattn/cells.hpp"
#include "treeattn/data.hpp"
#include "treeattn/errors.hpp"
#include "treeattn/tape.hpp"
#include "treeattn/tree.hpp"

namespace treeattn {

// Sentence-pair model: siamese encoders (sequential, child-sum tree, or
// attentive child-sum tree with cross-guidance), an MLP head over
// (h_l . h_r, |h_l - h_r|), and the two task losses.

enum class EncoderKind { Seq, Tree, AttentiveTree };
enum class CellKind { Lstm, Gru };

struct VariantTag {
    EncoderKind encoder = EncoderKind::AttentiveTree;
    CellKind cell = CellKind::Lstm;

    bool attentive() const { return encoder == EncoderKind::AttentiveTree; }
    bool uses_seq() const { return encoder != EncoderKind::Tree; }
    bool uses_tree() const { return encoder != EncoderKind::Seq; }

    std::string str() const {
        std::string head = encoder == EncoderKind::Seq      ? "seq"
                           : encoder == EncoderKind::Tree   ? "tree"
                                                            : "att-tree";
        return head + (cell == CellKind::Lstm ? "-lstm" : "-gru");
    }

    static VariantTag parse(const std::string& s) {
        for (EncoderKind e : {EncoderKind::Seq, EncoderKind::Tree, EncoderKind::AttentiveTree})
            for (CellKind c : {CellKind::Lstm, CellKind::Gru})
                if (VariantTag{e, c}.str() == s) return {e, c};
        throw ConfigError("unknown variant '" + s +
                          "' (expected one of seq-lstm, seq-gru, tree-lstm, tree-gru, att-tree-lstm, att-tree-gru)");
    }

    friend bool operator==(const VariantTag&, const VariantTag&) = default;
};

struct MlpWeights {
    Parameter Wx, Wplus, bh, Wp, bp;

    MlpWeights() = default;
    MlpWeights(int hidden, int mlp_dim, int num_classes, UniformRng& rng) {
        const double sh = 1.0 / std::sqrt(static_cast<double>(mlp_dim));
        const double sp = 1.0 / std::sqrt(static_cast<double>(num_classes));
        Wx = Parameter("mlp.Wx", uniform_matrix(mlp_dim, hidden, sh, rng));
        Wplus = Parameter("mlp.Wplus", uniform_matrix(mlp_dim, hidden, sh, rng));
        bh = Parameter("mlp.bh", Tensor({mlp_dim}));
        Wp = Parameter("mlp.Wp", uniform_matrix(num_classes, mlp_dim, sp, rng));
        bp = Parameter("mlp.bp", Tensor({num_classes}));
    }

    void collect(std::vector<Parameter*>& out) { out.insert(out.end(), {&Wx, &Wplus, &bh, &Wp, &bp}); }
};

struct SentencePairModel {
    VariantTag variant;
    int hidden = 150;
    int mlp_dim = 50;
    int num_classes = 5;  // 5 for similarity, 2 for binary tasks
    Vocabulary vocab;
    EmbeddingTable embeddings;  // frozen: excluded from parameters()
    std::optional<LstmWeights> seq_lstm, tree_lstm;
    std::optional<GruWeights> seq_gru, tree_gru;
    std::optional<AttentionWeights> attention;
    MlpWeights mlp;

    SentencePairModel() = default;

    SentencePairModel(VariantTag v, int hidden_dim, int mlp_hidden, int k, Vocabulary voc, EmbeddingTable emb,
                      std::uint64_t seed)
        : variant(v),
          hidden(hidden_dim),
          mlp_dim(mlp_hidden),
          num_classes(k),
          vocab(std::move(voc)),
          embeddings(std::move(emb)) {
        UniformRng rng(seed);
        const int input = embeddings.dim();
        if (v.cell == CellKind::Lstm) {
            if (v.uses_seq()) seq_lstm.emplace("seq", hidden, input, rng);
            if (v.uses_tree()) tree_lstm.emplace("tree", hidden, input, rng);
        } else {
            if (v.uses_seq()) seq_gru.emplace("seq", hidden, input, rng);
            if (v.uses_tree()) tree_gru.emplace("tree", hidden, input, rng);
        }
        if (v.attentive()) attention.emplace("att", hidden, rng);
        mlp = MlpWeights(hidden, mlp_dim, num_classes, rng);
    }

    bool similarity() const { return num_classes > 2; }

    std::vector<Parameter*> parameters() {
        std::vector<Parameter*> out;
        if (seq_lstm) seq_lstm->collect(out);
        if (seq_gru) seq_gru->collect(out);
        if (tree_lstm) tree_lstm->collect(out);
        if (tree_gru) tree_gru->collect(out);
        if (attention) attention->collect(out);
        mlp.collect(out);
        return out;
    }
};

struct MlpNodes {
    Value Wx, Wplus, bh, Wp, bp;
    static MlpNodes bind(Tape& t, MlpWeights& w) {
        return {t.param(w.Wx), t.param(w.Wplus), t.param(w.bh), t.param(w.Wp), t.param(w.bp)};
    }
};

// Per-tape bindings for every bundle the variant owns.
struct ModelNodes {
    std::optional<LstmNodes> seq_lstm, tree_lstm;
    std::optional<GruNodes> seq_gru, tree_gru;
    std::optional<AttentionNodes> attention;
    MlpNodes mlp;

    static ModelNodes bind(Tape& t, SentencePairModel& m) {
        ModelNodes n;
        if (m.seq_lstm) n.seq_lstm = LstmNodes::bind(t, *m.seq_lstm);
        if (m.seq_gru) n.seq_gru = GruNodes::bind(t, *m.seq_gru);
        if (m.tree_lstm) n.tree_lstm = LstmNodes::bind(t, *m.tree_lstm);
        if (m.tree_gru) n.tree_gru = GruNodes::bind(t, *m.tree_gru);
        if (m.attention) n.attention = AttentionNodes::bind(t, *m.attention);
        n.mlp = MlpNodes::bind(t, m.mlp);
        return n;
    }
};

inline Value embed_token(Tape& t, const SentencePairModel& m, int id) { return t.leaf(m.embeddings.row(id)); }

// Left-to-right fold from zero initial state; the sentence representation is
// the final hidden state.
inline Value encode_sequence(Tape& t, const ModelNodes& n, const SentencePairModel& m, const std::vector<int>& ids) {
    if (ids.empty()) throw std::invalid_argument("encode_sequence: empty sentence");
    if (m.variant.cell == CellKind::Lstm) {
        std::pair<Value, Value> state;
        bool first = true;
        for (int id : ids) {
            Value x = embed_token(t, m, id);
            state = first ? tree_lstm_compose(t, *n.seq_lstm, x, {})
                          : lstm_step(t, *n.seq_lstm, x, state.first, state.second);
            first = false;
        }
        return state.first;
    }
    Value h;
    for (int id : ids) {
        Value x = embed_token(t, m, id);
        h = h.valid() ? gru_step(t, *n.seq_gru, x, h) : tree_gru_compose(t, *n.seq_gru, x, {});
    }
    return h;
}

inline Value encode_tree(Tape& t, const ModelNodes& n, const SentencePairModel& m, const std::vector<int>& ids,
                         const DependencyTree& tree) {
    if (tree.size() != static_cast<int>(ids.size()))
        throw std::invalid_argument("encode_tree: tree has " + std::to_string(tree.size()) + " nodes for " +
                                    std::to_string(ids.size()) + " tokens");
    const std::vector<int> order = tree.postorder();
    if (m.variant.cell == CellKind::Lstm) {
        std::vector<std::pair<Value, Value>> states(static_cast<size_t>(tree.size()));
        for (int v : order) {
            std::vector<std::pair<Value, Value>> children;
            children.reserve(tree.nodes[static_cast<size_t>(v)].children.size());
            for (int c : tree.nodes[static_cast<size_t>(v)].children) children.push_back(states[static_cast<size_t>(c)]);
            Value x = embed_token(t, m, ids[static_cast<size_t>(v)]);
            states[static_cast<size_t>(v)] = tree_lstm_compose(t, *n.tree_lstm, x, children);
        }
        return states[static_cast<size_t>(tree.root)].first;
    }
    std::vector<Value> states(static_cast<size_t>(tree.size()));
    for (int v : order) {
        std::vector<Value> children;
        children.reserve(tree.nodes[static_cast<size_t>(v)].children.size());
        for (int c : tree.nodes[static_cast<size_t>(v)].children) children.push_back(states[static_cast<size_t>(c)]);
        Value x = embed_token(t, m, ids[static_cast<size_t>(v)]);
        states[static_cast<size_t>(v)] = tree_gru_compose(t, *n.tree_gru, x, children);
    }
    return states[static_cast<size_t>(tree.root)];
}

// One attention record per internal node, in composition (post) order.
struct AttentionTraceEntry {
    int head = 0;               // node index == token position
    std::vector<int> children;  // node indices in child order
    Value alphas;               // distribution over children, on the tape
};
using AttentionTrace = std::vector<AttentionTraceEntry>;

inline Value encode_tree_attentive(Tape& t, const ModelNodes& n, const SentencePairModel& m,
                                   const std::vector<int>& ids, const DependencyTree& tree, Value guidance,
                                   AttentionTrace* trace = nullptr) {
    if (tree.size() != static_cast<int>(ids.size()))
        throw std::invalid_argument("encode_tree: tree has " + std::to_string(tree.size()) + " nodes for " +
                                    std::to_string(ids.size()) + " tokens");
    const AttentionNodes& att = *n.attention;
    Value um_s = t.matvec(att.Um, guidance);  // shared across all nodes of this sentence
    const std::vector<int> order = tree.postorder();
    if (m.variant.cell == CellKind::Lstm) {
        std::vector<std::pair<Value, Value>> states(static_cast<size_t>(tree.size()));
        for (int v : order) {
            const auto& kids = tree.nodes[static_cast<size_t>(v)].children;
            std::vector<std::pair<Value, Value>> children;
            children.reserve(kids.size());
            for (int c : kids) children.push_back(states[static_cast<size_t>(c)]);
            Value x = embed_token(t, m, ids[static_cast<size_t>(v)]);
            AttentiveLstmOut out = attentive_tree_lstm_compose(t, *n.tree_lstm, att, x, children, um_s);
            states[static_cast<size_t>(v)] = {out.h, out.c};
            if (trace && !kids.empty()) trace->push_back({v, kids, out.alphas});
        }
        return states[static_cast<size_t>(tree.root)].first;
    }
    std::vector<Value> states(static_cast<size_t>(tree.size()));
    for (int v : order) {
        const auto& kids = tree.nodes[static_cast<size_t>(v)].children;
        std::vector<Value> children;
        children.reserve(kids.size());
        for (int c : kids) children.push_back(states[static_cast<size_t>(c)]);
        Value x = embed_token(t, m, ids[static_cast<size_t>(v)]);
        AttentiveGruOut out = attentive_tree_gru_compose(t, *n.tree_gru, att, x, children, um_s);
        states[static_cast<size_t>(v)] = out.h;
        if (trace && !kids.empty()) trace->push_back({v, kids, out.alphas});
    }
    return states[static_cast<size_t>(tree.root)];
}

struct PairEncoding {
    Value h_l, h_r;
    AttentionTrace trace_a, trace_b;
};

// Cross-guidance wiring for attentive variants: the sequential encoding of
// each sentence guides the tree composition of the other.
inline PairEncoding encode_pair(Tape& t, const ModelNodes& n, SentencePairModel& m, const DatasetExample& ex) {
    PairEncoding out;
    switch (m.variant.encoder) {
        case EncoderKind::Seq:
            out.h_l = encode_sequence(t, n, m, ex.ids_a);
            out.h_r = encode_sequence(t, n, m, ex.ids_b);
            break;
        case EncoderKind::Tree:
            out.h_l = encode_tree(t, n, m, ex.ids_a, ex.tree_a);
            out.h_r = encode_tree(t, n, m, ex.ids_b, ex.tree_b);
            break;
        case EncoderKind::AttentiveTree: {
            Value s_a = encode_sequence(t, n, m, ex.ids_a);
            Value s_b = encode_sequence(t, n, m, ex.ids_b);
            out.h_l = encode_tree_attentive(t, n, m, ex.ids_a, ex.tree_a, s_b, &out.trace_a);
            out.h_r = encode_tree_attentive(t, n, m, ex.ids_b, ex.tree_b, s_a, &out.trace_b);
            break;
        }
    }
    return out;
}

// Inverted-dropout mask: entries are 0 (dropped) or 1/(1-rate), so the
// evaluation path needs no rescaling.
inline Tensor dropout_mask(int dim, double rate, UniformRng& rng) {
    if (rate < 0.0 || rate >= 1.0) throw std::invalid_argument("dropout rate must lie in [0, 1)");
    Tensor mask({dim});
    const double keep = 1.0 / (1.0 - rate);
    for (int i = 0; i < dim; ++i) mask[i] = rng.bernoulli(rate) ? 0.0 : keep;
    return mask;
}

// h_x = h_l . h_r; h_plus = |h_l - h_r|; h_s = sigma(Wx h_x + W+ h_plus + bh);
// p = softmax(Wp h_s + bp). An invalid dropout handle means evaluation mode.
inline Value mlp_head(Tape& t, const MlpNodes& w, Value h_l, Value h_r, Value dropout = {}) {
    Value h_x = t.mul(h_l, h_r);
    Value h_plus = t.abs(t.sub(h_l, h_r));
    Value h_s = t.sigmoid(t.add(t.add(t.matvec(w.Wx, h_x), t.matvec(w.Wplus, h_plus)), w.bh));
    if (dropout.valid()) h_s = t.mul(h_s, dropout);
    return t.softmax(t.add(t.matvec(w.Wp, h_s), w.bp));
}

// Piecewise-linear target over classes 1..K: mass split between floor(y) and
// floor(y)+1 so that the decoded expectation recovers y exactly.
inline Tensor target_distribution(double y, int num_classes = 5) {
    if (!(y >= 1.0 && y <= static_cast<double>(num_classes)))
        throw std::invalid_argument("target_distribution: score " + std::to_string(y) + " outside [1, " +
                                    std::to_string(num_classes) + "]");
    Tensor p({num_classes});
    const int fl = static_cast<int>(std::floor(y));
    if (fl == num_classes) {
        p[num_classes - 1] = 1.0;
    } else {
        p[fl - 1] = fl - y + 1.0;
        p[fl] = y - fl;
    }
    return p;
}

// yhat = sum_i i * p_i over classes 1..K
inline double decode_similarity(const Tensor& p) {
    double y = 0.0;
    for (int i = 0; i < p.size(); ++i) y += (i + 1) * p[i];
    return y;
}

// argmax with ties broken toward the lower class index
inline int decode_label(const Tensor& p) {
    int best = 0;
    for (int i = 1; i < p.size(); ++i)
        if (p[i] > p[best]) best = i;
    return best;
}

inline double kl_divergence(const Tensor& p, const Tensor& q) {
    double s = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;  // 0 log 0 := 0
        const double qi = q[i] < detail::kLogClamp ? detail::kLogClamp : q[i];
        s += p[i] * (std::log(p[i]) - std::log(qi));
    }
    return s;
}

// KL(p || phat) = sum_i p_i log p_i - p . log(phat); the leading entropy term
// is constant, so only the cross-entropy half lives on the tape.
inline Value kl_loss(Tape& t, const Tensor& p, Value phat) {
    double c0 = 0.0;
    for (int i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) c0 += p[i] * std::log(p[i]);
    return t.sub(t.leaf(Tensor::scalar(c0)), t.dot(t.leaf(p), t.log(phat)));
}

// -(y log q + (1-y) log(1-q)) with q the positive-class probability phat[1]
inline Value bce_loss(Tape& t, double label, Value phat) {
    if (label != 0.0 && label != 1.0)
        throw std::invalid_argument("bce_loss: label must be 0 or 1, got " + std::to_string(label));
    Value q = t.select(phat, 1);
    if (label == 1.0) return t.scale(t.log(q), -1.0);
    return t.scale(t.log(t.sub(t.leaf(Tensor::scalar(1.0)), q)), -1.0);
}

// Full per-example objective on the tape (data term only; L2 is applied
// analytically by the optimizer).
inline Value example_loss(Tape& t, const ModelNodes& n, SentencePairModel& m, const DatasetExample& ex,
                          Value dropout = {}) {
    PairEncoding enc = encode_pair(t, n, m, ex);
    Value phat = mlp_head(t, n.mlp, enc.h_l, enc.h_r, dropout);
    if (m.num_classes == 2) return bce_loss(t, ex.label, phat);
    return kl_loss(t, target_distribution(ex.label, m.num_classes), phat);
}

struct AttentionRecord {
    int head = 0;
    std::vector<int> children;
    std::vector<double> alphas;
};

struct PairPrediction {
    std::vector<double> distribution;
    double score = 0.0;  // similarity tasks
    int label = 0;       // binary tasks
    std::vector<AttentionRecord> attention_a, attention_b;
};

inline std::vector<AttentionRecord> materialize_trace(const Tape& t, const AttentionTrace& trace) {
    std::vector<AttentionRecord> out;
    out.reserve(trace.size());
    for (const AttentionTraceEntry& e : trace) {
        const Tensor& a = t.value(e.alphas);
        out.push_back({e.head, e.children, a.vec()});
    }
    return out;
}

inline PairPrediction predict_example(SentencePairModel& m, const DatasetExample& ex, bool keep_attention = false) {
    Tape t;
    ModelNodes n = ModelNodes::bind(t, m);
    PairEncoding enc = encode_pair(t, n, m, ex);
    Value phat = mlp_head(t, n.mlp, enc.h_l, enc.h_r);
    const Tensor& p = t.value(phat);
    PairPrediction out;
    out.distribution = p.vec();
    if (m.num_classes == 2)
        out.label = decode_label(p);
    else
        out.score = decode_similarity(p);
    if (keep_attention && m.variant.attentive()) {
        out.attention_a = materialize_trace(t, enc.trace_a);
        out.attention_b = materialize_trace(t, enc.trace_b);
    }
    return out;
}

// Parallel evaluation; slot-indexed writes make the merge order-deterministic
// regardless of thread count.
inline std::vector<PairPrediction> predict_all(SentencePairModel& m, const std::vector<DatasetExample>& xs,
                                               int threads = 0, bool keep_attention = false) {
    std::vector<PairPrediction> out(xs.size());
    if (xs.empty()) return out;
    const unsigned hw = std::thread::hardware_concurrency();
    int workers = threads > 0 ? threads : (hw ? static_cast<int>(hw) : 1);
    workers = std::min(workers, static_cast<int>(xs.size()));
    if (workers <= 1) {
        for (size_t i = 0; i < xs.size(); ++i) out[i] = predict_example(m, xs[i], keep_attention);
        return out;
    }
    std::atomic<size_t> cursor{0};
    std::vector<std::exception_ptr> errors(static_cast<size_t>(workers));
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            try {
                for (size_t i = cursor.fetch_add(1); i < xs.size(); i = cursor.fetch_add(1))
                    out[i] = predict_example(m, xs[i], keep_attention);
            } catch (...) {
                errors[static_cast<size_t>(w)] = std::current_exception();
            }
        });
    for (std::thread& th : pool) th.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

}  // namespace treeattn
