#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <iostream>
#include <string>
#include <vector>

#include "treeattn/errors.hpp"
#include "treeattn/metrics.hpp"
#include "treeattn/model.hpp"

namespace treeattn {

struct TrainConfig {
    double learning_rate = 0.05;
    int batch_size = 25;
    double l2_lambda = 1e-4;
    double dropout_rate = 0.5;
    int epochs = 10;
    int hidden_dim = 150;
    int embedding_dim = 300;
    int mlp_dim = 50;
    std::uint64_t seed = 1;
    Task task = Task::Sick;
    VariantTag variant;
    int threads = 0;  // 0 = hardware concurrency (evaluation only)

    void validate() const {
        if (learning_rate <= 0.0) throw ConfigError("learning-rate must be positive");
        if (batch_size <= 0) throw ConfigError("batch-size must be positive");
        if (l2_lambda < 0.0) throw ConfigError("l2-lambda must be nonnegative");
        if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout must lie in [0, 1)");
        if (epochs < 0) throw ConfigError("epochs must be nonnegative");
        if (hidden_dim <= 0) throw ConfigError("hidden-dim must be positive");
        if (embedding_dim <= 0) throw ConfigError("embedding-dim must be positive");
        if (mlp_dim <= 0) throw ConfigError("mlp-dim must be positive");
        if (threads < 0) throw ConfigError("threads must be nonnegative");
    }
};

inline int task_num_classes(Task task) { return is_similarity_task(task) ? 5 : 2; }

struct AdagradState {
    double epsilon = 1e-8;
    std::vector<Tensor> accum;  // g*g sums, parallel to the parameter list

    explicit AdagradState(const std::vector<Parameter*>& params, double eps = 1e-8) : epsilon(eps) {
        accum.reserve(params.size());
        for (const Parameter* p : params) accum.push_back(Tensor::zeros_like(p->value));
    }
};

// G += g*g; theta -= lr * g / (sqrt(G) + eps); gradients are consumed.
inline void adagrad_step(const std::vector<Parameter*>& params, AdagradState& state, double lr) {
    if (params.size() != state.accum.size())
        throw std::invalid_argument("adagrad_step: state tracks " + std::to_string(state.accum.size()) +
                                    " parameters, got " + std::to_string(params.size()));
    for (size_t k = 0; k < params.size(); ++k) {
        Parameter& p = *params[k];
        Tensor& g2 = state.accum[k];
        for (int i = 0; i < p.value.size(); ++i) {
            const double g = p.grad[i];
            if (g == 0.0) continue;
            g2[i] += g * g;
            p.value[i] -= lr * g / (std::sqrt(g2[i]) + state.epsilon);
        }
        p.zero_grad();
    }
}

struct EpochReport {
    int epoch = 0;          // 0-based
    double train_loss = 0.0;  // mean per-example data loss over the epoch
    double dev_metric = 0.0;
};

// One pass over the data: seeded shuffle, batches of <= batch_size, gradients
// of the batch-mean loss (backward seeded with 1/batch_n) plus the analytic
// lambda*theta term once per batch, then one adagrad step. Returns the mean
// data loss across the epoch.
inline double train_epoch(SentencePairModel& model, const std::vector<DatasetExample>& data,
                          const TrainConfig& cfg, AdagradState& state, UniformRng& rng) {
    if (data.empty()) throw std::invalid_argument("train_epoch: empty training set");
    std::vector<size_t> order(data.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);

    const std::vector<Parameter*> params = model.parameters();
    double total_loss = 0.0;
    Tape tape;
    for (size_t start = 0; start < order.size(); start += static_cast<size_t>(cfg.batch_size)) {
        const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
        const double inv_n = 1.0 / static_cast<double>(end - start);
        for (size_t k = start; k < end; ++k) {
            const DatasetExample& ex = data[order[k]];
            tape.clear();
            ModelNodes nodes = ModelNodes::bind(tape, model);
            const Value mask = cfg.dropout_rate > 0.0
                                   ? tape.leaf(dropout_mask(model.mlp_dim, cfg.dropout_rate, rng))
                                   : Value{};
            const Value loss = example_loss(tape, nodes, model, ex, mask);
            const double lv = tape.value(loss)[0];
            if (!std::isfinite(lv)) throw NumericError("non-finite loss at example " + std::to_string(order[k]));
            total_loss += lv;
            tape.backward(loss, inv_n);
        }
        if (cfg.l2_lambda > 0.0)
            for (Parameter* p : params)
                for (int i = 0; i < p->value.size(); ++i) p->grad[i] += cfg.l2_lambda * p->value[i];
        adagrad_step(params, state, cfg.learning_rate);
    }
    return total_loss / static_cast<double>(data.size());
}

// Dev-selection metric: Pearson r of decoded scores for similarity tasks,
// accuracy for binary tasks. Zero-variance predictions count as 0.
inline double dev_metric(SentencePairModel& model, const std::vector<DatasetExample>& dev, int threads = 0) {
    const std::vector<PairPrediction> preds = predict_all(model, dev, threads);
    if (model.similarity()) {
        std::vector<double> yhat, gold;
        yhat.reserve(preds.size());
        gold.reserve(preds.size());
        for (size_t i = 0; i < preds.size(); ++i) {
            yhat.push_back(preds[i].score);
            gold.push_back(dev[i].label);
        }
        return pearson(yhat, gold).value_or(0.0);
    }
    std::vector<int> yhat, gold;
    yhat.reserve(preds.size());
    gold.reserve(preds.size());
    for (size_t i = 0; i < preds.size(); ++i) {
        yhat.push_back(preds[i].label);
        gold.push_back(static_cast<int>(dev[i].label));
    }
    return accuracy_f1(yhat, gold).accuracy;
}

struct FitResult {
    std::vector<EpochReport> history;
    int best_epoch = -1;  // 0-based; -1 when no epoch ran
    double best_metric = 0.0;
};

using DevMetricFn = std::function<double(SentencePairModel&, const std::vector<DatasetExample>&)>;

// Trains for cfg.epochs epochs, evaluating dev after each; the parameter
// state of the best-dev epoch is restored before returning.
inline FitResult fit(SentencePairModel& model, const DatasetSplits& splits, const TrainConfig& cfg,
                     std::ostream* progress = nullptr, DevMetricFn metric_fn = {}) {
    if (splits.train.empty()) throw DataError("fit: empty training split");
    if (splits.dev.empty() && cfg.epochs > 0) throw DataError("fit: empty dev split");
    if (!metric_fn)
        metric_fn = [&cfg](SentencePairModel& m, const std::vector<DatasetExample>& dev) {
            return dev_metric(m, dev, cfg.threads);
        };

    const std::vector<Parameter*> params = model.parameters();
    AdagradState state(params);
    UniformRng rng(cfg.seed);
    FitResult res;
    std::vector<Tensor> best;
    for (int e = 0; e < cfg.epochs; ++e) {
        const double loss = train_epoch(model, splits.train, cfg, state, rng);
        const double metric = metric_fn(model, splits.dev);
        res.history.push_back({e, loss, metric});
        if (res.best_epoch < 0 || metric > res.best_metric) {
            res.best_epoch = e;
            res.best_metric = metric;
            best.clear();
            for (const Parameter* p : params) best.push_back(p->value);
        }
        if (progress)
            *progress << "epoch " << (e + 1) << "/" << cfg.epochs << "  train-loss " << loss << "  dev-metric "
                      << metric << "\n";
    }
    if (res.best_epoch >= 0)
        for (size_t k = 0; k < params.size(); ++k) params[k]->value = best[k];
    return res;
}

}  // namespace treeattn
