#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace treeattn {

// Correlation metrics return nullopt when undefined (zero variance on either
// side); callers decide how to report that.

// 1-based ranks; ties share the mean of the positions they occupy.
inline std::vector<double> average_ranks(const std::vector<double>& xs) {
    const size_t n = xs.size();
    std::vector<size_t> idx(n);
    for (size_t i = 0; i < n; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return xs[a] < xs[b]; });
    std::vector<double> ranks(n, 0.0);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j + 1 < n && xs[idx[j + 1]] == xs[idx[i]]) ++j;
        const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
        for (size_t k = i; k <= j; ++k) ranks[idx[k]] = shared;
        i = j + 1;
    }
    return ranks;
}

inline std::optional<double> pearson(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("pearson: length mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    if (a.size() < 2) return std::nullopt;
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma, db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return std::nullopt;
    return sab / std::sqrt(saa * sbb);
}

// Pearson correlation of average ranks.
inline std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw std::invalid_argument("spearman: length mismatch " + std::to_string(a.size()) + " vs " +
                                    std::to_string(b.size()));
    if (a.size() < 2) return std::nullopt;
    return pearson(average_ranks(a), average_ranks(b));
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("mse: need equal-length non-empty inputs");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

struct BinaryScore {
    double accuracy = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// F1 for the positive class; P + R = 0 yields F1 = 0 by convention.
inline BinaryScore accuracy_f1(const std::vector<int>& pred, const std::vector<int>& gold) {
    if (pred.size() != gold.size() || pred.empty())
        throw std::invalid_argument("accuracy_f1: need equal-length non-empty inputs");
    double tp = 0, fp = 0, fn = 0, tn = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if ((pred[i] != 0 && pred[i] != 1) || (gold[i] != 0 && gold[i] != 1))
            throw std::invalid_argument("accuracy_f1: labels must be 0 or 1");
        if (pred[i] == 1)
            (gold[i] == 1 ? tp : fp) += 1;
        else
            (gold[i] == 1 ? fn : tn) += 1;
    }
    BinaryScore s;
    s.accuracy = (tp + tn) / static_cast<double>(pred.size());
    s.precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
    s.recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
    s.f1 = s.precision + s.recall > 0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

namespace detail {

inline std::set<std::string> ngram_types(const std::vector<std::string>& toks, size_t n) {
    std::set<std::string> types;
    if (toks.size() < n) return types;
    for (size_t i = 0; i + n <= toks.size(); ++i) {
        std::string g;
        for (size_t k = 0; k < n; ++k) {
            if (k) g += '\x1f';
            g += toks[i + k];
        }
        types.insert(std::move(g));
    }
    return types;
}

}  // namespace detail

// 50 * (uni + bi + tri) / mean-length, where each term is the count of n-gram
// types shared by both sentences divided by the shorter sentence's type count
// (ties on length resolved toward sentence a). A sentence shorter than n
// contributes 0 for that term.
inline double ngram_overlap_score(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) throw std::invalid_argument("ngram_overlap_score: empty sentence");
    const bool a_shorter = a.size() <= b.size();
    const double mean_len = 0.5 * static_cast<double>(a.size() + b.size());
    double sum = 0.0;
    for (size_t n = 1; n <= 3; ++n) {
        const std::set<std::string> ta = detail::ngram_types(a, n);
        const std::set<std::string> tb = detail::ngram_types(b, n);
        const std::set<std::string>& denom = a_shorter ? ta : tb;
        if (denom.empty()) continue;
        size_t shared = 0;
        for (const std::string& g : ta) shared += tb.count(g);
        sum += static_cast<double>(shared) / static_cast<double>(denom.size());
    }
    return 50.0 * sum / mean_len;
}

struct BucketInput {
    double key = 0.0;   // bucketing statistic for this example
    double pred = 0.0;  // score or decoded label
    double gold = 0.0;
};

struct BucketRow {
    double lo = 0.0, hi = 0.0;
    int count = 0;
    std::optional<double> metric;  // absent for empty buckets or undefined metric
};

// Groups examples into [edges[i], edges[i+1]) buckets; the metric per bucket
// is Pearson r for similarity tasks and accuracy for binary tasks. Keys
// outside the edge range are dropped.
inline std::vector<BucketRow> bucket_report(const std::vector<BucketInput>& rows, const std::vector<double>& edges,
                                            bool similarity) {
    if (edges.size() < 2) throw std::invalid_argument("bucket_report: need at least two edges");
    if (!std::is_sorted(edges.begin(), edges.end()))
        throw std::invalid_argument("bucket_report: edges must be ascending");
    std::vector<BucketRow> out(edges.size() - 1);
    std::vector<std::vector<double>> preds(out.size()), golds(out.size());
    for (size_t b = 0; b < out.size(); ++b) {
        out[b].lo = edges[b];
        out[b].hi = edges[b + 1];
    }
    for (const BucketInput& r : rows) {
        const auto it = std::upper_bound(edges.begin(), edges.end(), r.key);
        const long b = (it - edges.begin()) - 1;
        if (b < 0 || b >= static_cast<long>(out.size())) continue;
        preds[static_cast<size_t>(b)].push_back(r.pred);
        golds[static_cast<size_t>(b)].push_back(r.gold);
    }
    for (size_t b = 0; b < out.size(); ++b) {
        out[b].count = static_cast<int>(preds[b].size());
        if (preds[b].empty()) continue;
        if (similarity) {
            out[b].metric = pearson(preds[b], golds[b]);
        } else {
            double correct = 0.0;
            for (size_t i = 0; i < preds[b].size(); ++i) correct += preds[b][i] == golds[b][i] ? 1.0 : 0.0;
            out[b].metric = correct / static_cast<double>(preds[b].size());
        }
    }
    return out;
}

}  // namespace treeattn
