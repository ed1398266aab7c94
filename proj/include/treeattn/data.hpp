#pragma once

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "treeattn/errors.hpp"
#include "treeattn/rng.hpp"
#include "treeattn/tensor.hpp"
#include "treeattn/tree.hpp"

namespace treeattn {

enum class Task { Sick, Msrp, Ai2 };

inline std::string task_name(Task t) {
    switch (t) {
        case Task::Sick: return "sick";
        case Task::Msrp: return "msrp";
        case Task::Ai2: return "ai2";
    }
    return "?";
}

inline Task parse_task(const std::string& s) {
    if (s == "sick") return Task::Sick;
    if (s == "msrp") return Task::Msrp;
    if (s == "ai2") return Task::Ai2;
    throw ConfigError("unknown task '" + s + "' (expected sick, msrp or ai2)");
}

inline bool is_similarity_task(Task t) { return t == Task::Sick; }

inline std::string lowercase(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream is(line);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

inline std::vector<std::string> split_on(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

// Token -> dense index map over lowercased tokens; total over every split.
class Vocabulary {
public:
    int add(const std::string& token) {
        const std::string key = lowercase(token);
        auto it = index_.find(key);
        if (it != index_.end()) return it->second;
        const int id = static_cast<int>(tokens_.size());
        index_.emplace(key, id);
        tokens_.push_back(key);
        return id;
    }

    int lookup(const std::string& token) const {
        auto it = index_.find(lowercase(token));
        return it == index_.end() ? -1 : it->second;
    }

    const std::string& token(int id) const { return tokens_[static_cast<size_t>(id)]; }
    const std::vector<std::string>& tokens() const { return tokens_; }
    int size() const { return static_cast<int>(tokens_.size()); }

    // FNV-1a over tokens, stable identity for checkpoints
    std::uint64_t hash() const {
        std::uint64_t h = 1469598103934665603ULL;
        for (const std::string& t : tokens_) {
            for (char c : t) {
                h ^= static_cast<unsigned char>(c);
                h *= 1099511628211ULL;
            }
            h ^= 0xff;
            h *= 1099511628211ULL;
        }
        return h;
    }

private:
    std::unordered_map<std::string, int> index_;
    std::vector<std::string> tokens_;
};

struct DatasetExample {
    std::vector<std::string> tokens_a, tokens_b;
    std::vector<int> ids_a, ids_b;
    DependencyTree tree_a, tree_b;
    double label = 0.0;  // [1,5] for similarity, {0,1} for binary
};

struct DatasetSplits {
    std::vector<DatasetExample> train, dev, test;
};

// ---------------------------------------------------------------------------
// CoNLL-style trees: whitespace-separated columns ID FORM HEAD (extra columns
// ignored), 1-based IDs, HEAD 0 marks the root, blank line between sentences.
// ---------------------------------------------------------------------------

struct ConllLine {
    int id;
    std::string form;
    int head;
    int file_line;
};

inline std::pair<std::vector<std::string>, DependencyTree> build_tree(const std::vector<ConllLine>& rows,
                                                                      const std::string& where) {
    const int n = static_cast<int>(rows.size());
    if (n == 0) throw DataError(where + ": empty tree block");
    std::vector<std::string> tokens(n);
    DependencyTree tree;
    tree.nodes.resize(n);
    int root_count = 0;
    for (int i = 0; i < n; ++i) {
        const ConllLine& r = rows[i];
        if (r.id != i + 1)
            throw DataError(where + " line " + std::to_string(r.file_line) + ": expected token id " +
                            std::to_string(i + 1) + ", got " + std::to_string(r.id));
        tokens[i] = r.form;
        tree.nodes[i].token = i;
        if (r.head == 0) {
            root_count++;
            tree.root = i;
        } else if (r.head < 0 || r.head > n) {
            throw DataError(where + " line " + std::to_string(r.file_line) + ": head " +
                            std::to_string(r.head) + " out of range [0, " + std::to_string(n) + "]");
        } else {
            tree.nodes[r.head - 1].children.push_back(i);
        }
    }
    if (root_count == 0) throw DataError(where + " line " + std::to_string(rows.back().file_line) + ": no root (HEAD=0) in block");
    if (root_count > 1) throw DataError(where + " line " + std::to_string(rows.back().file_line) + ": multiple roots in block");
    try {
        tree.validate();
    } catch (const std::exception& e) {
        throw DataError(where + " line " + std::to_string(rows.back().file_line) + ": " + e.what());
    }
    return {std::move(tokens), std::move(tree)};
}

// Parse one blank-line-free block of CoNLL lines.
inline std::pair<std::vector<std::string>, DependencyTree> parse_conll_tree(const std::string& block,
                                                                            const std::string& where = "conll") {
    std::vector<ConllLine> rows;
    std::istringstream is(block);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        std::vector<std::string> cols = split_ws(line);
        if (cols.empty()) continue;
        if (cols.size() < 3)
            throw DataError(where + " line " + std::to_string(lineno) + ": expected at least ID FORM HEAD, got '" +
                            line + "'");
        ConllLine r;
        try {
            r.id = std::stoi(cols[0]);
            r.head = std::stoi(cols[2]);
        } catch (const std::exception&) {
            throw DataError(where + " line " + std::to_string(lineno) + ": non-numeric ID or HEAD in '" + line + "'");
        }
        r.form = cols[1];
        r.file_line = lineno;
        rows.push_back(std::move(r));
    }
    return build_tree(rows, where);
}

inline std::string tree_to_conll(const std::vector<std::string>& tokens, const DependencyTree& tree) {
    std::vector<int> head(tokens.size(), 0);
    for (int i = 0; i < tree.size(); ++i)
        for (int c : tree.nodes[i].children) head[static_cast<size_t>(c)] = i + 1;
    std::ostringstream os;
    for (size_t i = 0; i < tokens.size(); ++i)
        os << (i + 1) << "\t" << tokens[i] << "\t" << head[i] << "\n";
    return os.str();
}

// Read a whole file of blank-line separated tree blocks.
inline std::vector<std::pair<std::vector<std::string>, DependencyTree>> read_conll_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tree file: " + path);
    std::vector<std::pair<std::vector<std::string>, DependencyTree>> out;
    std::vector<ConllLine> rows;
    std::string line;
    int lineno = 0;
    auto flush = [&]() {
        if (!rows.empty()) {
            out.push_back(build_tree(rows, path));
            rows.clear();
        }
    };
    while (std::getline(in, line)) {
        lineno++;
        std::vector<std::string> cols = split_ws(line);
        if (cols.empty()) {
            flush();
            continue;
        }
        if (cols.size() < 3)
            throw DataError(path + " line " + std::to_string(lineno) + ": expected at least ID FORM HEAD, got '" +
                            line + "'");
        ConllLine r;
        try {
            r.id = std::stoi(cols[0]);
            r.head = std::stoi(cols[2]);
        } catch (const std::exception&) {
            throw DataError(path + " line " + std::to_string(lineno) + ": non-numeric ID or HEAD in '" + line + "'");
        }
        r.form = cols[1];
        r.file_line = lineno;
        rows.push_back(std::move(r));
    }
    flush();
    return out;
}

// ---------------------------------------------------------------------------
// Embeddings: "token v1 ... v_dim" per line; tokens missing from the file get
// seeded uniform(-0.05, 0.05) rows.
// ---------------------------------------------------------------------------

class EmbeddingTable {
public:
    static constexpr double kOovBound = 0.05;

    // path may be empty: every row is then an OOV row (no pretrained file).
    static EmbeddingTable load(const std::string& path, const Vocabulary& vocab, int dim, std::uint64_t seed) {
        EmbeddingTable table;
        table.dim_ = dim;
        table.matrix_ = Tensor({std::max(vocab.size(), 1), dim});
        table.pretrained_.assign(static_cast<size_t>(vocab.size()), false);

        if (!path.empty()) {
            std::ifstream in(path);
            if (!in) throw DataError("cannot open embedding file: " + path);
            std::string line;
            int lineno = 0;
            while (std::getline(in, line)) {
                lineno++;
                if (line.empty()) continue;
                std::istringstream is(line);
                std::string token;
                is >> token;
                const int id = vocab.lookup(token);
                std::vector<double> values;
                values.reserve(static_cast<size_t>(dim));
                double v;
                while (is >> v) values.push_back(v);
                if (!is.eof())
                    throw DataError(path + " line " + std::to_string(lineno) + ": non-numeric vector entry");
                if (static_cast<int>(values.size()) != dim)
                    throw DataError(path + " line " + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                                    " values, got " + std::to_string(values.size()));
                if (id < 0) continue;  // token not used by the corpora
                for (int j = 0; j < dim; ++j) table.matrix_.at(id, j) = values[static_cast<size_t>(j)];
                table.pretrained_[static_cast<size_t>(id)] = true;
            }
        }

        UniformRng rng(seed);
        table.oov_count_ = 0;
        for (int i = 0; i < vocab.size(); ++i) {
            if (table.pretrained_[static_cast<size_t>(i)]) continue;
            table.oov_count_++;
            for (int j = 0; j < dim; ++j) table.matrix_.at(i, j) = rng.uniform(-kOovBound, kOovBound);
        }
        return table;
    }

    static EmbeddingTable from_matrix(Tensor matrix, std::vector<bool> pretrained, int oov_count) {
        EmbeddingTable t;
        t.dim_ = matrix.cols();
        t.matrix_ = std::move(matrix);
        t.pretrained_ = std::move(pretrained);
        t.oov_count_ = oov_count;
        return t;
    }

    Tensor row(int id) const {
        Tensor r({dim_});
        for (int j = 0; j < dim_; ++j) r[j] = matrix_.at(id, j);
        return r;
    }

    int dim() const { return dim_; }
    int rows() const { return matrix_.rows(); }
    int oov_count() const { return oov_count_; }
    bool is_pretrained(int id) const { return pretrained_[static_cast<size_t>(id)]; }
    const Tensor& matrix() const { return matrix_; }
    const std::vector<bool>& pretrained_flags() const { return pretrained_; }

private:
    int dim_ = 0;
    Tensor matrix_;
    std::vector<bool> pretrained_;
    int oov_count_ = 0;
};

// ---------------------------------------------------------------------------
// Canonical dataset layout in a directory:
//   <split>.tsv        one example per line: sentence-a \t sentence-b \t label
//   <split>.a.conll    tree blocks for sentence-a, same order
//   <split>.b.conll    tree blocks for sentence-b, same order
// Splits: train/dev/test for sick and ai2; train/test for msrp (dev is a
// seeded 10% cut of train made at load time: train keeps floor(0.9 n)).
// ---------------------------------------------------------------------------

inline std::vector<DatasetExample> load_split_file(const std::string& tsv_path, Task task) {
    std::ifstream in(tsv_path);
    if (!in) throw DataError("cannot open dataset file: " + tsv_path);
    const std::string trees_a = tsv_path.substr(0, tsv_path.size() - 4) + ".a.conll";
    const std::string trees_b = tsv_path.substr(0, tsv_path.size() - 4) + ".b.conll";
    auto forest_a = read_conll_file(trees_a);
    auto forest_b = read_conll_file(trees_b);

    std::vector<DatasetExample> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        lineno++;
        if (line.empty()) continue;
        std::vector<std::string> cols = split_on(line, '\t');
        if (cols.size() != 3)
            throw DataError(tsv_path + " line " + std::to_string(lineno) + ": expected 3 tab-separated fields, got " +
                            std::to_string(cols.size()));
        DatasetExample ex;
        ex.tokens_a = split_ws(cols[0]);
        ex.tokens_b = split_ws(cols[1]);
        if (ex.tokens_a.empty() || ex.tokens_b.empty())
            throw DataError(tsv_path + " line " + std::to_string(lineno) + ": empty sentence");
        try {
            ex.label = std::stod(cols[2]);
        } catch (const std::exception&) {
            throw DataError(tsv_path + " line " + std::to_string(lineno) + ": non-numeric label '" + cols[2] + "'");
        }
        if (is_similarity_task(task)) {
            if (ex.label < 1.0 || ex.label > 5.0)
                throw DataError(tsv_path + " line " + std::to_string(lineno) + ": similarity label " + cols[2] +
                                " outside [1, 5]");
        } else if (ex.label != 0.0 && ex.label != 1.0) {
            throw DataError(tsv_path + " line " + std::to_string(lineno) + ": binary label '" + cols[2] +
                            "' is not 0 or 1");
        }
        const size_t idx = out.size();
        if (idx >= forest_a.size() || idx >= forest_b.size())
            throw DataError(tsv_path + " line " + std::to_string(lineno) + ": no tree block for this example");
        ex.tokens_a = forest_a[idx].first;  // FORM columns are authoritative for tokens
        ex.tree_a = forest_a[idx].second;
        ex.tokens_b = forest_b[idx].first;
        ex.tree_b = forest_b[idx].second;
        if (split_ws(cols[0]).size() != ex.tokens_a.size() || split_ws(cols[1]).size() != ex.tokens_b.size())
            throw DataError(tsv_path + " line " + std::to_string(lineno) +
                            ": token count differs from the tree block");
        out.push_back(std::move(ex));
    }
    if (forest_a.size() != out.size() || forest_b.size() != out.size())
        throw DataError(tsv_path + ": " + std::to_string(out.size()) + " examples but " +
                        std::to_string(forest_a.size()) + "/" + std::to_string(forest_b.size()) + " tree blocks");
    return out;
}

struct ExpectedCounts {
    size_t train, dev, test;
};

inline std::optional<ExpectedCounts> expected_counts(Task task) {
    switch (task) {
        case Task::Sick: return ExpectedCounts{4500, 500, 4927};
        case Task::Msrp: return ExpectedCounts{3668, 408, 1725};
        case Task::Ai2: return ExpectedCounts{12689, 2483, 11359};
    }
    return std::nullopt;
}

inline DatasetSplits load_dataset(Task task, const std::string& dir, std::uint64_t seed,
                                  std::ostream* warnings = &std::cerr) {
    DatasetSplits splits;
    splits.train = load_split_file(dir + "/train.tsv", task);
    if (task == Task::Msrp) {
        // dev = seeded random cut of the training pairs; train keeps floor(0.9 n)
        const size_t n = splits.train.size();
        const size_t keep = n * 9 / 10;
        std::vector<size_t> order(n);
        for (size_t i = 0; i < n; ++i) order[i] = i;
        UniformRng rng(seed);
        rng.shuffle(order);
        std::vector<DatasetExample> train_kept, dev;
        train_kept.reserve(keep);
        dev.reserve(n - keep);
        for (size_t i = 0; i < n; ++i)
            (i < keep ? train_kept : dev).push_back(std::move(splits.train[order[i]]));
        splits.train = std::move(train_kept);
        splits.dev = std::move(dev);
    } else {
        splits.dev = load_split_file(dir + "/dev.tsv", task);
    }
    splits.test = load_split_file(dir + "/test.tsv", task);

    if (auto want = expected_counts(task); want && warnings) {
        if (splits.train.size() != want->train || splits.dev.size() != want->dev ||
            splits.test.size() != want->test)
            *warnings << "warning: " << task_name(task) << " split sizes " << splits.train.size() << "/"
                      << splits.dev.size() << "/" << splits.test.size() << " differ from the expected "
                      << want->train << "/" << want->dev << "/" << want->test << "\n";
    }
    return splits;
}

// Build the vocabulary over every split and resolve token ids in place.
inline Vocabulary build_vocabulary(DatasetSplits& splits) {
    Vocabulary vocab;
    auto index = [&](std::vector<DatasetExample>& xs) {
        for (DatasetExample& ex : xs) {
            ex.ids_a.clear();
            ex.ids_b.clear();
            for (const std::string& t : ex.tokens_a) ex.ids_a.push_back(vocab.add(t));
            for (const std::string& t : ex.tokens_b) ex.ids_b.push_back(vocab.add(t));
        }
    };
    index(splits.train);
    index(splits.dev);
    index(splits.test);
    return vocab;
}

inline void resolve_ids(std::vector<DatasetExample>& xs, const Vocabulary& vocab) {
    for (DatasetExample& ex : xs) {
        ex.ids_a.clear();
        ex.ids_b.clear();
        for (const std::string& t : ex.tokens_a) {
            const int id = vocab.lookup(t);
            if (id < 0) throw DataError("token '" + t + "' not covered by the model vocabulary");
            ex.ids_a.push_back(id);
        }
        for (const std::string& t : ex.tokens_b) {
            const int id = vocab.lookup(t);
            if (id < 0) throw DataError("token '" + t + "' not covered by the model vocabulary");
            ex.ids_b.push_back(id);
        }
    }
}

}  // namespace treeattn
