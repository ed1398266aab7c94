#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "treeattn/data.hpp"
#include "treeattn/errors.hpp"

namespace treeattn {

// Converters from the three corpora's raw distribution files to the canonical
// layout (<split>.tsv + <split>.{a,b}.conll). Dependency parsing itself is
// external: when no tree directory is supplied, prepare emits <split>.{a,b}.txt
// sentence lists (one sentence per line) for the parser to consume, and a
// second run with --trees merges the parser's CoNLL output back in.

struct RawPair {
    std::vector<std::string> tokens_a, tokens_b;
    std::string label;
};

namespace detail {

inline std::string join_tokens(const std::vector<std::string>& toks) {
    std::string s;
    for (size_t i = 0; i < toks.size(); ++i) {
        if (i) s += ' ';
        s += toks[i];
    }
    return s;
}

inline int find_column(const std::vector<std::string>& header, const std::vector<std::string>& names) {
    for (size_t i = 0; i < header.size(); ++i)
        for (const std::string& n : names)
            if (header[i] == n) return static_cast<int>(i);
    return -1;
}

inline int require_column(const std::vector<std::string>& header, const std::vector<std::string>& names,
                          const std::string& path) {
    const int idx = find_column(header, names);
    if (idx < 0) throw DataError(path + ": header is missing a '" + names.front() + "' column");
    return idx;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    return out;
}

}  // namespace detail

// Merge pre-parsed trees for one split; FORM columns become the tokens of
// record (the parser may re-tokenize).
inline void emit_split(const std::string& out_dir, const std::string& split, std::vector<RawPair> rows,
                       const std::string& trees_dir, std::ostream* log = &std::cerr) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    if (!trees_dir.empty()) {
        auto forest_a = read_conll_file(trees_dir + "/" + split + ".a.conll");
        auto forest_b = read_conll_file(trees_dir + "/" + split + ".b.conll");
        if (forest_a.size() != rows.size() || forest_b.size() != rows.size())
            throw DataError(split + ": " + std::to_string(rows.size()) + " raw pairs but " +
                            std::to_string(forest_a.size()) + "/" + std::to_string(forest_b.size()) +
                            " tree blocks");
        auto conll_a = detail::open_out(out_dir + "/" + split + ".a.conll");
        auto conll_b = detail::open_out(out_dir + "/" + split + ".b.conll");
        for (size_t i = 0; i < rows.size(); ++i) {
            rows[i].tokens_a = forest_a[i].first;
            rows[i].tokens_b = forest_b[i].first;
            conll_a << tree_to_conll(forest_a[i].first, forest_a[i].second) << "\n";
            conll_b << tree_to_conll(forest_b[i].first, forest_b[i].second) << "\n";
        }
    } else {
        auto sents_a = detail::open_out(out_dir + "/" + split + ".a.txt");
        auto sents_b = detail::open_out(out_dir + "/" + split + ".b.txt");
        for (const RawPair& r : rows) {
            sents_a << detail::join_tokens(r.tokens_a) << "\n";
            sents_b << detail::join_tokens(r.tokens_b) << "\n";
        }
        if (log)
            *log << "note: no tree directory given; wrote " << split
                 << ".{a,b}.txt sentence lists — parse them externally and re-run with --trees\n";
    }

    auto tsv = detail::open_out(out_dir + "/" + split + ".tsv");
    for (const RawPair& r : rows)
        tsv << detail::join_tokens(r.tokens_a) << "\t" << detail::join_tokens(r.tokens_b) << "\t" << r.label << "\n";
}

// Raw SICK distribution: one header-addressed TSV covering all splits, with
// columns pair_ID, sentence_A, sentence_B, relatedness_score and SemEval_set
// (TRAIN / TRIAL / TEST).
inline void prepare_sick(const std::string& input, const std::string& out_dir, const std::string& trees_dir,
                         std::ostream* log = &std::cerr) {
    namespace fs = std::filesystem;
    std::string path = input;
    if (fs::is_directory(path)) path += "/SICK.txt";
    std::ifstream in(path);
    if (!in) throw DataError("cannot open raw sick file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    const std::vector<std::string> header = split_on(line, '\t');
    const int c_a = detail::require_column(header, {"sentence_A"}, path);
    const int c_b = detail::require_column(header, {"sentence_B"}, path);
    const int c_score = detail::require_column(header, {"relatedness_score"}, path);
    const int c_set = detail::require_column(header, {"SemEval_set"}, path);

    std::vector<RawPair> train, dev, test;
    int lineno = 1;
    while (std::getline(in, line)) {
        lineno++;
        if (line.empty()) continue;
        const std::vector<std::string> cols = split_on(line, '\t');
        const int need = std::max(std::max(c_a, c_b), std::max(c_score, c_set));
        if (static_cast<int>(cols.size()) <= need)
            throw DataError(path + " line " + std::to_string(lineno) + ": too few columns");
        RawPair r;
        r.tokens_a = split_ws(cols[static_cast<size_t>(c_a)]);
        r.tokens_b = split_ws(cols[static_cast<size_t>(c_b)]);
        r.label = cols[static_cast<size_t>(c_score)];
        const std::string& set = cols[static_cast<size_t>(c_set)];
        if (set == "TRAIN")
            train.push_back(std::move(r));
        else if (set == "TRIAL")
            dev.push_back(std::move(r));
        else if (set == "TEST")
            test.push_back(std::move(r));
        else
            throw DataError(path + " line " + std::to_string(lineno) + ": unknown SemEval_set '" + set + "'");
    }
    emit_split(out_dir, "train", std::move(train), trees_dir, log);
    emit_split(out_dir, "dev", std::move(dev), trees_dir, log);
    emit_split(out_dir, "test", std::move(test), trees_dir, log);
}

// Raw MSRP distribution: msr_paraphrase_train.txt / msr_paraphrase_test.txt,
// header "Quality  #1 ID  #2 ID  #1 String  #2 String". The dev cut happens at
// load time, so only train/test are materialized here.
inline void prepare_msrp(const std::string& input_dir, const std::string& out_dir, const std::string& trees_dir,
                         std::ostream* log = &std::cerr) {
    auto read_file = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open raw msrp file: " + path);
        std::string line;
        if (!std::getline(in, line)) throw DataError(path + ": empty file");
        const std::vector<std::string> header = split_on(line, '\t');
        const int c_q = detail::require_column(header, {"Quality"}, path);
        const int c_a = detail::require_column(header, {"#1 String"}, path);
        const int c_b = detail::require_column(header, {"#2 String"}, path);
        std::vector<RawPair> rows;
        int lineno = 1;
        while (std::getline(in, line)) {
            lineno++;
            if (line.empty()) continue;
            const std::vector<std::string> cols = split_on(line, '\t');
            const int need = std::max(c_q, std::max(c_a, c_b));
            if (static_cast<int>(cols.size()) <= need)
                throw DataError(path + " line " + std::to_string(lineno) + ": too few columns");
            RawPair r;
            r.tokens_a = split_ws(cols[static_cast<size_t>(c_a)]);
            r.tokens_b = split_ws(cols[static_cast<size_t>(c_b)]);
            r.label = cols[static_cast<size_t>(c_q)];
            if (r.label != "0" && r.label != "1")
                throw DataError(path + " line " + std::to_string(lineno) + ": Quality '" + r.label +
                                "' is not 0 or 1");
            rows.push_back(std::move(r));
        }
        return rows;
    };
    emit_split(out_dir, "train", read_file(input_dir + "/msr_paraphrase_train.txt"), trees_dir, log);
    emit_split(out_dir, "test", read_file(input_dir + "/msr_paraphrase_test.txt"), trees_dir, log);
}

// Raw AI2-8grade layout: pre-split header-addressed TSVs train.tsv / dev.tsv /
// test.tsv with question, answer and label (0/1) columns.
inline void prepare_ai2(const std::string& input_dir, const std::string& out_dir, const std::string& trees_dir,
                        std::ostream* log = &std::cerr) {
    auto read_file = [](const std::string& path) {
        std::ifstream in(path);
        if (!in) throw DataError("cannot open raw ai2 file: " + path);
        std::string line;
        if (!std::getline(in, line)) throw DataError(path + ": empty file");
        const std::vector<std::string> header = split_on(line, '\t');
        const int c_a = detail::require_column(header, {"question", "sentence_a"}, path);
        const int c_b = detail::require_column(header, {"answer", "sentence_b"}, path);
        const int c_l = detail::require_column(header, {"label"}, path);
        std::vector<RawPair> rows;
        int lineno = 1;
        while (std::getline(in, line)) {
            lineno++;
            if (line.empty()) continue;
            const std::vector<std::string> cols = split_on(line, '\t');
            const int need = std::max(c_l, std::max(c_a, c_b));
            if (static_cast<int>(cols.size()) <= need)
                throw DataError(path + " line " + std::to_string(lineno) + ": too few columns");
            RawPair r;
            r.tokens_a = split_ws(cols[static_cast<size_t>(c_a)]);
            r.tokens_b = split_ws(cols[static_cast<size_t>(c_b)]);
            r.label = cols[static_cast<size_t>(c_l)];
            if (r.label != "0" && r.label != "1")
                throw DataError(path + " line " + std::to_string(lineno) + ": label '" + r.label +
                                "' is not 0 or 1");
            rows.push_back(std::move(r));
        }
        return rows;
    };
    for (const char* split : {"train", "dev", "test"})
        emit_split(out_dir, split, read_file(input_dir + "/" + split + ".tsv"), trees_dir, log);
}

inline void prepare_corpus(Task task, const std::string& input, const std::string& out_dir,
                           const std::string& trees_dir, std::ostream* log = &std::cerr) {
    switch (task) {
        case Task::Sick: prepare_sick(input, out_dir, trees_dir, log); return;
        case Task::Msrp: prepare_msrp(input, out_dir, trees_dir, log); return;
        case Task::Ai2: prepare_ai2(input, out_dir, trees_dir, log); return;
    }
}

}  // namespace treeattn
