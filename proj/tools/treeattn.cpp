#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "treeattn/treeattn.hpp"

namespace ta = treeattn;
using nlohmann::ordered_json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

// Config file plus per-key flag overrides; flags win over the file, the file
// wins over built-in defaults.
struct CommonConfig {
    std::string config_path;
    std::map<std::string, std::string> overrides;

    ta::TrainConfig resolve(ta::TrainConfig defaults = {}) const {
        ta::TrainConfig cfg = defaults;
        if (!config_path.empty()) ta::apply_config(cfg, ta::parse_config_file(config_path));
        ta::apply_config(cfg, overrides);
        cfg.validate();
        return cfg;
    }
};

void add_config_flags(CLI::App* cmd, CommonConfig& cc) {
    cmd->add_option("--config", cc.config_path, "key = value config file");
    static const std::vector<std::pair<const char*, const char*>> keys = {
        {"task", "sick | msrp | ai2"},
        {"variant", "seq-lstm | seq-gru | tree-lstm | tree-gru | att-tree-lstm | att-tree-gru"},
        {"learning-rate", "adagrad learning rate"},
        {"batch-size", "minibatch size"},
        {"l2-lambda", "per-minibatch L2 strength"},
        {"dropout", "classifier dropout rate"},
        {"epochs", "training epochs"},
        {"hidden-dim", "encoder hidden size"},
        {"embedding-dim", "word vector size"},
        {"mlp-dim", "classifier hidden size"},
        {"seed", "rng seed"},
        {"threads", "evaluation threads (0 = all cores)"},
    };
    for (const auto& [key, help] : keys) {
        const std::string k = key;
        cmd->add_option_function<std::string>(
            "--" + k, [&cc, k](const std::string& v) { cc.overrides[k] = v; }, help);
    }
}

std::ostream& open_out(std::ofstream& file, const std::string& path) {
    if (path.empty()) return std::cout;
    file.open(path);
    if (!file) throw ta::DataError("cannot write " + path);
    return file;
}

std::vector<ta::DatasetExample> load_split_for(ta::LoadedCheckpoint& ck, const std::string& data_dir,
                                               const std::string& split) {
    if (split != "train" && split != "dev" && split != "test")
        throw ta::ConfigError("unknown split '" + split + "' (expected train, dev or test)");
    ta::DatasetSplits splits = ta::load_dataset(ck.task, data_dir, ck.seed);
    std::vector<ta::DatasetExample>& sel =
        split == "train" ? splits.train : split == "dev" ? splits.dev : splits.test;
    if (sel.empty()) throw ta::DataError("split '" + split + "' of " + data_dir + " is empty");
    ta::resolve_ids(sel, ck.model.vocab);
    return std::move(sel);
}

void run_train(const CommonConfig& cc, const std::string& data_dir, const std::string& embeddings_path,
               const std::string& model_out, const std::string& history_path) {
    const ta::TrainConfig cfg = cc.resolve();
    ta::DatasetSplits splits = ta::load_dataset(cfg.task, data_dir, cfg.seed);
    ta::Vocabulary vocab = ta::build_vocabulary(splits);
    ta::EmbeddingTable emb = ta::EmbeddingTable::load(embeddings_path, vocab, cfg.embedding_dim, cfg.seed);
    if (embeddings_path.empty())
        std::cerr << "warning: no --embeddings file; every row drawn uniform(-0.05, 0.05)\n";
    std::cerr << "vocabulary " << vocab.size() << " tokens (" << emb.oov_count()
              << " without pretrained vectors)\n";
    ta::SentencePairModel model(cfg.variant, cfg.hidden_dim, cfg.mlp_dim, ta::task_num_classes(cfg.task),
                                std::move(vocab), std::move(emb), cfg.seed);
    const ta::FitResult res = ta::fit(model, splits, cfg, &std::cerr);
    ta::save_checkpoint(model_out, model, cfg.task, cfg.seed);

    std::ofstream file;
    std::ostream& out = open_out(file, history_path);
    for (const ta::EpochReport& r : res.history) {
        ordered_json j;
        j["epoch"] = r.epoch + 1;
        j["train_loss"] = r.train_loss;
        j["dev_metric"] = r.dev_metric;
        out << j.dump() << "\n";
    }
    if (res.best_epoch >= 0)
        std::cerr << "best epoch " << (res.best_epoch + 1) << " (dev-metric " << res.best_metric << "); wrote "
                  << model_out << "\n";
    else
        std::cerr << "no epochs ran; wrote the initial model to " << model_out << "\n";
}

void run_evaluate(const std::string& model_path, const std::string& data_dir, const std::string& split,
                  const std::string& out_path, int threads) {
    ta::LoadedCheckpoint ck = ta::load_checkpoint(model_path);
    const std::vector<ta::DatasetExample> data = load_split_for(ck, data_dir, split);
    const std::vector<ta::PairPrediction> preds = ta::predict_all(ck.model, data, threads);

    std::ofstream file;
    std::ostream& out = open_out(file, out_path);
    auto record = [&](const char* metric, std::optional<double> value) {
        ordered_json j;
        j["task"] = ta::task_name(ck.task);
        j["split"] = split;
        j["metric"] = metric;
        if (value)
            j["value"] = *value;
        else {
            j["value"] = nullptr;
            j["error"] = "zero variance";
        }
        out << j.dump() << "\n";
    };
    if (ck.model.similarity()) {
        std::vector<double> yhat, gold;
        yhat.reserve(preds.size());
        gold.reserve(preds.size());
        for (size_t i = 0; i < preds.size(); ++i) {
            yhat.push_back(preds[i].score);
            gold.push_back(data[i].label);
        }
        record("pearson-r", ta::pearson(yhat, gold));
        record("spearman-rho", ta::spearman(yhat, gold));
        record("mse", ta::mse(yhat, gold));
    } else {
        std::vector<int> yhat, gold;
        yhat.reserve(preds.size());
        gold.reserve(preds.size());
        for (size_t i = 0; i < preds.size(); ++i) {
            yhat.push_back(preds[i].label);
            gold.push_back(static_cast<int>(data[i].label));
        }
        const ta::BinaryScore s = ta::accuracy_f1(yhat, gold);
        record("accuracy", s.accuracy);
        record("f1", s.f1);
    }
}

void run_predict(const std::string& model_path, const std::string& data_dir, const std::string& split,
                 const std::string& out_path, int threads) {
    ta::LoadedCheckpoint ck = ta::load_checkpoint(model_path);
    const std::vector<ta::DatasetExample> data = load_split_for(ck, data_dir, split);
    const std::vector<ta::PairPrediction> preds = ta::predict_all(ck.model, data, threads);

    std::ofstream file;
    std::ostream& out = open_out(file, out_path);
    for (size_t i = 0; i < preds.size(); ++i) {
        ordered_json j;
        j["index"] = i;
        if (ck.model.similarity())
            j["score"] = preds[i].score;
        else
            j["label"] = preds[i].label;
        j["gold"] = data[i].label;
        j["distribution"] = preds[i].distribution;
        out << j.dump() << "\n";
    }
}

ta::DatasetExample synthetic_example(bool similarity) {
    ta::DatasetExample ex;
    ex.tokens_a = {"a0", "a1", "a2"};
    ex.tokens_b = {"b0", "b1", "a1"};
    ex.ids_a = {0, 1, 2};
    ex.ids_b = {3, 4, 1};
    ex.tree_a.nodes.resize(3);
    ex.tree_b.nodes.resize(3);
    for (int i = 0; i < 3; ++i) {
        ex.tree_a.nodes[static_cast<size_t>(i)].token = i;
        ex.tree_b.nodes[static_cast<size_t>(i)].token = i;
    }
    ex.tree_a.nodes[1].children = {0, 2};  // root with two children
    ex.tree_a.root = 1;
    ex.tree_b.nodes[2].children = {1};  // three-node chain
    ex.tree_b.nodes[1].children = {0};
    ex.tree_b.root = 2;
    ex.tree_a.validate();
    ex.tree_b.validate();
    ex.label = similarity ? 3.7 : 1.0;
    return ex;
}

ta::SentencePairModel synthetic_model(const ta::TrainConfig& cfg) {
    ta::Vocabulary vocab;
    for (const char* tok : {"a0", "a1", "a2", "b0", "b1"}) vocab.add(tok);
    ta::EmbeddingTable emb = ta::EmbeddingTable::load("", vocab, cfg.embedding_dim, cfg.seed + 17);
    return ta::SentencePairModel(cfg.variant, cfg.hidden_dim, cfg.mlp_dim, ta::task_num_classes(cfg.task),
                                 std::move(vocab), std::move(emb), cfg.seed);
}

void run_gradcheck(const CommonConfig& cc, double step, double tolerance, const std::string& out_path) {
    ta::TrainConfig defaults;  // small dims keep the finite differences fast
    defaults.hidden_dim = 6;
    defaults.embedding_dim = 5;
    defaults.mlp_dim = 4;
    const ta::TrainConfig cfg = cc.resolve(defaults);
    ta::SentencePairModel model = synthetic_model(cfg);
    const ta::DatasetExample ex = synthetic_example(ta::is_similarity_task(cfg.task));
    auto loss = [&](bool with_grad) {
        ta::Tape t;
        ta::ModelNodes n = ta::ModelNodes::bind(t, model);
        const ta::Value l = ta::example_loss(t, n, model, ex);
        if (with_grad) t.backward(l);
        return t.value(l)[0];
    };
    const ta::GradCheckReport report = ta::finite_difference_check(loss, model.parameters(), step, tolerance);

    std::ofstream file;
    std::ostream& out = open_out(file, out_path);
    for (const ta::GradCheckEntry& e : report.per_param) {
        ordered_json j;
        j["param"] = e.param;
        j["max_rel_err"] = e.max_rel_err;
        j["max_abs_diff"] = e.max_abs_diff;
        j["pass"] = e.pass;
        out << j.dump() << "\n";
    }
    ordered_json j;
    j["variant"] = cfg.variant.str();
    j["worst_rel_err"] = report.worst_rel_err;
    j["all_pass"] = report.all_pass;
    out << j.dump() << "\n";
    if (!report.all_pass)
        throw ta::NumericError("gradient check failed for " + cfg.variant.str() + " (worst relative error " +
                               std::to_string(report.worst_rel_err) + ")");
}

void run_attn_export(const std::string& model_path, const std::string& data_dir, const std::string& split,
                     const std::string& out_path, int threads) {
    ta::LoadedCheckpoint ck = ta::load_checkpoint(model_path);
    if (!ck.model.variant.attentive())
        throw ta::ConfigError("model variant " + ck.model.variant.str() +
                              " records no attention; train att-tree-lstm or att-tree-gru to export weights");
    const std::vector<ta::DatasetExample> data = load_split_for(ck, data_dir, split);
    const std::vector<ta::PairPrediction> preds = ta::predict_all(ck.model, data, threads, true);

    std::ofstream file;
    std::ostream& out = open_out(file, out_path);
    for (size_t i = 0; i < preds.size(); ++i) {
        auto emit = [&](const char* side, const std::vector<std::string>& toks,
                        const std::vector<ta::AttentionRecord>& recs) {
            for (const ta::AttentionRecord& r : recs) {
                ordered_json j;
                j["example"] = i;
                j["sentence"] = side;
                j["head_index"] = r.head;
                j["head"] = toks[static_cast<size_t>(r.head)];
                j["child_indices"] = r.children;
                ordered_json kids = ordered_json::array();
                for (int c : r.children) kids.push_back(toks[static_cast<size_t>(c)]);
                j["children"] = kids;
                j["alphas"] = r.alphas;
                out << j.dump() << "\n";
            }
        };
        emit("a", data[i].tokens_a, preds[i].attention_a);
        emit("b", data[i].tokens_b, preds[i].attention_b);
    }
}

void run_buckets(const std::string& model_path, const std::string& data_dir, const std::string& split,
                 const std::string& key, const std::string& edges_csv, const std::string& out_path, int threads) {
    if (key != "mean-length" && key != "ngram-overlap")
        throw ta::ConfigError("unknown bucket key '" + key + "' (expected mean-length or ngram-overlap)");
    std::vector<double> edges;
    for (const std::string& part : ta::split_on(edges_csv, ',')) {
        try {
            edges.push_back(std::stod(ta::trim(part)));
        } catch (const std::exception&) {
            throw ta::ConfigError("cannot parse bucket edge '" + part + "'");
        }
    }
    ta::LoadedCheckpoint ck = ta::load_checkpoint(model_path);
    const std::vector<ta::DatasetExample> data = load_split_for(ck, data_dir, split);
    const std::vector<ta::PairPrediction> preds = ta::predict_all(ck.model, data, threads);

    std::vector<ta::BucketInput> rows(data.size());
    for (size_t i = 0; i < data.size(); ++i) {
        rows[i].key = key == "mean-length"
                          ? 0.5 * static_cast<double>(data[i].tokens_a.size() + data[i].tokens_b.size())
                          : ta::ngram_overlap_score(data[i].tokens_a, data[i].tokens_b);
        rows[i].pred = ck.model.similarity() ? preds[i].score : static_cast<double>(preds[i].label);
        rows[i].gold = data[i].label;
    }
    const std::vector<ta::BucketRow> report = ta::bucket_report(rows, edges, ck.model.similarity());

    std::ofstream file;
    std::ostream& out = open_out(file, out_path);
    for (const ta::BucketRow& b : report) {
        ordered_json j;
        j["task"] = ta::task_name(ck.task);
        j["split"] = split;
        j["key"] = key;
        j["lo"] = b.lo;
        j["hi"] = b.hi;
        j["count"] = b.count;
        j["metric"] = ck.model.similarity() ? "pearson-r" : "accuracy";
        if (b.metric)
            j["value"] = *b.metric;
        else
            j["value"] = nullptr;
        out << j.dump() << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Attentive tree-structured recurrent encoders for sentence-pair modelling"};
    app.require_subcommand(1);

    auto* prepare = app.add_subcommand("prepare", "convert a raw corpus distribution to the canonical layout");
    CommonConfig p_cc;
    std::string p_input, p_output, p_trees;
    add_config_flags(prepare, p_cc);
    prepare->add_option("--input", p_input, "raw distribution file or directory")->required();
    prepare->add_option("--output", p_output, "canonical dataset directory to write")->required();
    prepare->add_option("--trees", p_trees, "directory holding parsed <split>.{a,b}.conll files");
    prepare->callback([&] { ta::prepare_corpus(p_cc.resolve().task, p_input, p_output, p_trees); });

    auto* train = app.add_subcommand("train", "train a model and keep the best-dev checkpoint");
    CommonConfig t_cc;
    std::string t_data, t_emb, t_model = "model.tatn", t_history;
    add_config_flags(train, t_cc);
    train->add_option("--data", t_data, "canonical dataset directory")->required();
    train->add_option("--embeddings", t_emb, "pretrained word vectors, one 'token v1 .. vD' line each");
    train->add_option("--output", t_model, "checkpoint path to write");
    train->add_option("--history", t_history, "write per-epoch records here instead of stdout");
    train->callback([&] { run_train(t_cc, t_data, t_emb, t_model, t_history); });

    auto* evaluate = app.add_subcommand("evaluate", "task metrics for a checkpoint on one split");
    CommonConfig e_cc;
    std::string e_model, e_data, e_split = "test", e_out;
    add_config_flags(evaluate, e_cc);
    evaluate->add_option("--model", e_model, "checkpoint file")->required();
    evaluate->add_option("--data", e_data, "canonical dataset directory")->required();
    evaluate->add_option("--split", e_split, "train | dev | test");
    evaluate->add_option("--out", e_out, "output file (default stdout)");
    evaluate->callback([&] { run_evaluate(e_model, e_data, e_split, e_out, e_cc.resolve().threads); });

    auto* predict = app.add_subcommand("predict", "per-example predictions for a checkpoint on one split");
    CommonConfig pr_cc;
    std::string pr_model, pr_data, pr_split = "test", pr_out;
    add_config_flags(predict, pr_cc);
    predict->add_option("--model", pr_model, "checkpoint file")->required();
    predict->add_option("--data", pr_data, "canonical dataset directory")->required();
    predict->add_option("--split", pr_split, "train | dev | test");
    predict->add_option("--out", pr_out, "output file (default stdout)");
    predict->callback([&] { run_predict(pr_model, pr_data, pr_split, pr_out, pr_cc.resolve().threads); });

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of full-loss gradients");
    CommonConfig g_cc;
    double g_step = 1e-5, g_tol = 1e-4;
    std::string g_out;
    add_config_flags(gradcheck, g_cc);
    gradcheck->add_option("--step", g_step, "central-difference step, in [1e-6, 1e-4]");
    gradcheck->add_option("--tolerance", g_tol, "max relative error per entry");
    gradcheck->add_option("--out", g_out, "output file (default stdout)");
    gradcheck->callback([&] { run_gradcheck(g_cc, g_step, g_tol, g_out); });

    auto* attn = app.add_subcommand("attn-export", "per-node attention weights as line records");
    CommonConfig a_cc;
    std::string a_model, a_data, a_split = "test", a_out;
    add_config_flags(attn, a_cc);
    attn->add_option("--model", a_model, "checkpoint file (attentive variants only)")->required();
    attn->add_option("--data", a_data, "canonical dataset directory")->required();
    attn->add_option("--split", a_split, "train | dev | test");
    attn->add_option("--out", a_out, "output file (default stdout)");
    attn->callback([&] { run_attn_export(a_model, a_data, a_split, a_out, a_cc.resolve().threads); });

    auto* buckets = app.add_subcommand("buckets", "per-bucket metric table over a pair statistic");
    CommonConfig b_cc;
    std::string b_model, b_data, b_split = "test", b_key = "mean-length", b_edges, b_out;
    add_config_flags(buckets, b_cc);
    buckets->add_option("--model", b_model, "checkpoint file")->required();
    buckets->add_option("--data", b_data, "canonical dataset directory")->required();
    buckets->add_option("--split", b_split, "train | dev | test");
    buckets->add_option("--key", b_key, "mean-length | ngram-overlap");
    buckets->add_option("--edges", b_edges, "comma-separated ascending bucket edges")->required();
    buckets->add_option("--out", b_out, "output file (default stdout)");
    buckets->callback(
        [&] { run_buckets(b_model, b_data, b_split, b_key, b_edges, b_out, b_cc.resolve().threads); });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ta::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const ta::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const ta::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
