#pragma once

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "treeattn/errors.hpp"
#include "treeattn/train.hpp"

namespace treeattn {

// Config files are plain "key = value" lines; '#' starts a comment, blank
// lines are ignored, later occurrences of a key win. CLI flags override any
// file value.

inline std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::map<std::string, std::string> parse_config_text(const std::string& text, const std::string& where) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        lineno++;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(where + " line " + std::to_string(lineno) + ": expected 'key = value', got '" + line +
                              "'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError(where + " line " + std::to_string(lineno) + ": empty key");
        kv[key] = value;
    }
    return kv;
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), path);
}

// Recognized keys mirror TrainConfig: task, variant, learning-rate,
// batch-size, l2-lambda, dropout, epochs, hidden-dim, embedding-dim, mlp-dim,
// seed, threads.
inline void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
    for (const auto& [key, value] : kv) {
        try {
            if (key == "task")
                cfg.task = parse_task(value);
            else if (key == "variant")
                cfg.variant = VariantTag::parse(value);
            else if (key == "learning-rate")
                cfg.learning_rate = std::stod(value);
            else if (key == "batch-size")
                cfg.batch_size = std::stoi(value);
            else if (key == "l2-lambda")
                cfg.l2_lambda = std::stod(value);
            else if (key == "dropout")
                cfg.dropout_rate = std::stod(value);
            else if (key == "epochs")
                cfg.epochs = std::stoi(value);
            else if (key == "hidden-dim")
                cfg.hidden_dim = std::stoi(value);
            else if (key == "embedding-dim")
                cfg.embedding_dim = std::stoi(value);
            else if (key == "mlp-dim")
                cfg.mlp_dim = std::stoi(value);
            else if (key == "seed")
                cfg.seed = std::stoull(value);
            else if (key == "threads")
                cfg.threads = std::stoi(value);
            else
                throw ConfigError("unknown config key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("config key '" + key + "': cannot parse value '" + value + "'");
        }
    }
}

}  // namespace treeattn
