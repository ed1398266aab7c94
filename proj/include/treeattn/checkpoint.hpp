#pragma once

#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "treeattn/errors.hpp"
#include "treeattn/model.hpp"

namespace treeattn {

// Checkpoint layout (little-endian):
//   "TATN" | uint32 format version | uint64 header length | JSON header |
//   raw doubles: embedding matrix, then every trainable parameter in
//   model.parameters() order (names and shapes are listed in the header).

constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline std::string hash_hex(std::uint64_t h) {
    std::ostringstream os;
    os << std::hex << h;
    return os.str();
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, SentencePairModel& model, Task task, std::uint64_t seed) {
    nlohmann::json header;
    header["format"] = kCheckpointVersion;
    header["variant"] = model.variant.str();
    header["task"] = task_name(task);
    header["seed"] = seed;
    header["hidden"] = model.hidden;
    header["mlp_dim"] = model.mlp_dim;
    header["num_classes"] = model.num_classes;
    header["embedding_dim"] = model.embeddings.dim();
    header["vocab"] = model.vocab.tokens();
    header["vocab_hash"] = detail::hash_hex(model.vocab.hash());
    header["oov_count"] = model.embeddings.oov_count();
    std::vector<int> flags;
    flags.reserve(static_cast<size_t>(model.vocab.size()));
    for (int i = 0; i < model.vocab.size(); ++i) flags.push_back(model.embeddings.is_pretrained(i) ? 1 : 0);
    header["pretrained"] = flags;

    const std::vector<Parameter*> params = model.parameters();
    nlohmann::json plist = nlohmann::json::array();
    for (const Parameter* p : params) plist.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    header["params"] = plist;

    const std::string hbytes = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write checkpoint: " + path);
    out.write("TATN", 4);
    const std::uint32_t version = kCheckpointVersion;
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    const std::uint64_t hlen = hbytes.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    out.write(hbytes.data(), static_cast<std::streamsize>(hbytes.size()));
    auto write_tensor = [&out](const Tensor& t) {
        out.write(reinterpret_cast<const char*>(t.data()),
                  static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.size())));
    };
    write_tensor(model.embeddings.matrix());
    for (const Parameter* p : params) write_tensor(p->value);
    if (!out) throw DataError("failed while writing checkpoint: " + path);
}

struct LoadedCheckpoint {
    SentencePairModel model;
    Task task = Task::Sick;
    std::uint64_t seed = 0;  // seed used at training time (pins the msrp dev cut)
};

inline LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint: " + path);
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::string(magic, 4) != "TATN") throw DataError(path + ": not a checkpoint file");
    std::uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof version);
    if (!in || version != kCheckpointVersion)
        throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    if (!in || hlen == 0 || hlen > (1ull << 30)) throw DataError(path + ": corrupt checkpoint header length");
    std::string hbytes(hlen, '\0');
    in.read(hbytes.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw DataError(path + ": truncated checkpoint header");

    const nlohmann::json header = nlohmann::json::parse(hbytes, nullptr, false);
    if (header.is_discarded()) throw DataError(path + ": corrupt checkpoint header");

    LoadedCheckpoint loaded;
    try {
        const VariantTag variant = VariantTag::parse(header.at("variant").get<std::string>());
        loaded.task = parse_task(header.at("task").get<std::string>());
        loaded.seed = header.at("seed").get<std::uint64_t>();
        const int hidden = header.at("hidden").get<int>();
        const int mlp_dim = header.at("mlp_dim").get<int>();
        const int num_classes = header.at("num_classes").get<int>();
        const int dim = header.at("embedding_dim").get<int>();

        Vocabulary vocab;
        for (const auto& tok : header.at("vocab")) vocab.add(tok.get<std::string>());
        if (detail::hash_hex(vocab.hash()) != header.at("vocab_hash").get<std::string>())
            throw DataError(path + ": vocabulary hash mismatch");

        const std::vector<int> flags = header.at("pretrained").get<std::vector<int>>();
        if (static_cast<int>(flags.size()) != vocab.size())
            throw DataError(path + ": pretrained flag count differs from vocabulary size");

        Tensor matrix({std::max(vocab.size(), 1), dim});
        in.read(reinterpret_cast<char*>(matrix.data()),
                static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(matrix.size())));
        if (!in) throw DataError(path + ": truncated embedding payload");
        std::vector<bool> pre;
        pre.reserve(flags.size());
        for (int f : flags) pre.push_back(f != 0);
        EmbeddingTable emb =
            EmbeddingTable::from_matrix(std::move(matrix), std::move(pre), header.at("oov_count").get<int>());

        loaded.model =
            SentencePairModel(variant, hidden, mlp_dim, num_classes, std::move(vocab), std::move(emb), 0);
        const std::vector<Parameter*> params = loaded.model.parameters();
        const nlohmann::json& plist = header.at("params");
        if (plist.size() != params.size())
            throw DataError(path + ": checkpoint lists " + std::to_string(plist.size()) + " parameters, model has " +
                            std::to_string(params.size()));
        for (size_t k = 0; k < params.size(); ++k) {
            const std::string name = plist[k].at("name").get<std::string>();
            const std::vector<int> shape = plist[k].at("shape").get<std::vector<int>>();
            if (name != params[k]->name || shape != params[k]->value.shape())
                throw DataError(path + ": parameter " + std::to_string(k) + " is " + name + ", expected " +
                                params[k]->name);
            in.read(reinterpret_cast<char*>(params[k]->value.data()),
                    static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(params[k]->value.size())));
            if (!in) throw DataError(path + ": truncated payload at parameter " + name);
        }
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path + ": malformed checkpoint header (" + e.what() + ")");
    } catch (const ConfigError& e) {
        throw DataError(path + ": " + e.what());
    }
    return loaded;
}

}  // namespace treeattn
