#include "valresp/nn/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "valresp/error.hpp"
#include "valresp/rng.hpp"

namespace valresp::nn {

std::string params_checksum(const ModelParams& params) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    params.visit([&h](std::string_view name, const Tensor& t, bool) {
        for (unsigned char c : name) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        for (double v : t.data) {
            unsigned char bytes[sizeof(double)];
            std::memcpy(bytes, &v, sizeof v);
            for (unsigned char b : bytes) {
                h ^= b;
                h *= 0x100000001b3ULL;
            }
        }
    });
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string Checkpoint::id() const { return task + "-" + params_checksum(model.params()); }

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
    nlohmann::json params = nlohmann::json::object();
    ckpt.model.params().visit([&params](std::string_view name, const Tensor& t, bool) {
        params[std::string(name)] = {{"shape", {t.rows, t.cols}}, {"data", t.data}};
    });
    return {{"format", "valresp-checkpoint"},
            {"format_version", kCheckpointFormatVersion},
            {"task", ckpt.task},
            {"config", ckpt.model.config().to_json()},
            {"vocab_ref", ckpt.vocab.fingerprint()},
            {"vocab", ckpt.vocab.to_json()},
            {"params", params},
            {"checksum", params_checksum(ckpt.model.params())},
            {"train_summary", ckpt.train_summary}};
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
    try {
        if (!doc.is_object() || doc.value("format", std::string()) != "valresp-checkpoint") {
            throw DataError("corrupt checkpoint: not a checkpoint document");
        }
        const int version = doc.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion) {
            throw DataError("checkpoint format_version " + std::to_string(version) + " is not supported (expected " +
                            std::to_string(kCheckpointFormatVersion) + ")");
        }
        const auto config = ModelConfig::from_json(doc.at("config"));
        auto vocab = text::Vocabulary::from_json(doc.at("vocab"));
        if (doc.at("vocab_ref").get<std::string>() != vocab.fingerprint()) {
            throw DataError("corrupt checkpoint: vocab_ref does not match the embedded vocabulary");
        }
        if (vocab.size() != config.vocab_size) {
            throw DataError("checkpoint vocabulary size does not match model config");
        }
        ModelParams params;
        const auto& pj = doc.at("params");
        const auto read = [&pj](const char* name, Tensor& t) {
            if (!pj.contains(name)) return;
            const auto& entry = pj.at(name);
            const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
            if (shape.size() != 2) throw DataError(std::string("corrupt checkpoint: bad shape for ") + name);
            t = Tensor(shape[0], shape[1]);
            const auto& data = entry.at("data");
            if (data.size() != t.data.size()) {
                throw DataError(std::string("corrupt checkpoint: ") + name + " has " + std::to_string(data.size()) +
                                " values, expected " + std::to_string(t.data.size()));
            }
            for (std::size_t i = 0; i < t.data.size(); ++i) t.data[i] = data[i].get<double>();
        };
        read("embedding", params.embedding);
        read("position", params.position);
        read("attn_q", params.attn_q);
        read("attn_k", params.attn_k);
        read("attn_v", params.attn_v);
        read("hidden_w", params.hidden_w);
        read("hidden_b", params.hidden_b);
        read("out_w", params.out_w);
        read("out_b", params.out_b);
        if (params_checksum(params) != doc.at("checksum").get<std::string>()) {
            throw DataError("corrupt checkpoint: parameter checksum mismatch");
        }
        Checkpoint ckpt{doc.at("task").get<std::string>(), Model(config, std::move(params)), std::move(vocab),
                        doc.value("train_summary", nlohmann::json::object())};
        return ckpt;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw DataError(std::string("corrupt checkpoint: ") + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw RuntimeError("cannot write checkpoint " + path.string());
    out << checkpoint_to_json(ckpt).dump();
    if (!out) throw RuntimeError("write failure on checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open checkpoint " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw DataError("corrupt checkpoint " + path.string() + ": " + e.what());
    }
    return checkpoint_from_json(doc);
}

}  // namespace valresp::nn
