#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "valresp/nn/model.hpp"
#include "valresp/text.hpp"

namespace valresp::nn {

inline constexpr int kCheckpointFormatVersion = 1;

// A trained model together with the vocabulary it was trained on.
struct Checkpoint {
    std::string task;  // "mlm", "timing" or "emotion"
    Model model;
    text::Vocabulary vocab;
    nlohmann::json train_summary = nlohmann::json::object();

    // Short identifier: task plus parameter checksum.
    std::string id() const;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
// DataError on unreadable/corrupt files and on format_version mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string params_checksum(const ModelParams& params);

}  // namespace valresp::nn
