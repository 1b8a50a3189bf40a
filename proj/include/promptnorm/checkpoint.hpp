#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "promptnorm/errors.hpp"
#include "promptnorm/harness.hpp"
#include "promptnorm/prompt.hpp"

namespace promptnorm {

inline constexpr int kCheckpointSchemaVersion = 1;

/// Serializable snapshot of a training run: the prompt plus the seeds that
/// regenerate its frozen encoders and task.
struct Checkpoint {
    int schema_version = kCheckpointSchemaVersion;
    std::size_t prompt_len = 0;
    std::size_t embed_dim = 0;
    std::vector<std::vector<double>> rows;
    std::uint64_t task_seed = 0;
    std::uint64_t encoder_seed = 0;
    std::size_t epoch = 0;
    LossMode mode = LossMode::ce_only;
};

inline Checkpoint make_checkpoint(const SoftPrompt& prompt, const TrainConfig& cfg,
                                  std::size_t epoch) {
    Checkpoint ck;
    ck.prompt_len = prompt.length();
    ck.embed_dim = prompt.dim();
    ck.rows.reserve(prompt.length());
    for (std::size_t j = 1; j <= prompt.length(); ++j) {
        ck.rows.push_back(prompt.row(j));
    }
    ck.task_seed = cfg.task_seed;
    ck.encoder_seed = cfg.model.encoder_seed;
    ck.epoch = epoch;
    ck.mode = cfg.mode;
    return ck;
}

inline SoftPrompt to_prompt(const Checkpoint& ck) {
    return SoftPrompt(ck.rows);
}

namespace detail {

/// Whole-file atomic write: stream to a sibling temp file, then rename over
/// the target so readers never observe a partial document.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write failed for '" + tmp.string() + "'");
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " +
                          ec.message());
}

inline std::string read_text(const std::filesystem::path& path, const char* what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(std::string(what) + " not found: '" + path.string() + "'");
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return content;
}

inline LossMode mode_from_string(const std::string& s) {
    if (s == "ce") return LossMode::ce_only;
    if (s == "pun") return LossMode::with_pun;
    if (s == "pan") return LossMode::with_pan;
    if (s == "both") return LossMode::with_both;
    throw IoError("unknown loss mode '" + s + "'");
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    if (ck.rows.size() != ck.prompt_len) {
        throw ContractError("checkpoint row count does not match prompt_len");
    }
    for (const auto& row : ck.rows) {
        if (row.size() != ck.embed_dim) {
            throw ContractError("checkpoint row width does not match embed_dim");
        }
    }
    nlohmann::json j;
    j["schema_version"] = ck.schema_version;
    j["prompt_len"] = ck.prompt_len;
    j["embed_dim"] = ck.embed_dim;
    j["rows"] = ck.rows;
    j["task_seed"] = ck.task_seed;
    j["encoder_seed"] = ck.encoder_seed;
    j["epoch"] = ck.epoch;
    j["mode"] = to_string(ck.mode);
    detail::write_text_atomic(path, j.dump(2) + "\n");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    const std::string text = detail::read_text(path, "checkpoint");
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("cannot parse checkpoint '" + path + "': " + e.what());
    }
    if (!j.is_object() || !j.contains("schema_version") || !j["schema_version"].is_number()) {
        throw VersionError("checkpoint '" + path + "' lacks a schema_version field");
    }
    const int version = j["schema_version"].get<int>();
    if (version != kCheckpointSchemaVersion) {
        throw VersionError("checkpoint '" + path + "' has schema_version " +
                           std::to_string(version) + ", expected " +
                           std::to_string(kCheckpointSchemaVersion));
    }
    Checkpoint ck;
    try {
        ck.schema_version = version;
        ck.prompt_len = j.at("prompt_len").get<std::size_t>();
        ck.embed_dim = j.at("embed_dim").get<std::size_t>();
        ck.rows = j.at("rows").get<std::vector<std::vector<double>>>();
        ck.task_seed = j.at("task_seed").get<std::uint64_t>();
        ck.encoder_seed = j.at("encoder_seed").get<std::uint64_t>();
        ck.epoch = j.at("epoch").get<std::size_t>();
        ck.mode = detail::mode_from_string(j.at("mode").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw IoError("malformed checkpoint '" + path + "': " + e.what());
    }
    if (ck.rows.size() != ck.prompt_len) {
        throw IoError("checkpoint '" + path + "' row count does not match prompt_len");
    }
    for (const auto& row : ck.rows) {
        if (row.size() != ck.embed_dim) {
            throw IoError("checkpoint '" + path + "' row width does not match embed_dim");
        }
    }
    return ck;
}

}  // namespace promptnorm
