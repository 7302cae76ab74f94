#pragma once

#include <json.hpp>

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

#include "streampoint/model.hpp"

namespace streampoint::net {

// Container format, shared by model checkpoints and optimizer state:
//   bytes 0..3   magic "S3R1"
//   bytes 4..7   version, little-endian u32 (currently 1)
//   bytes 8..11  header length in bytes, little-endian u32
//   header       JSON: {"meta": {...}, "params": [{name, shape, offset,
//                nbytes}, ...]} with offsets ascending from payload start
//   payload      raw little-endian float32
// The reader rejects wrong magic, wrong version, and any length that does
// not match the manifest exactly.
struct ArchiveEntry {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct TensorArchive {
    nlohmann::json meta;
    std::vector<ArchiveEntry> entries;  // sorted by name on write
};

void write_archive(const std::filesystem::path& path, const TensorArchive& archive);
TensorArchive read_archive(const std::filesystem::path& path);

nlohmann::json config_to_json(const ModelConfig& cfg);
ModelConfig config_from_json(const nlohmann::json& j);

template <typename S>
void save_model(const std::filesystem::path& path, const Model<S>& model) {
    TensorArchive a;
    a.meta = nlohmann::json{{"kind", "model"}, {"config", config_to_json(model.cfg)}};
    for (const auto& [name, t] : model.params.entries) {
        ArchiveEntry e;
        e.name = name;
        e.shape = t.shape();
        e.data.resize(static_cast<std::size_t>(t.size()));
        for (std::int64_t i = 0; i < t.size(); ++i)
            e.data[i] = static_cast<float>(t.data()[i]);
        a.entries.push_back(std::move(e));
    }
    write_archive(path, a);
}

template <typename S>
Model<S> load_model(const std::filesystem::path& path) {
    TensorArchive a = read_archive(path);
    if (a.meta.value("kind", "") != "model") throw FormatError("checkpoint: not a model file");
    ModelConfig cfg;
    try {
        cfg = config_from_json(a.meta.at("config"));
    } catch (const nlohmann::json::exception&) {
        throw FormatError("checkpoint: missing embedded config");
    } catch (const ConfigError& e) {
        throw FormatError("checkpoint: bad embedded config: " + std::string(e.what()));
    }
    Model<S> model(cfg);
    if (a.entries.size() != model.params.entries.size())
        throw FormatError("checkpoint: parameter count mismatch");
    for (auto& [name, t] : model.params.entries) {
        const ArchiveEntry* found = nullptr;
        for (const auto& e : a.entries)
            if (e.name == name) {
                found = &e;
                break;
            }
        if (!found) throw FormatError("checkpoint: missing parameter " + name);
        if (found->shape != t.shape())
            throw FormatError("checkpoint: shape mismatch for " + name);
        for (std::int64_t i = 0; i < t.size(); ++i)
            t.mutable_val()[i] = static_cast<S>(found->data[i]);
    }
    return model;
}

}  // namespace streampoint::net
