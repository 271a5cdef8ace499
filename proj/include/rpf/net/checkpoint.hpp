#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rpf/net/model.hpp"

#include <json.hpp>

namespace rpf::net {

/// Versioned binary container: a JSON header (config + tensor directory)
/// followed by the raw little-endian doubles of each named array. Numeric
/// payloads never pass through text, so save/load round-trips bit-exactly.
struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add(const std::string& name, const Tensor& t) { tensors.emplace_back(name, t); }
    const Tensor* find(const std::string& name) const {
        for (const auto& [k, v] : tensors)
            if (k == name) return &v;
        return nullptr;
    }
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);  // throws std::runtime_error

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Serializes model parameters + buffers under the given name prefix.
void pack_model(Checkpoint& ckpt, RpfNet& model, const std::string& prefix = "model.");
void unpack_model(const Checkpoint& ckpt, RpfNet& model, const std::string& prefix = "model.");

void pack_decoder(Checkpoint& ckpt, AuxDecoder& dec, const std::string& prefix = "aux.");
void unpack_decoder(const Checkpoint& ckpt, AuxDecoder& dec, const std::string& prefix = "aux.");

/// Convenience: a checkpoint holding just a model (config in meta["model"]).
void save_model(const std::string& path, RpfNet& model);
RpfNet load_model(const std::string& path);

}  // namespace rpf::net
