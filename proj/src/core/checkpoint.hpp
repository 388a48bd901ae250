#pragma once

#include <filesystem>

#include <json.hpp>

#include "core/model.hpp"

namespace usrob::model {

// Single-file archive: a JSON header (model config, format version, free-form
// metadata) followed by named weight arrays stored as raw little-endian
// float64 bytes. load(save(params)) round-trips bitwise.
//
// Layout: "URCK" | u32 version | u64 header_len | header JSON | u32 n_arrays
//         | per array: u32 name_len, name, u8 dtype (0=f64), u32 ndim,
//           u64 dims..., f64 payload
inline constexpr std::uint32_t kCheckpointVersion = 1;

nlohmann::json model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct Checkpoint {
    ModelParams params;
    nlohmann::json meta;        // free-form; training stores {"epoch": k}
    NamedTensors extra_arrays;  // e.g. optimizer state alongside the weights
};

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params,
                     const nlohmann::json& meta = nlohmann::json::object(),
                     const NamedTensors& extra_arrays = {});

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace usrob::model
