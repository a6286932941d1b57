#pragma once

#include <bit>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "params.hpp"

namespace iedr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian; big-endian hosts unsupported");

constexpr int kCheckpointVersion = 1;

/// Writes a checkpoint directory: manifest.json plus one flat little-endian
/// f64 array file per parameter.
inline void save_checkpoint(const std::filesystem::path& dir, const ParameterStore& store,
                            const std::string& config_hash) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["format_version"] = kCheckpointVersion;
    manifest["config_hash"] = config_hash;
    manifest["byte_order"] = "little-endian";
    manifest["dtype"] = "f64";
    auto& plist = manifest["parameters"] = nlohmann::json::array();
    for (const auto& p : store.all()) {
        std::string fname = p.name + ".bin";
        plist.push_back({{"name", p.name},
                         {"shape", p.value.tensor().shape},
                         {"group", p.group == Group::theta ? "theta" : "omega"},
                         {"file", fname}});
        std::ofstream out(dir / fname, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("checkpoint: cannot write " + (dir / fname).string());
        const auto& data = p.value.tensor().data;
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    std::ofstream mf(dir / "manifest.json", std::ios::trunc);
    if (!mf) throw std::runtime_error("checkpoint: cannot write manifest");
    mf << manifest.dump(2) << '\n';
}

/// Loads parameter tensors into an existing store. The store must already hold
/// parameters of matching names and shapes (built from the same config);
/// version or shape mismatches are rejected.
inline std::string load_checkpoint(const std::filesystem::path& dir, ParameterStore& store) {
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw std::runtime_error("checkpoint: missing manifest in " + dir.string());
    nlohmann::json manifest = nlohmann::json::parse(mf);
    if (manifest.at("format_version").get<int>() != kCheckpointVersion)
        throw std::runtime_error("checkpoint: unsupported format version");
    if (manifest.at("byte_order").get<std::string>() != "little-endian")
        throw std::runtime_error("checkpoint: unsupported byte order");
    const auto& plist = manifest.at("parameters");
    if (plist.size() != store.size())
        throw std::runtime_error("checkpoint: parameter count mismatch");
    for (const auto& entry : plist) {
        const auto name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
        const auto& param = store.at(name);
        if (param.value.tensor().shape != shape)
            throw std::runtime_error("checkpoint: shape mismatch for " + name);
        std::ifstream in(dir / entry.at("file").get<std::string>(), std::ios::binary);
        if (!in) throw std::runtime_error("checkpoint: missing array file for " + name);
        auto& data = const_cast<Tensor&>(param.value.tensor()).data;
        in.read(reinterpret_cast<char*>(data.data()),
                static_cast<std::streamsize>(data.size() * sizeof(double)));
        if (static_cast<std::size_t>(in.gcount()) != data.size() * sizeof(double))
            throw std::runtime_error("checkpoint: truncated array file for " + name);
    }
    return manifest.at("config_hash").get<std::string>();
}

} // namespace iedr
