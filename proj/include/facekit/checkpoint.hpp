#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "facekit/errors.hpp"
#include "facekit/model.hpp"

namespace facekit {

// Checkpoint layout:
//   bytes 0..7    magic "SIAMNET1"
//   bytes 8..11   u32 little-endian header length
//   header        UTF-8 JSON: {"version":1,"tensors":[{name,shape,offset}...],
//                              "batchnorm":[{name,eps,momentum}...]}
//   payload       raw little-endian float32, offsets are payload-relative bytes
//
// 40M parameters make text storage impractical; the JSON header keeps the
// file self-describing.
static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is little-endian float32");

namespace detail {

inline constexpr char kCheckpointMagic[8] = {'S', 'I', 'A', 'M', 'N', 'E', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TensorEntry {
    std::string name;
    std::vector<int> shape;
    const float* data;
    std::size_t count;
};

inline std::vector<TensorEntry> checkpoint_entries(SiameseParams& p) {
    std::vector<TensorEntry> out;
    for (const auto& prm : p.trainable_params())
        out.push_back({prm.name, prm.value->shape, prm.value->data.data(), prm.value->numel()});
    auto add_running = [&out](const std::string& prefix, BatchNormState& bn) {
        out.push_back({prefix + ".running_mean",
                       {bn.channels()},
                       bn.running_mean.data(),
                       bn.running_mean.size()});
        out.push_back({prefix + ".running_var",
                       {bn.channels()},
                       bn.running_var.data(),
                       bn.running_var.size()});
    };
    add_running("bn1", p.bn1);
    add_running("bn2", p.bn2);
    add_running("bn3", p.bn3);
    return out;
}

inline float* checkpoint_slot(SiameseParams& p, const std::string& name, std::size_t count) {
    for (const auto& prm : p.trainable_params())
        if (prm.name == name)
            return prm.value->numel() == count ? prm.value->data.data() : nullptr;
    auto running = [&](const std::string& prefix, BatchNormState& bn) -> float* {
        if (name == prefix + ".running_mean")
            return bn.running_mean.size() == count ? bn.running_mean.data() : nullptr;
        if (name == prefix + ".running_var")
            return bn.running_var.size() == count ? bn.running_var.data() : nullptr;
        return nullptr;
    };
    if (float* f = running("bn1", p.bn1)) return f;
    if (float* f = running("bn2", p.bn2)) return f;
    if (float* f = running("bn3", p.bn3)) return f;
    return nullptr;
}

}  // namespace detail

inline void save_checkpoint(SiameseParams& params, const std::string& path) {
    auto entries = detail::checkpoint_entries(params);
    nlohmann::ordered_json header;
    header["version"] = detail::kCheckpointVersion;
    header["tensors"] = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    for (const auto& e : entries) {
        header["tensors"].push_back(
            {{"name", e.name}, {"shape", e.shape}, {"offset", offset}});
        offset += e.count * sizeof(float);
    }
    header["batchnorm"] = nlohmann::ordered_json::array();
    for (const auto* bn : {&params.bn1, &params.bn2, &params.bn3}) {
        const char* name = bn == &params.bn1 ? "bn1" : (bn == &params.bn2 ? "bn2" : "bn3");
        header["batchnorm"].push_back(
            {{"name", name}, {"eps", bn->eps}, {"momentum", bn->momentum}});
    }
    const std::string hs = header.dump();

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(path + ": cannot open for writing");
    out.write(detail::kCheckpointMagic, 8);
    const std::uint32_t hlen = static_cast<std::uint32_t>(hs.size());
    out.write(reinterpret_cast<const char*>(&hlen), 4);
    out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& e : entries)
        out.write(reinterpret_cast<const char*>(e.data),
                  static_cast<std::streamsize>(e.count * sizeof(float)));
    if (!out) throw CheckpointError(path + ": short write");
}

inline SiameseParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError(path + ": cannot open");
    char magic[8] = {};
    in.read(magic, 8);
    if (in.gcount() != 8 || std::memcmp(magic, detail::kCheckpointMagic, 8) != 0)
        throw CheckpointError(path + ": bad magic, not a checkpoint file");
    std::uint32_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), 4);
    if (in.gcount() != 4) throw CheckpointError(path + ": truncated header length");
    if (hlen == 0 || hlen > (1u << 24)) throw CheckpointError(path + ": implausible header length");
    std::string hs(hlen, '\0');
    in.read(hs.data(), hlen);
    if (static_cast<std::uint32_t>(in.gcount()) != hlen)
        throw CheckpointError(path + ": truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hs);
    } catch (const nlohmann::json::exception& e) {
        throw CheckpointError(path + ": header is not valid JSON: " + e.what());
    }
    if (!header.contains("version") || !header["version"].is_number_unsigned())
        throw CheckpointError(path + ": header field 'version' missing");
    const auto version = header["version"].get<std::uint32_t>();
    if (version != detail::kCheckpointVersion)
        throw UnsupportedVersionError(path + ": unsupported checkpoint version " +
                                      std::to_string(version));
    if (!header.contains("tensors") || !header["tensors"].is_array())
        throw CheckpointError(path + ": header field 'tensors' missing");

    SiameseParams params;
    const std::streampos payload_start = in.tellg();
    std::size_t loaded = 0;
    for (const auto& t : header["tensors"]) {
        if (!t.contains("name") || !t.contains("shape") || !t.contains("offset"))
            throw CheckpointError(path + ": tensor entry missing name/shape/offset");
        const auto name = t["name"].get<std::string>();
        const auto shape = t["shape"].get<std::vector<int>>();
        const auto offset = t["offset"].get<std::size_t>();
        std::size_t count = 1;
        for (int d : shape) {
            if (d <= 0) throw CheckpointError(path + ": tensor '" + name + "' has bad shape");
            count *= static_cast<std::size_t>(d);
        }
        float* dst = detail::checkpoint_slot(params, name, count);
        if (!dst)
            throw CheckpointError(path + ": tensor '" + name +
                                  "' unknown or shape does not match this architecture");
        in.seekg(payload_start + static_cast<std::streamoff>(offset));
        in.read(reinterpret_cast<char*>(dst),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (static_cast<std::size_t>(in.gcount()) != count * sizeof(float))
            throw CheckpointError(path + ": truncated payload for tensor '" + name + "'");
        ++loaded;
    }
    const std::size_t expected = params.trainable_params().size() + 6;
    if (loaded != expected)
        throw CheckpointError(path + ": expected " + std::to_string(expected) +
                              " tensors, found " + std::to_string(loaded));
    if (header.contains("batchnorm")) {
        for (const auto& bn : header["batchnorm"]) {
            const auto name = bn.value("name", std::string());
            BatchNormState* st = name == "bn1"   ? &params.bn1
                                 : name == "bn2" ? &params.bn2
                                 : name == "bn3" ? &params.bn3
                                                 : nullptr;
            if (!st) throw CheckpointError(path + ": unknown batchnorm entry '" + name + "'");
            st->eps = bn.value("eps", st->eps);
            st->momentum = bn.value("momentum", st->momentum);
        }
    }
    return params;
}

}  // namespace facekit
