#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "triview/model.hpp"
#include "triview/preprocess.hpp"
#include "triview/volume.hpp"

namespace triview {

// One binary file per trained network. A plain-text key=value block up
// front carries the architecture, orientation, seed and normalization
// convention; float32 weights and BN running statistics follow in the
// parameters() traversal order.
struct CheckpointMeta {
    NetworkConfig cfg;
    Orientation view = Orientation::coronal;
    std::uint64_t seed = 0;
    NormConvention norm;
};

struct TrainedNet {
    Unet<float> net;
    CheckpointMeta meta;
};

namespace detail {

inline constexpr char kCkptMagic[8] = {'T', 'R', 'I', 'V', 'N', 'E', 'T', '1'};
inline constexpr char kCkptEnd[8] = {'T', 'R', 'I', 'V', 'E', 'N', 'D', '.'};

inline std::string checkpoint_header_text(const CheckpointMeta& m, index_t params,
                                          index_t running) {
    std::ostringstream os;
    os << "format=1\n";
    os << "kernel_size=" << m.cfg.kernel_size << "\n";
    os << "levels=" << m.cfg.levels << "\n";
    os << "base_filters=" << m.cfg.base_filters << "\n";
    os << "convs_per_level=" << m.cfg.convs_per_level << "\n";
    os << "labels=" << m.cfg.labels << "\n";
    os << "in_channels=" << m.cfg.in_channels << "\n";
    os << "orientation=" << to_string(m.view) << "\n";
    os << "seed=" << m.seed << "\n";
    os << "init=he-normal-fan-in\n";
    os << "norm_lo_pct=" << m.norm.lo_pct << "\n";
    os << "norm_hi_pct=" << m.norm.hi_pct << "\n";
    os << "param_scalars=" << params << "\n";
    os << "running_scalars=" << running << "\n";
    return os.str();
}

inline std::map<std::string, std::string> parse_kv(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

inline std::string require_key(const std::map<std::string, std::string>& kv,
                               const std::string& key, const std::string& path) {
    const auto it = kv.find(key);
    if (it == kv.end())
        throw CheckpointError("'" + path + "': missing checkpoint field '" + key + "'");
    return it->second;
}

}  // namespace detail

inline void save_checkpoint(Unet<float>& net, const CheckpointMeta& meta,
                            const std::string& path) {
    index_t running = 0;
    for (const auto* t : net.running_stats()) running += t->size();
    const std::string header =
        detail::checkpoint_header_text(meta, net.trainable_scalars(), running);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write checkpoint '" + path + "'");
    f.write(detail::kCkptMagic, 8);
    const auto hlen = static_cast<std::uint32_t>(header.size());
    f.write(reinterpret_cast<const char*>(&hlen), 4);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& p : net.parameters())
        f.write(reinterpret_cast<const char*>(p.value->data()),
                static_cast<std::streamsize>(p.value->size() * sizeof(float)));
    for (const auto* t : net.running_stats())
        f.write(reinterpret_cast<const char*>(t->data()),
                static_cast<std::streamsize>(t->size() * sizeof(float)));
    f.write(detail::kCkptEnd, 8);
    if (!f) throw IoError("write failed for checkpoint '" + path + "'");
}

inline TrainedNet load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw CheckpointError("cannot open checkpoint '" + path + "'");
    char magic[8];
    if (!f.read(magic, 8) || std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        throw CheckpointError("'" + path + "': not a checkpoint file");
    std::uint32_t hlen = 0;
    if (!f.read(reinterpret_cast<char*>(&hlen), 4) || hlen > (1u << 20))
        throw CheckpointError("'" + path + "': corrupt header");
    std::string header(hlen, '\0');
    if (!f.read(header.data(), hlen))
        throw CheckpointError("'" + path + "': truncated header");
    const auto kv = detail::parse_kv(header);
    if (detail::require_key(kv, "format", path) != "1")
        throw CheckpointError("'" + path + "': unsupported checkpoint format");

    TrainedNet out;
    NetworkConfig cfg;
    cfg.kernel_size = std::stoi(detail::require_key(kv, "kernel_size", path));
    cfg.levels = std::stoi(detail::require_key(kv, "levels", path));
    cfg.base_filters = std::stoi(detail::require_key(kv, "base_filters", path));
    cfg.convs_per_level = std::stoi(detail::require_key(kv, "convs_per_level", path));
    cfg.labels = std::stoi(detail::require_key(kv, "labels", path));
    cfg.in_channels = std::stoi(detail::require_key(kv, "in_channels", path));
    try {
        cfg.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError("'" + path + "': invalid config: " + e.what());
    }
    out.meta.cfg = cfg;
    out.meta.view = orientation_from_string(detail::require_key(kv, "orientation", path));
    out.meta.seed = std::stoull(detail::require_key(kv, "seed", path));
    out.meta.norm.lo_pct = std::stod(detail::require_key(kv, "norm_lo_pct", path));
    out.meta.norm.hi_pct = std::stod(detail::require_key(kv, "norm_hi_pct", path));

    out.net = Unet<float>::build(cfg, out.meta.seed);
    const auto declared = std::stoll(detail::require_key(kv, "param_scalars", path));
    if (declared != out.net.trainable_scalars())
        throw CheckpointError("'" + path + "': parameter count mismatch");

    auto read_tensor = [&](tensor<float>* t) {
        if (!f.read(reinterpret_cast<char*>(t->data()),
                    static_cast<std::streamsize>(t->size() * sizeof(float))))
            throw CheckpointError("'" + path + "': truncated weight payload");
    };
    for (const auto& p : out.net.parameters()) read_tensor(p.value);
    for (auto* t : out.net.running_stats()) read_tensor(t);
    char end[8];
    if (!f.read(end, 8) || std::memcmp(end, detail::kCkptEnd, 8) != 0)
        throw CheckpointError("'" + path + "': truncated checkpoint");
    return out;
}

}  // namespace triview
