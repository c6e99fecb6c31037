#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fabric_sim.hpp"
#include "pool_manager.hpp"
#include "result.hpp"
#include "textio.hpp"

namespace fabricpool {

inline constexpr std::string_view kToolVersion = "0.1.0";

// One scenario: pool shape, latency decomposition, link parameters, proxy
// capacity, seed. Parsed from a flat sectioned key=value file; every key has
// a default, unknown keys are rejected with a line diagnostic.
struct ScenarioConfig {
    // [topology]
    std::uint32_t hosts = 4;
    std::uint32_t boxes = 4;
    std::uint32_t slots_per_box = 8;
    std::vector<bool> valid_mask;  // empty: every slot populated
    std::uint32_t reserve = 0;     // slots provision must leave as spares

    // [latency]
    LatencyProfile latency;

    // [pcie]
    std::uint32_t tags = kDefaultTagCount;
    std::uint32_t mrs = kDefaultMrs;
    double lane_rate = 983.75e6;
    std::uint32_t lanes = 16;
    // Effective native end-to-end rates per direction (DMA efficiency
    // included), used as link ceilings and native baselines.
    double native_htod_bw = 11.2e9;
    double native_dtoh_bw = 12.5e9;

    // [proxy]
    DirectionalRate proxy_capacity = kDefaultProxyCapacity;

    std::uint64_t seed = 1;

    Errc validate(std::string& diag) const {
        auto fail = [&diag](std::string msg) {
            diag = std::move(msg);
            return Errc::parse_error;
        };
        if (hosts == 0) return fail("topology.hosts must be >= 1");
        if (boxes == 0) return fail("topology.boxes must be >= 1");
        if (slots_per_box == 0 || slots_per_box > 255)
            return fail("topology.slots_per_box must be in [1, 255]");
        if (!valid_mask.empty() && valid_mask.size() != slots_per_box)
            return fail("topology.valid_mask length must equal slots_per_box");
        if (!latency.valid()) return fail("latency components must be >= 0");
        if (tags == 0 || tags > 0xFFFE) return fail("pcie.tags must be in [1, 65534]");
        if (mrs == 0) return fail("pcie.mrs_bytes must be >= 1");
        if (lanes != 1 && lanes != 2 && lanes != 4 && lanes != 8 && lanes != 16)
            return fail("pcie.lanes must be one of 1, 2, 4, 8, 16");
        if (lane_rate <= 0) return fail("pcie.lane_rate must be > 0");
        if (native_htod_bw <= 0 || native_dtoh_bw <= 0)
            return fail("pcie native bandwidths must be > 0");
        if (proxy_capacity.htod <= 0 || proxy_capacity.dtoh <= 0)
            return fail("proxy capacities must be > 0");
        return Errc::ok;
    }

    LinkParams link() const { return {mrs, lane_rate, lanes}; }
};

inline Result<ScenarioConfig> parse_scenario(std::string_view text, std::string& diag) {
    ScenarioConfig cfg;
    std::string section;
    bool failed = false;

    auto bad = [&](std::size_t line_no, std::string msg) {
        diag = "line " + std::to_string(line_no) + ": " + std::move(msg);
        failed = true;
        return false;
    };

    detail::for_each_line(text, [&](std::size_t line_no, std::string_view raw) {
        std::string_view line = raw;
        while (!line.empty() && (line.front() == ' ' || line.front() == '\t')) line.remove_prefix(1);
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t' || line.back() == '\r'))
            line.remove_suffix(1);
        if (line.empty() || line[0] == '#') return true;

        if (line.front() == '[') {
            if (line.back() != ']') return bad(line_no, "unterminated section header");
            section = std::string(line.substr(1, line.size() - 2));
            if (section != "topology" && section != "latency" && section != "pcie" &&
                section != "proxy")
                return bad(line_no, "unknown section [" + section + "]");
            return true;
        }

        const std::size_t eq = line.find('=');
        if (eq == std::string_view::npos) return bad(line_no, "expected 'key = value'");
        std::string_view key = line.substr(0, eq);
        std::string_view value = line.substr(eq + 1);
        while (!key.empty() && (key.back() == ' ' || key.back() == '\t')) key.remove_suffix(1);
        while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
            value.remove_prefix(1);

        std::uint64_t num = 0;
        const bool numeric = detail::parse_field(value, num);
        auto need_num = [&]() {
            if (!numeric) bad(line_no, "value of '" + std::string(key) + "' must be a number");
            return numeric;
        };

        if (section.empty()) {
            if (key == "seed") {
                if (!need_num()) return false;
                cfg.seed = num;
                return true;
            }
            return bad(line_no, "unknown top-level key '" + std::string(key) + "'");
        }
        if (section == "topology") {
            if (key == "valid_mask") {
                if (value == "all") {
                    cfg.valid_mask.clear();
                    return true;
                }
                cfg.valid_mask.clear();
                for (char c : value) {
                    if (c != '0' && c != '1') return bad(line_no, "valid_mask must be 0/1 digits or 'all'");
                    cfg.valid_mask.push_back(c == '1');
                }
                return true;
            }
            if (!need_num()) return false;
            if (key == "hosts") cfg.hosts = static_cast<std::uint32_t>(num);
            else if (key == "boxes") cfg.boxes = static_cast<std::uint32_t>(num);
            else if (key == "slots_per_box") cfg.slots_per_box = static_cast<std::uint32_t>(num);
            else if (key == "reserve") cfg.reserve = static_cast<std::uint32_t>(num);
            else return bad(line_no, "unknown key '" + std::string(key) + "' in [topology]");
            return true;
        }
        if (section == "latency") {
            if (!need_num()) return false;
            if (key == "rtt_original_ns") cfg.latency.rtt_original = static_cast<Nanos>(num);
            else if (key == "net_transmission_ns")
                cfg.latency.net_transmission = static_cast<Nanos>(num);
            else if (key == "packet_conversion_ns")
                cfg.latency.packet_conversion = static_cast<Nanos>(num);
            else return bad(line_no, "unknown key '" + std::string(key) + "' in [latency]");
            return true;
        }
        if (section == "pcie") {
            if (!need_num()) return false;
            if (key == "tags") cfg.tags = static_cast<std::uint32_t>(num);
            else if (key == "mrs_bytes") cfg.mrs = static_cast<std::uint32_t>(num);
            else if (key == "lane_rate") cfg.lane_rate = static_cast<double>(num);
            else if (key == "lanes") cfg.lanes = static_cast<std::uint32_t>(num);
            else if (key == "native_htod_bw") cfg.native_htod_bw = static_cast<double>(num);
            else if (key == "native_dtoh_bw") cfg.native_dtoh_bw = static_cast<double>(num);
            else return bad(line_no, "unknown key '" + std::string(key) + "' in [pcie]");
            return true;
        }
        // [proxy]
        if (!need_num()) return false;
        if (key == "htod_capacity") cfg.proxy_capacity.htod = static_cast<double>(num);
        else if (key == "dtoh_capacity") cfg.proxy_capacity.dtoh = static_cast<double>(num);
        else return bad(line_no, "unknown key '" + std::string(key) + "' in [proxy]");
        return true;
    });

    if (failed) return Errc::parse_error;
    if (Errc rc = cfg.validate(diag); rc != Errc::ok) return rc;
    return cfg;
}

// Node IDs are handed out fabric-wide: hosts first, then boxes.
inline Topology make_topology(const ScenarioConfig& cfg) {
    Topology topo;
    for (std::uint32_t h = 0; h < cfg.hosts; ++h) topo.hosts.push_back(static_cast<NodeId>(h));
    const std::vector<bool> mask = cfg.valid_mask.empty()
                                       ? std::vector<bool>(cfg.slots_per_box, true)
                                       : cfg.valid_mask;
    for (std::uint32_t b = 0; b < cfg.boxes; ++b)
        topo.boxes.push_back({static_cast<NodeId>(cfg.hosts + b), mask});
    return topo;
}

// Provenance header embedded as comments in every output file.
struct RunManifest {
    std::string subcommand;
    std::string config_path;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    std::uint64_t seed = 0;

    std::string comment_header() const {
        auto join = [](const std::vector<std::string>& v) {
            if (v.empty()) return std::string("-");
            std::string out = v[0];
            for (std::size_t i = 1; i < v.size(); ++i) out += "," + v[i];
            return out;
        };
        std::string out;
        out += "# tool=fabricpool ";
        out += kToolVersion;
        out += "\n# subcommand=" + subcommand;
        out += "\n# config=" + config_path;
        out += "\n# inputs=" + join(inputs);
        out += "\n# outputs=" + join(outputs);
        out += "\n# seed=" + std::to_string(seed);
        out += '\n';
        return out;
    }
};

}  // namespace fabricpool
