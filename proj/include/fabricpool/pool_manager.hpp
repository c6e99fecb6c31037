#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mapping_tables.hpp"
#include "result.hpp"

namespace fabricpool {

// Single-hop fabric: one path per (host, box) pair.
inline constexpr PathId kSingleHopPath = 0;

struct BoxConfig {
    NodeId node = 0;
    std::vector<bool> valid;  // one flag per slot: GPU physically present
};

// Fabric-wide inventory. Node IDs are assigned by the manager at fabric
// initialization and are unique across hosts and boxes.
struct Topology {
    std::vector<NodeId> hosts;
    std::vector<BoxConfig> boxes;
};

enum class Placement : std::uint8_t {
    AnyWhere,          // lowest (box, slot) first
    SameBox,           // prefer one box, spread if impossible
    SameBoxRequired,   // one box or fail
};

struct AllocationRequest {
    NodeId host = 0;
    std::uint32_t count = 1;
    Placement placement = Placement::AnyWhere;
};

struct Grant {
    NodeId box = 0;
    SlotId slot = 0;
    PathId path = 0;
    std::uint16_t host_entry_id = 0;

    bool operator==(const Grant&) const = default;
};

struct HotPlugEvent {
    enum class Kind : std::uint8_t { Added, Removed };
    Kind kind;
    NodeId host;
    NodeId box;
    SlotId slot;
    PathId path;

    std::string to_line() const {
        std::string out = kind == Kind::Added ? "ADD" : "REMOVE";
        out += " host=" + std::to_string(host);
        out += " box=" + std::to_string(box);
        out += " slot=" + std::to_string(slot);
        out += " path=" + std::to_string(path);
        return out;
    }

    bool operator==(const HotPlugEvent&) const = default;
};

struct PoolState {
    struct BoxCount {
        NodeId box;
        std::uint32_t free;
        std::uint32_t used;
        bool operator==(const BoxCount&) const = default;
    };
    struct HostCount {
        NodeId host;
        std::uint32_t bound;
        bool operator==(const HostCount&) const = default;
    };
    std::uint32_t total_valid = 0;
    std::uint32_t total_free = 0;
    std::uint32_t total_used = 0;
    std::vector<BoxCount> boxes;
    std::vector<HostCount> hosts;

    bool operator==(const PoolState&) const = default;
};

// The fabric manager: owns every mapping table, hands GPUs out and takes them
// back, and keeps both table sides consistent. All validation happens before
// any mutation, so a failed call leaves the pool untouched. Mutations are
// single-owner; there is no internal locking.
class PoolManager {
public:
    explicit PoolManager(Topology topology, std::size_t host_table_entries = 16,
                         std::uint32_t reserve = 0)
        : topology_(std::move(topology)), reserve_(reserve) {
        for (NodeId h : topology_.hosts)
            host_tables_.emplace(h, HostMapTable(host_table_entries));
        for (const auto& b : topology_.boxes)
            box_tables_.emplace(b.node, BoxMapTable(b.valid));
    }

    Result<std::vector<Grant>> provision(const AllocationRequest& req) {
        auto host_it = host_tables_.find(req.host);
        if (host_it == host_tables_.end()) return Errc::unknown_node;
        if (req.count == 0) return Errc::insufficient;
        if (host_it->second.free_count() < req.count) return Errc::no_free_bus;
        if (free_slots() < req.count + reserve_) return Errc::insufficient;

        std::vector<std::pair<NodeId, SlotId>> picks;
        if (req.placement != Placement::AnyWhere) {
            // Single-box packing: lowest box that can hold the whole request.
            for (const auto& [box, table] : box_tables_) {
                if (table.free_count() < req.count) continue;
                for (std::size_t s = 0; s < table.size() && picks.size() < req.count; ++s) {
                    const auto& e = table.entry(static_cast<SlotId>(s));
                    if (e.valid && !e.used) picks.emplace_back(box, static_cast<SlotId>(s));
                }
                break;
            }
            if (picks.empty() && req.placement == Placement::SameBoxRequired)
                return Errc::insufficient;
        }
        if (picks.empty()) {
            for (const auto& [box, table] : box_tables_) {
                for (std::size_t s = 0; s < table.size() && picks.size() < req.count; ++s) {
                    const auto& e = table.entry(static_cast<SlotId>(s));
                    if (e.valid && !e.used) picks.emplace_back(box, static_cast<SlotId>(s));
                }
                if (picks.size() == req.count) break;
            }
            if (picks.size() < req.count) return Errc::insufficient;
        }

        std::vector<Grant> grants;
        grants.reserve(req.count);
        for (auto [box, slot] : picks) {
            Errc rc = box_tables_.at(box).bind(slot, req.host, kSingleHopPath);
            (void)rc;  // validated above
            auto entry = host_it->second.bind(box, slot, kSingleHopPath);
            Grant g{box, slot, kSingleHopPath, *entry};
            grants.push_back(g);
            events_.push_back({HotPlugEvent::Kind::Added, req.host, box, slot, kSingleHopPath});
        }
        return grants;
    }

    Errc reclaim(NodeId host, std::span<const std::uint16_t> entry_ids) {
        auto host_it = host_tables_.find(host);
        if (host_it == host_tables_.end()) return Errc::unknown_node;
        auto& table = host_it->second;
        for (std::size_t i = 0; i < entry_ids.size(); ++i) {
            if (entry_ids[i] >= table.size() || !table.entry(entry_ids[i]).used)
                return Errc::not_bound;
            for (std::size_t j = 0; j < i; ++j)
                if (entry_ids[j] == entry_ids[i]) return Errc::not_bound;
        }
        for (std::uint16_t id : entry_ids) {
            const auto& e = table.entry(id);
            const NodeId box = e.gpu_box_id;
            const SlotId slot = e.slot_id;
            const PathId path = e.path_id;
            box_tables_.at(box).free_slot(slot);
            table.free_entry(id);
            events_.push_back({HotPlugEvent::Kind::Removed, host, box, slot, path});
        }
        return Errc::ok;
    }

    PoolState snapshot() const {
        PoolState st;
        for (const auto& [box, table] : box_tables_) {
            const auto used = static_cast<std::uint32_t>(table.used_count());
            const auto free = static_cast<std::uint32_t>(table.free_count());
            st.boxes.push_back({box, free, used});
            st.total_valid += static_cast<std::uint32_t>(table.valid_count());
            st.total_free += free;
            st.total_used += used;
        }
        for (const auto& [host, table] : host_tables_)
            st.hosts.push_back({host, static_cast<std::uint32_t>(table.used_count())});
        return st;
    }

    std::size_t free_slots() const {
        std::size_t n = 0;
        for (const auto& [_, table] : box_tables_) n += table.free_count();
        return n;
    }
    std::size_t total_valid_slots() const {
        std::size_t n = 0;
        for (const auto& [_, table] : box_tables_) n += table.valid_count();
        return n;
    }

    const std::vector<HotPlugEvent>& events() const { return events_; }
    const Topology& topology() const { return topology_; }

    const HostMapTable& host_table(NodeId host) const { return host_tables_.at(host); }
    const BoxMapTable& box_table(NodeId box) const { return box_tables_.at(box); }

private:
    Topology topology_;
    std::uint32_t reserve_;
    std::map<NodeId, HostMapTable> host_tables_;  // ordered: deterministic iteration
    std::map<NodeId, BoxMapTable> box_tables_;
    std::vector<HotPlugEvent> events_;
};

}  // namespace fabricpool
