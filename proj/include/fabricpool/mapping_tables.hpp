#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "result.hpp"
#include "textio.hpp"

namespace fabricpool {

using NodeId = std::uint16_t;
using SlotId = std::uint8_t;
using PathId = std::uint8_t;

// Where a transaction should go: destination proxy node, slot behind it
// (0 for host servers), and the fabric path to use.
struct RouteInfo {
    NodeId node = 0;
    SlotId slot = 0;
    PathId path = 0;

    bool operator==(const RouteInfo&) const = default;
};

// Inclusive address range [base, limit], the PCIe bridge base/limit register
// convention.
struct AddressWindow {
    std::uint64_t base = 0;
    std::uint64_t limit = 0;

    bool contains(std::uint64_t addr) const { return addr >= base && addr <= limit; }
    bool overlaps(const AddressWindow& o) const { return base <= o.limit && o.base <= limit; }
    bool operator==(const AddressWindow&) const = default;
};

// One row of the host-side mapping table: the PCI identity a bound GPU shows
// to the host OS, and the fabric coordinates it maps to.
struct HostMapEntry {
    std::uint16_t entry_id = 0;
    bool used = false;
    std::uint8_t bus_id = 0;  // reserved at table construction
    std::uint8_t device_id = 0;
    std::optional<AddressWindow> window;  // set by the OS during enumeration
    NodeId gpu_box_id = 0;
    SlotId slot_id = 0;
    PathId path_id = 0;
    // Base-register write seen but limit not yet: enumeration in progress.
    std::optional<std::uint64_t> staged_mem_base;
};

// One row of the box-side table: which host owns the GPU in a slot.
struct BoxMapEntry {
    std::uint16_t entry_id = 0;
    bool valid = false;  // GPU physically in place
    bool used = false;
    SlotId slot_id = 0;
    NodeId host_node_id = 0;
    PathId path_id = 0;
};

// Host-side mapping table. Bus IDs are reserved up front (the BIOS reserves
// the whole virtual-switch space at boot); binding claims the lowest free
// entry, and the memory window arrives later from enumeration traffic.
class HostMapTable {
public:
    explicit HostMapTable(std::size_t entries = 16, std::uint8_t first_bus = 1) {
        entries_.resize(entries);
        for (std::size_t i = 0; i < entries; ++i) {
            entries_[i].entry_id = static_cast<std::uint16_t>(i);
            entries_[i].bus_id = static_cast<std::uint8_t>(first_bus + i);
        }
    }

    Result<std::uint16_t> bind(NodeId gpu_box, SlotId slot, PathId path) {
        for (auto& e : entries_) {
            if (e.used) continue;
            e.used = true;
            e.gpu_box_id = gpu_box;
            e.slot_id = slot;
            e.path_id = path;
            e.window.reset();
            e.staged_mem_base.reset();
            return e.entry_id;
        }
        return Errc::no_free_bus;
    }

    Errc set_window(std::uint16_t entry_id, std::uint64_t base, std::uint64_t limit) {
        if (entry_id >= entries_.size() || !entries_[entry_id].used) return Errc::entry_not_used;
        if (base > limit) return Errc::invalid_window;
        AddressWindow w{base, limit};
        for (const auto& e : entries_) {
            if (e.entry_id == entry_id || !e.used || !e.window) continue;
            if (w.overlaps(*e.window)) return Errc::overlapping_window;
        }
        entries_[entry_id].window = w;
        return Errc::ok;
    }

    Errc free_entry(std::uint16_t entry_id) {
        if (entry_id >= entries_.size() || !entries_[entry_id].used) return Errc::not_bound;
        auto& e = entries_[entry_id];
        e.used = false;
        e.window.reset();
        e.staged_mem_base.reset();
        e.gpu_box_id = 0;
        e.slot_id = 0;
        e.path_id = 0;
        return Errc::ok;
    }

    std::optional<RouteInfo> lookup_by_address(std::uint64_t addr) const {
        for (const auto& e : entries_)
            if (e.used && e.window && e.window->contains(addr))
                return RouteInfo{e.gpu_box_id, e.slot_id, e.path_id};
        return std::nullopt;
    }

    std::optional<RouteInfo> lookup_by_id(std::uint8_t bus, std::uint8_t device) const {
        for (const auto& e : entries_)
            if (e.used && e.bus_id == bus && e.device_id == device)
                return RouteInfo{e.gpu_box_id, e.slot_id, e.path_id};
        return std::nullopt;
    }

    std::optional<std::uint16_t> find_by_id(std::uint8_t bus, std::uint8_t device) const {
        for (const auto& e : entries_)
            if (e.used && e.bus_id == bus && e.device_id == device) return e.entry_id;
        return std::nullopt;
    }

    const HostMapEntry& entry(std::uint16_t id) const { return entries_.at(id); }
    HostMapEntry& entry_mut(std::uint16_t id) { return entries_.at(id); }
    std::size_t size() const { return entries_.size(); }

    std::size_t used_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.used;
        return n;
    }
    std::size_t free_count() const { return entries_.size() - used_count(); }

    // One entry per line, fields in table order:
    // entry_id,used,bus_id,device_id,mem_base,mem_limit,gpu_box_id,slot_id,path_id
    // Unset fields print as "-"; addresses are hex.
    std::string export_text() const {
        std::string out;
        for (const auto& e : entries_) {
            detail::append_field(out, e.entry_id);
            out += e.used ? ",1," : ",0,";
            detail::append_field(out, e.bus_id);
            out += ',';
            detail::append_field(out, e.device_id);
            out += ',';
            if (e.used && e.window) {
                detail::append_field(out, e.window->base, true);
                out += ',';
                detail::append_field(out, e.window->limit, true);
            } else {
                out += "-,-";
            }
            out += ',';
            if (e.used) {
                detail::append_field(out, e.gpu_box_id);
                out += ',';
                detail::append_field(out, e.slot_id);
                out += ',';
                detail::append_field(out, e.path_id);
            } else {
                out += "-,-,-";
            }
            out += '\n';
        }
        return out;
    }

    static Result<HostMapTable> import_text(std::string_view text) {
        HostMapTable table(0);
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string_view::npos) eol = text.size();
            std::string_view line = text.substr(pos, eol - pos);
            pos = eol + 1;
            if (line.empty()) continue;
            auto f = detail::split_csv(line);
            if (f.size() != 9) return Errc::parse_error;
            std::uint64_t id, used, bus, dev;
            if (!detail::parse_field(f[0], id) || !detail::parse_field(f[1], used) ||
                !detail::parse_field(f[2], bus) || !detail::parse_field(f[3], dev) || used > 1)
                return Errc::parse_error;
            HostMapEntry e;
            e.entry_id = static_cast<std::uint16_t>(id);
            e.used = used != 0;
            e.bus_id = static_cast<std::uint8_t>(bus);
            e.device_id = static_cast<std::uint8_t>(dev);
            if (e.used) {
                if (f[4] != "-") {
                    std::uint64_t base, limit;
                    if (!detail::parse_field(f[4], base) || !detail::parse_field(f[5], limit) ||
                        base > limit)
                        return Errc::parse_error;
                    e.window = AddressWindow{base, limit};
                }
                std::uint64_t box, slot, path;
                if (!detail::parse_field(f[6], box) || !detail::parse_field(f[7], slot) ||
                    !detail::parse_field(f[8], path))
                    return Errc::parse_error;
                e.gpu_box_id = static_cast<NodeId>(box);
                e.slot_id = static_cast<SlotId>(slot);
                e.path_id = static_cast<PathId>(path);
            } else if (f[4] != "-" || f[5] != "-" || f[6] != "-" || f[7] != "-" || f[8] != "-") {
                return Errc::parse_error;
            }
            if (e.entry_id != table.entries_.size()) return Errc::parse_error;
            for (const auto& prev : table.entries_) {
                if (!prev.used || !e.used) continue;
                if (prev.bus_id == e.bus_id && prev.device_id == e.device_id)
                    return Errc::parse_error;
                if (prev.window && e.window && prev.window->overlaps(*e.window))
                    return Errc::parse_error;
            }
            table.entries_.push_back(e);
        }
        return table;
    }

private:
    std::vector<HostMapEntry> entries_;
};

// Box-side mapping table: one entry per physical slot.
class BoxMapTable {
public:
    explicit BoxMapTable(std::vector<bool> valid_mask) {
        entries_.resize(valid_mask.size());
        for (std::size_t i = 0; i < entries_.size(); ++i) {
            entries_[i].entry_id = static_cast<std::uint16_t>(i);
            entries_[i].slot_id = static_cast<SlotId>(i);
            entries_[i].valid = valid_mask[i];
        }
    }

    explicit BoxMapTable(std::size_t slots) : BoxMapTable(std::vector<bool>(slots, true)) {}

    Errc bind(SlotId slot, NodeId host, PathId path) {
        if (slot >= entries_.size() || !entries_[slot].valid) return Errc::slot_invalid;
        auto& e = entries_[slot];
        if (e.used) return Errc::slot_busy;
        e.used = true;
        e.host_node_id = host;
        e.path_id = path;
        return Errc::ok;
    }

    Errc free_slot(SlotId slot) {
        if (slot >= entries_.size()) return Errc::slot_invalid;
        auto& e = entries_[slot];
        if (!e.used) return Errc::not_bound;
        e.used = false;
        e.host_node_id = 0;
        e.path_id = 0;
        return Errc::ok;
    }

    // The bound host for box-to-host traffic; slot 0 is the host server side.
    Result<RouteInfo> host_route(SlotId slot) const {
        if (slot >= entries_.size() || !entries_[slot].used) return Errc::not_bound;
        const auto& e = entries_[slot];
        return RouteInfo{e.host_node_id, 0, e.path_id};
    }

    const BoxMapEntry& entry(SlotId slot) const { return entries_.at(slot); }
    std::size_t size() const { return entries_.size(); }

    std::size_t valid_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.valid;
        return n;
    }
    std::size_t used_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.used;
        return n;
    }
    std::size_t free_count() const {
        std::size_t n = 0;
        for (const auto& e : entries_) n += e.valid && !e.used;
        return n;
    }

    // entry_id,valid,used,slot_id,host_node_id,path_id
    std::string export_text() const {
        std::string out;
        for (const auto& e : entries_) {
            detail::append_field(out, e.entry_id);
            out += e.valid ? ",1," : ",0,";
            out += e.used ? "1," : "0,";
            detail::append_field(out, e.slot_id);
            out += ',';
            if (e.used) {
                detail::append_field(out, e.host_node_id);
                out += ',';
                detail::append_field(out, e.path_id);
            } else {
                out += "-,-";
            }
            out += '\n';
        }
        return out;
    }

    static Result<BoxMapTable> import_text(std::string_view text) {
        BoxMapTable table(std::size_t{0});
        std::size_t pos = 0;
        while (pos < text.size()) {
            std::size_t eol = text.find('\n', pos);
            if (eol == std::string_view::npos) eol = text.size();
            std::string_view line = text.substr(pos, eol - pos);
            pos = eol + 1;
            if (line.empty()) continue;
            auto f = detail::split_csv(line);
            if (f.size() != 6) return Errc::parse_error;
            std::uint64_t id, valid, used, slot;
            if (!detail::parse_field(f[0], id) || !detail::parse_field(f[1], valid) ||
                !detail::parse_field(f[2], used) || !detail::parse_field(f[3], slot) ||
                valid > 1 || used > 1)
                return Errc::parse_error;
            BoxMapEntry e;
            e.entry_id = static_cast<std::uint16_t>(id);
            e.valid = valid != 0;
            e.used = used != 0;
            e.slot_id = static_cast<SlotId>(slot);
            if (e.used && !e.valid) return Errc::parse_error;
            if (e.used) {
                std::uint64_t host, path;
                if (!detail::parse_field(f[4], host) || !detail::parse_field(f[5], path))
                    return Errc::parse_error;
                e.host_node_id = static_cast<NodeId>(host);
                e.path_id = static_cast<PathId>(path);
            } else if (f[4] != "-" || f[5] != "-") {
                return Errc::parse_error;
            }
            if (e.entry_id != table.entries_.size() || e.slot_id != e.entry_id)
                return Errc::parse_error;
            table.entries_.push_back(e);
        }
        return table;
    }

private:
    std::vector<BoxMapEntry> entries_;
};

}  // namespace fabricpool
