#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "crc32.hpp"
#include "mapping_tables.hpp"
#include "result.hpp"
#include "tlp.hpp"

namespace fabricpool {

enum class PacketClass : std::uint8_t { Header = 0, Data = 1 };

// On-fabric packet layout, little-endian multi-byte fields:
//
//   Header: [class:1][src_node:2][src_slot:1][dst_node:2][dst_slot:1]
//           [path_id:1][seq:2][tlp_header:16][tlp_crc:4][net_crc:4]     = 34 B
//   Data:   [class:1][src_node:2][src_slot:1][dst_node:2][dst_slot:1]
//           [path_id:1][seq:2][chunk_len:2][chunk:n][net_crc:4]         = 16+n B
//
// One TLP becomes one Header packet (seq 0) followed by zero or more Data
// packets (seq 1..n) carrying the payload in order. net_crc covers every
// preceding byte of its packet; tlp_crc covers the reassembled TLP
// (header block plus payload).
inline constexpr std::size_t kHeaderPacketSize = 34;
inline constexpr std::size_t kDataPacketOverhead = 16;
// The MTU must leave at least 64 payload bytes per data packet; the fixed
// 34-byte header packet fits in any such MTU.
inline constexpr std::size_t kMinMtu = kDataPacketOverhead + 64;
inline constexpr std::size_t kDefaultMtu = 256;

struct FabricPacket {
    PacketClass packet_class = PacketClass::Header;
    NodeId src_node = 0;
    SlotId src_slot = 0;  // 0 when the source is a host server
    NodeId dst_node = 0;
    SlotId dst_slot = 0;
    PathId path_id = 0;
    std::uint16_t seq = 0;
    std::array<std::uint8_t, wire::kTlpHeaderSize> tlp_header{};  // Header packets
    std::uint32_t tlp_crc = 0;                                    // Header packets
    std::vector<std::uint8_t> chunk;                              // Data packets
    std::uint32_t net_crc = 0;

    std::vector<std::uint8_t> body_bytes() const {
        std::vector<std::uint8_t> out;
        const bool header = packet_class == PacketClass::Header;
        out.reserve(header ? kHeaderPacketSize : kDataPacketOverhead + chunk.size());
        out.push_back(static_cast<std::uint8_t>(packet_class));
        push_le16(out, src_node);
        out.push_back(src_slot);
        push_le16(out, dst_node);
        out.push_back(dst_slot);
        out.push_back(path_id);
        push_le16(out, seq);
        if (header) {
            out.insert(out.end(), tlp_header.begin(), tlp_header.end());
            push_le32(out, tlp_crc);
        } else {
            push_le16(out, static_cast<std::uint16_t>(chunk.size()));
            out.insert(out.end(), chunk.begin(), chunk.end());
        }
        return out;
    }

    std::uint32_t compute_net_crc() const {
        auto body = body_bytes();
        return crc32(body);
    }

    std::vector<std::uint8_t> to_bytes() const {
        auto out = body_bytes();
        push_le32(out, net_crc);
        return out;
    }

    static Result<FabricPacket> from_bytes(std::span<const std::uint8_t> bytes) {
        if (bytes.size() < kDataPacketOverhead) return Errc::malformed_packet;
        const std::uint32_t stored = get_le32(&bytes[bytes.size() - 4]);
        if (crc32(bytes.first(bytes.size() - 4)) != stored) return Errc::crc_mismatch;

        FabricPacket p;
        if (bytes[0] > static_cast<std::uint8_t>(PacketClass::Data)) return Errc::malformed_packet;
        p.packet_class = static_cast<PacketClass>(bytes[0]);
        p.src_node = get_le16(&bytes[1]);
        p.src_slot = bytes[3];
        p.dst_node = get_le16(&bytes[4]);
        p.dst_slot = bytes[6];
        p.path_id = bytes[7];
        p.seq = get_le16(&bytes[8]);
        p.net_crc = stored;
        if (p.packet_class == PacketClass::Header) {
            if (bytes.size() != kHeaderPacketSize) return Errc::malformed_packet;
            std::copy_n(bytes.begin() + 10, wire::kTlpHeaderSize, p.tlp_header.begin());
            p.tlp_crc = get_le32(&bytes[26]);
        } else {
            const std::uint16_t chunk_len = get_le16(&bytes[10]);
            if (bytes.size() != kDataPacketOverhead + chunk_len) return Errc::malformed_packet;
            p.chunk.assign(bytes.begin() + 12, bytes.begin() + 12 + chunk_len);
        }
        return p;
    }

    bool operator==(const FabricPacket&) const = default;

private:
    static void push_le16(std::vector<std::uint8_t>& out, std::uint16_t v) {
        out.push_back(static_cast<std::uint8_t>(v));
        out.push_back(static_cast<std::uint8_t>(v >> 8));
    }
    static void push_le32(std::vector<std::uint8_t>& out, std::uint32_t v) {
        for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    static std::uint16_t get_le16(const std::uint8_t* in) {
        return static_cast<std::uint16_t>(in[0] | (in[1] << 8));
    }
    static std::uint32_t get_le32(const std::uint8_t* in) {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
        return v;
    }
};

inline Result<std::vector<FabricPacket>> encapsulate(const Tlp& tlp, NodeId src_node,
                                                     SlotId src_slot, const RouteInfo& route,
                                                     std::size_t mtu = kDefaultMtu) {
    if (mtu < kMinMtu) return Errc::mtu_too_small;

    const auto header_block = tlp.encode_header();
    std::vector<std::uint8_t> tlp_bytes(header_block.begin(), header_block.end());
    tlp_bytes.insert(tlp_bytes.end(), tlp.payload().begin(), tlp.payload().end());
    const std::uint32_t tlp_crc = crc32(tlp_bytes);

    std::vector<FabricPacket> packets;
    FabricPacket head;
    head.packet_class = PacketClass::Header;
    head.src_node = src_node;
    head.src_slot = src_slot;
    head.dst_node = route.node;
    head.dst_slot = route.slot;
    head.path_id = route.path;
    head.seq = 0;
    head.tlp_header = header_block;
    head.tlp_crc = tlp_crc;
    head.net_crc = head.compute_net_crc();
    packets.push_back(std::move(head));

    const std::size_t capacity = mtu - kDataPacketOverhead;
    const auto& payload = tlp.payload();
    for (std::size_t off = 0; off < payload.size(); off += capacity) {
        FabricPacket data;
        data.packet_class = PacketClass::Data;
        data.src_node = src_node;
        data.src_slot = src_slot;
        data.dst_node = route.node;
        data.dst_slot = route.slot;
        data.path_id = route.path;
        data.seq = static_cast<std::uint16_t>(packets.size());
        const std::size_t n = std::min(capacity, payload.size() - off);
        data.chunk.assign(payload.begin() + off, payload.begin() + off + n);
        data.net_crc = data.compute_net_crc();
        packets.push_back(std::move(data));
    }
    return packets;
}

inline Result<Tlp> decapsulate(std::span<const FabricPacket> packets) {
    if (packets.empty()) return Errc::incomplete_group;
    for (const auto& p : packets)
        if (p.net_crc != p.compute_net_crc()) return Errc::crc_mismatch;

    if (packets[0].packet_class != PacketClass::Header || packets[0].seq != 0) {
        for (const auto& p : packets)
            if (p.packet_class == PacketClass::Header) return Errc::reordered_group;
        return Errc::incomplete_group;
    }
    const auto& head = packets[0];

    std::vector<std::uint8_t> payload;
    bool in_order = true;
    std::vector<std::uint16_t> seqs;
    for (std::size_t i = 1; i < packets.size(); ++i) {
        if (packets[i].packet_class != PacketClass::Data) return Errc::reordered_group;
        seqs.push_back(packets[i].seq);
        in_order = in_order && packets[i].seq == i;
        payload.insert(payload.end(), packets[i].chunk.begin(), packets[i].chunk.end());
    }
    if (!in_order) {
        auto sorted = seqs;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i)
            if (sorted[i] != i + 1) return Errc::incomplete_group;
        return Errc::reordered_group;
    }

    const std::uint16_t declared = static_cast<std::uint16_t>(head.tlp_header[14] |
                                                              (head.tlp_header[15] << 8));
    const std::uint8_t kind_byte = head.tlp_header[0];
    const bool read_kind = kind_byte <= static_cast<std::uint8_t>(TlpKind::Completion) &&
                           is_read(static_cast<TlpKind>(kind_byte));
    const std::size_t expected_payload = read_kind ? 0 : declared;
    if (payload.size() != expected_payload) return Errc::incomplete_group;

    std::vector<std::uint8_t> tlp_bytes(head.tlp_header.begin(), head.tlp_header.end());
    tlp_bytes.insert(tlp_bytes.end(), payload.begin(), payload.end());
    if (crc32(tlp_bytes) != head.tlp_crc) return Errc::crc_mismatch;

    return Tlp::decode(std::span<const std::uint8_t, wire::kTlpHeaderSize>(head.tlp_header),
                       std::move(payload));
}

inline Result<Tlp> decapsulate_bytes(std::span<const std::vector<std::uint8_t>> raw) {
    std::vector<FabricPacket> packets;
    packets.reserve(raw.size());
    for (const auto& bytes : raw) {
        auto p = FabricPacket::from_bytes(bytes);
        if (!p) return p.error();
        packets.push_back(std::move(*p));
    }
    return decapsulate(packets);
}

// ---------------------------------------------------------------------------
// Routing
// ---------------------------------------------------------------------------

struct LocalDelivery {
    bool operator==(const LocalDelivery&) const = default;
};
struct NoRoute {
    bool operator==(const NoRoute&) const = default;
};
using HostRouting = std::variant<RouteInfo, LocalDelivery, NoRoute>;

// Host-side routing: address-routed transactions resolve through the memory
// windows, ID-routed ones through (bus, device), and local messages never
// leave the host.
inline HostRouting route_host_to_box(const Tlp& tlp, const HostMapTable& table) {
    switch (classify(tlp)) {
        case RouteClass::AddressRouted:
            if (auto r = table.lookup_by_address(tlp.address())) return *r;
            return NoRoute{};
        case RouteClass::IdRouted:
            if (auto r = table.lookup_by_id(tlp.bus_id(), tlp.device_id())) return *r;
            return NoRoute{};
        case RouteClass::Implicit:
        case RouteClass::LocalOnly:
            return LocalDelivery{};
    }
    return NoRoute{};
}

// Box-side routing: a GPU is dedicated to one host while bound, so everything
// it emits goes straight to that host.
inline Result<RouteInfo> route_box_to_host(const BoxMapTable& table, SlotId slot) {
    return table.host_route(slot);
}

// ---------------------------------------------------------------------------
// Enumeration traffic
// ---------------------------------------------------------------------------

// Virtual bridge registers the host proxy watches for. The OS programs the
// memory window of a hot-plugged device with one 8-byte write to each.
inline constexpr std::uint16_t kMemBaseReg = 0x10;
inline constexpr std::uint16_t kMemLimitReg = 0x18;

// Mirror a config write into the mapping table: a base write is staged, the
// following limit write installs the [base, limit] window. Writes to other
// registers pass through untouched.
inline Errc host_apply_config_write(HostMapTable& table, const Tlp& tlp) {
    if (tlp.kind() != TlpKind::ConfigWrite) return Errc::ok;
    if (tlp.config_reg() != kMemBaseReg && tlp.config_reg() != kMemLimitReg) return Errc::ok;

    auto entry_id = table.find_by_id(tlp.bus_id(), tlp.device_id());
    if (!entry_id) return Errc::entry_not_used;
    if (tlp.payload_len() != 8) return Errc::malformed_tlp;

    std::uint64_t value = 0;
    for (int i = 0; i < 8; ++i) value |= static_cast<std::uint64_t>(tlp.payload()[i]) << (8 * i);

    auto& entry = table.entry_mut(*entry_id);
    if (tlp.config_reg() == kMemBaseReg) {
        entry.staged_mem_base = value;
        return Errc::ok;
    }
    std::uint64_t base;
    if (entry.staged_mem_base)
        base = *entry.staged_mem_base;
    else if (entry.window)
        base = entry.window->base;
    else
        return Errc::invalid_window;  // limit written before any base
    Errc rc = table.set_window(*entry_id, base, value);
    if (rc == Errc::ok) entry.staged_mem_base.reset();
    return rc;
}

}  // namespace fabricpool
