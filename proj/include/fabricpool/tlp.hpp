#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "result.hpp"

namespace fabricpool {

// Measured defaults for the PCIe Gen3 GPU link modeled throughout: an
// effective in-flight tag budget of ~140 and a 128-byte max read request.
// Both are configuration, not architecture.
inline constexpr std::uint16_t kDefaultTagCount = 140;
inline constexpr std::uint32_t kDefaultMrs = 128;

enum class TlpKind : std::uint8_t {
    MemRead = 0,
    MemWrite = 1,
    IoRead = 2,
    IoWrite = 3,
    ConfigRead = 4,
    ConfigWrite = 5,
    Message = 6,
    Completion = 7,
};

// Routing subfield of Message TLPs.
enum class MessageRouting : std::uint8_t {
    AddressRouted = 0,
    IdRouted = 1,
    Local = 2,
};

// Routing class of a transaction. Message TLPs are implicit-routing on the
// wire; classify() resolves them through their routing subfield, so Implicit
// itself only labels a message header whose subfield has not been examined.
enum class RouteClass : std::uint8_t {
    AddressRouted,
    IdRouted,
    Implicit,
    LocalOnly,
};

constexpr bool is_non_posted(TlpKind k) {
    return k == TlpKind::MemRead || k == TlpKind::IoRead || k == TlpKind::IoWrite ||
           k == TlpKind::ConfigRead || k == TlpKind::ConfigWrite;
}

constexpr bool carries_tag(TlpKind k) {
    return is_non_posted(k) || k == TlpKind::Completion;
}

constexpr bool is_read(TlpKind k) {
    return k == TlpKind::MemRead || k == TlpKind::IoRead || k == TlpKind::ConfigRead;
}

namespace wire {
// Sentinels inside the 16-byte encoded TLP header.
inline constexpr std::uint8_t kNoRouting = 0xFF;
inline constexpr std::uint16_t kNoTag = 0xFFFF;
inline constexpr std::size_t kTlpHeaderSize = 16;
}  // namespace wire

// A PCIe transaction-layer packet, reduced to the fields the fabric cares
// about. Construction goes through the named factories, which reject
// inconsistent field combinations up front; everything downstream may assume
// a well-formed packet.
class Tlp {
public:
    static Result<Tlp> mem_read(std::uint64_t address, std::uint16_t tag,
                                std::uint32_t read_len, std::uint32_t mrs = kDefaultMrs) {
        if (read_len == 0 || read_len > mrs || tag == wire::kNoTag) return Errc::malformed_tlp;
        Tlp t(TlpKind::MemRead);
        t.address_ = address;
        t.tag_ = tag;
        t.length_ = static_cast<std::uint16_t>(read_len);
        return t;
    }

    static Result<Tlp> mem_write(std::uint64_t address, std::vector<std::uint8_t> payload,
                                 std::uint32_t mrs = kDefaultMrs) {
        if (payload.size() > mrs) return Errc::malformed_tlp;
        Tlp t(TlpKind::MemWrite);
        t.address_ = address;
        t.set_payload(std::move(payload));
        return t;
    }

    static Result<Tlp> io_read(std::uint64_t address, std::uint16_t tag,
                               std::uint32_t read_len, std::uint32_t mrs = kDefaultMrs) {
        if (read_len == 0 || read_len > mrs || tag == wire::kNoTag) return Errc::malformed_tlp;
        Tlp t(TlpKind::IoRead);
        t.address_ = address;
        t.tag_ = tag;
        t.length_ = static_cast<std::uint16_t>(read_len);
        return t;
    }

    static Result<Tlp> io_write(std::uint64_t address, std::uint16_t tag,
                                std::vector<std::uint8_t> payload,
                                std::uint32_t mrs = kDefaultMrs) {
        if (payload.size() > mrs || tag == wire::kNoTag) return Errc::malformed_tlp;
        Tlp t(TlpKind::IoWrite);
        t.address_ = address;
        t.tag_ = tag;
        t.set_payload(std::move(payload));
        return t;
    }

    static Result<Tlp> config_read(std::uint8_t bus, std::uint8_t device, std::uint16_t reg,
                                   std::uint16_t tag, std::uint32_t read_len = 4,
                                   std::uint32_t mrs = kDefaultMrs) {
        if (read_len == 0 || read_len > mrs || tag == wire::kNoTag) return Errc::malformed_tlp;
        Tlp t(TlpKind::ConfigRead);
        t.bus_id_ = bus;
        t.device_id_ = device;
        t.address_ = reg;  // register offset travels in the address field
        t.tag_ = tag;
        t.length_ = static_cast<std::uint16_t>(read_len);
        return t;
    }

    static Result<Tlp> config_write(std::uint8_t bus, std::uint8_t device, std::uint16_t reg,
                                    std::uint16_t tag, std::vector<std::uint8_t> payload,
                                    std::uint32_t mrs = kDefaultMrs) {
        if (payload.size() > mrs || tag == wire::kNoTag) return Errc::malformed_tlp;
        Tlp t(TlpKind::ConfigWrite);
        t.bus_id_ = bus;
        t.device_id_ = device;
        t.address_ = reg;
        t.tag_ = tag;
        t.set_payload(std::move(payload));
        return t;
    }

    static Result<Tlp> message_to_address(std::uint64_t address, std::vector<std::uint8_t> payload,
                                          std::uint32_t mrs = kDefaultMrs) {
        if (payload.size() > mrs) return Errc::malformed_tlp;
        Tlp t(TlpKind::Message);
        t.routing_ = MessageRouting::AddressRouted;
        t.address_ = address;
        t.set_payload(std::move(payload));
        return t;
    }

    static Result<Tlp> message_to_id(std::uint8_t bus, std::uint8_t device,
                                     std::vector<std::uint8_t> payload,
                                     std::uint32_t mrs = kDefaultMrs) {
        if (payload.size() > mrs) return Errc::malformed_tlp;
        Tlp t(TlpKind::Message);
        t.routing_ = MessageRouting::IdRouted;
        t.bus_id_ = bus;
        t.device_id_ = device;
        t.set_payload(std::move(payload));
        return t;
    }

    static Result<Tlp> message_local(std::vector<std::uint8_t> payload,
                                     std::uint32_t mrs = kDefaultMrs) {
        if (payload.size() > mrs) return Errc::malformed_tlp;
        Tlp t(TlpKind::Message);
        t.routing_ = MessageRouting::Local;
        t.set_payload(std::move(payload));
        return t;
    }

    // One completion per request; the requested length never exceeds MRS, so
    // the multi-completion split of larger reads never arises here.
    static Result<Tlp> completion(std::uint8_t requester_bus, std::uint8_t requester_device,
                                  std::uint16_t tag, std::vector<std::uint8_t> payload,
                                  std::uint32_t mrs = kDefaultMrs) {
        if (payload.size() > mrs || tag == wire::kNoTag) return Errc::malformed_tlp;
        Tlp t(TlpKind::Completion);
        t.bus_id_ = requester_bus;
        t.device_id_ = requester_device;
        t.tag_ = tag;
        t.set_payload(std::move(payload));
        return t;
    }

    TlpKind kind() const { return kind_; }
    std::uint64_t address() const { return address_; }
    std::uint16_t config_reg() const { return static_cast<std::uint16_t>(address_); }
    std::uint8_t bus_id() const { return bus_id_; }
    std::uint8_t device_id() const { return device_id_; }
    MessageRouting message_routing() const { return routing_; }
    std::uint16_t tag() const { return tag_; }
    bool has_tag() const { return tag_ != wire::kNoTag; }

    const std::vector<std::uint8_t>& payload() const { return payload_; }
    std::uint32_t payload_len() const { return static_cast<std::uint32_t>(payload_.size()); }
    // Requested byte count of a read; payload length otherwise.
    std::uint32_t length() const { return length_; }

    bool operator==(const Tlp&) const = default;

    std::array<std::uint8_t, wire::kTlpHeaderSize> encode_header() const {
        std::array<std::uint8_t, wire::kTlpHeaderSize> h{};
        h[0] = static_cast<std::uint8_t>(kind_);
        h[1] = kind_ == TlpKind::Message ? static_cast<std::uint8_t>(routing_) : wire::kNoRouting;
        put_le16(&h[2], tag_);
        put_le64(&h[4], address_);
        h[12] = bus_id_;
        h[13] = device_id_;
        put_le16(&h[14], length_);
        return h;
    }

    // Rebuild a Tlp from its wire header and payload bytes, re-validating the
    // per-kind field consistency the factories enforce.
    static Result<Tlp> decode(std::span<const std::uint8_t, wire::kTlpHeaderSize> header,
                              std::vector<std::uint8_t> payload) {
        if (header[0] > static_cast<std::uint8_t>(TlpKind::Completion)) return Errc::malformed_tlp;
        const auto kind = static_cast<TlpKind>(header[0]);
        const std::uint8_t routing = header[1];
        const std::uint16_t tag = get_le16(&header[2]);
        const std::uint64_t address = get_le64(&header[4]);
        const std::uint16_t length = get_le16(&header[14]);

        if (kind == TlpKind::Message) {
            if (routing > static_cast<std::uint8_t>(MessageRouting::Local)) return Errc::malformed_tlp;
        } else if (routing != wire::kNoRouting) {
            return Errc::malformed_tlp;
        }
        if (carries_tag(kind) != (tag != wire::kNoTag)) return Errc::malformed_tlp;
        if (is_read(kind)) {
            if (!payload.empty() || length == 0) return Errc::malformed_tlp;
        } else if (length != payload.size()) {
            return Errc::malformed_tlp;
        }

        Tlp t(kind);
        t.routing_ = kind == TlpKind::Message ? static_cast<MessageRouting>(routing)
                                              : MessageRouting::AddressRouted;
        t.tag_ = tag;
        t.address_ = address;
        t.bus_id_ = header[12];
        t.device_id_ = header[13];
        t.length_ = length;
        t.payload_ = std::move(payload);
        return t;
    }

private:
    explicit Tlp(TlpKind kind) : kind_(kind) {}

    void set_payload(std::vector<std::uint8_t> p) {
        length_ = static_cast<std::uint16_t>(p.size());
        payload_ = std::move(p);
    }

    static void put_le16(std::uint8_t* out, std::uint16_t v) {
        out[0] = static_cast<std::uint8_t>(v);
        out[1] = static_cast<std::uint8_t>(v >> 8);
    }
    static void put_le64(std::uint8_t* out, std::uint64_t v) {
        for (int i = 0; i < 8; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
    }
    static std::uint16_t get_le16(const std::uint8_t* in) {
        return static_cast<std::uint16_t>(in[0] | (in[1] << 8));
    }
    static std::uint64_t get_le64(const std::uint8_t* in) {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
        return v;
    }

    TlpKind kind_;
    MessageRouting routing_ = MessageRouting::AddressRouted;
    std::uint16_t tag_ = wire::kNoTag;
    std::uint64_t address_ = 0;
    std::uint8_t bus_id_ = 0;
    std::uint8_t device_id_ = 0;
    std::uint16_t length_ = 0;
    std::vector<std::uint8_t> payload_;
};

// classify is total over constructed TLPs: the factories and decode() already
// rejected inconsistent field combinations.
inline RouteClass classify(const Tlp& tlp) {
    switch (tlp.kind()) {
        case TlpKind::MemRead:
        case TlpKind::MemWrite:
        case TlpKind::IoRead:
        case TlpKind::IoWrite:
            return RouteClass::AddressRouted;
        case TlpKind::ConfigRead:
        case TlpKind::ConfigWrite:
        case TlpKind::Completion:
            return RouteClass::IdRouted;
        case TlpKind::Message:
            switch (tlp.message_routing()) {
                case MessageRouting::AddressRouted: return RouteClass::AddressRouted;
                case MessageRouting::IdRouted: return RouteClass::IdRouted;
                case MessageRouting::Local: return RouteClass::LocalOnly;
            }
    }
    return RouteClass::LocalOnly;
}

// The finite tag namespace of one requester. A non-posted transaction holds a
// tag from issue until its completion arrives; when every tag is in flight,
// new transactions block. Tags are handed out lowest-free-first so runs are
// reproducible.
class TagPool {
public:
    explicit TagPool(std::uint16_t capacity = kDefaultTagCount)
        : used_(capacity, false) {}

    // Blocked (nullopt) is a normal outcome, not an error.
    std::optional<std::uint16_t> acquire() {
        if (live_ == used_.size()) return std::nullopt;
        for (std::size_t t = 0; t < used_.size(); ++t) {
            if (!used_[t]) {
                used_[t] = true;
                ++live_;
                return static_cast<std::uint16_t>(t);
            }
        }
        return std::nullopt;  // unreachable: live_ < size implies a free slot
    }

    // A release without a matching acquire signals a protocol bug
    // (completion without request).
    Errc release(std::uint16_t tag) {
        if (tag >= used_.size() || !used_[tag]) return Errc::unknown_tag;
        used_[tag] = false;
        --live_;
        return Errc::ok;
    }

    bool contains(std::uint16_t tag) const { return tag < used_.size() && used_[tag]; }
    std::size_t in_flight() const { return live_; }
    std::uint16_t capacity() const { return static_cast<std::uint16_t>(used_.size()); }
    bool exhausted() const { return live_ == used_.size(); }

private:
    std::vector<bool> used_;
    std::size_t live_ = 0;
};

// Link geometry of one PCIe attachment point.
struct LinkParams {
    std::uint32_t mrs = kDefaultMrs;
    double lane_rate = 983.75e6;  // bytes/s per lane; PCIe Gen3 is ~7.87 Gbit/s
    std::uint32_t lanes = 16;

    double bytes_per_second() const { return lane_rate * lanes; }

    bool valid() const {
        return mrs > 0 && lane_rate > 0 &&
               (lanes == 1 || lanes == 2 || lanes == 4 || lanes == 8 || lanes == 16);
    }
};

}  // namespace fabricpool
