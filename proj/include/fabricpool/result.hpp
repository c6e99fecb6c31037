#pragma once

#include <cstdint>
#include <string_view>
#include <utility>
#include <variant>

namespace fabricpool {

// Error codes shared across the library. Contract outcomes that are not
// failures (a blocked tag acquire, a routing miss) are expressed as
// std::optional / variant alternatives instead of Errc values.
enum class Errc : std::uint8_t {
    ok = 0,
    unknown_tag,
    malformed_tlp,
    no_free_bus,
    overlapping_window,
    invalid_window,
    entry_not_used,
    slot_invalid,
    slot_busy,
    not_bound,
    unknown_node,
    mtu_too_small,
    crc_mismatch,
    malformed_packet,
    incomplete_group,
    reordered_group,
    insufficient,
    empty_trace,
    invalid_spec,
    parse_error,
};

constexpr std::string_view to_string(Errc e) {
    switch (e) {
        case Errc::ok: return "ok";
        case Errc::unknown_tag: return "UnknownTag";
        case Errc::malformed_tlp: return "MalformedTlp";
        case Errc::no_free_bus: return "NoFreeBus";
        case Errc::overlapping_window: return "OverlappingWindow";
        case Errc::invalid_window: return "InvalidWindow";
        case Errc::entry_not_used: return "EntryNotUsed";
        case Errc::slot_invalid: return "SlotInvalid";
        case Errc::slot_busy: return "SlotBusy";
        case Errc::not_bound: return "NotBound";
        case Errc::unknown_node: return "UnknownNode";
        case Errc::mtu_too_small: return "MtuTooSmall";
        case Errc::crc_mismatch: return "CrcMismatch";
        case Errc::malformed_packet: return "MalformedPacket";
        case Errc::incomplete_group: return "IncompleteGroup";
        case Errc::reordered_group: return "ReorderedGroup";
        case Errc::insufficient: return "Insufficient";
        case Errc::empty_trace: return "EmptyTrace";
        case Errc::invalid_spec: return "InvalidSpec";
        case Errc::parse_error: return "ParseError";
    }
    return "?";
}

// Value-or-error. std::expected is not available in C++20, and the handful
// of operations below don't justify pulling in a full implementation.
template <typename T>
class Result {
public:
    Result(T value) : v_(std::move(value)) {}
    Result(Errc error) : v_(error) {}

    bool ok() const { return std::holds_alternative<T>(v_); }
    explicit operator bool() const { return ok(); }

    Errc error() const { return ok() ? Errc::ok : std::get<Errc>(v_); }

    T& operator*() { return std::get<T>(v_); }
    const T& operator*() const { return std::get<T>(v_); }
    T* operator->() { return &std::get<T>(v_); }
    const T* operator->() const { return &std::get<T>(v_); }

    T value_or(T fallback) const { return ok() ? std::get<T>(v_) : std::move(fallback); }

private:
    std::variant<T, Errc> v_;
};

}  // namespace fabricpool
