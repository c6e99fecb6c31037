#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "tlp.hpp"

namespace fabricpool {

using Nanos = std::int64_t;

// Round-trip decomposition of one small non-posted transaction. The fabric
// path costs the native PCIe round trip plus network transmission plus the
// packet conversion spent in the two proxies.
struct LatencyProfile {
    Nanos rtt_original = 1200;
    Nanos net_transmission = 1900;
    Nanos packet_conversion = 3700;

    Nanos rtt_fabric() const { return rtt_original + net_transmission + packet_conversion; }
    Nanos rtt_delta() const { return net_transmission + packet_conversion; }

    static LatencyProfile native(Nanos rtt_original_ns) { return {rtt_original_ns, 0, 0}; }

    bool valid() const {
        return rtt_original >= 0 && net_transmission >= 0 && packet_conversion >= 0;
    }

    bool operator==(const LatencyProfile&) const = default;
};

enum class SimAction : std::uint8_t { IssueRead, Completion, IssueWrite, Delivered };

struct SimEvent {
    Nanos timestamp;
    std::uint64_t sequence;  // monotone tiebreaker; total order is (timestamp, sequence)
    SimAction action;
    std::uint16_t tag;  // wire::kNoTag for posted traffic

    bool operator==(const SimEvent&) const = default;
};

struct StreamResult {
    std::uint64_t bytes_moved = 0;
    Nanos elapsed = 0;
    std::uint32_t max_tags_in_flight = 0;

    double throughput() const {  // bytes/second
        return elapsed > 0 ? static_cast<double>(bytes_moved) * 1e9 / static_cast<double>(elapsed)
                           : 0.0;
    }

    bool operator==(const StreamResult&) const = default;
};

// Steady-state read throughput of a tag-limited pipeline:
// #tags * MRS / RTT, in bytes per second.
inline double analytic_read_throughput(std::uint32_t tags, std::uint32_t mrs, Nanos rtt) {
    if (tags == 0 || mrs == 0 || rtt <= 0) return 0.0;
    return static_cast<double>(tags) * static_cast<double>(mrs) * 1e9 /
           static_cast<double>(rtt);
}

// Event-driven read stream: MRS-sized requests issue the instant a tag frees,
// and each completion returns one round trip later, serialized through the
// return link when link_bw > 0 (0 leaves the wire uncapped). Wire occupancy
// is tracked exactly in double nanoseconds; event timestamps round to
// integer nanoseconds.
inline StreamResult simulate_read_stream(const LatencyProfile& profile, std::uint32_t tags,
                                         std::uint32_t mrs, std::uint64_t total_bytes,
                                         double link_bw = 0.0,
                                         std::vector<SimEvent>* trace = nullptr) {
    if (tags == 0 || mrs == 0 || total_bytes == 0) return {};
    const Nanos rtt = profile.rtt_fabric();
    const std::uint64_t chunks = (total_bytes + mrs - 1) / mrs;

    struct Pending {
        Nanos time;
        std::uint64_t order;
        std::uint16_t tag;
        std::uint32_t bytes;
    };
    auto later = [](const Pending& a, const Pending& b) {
        return a.time != b.time ? a.time > b.time : a.order > b.order;
    };
    std::priority_queue<Pending, std::vector<Pending>, decltype(later)> completions(later);

    TagPool pool(static_cast<std::uint16_t>(std::min<std::uint32_t>(tags, 0xFFFE)));
    std::uint64_t seq = 0;
    std::uint64_t next_chunk = 0;
    std::uint64_t bytes_done = 0;
    std::uint32_t max_in_flight = 0;
    double wire_busy = 0.0;
    Nanos finish = 0;

    auto issue = [&](Nanos now) {
        const auto tag = pool.acquire();
        const std::uint32_t bytes =
            next_chunk + 1 == chunks
                ? static_cast<std::uint32_t>(total_bytes - next_chunk * mrs)
                : mrs;
        ++next_chunk;
        max_in_flight = std::max(max_in_flight, static_cast<std::uint32_t>(pool.in_flight()));
        if (trace) trace->push_back({now, seq, SimAction::IssueRead, *tag});
        ++seq;
        double arrival = static_cast<double>(now + rtt);
        if (link_bw > 0.0) {
            arrival = std::max(arrival, wire_busy) +
                      static_cast<double>(bytes) * 1e9 / link_bw;
            wire_busy = arrival;
        }
        completions.push({static_cast<Nanos>(std::llround(arrival)), seq, *tag, bytes});
        ++seq;
    };

    const std::uint64_t initial = std::min<std::uint64_t>(pool.capacity(), chunks);
    for (std::uint64_t i = 0; i < initial; ++i) issue(0);

    while (!completions.empty()) {
        const Pending c = completions.top();
        completions.pop();
        pool.release(c.tag);
        bytes_done += c.bytes;
        finish = c.time;
        if (trace) trace->push_back({c.time, seq, SimAction::Completion, c.tag});
        ++seq;
        if (next_chunk < chunks) issue(c.time);
    }
    return {bytes_done, finish, max_in_flight};
}

// Posted write stream: no tags, no completions. The fabric shows up once as
// a half round-trip-delta first-byte cost; throughput is set by the link.
inline StreamResult simulate_write_stream(const LatencyProfile& profile, const LinkParams& link,
                                          std::uint64_t total_bytes,
                                          std::vector<SimEvent>* trace = nullptr) {
    const double rate = link.bytes_per_second();
    if (total_bytes == 0 || rate <= 0.0) return {};
    const double first_byte = static_cast<double>(profile.rtt_delta()) * 0.5;
    const double tx = static_cast<double>(total_bytes) * 1e9 / rate;
    const Nanos elapsed = static_cast<Nanos>(std::llround(first_byte + tx));
    if (trace) {
        trace->push_back({0, 0, SimAction::IssueWrite, wire::kNoTag});
        trace->push_back({elapsed, 1, SimAction::Delivered, wire::kNoTag});
    }
    return {total_bytes, elapsed, 0};
}

struct DirectionalRate {
    double htod = 0.0;
    double dtoh = 0.0;

    bool operator==(const DirectionalRate&) const = default;
};

// Published saturation points of one box-side proxy.
inline constexpr DirectionalRate kDefaultProxyCapacity{8.4e9, 3.6e9};

// Aggregate bandwidth of gpu_count GPUs behind one proxy: linear scaling up
// to the proxy's processing capacity, clipped above it. A capacity <= 0
// means unlimited.
inline DirectionalRate simulate_multi_gpu(DirectionalRate per_gpu, DirectionalRate proxy_capacity,
                                          std::uint32_t gpu_count) {
    auto clip = [gpu_count](double per, double cap) {
        const double aggregate = per * static_cast<double>(gpu_count);
        return cap > 0.0 ? std::min(aggregate, cap) : aggregate;
    };
    return {clip(per_gpu.htod, proxy_capacity.htod), clip(per_gpu.dtoh, proxy_capacity.dtoh)};
}

}  // namespace fabricpool
