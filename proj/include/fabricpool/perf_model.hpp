#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fabric_sim.hpp"
#include "result.hpp"
#include "textio.hpp"

namespace fabricpool {

enum class WorkloadKind : std::uint8_t { HtoD, DtoH, Kernel, Memset };

// One host/GPU interaction as observed in a native run: a memcpy with its
// size and native transfer time, or a kernel/memset with its native
// execution time.
struct WorkloadEvent {
    WorkloadKind kind;
    std::uint64_t bytes = 0;  // memcpy kinds only
    Nanos native_duration = 0;

    bool valid() const {
        if (native_duration <= 0) return false;
        if ((kind == WorkloadKind::HtoD || kind == WorkloadKind::DtoH) && bytes == 0) return false;
        return true;
    }

    bool operator==(const WorkloadEvent&) const = default;
};

struct WorkloadTrace {
    std::vector<WorkloadEvent> events;
    std::string label;

    bool operator==(const WorkloadTrace&) const = default;
};

struct PredictionReport {
    Nanos native_total = 0;
    Nanos fabric_total = 0;
    double performance = 1.0;  // native_total / fabric_total, in (0, 1]
    Nanos kernel_overhead = 0;  // kernels and memsets
    Nanos htod_overhead = 0;
    Nanos dtoh_overhead = 0;

    bool operator==(const PredictionReport&) const = default;
};

namespace detail {

// Tag-limited read rate, capped by what the native link sustains. A cap <= 0
// means uncapped.
inline double read_rate(std::uint32_t tags, std::uint32_t mrs, Nanos rtt, double cap) {
    const double limit = cap > 0.0 ? cap : std::numeric_limits<double>::infinity();
    if (rtt <= 0) return limit;
    return std::min(analytic_read_throughput(tags, mrs, rtt), limit);
}

}  // namespace detail

// Added time one event costs over the fabric.
//
//   kernel / memset            one extra round-trip delta per launch
//   DtoH (posted writes)       half a delta: no completion comes back
//   HtoD within the pipeline   one delta: the tag window absorbs the data
//   HtoD beyond the pipeline   the transfer runs at the fabric read rate
//                              instead of the native one, never cheaper
//                              than a delta
inline Nanos event_overhead(const WorkloadEvent& event, const LatencyProfile& profile,
                            std::uint32_t tags, std::uint32_t mrs, double native_read_bw) {
    const Nanos delta = profile.rtt_delta();
    if (delta == 0) return 0;  // the fabric path degenerates to the native one
    switch (event.kind) {
        case WorkloadKind::Kernel:
        case WorkloadKind::Memset:
            return delta;
        case WorkloadKind::DtoH:
            return static_cast<Nanos>(std::llround(static_cast<double>(delta) * 0.5));
        case WorkloadKind::HtoD: {
            const std::uint64_t pipeline_bytes =
                static_cast<std::uint64_t>(tags) * static_cast<std::uint64_t>(mrs);
            if (event.bytes <= pipeline_bytes) return delta;
            const double rate_native =
                detail::read_rate(tags, mrs, profile.rtt_original, native_read_bw);
            const double rate_fabric =
                detail::read_rate(tags, mrs, profile.rtt_fabric(), native_read_bw);
            const double scaled =
                static_cast<double>(event.native_duration) * (rate_native / rate_fabric);
            const Nanos penalty =
                static_cast<Nanos>(std::llround(scaled)) - event.native_duration;
            return std::max(penalty, delta);
        }
    }
    return 0;
}

// Serialized additive model: every event keeps its native duration and pays
// its overhead; nothing overlaps. performance == 1 exactly when the latency
// delta is zero.
inline Result<PredictionReport> predict(const WorkloadTrace& trace, const LatencyProfile& profile,
                                        std::uint32_t tags, std::uint32_t mrs,
                                        double native_read_bw) {
    if (trace.events.empty()) return Errc::empty_trace;
    PredictionReport report;
    for (const auto& event : trace.events) {
        const Nanos overhead = event_overhead(event, profile, tags, mrs, native_read_bw);
        report.native_total += event.native_duration;
        switch (event.kind) {
            case WorkloadKind::Kernel:
            case WorkloadKind::Memset:
                report.kernel_overhead += overhead;
                break;
            case WorkloadKind::HtoD:
                report.htod_overhead += overhead;
                break;
            case WorkloadKind::DtoH:
                report.dtoh_overhead += overhead;
                break;
        }
    }
    report.fabric_total = report.native_total + report.kernel_overhead +
                          report.htod_overhead + report.dtoh_overhead;
    report.performance = static_cast<double>(report.native_total) /
                         static_cast<double>(report.fabric_total);
    return report;
}

// Predicted performance across fabric round-trip values (each >= the native
// round trip; the whole increase is attributed to the fabric). rtt_values
// sorted ascending yield a non-increasing performance column.
inline std::vector<std::pair<Nanos, double>> sweep_rtt(const WorkloadTrace& trace,
                                                       std::span<const Nanos> rtt_values,
                                                       Nanos rtt_original, std::uint32_t tags,
                                                       std::uint32_t mrs, double native_read_bw) {
    std::vector<std::pair<Nanos, double>> out;
    out.reserve(rtt_values.size());
    for (Nanos rtt : rtt_values) {
        LatencyProfile profile{rtt_original, std::max<Nanos>(rtt - rtt_original, 0), 0};
        auto report = predict(trace, profile, tags, mrs, native_read_bw);
        out.emplace_back(rtt, report ? report->performance : 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Trace synthesis
// ---------------------------------------------------------------------------

// Kernels at or below this duration count as short; their relative
// round-trip overhead is the largest.
inline constexpr Nanos kShortKernelMax = 10'000;

struct TraceSpec {
    enum class Durations : std::uint8_t {
        SinglePoint,   // every kernel exactly mean_duration
        ShortLongMix,  // short_fraction of kernels in the short band
    };

    std::uint32_t kernel_count = 0;
    Durations model = Durations::ShortLongMix;
    Nanos mean_duration = 0;
    double short_fraction = 0.59;

    // Optional memcpy traffic spread evenly through the kernel stream.
    std::uint32_t htod_count = 0;
    std::uint64_t htod_bytes = 0;
    Nanos htod_native = 0;
    std::uint32_t dtoh_count = 0;
    std::uint64_t dtoh_bytes = 0;
    Nanos dtoh_native = 0;

    std::uint64_t seed = 1;
    std::string label;
};

namespace detail {

// std::uniform_* distributions are implementation-defined; these are not.
inline std::uint64_t draw_below(std::mt19937_64& rng, std::uint64_t n) {
    return n == 0 ? 0 : rng() % n;
}

template <typename T>
inline void shuffle_events(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i)
        std::swap(v[i - 1], v[draw_below(rng, i)]);
}

// Random durations with an exact total: the base value carries the target
// sum, and jitter is applied in equal-and-opposite pairs that stay inside
// [low, high].
inline void jittered_fill(std::vector<Nanos>& out, std::size_t count, std::int64_t total,
                          Nanos low, Nanos high, std::mt19937_64& rng) {
    if (count == 0) return;
    const std::int64_t base = total / static_cast<std::int64_t>(count);
    std::int64_t remainder = total - base * static_cast<std::int64_t>(count);
    std::vector<Nanos> vals(count, base);
    for (std::size_t i = 0; i < count && remainder > 0; ++i, --remainder) ++vals[i];
    const Nanos amplitude = std::max<Nanos>(std::min(base - low, high - base), 0);
    for (std::size_t i = 0; i + 1 < count; i += 2) {
        const Nanos d = static_cast<Nanos>(draw_below(rng, static_cast<std::uint64_t>(amplitude)));
        vals[i] += d;
        vals[i + 1] -= d;
    }
    out.insert(out.end(), vals.begin(), vals.end());
}

}  // namespace detail

// Build a reproducible trace hitting the requested mean kernel duration
// exactly and the short-kernel fraction to the nearest kernel.
inline Result<WorkloadTrace> synthesize_trace(const TraceSpec& spec) {
    if (spec.kernel_count == 0 || spec.mean_duration <= 0) return Errc::invalid_spec;
    if (spec.htod_count > 0 && (spec.htod_bytes == 0 || spec.htod_native <= 0))
        return Errc::invalid_spec;
    if (spec.dtoh_count > 0 && (spec.dtoh_bytes == 0 || spec.dtoh_native <= 0))
        return Errc::invalid_spec;

    std::mt19937_64 rng(spec.seed);
    std::vector<Nanos> durations;
    durations.reserve(spec.kernel_count);

    if (spec.model == TraceSpec::Durations::SinglePoint) {
        durations.assign(spec.kernel_count, spec.mean_duration);
    } else {
        if (spec.short_fraction < 0.0 || spec.short_fraction > 1.0) return Errc::invalid_spec;
        const auto n = static_cast<std::int64_t>(spec.kernel_count);
        const auto n_short = static_cast<std::int64_t>(
            std::llround(spec.short_fraction * static_cast<double>(n)));
        const std::int64_t n_long = n - n_short;
        const std::int64_t total = n * spec.mean_duration;

        // Short kernels sit in the middle of the [1, 10] us band.
        const Nanos short_mean = (1'000 + kShortKernelMax) / 2;
        if (n_long == 0) {
            // All-short trace: the mean itself must fit in the band.
            if (spec.mean_duration > kShortKernelMax - 100 || spec.mean_duration < 1'100)
                return Errc::invalid_spec;
            detail::jittered_fill(durations, static_cast<std::size_t>(n_short), total, 1'000,
                                  kShortKernelMax, rng);
        } else {
            const std::int64_t long_total = total - n_short * short_mean;
            if (long_total < n_long * (kShortKernelMax + 1'000)) return Errc::invalid_spec;
            detail::jittered_fill(durations, static_cast<std::size_t>(n_short),
                                  n_short * short_mean, 1'000, kShortKernelMax, rng);
            detail::jittered_fill(durations, static_cast<std::size_t>(n_long), long_total,
                                  kShortKernelMax + 1, total, rng);
        }
    }
    detail::shuffle_events(durations, rng);

    WorkloadTrace trace;
    trace.label = spec.label;
    trace.events.reserve(spec.kernel_count + spec.htod_count + spec.dtoh_count);
    for (Nanos d : durations) trace.events.push_back({WorkloadKind::Kernel, 0, d});

    // Weave memcpys through the kernel stream at even intervals.
    const std::uint32_t copies = spec.htod_count + spec.dtoh_count;
    for (std::uint32_t i = 0; i < copies; ++i) {
        WorkloadEvent e = i < spec.htod_count
                              ? WorkloadEvent{WorkloadKind::HtoD, spec.htod_bytes, spec.htod_native}
                              : WorkloadEvent{WorkloadKind::DtoH, spec.dtoh_bytes, spec.dtoh_native};
        const std::size_t pos = (static_cast<std::size_t>(i) + 1) * trace.events.size() / (copies + 1);
        trace.events.insert(trace.events.begin() + static_cast<std::ptrdiff_t>(pos), e);
    }
    return trace;
}

// ---------------------------------------------------------------------------
// Trace file format: one event per line, `kind,bytes,native_duration_ns`,
// kind in {htod, dtoh, kernel, memset}; '#' starts a comment line.
// ---------------------------------------------------------------------------

inline std::string trace_to_csv(const WorkloadTrace& trace) {
    std::string out = "kind,bytes,native_duration_ns\n";
    for (const auto& e : trace.events) {
        switch (e.kind) {
            case WorkloadKind::HtoD: out += "htod,"; break;
            case WorkloadKind::DtoH: out += "dtoh,"; break;
            case WorkloadKind::Kernel: out += "kernel,"; break;
            case WorkloadKind::Memset: out += "memset,"; break;
        }
        out += std::to_string(e.bytes);
        out += ',';
        out += std::to_string(e.native_duration);
        out += '\n';
    }
    return out;
}

inline Result<WorkloadTrace> parse_trace_csv(std::string_view text, std::string& diag) {
    WorkloadTrace trace;
    bool failed = false;
    detail::for_each_line(text, [&](std::size_t line_no, std::string_view line) {
        if (line.empty() || line[0] == '#') return true;
        if (line == "kind,bytes,native_duration_ns") return true;

        const std::size_t c1 = line.find(',');
        const std::size_t c2 = c1 == std::string_view::npos ? c1 : line.find(',', c1 + 1);
        if (c2 == std::string_view::npos) {
            diag = "line " + std::to_string(line_no) + ": expected kind,bytes,native_duration_ns";
            failed = true;
            return false;
        }
        const std::string_view kind_s = line.substr(0, c1);
        WorkloadEvent e{};
        if (kind_s == "htod") e.kind = WorkloadKind::HtoD;
        else if (kind_s == "dtoh") e.kind = WorkloadKind::DtoH;
        else if (kind_s == "kernel") e.kind = WorkloadKind::Kernel;
        else if (kind_s == "memset") e.kind = WorkloadKind::Memset;
        else {
            diag = "line " + std::to_string(line_no) + ": unknown kind '" + std::string(kind_s) + "'";
            failed = true;
            return false;
        }
        std::uint64_t bytes = 0;
        std::uint64_t dur = 0;
        if (!detail::parse_field(line.substr(c1 + 1, c2 - c1 - 1), bytes) ||
            !detail::parse_field(line.substr(c2 + 1), dur)) {
            diag = "line " + std::to_string(line_no) + ": bad numeric field";
            failed = true;
            return false;
        }
        e.bytes = bytes;
        e.native_duration = static_cast<Nanos>(dur);
        if (!e.valid()) {
            diag = "line " + std::to_string(line_no) + ": invalid event";
            failed = true;
            return false;
        }
        trace.events.push_back(e);
        return true;
    });
    if (failed) return Errc::parse_error;
    return trace;
}

}  // namespace fabricpool
