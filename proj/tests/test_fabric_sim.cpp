#include <catch2/catch.hpp>

#include <set>
#include <vector>

#include "fabricpool/fabric_sim.hpp"

using namespace fabricpool;

namespace {
const LatencyProfile kMeasured{};  // 1.2 + 1.9 + 3.7 us
}

TEST_CASE("latency profile decomposition") {
    CHECK(kMeasured.rtt_fabric() == 6800);
    CHECK(kMeasured.rtt_delta() == 5600);
    CHECK(LatencyProfile::native(1200).rtt_fabric() == 1200);
    CHECK(LatencyProfile::native(1200).rtt_delta() == 0);
}

TEST_CASE("analytic read throughput is tags * mrs / rtt") {
    CHECK(analytic_read_throughput(140, 128, 6800) == Approx(140.0 * 128.0 * 1e9 / 6800.0));
    // measured operating points of the tag-limited law
    CHECK(analytic_read_throughput(140, 128, 6800) == Approx(2.64e9).epsilon(0.005));
    CHECK(analytic_read_throughput(140, 128, 4900) == Approx(3.66e9).epsilon(0.005));
    // single-tag stop-and-wait
    CHECK(analytic_read_throughput(1, 128, 1000) == Approx(1.28e8));
    CHECK(analytic_read_throughput(0, 128, 1000) == 0.0);
}

TEST_CASE("read stream converges to the analytic law") {
    // 5 tags, 10 us round trip, 64 KiB: the classic blocked pipeline
    auto r = simulate_read_stream(LatencyProfile{10'000, 0, 0}, 5, 128, 64 * 1024);
    CHECK(r.bytes_moved == 64 * 1024);
    CHECK(r.max_tags_in_flight == 5);
    CHECK(r.throughput() == Approx(64e6).epsilon(0.02));

    // measured profile, 100 MiB
    auto big = simulate_read_stream(kMeasured, 140, 128, 100ull << 20);
    CHECK(big.throughput() == Approx(analytic_read_throughput(140, 128, 6800)).epsilon(0.02));
    CHECK(big.max_tags_in_flight == 140);
    // the band holding both the model value and the hardware measurement
    CHECK(big.throughput() > 2.5e9);
    CHECK(big.throughput() < 2.8e9);

    // zero delta degenerates to the native pipeline
    auto native = simulate_read_stream(LatencyProfile::native(1200), 140, 128,
                                       100ull * 140 * 128);
    CHECK(native.throughput() == Approx(analytic_read_throughput(140, 128, 1200)).epsilon(0.02));
    auto zero_delta = simulate_read_stream(LatencyProfile{1200, 0, 0}, 140, 128,
                                           100ull * 140 * 128);
    CHECK(zero_delta == native);
}

TEST_CASE("sampled grid agrees with the analytic oracle within 2%") {
    for (std::uint32_t tags : {1u, 5u, 140u})
        for (Nanos rtt : {1200, 6800, 19000})
            for (std::uint32_t mrs : {64u, 256u}) {
                const std::uint64_t bytes = 100ull * tags * mrs;
                auto r = simulate_read_stream(LatencyProfile{rtt, 0, 0}, tags, mrs, bytes);
                INFO("tags=" << tags << " rtt=" << rtt << " mrs=" << mrs);
                CHECK(r.throughput() ==
                      Approx(analytic_read_throughput(tags, mrs, rtt)).epsilon(0.02));
            }
}

TEST_CASE("a link ceiling caps read throughput") {
    // native round trip would sustain ~14.9 GB/s; the link gives 11.2
    auto r = simulate_read_stream(LatencyProfile::native(1200), 140, 128, 100ull << 20, 11.2e9);
    CHECK(r.throughput() == Approx(11.2e9).epsilon(0.02));
    // with the fabric profile the tags bind first and the cap is invisible
    auto f = simulate_read_stream(kMeasured, 140, 128, 100ull << 20, 11.2e9);
    CHECK(f.throughput() == Approx(analytic_read_throughput(140, 128, 6800)).epsilon(0.02));
}

TEST_CASE("read throughput moves the right way with rtt and tags") {
    double prev = 1e18;
    for (Nanos rtt : {1200, 4900, 6800, 19000}) {
        auto r = simulate_read_stream(LatencyProfile{rtt, 0, 0}, 32, 128, 100ull * 32 * 128);
        CHECK(r.throughput() < prev);
        prev = r.throughput();
    }
    double prev_up = 0;
    for (std::uint32_t tags : {1u, 5u, 32u, 140u}) {
        auto r = simulate_read_stream(kMeasured, tags, 128, 100ull * tags * 128);
        CHECK(r.throughput() > prev_up);
        prev_up = r.throughput();
    }
    // once the link saturates, more tags stop helping
    auto a = simulate_read_stream(kMeasured, 600, 128, 100ull * 600 * 128, 2.0e9);
    auto b = simulate_read_stream(kMeasured, 1200, 128, 100ull * 1200 * 128, 2.0e9);
    CHECK(a.throughput() == Approx(2.0e9).epsilon(0.02));
    CHECK(b.throughput() == Approx(2.0e9).epsilon(0.02));
}

TEST_CASE("event log is deterministic and causal") {
    std::vector<SimEvent> t1, t2;
    auto r1 = simulate_read_stream(kMeasured, 5, 128, 16 * 1024, 0.0, &t1);
    auto r2 = simulate_read_stream(kMeasured, 5, 128, 16 * 1024, 0.0, &t2);
    REQUIRE(r1 == r2);
    REQUIRE(t1 == t2);
    REQUIRE(!t1.empty());

    // (timestamp, sequence) strictly increases; tags obey the pool discipline
    std::set<std::uint16_t> in_flight;
    Nanos last_ts = 0;
    std::uint64_t last_seq = 0;
    std::size_t max_in_flight = 0;
    for (std::size_t i = 0; i < t1.size(); ++i) {
        const auto& e = t1[i];
        REQUIRE(e.timestamp >= last_ts);
        if (i > 0) REQUIRE(e.sequence > last_seq);
        last_ts = e.timestamp;
        last_seq = e.sequence;
        if (e.action == SimAction::IssueRead) {
            REQUIRE(in_flight.count(e.tag) == 0);
            in_flight.insert(e.tag);
            max_in_flight = std::max(max_in_flight, in_flight.size());
        } else if (e.action == SimAction::Completion) {
            REQUIRE(in_flight.count(e.tag) == 1);  // no completion precedes its issue
            in_flight.erase(e.tag);
        }
    }
    CHECK(in_flight.empty());
    CHECK(max_in_flight <= 5);
    CHECK(max_in_flight == r1.max_tags_in_flight);
}

TEST_CASE("posted write stream is limited by the link, not the rtt") {
    const LinkParams link{128, 781.25e6, 16};  // 12.5 GB/s
    const std::uint64_t bytes = 100ull << 20;

    auto native = simulate_write_stream(LatencyProfile::native(1200), link, bytes);
    auto fabric = simulate_write_stream(kMeasured, link, bytes);
    CHECK(native.elapsed == 8388608);
    CHECK(fabric.elapsed == 8388608 + 2800);  // one-way delta up front
    CHECK(fabric.throughput() / native.throughput() >= 0.92);
    CHECK(fabric.max_tags_in_flight == 0);

    // a much slower fabric round trip changes nothing but the constant
    auto slow = simulate_write_stream(LatencyProfile{1200, 19'000, 0}, link, bytes);
    CHECK(slow.elapsed - fabric.elapsed == (19'000 - 5600) / 2);

    // doubling the payload amortizes the latency term
    auto half = simulate_write_stream(kMeasured, link, bytes / 2);
    CHECK(fabric.elapsed < 2 * half.elapsed);
    CHECK(2 * half.elapsed - fabric.elapsed == 2800);
}

TEST_CASE("multi-GPU aggregate clips at the proxy capacity") {
    const DirectionalRate per_gpu{1.3e9, 0.45e9};
    const DirectionalRate cap{8.4e9, 3.6e9};

    CHECK(simulate_multi_gpu(per_gpu, cap, 1).htod == Approx(1.3e9));
    CHECK(simulate_multi_gpu(per_gpu, cap, 2).htod == Approx(2.6e9));
    CHECK(simulate_multi_gpu(per_gpu, cap, 4).htod == Approx(5.2e9));
    CHECK(simulate_multi_gpu(per_gpu, cap, 8).htod == Approx(8.4e9));  // clipped
    CHECK(simulate_multi_gpu(per_gpu, cap, 8).dtoh == Approx(3.6e9));

    // no capacity: exactly linear
    auto unlimited = simulate_multi_gpu(per_gpu, {0, 0}, 64);
    CHECK(unlimited.htod == Approx(64 * 1.3e9));
    CHECK(unlimited.dtoh == Approx(64 * 0.45e9));
}
