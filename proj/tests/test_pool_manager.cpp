#include <catch2/catch.hpp>

#include <map>
#include <random>
#include <set>
#include <vector>

#include "fabricpool/pool_manager.hpp"

using namespace fabricpool;

namespace {

Topology small_topology(std::uint32_t boxes = 2, std::uint32_t slots = 8,
                        std::uint32_t hosts = 2) {
    Topology topo;
    for (std::uint32_t h = 0; h < hosts; ++h) topo.hosts.push_back(static_cast<NodeId>(h));
    for (std::uint32_t b = 0; b < boxes; ++b)
        topo.boxes.push_back({static_cast<NodeId>(100 + b), std::vector<bool>(slots, true)});
    return topo;
}

// Invariants checked after every mutation: each used (box, slot) appears in
// exactly one host table, both table sides agree, and free + used covers
// every valid slot.
void check_consistency(const PoolManager& mgr) {
    std::map<std::pair<NodeId, SlotId>, NodeId> host_claims;
    for (NodeId h : mgr.topology().hosts) {
        const auto& table = mgr.host_table(h);
        for (std::uint16_t i = 0; i < table.size(); ++i) {
            const auto& e = table.entry(i);
            if (!e.used) continue;
            auto key = std::make_pair(e.gpu_box_id, e.slot_id);
            REQUIRE(host_claims.find(key) == host_claims.end());  // no double allocation
            host_claims[key] = h;
        }
    }
    std::size_t box_used = 0;
    std::size_t valid_total = 0;
    std::size_t free_total = 0;
    for (const auto& b : mgr.topology().boxes) {
        const auto& table = mgr.box_table(b.node);
        valid_total += table.valid_count();
        free_total += table.free_count();
        for (std::uint16_t s = 0; s < table.size(); ++s) {
            const auto& e = table.entry(static_cast<SlotId>(s));
            if (!e.used) continue;
            ++box_used;
            REQUIRE(e.valid);
            auto it = host_claims.find({b.node, e.slot_id});
            REQUIRE(it != host_claims.end());
            REQUIRE(it->second == e.host_node_id);  // bidirectional agreement
        }
    }
    REQUIRE(box_used == host_claims.size());
    REQUIRE(free_total + box_used == valid_total);  // conservation
}

}  // namespace

TEST_CASE("single-GPU request lands on the lowest box and slot") {
    PoolManager mgr(small_topology());
    auto grants = mgr.provision({0, 1, Placement::AnyWhere});
    REQUIRE(grants.ok());
    REQUIRE(grants->size() == 1);
    CHECK((*grants)[0].box == 100);
    CHECK((*grants)[0].slot == 0);
    CHECK((*grants)[0].path == 0);
    CHECK(mgr.events().size() == 1);
    CHECK(mgr.events()[0].to_line() == "ADD host=0 box=100 slot=0 path=0");
    check_consistency(mgr);
}

TEST_CASE("a same-box-required request of a full box size packs one box") {
    PoolManager mgr(small_topology(2, 8));
    auto grants = mgr.provision({0, 8, Placement::SameBoxRequired});
    REQUIRE(grants.ok());
    REQUIRE(grants->size() == 8);
    for (const auto& g : *grants) CHECK(g.box == (*grants)[0].box);
    check_consistency(mgr);
}

TEST_CASE("same-box preference falls back to spreading, required does not") {
    PoolManager mgr(small_topology(2, 4));
    REQUIRE(mgr.provision({0, 3, Placement::AnyWhere}).ok());  // box 100: 1 slot left

    auto spread = mgr.provision({1, 5, Placement::SameBox});
    REQUIRE(spread.ok());
    std::set<NodeId> boxes;
    for (const auto& g : *spread) boxes.insert(g.box);
    CHECK(boxes.size() == 2);
    check_consistency(mgr);

    PoolManager mgr2(small_topology(2, 4));
    REQUIRE(mgr2.provision({0, 3, Placement::AnyWhere}).ok());
    auto before = mgr2.snapshot();
    auto strict = mgr2.provision({1, 5, Placement::SameBoxRequired});
    CHECK(strict.error() == Errc::insufficient);
    CHECK(mgr2.snapshot() == before);  // atomic failure
}

TEST_CASE("insufficient pool leaves the state untouched") {
    PoolManager mgr(small_topology(1, 3, 1));
    REQUIRE(mgr.provision({0, 2, Placement::AnyWhere}).ok());
    const auto before = mgr.snapshot();
    const auto before_host = mgr.host_table(0).export_text();
    const auto before_box = mgr.box_table(100).export_text();

    auto fail = mgr.provision({0, 4, Placement::AnyWhere});
    CHECK(fail.error() == Errc::insufficient);
    CHECK(mgr.snapshot() == before);
    CHECK(mgr.host_table(0).export_text() == before_host);
    CHECK(mgr.box_table(100).export_text() == before_box);
    CHECK(mgr.events().size() == 2);  // no phantom events
}

TEST_CASE("host table capacity bounds a host's GPUs") {
    PoolManager mgr(small_topology(4, 8, 1), /*host_table_entries=*/4);
    CHECK(mgr.provision({0, 5, Placement::AnyWhere}).error() == Errc::no_free_bus);
    auto ok = mgr.provision({0, 4, Placement::AnyWhere});
    REQUIRE(ok.ok());
    check_consistency(mgr);
}

TEST_CASE("reserve slots are never provisioned") {
    PoolManager mgr(small_topology(1, 8, 1), 16, /*reserve=*/2);
    CHECK(mgr.provision({0, 7, Placement::AnyWhere}).error() == Errc::insufficient);
    auto ok = mgr.provision({0, 6, Placement::AnyWhere});
    REQUIRE(ok.ok());
    CHECK(mgr.free_slots() == 2);
    CHECK(mgr.provision({0, 1, Placement::AnyWhere}).error() == Errc::insufficient);
}

TEST_CASE("reclaim restores the initial pool state") {
    PoolManager mgr(small_topology());
    const auto initial = mgr.snapshot();
    auto grants = mgr.provision({0, 4, Placement::AnyWhere});
    REQUIRE(grants.ok());

    std::vector<std::uint16_t> ids;
    for (const auto& g : *grants) ids.push_back(g.host_entry_id);
    REQUIRE(mgr.reclaim(0, ids) == Errc::ok);
    CHECK(mgr.snapshot() == initial);
    CHECK(mgr.events().size() == 8);  // 4 ADD + 4 REMOVE
    CHECK(mgr.events().back().kind == HotPlugEvent::Kind::Removed);
    check_consistency(mgr);
}

TEST_CASE("a host cannot reclaim another host's GPU") {
    PoolManager mgr(small_topology());
    auto g0 = mgr.provision({0, 1, Placement::AnyWhere});
    REQUIRE(g0.ok());
    const std::uint16_t foreign = (*g0)[0].host_entry_id;
    CHECK(mgr.reclaim(1, std::vector<std::uint16_t>{foreign}) == Errc::not_bound);
    CHECK(mgr.reclaim(0, std::vector<std::uint16_t>{99}) == Errc::not_bound);
    // duplicate ids in one request
    CHECK(mgr.reclaim(0, std::vector<std::uint16_t>{foreign, foreign}) == Errc::not_bound);
    check_consistency(mgr);
}

TEST_CASE("snapshot counts and idempotence") {
    Topology topo;
    topo.hosts = {0, 1, 2, 3};
    for (std::uint32_t b = 0; b < 64; ++b)
        topo.boxes.push_back({static_cast<NodeId>(10 + b), std::vector<bool>(8, true)});
    PoolManager mgr(topo, 256);

    auto fresh = mgr.snapshot();
    CHECK(fresh.total_valid == 512);
    CHECK(fresh.total_free == 512);
    CHECK(fresh.total_used == 0);

    REQUIRE(mgr.provision({0, 8, Placement::SameBoxRequired}).ok());
    auto after = mgr.snapshot();
    CHECK(after.total_free == 504);
    CHECK(after.total_used == 8);
    CHECK(mgr.snapshot() == after);  // no mutation between calls
}

TEST_CASE("invalid slots are skipped") {
    Topology topo;
    topo.hosts = {0};
    topo.boxes.push_back({100, {true, false, true, false}});
    PoolManager mgr(topo);
    CHECK(mgr.snapshot().total_valid == 2);

    auto grants = mgr.provision({0, 2, Placement::AnyWhere});
    REQUIRE(grants.ok());
    CHECK((*grants)[0].slot == 0);
    CHECK((*grants)[1].slot == 2);
    CHECK(mgr.provision({0, 1, Placement::AnyWhere}).error() == Errc::insufficient);
    check_consistency(mgr);
}

// Reference model for the randomized check: hosts own sets of (box, slot);
// provisioning is first-fit over free valid slots.
namespace {

struct RefModel {
    std::map<NodeId, std::set<std::pair<NodeId, SlotId>>> owned;
    std::set<std::pair<NodeId, SlotId>> free;
    std::size_t host_capacity;

    bool can_provision(NodeId host, std::uint32_t count, Placement placement,
                       const std::map<NodeId, std::size_t>& box_free) const {
        if (owned.count(host) && owned.at(host).size() + count > host_capacity) return false;
        if (!owned.count(host) && count > host_capacity) return false;
        if (placement == Placement::SameBoxRequired) {
            for (const auto& [box, n] : box_free)
                if (n >= count) return true;
            return false;
        }
        return free.size() >= count;
    }
};

}  // namespace

TEST_CASE("random provision/reclaim churn keeps every invariant") {
    Topology topo;
    for (std::uint32_t h = 0; h < 8; ++h) topo.hosts.push_back(static_cast<NodeId>(h));
    for (std::uint32_t b = 0; b < 64; ++b)
        topo.boxes.push_back({static_cast<NodeId>(100 + b), std::vector<bool>(8, true)});
    PoolManager mgr(topo, 16);

    RefModel ref;
    ref.host_capacity = 16;
    for (const auto& b : topo.boxes)
        for (SlotId s = 0; s < 8; ++s) ref.free.insert({b.node, s});

    std::mt19937_64 rng(1234);
    int checked = 0;
    for (int step = 0; step < 2000; ++step) {
        const NodeId host = static_cast<NodeId>(rng() % 8);
        if (rng() % 3 != 0) {
            const auto count = static_cast<std::uint32_t>(1 + rng() % 8);
            const auto placement = static_cast<Placement>(rng() % 3);

            std::map<NodeId, std::size_t> box_free;
            for (const auto& p : ref.free) ++box_free[p.first];
            const bool expect_ok = ref.can_provision(host, count, placement, box_free);

            auto grants = mgr.provision({host, count, placement});
            REQUIRE(grants.ok() == expect_ok);
            if (grants.ok()) {
                REQUIRE(grants->size() == count);
                for (const auto& g : *grants) {
                    REQUIRE(ref.free.erase({g.box, g.slot}) == 1);
                    ref.owned[host].insert({g.box, g.slot});
                }
                if (placement == Placement::SameBoxRequired)
                    for (const auto& g : *grants) REQUIRE(g.box == (*grants)[0].box);
            }
        } else if (ref.owned.count(host) && !ref.owned[host].empty()) {
            // reclaim a random subset of this host's entries
            std::vector<std::uint16_t> ids;
            const auto& table = mgr.host_table(host);
            for (std::uint16_t i = 0; i < table.size(); ++i)
                if (table.entry(i).used && rng() % 2 == 0) ids.push_back(i);
            if (!ids.empty()) {
                for (std::uint16_t id : ids) {
                    const auto& e = table.entry(id);
                    REQUIRE(ref.owned[host].erase({e.gpu_box_id, e.slot_id}) == 1);
                    ref.free.insert({e.gpu_box_id, e.slot_id});
                }
                REQUIRE(mgr.reclaim(host, ids) == Errc::ok);
            }
        }
        if (step % 50 == 0) {
            check_consistency(mgr);
            ++checked;
        }
        // cheap conservation check every step
        REQUIRE(mgr.free_slots() == ref.free.size());
    }
    check_consistency(mgr);
    CHECK(checked >= 40);
}
