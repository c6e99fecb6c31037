// fabricpool: scenario driver for the disaggregated-GPU-pool library.
//
//   provision  run an allocation script against a pool and log hot-plug events
//   bandwidth  simulate a host<->GPU stream and compare against native
//   predict    run the workload performance model on a trace, optionally
//              sweeping the fabric round trip
//   selftest   cross-validate the simulator, the analytic law, and the codec
//
// Exit codes: 0 success, 1 domain error, 2 usage or config error.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fabricpool/fabricpool.hpp"

namespace fp = fabricpool;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitDomain = 1;
constexpr int kExitUsage = 2;

std::optional<std::string> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

bool spill(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) return false;
    out << content;
    return out.good();
}

std::string format_double(double v, int precision = 3) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", precision, v);
    return buf;
}

struct CommonArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
};

int load_config(const CommonArgs& args, fp::ScenarioConfig& cfg) {
    auto text = slurp(args.config_path);
    if (!text) {
        std::cerr << "error: cannot read config '" << args.config_path << "'\n";
        return kExitUsage;
    }
    std::string diag;
    auto parsed = fp::parse_scenario(*text, diag);
    if (!parsed) {
        std::cerr << "error: " << args.config_path << ": " << diag << "\n";
        return kExitUsage;
    }
    cfg = *parsed;
    if (args.seed_override) cfg.seed = *args.seed_override;
    return kExitOk;
}

// ---------------------------------------------------------------------------
// provision
// ---------------------------------------------------------------------------

std::string snapshot_text(const fp::PoolState& st) {
    std::string out = "total valid=" + std::to_string(st.total_valid) +
                      " free=" + std::to_string(st.total_free) +
                      " used=" + std::to_string(st.total_used) + "\n";
    for (const auto& b : st.boxes)
        out += "box " + std::to_string(b.box) + " free=" + std::to_string(b.free) +
               " used=" + std::to_string(b.used) + "\n";
    for (const auto& h : st.hosts)
        out += "host " + std::to_string(h.host) + " bound=" + std::to_string(h.bound) + "\n";
    return out;
}

int cmd_provision(const CommonArgs& common, const std::string& script_path,
                  const std::string& out_dir) {
    fp::ScenarioConfig cfg;
    if (int rc = load_config(common, cfg); rc != kExitOk) return rc;
    auto script = slurp(script_path);
    if (!script) {
        std::cerr << "error: cannot read script '" << script_path << "'\n";
        return kExitUsage;
    }

    fp::PoolManager mgr(fp::make_topology(cfg), 16, cfg.reserve);

    int exit_code = kExitOk;
    std::string failure;
    fp::detail::for_each_line(*script, [&](std::size_t line_no, std::string_view line) {
        if (line.empty() || line[0] == '#') return true;
        std::istringstream words{std::string(line)};
        std::string verb;
        words >> verb;

        auto fail_usage = [&](const std::string& msg) {
            failure = "line " + std::to_string(line_no) + ": " + msg;
            exit_code = kExitUsage;
            return false;
        };

        std::uint64_t host = 0;
        bool saw_host = false;
        if (verb == "alloc") {
            fp::AllocationRequest req;
            std::string word;
            std::uint64_t count = 1;
            while (words >> word) {
                if (word.rfind("host=", 0) == 0) {
                    if (!fp::detail::parse_field(word.substr(5), host))
                        return fail_usage("bad host id");
                    saw_host = true;
                } else if (word.rfind("count=", 0) == 0) {
                    if (!fp::detail::parse_field(word.substr(6), count))
                        return fail_usage("bad count");
                } else if (word == "samebox") {
                    req.placement = fp::Placement::SameBoxRequired;
                } else if (word == "samebox_pref") {
                    req.placement = fp::Placement::SameBox;
                } else {
                    return fail_usage("unknown word '" + word + "'");
                }
            }
            if (!saw_host) return fail_usage("alloc needs host=<id>");
            req.host = static_cast<fp::NodeId>(host);
            req.count = static_cast<std::uint32_t>(count);
            auto grants = mgr.provision(req);
            if (!grants) {
                failure = "line " + std::to_string(line_no) + ": alloc failed: " +
                          std::string(fp::to_string(grants.error()));
                exit_code = kExitDomain;
                return false;
            }
            return true;
        }
        if (verb == "free") {
            std::string word;
            std::vector<std::uint16_t> entries;
            while (words >> word) {
                if (word.rfind("host=", 0) == 0) {
                    if (!fp::detail::parse_field(word.substr(5), host))
                        return fail_usage("bad host id");
                    saw_host = true;
                } else if (word.rfind("entries=", 0) == 0) {
                    const std::string list = word.substr(8);
                    for (auto part : fp::detail::split_csv(list)) {
                        std::uint64_t e;
                        if (!fp::detail::parse_field(part, e))
                            return fail_usage("bad entry list");
                        entries.push_back(static_cast<std::uint16_t>(e));
                    }
                } else {
                    return fail_usage("unknown word '" + word + "'");
                }
            }
            if (!saw_host || entries.empty())
                return fail_usage("free needs host=<id> entries=<list>");
            fp::Errc rc = mgr.reclaim(static_cast<fp::NodeId>(host), entries);
            if (rc != fp::Errc::ok) {
                failure = "line " + std::to_string(line_no) + ": free failed: " +
                          std::string(fp::to_string(rc));
                exit_code = kExitDomain;
                return false;
            }
            return true;
        }
        return fail_usage("unknown command '" + verb + "'");
    });

    fp::RunManifest manifest{"provision", common.config_path, {script_path},
                             {out_dir + "/events.log", out_dir + "/snapshot.txt"}, cfg.seed};

    std::string events = manifest.comment_header();
    for (const auto& e : mgr.events()) events += e.to_line() + "\n";
    std::string snap = manifest.comment_header() + snapshot_text(mgr.snapshot());
    if (!spill(out_dir + "/events.log", events) || !spill(out_dir + "/snapshot.txt", snap)) {
        std::cerr << "error: cannot write outputs under '" << out_dir << "'\n";
        return kExitUsage;
    }
    if (!failure.empty()) std::cerr << "error: " << script_path << ": " << failure << "\n";
    return exit_code;
}

// ---------------------------------------------------------------------------
// bandwidth
// ---------------------------------------------------------------------------

int cmd_bandwidth(const CommonArgs& common, const std::string& direction, std::uint64_t bytes,
                  const std::string& out_path, const std::string& events_path) {
    fp::ScenarioConfig cfg;
    if (int rc = load_config(common, cfg); rc != kExitOk) return rc;
    if (direction != "htod" && direction != "dtoh") {
        std::cerr << "error: direction must be htod or dtoh\n";
        return kExitUsage;
    }

    std::vector<fp::SimEvent> events;
    std::vector<fp::SimEvent>* sink = events_path.empty() ? nullptr : &events;

    fp::StreamResult run, native;
    if (direction == "htod") {
        run = fp::simulate_read_stream(cfg.latency, cfg.tags, cfg.mrs, bytes,
                                       cfg.native_htod_bw, sink);
        native = fp::simulate_read_stream(fp::LatencyProfile::native(cfg.latency.rtt_original),
                                          cfg.tags, cfg.mrs, bytes, cfg.native_htod_bw);
    } else {
        const fp::LinkParams link{cfg.mrs, cfg.native_dtoh_bw / cfg.lanes, cfg.lanes};
        run = fp::simulate_write_stream(cfg.latency, link, bytes, sink);
        native = fp::simulate_write_stream(fp::LatencyProfile::native(cfg.latency.rtt_original),
                                           link, bytes);
    }
    const double percent = native.throughput() > 0
                               ? run.throughput() / native.throughput() * 100.0
                               : 0.0;

    fp::RunManifest manifest{"bandwidth", common.config_path, {},
                             {out_path.empty() ? "-" : out_path}, cfg.seed};
    std::string csv = manifest.comment_header();
    csv += "direction,tags,mrs_bytes,rtt_ns,total_bytes,elapsed_ns,"
           "throughput_bytes_per_s,percent_of_native,max_tags_in_flight\n";
    csv += direction + "," + std::to_string(cfg.tags) + "," + std::to_string(cfg.mrs) + "," +
           std::to_string(cfg.latency.rtt_fabric()) + "," + std::to_string(run.bytes_moved) +
           "," + std::to_string(run.elapsed) + "," + format_double(run.throughput(), 0) + "," +
           format_double(percent) + "," + std::to_string(run.max_tags_in_flight) + "\n";

    if (!out_path.empty()) {
        if (!spill(out_path, csv)) {
            std::cerr << "error: cannot write '" << out_path << "'\n";
            return kExitUsage;
        }
    } else {
        std::cout << csv;
    }
    if (sink) {
        std::string dump = manifest.comment_header();
        dump += "timestamp_ns,sequence,action,tag\n";
        for (const auto& e : events) {
            const char* action = e.action == fp::SimAction::IssueRead    ? "issue_read"
                                 : e.action == fp::SimAction::Completion ? "completion"
                                 : e.action == fp::SimAction::IssueWrite ? "issue_write"
                                                                         : "delivered";
            dump += std::to_string(e.timestamp) + "," + std::to_string(e.sequence) + "," +
                    action + "," +
                    (e.tag == fp::wire::kNoTag ? std::string("-") : std::to_string(e.tag)) + "\n";
        }
        if (!spill(events_path, dump)) {
            std::cerr << "error: cannot write '" << events_path << "'\n";
            return kExitUsage;
        }
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// predict
// ---------------------------------------------------------------------------

int cmd_predict(const CommonArgs& common, const std::string& trace_path,
                const std::string& sweep_arg, const std::string& out_path) {
    fp::ScenarioConfig cfg;
    if (int rc = load_config(common, cfg); rc != kExitOk) return rc;
    auto text = slurp(trace_path);
    if (!text) {
        std::cerr << "error: cannot read trace '" << trace_path << "'\n";
        return kExitUsage;
    }
    std::string diag;
    auto trace = fp::parse_trace_csv(*text, diag);
    if (!trace) {
        std::cerr << "error: " << trace_path << ": " << diag << "\n";
        return kExitUsage;
    }

    fp::RunManifest manifest{"predict", common.config_path, {trace_path},
                             {out_path.empty() ? "-" : out_path}, cfg.seed};
    std::string csv = manifest.comment_header();

    if (!sweep_arg.empty()) {
        fp::Nanos start = 0, stop = 0, step = 0;
        {
            std::uint64_t a = 0, b = 0, c = 0;
            std::string norm(sweep_arg);
            for (auto& ch : norm)
                if (ch == ':') ch = ',';
            const auto f = fp::detail::split_csv(norm);
            if (f.size() != 3 || !fp::detail::parse_field(f[0], a) ||
                !fp::detail::parse_field(f[1], b) || !fp::detail::parse_field(f[2], c) ||
                c == 0 || a > b) {
                std::cerr << "error: --sweep expects start:stop:step_ns\n";
                return kExitUsage;
            }
            start = static_cast<fp::Nanos>(a);
            stop = static_cast<fp::Nanos>(b);
            step = static_cast<fp::Nanos>(c);
        }
        std::vector<fp::Nanos> rtts;
        for (fp::Nanos r = start; r <= stop; r += step) rtts.push_back(r);
        auto curve = fp::sweep_rtt(*trace, rtts, cfg.latency.rtt_original, cfg.tags, cfg.mrs,
                                   cfg.native_htod_bw);
        csv += "rtt_ns,performance\n";
        for (const auto& [rtt, perf] : curve)
            csv += std::to_string(rtt) + "," + format_double(perf, 6) + "\n";
    } else {
        auto report = fp::predict(*trace, cfg.latency, cfg.tags, cfg.mrs, cfg.native_htod_bw);
        if (!report) {
            std::cerr << "error: " << fp::to_string(report.error()) << "\n";
            return kExitDomain;
        }
        csv += "native_total_ns,fabric_total_ns,performance,kernel_overhead_ns,"
               "htod_overhead_ns,dtoh_overhead_ns\n";
        csv += std::to_string(report->native_total) + "," +
               std::to_string(report->fabric_total) + "," +
               format_double(report->performance, 6) + "," +
               std::to_string(report->kernel_overhead) + "," +
               std::to_string(report->htod_overhead) + "," +
               std::to_string(report->dtoh_overhead) + "\n";
    }

    if (!out_path.empty()) {
        if (!spill(out_path, csv)) {
            std::cerr << "error: cannot write '" << out_path << "'\n";
            return kExitUsage;
        }
    } else {
        std::cout << csv;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// selftest
// ---------------------------------------------------------------------------

int cmd_selftest(const CommonArgs& common) {
    fp::ScenarioConfig cfg;
    if (int rc = load_config(common, cfg); rc != kExitOk) return rc;

    bool all_ok = true;
    auto report = [&all_ok](const std::string& name, bool ok, const std::string& detail) {
        all_ok = all_ok && ok;
        std::printf("[%s] %-34s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    };

    // the analytic law at the two measured operating points
    struct Point { fp::Nanos rtt; double want; };
    for (const Point p : {Point{6800, 2.64e9}, Point{4900, 3.66e9}}) {
        const double got = fp::analytic_read_throughput(140, 128, p.rtt);
        const bool ok = std::abs(got - p.want) / p.want <= 0.005;
        report("law rtt=" + std::to_string(p.rtt) + "ns",
               ok, "model=" + format_double(got / 1e9) + "GB/s ref=" +
                       format_double(p.want / 1e9) + "GB/s");
    }

    // simulator vs analytic law over the full grid
    for (std::uint32_t tags : {1u, 5u, 32u, 140u})
        for (fp::Nanos rtt : {1200, 4900, 6800, 19000})
            for (std::uint32_t mrs : {64u, 128u, 256u}) {
                const std::uint64_t bytes = 100ull * tags * mrs;
                const auto sim =
                    fp::simulate_read_stream(fp::LatencyProfile{rtt, 0, 0}, tags, mrs, bytes);
                const double want = fp::analytic_read_throughput(tags, mrs, rtt);
                const double err = std::abs(sim.throughput() - want) / want;
                report("grid tags=" + std::to_string(tags) + " rtt=" + std::to_string(rtt) +
                           " mrs=" + std::to_string(mrs),
                       err <= 0.02,
                       "sim=" + format_double(sim.throughput() / 1e9) + "GB/s err=" +
                           format_double(err * 100.0, 2) + "%");
            }

    // codec round-trip and corruption battery
    std::mt19937_64 rng(cfg.seed);
    std::size_t round_trips = 0;
    std::size_t detected = 0;
    const std::size_t kRoundTrips = 2000, kFlips = 500;
    for (std::size_t i = 0; i < kRoundTrips; ++i) {
        std::vector<std::uint8_t> payload(rng() % (cfg.mrs + 1));
        for (auto& b : payload) b = static_cast<std::uint8_t>(rng());
        auto tlp = (i % 2 == 0)
                       ? fp::Tlp::mem_write(rng(), payload, cfg.mrs)
                       : fp::Tlp::completion(static_cast<std::uint8_t>(rng() % 256),
                                             static_cast<std::uint8_t>(rng() % 32),
                                             static_cast<std::uint16_t>(rng() % cfg.tags),
                                             payload, cfg.mrs);
        auto packets = fp::encapsulate(*tlp, 1, 0, fp::RouteInfo{2, 0, 0});
        auto back = fp::decapsulate(*packets);
        if (back && *back == *tlp) ++round_trips;

        if (i < kFlips) {
            std::vector<std::vector<std::uint8_t>> raw;
            for (const auto& p : *packets) raw.push_back(p.to_bytes());
            auto& victim = raw[rng() % raw.size()];
            victim[rng() % victim.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
            auto corrupted = fp::decapsulate_bytes(raw);
            if (!corrupted && corrupted.error() == fp::Errc::crc_mismatch) ++detected;
        }
    }
    report("codec round-trip", round_trips == kRoundTrips,
           std::to_string(round_trips) + "/" + std::to_string(kRoundTrips));
    report("codec bit-flip detection", detected == kFlips,
           std::to_string(detected) + "/" + std::to_string(kFlips));

    return all_ok ? kExitOk : kExitDomain;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"disaggregated GPU pool: protocol, simulator, performance model"};
    app.require_subcommand(1);

    CommonArgs common;
    std::uint64_t seed_value = 0;
    std::vector<CLI::Option*> seed_options;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", common.config_path, "scenario config file")->required();
        seed_options.push_back(sub->add_option("--seed", seed_value, "override the config seed"));
    };

    auto* provision = app.add_subcommand("provision", "run an allocation script");
    std::string script_path, out_dir = ".";
    add_common(provision);
    provision->add_option("--script", script_path, "alloc/free command script")->required();
    provision->add_option("--out", out_dir, "directory for events.log and snapshot.txt");

    auto* bandwidth = app.add_subcommand("bandwidth", "simulate a host<->GPU stream");
    std::string direction;
    std::uint64_t bytes = 100ull << 20;
    std::string bw_out, events_path;
    add_common(bandwidth);
    bandwidth->add_option("--direction", direction, "htod or dtoh")->required();
    bandwidth->add_option("--bytes", bytes, "stream size in bytes (default 100 MiB)");
    bandwidth->add_option("--out", bw_out, "result CSV path (stdout when omitted)");
    bandwidth->add_option("--events", events_path, "per-event trace dump path");

    auto* predict = app.add_subcommand("predict", "run the performance model on a trace");
    std::string trace_path, sweep_arg, predict_out;
    add_common(predict);
    predict->add_option("--trace", trace_path, "workload trace CSV")->required();
    predict->add_option("--sweep", sweep_arg, "rtt sweep start:stop:step_ns");
    predict->add_option("--out", predict_out, "output CSV path (stdout when omitted)");

    auto* selftest = app.add_subcommand("selftest", "cross-validation battery");
    add_common(selftest);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    for (const CLI::Option* opt : seed_options)
        if (opt->count() > 0) common.seed_override = seed_value;

    if (provision->parsed()) return cmd_provision(common, script_path, out_dir);
    if (bandwidth->parsed()) return cmd_bandwidth(common, direction, bytes, bw_out, events_path);
    if (predict->parsed()) return cmd_predict(common, trace_path, sweep_arg, predict_out);
    return cmd_selftest(common);
}
