// Acceptance suite: one test case per criterion, each printing a PASS/FAIL
// line. Tolerances are pinned in code.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "clustersim/analytics.hpp"
#include "clustersim/collectives.hpp"
#include "clustersim/fabric.hpp"
#include "clustersim/report_io.hpp"
#include "clustersim/rng.hpp"
#include "clustersim/scheduler.hpp"
#include "clustersim/workload.hpp"
#include "doctest.h"
#include "oracles.hpp"

namespace fs = std::filesystem;
using namespace clustersim;

namespace {

const char* kCli = CLUSTERSIM_CLI_PATH;
const char* kSrc = CLUSTERSIM_SOURCE_DIR;

std::string cfg_path(const std::string& name) {
    return (fs::path(kSrc) / "configs" / name).string();
}

void report(int criterion, const char* what, bool pass) {
    std::printf("[acceptance] criterion %2d (%s): %s\n", criterion, what,
                pass ? "PASS" : "FAIL");
    std::fflush(stdout);
    CHECK_MESSAGE(pass, "criterion ", criterion, ": ", what);
}

bool within(double value, double target, double tol) {
    return std::abs(value - target) <= tol;
}

TopologyConfig incast_topo_cfg() {
    TopologyConfig tc;
    tc.pods = 1;
    tc.leafs_per_pod = 1;
    tc.spines = 1;
    tc.nodes_per_pod = 13;
    tc.gpus_per_node = 1;
    tc.rails_per_node = 1;
    tc.host_link_gbps = 400;
    tc.isl_gbps = 800;
    tc.link_latency_ns = 1000;
    return tc;
}

FabricConfig scaled_dcqcn() {
    FabricConfig cfg;
    cfg.dcqcn.rate_ai_gbps = 1.0;
    cfg.dcqcn.rate_hai_gbps = 5.0;
    cfg.dcqcn.min_rate_gbps = 1.0;
    return cfg;
}

}  // namespace

TEST_CASE("criterion 1: GPU-occupied-time unit") {
    JobRecord j;
    j.job_id = "obs1";
    j.submit_ts = 0;
    j.start_ts = 0;
    j.end_ts = 3600;
    j.requested_nodes = 4;
    j.gpus_per_node = 8;
    j.state = JobState::COMPLETED;
    bool pass = gpu_occupied_time_hours(j) == 32.0;  // exact
    report(1, "4 nodes x 8 GPUs x 1 h = 32 GPU-hours", pass);
}

TEST_CASE("criterion 2: analytics match brute-force oracles on 200 random traces") {
    Rng rng(20250131);
    auto buckets = default_size_buckets();
    bool pass = true;
    for (int trial = 0; trial < 200 && pass; ++trial) {
        auto jobs = oracles::random_trace(rng, 100);

        auto dist = state_distribution(jobs);
        auto so = oracles::state_shares(jobs);
        for (const auto& e : dist) {
            uint64_t oc = so.count.count(to_string(e.state)) ? so.count[to_string(e.state)] : 0;
            uint64_t og = so.gpu_s.count(to_string(e.state)) ? so.gpu_s[to_string(e.state)] : 0;
            if (e.count != oc || e.gpu_seconds != og) pass = false;
            if (e.count_share != static_cast<double>(oc) / static_cast<double>(so.total_count))
                pass = false;
            if (so.total_gpu_s &&
                e.gpu_time_share != static_cast<double>(og) / static_cast<double>(so.total_gpu_s))
                pass = false;
        }

        auto sdist = size_distribution(jobs, buckets);
        auto zo = oracles::size_shares(jobs, buckets);
        for (const auto& e : sdist) {
            uint64_t oc = zo.count.count(e.bucket.label) ? zo.count[e.bucket.label] : 0;
            uint64_t og = zo.gpu_s.count(e.bucket.label) ? zo.gpu_s[e.bucket.label] : 0;
            if (e.count != oc || e.gpu_seconds != og) pass = false;
        }

        // per-job GPU-seconds against the independent product
        for (const auto& j : jobs)
            if (gpu_occupied_seconds(j) != oracles::gpu_seconds(j)) pass = false;

        // runtime CDF against a naive sort per bucket
        for (const auto& b : buckets) {
            std::vector<int64_t> rts;
            for (const auto& j : jobs)
                if (j.requested_nodes >= b.min_nodes && j.requested_nodes <= b.max_nodes)
                    rts.push_back(j.runtime_s());
            if (rts.empty()) continue;
            auto cdf = runtime_cdf(jobs, b);
            std::sort(rts.begin(), rts.end());
            // every point of the CDF equals rank/n at that runtime
            for (const auto& pt : cdf) {
                size_t rank = 0;
                for (int64_t r : rts)
                    if (r <= pt.runtime_s) rank++;
                if (pt.cum_prob != static_cast<double>(rank) / static_cast<double>(rts.size()))
                    pass = false;
            }
        }

        // daily submissions against a naive day map
        auto daily = daily_submissions(jobs, buckets);
        uint64_t daily_total = 0;
        for (const auto& [day, counts] : daily)
            for (auto c : counts) daily_total += c;
        if (daily_total != jobs.size()) pass = false;

        // utilization against the naive per-step oracle (grid-valued samples,
        // identical summation order, exact equality)
        {
            JobRecord j = jobs.front();
            j.allocated_nodes = {0, 1};
            std::vector<TelemetrySample> samples;
            int64_t steps = std::min<int64_t>(j.runtime_s() / 60, 50);
            for (int64_t step = 0; step < steps; ++step) {
                for (int node : j.allocated_nodes) {
                    for (int g = 0; g < 4; ++g) {
                        TelemetrySample s;
                        s.node_id = node;
                        s.source = TelemetrySource::gpu_util;
                        s.index = g;
                        s.ts = j.start_ts + step * 60;
                        s.value_a = static_cast<double>(rng.uniform_int(0, 200)) / 2.0;
                        samples.push_back(s);
                    }
                }
            }
            if (!samples.empty()) {
                auto u = utilization_profile(j, samples);
                auto o = oracles::util_oracle(j, samples);
                if (u.avg_util != o.avg || u.low_util_fraction != o.low_fraction ||
                    u.steps != o.steps)
                    pass = false;
            }
        }

        // fault classification against a naive count
        {
            std::vector<FaultEvent> faults;
            int nf = static_cast<int>(rng.uniform_int(0, 30));
            for (int k = 0; k < nf; ++k) {
                FaultEvent e;
                e.time_s = 1735689600 + rng.uniform_int(0, 86400 * 80);
                e.component = static_cast<FaultComponent>(rng.uniform_int(0, 5));
                faults.push_back(e);
            }
            auto fr = fault_report(faults);
            uint64_t naive[6] = {0, 0, 0, 0, 0, 0};
            for (const auto& e : faults) naive[static_cast<int>(e.component)]++;
            for (int k = 0; k < 6; ++k) {
                if (fr.counts[k].second != naive[k]) pass = false;
                if (fr.total &&
                    fr.share_percent[k] !=
                        100.0 * static_cast<double>(naive[k]) / static_cast<double>(fr.total))
                    pass = false;
            }
        }

        // NIC peak against a naive double loop with identical arithmetic
        {
            std::vector<TelemetrySample> counters;
            int ports = static_cast<int>(rng.uniform_int(1, 8));
            for (int port = 0; port < ports; ++port) {
                double tx = 1e12, rx = 1e12;
                for (int k = 0; k < 8; ++k) {
                    TelemetrySample s;
                    s.node_id = 5;
                    s.source = TelemetrySource::nic_counter;
                    s.index = port;
                    s.ts = 1000 + k * 60;
                    s.value_a = tx;
                    s.value_b = rx;
                    counters.push_back(s);
                    tx += static_cast<double>(rng.uniform_int(0, 1400)) * 1e9;
                    rx += static_cast<double>(rng.uniform_int(0, 1400)) * 1e9;
                }
            }
            auto r = nic_peak(counters, 5, 0, 100000);
            // naive: per port, consecutive accepted pairs, max rate
            double best = -1.0;
            for (int port = 0; port < ports; ++port) {
                std::vector<const TelemetrySample*> list;
                for (const auto& s : counters)
                    if (s.index == port) list.push_back(&s);
                for (size_t k = 0; k + 1 < list.size(); ++k) {
                    int64_t dt = list[k + 1]->ts - list[k]->ts;
                    if (dt < 50 || dt > 70) continue;
                    double rate = (list[k + 1]->value_a - list[k]->value_a +
                                   list[k + 1]->value_b.value() - list[k]->value_b.value()) /
                                  static_cast<double>(dt) / 1e9;
                    best = std::max(best, rate);
                }
            }
            if (r.found != (best >= 0.0)) pass = false;
            if (r.found && r.peak_gbps != best) pass = false;
        }
    }
    report(2, "exact oracle equivalence, 200 traces <= 100 jobs", pass);
}

TEST_CASE("criterion 3: calibrated trace reproduces the observed distributions") {
    GenConfig cfg = load_gen_config(cfg_path("trace_gen.json"));
    bool pass = cfg.job_count == 5000;
    auto trace = generate_trace(cfg);
    auto st = state_distribution(trace.jobs);
    auto sz = size_distribution(trace.jobs, default_size_buckets());
    double canc_gpu = 0, fail_gpu = 0, fail_cnt = 0;
    for (const auto& e : st) {
        if (e.state == JobState::CANCELLED) canc_gpu = e.gpu_time_share * 100;
        if (e.state == JobState::FAILED) {
            fail_gpu = e.gpu_time_share * 100;
            fail_cnt = e.count_share * 100;
        }
    }
    double n1 = 0, le4 = 0, ge17c = 0, ge17g = 0;
    for (const auto& e : sz) {
        if (e.bucket.label == "1") n1 = e.count_share * 100;
        if (e.bucket.min_nodes <= 4) le4 += e.count_share * 100;
        if (e.bucket.min_nodes >= 17) {
            ge17c += e.count_share * 100;
            ge17g += e.gpu_time_share * 100;
        }
    }
    auto cdf = runtime_cdf(trace.jobs, SizeBucket{"17-32", 17, 32});
    double tail = tail_probability(cdf, 604800) * 100;

    pass = pass && within(canc_gpu, 73.5, 2.0) && within(fail_gpu, 0.3, 0.3) &&
           within(fail_cnt, 16.9, 2.0) && within(n1, 76.9, 2.0) && within(le4, 86.4, 2.0) &&
           within(ge17c, 3.3, 1.0) && within(ge17g, 73.3, 3.0) && within(tail, 13.6, 2.0);
    std::printf("  cancelled gpu-time %.1f%%, failed gpu-time %.2f%%, failed count %.1f%%\n",
                canc_gpu, fail_gpu, fail_cnt);
    std::printf("  1-node %.1f%%, <=4-node %.1f%%, >=17 count %.1f%% gpu-time %.1f%%, "
                "P(>7d | 17-32) %.1f%%\n",
                n1, le4, ge17c, ge17g, tail);
    report(3, "5000-job calibrated trace hits all eight targets", pass);
}

TEST_CASE("criterion 4: fault table fidelity") {
    std::ifstream f(cfg_path("faults_2025q1.csv"));
    auto parsed = parse_faults(f);
    bool pass = parsed.rejects.empty() && parsed.records.size() == 21;
    auto rep = fault_report(parsed.records);
    int expected_tenths[6] = {429, 190, 48, 238, 48, 48};
    for (int i = 0; i < 6; ++i)
        if (std::llround(rep.share_percent[i] * 10.0) != expected_tenths[i]) pass = false;
    pass = pass && rep.monthly.size() == 3 && rep.monthly.at("2025-01") == 13 &&
           rep.monthly.at("2025-02") == 5 && rep.monthly.at("2025-03") == 3;
    report(4, "21-event fixture: shares and monthly histogram exact", pass);
}

TEST_CASE("criterion 5: NIC peak analysis on the two reference jobs") {
    // Job A: eight ports, dTX+dRX = 1,356 GB per 60 s interval
    auto job_a = oracles::nic_series(0, 8, 10, 1000, 1.356e12);
    auto ra = nic_peak(job_a, 0, 0, 100000);
    bool pass = ra.found && within(ra.peak_gbps, 22.6, 0.1) && !ra.imbalance;

    // Job B: six ports near 18.9 GB/s, two near 8.0 GB/s
    auto job_b = oracles::nic_series(0, 6, 10, 1000, 18.9 * 60e9);
    auto slow = oracles::nic_series(0, 2, 10, 1000, 8.0 * 60e9);
    for (auto& s : slow) s.index += 6;
    job_b.insert(job_b.end(), slow.begin(), slow.end());
    auto rb = nic_peak(job_b, 0, 0, 100000);
    pass = pass && rb.found && within(rb.peak_gbps, 18.9, 0.1) && rb.imbalance &&
           within(rb.imbalance_ratio, 0.423, 0.005);
    std::printf("  job A peak %.2f GB/s (imbalance %d), job B peak %.2f GB/s ratio %.3f\n",
                ra.peak_gbps, ra.imbalance ? 1 : 0, rb.peak_gbps, rb.imbalance_ratio);
    report(5, "22.6 GB/s uniform and 18.9 GB/s with 0.423 imbalance", pass);
}

TEST_CASE("criterion 6: 500 randomized incasts stay lossless under PFC") {
    Rng rng(60606);
    bool pass = true;
    uint64_t scenarios_run = 0;
    for (int scenario = 0; scenario < 500; ++scenario) {
        TopologyConfig tc;
        tc.pods = static_cast<int>(rng.uniform_int(1, 2));
        tc.leafs_per_pod = static_cast<int>(rng.uniform_int(1, 2));
        tc.spines = static_cast<int>(rng.uniform_int(1, 2));
        tc.nodes_per_pod = static_cast<int>(rng.uniform_int(3, 7));
        tc.gpus_per_node = tc.leafs_per_pod;
        tc.rails_per_node = tc.leafs_per_pod;
        tc.host_link_gbps = 400;
        tc.isl_gbps = 800;
        tc.link_latency_ns = rng.uniform_int(500, 2000);
        auto topo = build_topology(tc);
        int total_nodes = tc.pods * tc.nodes_per_pod;
        int sources = static_cast<int>(rng.uniform_int(2, total_nodes - 1));
        int rail = static_cast<int>(rng.uniform_int(0, tc.rails_per_node - 1));
        std::vector<FlowSpec> flows;
        for (int s = 0; s < sources; ++s) {
            FlowSpec f;
            f.flow_id = s;
            f.src = {1 + s, rail};
            f.dst = {0, rail};
            f.bytes = static_cast<uint64_t>(rng.uniform_int(100'000, 3'000'000));
            flows.push_back(f);
        }
        FabricConfig cfg = scaled_dcqcn();
        cfg.ecn_enabled = rng.uniform01() < 0.5;
        cfg.pfc_enabled = true;
        SimReport rep = run_fabric(topo, flows, cfg, 7000 + scenario, 3'000'000);
        scenarios_run++;
        if (rep.total_drops != 0) {
            pass = false;
            std::printf("  scenario %d dropped %llu segments\n", scenario,
                        static_cast<unsigned long long>(rep.total_drops));
            break;
        }
    }
    std::printf("  %llu scenarios, zero drops in the lossless class\n",
                static_cast<unsigned long long>(scenarios_run));
    report(6, "zero drops across 500 randomized incasts", pass);
}

TEST_CASE("criterion 7: ECN saturation contrast under the same 8:1 incast") {
    auto topo = build_topology(incast_topo_cfg());
    std::vector<FlowSpec> flows;
    int id = 0;
    for (int ph = 0; ph < 120; ++ph)
        for (int s = 0; s < 8; ++s) {
            FlowSpec f;
            f.flow_id = id++;
            f.src = {1 + s, 0};
            f.dst = {0, 0};
            f.bytes = 256 * 1024;
            f.phase = ph;
            flows.push_back(f);
        }
    int bottleneck = final_hop_port(topo, {0, 0});
    int64_t horizon = 20'000'000, warmup = 2'000'000;

    FabricConfig under = scaled_dcqcn();
    under.ecn = {100000, 100000, 0.01};
    under.warmup_ns = warmup;
    under.mark_window_ns = 20'000;
    double frac_u = run_fabric(topo, flows, under, 7, horizon)
                        .sustained_mark_fraction(bottleneck, warmup, 50);

    FabricConfig production = scaled_dcqcn();
    production.ecn = {2'000'000, 10'000'000, 0.01};
    production.warmup_ns = warmup;
    production.mark_window_ns = 20'000;
    double frac_p = run_fabric(topo, flows, production, 7, horizon)
                        .sustained_mark_fraction(bottleneck, warmup, 50);

    std::printf("  under-provisioned sustained mark fraction %.3f, production %.3f\n", frac_u,
                std::max(frac_p, 0.0));
    bool pass = frac_u == 1.0 && frac_p < 1.0;
    report(7, "100 KB config saturates at 1.0, 2/10 MB config stays below", pass);
}

TEST_CASE("criterion 8: DCQCN fairness on a 400G bottleneck") {
    auto topo = build_topology(incast_topo_cfg());
    std::vector<FlowSpec> flows;
    for (int s = 0; s < 4; ++s) {
        FlowSpec f;
        f.flow_id = s;
        f.src = {1 + s, 0};
        f.dst = {0, 0};
        f.bytes = 16'000'000'000ull;
        flows.push_back(f);
    }
    FabricConfig cfg = scaled_dcqcn();
    cfg.warmup_ns = 50'000'000;
    SimReport rep = run_fabric(topo, flows, cfg, 21, 150'000'000);
    bool pass = rep.flows.size() == 4;
    for (const auto& f : rep.flows) {
        std::printf("  flow %d long-run rate %.1f Gbit/s\n", f.flow_id, f.window_gbps);
        if (!within(f.window_gbps, 100.0, 10.0)) pass = false;
    }
    report(8, "four flows each within +/-10% of 100 Gbit/s", pass);
}

TEST_CASE("criterion 9: checkpoint preemption helps short jobs on the calibrated trace") {
    GenConfig gcfg = load_gen_config(cfg_path("trace_gen.json"));
    auto trace = generate_trace(gcfg);
    auto topo = build_topology(load_topology_config(cfg_path("production_topology.cfg")));
    bool pass = topo.node_count() == 100;

    SchedulerPolicy fifo;
    fifo.kind = PolicyKind::fifo_backfill;
    SchedulerPolicy pre;
    pre.kind = PolicyKind::checkpoint_preempt;
    pre.short_job_node_cap = 2;
    pre.resume_overhead_s = 300;

    auto base = simulate_schedule(trace.jobs, topo, fifo, {}, 1);
    auto with_preemption = simulate_schedule(trace.jobs, topo, pre, {}, 1);
    double wait_fifo = base.mean_wait_s(2);
    double wait_pre = with_preemption.mean_wait_s(2);
    std::printf("  mean wait of <=2-node jobs: fifo_backfill %.0f s, checkpoint_preempt %.0f s\n",
                wait_fifo, wait_pre);
    pass = pass && wait_pre < wait_fifo;

    uint64_t preempted = 0;
    for (const auto& j : with_preemption.jobs) {
        if (j.preemptions == 0) continue;
        preempted++;
        int64_t interval = 0;
        for (const auto& t : trace.jobs)
            if (t.job_id == j.job_id && t.checkpoint_interval_s)
                interval = *t.checkpoint_interval_s;
        const JobOutcome* b = base.find(j.job_id);
        int64_t growth = (j.end_ts - j.start_ts) - (b->end_ts - b->start_ts);
        if (interval == 0 || growth > j.preemptions * (interval + pre.resume_overhead_s))
            pass = false;
    }
    std::printf("  %llu jobs preempted, makespan growth within preemptions x (interval + "
                "overhead) for all\n",
                static_cast<unsigned long long>(preempted));
    pass = pass && preempted > 0 && with_preemption.oversubscriptions().empty() &&
           base.oversubscriptions().empty();
    report(9, "strict short-job wait reduction with bounded makespan growth", pass);
}

TEST_CASE("criterion 10: CLI reruns are byte-identical") {
    auto run = [&](const std::string& args) {
        std::string cmd = std::string(kCli) + " " + args + " > /dev/null 2>&1";
        return WEXITSTATUS(std::system(cmd.c_str()));
    };
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        std::stringstream ss;
        ss << f.rdbuf();
        return ss.str();
    };
    fs::path base = "/tmp/clustersim_acceptance10";
    fs::remove_all(base);
    fs::create_directories(base);
    bool pass = true;

    // generate twice
    pass = pass && run("generate --config " + cfg_path("trace_gen.json") + " --out " +
                       (base / "g1").string()) == 0;
    pass = pass && run("generate --config " + cfg_path("trace_gen.json") + " --out " +
                       (base / "g2").string()) == 0;
    pass = pass && slurp(base / "g1" / "jobs.csv") == slurp(base / "g2" / "jobs.csv");

    // simulate twice
    std::string sim = "simulate --topology " + cfg_path("production_topology.cfg") + " --fabric " +
                      cfg_path("production_fabric.json") + " --flows " +
                      cfg_path("incast_8to1.csv") + " --seed 42 --horizon-ns 8000000 --out ";
    pass = pass && run(sim + (base / "s1").string()) == 0;
    pass = pass && run(sim + (base / "s2").string()) == 0;
    for (const char* f : {"summary.json", "ports.csv", "flows.csv", "windows.csv"})
        pass = pass && slurp(base / "s1" / f) == slurp(base / "s2" / f);

    // schedule twice
    std::string sched = "schedule --jobs " + (base / "g1" / "jobs.csv").string() +
                        " --topology " + cfg_path("production_topology.cfg") +
                        " --policy checkpoint_preempt --seed 5 --out ";
    pass = pass && run(sched + (base / "c1").string()) == 0;
    pass = pass && run(sched + (base / "c2").string()) == 0;
    for (const char* f : {"schedule.csv", "summary.json"})
        pass = pass && slurp(base / "c1" / f) == slurp(base / "c2" / f);

    // analyze twice
    std::string ana = "analyze --jobs " + (base / "g1" / "jobs.csv").string() + " --faults " +
                      cfg_path("faults_2025q1.csv") + " --out ";
    pass = pass && run(ana + (base / "a1").string()) == 0;
    pass = pass && run(ana + (base / "a2").string()) == 0;
    for (const char* f : {"state_dist.csv", "size_dist.csv", "runtime_cdf.csv", "daily.csv",
                          "faults.csv", "report.json"})
        pass = pass && slurp(base / "a1" / f) == slurp(base / "a2" / f);

    report(10, "generate/simulate/schedule/analyze byte-identical on rerun", pass);
}

TEST_CASE("criterion 11: collective plan byte accounting") {
    bool pass = true;
    for (int n = 1; n <= 16; ++n) {
        CollectiveSpec spec;
        spec.kind = CollectiveKind::ring_allreduce;
        for (int r = 0; r < n; ++r) spec.participants.push_back({r / 8, r % 8});
        spec.payload_bytes = 4ull << 20;
        FlowSet set = ring_allreduce_plan(spec);
        // N * 2(N-1)/N * payload
        if (set.total_bytes() != 2ull * static_cast<uint64_t>(n - 1) * spec.payload_bytes)
            pass = false;
    }

    CollectiveSpec p3;
    p3.kind = CollectiveKind::parallel3d;
    p3.dp = 4;
    p3.tp = 4;
    p3.pp = 16;
    p3.vp = 6;
    p3.microbatches = 128;
    p3.pp_message_bytes = 100'663'296;
    p3.dp_allreduce_bytes = 1'550'000'000;
    p3.tp_message_bytes = 50'331'648;
    for (int r = 0; r < 256; ++r) p3.participants.push_back({r / 8, r % 8});
    FlowSet set = parallel3d_plan(p3, 8);
    double share = set.fabric_share(FlowCategory::sendrecv_pp);
    std::printf("  ring totals exact for N in 1..16; sendrecv_pp fabric share %.1f%%\n",
                share * 100);
    pass = pass && share > 0.80;
    report(11, "ring allreduce exact, pipeline share > 80% at dp4/tp4/pp16/vp6", pass);
}
