// clustersim: batch experiments over the cluster digital twin.
//
//   analyze   accounting/telemetry/fault logs -> metric report files
//   simulate  collective or flow-set traffic -> fabric SimReport files
//   sweep     ECN parameter grid -> per-point reports + summary.csv
//   schedule  trace replay through the cluster scheduler
//   generate  synthetic calibrated trace (jobs + telemetry)
//   plan      collective spec -> flow-set CSV + category byte shares
//   topo      topology config -> JSON dump
//
// Exit codes: 0 success, 1 domain error, 2 input/parse error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "clustersim/analytics.hpp"
#include "clustersim/collectives.hpp"
#include "clustersim/csv.hpp"
#include "clustersim/report_io.hpp"
#include "clustersim/scheduler.hpp"
#include "clustersim/workload.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace clustersim;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

void write_rejects(const std::string& out_dir, const std::string& name,
                   const std::vector<RejectedRow>& rejects) {
    fs::create_directories(out_dir);
    std::ofstream f(fs::path(out_dir) / name);
    f << "line,reason\n";
    for (const auto& r : rejects) f << r.line << ',' << r.reason << '\n';
}

CollectiveSpec load_collective_spec(const std::string& path, int gpus_per_node) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("collective spec: ") + e.what());
    }
    CollectiveSpec spec;
    std::string kind = j.value("kind", std::string("ring_allreduce"));
    if (kind == "ring_allreduce")
        spec.kind = CollectiveKind::ring_allreduce;
    else if (kind == "alltoall")
        spec.kind = CollectiveKind::alltoall;
    else if (kind == "parallel3d")
        spec.kind = CollectiveKind::parallel3d;
    else
        throw ParseError("collective spec: unknown kind '" + kind + "'");
    spec.payload_bytes = j.value("payload_bytes", spec.payload_bytes);
    spec.dp = j.value("dp", spec.dp);
    spec.tp = j.value("tp", spec.tp);
    spec.pp = j.value("pp", spec.pp);
    spec.vp = j.value("vp", spec.vp);
    spec.microbatches = j.value("microbatches", spec.microbatches);
    spec.pp_message_bytes = j.value("pp_message_bytes", spec.pp_message_bytes);
    spec.dp_allreduce_bytes = j.value("dp_allreduce_bytes", spec.dp_allreduce_bytes);
    spec.tp_message_bytes = j.value("tp_message_bytes", spec.tp_message_bytes);
    if (j.contains("participants")) {
        for (const auto& p : j["participants"])
            spec.participants.push_back({p.at(0).get<int>(), p.at(1).get<int>()});
    } else {
        // rank r on node r/gpus_per_node, gpu r%gpus_per_node
        int ranks = j.value("ranks", spec.dp * spec.tp * spec.pp);
        for (int r = 0; r < ranks; ++r)
            spec.participants.push_back({r / gpus_per_node, r % gpus_per_node});
    }
    return spec;
}

FlowSet plan_collective(const CollectiveSpec& spec, int gpus_per_node) {
    switch (spec.kind) {
        case CollectiveKind::ring_allreduce: return ring_allreduce_plan(spec);
        case CollectiveKind::alltoall: return alltoall_plan(spec);
        case CollectiveKind::parallel3d: return parallel3d_plan(spec, gpus_per_node);
    }
    throw DomainError("unreachable collective kind");
}

std::vector<FaultEvent> load_faults(const std::string& path, const std::string& out_dir) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open faults file: " + path);
    auto parsed = parse_faults(f);
    if (!parsed.rejects.empty()) {
        write_rejects(out_dir, "fault_rejects.csv", parsed.rejects);
        std::string msg = "faults: " + std::to_string(parsed.rejects.size()) +
                          " malformed rows (first at line " +
                          std::to_string(parsed.rejects.front().line) + ")";
        throw ParseError(msg);
    }
    return parsed.records;
}

int cmd_analyze(const std::string& jobs_path, const std::string& telemetry_path,
                const std::string& faults_path, const std::string& out_dir) {
    std::ifstream jf(jobs_path);
    if (!jf) throw ParseError("cannot open trace: " + jobs_path);
    auto jobs = parse_accounting(jf);

    ParseResult<TelemetrySample> telemetry;
    if (!telemetry_path.empty()) {
        std::ifstream tf(telemetry_path);
        if (!tf) throw ParseError("cannot open telemetry: " + telemetry_path);
        telemetry = parse_telemetry(tf);
    }
    std::vector<FaultEvent> faults;
    if (!faults_path.empty()) faults = load_faults(faults_path, out_dir);

    auto report = build_metric_report(jobs.records, telemetry.records, faults,
                                      default_size_buckets());
    write_metric_report(report, out_dir);

    bool had_rejects = !jobs.rejects.empty() || !telemetry.rejects.empty();
    if (!jobs.rejects.empty()) write_rejects(out_dir, "job_rejects.csv", jobs.rejects);
    if (!telemetry.rejects.empty())
        write_rejects(out_dir, "telemetry_rejects.csv", telemetry.rejects);
    if (had_rejects) {
        std::cerr << "analyze: " << jobs.rejects.size() << " job rows and "
                  << telemetry.rejects.size() << " telemetry rows rejected";
        if (!jobs.rejects.empty())
            std::cerr << " (first job reject at line " << jobs.rejects.front().line << ")";
        std::cerr << "\n";
        return 2;
    }
    std::cout << "analyze: report written to " << out_dir << "\n";
    return 0;
}

int cmd_simulate(const std::string& topo_path, const std::string& fabric_path,
                 const std::string& collective_path, const std::string& flows_path,
                 uint64_t seed, int64_t horizon_ns, const std::string& out_dir) {
    ClusterTopology topo = build_topology(load_topology_config(topo_path));
    FabricConfig cfg = fabric_path.empty() ? FabricConfig{} : load_fabric_config(fabric_path);

    FlowSet set;
    if (!collective_path.empty()) {
        set = plan_collective(load_collective_spec(collective_path, topo.cfg.gpus_per_node),
                              topo.cfg.gpus_per_node);
    } else if (!flows_path.empty()) {
        std::ifstream ff(flows_path);
        if (!ff) throw ParseError("cannot open flows file: " + flows_path);
        set = read_flowset_csv(ff);
    }
    auto flows = to_fabric_flows(set, topo);
    SimReport report = run_fabric(topo, flows, cfg, seed, horizon_ns);
    write_sim_report(report, out_dir);
    std::cout << "simulate: " << report.events_processed << " events, "
              << report.flows.size() << " flows, " << report.total_drops
              << " drops; report in " << out_dir << "\n";
    return 0;
}

int cmd_sweep(const std::string& topo_path, const std::string& fabric_path,
              const std::string& flows_path, const std::string& grid_path, uint64_t seed,
              int64_t horizon_ns, const std::string& out_dir) {
    ClusterTopology topo = build_topology(load_topology_config(topo_path));
    FabricConfig base = fabric_path.empty() ? FabricConfig{} : load_fabric_config(fabric_path);
    std::ifstream ff(flows_path);
    if (!ff) throw ParseError("cannot open flows file: " + flows_path);
    FlowSet set = read_flowset_csv(ff);
    auto flows = to_fabric_flows(set, topo);

    nlohmann::json grid;
    try {
        grid = nlohmann::json::parse(read_file(grid_path));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("grid: ") + e.what());
    }
    auto axis = [&](const char* key, double fallback) {
        std::vector<double> v;
        if (grid.contains(key)) {
            for (const auto& x : grid[key]) v.push_back(x.get<double>());
            if (v.empty()) throw DomainError(std::string("sweep: axis '") + key + "' is empty");
        } else {
            v.push_back(fallback);
        }
        return v;
    };
    if (!grid.contains("ecn_min_bytes") && !grid.contains("ecn_max_bytes") &&
        !grid.contains("p_max"))
        throw DomainError("sweep: empty grid");
    auto mins = axis("ecn_min_bytes", static_cast<double>(base.ecn.min_bytes));
    auto maxs = axis("ecn_max_bytes", static_cast<double>(base.ecn.max_bytes));
    auto probs = axis("p_max", base.ecn.p_max);

    fs::create_directories(out_dir);
    std::ofstream summary(fs::path(out_dir) / "summary.csv");
    summary << "point,ecn_min_bytes,ecn_max_bytes,p_max,sustained_mark_fraction,"
               "pause_events,delivered_gbps,drops,error\n";
    int point = 0;
    for (double mn : mins) {
        for (double mx : maxs) {
            for (double pm : probs) {
                FabricConfig cfg = base;
                cfg.ecn.min_bytes = static_cast<uint64_t>(mn);
                cfg.ecn.max_bytes = static_cast<uint64_t>(mx);
                cfg.ecn.p_max = pm;
                std::string tag = "point_" + std::to_string(point);
                std::string err;
                double mark_frac = -1.0, delivered_gbps = 0.0;
                uint64_t pauses = 0, drops = 0;
                try {
                    SimReport rep = run_fabric(topo, flows, cfg, seed, horizon_ns);
                    write_sim_report(rep, (fs::path(out_dir) / tag).string());
                    uint64_t delivered = 0;
                    for (const auto& fl : rep.flows) delivered += fl.delivered_bytes;
                    delivered_gbps = rep.end_ns > 0 ? static_cast<double>(delivered) * 8.0 /
                                                          static_cast<double>(rep.end_ns)
                                                    : 0.0;
                    for (const auto& p : rep.ports) {
                        pauses += p.pause_events;
                        mark_frac = std::max(
                            mark_frac, rep.sustained_mark_fraction(p.port_id, cfg.warmup_ns, 50));
                    }
                    drops = rep.total_drops;
                } catch (const std::exception& e) {
                    err = e.what();
                }
                summary << point << ',' << static_cast<uint64_t>(mn) << ','
                        << static_cast<uint64_t>(mx) << ',' << format_double(pm) << ','
                        << format_double(mark_frac) << ',' << pauses << ','
                        << format_double(delivered_gbps) << ',' << drops << ',' << err << '\n';
                ++point;
            }
        }
    }
    std::cout << "sweep: " << point << " points written to " << out_dir << "\n";
    return 0;
}

int cmd_schedule(const std::string& jobs_path, const std::string& topo_path,
                 const std::string& policy_name, const std::string& faults_path,
                 int short_cap, int max_preemptions, int64_t resume_overhead_s, uint64_t seed,
                 const std::string& out_dir) {
    std::ifstream jf(jobs_path);
    if (!jf) throw ParseError("cannot open trace: " + jobs_path);
    auto parsed = parse_accounting(jf);
    if (!parsed.rejects.empty()) {
        write_rejects(out_dir, "job_rejects.csv", parsed.rejects);
        throw ParseError("trace: " + std::to_string(parsed.rejects.size()) +
                         " malformed rows (first at line " +
                         std::to_string(parsed.rejects.front().line) + ")");
    }
    std::sort(parsed.records.begin(), parsed.records.end(),
              [](const JobRecord& a, const JobRecord& b) {
                  if (a.submit_ts != b.submit_ts) return a.submit_ts < b.submit_ts;
                  return a.job_id < b.job_id;
              });
    ClusterTopology topo = build_topology(load_topology_config(topo_path));
    SchedulerPolicy policy;
    if (policy_name == "fifo_backfill")
        policy.kind = PolicyKind::fifo_backfill;
    else if (policy_name == "checkpoint_preempt")
        policy.kind = PolicyKind::checkpoint_preempt;
    else
        throw DomainError("unknown policy: " + policy_name);
    policy.short_job_node_cap = short_cap;
    policy.max_preemptions_per_job = max_preemptions;
    policy.resume_overhead_s = resume_overhead_s;

    std::vector<FaultEvent> faults;
    if (!faults_path.empty()) faults = load_faults(faults_path, out_dir);

    ScheduleOutcome outcome = simulate_schedule(parsed.records, topo, policy, faults, seed);
    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "schedule.csv");
        write_schedule_csv(f, outcome);
    }
    {
        std::ofstream f(fs::path(out_dir) / "summary.json");
        f << schedule_summary_json(outcome) << '\n';
    }
    std::cout << "schedule: " << outcome.jobs.size() << " jobs, mean wait (<=2 nodes) "
              << outcome.mean_wait_s(2) << " s; report in " << out_dir << "\n";
    return 0;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir,
                 std::optional<uint64_t> seed_override) {
    GenConfig cfg = load_gen_config(config_path);
    if (seed_override) cfg.seed = *seed_override;
    GeneratedTrace trace = generate_trace(cfg);
    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "jobs.csv");
        write_accounting(f, trace.jobs);
    }
    if (cfg.emit_telemetry) {
        std::ofstream f(fs::path(out_dir) / "telemetry.csv");
        write_telemetry(f, trace.samples);
    }
    std::cout << "generate: " << trace.jobs.size() << " jobs, " << trace.samples.size()
              << " telemetry samples in " << out_dir << "\n";
    return 0;
}

int cmd_plan(const std::string& topo_path, const std::string& collective_path,
             const std::string& out_dir) {
    ClusterTopology topo = build_topology(load_topology_config(topo_path));
    CollectiveSpec spec = load_collective_spec(collective_path, topo.cfg.gpus_per_node);
    FlowSet set = plan_collective(spec, topo.cfg.gpus_per_node);
    fs::create_directories(out_dir);
    {
        std::ofstream f(fs::path(out_dir) / "flows.csv");
        write_flowset_csv(f, set);
    }
    {
        nlohmann::json j;
        j["flows"] = set.flows.size();
        j["total_bytes"] = set.total_bytes();
        j["fabric_bytes"] = set.fabric_bytes();
        for (const auto& [cat, bytes] : set.fabric_bytes_by_category()) {
            j["fabric_bytes_by_category"][to_string(cat)] = bytes;
            j["fabric_share_by_category"][to_string(cat)] = set.fabric_share(cat);
        }
        std::ofstream f(fs::path(out_dir) / "shares.json");
        f << j.dump(2) << '\n';
    }
    std::cout << "plan: " << set.flows.size() << " flows, " << set.fabric_bytes()
              << " fabric bytes; written to " << out_dir << "\n";
    return 0;
}

int cmd_topo(const std::string& topo_path, const std::string& out_path) {
    ClusterTopology topo = build_topology(load_topology_config(topo_path));
    auto violations = validate(topo);
    std::ofstream f(out_path);
    if (!f) throw ParseError("cannot write: " + out_path);
    f << topology_to_json(topo) << '\n';
    std::cout << "topo: " << topo.node_count() << " nodes, " << topo.switches.size()
              << " switches, " << topo.links.size() << " links; "
              << (violations.empty() ? "valid" : "INVALID") << "; dump in " << out_path << "\n";
    for (const auto& v : violations) std::cerr << "  violation: " << v << "\n";
    return violations.empty() ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cluster digital twin: fabric, scheduler, and workload analytics"};
    app.require_subcommand(1);

    std::string jobs_path, telemetry_path, faults_path, out_dir = "out";
    std::string topo_path, fabric_path, collective_path, flows_path, grid_path, policy_name;
    std::string out_path = "topology.json";
    uint64_t seed = 1;
    int64_t horizon_ns = 10'000'000;
    int short_cap = 2, max_preemptions = 8;
    int64_t resume_overhead_s = 300;

    auto* analyze = app.add_subcommand("analyze", "compute workload metrics from logs");
    analyze->add_option("--jobs", jobs_path, "accounting CSV")->required();
    analyze->add_option("--telemetry", telemetry_path, "telemetry CSV");
    analyze->add_option("--faults", faults_path, "fault CSV");
    analyze->add_option("--out", out_dir, "output directory");

    auto* simulate = app.add_subcommand("simulate", "run the fabric simulator");
    simulate->add_option("--topology", topo_path, "topology config")->required();
    simulate->add_option("--fabric", fabric_path, "fabric config JSON");
    simulate->add_option("--collective", collective_path, "collective spec JSON");
    simulate->add_option("--flows", flows_path, "flow-set CSV");
    simulate->add_option("--seed", seed, "RNG seed")->required();
    simulate->add_option("--horizon-ns", horizon_ns, "simulation horizon");
    simulate->add_option("--out", out_dir, "output directory");

    auto* sweep = app.add_subcommand("sweep", "sweep ECN parameters over a flow set");
    sweep->add_option("--topology", topo_path, "topology config")->required();
    sweep->add_option("--fabric", fabric_path, "base fabric config JSON");
    sweep->add_option("--flows", flows_path, "flow-set CSV")->required();
    sweep->add_option("--grid", grid_path, "grid JSON")->required();
    sweep->add_option("--seed", seed, "RNG seed")->required();
    sweep->add_option("--horizon-ns", horizon_ns, "simulation horizon");
    sweep->add_option("--out", out_dir, "output directory");

    auto* schedule = app.add_subcommand("schedule", "replay a trace through the scheduler");
    schedule->add_option("--jobs", jobs_path, "accounting CSV")->required();
    schedule->add_option("--topology", topo_path, "topology config")->required();
    schedule->add_option("--policy", policy_name, "fifo_backfill | checkpoint_preempt")
        ->required();
    schedule->add_option("--faults", faults_path, "fault CSV");
    schedule->add_option("--short-cap", short_cap, "preemption beneficiary node cap");
    schedule->add_option("--max-preemptions", max_preemptions, "per-job preemption cap");
    schedule->add_option("--resume-overhead-s", resume_overhead_s, "checkpoint resume overhead");
    schedule->add_option("--seed", seed, "RNG seed")->required();
    schedule->add_option("--out", out_dir, "output directory");

    auto* generate = app.add_subcommand("generate", "generate a synthetic calibrated trace");
    generate->add_option("--config", collective_path, "generator config JSON")->required();
    generate->add_option("--seed", seed, "override the config seed");
    generate->add_option("--out", out_dir, "output directory");

    auto* plan = app.add_subcommand("plan", "emit a collective flow set as CSV");
    plan->add_option("--topology", topo_path, "topology config")->required();
    plan->add_option("--collective", collective_path, "collective spec JSON")->required();
    plan->add_option("--out", out_dir, "output directory");

    auto* topo = app.add_subcommand("topo", "build, validate, and dump a topology");
    topo->add_option("--config", topo_path, "topology config")->required();
    topo->add_option("--out", out_path, "output JSON path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (analyze->parsed())
            return cmd_analyze(jobs_path, telemetry_path, faults_path, out_dir);
        if (simulate->parsed())
            return cmd_simulate(topo_path, fabric_path, collective_path, flows_path, seed,
                                horizon_ns, out_dir);
        if (sweep->parsed())
            return cmd_sweep(topo_path, fabric_path, flows_path, grid_path, seed, horizon_ns,
                             out_dir);
        if (schedule->parsed())
            return cmd_schedule(jobs_path, topo_path, policy_name, faults_path, short_cap,
                                max_preemptions, resume_overhead_s, seed, out_dir);
        if (generate->parsed()) {
            std::optional<uint64_t> seed_override;
            if (generate->count("--seed")) seed_override = seed;
            return cmd_generate(collective_path, out_dir, seed_override);
        }
        if (plan->parsed()) return cmd_plan(topo_path, collective_path, out_dir);
        if (topo->parsed()) return cmd_topo(topo_path, out_path);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
