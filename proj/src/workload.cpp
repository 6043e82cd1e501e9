#include "clustersim/workload.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "clustersim/csv.hpp"
#include "clustersim/rng.hpp"
#include "json.hpp"

namespace clustersim {

const char* to_string(JobState s) {
    switch (s) {
        case JobState::COMPLETED: return "COMPLETED";
        case JobState::CANCELLED: return "CANCELLED";
        case JobState::FAILED: return "FAILED";
        case JobState::PENDING: return "PENDING";
        case JobState::RUNNING: return "RUNNING";
    }
    return "?";
}

JobState job_state_from_string(const std::string& s) {
    if (s == "COMPLETED") return JobState::COMPLETED;
    if (s == "CANCELLED") return JobState::CANCELLED;
    if (s == "FAILED") return JobState::FAILED;
    if (s == "PENDING") return JobState::PENDING;
    if (s == "RUNNING") return JobState::RUNNING;
    throw ParseError("unknown job state: " + s);
}

bool is_terminal(JobState s) {
    return s == JobState::COMPLETED || s == JobState::CANCELLED || s == JobState::FAILED;
}

const char* to_string(TelemetrySource s) {
    switch (s) {
        case TelemetrySource::gpu_util: return "gpu_util";
        case TelemetrySource::nvlink_bytes: return "nvlink_bytes";
        case TelemetrySource::pcie_bytes: return "pcie_bytes";
        case TelemetrySource::nic_counter: return "nic_counter";
    }
    return "?";
}

TelemetrySource telemetry_source_from_string(const std::string& s) {
    if (s == "gpu_util") return TelemetrySource::gpu_util;
    if (s == "nvlink_bytes") return TelemetrySource::nvlink_bytes;
    if (s == "pcie_bytes") return TelemetrySource::pcie_bytes;
    if (s == "nic_counter") return TelemetrySource::nic_counter;
    throw ParseError("unknown telemetry source: " + s);
}

ParseResult<JobRecord> parse_accounting(std::istream& in) {
    CsvTable t = read_csv(in);
    size_t c_id = t.require_column("job_id");
    size_t c_sub = t.require_column("submit_ts");
    size_t c_start = t.require_column("start_ts");
    size_t c_end = t.require_column("end_ts");
    size_t c_state = t.require_column("state");
    size_t c_nodes = t.require_column("nodes");
    size_t c_gpus = t.require_column("gpus_per_node");
    auto c_ckpt = t.column("checkpoint_interval_s");
    auto c_alloc = t.column("allocated_nodes");

    ParseResult<JobRecord> out;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        size_t line = t.line_numbers[i];
        try {
            if (row.size() <= std::max({c_id, c_sub, c_start, c_end, c_state, c_nodes, c_gpus}))
                throw ParseError("row has fewer fields than the header");
            JobRecord j;
            j.job_id = row[c_id];
            if (j.job_id.empty()) throw ParseError("empty job_id");
            j.submit_ts = parse_int(row[c_sub], "submit_ts", line);
            j.start_ts = row[c_start].empty() ? -1 : parse_int(row[c_start], "start_ts", line);
            j.end_ts = row[c_end].empty() ? -1 : parse_int(row[c_end], "end_ts", line);
            j.state = job_state_from_string(row[c_state]);
            j.requested_nodes = static_cast<int>(parse_int(row[c_nodes], "nodes", line));
            j.gpus_per_node = static_cast<int>(parse_int(row[c_gpus], "gpus_per_node", line));
            if (c_ckpt && *c_ckpt < row.size() && !row[*c_ckpt].empty())
                j.checkpoint_interval_s = parse_int(row[*c_ckpt], "checkpoint_interval_s", line);
            if (c_alloc && *c_alloc < row.size() && !row[*c_alloc].empty()) {
                std::stringstream ss(row[*c_alloc]);
                std::string tok;
                while (std::getline(ss, tok, ';'))
                    j.allocated_nodes.push_back(
                        static_cast<int>(parse_int(tok, "allocated_nodes", line)));
            }
            if (j.requested_nodes < 1) throw ParseError("nodes must be >= 1");
            if (j.gpus_per_node < 1) throw ParseError("gpus_per_node must be >= 1");
            if (j.start_ts >= 0 && j.start_ts < j.submit_ts)
                throw ParseError("start_ts before submit_ts");
            if (j.end_ts >= 0 && j.start_ts >= 0 && j.end_ts < j.start_ts)
                throw ParseError("end_ts before start_ts");
            if (is_terminal(j.state) && j.end_ts < 0)
                throw ParseError("terminal job without end_ts");
            out.records.push_back(std::move(j));
        } catch (const ParseError& e) {
            out.rejects.push_back({line, e.what()});
        }
    }
    return out;
}

void write_accounting(std::ostream& out, const std::vector<JobRecord>& jobs) {
    out << "job_id,submit_ts,start_ts,end_ts,state,nodes,gpus_per_node,"
           "checkpoint_interval_s,allocated_nodes\n";
    for (const auto& j : jobs) {
        std::string alloc;
        for (size_t i = 0; i < j.allocated_nodes.size(); ++i) {
            if (i) alloc += ';';
            alloc += std::to_string(j.allocated_nodes[i]);
        }
        write_csv_row(out, {j.job_id, std::to_string(j.submit_ts),
                            j.start_ts < 0 ? "" : std::to_string(j.start_ts),
                            j.end_ts < 0 ? "" : std::to_string(j.end_ts), to_string(j.state),
                            std::to_string(j.requested_nodes), std::to_string(j.gpus_per_node),
                            j.checkpoint_interval_s ? std::to_string(*j.checkpoint_interval_s) : "",
                            alloc});
    }
}

ParseResult<TelemetrySample> parse_telemetry(std::istream& in) {
    CsvTable t = read_csv(in);
    size_t c_node = t.require_column("node_id");
    size_t c_src = t.require_column("source");
    size_t c_idx = t.require_column("index");
    size_t c_ts = t.require_column("ts");
    size_t c_a = t.require_column("value_a");
    auto c_b = t.column("value_b");

    ParseResult<TelemetrySample> out;
    // last cumulative counter per (node, source, index)
    std::map<std::tuple<int, int, int>, std::pair<double, double>> last;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        size_t line = t.line_numbers[i];
        try {
            TelemetrySample s;
            s.node_id = static_cast<int>(parse_int(row.at(c_node), "node_id", line));
            s.source = telemetry_source_from_string(row.at(c_src));
            s.index = static_cast<int>(parse_int(row.at(c_idx), "index", line));
            s.ts = parse_int(row.at(c_ts), "ts", line);
            s.value_a = parse_double(row.at(c_a), "value_a", line);
            if (c_b && *c_b < row.size() && !row[*c_b].empty())
                s.value_b = parse_double(row[*c_b], "value_b", line);
            if (s.source == TelemetrySource::gpu_util &&
                (s.value_a < 0.0 || s.value_a > 100.0))
                throw ParseError("gpu_util outside [0,100]");
            if (s.source != TelemetrySource::gpu_util) {
                auto key = std::make_tuple(s.node_id, static_cast<int>(s.source), s.index);
                auto it = last.find(key);
                double b = s.value_b.value_or(0.0);
                if (it != last.end() &&
                    (s.value_a < it->second.first || b < it->second.second))
                    throw ParseError("counter_reset");
                last[key] = {s.value_a, b};
            }
            out.records.push_back(std::move(s));
        } catch (const ParseError& e) {
            out.rejects.push_back({line, e.what()});
        } catch (const std::out_of_range&) {
            out.rejects.push_back({line, "row has fewer fields than the header"});
        }
    }
    return out;
}

void write_telemetry(std::ostream& out, const std::vector<TelemetrySample>& samples) {
    out << "node_id,source,index,ts,value_a,value_b\n";
    for (const auto& s : samples) {
        write_csv_row(out, {std::to_string(s.node_id), to_string(s.source),
                            std::to_string(s.index), std::to_string(s.ts),
                            format_double(s.value_a),
                            s.value_b ? format_double(*s.value_b) : ""});
    }
}

// ---- generation ----

void GenConfig::validate() const {
    if (job_count < 0) throw DomainError("gen: job_count must be >= 0");
    if (duration_days < 1) throw DomainError("gen: duration_days must be >= 1");
    if (buckets.empty()) throw DomainError("gen: at least one bucket required");
    double wsum = 0.0;
    for (const auto& b : buckets) {
        if (b.weight < 0.0) throw DomainError("gen: bucket weight must be >= 0");
        if (b.weight > 0.0 && b.min_nodes > b.max_nodes)
            throw DomainError("gen: bucket '" + b.name + "' has positive weight but empty node range");
        double ps = b.p_completed + b.p_cancelled + b.p_failed;
        if (std::abs(ps - 1.0) > 1e-9)
            throw DomainError("gen: bucket '" + b.name + "' state mix sums to " +
                              std::to_string(ps) + ", expected 1");
        if (b.runtime.body_median_s <= 0.0 || b.runtime.tail_scale_s <= 0.0 ||
            b.runtime.tail_alpha <= 0.0)
            throw DomainError("gen: bucket '" + b.name + "' runtime law parameters must be > 0");
        if (b.runtime.tail_prob < 0.0 || b.runtime.tail_prob > 1.0)
            throw DomainError("gen: bucket '" + b.name + "' tail_prob outside [0,1]");
        wsum += b.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-6)
        throw DomainError("gen: bucket weights sum to " + std::to_string(wsum) + ", expected 1");
    if (!phases.empty())
        for (const auto& b : buckets)
            if (!b.phase_weights.empty() && b.phase_weights.size() != phases.size())
                throw DomainError("gen: bucket '" + b.name +
                                  "' phase_weights length != phase count");
}

static RuntimeLaw runtime_law_from_json(const nlohmann::json& j) {
    RuntimeLaw law;
    law.body_median_s = j.value("body_median_s", law.body_median_s);
    law.body_sigma = j.value("body_sigma", law.body_sigma);
    law.tail_prob = j.value("tail_prob", law.tail_prob);
    law.tail_scale_s = j.value("tail_scale_s", law.tail_scale_s);
    law.tail_alpha = j.value("tail_alpha", law.tail_alpha);
    law.tail_cap_s = j.value("tail_cap_s", law.tail_cap_s);
    return law;
}

GenConfig load_gen_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open generator config: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what());
    }
    GenConfig cfg;
    cfg.job_count = j.value("job_count", cfg.job_count);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.start_epoch_s = j.value("start_epoch_s", cfg.start_epoch_s);
    cfg.duration_days = j.value("duration_days", cfg.duration_days);
    cfg.cluster_nodes = j.value("cluster_nodes", cfg.cluster_nodes);
    cfg.gpus_per_node = j.value("gpus_per_node", cfg.gpus_per_node);
    cfg.emit_telemetry = j.value("emit_telemetry", cfg.emit_telemetry);
    cfg.telemetry_period_s = j.value("telemetry_period_s", cfg.telemetry_period_s);
    cfg.telemetry_max_steps_per_job =
        j.value("telemetry_max_steps_per_job", cfg.telemetry_max_steps_per_job);
    cfg.low_util_threshold = j.value("low_util_threshold", cfg.low_util_threshold);
    for (const auto& pj : j.value("phases", nlohmann::json::array()))
        cfg.phases.push_back({pj.value("from_day", 0), pj.value("to_day", 0)});
    for (const auto& bj : j.value("buckets", nlohmann::json::array())) {
        BucketConfig b;
        b.name = bj.value("name", std::string("bucket"));
        b.min_nodes = bj.value("min_nodes", 1);
        b.max_nodes = bj.value("max_nodes", b.min_nodes);
        b.weight = bj.value("weight", 0.0);
        if (bj.contains("states")) {
            b.p_completed = bj["states"].value("COMPLETED", 0.0);
            b.p_cancelled = bj["states"].value("CANCELLED", 0.0);
            b.p_failed = bj["states"].value("FAILED", 0.0);
        }
        if (bj.contains("runtime")) b.runtime = runtime_law_from_json(bj["runtime"]);
        b.failed_runtime_factor = bj.value("failed_runtime_factor", 1.0);
        if (bj.contains("util")) {
            b.util.mean_util = bj["util"].value("mean", b.util.mean_util);
            b.util.util_sigma = bj["util"].value("sigma", b.util.util_sigma);
            b.util.low_frac_mean = bj["util"].value("low_frac_mean", b.util.low_frac_mean);
            b.util.low_frac_sigma = bj["util"].value("low_frac_sigma", b.util.low_frac_sigma);
        }
        if (bj.contains("checkpoint_interval_s") && !bj["checkpoint_interval_s"].is_null())
            b.checkpoint_interval_s = bj["checkpoint_interval_s"].get<int64_t>();
        for (const auto& w : bj.value("phase_weights", nlohmann::json::array()))
            b.phase_weights.push_back(w.get<double>());
        cfg.buckets.push_back(std::move(b));
    }
    cfg.validate();
    return cfg;
}

// Pareto truncated to [scale, cap], evaluated at quantile u.
static double truncated_pareto_q(double u, double scale, double alpha, double cap) {
    if (cap <= scale) return scale;
    double f_cap = 1.0 - std::pow(scale / cap, alpha);
    double x = scale * std::pow(1.0 - u * f_cap, -1.0 / alpha);
    return std::min(x, cap);
}

// Largest-remainder quota split of n into parts proportional to weights.
static std::vector<int> quota_split(int n, const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    std::vector<int> counts(weights.size(), 0);
    std::vector<std::pair<double, size_t>> remainders;
    int assigned = 0;
    for (size_t i = 0; i < weights.size(); ++i) {
        double exact = total > 0.0 ? n * weights[i] / total : 0.0;
        counts[i] = static_cast<int>(exact);
        assigned += counts[i];
        remainders.push_back({exact - counts[i], i});
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (int k = 0; assigned < n; ++k, ++assigned) counts[remainders[k % remainders.size()].second]++;
    return counts;
}

// Draws are stratified so that a 5,000-job trace reproduces the configured
// mixes tightly: bucket and per-bucket state counts follow exact quotas, the
// tail share of each runtime law is hit by count, and states are spread evenly
// across the runtime order so the state split of GPU-time tracks the state
// split of job count within each bucket.
GeneratedTrace generate_trace(const GenConfig& cfg) {
    cfg.validate();
    GeneratedTrace out;

    std::vector<PhaseWindow> phases = cfg.phases;
    if (phases.empty()) phases.push_back({0, cfg.duration_days});

    std::vector<double> weights;
    for (const auto& b : cfg.buckets) weights.push_back(b.weight);
    std::vector<int> bucket_counts = quota_split(cfg.job_count, weights);

    struct Draft {
        size_t bucket;
        int64_t runtime_s;
        int nodes;
        JobState state;
    };
    std::vector<Draft> drafts;
    int job_index = 0;  // exhausted deterministically across buckets

    for (size_t bi = 0; bi < cfg.buckets.size(); ++bi) {
        const BucketConfig& b = cfg.buckets[bi];
        int n = bucket_counts[bi];
        if (n == 0) continue;

        // runtimes: exact tail quota, stratified quantile draws so the bucket's
        // empirical distribution hugs the law
        int tails = static_cast<int>(std::llround(b.runtime.tail_prob * n));
        struct Pair {
            double runtime;
            int nodes;
        };
        std::vector<Pair> pairs;
        for (int i = 0; i < n; ++i) {
            Rng rng(mix64(cfg.seed, static_cast<uint64_t>(job_index + i)));
            double v = rng.uniform01();
            double runtime;
            if (i < tails) {
                double u = (i + v) / tails;
                runtime = truncated_pareto_q(u, b.runtime.tail_scale_s, b.runtime.tail_alpha,
                                             b.runtime.tail_cap_s);
            } else {
                double u = (i - tails + v) / (n - tails);
                double z = inv_norm_cdf(u);
                double body = std::exp(std::log(b.runtime.body_median_s) +
                                       b.runtime.body_sigma * z);
                runtime = std::min(body, b.runtime.tail_scale_s * 0.999);
            }
            int nodes = static_cast<int>(rng.uniform_int(b.min_nodes, b.max_nodes));
            pairs.push_back({runtime, nodes});
        }
        job_index += n;
        // states are spread evenly over the GPU-time mass order, so the
        // cancelled/completed/failed split holds by GPU-time as well as count
        std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) {
            return a.runtime * a.nodes > b.runtime * b.nodes;
        });

        std::vector<double> state_w = {b.p_cancelled, b.p_completed, b.p_failed};
        std::vector<int> state_quota = quota_split(n, state_w);
        std::vector<int> state_assigned(3, 0);
        for (int i = 0; i < n; ++i) {
            int pick = 0;
            double best = -1e18;
            for (int s = 0; s < 3; ++s) {
                if (state_assigned[s] >= state_quota[s]) continue;
                double target = static_cast<double>(state_quota[s]) * (i + 1) / n;
                double deficit = target - state_assigned[s];
                if (deficit > best) {
                    best = deficit;
                    pick = s;
                }
            }
            state_assigned[pick]++;
            JobState st = pick == 0 ? JobState::CANCELLED
                                    : (pick == 1 ? JobState::COMPLETED : JobState::FAILED);
            double runtime = pairs[static_cast<size_t>(i)].runtime;
            if (st == JobState::FAILED) runtime *= b.failed_runtime_factor;
            drafts.push_back({bi, std::max<int64_t>(1, static_cast<int64_t>(std::llround(runtime))),
                              pairs[static_cast<size_t>(i)].nodes, st});
        }
    }

    // submit times, allocations, telemetry
    int next_alloc = 0;
    for (size_t d = 0; d < drafts.size(); ++d) {
        const Draft& draft = drafts[d];
        const BucketConfig& b = cfg.buckets[draft.bucket];
        Rng rng(mix64(cfg.seed ^ 0x5eedULL, static_cast<uint64_t>(d)));

        JobRecord j;
        j.gpus_per_node = cfg.gpus_per_node;
        j.requested_nodes = draft.nodes;
        j.state = draft.state;
        j.checkpoint_interval_s = b.checkpoint_interval_s;

        std::vector<double> day_w(phases.size(), 1.0);
        for (size_t p = 0; p < phases.size(); ++p) {
            if (!b.phase_weights.empty()) day_w[p] = b.phase_weights[p];
            day_w[p] *= std::max(0, phases[p].to_day - phases[p].from_day);
        }
        const PhaseWindow& ph = phases[rng.categorical(day_w)];
        int day = static_cast<int>(
            rng.uniform_int(ph.from_day, std::max(ph.from_day, ph.to_day - 1)));
        j.submit_ts = cfg.start_epoch_s + static_cast<int64_t>(day) * 86400 +
                      rng.uniform_int(0, 86399);
        j.start_ts = j.submit_ts;  // generator emits an uncontended trace
        j.end_ts = j.start_ts + draft.runtime_s;

        for (int k = 0; k < j.requested_nodes; ++k)
            j.allocated_nodes.push_back((next_alloc + k) % cfg.cluster_nodes);
        next_alloc = (next_alloc + j.requested_nodes) % cfg.cluster_nodes;

        if (cfg.emit_telemetry) {
            Rng trng(mix64(cfg.seed ^ 0x7e1eULL, static_cast<uint64_t>(d)));
            int64_t steps = draft.runtime_s / cfg.telemetry_period_s;
            steps = std::min<int64_t>(steps, cfg.telemetry_max_steps_per_job);
            double base =
                std::clamp(trng.normal(b.util.mean_util, b.util.util_sigma), 0.0, 100.0);
            double low_frac =
                std::clamp(trng.normal(b.util.low_frac_mean, b.util.low_frac_sigma), 0.0, 1.0);
            for (int64_t s = 0; s < steps; ++s) {
                bool low_step = trng.uniform01() < low_frac;
                double step_util =
                    low_step ? trng.uniform(0.0, cfg.low_util_threshold * 0.9)
                             : std::clamp(base + trng.normal(0.0, 3.0),
                                          cfg.low_util_threshold, 100.0);
                for (int node : j.allocated_nodes) {
                    for (int g = 0; g < j.gpus_per_node; ++g) {
                        TelemetrySample t;
                        t.node_id = node;
                        t.source = TelemetrySource::gpu_util;
                        t.index = g;
                        t.ts = j.start_ts + s * cfg.telemetry_period_s;
                        double v = std::clamp(step_util + trng.normal(0.0, 0.5), 0.0, 100.0);
                        t.value_a = std::round(v * 10.0) / 10.0;
                        out.samples.push_back(t);
                    }
                }
            }
        }
        out.jobs.push_back(std::move(j));
    }

    std::stable_sort(out.jobs.begin(), out.jobs.end(),
                     [](const JobRecord& a, const JobRecord& b) {
                         if (a.submit_ts != b.submit_ts) return a.submit_ts < b.submit_ts;
                         if (a.end_ts != b.end_ts) return a.end_ts < b.end_ts;
                         return a.requested_nodes < b.requested_nodes;
                     });
    for (size_t i = 0; i < out.jobs.size(); ++i) out.jobs[i].job_id = "j" + std::to_string(i + 1);
    std::stable_sort(out.samples.begin(), out.samples.end(),
                     [](const TelemetrySample& a, const TelemetrySample& b) {
                         if (a.ts != b.ts) return a.ts < b.ts;
                         if (a.node_id != b.node_id) return a.node_id < b.node_id;
                         return a.index < b.index;
                     });
    return out;
}

}  // namespace clustersim
