#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clustersim/errors.hpp"

namespace clustersim {

enum class JobState { COMPLETED, CANCELLED, FAILED, PENDING, RUNNING };

const char* to_string(JobState s);
JobState job_state_from_string(const std::string& s);
bool is_terminal(JobState s);

struct JobRecord {
    std::string job_id;
    int64_t submit_ts = 0;
    int64_t start_ts = -1;                 // -1: never started
    int64_t end_ts = -1;                   // -1: not ended
    int requested_nodes = 1;
    int gpus_per_node = 8;
    JobState state = JobState::COMPLETED;
    std::optional<int64_t> checkpoint_interval_s;
    std::vector<int> allocated_nodes;

    bool has_runtime() const { return start_ts >= 0 && end_ts >= start_ts; }
    int64_t runtime_s() const { return end_ts - start_ts; }
};

enum class TelemetrySource { gpu_util, nvlink_bytes, pcie_bytes, nic_counter };

const char* to_string(TelemetrySource s);
TelemetrySource telemetry_source_from_string(const std::string& s);

struct TelemetrySample {
    int node_id = 0;
    TelemetrySource source = TelemetrySource::gpu_util;
    int index = 0;        // GPU or port
    int64_t ts = 0;       // seconds
    double value_a = 0.0; // util % or cumulative TX bytes
    std::optional<double> value_b;  // cumulative RX bytes for counters
};

struct RejectedRow {
    size_t line = 0;
    std::string reason;
};

template <typename T>
struct ParseResult {
    std::vector<T> records;
    std::vector<RejectedRow> rejects;
};

// Accounting CSV: job_id,submit_ts,start_ts,end_ts,state,nodes,gpus_per_node,
// checkpoint_interval_s(optional),allocated_nodes(optional, ;-separated).
// Malformed rows become rejects with line numbers; a missing mandatory column
// throws ParseError naming it.
ParseResult<JobRecord> parse_accounting(std::istream& in);
void write_accounting(std::ostream& out, const std::vector<JobRecord>& jobs);

// Telemetry CSV: node_id,source,index,ts,value_a,value_b(optional).
// Cumulative counters must be nondecreasing per (node, source, index);
// regressions reject the sample with reason "counter_reset".
ParseResult<TelemetrySample> parse_telemetry(std::istream& in);
void write_telemetry(std::ostream& out, const std::vector<TelemetrySample>& samples);

// ---- synthetic trace generation ----

struct RuntimeLaw {
    double body_median_s = 1800.0;
    double body_sigma = 1.2;       // log-normal shape
    double tail_prob = 0.0;        // share of jobs drawn from the Pareto tail
    double tail_scale_s = 604800;  // tail minimum (body is capped here)
    double tail_alpha = 2.0;
    double tail_cap_s = 3024000;   // tail truncation (runs cannot outlive the project)
};

struct UtilProfile {
    double mean_util = 50.0;      // per-job base utilization, percent
    double util_sigma = 15.0;
    double low_frac_mean = 0.3;   // share of steps spent below the low threshold
    double low_frac_sigma = 0.1;
};

struct BucketConfig {
    std::string name;
    int min_nodes = 1;
    int max_nodes = 1;
    double weight = 0.0;               // share of job count
    double p_completed = 1.0;
    double p_cancelled = 0.0;
    double p_failed = 0.0;
    RuntimeLaw runtime;
    double failed_runtime_factor = 1.0;  // failures die early
    UtilProfile util;
    std::optional<int64_t> checkpoint_interval_s;
    std::vector<double> phase_weights;   // per-phase submit-day weighting
};

struct PhaseWindow {
    int from_day = 0;
    int to_day = 0;  // exclusive
};

struct GenConfig {
    int job_count = 1000;
    uint64_t seed = 1;
    int64_t start_epoch_s = 0;
    int duration_days = 90;
    int cluster_nodes = 100;
    int gpus_per_node = 8;
    std::vector<PhaseWindow> phases;     // default: one phase spanning the run
    std::vector<BucketConfig> buckets;
    bool emit_telemetry = false;
    int64_t telemetry_period_s = 60;
    int64_t telemetry_max_steps_per_job = 720;  // cap on emitted steps (coverage reported)
    double low_util_threshold = 20.0;

    void validate() const;
};

GenConfig load_gen_config(const std::string& path);

struct GeneratedTrace {
    std::vector<JobRecord> jobs;
    std::vector<TelemetrySample> samples;
};

GeneratedTrace generate_trace(const GenConfig& cfg);

}  // namespace clustersim
