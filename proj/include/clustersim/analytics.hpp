#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "clustersim/workload.hpp"

namespace clustersim {

// Metrics over job and telemetry data. Counts and GPU-occupied time accumulate
// as exact integers (GPU-seconds); shares are a single final division.

struct SizeBucket {
    std::string label;
    int min_nodes = 1;
    int max_nodes = 1;
};

// {1, 2, 3-4, 5-8, 9-16, 17-32, 33-64}
std::vector<SizeBucket> default_size_buckets();

// GPU-occupied hours: runtime * nodes * gpus_per_node. Throws DomainError
// ("no runtime") for jobs without start/end.
double gpu_occupied_time_hours(const JobRecord& job);
uint64_t gpu_occupied_seconds(const JobRecord& job);

struct StateShare {
    JobState state;
    uint64_t count = 0;
    uint64_t gpu_seconds = 0;
    double count_share = 0.0;
    double gpu_time_share = 0.0;
};

std::vector<StateShare> state_distribution(const std::vector<JobRecord>& jobs);

struct BucketShare {
    SizeBucket bucket;
    uint64_t count = 0;
    uint64_t gpu_seconds = 0;
    double count_share = 0.0;
    double gpu_time_share = 0.0;
};

// Throws DomainError naming any job outside every bucket.
std::vector<BucketShare> size_distribution(const std::vector<JobRecord>& jobs,
                                           const std::vector<SizeBucket>& buckets);

struct UtilizationResult {
    double avg_util = 0.0;          // time-weighted mean over allocated GPUs
    double low_util_fraction = 0.0; // share of known steps with mean util < threshold
    double coverage = 0.0;          // share of the runtime covered by telemetry
    size_t steps = 0;
};

// Samples are matched to the job by allocated node and [start,end) window.
// Steps with no samples are unknown: excluded from both numerator and
// denominator, reported via coverage. Throws DomainError("no telemetry") when
// nothing matches. The low-utilization share is evaluated on the per-step mean
// across the job's GPUs; `per_gpu_low` switches it to individual GPU samples.
UtilizationResult utilization_profile(const JobRecord& job,
                                      const std::vector<TelemetrySample>& samples,
                                      double low_threshold = 20.0,
                                      int64_t period_s = 60,
                                      bool per_gpu_low = false);

struct CdfPoint {
    int64_t runtime_s;
    double cum_prob;  // P(runtime <= runtime_s), right-continuous
};

std::vector<CdfPoint> runtime_cdf(const std::vector<JobRecord>& jobs, const SizeBucket& bucket);
double tail_probability(const std::vector<CdfPoint>& cdf, int64_t threshold_s);

// UTC start date -> per-bucket submission counts; jobs are counted once on
// their start date.
std::map<std::string, std::vector<uint64_t>> daily_submissions(
    const std::vector<JobRecord>& jobs, const std::vector<SizeBucket>& buckets);

enum class FaultComponent { gpu, nvlink_pcie, nic, leaf_spine_switch, storage_switch, misconfig };

const char* to_string(FaultComponent c);
FaultComponent fault_component_from_string(const std::string& s);

enum class FaultRecovery { restart, replace };

struct FaultEvent {
    int64_t time_s = 0;
    FaultComponent component = FaultComponent::gpu;
    std::string target;  // node or switch id
    FaultRecovery recovery = FaultRecovery::restart;
    int64_t recovery_duration_s = 600;
};

// CSV columns: time,component,target,recovery_s plus optional recovery kind.
ParseResult<FaultEvent> parse_faults(std::istream& in);

struct FaultReport {
    // one entry per component category, in declaration order
    std::vector<std::pair<FaultComponent, uint64_t>> counts;
    std::vector<double> share_percent;
    std::map<std::string, uint64_t> monthly;  // "YYYY-MM" -> events
    uint64_t total = 0;
};

FaultReport fault_report(const std::vector<FaultEvent>& faults);

struct PortRate {
    int port = 0;
    int64_t t0 = 0;
    int64_t t1 = 0;
    double gbps = 0.0;  // decimal GB/s, full duplex
};

struct NicPeakResult {
    bool found = false;
    std::string reason;            // set when !found
    double peak_gbps = 0.0;
    int peak_port = 0;
    int64_t peak_t0 = 0, peak_t1 = 0;
    std::vector<PortRate> port_rates_at_peak;
    double imbalance_ratio = 1.0;  // min/max port rate at the peak instant
    bool imbalance = false;
};

// Per-port full-duplex rate (dTX+dRX)/dt over consecutive counter pairs inside
// [window_start, window_end] with 50s <= dt <= 70s accepted; peak is the max
// over ports and pairs. Imbalance is flagged when min/max at the peak instant
// falls below `imbalance_threshold`.
NicPeakResult nic_peak(const std::vector<TelemetrySample>& samples, int node_id,
                       int64_t window_start, int64_t window_end,
                       double imbalance_threshold = 0.5, int64_t min_dt_s = 50,
                       int64_t max_dt_s = 70);

struct MetricReport {
    std::vector<StateShare> state_dist;
    std::vector<BucketShare> size_dist;
    std::map<std::string, UtilizationResult> util_by_job;
    // bucket label -> (median avg util, median low-util fraction)
    std::map<std::string, std::pair<double, double>> util_by_bucket;
    std::map<std::string, std::vector<CdfPoint>> runtime_cdf_by_bucket;
    std::map<std::string, std::vector<uint64_t>> daily;
    FaultReport faults;
    std::map<std::string, NicPeakResult> nic_peaks;  // job_id -> peak analysis
    size_t jobs_total = 0;
    size_t jobs_excluded_nonterminal = 0;
};

MetricReport build_metric_report(const std::vector<JobRecord>& jobs,
                                 const std::vector<TelemetrySample>& samples,
                                 const std::vector<FaultEvent>& faults,
                                 const std::vector<SizeBucket>& buckets);

// One CSV per figure analog plus report.json; returns the list of files written.
std::vector<std::string> write_metric_report(const MetricReport& report,
                                             const std::string& out_dir);

}  // namespace clustersim
