#include "clustersim/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>

#include "clustersim/csv.hpp"
#include "json.hpp"

namespace clustersim {

std::vector<SizeBucket> default_size_buckets() {
    return {{"1", 1, 1},     {"2", 2, 2},     {"3-4", 3, 4},   {"5-8", 5, 8},
            {"9-16", 9, 16}, {"17-32", 17, 32}, {"33-64", 33, 64}};
}

uint64_t gpu_occupied_seconds(const JobRecord& job) {
    if (!job.has_runtime()) throw DomainError("no runtime: job " + job.job_id);
    return static_cast<uint64_t>(job.runtime_s()) * static_cast<uint64_t>(job.requested_nodes) *
           static_cast<uint64_t>(job.gpus_per_node);
}

double gpu_occupied_time_hours(const JobRecord& job) {
    return static_cast<double>(gpu_occupied_seconds(job)) / 3600.0;
}

std::vector<StateShare> state_distribution(const std::vector<JobRecord>& jobs) {
    std::vector<StateShare> out;
    for (JobState s : {JobState::COMPLETED, JobState::CANCELLED, JobState::FAILED})
        out.push_back({s, 0, 0, 0.0, 0.0});
    if (jobs.empty()) return out;
    uint64_t total_count = 0, total_gpu = 0;
    for (const auto& j : jobs) {
        if (!is_terminal(j.state))
            throw DomainError("state_distribution: job " + j.job_id + " is not terminal");
        uint64_t gs = gpu_occupied_seconds(j);
        for (auto& e : out) {
            if (e.state == j.state) {
                e.count++;
                e.gpu_seconds += gs;
            }
        }
        total_count++;
        total_gpu += gs;
    }
    for (auto& e : out) {
        e.count_share = static_cast<double>(e.count) / static_cast<double>(total_count);
        e.gpu_time_share =
            total_gpu ? static_cast<double>(e.gpu_seconds) / static_cast<double>(total_gpu) : 0.0;
    }
    return out;
}

std::vector<BucketShare> size_distribution(const std::vector<JobRecord>& jobs,
                                           const std::vector<SizeBucket>& buckets) {
    std::vector<BucketShare> out;
    for (const auto& b : buckets) out.push_back({b, 0, 0, 0.0, 0.0});
    uint64_t total_count = 0, total_gpu = 0;
    for (const auto& j : jobs) {
        bool placed = false;
        uint64_t gs = gpu_occupied_seconds(j);
        for (auto& e : out) {
            if (j.requested_nodes >= e.bucket.min_nodes && j.requested_nodes <= e.bucket.max_nodes) {
                e.count++;
                e.gpu_seconds += gs;
                placed = true;
                break;
            }
        }
        if (!placed)
            throw DomainError("size_distribution: job " + j.job_id + " (" +
                              std::to_string(j.requested_nodes) + " nodes) fits no bucket");
        total_count++;
        total_gpu += gs;
    }
    for (auto& e : out) {
        if (total_count) e.count_share = static_cast<double>(e.count) / static_cast<double>(total_count);
        if (total_gpu) e.gpu_time_share = static_cast<double>(e.gpu_seconds) / static_cast<double>(total_gpu);
    }
    return out;
}

UtilizationResult utilization_profile(const JobRecord& job,
                                      const std::vector<TelemetrySample>& samples,
                                      double low_threshold, int64_t period_s,
                                      bool per_gpu_low) {
    if (!job.has_runtime()) throw DomainError("no runtime: job " + job.job_id);
    std::set<int> nodes(job.allocated_nodes.begin(), job.allocated_nodes.end());

    struct StepAcc {
        double sum = 0.0;
        uint64_t count = 0;
        uint64_t low_samples = 0;
    };
    std::map<int64_t, StepAcc> steps;
    for (const auto& s : samples) {
        if (s.source != TelemetrySource::gpu_util) continue;
        if (!nodes.empty() && !nodes.count(s.node_id)) continue;
        if (s.ts < job.start_ts || s.ts >= job.end_ts) continue;
        int64_t step = (s.ts - job.start_ts) / period_s;
        auto& acc = steps[step];
        acc.sum += s.value_a;
        acc.count++;
        if (s.value_a < low_threshold) acc.low_samples++;
    }
    if (steps.empty()) throw DomainError("no telemetry: job " + job.job_id);

    UtilizationResult r;
    double util_sum = 0.0;
    uint64_t sample_count = 0;
    uint64_t low_steps = 0;
    uint64_t low_gpu_samples = 0;
    for (const auto& [step, acc] : steps) {
        util_sum += acc.sum;
        sample_count += acc.count;
        low_gpu_samples += acc.low_samples;
        double step_mean = acc.sum / static_cast<double>(acc.count);
        if (step_mean < low_threshold) low_steps++;
    }
    r.steps = steps.size();
    r.avg_util = util_sum / static_cast<double>(sample_count);
    r.low_util_fraction =
        per_gpu_low
            ? static_cast<double>(low_gpu_samples) / static_cast<double>(sample_count)
            : static_cast<double>(low_steps) / static_cast<double>(steps.size());
    int64_t total_steps = std::max<int64_t>(1, job.runtime_s() / period_s);
    r.coverage = std::min(1.0, static_cast<double>(steps.size()) / static_cast<double>(total_steps));
    return r;
}

std::vector<CdfPoint> runtime_cdf(const std::vector<JobRecord>& jobs, const SizeBucket& bucket) {
    std::vector<int64_t> runtimes;
    for (const auto& j : jobs)
        if (j.requested_nodes >= bucket.min_nodes && j.requested_nodes <= bucket.max_nodes &&
            j.has_runtime())
            runtimes.push_back(j.runtime_s());
    if (runtimes.empty())
        throw DomainError("runtime_cdf: bucket " + bucket.label + " is empty");
    std::sort(runtimes.begin(), runtimes.end());
    std::vector<CdfPoint> cdf;
    size_t n = runtimes.size();
    for (size_t i = 0; i < n; ++i) {
        if (i + 1 < n && runtimes[i + 1] == runtimes[i]) continue;
        cdf.push_back({runtimes[i], static_cast<double>(i + 1) / static_cast<double>(n)});
    }
    return cdf;
}

double tail_probability(const std::vector<CdfPoint>& cdf, int64_t threshold_s) {
    double below = 0.0;
    for (const auto& p : cdf) {
        if (p.runtime_s <= threshold_s)
            below = p.cum_prob;
        else
            break;
    }
    return 1.0 - below;
}

static std::string utc_date(int64_t epoch_s) {
    std::time_t t = static_cast<std::time_t>(epoch_s);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", tm.tm_year + 1900, tm.tm_mon + 1,
                  tm.tm_mday);
    return buf;
}

static std::string utc_month(int64_t epoch_s) {
    std::time_t t = static_cast<std::time_t>(epoch_s);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d", tm.tm_year + 1900, tm.tm_mon + 1);
    return buf;
}

std::map<std::string, std::vector<uint64_t>> daily_submissions(
    const std::vector<JobRecord>& jobs, const std::vector<SizeBucket>& buckets) {
    std::map<std::string, std::vector<uint64_t>> out;
    for (const auto& j : jobs) {
        if (j.start_ts < 0) continue;
        auto& day = out[utc_date(j.start_ts)];
        if (day.empty()) day.assign(buckets.size(), 0);
        for (size_t b = 0; b < buckets.size(); ++b) {
            if (j.requested_nodes >= buckets[b].min_nodes &&
                j.requested_nodes <= buckets[b].max_nodes) {
                day[b]++;
                break;
            }
        }
    }
    return out;
}

const char* to_string(FaultComponent c) {
    switch (c) {
        case FaultComponent::gpu: return "gpu";
        case FaultComponent::nvlink_pcie: return "nvlink_pcie";
        case FaultComponent::nic: return "nic";
        case FaultComponent::leaf_spine_switch: return "leaf_spine_switch";
        case FaultComponent::storage_switch: return "storage_switch";
        case FaultComponent::misconfig: return "misconfig";
    }
    return "?";
}

FaultComponent fault_component_from_string(const std::string& s) {
    if (s == "gpu") return FaultComponent::gpu;
    if (s == "nvlink_pcie") return FaultComponent::nvlink_pcie;
    if (s == "nic") return FaultComponent::nic;
    if (s == "leaf_spine_switch") return FaultComponent::leaf_spine_switch;
    if (s == "storage_switch") return FaultComponent::storage_switch;
    if (s == "misconfig") return FaultComponent::misconfig;
    throw ParseError("unknown fault component: " + s);
}

ParseResult<FaultEvent> parse_faults(std::istream& in) {
    CsvTable t = read_csv(in);
    size_t c_time = t.require_column("time");
    size_t c_comp = t.require_column("component");
    size_t c_target = t.require_column("target");
    size_t c_rec = t.require_column("recovery_s");
    auto c_kind = t.column("recovery");
    ParseResult<FaultEvent> out;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        size_t line = t.line_numbers[i];
        try {
            if (row.size() <= std::max({c_time, c_comp, c_target, c_rec}))
                throw ParseError("row has fewer fields than the header");
            FaultEvent f;
            f.time_s = parse_int(row[c_time], "time", line);
            f.component = fault_component_from_string(row[c_comp]);
            f.target = row[c_target];
            f.recovery_duration_s = parse_int(row[c_rec], "recovery_s", line);
            if (c_kind && *c_kind < row.size() && !row[*c_kind].empty())
                f.recovery = row[*c_kind] == "replace" ? FaultRecovery::replace
                                                       : FaultRecovery::restart;
            out.records.push_back(std::move(f));
        } catch (const ParseError& e) {
            out.rejects.push_back({line, e.what()});
        }
    }
    return out;
}

FaultReport fault_report(const std::vector<FaultEvent>& faults) {
    FaultReport r;
    for (auto c : {FaultComponent::gpu, FaultComponent::nvlink_pcie, FaultComponent::nic,
                   FaultComponent::leaf_spine_switch, FaultComponent::storage_switch,
                   FaultComponent::misconfig})
        r.counts.push_back({c, 0});
    for (const auto& f : faults) {
        for (auto& [c, n] : r.counts)
            if (c == f.component) n++;
        r.monthly[utc_month(f.time_s)]++;
        r.total++;
    }
    for (auto& [c, n] : r.counts)
        r.share_percent.push_back(
            r.total ? 100.0 * static_cast<double>(n) / static_cast<double>(r.total) : 0.0);
    return r;
}

NicPeakResult nic_peak(const std::vector<TelemetrySample>& samples, int node_id,
                       int64_t window_start, int64_t window_end, double imbalance_threshold,
                       int64_t min_dt_s, int64_t max_dt_s) {
    // gather per-port counter samples inside the window, ordered by time
    std::map<int, std::vector<const TelemetrySample*>> ports;
    for (const auto& s : samples) {
        if (s.source != TelemetrySource::nic_counter || s.node_id != node_id) continue;
        if (s.ts < window_start || s.ts > window_end) continue;
        ports[s.index].push_back(&s);
    }
    NicPeakResult r;
    std::vector<PortRate> rates;
    for (auto& [port, list] : ports) {
        std::stable_sort(list.begin(), list.end(),
                         [](const TelemetrySample* a, const TelemetrySample* b) {
                             return a->ts < b->ts;
                         });
        for (size_t i = 0; i + 1 < list.size(); ++i) {
            const auto* a = list[i];
            const auto* b = list[i + 1];
            int64_t dt = b->ts - a->ts;
            if (dt < min_dt_s || dt > max_dt_s) continue;
            double dtx = b->value_a - a->value_a;
            double drx = b->value_b.value_or(0.0) - a->value_b.value_or(0.0);
            double gbps = (dtx + drx) / static_cast<double>(dt) / 1e9;
            rates.push_back({port, a->ts, b->ts, gbps});
        }
    }
    if (rates.empty()) {
        r.reason = ports.empty() ? "no counter samples in window"
                                 : "no counter interval within the accepted 50-70s range";
        return r;
    }
    const PortRate* peak = &rates.front();
    for (const auto& pr : rates)
        if (pr.gbps > peak->gbps) peak = &pr;
    r.found = true;
    r.peak_gbps = peak->gbps;
    r.peak_port = peak->port;
    r.peak_t0 = peak->t0;
    r.peak_t1 = peak->t1;

    // per-port rate at the peak instant: the accepted pair overlapping the
    // midpoint of the peak interval (best overlap wins)
    double mid = static_cast<double>(peak->t0 + peak->t1) / 2.0;
    std::map<int, const PortRate*> at_peak;
    for (const auto& pr : rates) {
        if (static_cast<double>(pr.t0) > mid || static_cast<double>(pr.t1) < mid) continue;
        auto it = at_peak.find(pr.port);
        if (it == at_peak.end() ||
            std::abs(static_cast<double>(pr.t0 + pr.t1) / 2.0 - mid) <
                std::abs(static_cast<double>(it->second->t0 + it->second->t1) / 2.0 - mid))
            at_peak[pr.port] = &pr;
    }
    double lo = peak->gbps, hi = peak->gbps;
    for (const auto& [port, pr] : at_peak) {
        r.port_rates_at_peak.push_back(*pr);
        lo = std::min(lo, pr->gbps);
        hi = std::max(hi, pr->gbps);
    }
    r.imbalance_ratio = hi > 0.0 ? lo / hi : 1.0;
    r.imbalance = r.imbalance_ratio < imbalance_threshold;
    return r;
}

MetricReport build_metric_report(const std::vector<JobRecord>& jobs,
                                 const std::vector<TelemetrySample>& samples,
                                 const std::vector<FaultEvent>& faults,
                                 const std::vector<SizeBucket>& buckets) {
    MetricReport rep;
    rep.jobs_total = jobs.size();
    std::vector<JobRecord> terminal;
    for (const auto& j : jobs) {
        if (is_terminal(j.state) && j.has_runtime())
            terminal.push_back(j);
        else
            rep.jobs_excluded_nonterminal++;
    }
    rep.state_dist = state_distribution(terminal);
    rep.size_dist = size_distribution(terminal, buckets);
    rep.daily = daily_submissions(terminal, buckets);
    for (const auto& b : buckets) {
        bool any = false;
        for (const auto& j : terminal)
            if (j.requested_nodes >= b.min_nodes && j.requested_nodes <= b.max_nodes) any = true;
        if (any) rep.runtime_cdf_by_bucket[b.label] = runtime_cdf(terminal, b);
    }
    rep.faults = fault_report(faults);

    bool have_util = false;
    for (const auto& s : samples)
        if (s.source == TelemetrySource::gpu_util) have_util = true;
    if (have_util) {
        std::map<std::string, std::vector<double>> bucket_avg, bucket_low;
        for (const auto& j : terminal) {
            if (j.allocated_nodes.empty()) continue;
            try {
                UtilizationResult u = utilization_profile(j, samples);
                rep.util_by_job[j.job_id] = u;
                for (const auto& b : buckets) {
                    if (j.requested_nodes >= b.min_nodes && j.requested_nodes <= b.max_nodes) {
                        bucket_avg[b.label].push_back(u.avg_util);
                        bucket_low[b.label].push_back(u.low_util_fraction);
                        break;
                    }
                }
            } catch (const DomainError&) {
                // jobs with no telemetry coverage are skipped
            }
        }
        auto median = [](std::vector<double>& v) {
            std::sort(v.begin(), v.end());
            size_t n = v.size();
            return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
        };
        for (auto& [label, v] : bucket_avg) {
            auto& low = bucket_low[label];
            rep.util_by_bucket[label] = {median(v), median(low)};
        }
    }

    // NIC peaks per job over its allocation window (first allocated node)
    bool have_counters = false;
    for (const auto& s : samples)
        if (s.source == TelemetrySource::nic_counter) have_counters = true;
    if (have_counters) {
        for (const auto& j : terminal) {
            if (j.allocated_nodes.empty()) continue;
            NicPeakResult best;
            for (int node : std::set<int>(j.allocated_nodes.begin(), j.allocated_nodes.end())) {
                NicPeakResult r = nic_peak(samples, node, j.start_ts, j.end_ts);
                if (r.found && (!best.found || r.peak_gbps > best.peak_gbps)) best = r;
            }
            if (best.found) rep.nic_peaks[j.job_id] = best;
        }
    }
    return rep;
}

std::vector<std::string> write_metric_report(const MetricReport& rep, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    auto open = [&](const std::string& name) {
        written.push_back((fs::path(out_dir) / name).string());
        return std::ofstream(written.back());
    };

    {
        auto f = open("state_dist.csv");
        f << "state,count,gpu_seconds,count_share,gpu_time_share\n";
        for (const auto& e : rep.state_dist)
            write_csv_row(f, {to_string(e.state), std::to_string(e.count),
                              std::to_string(e.gpu_seconds), format_double(e.count_share),
                              format_double(e.gpu_time_share)});
    }
    {
        auto f = open("size_dist.csv");
        f << "bucket,count,gpu_seconds,count_share,gpu_time_share\n";
        for (const auto& e : rep.size_dist)
            write_csv_row(f, {e.bucket.label, std::to_string(e.count),
                              std::to_string(e.gpu_seconds), format_double(e.count_share),
                              format_double(e.gpu_time_share)});
    }
    {
        auto f = open("util_by_bucket.csv");
        f << "bucket,median_avg_util,median_low_util_fraction\n";
        for (const auto& [label, mm] : rep.util_by_bucket)
            write_csv_row(f, {label, format_double(mm.first), format_double(mm.second)});
    }
    {
        auto f = open("runtime_cdf.csv");
        f << "bucket,runtime_s,cum_prob\n";
        for (const auto& [label, cdf] : rep.runtime_cdf_by_bucket)
            for (const auto& p : cdf)
                write_csv_row(f, {label, std::to_string(p.runtime_s), format_double(p.cum_prob)});
    }
    {
        auto f = open("daily.csv");
        f << "date";
        for (const auto& e : rep.size_dist) f << ',' << e.bucket.label;
        f << '\n';
        for (const auto& [date, counts] : rep.daily) {
            f << date;
            for (auto c : counts) f << ',' << c;
            f << '\n';
        }
    }
    {
        auto f = open("faults.csv");
        f << "component,count,share_percent\n";
        for (size_t i = 0; i < rep.faults.counts.size(); ++i)
            write_csv_row(f, {to_string(rep.faults.counts[i].first),
                              std::to_string(rep.faults.counts[i].second),
                              format_double(rep.faults.share_percent[i])});
        f << "month,count,\n";
        for (const auto& [month, n] : rep.faults.monthly)
            write_csv_row(f, {month, std::to_string(n), ""});
    }
    {
        auto f = open("nic_peaks.csv");
        f << "job_id,peak_gbps,peak_port,imbalance_ratio,imbalance\n";
        for (const auto& [job, r] : rep.nic_peaks)
            write_csv_row(f, {job, format_double(r.peak_gbps), std::to_string(r.peak_port),
                              format_double(r.imbalance_ratio), r.imbalance ? "1" : "0"});
    }
    {
        auto f = open("report.json");
        nlohmann::json j;
        j["jobs_total"] = rep.jobs_total;
        j["jobs_excluded_nonterminal"] = rep.jobs_excluded_nonterminal;
        for (const auto& e : rep.state_dist)
            j["state_dist"][to_string(e.state)] = {{"count", e.count},
                                                   {"gpu_seconds", e.gpu_seconds},
                                                   {"count_share", e.count_share},
                                                   {"gpu_time_share", e.gpu_time_share}};
        for (const auto& e : rep.size_dist)
            j["size_dist"][e.bucket.label] = {{"count", e.count},
                                              {"gpu_seconds", e.gpu_seconds},
                                              {"count_share", e.count_share},
                                              {"gpu_time_share", e.gpu_time_share}};
        for (const auto& [label, mm] : rep.util_by_bucket)
            j["util_by_bucket"][label] = {{"median_avg_util", mm.first},
                                          {"median_low_util_fraction", mm.second}};
        j["fault_total"] = rep.faults.total;
        for (size_t i = 0; i < rep.faults.counts.size(); ++i)
            j["fault_shares"][to_string(rep.faults.counts[i].first)] = rep.faults.share_percent[i];
        for (const auto& [month, n] : rep.faults.monthly) j["fault_monthly"][month] = n;
        for (const auto& [job, r] : rep.nic_peaks)
            j["nic_peaks"][job] = {{"peak_gbps", r.peak_gbps},
                                   {"imbalance_ratio", r.imbalance_ratio},
                                   {"imbalance", r.imbalance}};
        f << j.dump(2) << '\n';
    }
    return written;
}

}  // namespace clustersim
