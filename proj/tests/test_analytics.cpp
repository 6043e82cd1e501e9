#include "clustersim/analytics.hpp"

#include <cmath>
#include <sstream>

#include "clustersim/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace clustersim;

namespace {

JobRecord job(const std::string& id, int nodes, int gpus, int64_t start, int64_t runtime,
              JobState state = JobState::COMPLETED) {
    JobRecord j;
    j.job_id = id;
    j.submit_ts = start;
    j.start_ts = start;
    j.end_ts = start + runtime;
    j.requested_nodes = nodes;
    j.gpus_per_node = gpus;
    j.state = state;
    return j;
}

}  // namespace

TEST_CASE("gpu occupied time: 4 nodes x 8 GPUs x 1 h = 32 GPU-hours") {
    CHECK(gpu_occupied_time_hours(job("a", 4, 8, 0, 3600)) == 32.0);
    CHECK(gpu_occupied_time_hours(job("b", 1, 1, 0, 0)) == 0.0);
    CHECK(gpu_occupied_time_hours(job("c", 2, 8, 0, 1800)) == 8.0);
}

TEST_CASE("gpu occupied time rejects jobs without a runtime") {
    JobRecord j = job("x", 1, 8, 0, 10);
    j.end_ts = -1;
    j.state = JobState::RUNNING;
    CHECK_THROWS_WITH_AS(gpu_occupied_time_hours(j), doctest::Contains("no runtime"),
                         DomainError);
}

TEST_CASE("gpu occupied time is additive over disjoint job sets") {
    Rng rng(31);
    auto jobs = oracles::random_trace(rng, 60);
    double total = 0.0;
    uint64_t total_s = 0;
    for (const auto& j : jobs) {
        total += gpu_occupied_time_hours(j);
        total_s += gpu_occupied_seconds(j);
    }
    uint64_t left = 0, right = 0;
    for (size_t i = 0; i < jobs.size(); ++i)
        (i % 2 ? left : right) += gpu_occupied_seconds(jobs[i]);
    CHECK(left + right == total_s);
    CHECK(total == doctest::Approx(static_cast<double>(total_s) / 3600.0));
}

TEST_CASE("state distribution matches the hand-summed oracle") {
    // 320 / 40 / 4 GPU-hours split across CANCELLED / COMPLETED / FAILED
    std::vector<JobRecord> jobs = {
        job("c1", 10, 8, 0, 3600 * 4, JobState::CANCELLED),   // 320 gpu-h
        job("d1", 5, 8, 0, 3600, JobState::COMPLETED),        // 40 gpu-h
        job("f1", 1, 8, 0, 1800, JobState::FAILED),           // 4 gpu-h
    };
    auto dist = state_distribution(jobs);
    REQUIRE(dist.size() == 3);
    for (const auto& e : dist) {
        if (e.state == JobState::CANCELLED) {
            CHECK(e.gpu_time_share == doctest::Approx(320.0 / 364.0));  // 87.9%
            CHECK(std::round(e.gpu_time_share * 1000) == 879);
        }
        if (e.state == JobState::COMPLETED) CHECK(std::round(e.gpu_time_share * 1000) == 110);
        if (e.state == JobState::FAILED) CHECK(std::round(e.gpu_time_share * 1000) == 11);
    }
}

TEST_CASE("single completed job owns both shares") {
    auto dist = state_distribution({job("only", 2, 8, 0, 60)});
    for (const auto& e : dist) {
        if (e.state == JobState::COMPLETED) {
            CHECK(e.count_share == 1.0);
            CHECK(e.gpu_time_share == 1.0);
        } else {
            CHECK(e.count == 0);
        }
    }
}

TEST_CASE("empty input gives an empty distribution, not an error") {
    auto dist = state_distribution({});
    for (const auto& e : dist) {
        CHECK(e.count == 0);
        CHECK(e.count_share == 0.0);
    }
}

TEST_CASE("size distribution: trivial and hand-enumerated fixtures") {
    auto buckets = default_size_buckets();
    std::vector<JobRecord> all_small = {job("a", 1, 8, 0, 60), job("b", 1, 8, 0, 120)};
    auto dist = size_distribution(all_small, buckets);
    CHECK(dist[0].count_share == 1.0);
    CHECK(dist[0].gpu_time_share == 1.0);

    std::vector<JobRecord> mixed = {
        job("a", 1, 8, 0, 3600),    // bucket 1: 8 gpu-h
        job("b", 4, 8, 0, 3600),    // bucket 3-4: 32 gpu-h
        job("c", 20, 8, 0, 3600),   // bucket 17-32: 160 gpu-h
    };
    dist = size_distribution(mixed, buckets);
    uint64_t total = 8 + 32 + 160;
    for (const auto& e : dist) {
        if (e.bucket.label == "1") CHECK(e.gpu_time_share == doctest::Approx(8.0 / total));
        if (e.bucket.label == "3-4") CHECK(e.gpu_time_share == doctest::Approx(32.0 / total));
        if (e.bucket.label == "17-32")
            CHECK(e.gpu_time_share == doctest::Approx(160.0 / total));
    }
}

TEST_CASE("job outside every bucket is an error naming the job") {
    auto buckets = default_size_buckets();
    std::vector<JobRecord> jobs = {job("giant", 65, 8, 0, 60)};
    CHECK_THROWS_WITH_AS(size_distribution(jobs, buckets), doctest::Contains("giant"),
                         DomainError);
}

TEST_CASE("utilization: constant 98.4 across GPUs gives (98.4, 0)") {
    JobRecord j = job("u", 1, 8, 0, 600);
    j.allocated_nodes = {0};
    std::vector<TelemetrySample> samples;
    for (int step = 0; step < 10; ++step)
        for (int g = 0; g < 8; ++g) {
            TelemetrySample s;
            s.node_id = 0;
            s.source = TelemetrySource::gpu_util;
            s.index = g;
            s.ts = step * 60;
            s.value_a = 98.4;
            samples.push_back(s);
        }
    auto r = utilization_profile(j, samples);
    CHECK(r.avg_util == doctest::Approx(98.4));
    CHECK(r.low_util_fraction == 0.0);
    CHECK(r.coverage == doctest::Approx(1.0));
}

TEST_CASE("utilization: equal intervals at 10/30/15 give (18.33, 2/3)") {
    JobRecord j = job("u", 1, 1, 0, 180);
    j.allocated_nodes = {0};
    std::vector<TelemetrySample> samples;
    double vals[3] = {10.0, 30.0, 15.0};
    for (int step = 0; step < 3; ++step) {
        TelemetrySample s;
        s.node_id = 0;
        s.source = TelemetrySource::gpu_util;
        s.index = 0;
        s.ts = step * 60;
        s.value_a = vals[step];
        samples.push_back(s);
    }
    auto r = utilization_profile(j, samples);
    CHECK(r.avg_util == doctest::Approx(55.0 / 3.0));
    CHECK(r.low_util_fraction == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("utilization: per-GPU low-state variant counts individual samples") {
    // two GPUs, one busy and one idle: the step mean sits above the threshold,
    // but half the individual samples are low
    JobRecord j = job("u", 1, 2, 0, 120);
    j.allocated_nodes = {0};
    std::vector<TelemetrySample> samples;
    for (int step = 0; step < 2; ++step) {
        for (int g = 0; g < 2; ++g) {
            TelemetrySample s;
            s.node_id = 0;
            s.source = TelemetrySource::gpu_util;
            s.index = g;
            s.ts = step * 60;
            s.value_a = g == 0 ? 90.0 : 5.0;
            samples.push_back(s);
        }
    }
    auto mean_based = utilization_profile(j, samples);
    CHECK(mean_based.low_util_fraction == 0.0);  // step means are 47.5
    auto per_gpu = utilization_profile(j, samples, 20.0, 60, /*per_gpu_low=*/true);
    CHECK(per_gpu.low_util_fraction == doctest::Approx(0.5));
}

TEST_CASE("utilization: all zeros give (0, 1.0); no samples raise") {
    JobRecord j = job("u", 1, 1, 0, 120);
    j.allocated_nodes = {0};
    std::vector<TelemetrySample> samples;
    for (int step = 0; step < 2; ++step) {
        TelemetrySample s;
        s.node_id = 0;
        s.source = TelemetrySource::gpu_util;
        s.index = 0;
        s.ts = step * 60;
        s.value_a = 0.0;
        samples.push_back(s);
    }
    auto r = utilization_profile(j, samples);
    CHECK(r.avg_util == 0.0);
    CHECK(r.low_util_fraction == 1.0);
    CHECK_THROWS_WITH_AS(utilization_profile(j, {}), doctest::Contains("no telemetry"),
                         DomainError);
}

TEST_CASE("runtime cdf: single job, sorted steps, tail probability") {
    auto buckets = default_size_buckets();
    std::vector<JobRecord> one = {job("a", 1, 8, 0, 3600)};
    auto cdf = runtime_cdf(one, buckets[0]);
    REQUIRE(cdf.size() == 1);
    CHECK(cdf[0].runtime_s == 3600);
    CHECK(cdf[0].cum_prob == 1.0);

    std::vector<JobRecord> jobs;
    for (int i = 0; i < 10; ++i) jobs.push_back(job("j" + std::to_string(i), 20, 8, 0, (i + 1) * 100));
    auto cdf2 = runtime_cdf(jobs, buckets[5]);
    REQUIRE(cdf2.size() == 10);
    CHECK(cdf2[4].runtime_s == 500);
    CHECK(cdf2[4].cum_prob == doctest::Approx(0.5));  // sort-based oracle by construction
    CHECK(tail_probability(cdf2, 500) == doctest::Approx(0.5));
    CHECK(tail_probability(cdf2, 1000) == doctest::Approx(0.0));
    CHECK(tail_probability(cdf2, 50) == doctest::Approx(1.0));
}

TEST_CASE("daily submissions: span counted once, same-day distinct buckets") {
    auto buckets = default_size_buckets();
    // 2025-01-01 00:30 UTC start, running three days
    std::vector<JobRecord> jobs = {job("long", 1, 8, 1735689600 + 1800, 3 * 86400)};
    auto daily = daily_submissions(jobs, buckets);
    REQUIRE(daily.size() == 1);
    CHECK(daily.count("2025-01-01") == 1);
    CHECK(daily["2025-01-01"][0] == 1);

    CHECK(daily_submissions({}, buckets).empty());

    std::vector<JobRecord> two = {job("a", 1, 8, 1735689600, 60),
                                  job("b", 20, 8, 1735689600 + 7200, 60)};
    auto daily2 = daily_submissions(two, buckets);
    REQUIRE(daily2.size() == 1);
    CHECK(daily2["2025-01-01"][0] == 1);
    CHECK(daily2["2025-01-01"][5] == 1);
}

TEST_CASE("fault report reproduces the production classification table") {
    auto faults = oracles::fault_fixture();
    REQUIRE(faults.size() == 21);
    auto rep = fault_report(faults);
    CHECK(rep.total == 21);
    // counts 9,4,1,5,1,1 and shares 42.9, 19.0, 4.8, 23.8, 4.8, 4.8
    CHECK(rep.counts[0].second == 9);
    CHECK(rep.counts[1].second == 4);
    CHECK(rep.counts[2].second == 1);
    CHECK(rep.counts[3].second == 5);
    CHECK(rep.counts[4].second == 1);
    CHECK(rep.counts[5].second == 1);
    int expected_tenths[6] = {429, 190, 48, 238, 48, 48};
    for (int i = 0; i < 6; ++i)
        CHECK(std::llround(rep.share_percent[i] * 10.0) == expected_tenths[i]);
    REQUIRE(rep.monthly.size() == 3);
    CHECK(rep.monthly.at("2025-01") == 13);
    CHECK(rep.monthly.at("2025-02") == 5);
    CHECK(rep.monthly.at("2025-03") == 3);
}

TEST_CASE("single fault takes its whole category") {
    FaultEvent e;
    e.component = FaultComponent::nic;
    e.time_s = 1735689600;
    auto rep = fault_report({e});
    CHECK(rep.share_percent[2] == doctest::Approx(100.0));
    CHECK(rep.total == 1);
}

TEST_CASE("nic peak: eight uniform ports at 22.6 GB/s, no imbalance") {
    // dTX+dRX = 1,356 GB over 60 s per port
    auto samples = oracles::nic_series(0, 8, 10, 1000, 1.356e12);
    auto r = nic_peak(samples, 0, 0, 100000);
    REQUIRE(r.found);
    CHECK(r.peak_gbps == doctest::Approx(22.6).epsilon(0.001));
    CHECK(r.port_rates_at_peak.size() == 8);
    CHECK_FALSE(r.imbalance);
    CHECK(r.imbalance_ratio == doctest::Approx(1.0));
}

TEST_CASE("nic peak: six fast ports and two slow ones flag imbalance") {
    auto fast = oracles::nic_series(0, 6, 10, 1000, 18.9 * 60 * 1e9);
    auto slow = oracles::nic_series(0, 2, 10, 1000, 8.0 * 60 * 1e9);
    for (auto& s : slow) s.index += 6;
    fast.insert(fast.end(), slow.begin(), slow.end());
    auto r = nic_peak(fast, 0, 0, 100000);
    REQUIRE(r.found);
    CHECK(r.peak_gbps == doctest::Approx(18.9).epsilon(0.001));
    CHECK(r.imbalance);
    CHECK(r.imbalance_ratio == doctest::Approx(8.0 / 18.9).epsilon(0.001));
}

TEST_CASE("nic peak: intervals outside 50-70 s are excluded") {
    std::vector<TelemetrySample> samples;
    for (int i = 0; i < 4; ++i) {
        TelemetrySample s;
        s.node_id = 0;
        s.source = TelemetrySource::nic_counter;
        s.index = 0;
        s.ts = 1000 + i * 45;  // 45 s spacing: every pair rejected
        s.value_a = 1e12 + i * 1e11;
        s.value_b = 1e12;
        samples.push_back(s);
    }
    auto r = nic_peak(samples, 0, 0, 100000);
    CHECK_FALSE(r.found);
    CHECK(r.reason.find("50-70") != std::string::npos);
}

TEST_CASE("nic peak is invariant under samples outside the job window") {
    auto samples = oracles::nic_series(0, 4, 10, 1000, 1.0e12);
    auto base = nic_peak(samples, 0, 900, 2000);
    REQUIRE(base.found);
    auto extended = samples;
    auto outside = oracles::nic_series(0, 4, 5, 5000, 9.9e12);  // much faster, but later
    extended.insert(extended.end(), outside.begin(), outside.end());
    auto r = nic_peak(extended, 0, 900, 2000);
    REQUIRE(r.found);
    CHECK(r.peak_gbps == base.peak_gbps);
    CHECK(r.peak_t0 == base.peak_t0);
    CHECK(r.imbalance_ratio == base.imbalance_ratio);
}

TEST_CASE("share vectors sum to one within 1e-9") {
    Rng rng(77);
    for (int trial = 0; trial < 30; ++trial) {
        auto jobs = oracles::random_trace(rng);
        auto dist = state_distribution(jobs);
        double cs = 0.0, gs = 0.0;
        for (const auto& e : dist) {
            cs += e.count_share;
            gs += e.gpu_time_share;
        }
        CHECK(cs == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(gs == doctest::Approx(1.0).epsilon(1e-9));
        auto sdist = size_distribution(jobs, default_size_buckets());
        cs = gs = 0.0;
        for (const auto& e : sdist) {
            cs += e.count_share;
            gs += e.gpu_time_share;
        }
        CHECK(cs == doctest::Approx(1.0).epsilon(1e-9));
        CHECK(gs == doctest::Approx(1.0).epsilon(1e-9));
    }
}

TEST_CASE("analytics equals the brute-force oracle exactly on random traces") {
    Rng rng(123);
    auto buckets = default_size_buckets();
    for (int trial = 0; trial < 25; ++trial) {
        auto jobs = oracles::random_trace(rng);
        auto dist = state_distribution(jobs);
        auto oracle = oracles::state_shares(jobs);
        for (const auto& e : dist) {
            uint64_t oc = oracle.count.count(to_string(e.state)) ? oracle.count[to_string(e.state)] : 0;
            uint64_t og = oracle.gpu_s.count(to_string(e.state)) ? oracle.gpu_s[to_string(e.state)] : 0;
            CHECK(e.count == oc);
            CHECK(e.gpu_seconds == og);
            // single final division on identical integers: exact double equality
            CHECK(e.count_share ==
                  static_cast<double>(oc) / static_cast<double>(oracle.total_count));
            CHECK(e.gpu_time_share ==
                  static_cast<double>(og) / static_cast<double>(oracle.total_gpu_s));
        }
        auto sdist = size_distribution(jobs, buckets);
        auto soracle = oracles::size_shares(jobs, buckets);
        for (const auto& e : sdist) {
            uint64_t oc = soracle.count.count(e.bucket.label) ? soracle.count[e.bucket.label] : 0;
            CHECK(e.count == oc);
        }
    }
}

TEST_CASE("metric report writes every documented file") {
    Rng rng(9);
    auto jobs = oracles::random_trace(rng, 20);
    auto report = build_metric_report(jobs, {}, oracles::fault_fixture(),
                                      default_size_buckets());
    auto files = write_metric_report(report, "/tmp/clustersim_test_report");
    REQUIRE(files.size() == 8);
    const char* expected[] = {"state_dist.csv", "size_dist.csv", "util_by_bucket.csv",
                              "runtime_cdf.csv", "daily.csv",    "faults.csv",
                              "nic_peaks.csv",  "report.json"};
    for (const char* name : expected) {
        bool found = false;
        for (const auto& f : files)
            if (f.find(name) != std::string::npos) found = true;
        CHECK_MESSAGE(found, name);
    }
}
