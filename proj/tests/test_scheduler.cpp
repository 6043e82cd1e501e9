#include "clustersim/scheduler.hpp"

#include <sstream>

#include "clustersim/rng.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace clustersim;

namespace {

TopologyConfig sched_topo_cfg(int pods, int nodes_per_pod) {
    TopologyConfig cfg;
    cfg.pods = pods;
    cfg.leafs_per_pod = 1;
    cfg.spines = 1;
    cfg.nodes_per_pod = nodes_per_pod;
    cfg.gpus_per_node = 1;
    cfg.rails_per_node = 1;
    return cfg;
}

JobRecord trace_job(const std::string& id, int64_t submit, int nodes, int64_t work_s,
                    JobState state = JobState::COMPLETED,
                    std::optional<int64_t> ckpt = std::nullopt) {
    JobRecord j;
    j.job_id = id;
    j.submit_ts = submit;
    j.start_ts = submit;       // trace runtimes carry the work duration
    j.end_ts = submit + work_s;
    j.requested_nodes = nodes;
    j.gpus_per_node = 8;
    j.state = state;
    j.checkpoint_interval_s = ckpt;
    return j;
}

SchedulerPolicy fifo() {
    SchedulerPolicy p;
    p.kind = PolicyKind::fifo_backfill;
    return p;
}

SchedulerPolicy preempt(int cap = 2, int64_t overhead = 0) {
    SchedulerPolicy p;
    p.kind = PolicyKind::checkpoint_preempt;
    p.short_job_node_cap = cap;
    p.resume_overhead_s = overhead;
    return p;
}

}  // namespace

TEST_CASE("single job on an empty cluster starts at submit with zero wait") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    auto outcome = simulate_schedule({trace_job("a", 100, 2, 600)}, topo, fifo(), {}, 1);
    const JobOutcome* a = outcome.find("a");
    REQUIRE(a);
    CHECK(a->start_ts == 100);
    CHECK(a->wait_s == 0);
    CHECK(a->end_ts == 700);
    CHECK(outcome.oversubscriptions().empty());
}

TEST_CASE("checkpoint preemption: hand-traced schedule") {
    // 32-node cluster fully held by a checkpointed 4-hour job; a 1-node
    // 10-minute job arrives at t=30 min
    auto topo = build_topology(sched_topo_cfg(1, 32));
    std::vector<JobRecord> trace = {
        trace_job("big", 0, 32, 4 * 3600, JobState::COMPLETED, 3600),
        trace_job("short", 1800, 1, 600),
    };

    SUBCASE("checkpoint_preempt runs the short job at the next checkpoint") {
        auto outcome = simulate_schedule(trace, topo, preempt(/*cap=*/1, /*overhead=*/0), {}, 1);
        const JobOutcome* s = outcome.find("short");
        const JobOutcome* b = outcome.find("big");
        REQUIRE(s);
        REQUIRE(b);
        CHECK(s->start_ts == 3600);             // next checkpoint completion
        CHECK(s->end_ts == 4200);
        CHECK(s->wait_s == 1800);
        CHECK(b->preemptions == 1);
        CHECK(b->end_ts == 4 * 3600 + 600);     // resumes at 4200 with zero progress loss
        CHECK(outcome.oversubscriptions().empty());
    }

    SUBCASE("fifo_backfill makes the short job wait for the large one") {
        auto outcome = simulate_schedule(trace, topo, fifo(), {}, 1);
        const JobOutcome* s = outcome.find("short");
        const JobOutcome* b = outcome.find("big");
        REQUIRE(s);
        CHECK(s->start_ts == 4 * 3600);
        CHECK(s->wait_s == 4 * 3600 - 1800);
        CHECK(b->preemptions == 0);
    }
}

TEST_CASE("resume overhead extends the preempted job's makespan") {
    auto topo = build_topology(sched_topo_cfg(1, 32));
    std::vector<JobRecord> trace = {
        trace_job("big", 0, 32, 4 * 3600, JobState::COMPLETED, 3600),
        trace_job("short", 1800, 1, 600),
    };
    auto outcome = simulate_schedule(trace, topo, preempt(1, /*overhead=*/300), {}, 1);
    const JobOutcome* b = outcome.find("big");
    REQUIRE(b);
    // suspension 600 s + resume overhead 300 s
    CHECK(b->end_ts == 4 * 3600 + 600 + 300);
    // bound: preemptions * (interval + overhead)
    CHECK(b->end_ts - b->start_ts - 4 * 3600 <=
          b->preemptions * (3600 + 300));
}

TEST_CASE("placement prefers a single pod and breaks ties by node id") {
    auto topo = build_topology(sched_topo_cfg(2, 50));
    std::vector<int> all_free;
    for (int i = 0; i < 100; ++i) all_free.push_back(i);

    auto a = placement(all_free, 4, topo);
    REQUIRE(a);
    CHECK_FALSE(a->cross_pod);
    CHECK(a->nodes == std::vector<int>{0, 1, 2, 3});

    // request exceeding any single pod falls back to cross-pod
    auto b = placement(all_free, 60, topo);
    REQUIRE(b);
    CHECK(b->cross_pod);
    CHECK(b->nodes.size() == 60);

    // lowest node id wins
    auto c = placement({9, 3}, 1, topo);
    REQUIRE(c);
    CHECK(c->nodes == std::vector<int>{3});

    CHECK_FALSE(placement({1, 2}, 3, topo).has_value());
}

TEST_CASE("cross-pod allocations are flagged in the outcome") {
    auto topo = build_topology(sched_topo_cfg(2, 50));
    auto outcome = simulate_schedule({trace_job("wide", 0, 60, 600)}, topo, fifo(), {}, 1);
    const JobOutcome* w = outcome.find("wide");
    REQUIRE(w);
    CHECK(w->cross_pod);
}

TEST_CASE("job requesting more nodes than the cluster fails at submit") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    auto outcome = simulate_schedule({trace_job("huge", 0, 8, 600)}, topo, fifo(), {}, 1);
    const JobOutcome* h = outcome.find("huge");
    REQUIRE(h);
    CHECK(h->final_state == JobState::FAILED);
    CHECK(h->start_ts == -1);
    CHECK(h->note.find("cluster has 4") != std::string::npos);
}

TEST_CASE("gpu fault on an idle node only drains it") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    FaultEvent f;
    f.time_s = 100;
    f.component = FaultComponent::gpu;
    f.target = "n3";
    f.recovery_duration_s = 600;
    // a job that needs all four nodes arrives while n3 is drained
    auto outcome = simulate_schedule({trace_job("a", 200, 4, 60)}, topo, fifo(), {f}, 1);
    const JobOutcome* a = outcome.find("a");
    REQUIRE(a);
    CHECK(a->start_ts == 700);  // waits for recovery at 100+600
    CHECK(a->final_state == JobState::COMPLETED);
}

TEST_CASE("gpu fault kills the running job and frees its other nodes") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    std::vector<JobRecord> trace = {
        trace_job("victim", 0, 3, 7200),
        trace_job("next", 10, 2, 300),
    };
    FaultEvent f;
    f.time_s = 1000;
    f.component = FaultComponent::gpu;
    f.target = "n1";
    f.recovery_duration_s = 3600;
    auto outcome = simulate_schedule(trace, topo, fifo(), {f}, 1);
    const JobOutcome* v = outcome.find("victim");
    const JobOutcome* n = outcome.find("next");
    REQUIRE(v);
    REQUIRE(n);
    CHECK(v->final_state == JobState::FAILED);
    CHECK(v->end_ts == 1000);
    CHECK(v->note.find("gpu fault") != std::string::npos);
    // victim held n0,n1,n2; n3 was free; n0 and n2 free at t=1000
    CHECK(n->start_ts == 1000);
    CHECK(outcome.oversubscriptions().empty());
}

TEST_CASE("fault-killed jobs can be labelled CANCELLED by policy") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    FaultEvent f;
    f.time_s = 100;
    f.component = FaultComponent::nvlink_pcie;
    f.target = "n0";
    f.recovery_duration_s = 60;
    SchedulerPolicy p = fifo();
    p.fault_kills_as_cancelled = true;
    auto outcome = simulate_schedule({trace_job("a", 0, 1, 600)}, topo, p, {f}, 1);
    CHECK(outcome.find("a")->final_state == JobState::CANCELLED);
}

TEST_CASE("leaf switch fault degrades the rail without killing jobs") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    FaultEvent f;
    f.time_s = 50;
    f.component = FaultComponent::leaf_spine_switch;
    f.target = "leaf0";
    f.recovery_duration_s = 300;
    auto outcome = simulate_schedule({trace_job("a", 0, 2, 600)}, topo, fifo(), {f}, 1);
    CHECK(outcome.find("a")->final_state == JobState::COMPLETED);
    bool logged = false;
    for (const auto& line : outcome.fault_log)
        if (line.find("leaf0") != std::string::npos &&
            line.find("cross-rail") != std::string::npos)
            logged = true;
    CHECK(logged);
}

TEST_CASE("unknown fault target is an error") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    FaultEvent f;
    f.time_s = 10;
    f.component = FaultComponent::gpu;
    f.target = "nowhere";
    CHECK_THROWS_AS(simulate_schedule({}, topo, fifo(), {f}, 1), DomainError);
}

TEST_CASE("backfill: small job slips ahead without delaying the head reservation") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    std::vector<JobRecord> trace = {
        trace_job("running", 0, 3, 1000),
        trace_job("head", 10, 4, 500),   // must wait for all four nodes at t=1000
        trace_job("filler", 20, 1, 900), // fits the free node and ends by 1000
    };
    auto outcome = simulate_schedule(trace, topo, fifo(), {}, 1);
    CHECK(outcome.find("filler")->start_ts == 20);
    CHECK(outcome.find("head")->start_ts == 1000);
    CHECK(outcome.oversubscriptions().empty());
}

TEST_CASE("backfill never starts a job that would push the head reservation") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    std::vector<JobRecord> trace = {
        trace_job("running", 0, 3, 1000),
        trace_job("head", 10, 4, 500),
        trace_job("toolong", 20, 1, 5000),  // would run past the shadow on the head's node
    };
    auto outcome = simulate_schedule(trace, topo, fifo(), {}, 1);
    CHECK(outcome.find("head")->start_ts == 1000);
    // the long filler cannot start before the head
    CHECK(outcome.find("toolong")->start_ts >= 1000);
}

TEST_CASE("checkpoint_preempt never preempts a job lacking checkpoints") {
    auto topo = build_topology(sched_topo_cfg(1, 8));
    std::vector<JobRecord> trace = {
        trace_job("big_nockpt", 0, 8, 7200),  // no checkpoint interval
        trace_job("short", 100, 1, 300),
    };
    auto outcome = simulate_schedule(trace, topo, preempt(), {}, 1);
    CHECK(outcome.find("big_nockpt")->preemptions == 0);
    CHECK(outcome.find("short")->start_ts == 7200);
}

TEST_CASE("max preemptions per job is honored") {
    auto topo = build_topology(sched_topo_cfg(1, 8));
    std::vector<JobRecord> trace;
    trace.push_back(trace_job("big", 0, 8, 10 * 3600, JobState::COMPLETED, 3600));
    // a stream of short jobs, one per hour
    for (int i = 0; i < 8; ++i)
        trace.push_back(trace_job("s" + std::to_string(i), 600 + i * 3600, 1, 300));
    SchedulerPolicy p = preempt(1, 0);
    p.max_preemptions_per_job = 2;
    auto outcome = simulate_schedule(trace, topo, p, {}, 1);
    CHECK(outcome.find("big")->preemptions <= 2);
    CHECK(outcome.oversubscriptions().empty());
}

TEST_CASE("no node is ever oversubscribed on random traces") {
    Rng rng(555);
    auto topo = build_topology(sched_topo_cfg(2, 8));
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<JobRecord> trace;
        int64_t t = 0;
        for (int i = 0; i < 40; ++i) {
            t += rng.uniform_int(0, 900);
            int nodes = static_cast<int>(rng.uniform_int(1, 16));
            std::optional<int64_t> ckpt;
            if (nodes > 2 && rng.uniform01() < 0.5) ckpt = 1800;
            trace.push_back(trace_job("j" + std::to_string(i), t, nodes,
                                      rng.uniform_int(60, 14400), JobState::COMPLETED, ckpt));
        }
        for (auto policy : {fifo(), preempt()}) {
            auto outcome = simulate_schedule(trace, topo, policy, {}, 1);
            CAPTURE(trial);
            CHECK(outcome.oversubscriptions().empty());
            // every job eventually ran
            for (const auto& j : outcome.jobs) CHECK(j.start_ts >= 0);
        }
    }
}

TEST_CASE("work conservation: the queue head never waits past a sufficient free set") {
    // reconstructed purely from the outcome: at every completion instant, if
    // the head of the pending queue fits the free nodes, it must start there
    Rng rng(4242);
    auto topo = build_topology(sched_topo_cfg(1, 8));
    int total_nodes = 8;
    for (int trial = 0; trial < 12; ++trial) {
        std::vector<JobRecord> trace;
        int64_t t = 0;
        for (int i = 0; i < 30; ++i) {
            t += rng.uniform_int(0, 600);
            trace.push_back(trace_job("j" + std::to_string(i), t,
                                      static_cast<int>(rng.uniform_int(1, 8)),
                                      rng.uniform_int(60, 7200)));
        }
        auto outcome = simulate_schedule(trace, topo, fifo(), {}, 1);

        auto busy_at = [&](int64_t when) {
            int busy = 0;
            for (const auto& per_node : outcome.node_busy)
                for (const auto& iv : per_node)
                    if (iv.from <= when && when < iv.to) busy++;
            return busy;
        };
        // event times: all starts and ends
        std::vector<int64_t> events;
        for (const auto& j : outcome.jobs) {
            events.push_back(j.start_ts);
            events.push_back(j.end_ts);
        }
        std::sort(events.begin(), events.end());
        for (int64_t when : events) {
            // pending jobs at `when`, FIFO order
            const JobOutcome* head = nullptr;
            for (const auto& j : outcome.jobs) {
                if (j.submit_ts > when || j.start_ts <= when) continue;  // not pending
                if (!head || j.submit_ts < head->submit_ts ||
                    (j.submit_ts == head->submit_ts && j.job_id < head->job_id))
                    head = &j;
            }
            if (!head) continue;
            int free = total_nodes - busy_at(when);
            CAPTURE(trial);
            CAPTURE(when);
            CAPTURE(head->job_id);
            // head fits now but was recorded as starting later: violation
            CHECK_FALSE(free >= head->requested_nodes);
        }
    }
}

TEST_CASE("directional property on a contended heavy-tailed trace") {
    auto topo = build_topology(sched_topo_cfg(2, 8));  // 16 nodes
    Rng rng(808);
    std::vector<JobRecord> trace;
    int64_t t = 0;
    int id = 0;
    // long checkpointed hogs plus a stream of short jobs
    for (int wave = 0; wave < 6; ++wave) {
        trace.push_back(trace_job("hog" + std::to_string(wave), t, 14,
                                  6 * 3600 + rng.uniform_int(0, 3600), JobState::CANCELLED,
                                  1800));
        for (int s = 0; s < 10; ++s) {
            t += rng.uniform_int(60, 1200);
            trace.push_back(
                trace_job("s" + std::to_string(id++), t, 1, rng.uniform_int(120, 900)));
        }
        t += 3600;
    }
    std::sort(trace.begin(), trace.end(), [](const JobRecord& a, const JobRecord& b) {
        if (a.submit_ts != b.submit_ts) return a.submit_ts < b.submit_ts;
        return a.job_id < b.job_id;
    });
    auto fifo_outcome = simulate_schedule(trace, topo, fifo(), {}, 1);
    SchedulerPolicy p = preempt(2, 300);
    auto preempt_outcome = simulate_schedule(trace, topo, p, {}, 1);

    double fifo_wait = fifo_outcome.mean_wait_s(2);
    double preempt_wait = preempt_outcome.mean_wait_s(2);
    CAPTURE(fifo_wait);
    CAPTURE(preempt_wait);
    CHECK(preempt_wait <= fifo_wait);

    // makespan growth of each preempted hog stays within the bound
    for (const auto& j : preempt_outcome.jobs) {
        if (j.preemptions == 0) continue;
        const JobOutcome* base = fifo_outcome.find(j.job_id);
        REQUIRE(base);
        int64_t growth = (j.end_ts - j.start_ts) - (base->end_ts - base->start_ts);
        CHECK(growth <= j.preemptions * (1800 + 300));
    }
    CHECK(preempt_outcome.oversubscriptions().empty());
}

TEST_CASE("unsorted traces are rejected") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    std::vector<JobRecord> trace = {trace_job("late", 100, 1, 60), trace_job("early", 0, 1, 60)};
    CHECK_THROWS_WITH_AS(simulate_schedule(trace, topo, fifo(), {}, 1),
                         doctest::Contains("sorted"), DomainError);
}

TEST_CASE("schedule outcome CSV has the documented columns") {
    auto topo = build_topology(sched_topo_cfg(1, 4));
    auto outcome = simulate_schedule({trace_job("a", 0, 1, 60)}, topo, fifo(), {}, 1);
    std::stringstream ss;
    write_schedule_csv(ss, outcome);
    std::string header;
    std::getline(ss, header);
    CHECK(header == "job_id,wait_s,start,end,preemptions");
    std::string row;
    std::getline(ss, row);
    CHECK(row == "a,0,0,60,0");
}
