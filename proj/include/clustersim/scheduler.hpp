#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "clustersim/analytics.hpp"
#include "clustersim/topology.hpp"
#include "clustersim/workload.hpp"

namespace clustersim {

// Trace-driven scheduler simulation. Jobs replay with their recorded work
// duration (end - start in the trace); the simulator decides placement, waits,
// and preemptions. Backfill is EASY-style with oracle runtime estimates from
// the trace. The checkpoint_preempt policy suspends a checkpointed large job
// at its next checkpoint-completion instant to run pending short jobs, then
// resumes it from the checkpoint with zero progress loss.

enum class PolicyKind { fifo_backfill, checkpoint_preempt };

struct SchedulerPolicy {
    PolicyKind kind = PolicyKind::fifo_backfill;
    int short_job_node_cap = 2;        // preemption beneficiary threshold
    int max_preemptions_per_job = 8;
    int64_t resume_overhead_s = 300;
    bool fault_kills_as_cancelled = false;  // default FAILED
};

struct Allocation {
    std::vector<int> nodes;
    bool cross_pod = false;
};

// Pod-affine placement over an explicit free set: prefers a single pod, falls
// back to cross-pod, tie-breaks by node id. Empty result when request exceeds
// the free set.
std::optional<Allocation> placement(const std::vector<int>& free_nodes, int request,
                                    const ClusterTopology& topo);

struct JobOutcome {
    std::string job_id;
    int requested_nodes = 0;
    int64_t submit_ts = 0;
    int64_t start_ts = -1;
    int64_t end_ts = -1;
    int64_t wait_s = 0;
    int preemptions = 0;
    JobState final_state = JobState::COMPLETED;
    bool cross_pod = false;
    std::string note;
    std::vector<int> nodes;
};

struct BusyInterval {
    int64_t from = 0;
    int64_t to = 0;
    std::string job_id;
};

struct ScheduleOutcome {
    std::vector<JobOutcome> jobs;
    std::vector<std::vector<BusyInterval>> node_busy;  // per node id
    std::vector<std::string> fault_log;
    int64_t horizon_end = 0;

    const JobOutcome* find(const std::string& job_id) const;
    double mean_wait_s(int max_nodes) const;  // over jobs with <= max_nodes
    // empty iff no node serves two jobs at once
    std::vector<std::string> oversubscriptions() const;
};

ScheduleOutcome simulate_schedule(const std::vector<JobRecord>& trace,
                                  const ClusterTopology& topo, const SchedulerPolicy& policy,
                                  const std::vector<FaultEvent>& faults, uint64_t seed);

void write_schedule_csv(std::ostream& out, const ScheduleOutcome& outcome);
std::string schedule_summary_json(const ScheduleOutcome& outcome);

}  // namespace clustersim
