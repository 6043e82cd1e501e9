#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clustersim/dcqcn.hpp"
#include "clustersim/topology.hpp"

namespace clustersim {

// Discrete-event port-queue simulation over a built topology: store-and-forward
// segment forwarding, RED-style ECN marking at switch egress queues, per-ingress
// PFC pause/resume with headroom accounting, and a dynamic shared-buffer
// threshold per switch. One engine instance is single-threaded and fully
// deterministic for a given (topology, flows, config, seed).

struct EcnConfig {
    uint64_t min_bytes = 2ull * 1000 * 1000;
    uint64_t max_bytes = 10ull * 1000 * 1000;
    double p_max = 0.01;

    void validate() const;
};

struct PfcConfig {
    int priority = 3;
    uint64_t xoff_bytes = 36570285;
    uint64_t xon_offset_bytes = 18432;
    uint64_t headroom_bytes = 36ull * 1000 * 1000;

    void validate() const;
};

struct SharedBufferConfig {
    uint64_t total_bytes = 128ull * 1024 * 1024;
    double alpha = 1.0;
    double max_share = 0.66;

    void validate() const;
};

struct PortQueueState {
    uint64_t occupancy_bytes = 0;
    bool paused = false;
    uint64_t headroom_used_bytes = 0;
    uint64_t drop_count = 0;
    uint64_t mark_count = 0;
    uint64_t enqueue_count = 0;
};

// 0 below min, linear ramp to p_max on [min, max], 1.0 above max.
double ecn_mark_probability(uint64_t occupancy_bytes, const EcnConfig& cfg);

enum class PauseAction { none, send_pause, send_resume };

// Hysteresis: pause when occupancy reaches xoff and not yet paused; resume when
// paused and occupancy has fallen to xoff - xon_offset.
PauseAction pfc_transition(const PortQueueState& state, const PfcConfig& cfg);

// min(alpha * (total - occupied), max_share * total), never negative.
uint64_t dynamic_threshold(const SharedBufferConfig& cfg, uint64_t total_occupied_bytes);

struct FlowSpec {
    int flow_id = 0;
    Endpoint src;
    Endpoint dst;
    uint64_t bytes = 0;
    int phase = 0;            // phase k+1 starts when all phase-k flows complete
    int64_t start_ns = 0;     // offset for phase-0 flows
    std::string category = "generic";
};

struct FabricConfig {
    EcnConfig ecn;
    bool ecn_enabled = true;
    PfcConfig pfc;
    bool pfc_enabled = true;
    SharedBufferConfig shared;
    DcqcnParams dcqcn;
    uint32_t segment_bytes = 4096;          // flow granularity (MTU multiple)
    int64_t sample_interval_ns = 100000;    // time-series cadence
    int64_t mark_window_ns = 500000;        // tumbling windows for mark-rate stats
    int64_t warmup_ns = 0;                  // excluded from sustained statistics

    void validate() const;
};

struct PortSample {
    int port_id;
    int64_t t_ns;
    uint64_t occupancy_bytes;
    uint64_t marks;
    uint64_t pauses;
    uint64_t drops;
};

struct FlowSample {
    int flow_id;
    int64_t t_ns;
    double rc_gbps;
    double alpha;
};

struct MarkWindow {
    int64_t start_ns;
    uint64_t enqueued;
    uint64_t marked;
};

struct PortSummary {
    int port_id = 0;
    std::string label;
    PortQueueState state;         // final counters
    uint64_t bytes_in = 0;
    uint64_t bytes_out = 0;
    uint64_t pause_events = 0;
    uint64_t resume_events = 0;
    std::vector<MarkWindow> mark_windows;

    bool operator==(const PortSummary&) const = default;
};

inline bool operator==(const PortQueueState& a, const PortQueueState& b) {
    return a.occupancy_bytes == b.occupancy_bytes && a.paused == b.paused &&
           a.headroom_used_bytes == b.headroom_used_bytes && a.drop_count == b.drop_count &&
           a.mark_count == b.mark_count && a.enqueue_count == b.enqueue_count;
}

struct FlowSummary {
    int flow_id = 0;
    std::string category;
    uint64_t bytes_requested = 0;
    uint64_t delivered_bytes = 0;
    int64_t start_ns = -1;
    int64_t completion_ns = -1;   // -1 while unfinished at horizon
    uint64_t cnp_count = 0;
    double mean_rate_gbps = 0.0;      // delivered over active time
    double window_gbps = 0.0;         // delivered rate after warmup

    bool operator==(const FlowSummary&) const = default;
};

struct SimReport {
    int64_t horizon_ns = 0;
    int64_t end_ns = 0;
    uint64_t events_processed = 0;
    uint64_t total_drops = 0;
    std::vector<PortSummary> ports;        // only ports that carried traffic
    std::vector<FlowSummary> flows;
    std::vector<PortSample> port_series;
    std::vector<FlowSample> flow_series;

    bool operator==(const SimReport&) const;

    // Max mark fraction over tumbling windows that start at/after `after_ns`
    // and contain at least `min_segments` enqueues; -1 when no window
    // qualifies.
    double sustained_mark_fraction(int port_id, int64_t after_ns,
                                   uint64_t min_segments) const;
    const PortSummary* find_port(int port_id) const;
    const FlowSummary* find_flow(int flow_id) const;
};

inline bool operator==(const PortSample& a, const PortSample& b) {
    return a.port_id == b.port_id && a.t_ns == b.t_ns &&
           a.occupancy_bytes == b.occupancy_bytes && a.marks == b.marks &&
           a.pauses == b.pauses && a.drops == b.drops;
}
inline bool operator==(const FlowSample& a, const FlowSample& b) {
    return a.flow_id == b.flow_id && a.t_ns == b.t_ns && a.rc_gbps == b.rc_gbps &&
           a.alpha == b.alpha;
}
inline bool operator==(const MarkWindow& a, const MarkWindow& b) {
    return a.start_ns == b.start_ns && a.enqueued == b.enqueued && a.marked == b.marked;
}

// Directed ports: link L yields port 2L (endpoint a transmits) and 2L+1.
inline int port_of_link(int link_id, bool from_a) { return link_id * 2 + (from_a ? 0 : 1); }

// Egress port id of the queue feeding `dst` on the final hop of a path, i.e.
// the port whose congestion an incast onto dst builds up.
int final_hop_port(const ClusterTopology& topo, Endpoint dst);

SimReport run_fabric(const ClusterTopology& topo, const std::vector<FlowSpec>& flows,
                     const FabricConfig& cfg, uint64_t seed, int64_t horizon_ns);

}  // namespace clustersim
