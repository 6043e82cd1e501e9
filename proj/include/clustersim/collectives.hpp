#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "clustersim/fabric.hpp"
#include "clustersim/topology.hpp"

namespace clustersim {

// Flow-set planners for the collective traffic patterns exercised against the
// fabric: ring allreduce, all-to-all, and the 3D-parallel (DP/TP/PP + virtual
// pipeline) step traffic of LLM training.

enum class CollectiveKind { ring_allreduce, alltoall, parallel3d };

struct Participant {
    int node = 0;
    int gpu = 0;
};

struct CollectiveSpec {
    CollectiveKind kind = CollectiveKind::ring_allreduce;
    std::vector<Participant> participants;  // rank order
    uint64_t payload_bytes = 0;

    // parallel3d only; dp*tp*pp must equal the participant count.
    int dp = 1;
    int tp = 1;
    int pp = 1;
    int vp = 1;
    int microbatches = 1;
    uint64_t pp_message_bytes = 0;   // per microbatch per stage boundary, per direction
    uint64_t dp_allreduce_bytes = 0; // ring payload per DP replica group
    uint64_t tp_message_bytes = 0;   // intra-node reduce-scatter/all-gather payload
};

enum class FlowCategory { sendrecv_pp, reducescatter_tp, allreduce_dp, allgather_tp, generic };

const char* to_string(FlowCategory c);
FlowCategory flow_category_from_string(const std::string& s);

struct PlannedFlow {
    Participant src;
    Participant dst;
    uint64_t bytes = 0;
    FlowCategory category = FlowCategory::generic;
    int phase = 0;
    bool intra_node = false;  // NVLink traffic, never enters the fabric
};

struct FlowSet {
    std::vector<PlannedFlow> flows;

    uint64_t total_bytes() const;
    uint64_t fabric_bytes() const;
    uint64_t category_bytes(FlowCategory c, bool fabric_only) const;
    std::map<FlowCategory, uint64_t> fabric_bytes_by_category() const;
    // Share of fabric bytes carried by `c`; 0 when there is no fabric traffic.
    double fabric_share(FlowCategory c) const;
};

FlowSet ring_allreduce_plan(const CollectiveSpec& spec);
FlowSet alltoall_plan(const CollectiveSpec& spec);
// gpus_per_node bounds TP: tp > gpus_per_node is rejected (TP must stay on
// intra-node NVLink).
FlowSet parallel3d_plan(const CollectiveSpec& spec, int gpus_per_node);

// Fabric flows of the set as engine FlowSpecs, endpoints resolved through each
// GPU's NIC affinity. Intra-node flows are skipped.
std::vector<FlowSpec> to_fabric_flows(const FlowSet& set, const ClusterTopology& topo);

// CSV round-trip (src_node,src_nic,dst_node,dst_nic,bytes,category,phase).
// NIC columns carry the GPU's fabric NIC (equal to the GPU index); rows with
// src_node == dst_node are intra-node.
void write_flowset_csv(std::ostream& out, const FlowSet& set);
FlowSet read_flowset_csv(std::istream& in);

}  // namespace clustersim
