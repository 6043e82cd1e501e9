#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "clustersim/errors.hpp"

namespace clustersim {

// Rail-optimized leaf-spine cluster model. Each compute node exposes one
// fabric NIC per rail; rail r of every node in a pod wires to leaf r of that
// pod, and every leaf uplinks to every spine.

enum class NicRole { inter_node, storage, reserved, management };

const char* to_string(NicRole r);

struct TopologyConfig {
    int pods = 2;
    int leafs_per_pod = 8;
    int spines = 8;
    int nodes_per_pod = 50;
    int gpus_per_node = 8;
    int rails_per_node = 8;
    double host_link_gbps = 400.0;
    double isl_gbps = 800.0;
    int64_t link_latency_ns = 1000;

    // Throws DomainError describing the first violated constraint.
    void validate() const;
};

// Flat key=value config file, one entry per line, '#' comments.
TopologyConfig load_topology_config(const std::string& path);

struct NodeSpec {
    int node_id = 0;
    int pod = 0;
    int gpus = 0;
    std::vector<NicRole> nic_roles;
    // gpu index -> fabric NIC index (a bijection onto the inter_node NICs).
    std::vector<int> gpu_nic_affinity;
};

enum class SwitchRole { leaf, spine };

struct SwitchSpec {
    int switch_id = 0;  // leaves first, then spines
    SwitchRole role = SwitchRole::leaf;
    int pod = -1;       // -1 for spines
    int index_in_pod = 0;
};

// One endpoint of a link: either a node NIC or a switch.
struct LinkEnd {
    bool is_switch = false;
    int node = -1;
    int nic = -1;
    int sw = -1;

    static LinkEnd node_nic(int node, int nic) { return LinkEnd{false, node, nic, -1}; }
    static LinkEnd switch_end(int sw) { return LinkEnd{true, -1, -1, sw}; }
};

struct Link {
    int link_id = 0;
    LinkEnd a;
    LinkEnd b;
    double capacity_gbps = 0.0;
    int64_t latency_ns = 0;
};

struct Endpoint {
    int node = -1;
    int nic = -1;
    bool operator==(const Endpoint&) const = default;
};

enum class HopKind { intra_node, rail_local, cross_pod };

const char* to_string(HopKind k);

struct Path {
    std::vector<int> links;
    HopKind kind = HopKind::rail_local;
};

struct ClusterTopology {
    TopologyConfig cfg;
    std::vector<NodeSpec> nodes;
    std::vector<SwitchSpec> switches;
    std::vector<Link> links;
    // rail_map[node][rail] -> leaf switch id
    std::vector<std::vector<int>> rail_map;
    // host_link[node][rail] -> link id of the node's rail uplink
    std::vector<std::vector<int>> host_link;
    // leaf_spine_link[leaf][spine_index] -> link id
    std::vector<std::vector<int>> leaf_spine_link;

    int leaf_count() const { return cfg.pods * cfg.leafs_per_pod; }
    int spine_count() const { return cfg.spines; }
    int node_count() const { return static_cast<int>(nodes.size()); }
    int spine_switch_id(int spine_index) const { return leaf_count() + spine_index; }
    int pod_of_node(int node) const { return nodes[node].pod; }
};

ClusterTopology build_topology(const TopologyConfig& cfg);

// Deterministic route between two inter-node NICs. Same rail within a pod
// stays on the shared leaf; everything else transits exactly one spine chosen
// by a hash of (src node, dst node, src rail).
Path route(const ClusterTopology& topo, Endpoint src, Endpoint dst);

// Empty iff every structural invariant holds; each entry names the entity and
// the violated rule.
std::vector<std::string> validate(const ClusterTopology& topo);

// JSON dump (nodes, switches, links) for inspection.
std::string topology_to_json(const ClusterTopology& topo);

}  // namespace clustersim
