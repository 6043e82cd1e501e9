#include "clustersim/topology.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <queue>
#include <sstream>

#include "clustersim/csv.hpp"
#include "clustersim/rng.hpp"
#include "json.hpp"

namespace clustersim {

const char* to_string(NicRole r) {
    switch (r) {
        case NicRole::inter_node: return "inter_node";
        case NicRole::storage: return "storage";
        case NicRole::reserved: return "reserved";
        case NicRole::management: return "management";
    }
    return "?";
}

const char* to_string(HopKind k) {
    switch (k) {
        case HopKind::intra_node: return "intra_node";
        case HopKind::rail_local: return "rail_local";
        case HopKind::cross_pod: return "cross_pod";
    }
    return "?";
}

void TopologyConfig::validate() const {
    if (pods < 1 || leafs_per_pod < 1 || spines < 1 || nodes_per_pod < 1 ||
        gpus_per_node < 1 || rails_per_node < 1)
        throw DomainError("topology config: all counts must be >= 1");
    if (host_link_gbps <= 0 || isl_gbps <= 0)
        throw DomainError("topology config: link rates must be > 0");
    if (link_latency_ns < 0)
        throw DomainError("topology config: link latency must be >= 0");
    if (rails_per_node != leafs_per_pod)
        throw DomainError("topology config: rails_per_node (" +
                          std::to_string(rails_per_node) + ") != leafs_per_pod (" +
                          std::to_string(leafs_per_pod) +
                          "): each rail must map to one leaf");
    if (gpus_per_node != rails_per_node)
        throw DomainError("topology config: gpus_per_node (" +
                          std::to_string(gpus_per_node) + ") != rails_per_node (" +
                          std::to_string(rails_per_node) +
                          "): GPU/NIC affinity must be a bijection");
}

TopologyConfig load_topology_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open topology config: " + path);
    TopologyConfig cfg;
    std::map<std::string, std::string> kv;
    std::string line;
    size_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            // blank or comment-only
            bool blank = line.find_first_not_of(" \t\r") == std::string::npos;
            if (!blank)
                throw ParseError(path + ": line " + std::to_string(lineno) +
                                 ": expected key = value");
            continue;
        }
        auto strip = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        kv[strip(line.substr(0, eq))] = strip(line.substr(eq + 1));
    }
    auto get_int = [&](const char* key, int def) {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        return static_cast<int>(parse_int(it->second, key, 0));
    };
    auto get_double = [&](const char* key, double def) {
        auto it = kv.find(key);
        if (it == kv.end()) return def;
        return parse_double(it->second, key, 0);
    };
    cfg.pods = get_int("pods", cfg.pods);
    cfg.leafs_per_pod = get_int("leafs_per_pod", cfg.leafs_per_pod);
    cfg.spines = get_int("spines", cfg.spines);
    cfg.nodes_per_pod = get_int("nodes_per_pod", cfg.nodes_per_pod);
    cfg.gpus_per_node = get_int("gpus_per_node", cfg.gpus_per_node);
    cfg.rails_per_node = get_int("rails_per_node", cfg.rails_per_node);
    cfg.host_link_gbps = get_double("host_link_gbps", cfg.host_link_gbps);
    cfg.isl_gbps = get_double("isl_gbps", cfg.isl_gbps);
    cfg.link_latency_ns =
        static_cast<int64_t>(get_double("link_latency_ns", static_cast<double>(cfg.link_latency_ns)));
    return cfg;
}

ClusterTopology build_topology(const TopologyConfig& cfg) {
    cfg.validate();
    ClusterTopology topo;
    topo.cfg = cfg;

    int leafs = cfg.pods * cfg.leafs_per_pod;
    for (int p = 0; p < cfg.pods; ++p) {
        for (int l = 0; l < cfg.leafs_per_pod; ++l) {
            SwitchSpec s;
            s.switch_id = p * cfg.leafs_per_pod + l;
            s.role = SwitchRole::leaf;
            s.pod = p;
            s.index_in_pod = l;
            topo.switches.push_back(s);
        }
    }
    for (int sp = 0; sp < cfg.spines; ++sp) {
        SwitchSpec s;
        s.switch_id = leafs + sp;
        s.role = SwitchRole::spine;
        s.pod = -1;
        s.index_in_pod = sp;
        topo.switches.push_back(s);
    }

    int node_count = cfg.pods * cfg.nodes_per_pod;
    topo.rail_map.assign(node_count, {});
    topo.host_link.assign(node_count, {});
    for (int p = 0; p < cfg.pods; ++p) {
        for (int n = 0; n < cfg.nodes_per_pod; ++n) {
            NodeSpec node;
            node.node_id = p * cfg.nodes_per_pod + n;
            node.pod = p;
            node.gpus = cfg.gpus_per_node;
            // Fabric NICs 0..rails-1, then one reserved, two storage, one
            // management port (present for fidelity, never carry traffic).
            for (int r = 0; r < cfg.rails_per_node; ++r)
                node.nic_roles.push_back(NicRole::inter_node);
            node.nic_roles.push_back(NicRole::reserved);
            node.nic_roles.push_back(NicRole::storage);
            node.nic_roles.push_back(NicRole::storage);
            node.nic_roles.push_back(NicRole::management);
            for (int g = 0; g < cfg.gpus_per_node; ++g)
                node.gpu_nic_affinity.push_back(g);
            topo.rail_map[node.node_id].assign(cfg.rails_per_node, -1);
            topo.host_link[node.node_id].assign(cfg.rails_per_node, -1);
            topo.nodes.push_back(std::move(node));
        }
    }

    // Leaf-spine mesh.
    topo.leaf_spine_link.assign(leafs, std::vector<int>(cfg.spines, -1));
    for (int l = 0; l < leafs; ++l) {
        for (int sp = 0; sp < cfg.spines; ++sp) {
            Link link;
            link.link_id = static_cast<int>(topo.links.size());
            link.a = LinkEnd::switch_end(l);
            link.b = LinkEnd::switch_end(leafs + sp);
            link.capacity_gbps = cfg.isl_gbps;
            link.latency_ns = cfg.link_latency_ns;
            topo.leaf_spine_link[l][sp] = link.link_id;
            topo.links.push_back(link);
        }
    }

    // Host rails.
    for (const auto& node : topo.nodes) {
        for (int r = 0; r < cfg.rails_per_node; ++r) {
            int leaf = node.pod * cfg.leafs_per_pod + r;
            Link link;
            link.link_id = static_cast<int>(topo.links.size());
            link.a = LinkEnd::node_nic(node.node_id, r);
            link.b = LinkEnd::switch_end(leaf);
            link.capacity_gbps = cfg.host_link_gbps;
            link.latency_ns = cfg.link_latency_ns;
            topo.rail_map[node.node_id][r] = leaf;
            topo.host_link[node.node_id][r] = link.link_id;
            topo.links.push_back(link);
        }
    }
    return topo;
}

static void check_fabric_endpoint(const ClusterTopology& topo, Endpoint e, const char* which) {
    if (e.node < 0 || e.node >= topo.node_count())
        throw DomainError(std::string(which) + " endpoint: unknown node " + std::to_string(e.node));
    const auto& roles = topo.nodes[e.node].nic_roles;
    if (e.nic < 0 || e.nic >= static_cast<int>(roles.size()))
        throw DomainError(std::string(which) + " endpoint: node " + std::to_string(e.node) +
                          " has no NIC " + std::to_string(e.nic));
    if (roles[e.nic] != NicRole::inter_node)
        throw DomainError(std::string(which) + " endpoint: node " + std::to_string(e.node) +
                          " NIC " + std::to_string(e.nic) + " has role " +
                          to_string(roles[e.nic]) + ", not inter_node");
}

Path route(const ClusterTopology& topo, Endpoint src, Endpoint dst) {
    check_fabric_endpoint(topo, src, "src");
    check_fabric_endpoint(topo, dst, "dst");
    if (src.node == dst.node)
        throw DomainError("intra-node: node " + std::to_string(src.node) +
                          " to itself travels NVLink, not the fabric");

    Path path;
    int src_leaf = topo.rail_map[src.node][src.nic];
    int dst_leaf = topo.rail_map[dst.node][dst.nic];
    if (src_leaf == dst_leaf) {
        path.kind = HopKind::rail_local;
        path.links.push_back(topo.host_link[src.node][src.nic]);
        path.links.push_back(topo.host_link[dst.node][dst.nic]);
        return path;
    }
    // ECMP analog: deterministic spine pick keyed on the flow identity.
    uint64_t h = mix64(mix64(static_cast<uint64_t>(src.node),
                             static_cast<uint64_t>(dst.node)),
                       static_cast<uint64_t>(src.nic));
    int spine = static_cast<int>(h % static_cast<uint64_t>(topo.cfg.spines));
    path.kind = HopKind::cross_pod;
    path.links.push_back(topo.host_link[src.node][src.nic]);
    path.links.push_back(topo.leaf_spine_link[src_leaf][spine]);
    path.links.push_back(topo.leaf_spine_link[dst_leaf][spine]);
    path.links.push_back(topo.host_link[dst.node][dst.nic]);
    return path;
}

std::vector<std::string> validate(const ClusterTopology& topo) {
    std::vector<std::string> out;
    const auto& cfg = topo.cfg;
    int leafs = cfg.pods * cfg.leafs_per_pod;

    // Index links by endpoints.
    std::map<std::pair<int, int>, int> leaf_spine;        // (leaf, spine id) -> count
    std::map<std::pair<int, int>, std::vector<int>> host; // (node, nic) -> leaf ids
    for (const auto& link : topo.links) {
        if (link.a.is_switch && link.b.is_switch) {
            leaf_spine[{link.a.sw, link.b.sw}]++;
        } else if (!link.a.is_switch && link.b.is_switch) {
            host[{link.a.node, link.a.nic}].push_back(link.b.sw);
        } else {
            out.push_back("link " + std::to_string(link.link_id) + ": unsupported endpoint pairing");
        }
    }

    for (const auto& node : topo.nodes) {
        int fabric_nics = 0;
        for (auto r : node.nic_roles)
            if (r == NicRole::inter_node) ++fabric_nics;
        if (fabric_nics != cfg.rails_per_node)
            out.push_back("node n" + std::to_string(node.node_id) + ": has " +
                          std::to_string(fabric_nics) + " inter_node NICs, expected " +
                          std::to_string(cfg.rails_per_node));
        // Affinity bijection.
        std::vector<int> seen(node.nic_roles.size(), 0);
        bool affinity_ok = static_cast<int>(node.gpu_nic_affinity.size()) == node.gpus;
        for (int nic : node.gpu_nic_affinity) {
            if (nic < 0 || nic >= static_cast<int>(node.nic_roles.size()) ||
                node.nic_roles[nic] != NicRole::inter_node || seen[nic]++) {
                affinity_ok = false;
            }
        }
        if (!affinity_ok || node.gpus != cfg.rails_per_node)
            out.push_back("node n" + std::to_string(node.node_id) +
                          ": gpu/NIC affinity is not a bijection onto inter_node NICs");
        // Rails wired to distinct in-pod leaves.
        std::vector<int> rail_leafs;
        for (int r = 0; r < cfg.rails_per_node; ++r) {
            auto it = host.find({node.node_id, r});
            if (it == host.end() || it->second.empty()) {
                out.push_back("node n" + std::to_string(node.node_id) + " rail " +
                              std::to_string(r) + " unwired");
                continue;
            }
            for (int leaf : it->second) {
                if (leaf >= leafs || topo.switches[leaf].pod != node.pod)
                    out.push_back("node n" + std::to_string(node.node_id) + " rail " +
                                  std::to_string(r) + ": wired to a leaf outside pod " +
                                  std::to_string(node.pod));
                rail_leafs.push_back(leaf);
            }
        }
        std::sort(rail_leafs.begin(), rail_leafs.end());
        if (std::adjacent_find(rail_leafs.begin(), rail_leafs.end()) != rail_leafs.end())
            out.push_back("node n" + std::to_string(node.node_id) +
                          ": two rails share a leaf switch");
    }

    for (int l = 0; l < leafs; ++l) {
        for (int sp = 0; sp < cfg.spines; ++sp) {
            if (leaf_spine.find({l, leafs + sp}) == leaf_spine.end())
                out.push_back("leaf " + std::to_string(l) + ": missing uplink to spine " +
                              std::to_string(leafs + sp));
        }
    }

    // Connectivity over the undirected link graph (nodes+switches as vertices).
    int vertex_count = topo.node_count() + static_cast<int>(topo.switches.size());
    auto vertex = [&](const LinkEnd& e) {
        return e.is_switch ? topo.node_count() + e.sw : e.node;
    };
    std::vector<std::vector<int>> adj(vertex_count);
    for (const auto& link : topo.links) {
        int va = vertex(link.a), vb = vertex(link.b);
        adj[va].push_back(vb);
        adj[vb].push_back(va);
    }
    std::vector<char> seen(vertex_count, 0);
    std::queue<int> bfs;
    bfs.push(0);
    seen[0] = 1;
    int reached = 1;
    while (!bfs.empty()) {
        int v = bfs.front();
        bfs.pop();
        for (int w : adj[v])
            if (!seen[w]) {
                seen[w] = 1;
                ++reached;
                bfs.push(w);
            }
    }
    if (reached != vertex_count)
        out.push_back("link graph is disconnected: reached " + std::to_string(reached) +
                      " of " + std::to_string(vertex_count) + " entities");
    return out;
}

std::string topology_to_json(const ClusterTopology& topo) {
    nlohmann::json j;
    j["config"] = {{"pods", topo.cfg.pods},
                   {"leafs_per_pod", topo.cfg.leafs_per_pod},
                   {"spines", topo.cfg.spines},
                   {"nodes_per_pod", topo.cfg.nodes_per_pod},
                   {"gpus_per_node", topo.cfg.gpus_per_node},
                   {"rails_per_node", topo.cfg.rails_per_node},
                   {"host_link_gbps", topo.cfg.host_link_gbps},
                   {"isl_gbps", topo.cfg.isl_gbps},
                   {"link_latency_ns", topo.cfg.link_latency_ns}};
    auto& nodes = j["nodes"] = nlohmann::json::array();
    for (const auto& n : topo.nodes) {
        nlohmann::json nj;
        nj["id"] = n.node_id;
        nj["pod"] = n.pod;
        nj["gpus"] = n.gpus;
        auto& nics = nj["nics"] = nlohmann::json::array();
        for (size_t i = 0; i < n.nic_roles.size(); ++i) {
            nlohmann::json nicj;
            nicj["index"] = i;
            nicj["role"] = to_string(n.nic_roles[i]);
            if (n.nic_roles[i] == NicRole::inter_node)
                nicj["leaf"] = topo.rail_map[n.node_id][i];
            nics.push_back(nicj);
        }
        nodes.push_back(nj);
    }
    auto& switches = j["switches"] = nlohmann::json::array();
    for (const auto& s : topo.switches) {
        switches.push_back({{"id", s.switch_id},
                            {"role", s.role == SwitchRole::leaf ? "leaf" : "spine"},
                            {"pod", s.pod},
                            {"index_in_pod", s.index_in_pod}});
    }
    auto& links = j["links"] = nlohmann::json::array();
    auto end_json = [](const LinkEnd& e) {
        nlohmann::json ej;
        if (e.is_switch) {
            ej["switch"] = e.sw;
        } else {
            ej["node"] = e.node;
            ej["nic"] = e.nic;
        }
        return ej;
    };
    for (const auto& l : topo.links) {
        links.push_back({{"id", l.link_id},
                         {"a", end_json(l.a)},
                         {"b", end_json(l.b)},
                         {"capacity_gbps", l.capacity_gbps},
                         {"latency_ns", l.latency_ns}});
    }
    return j.dump(2);
}

}  // namespace clustersim
