#include "clustersim/collectives.hpp"

#include <ostream>

#include "clustersim/csv.hpp"

namespace clustersim {

const char* to_string(FlowCategory c) {
    switch (c) {
        case FlowCategory::sendrecv_pp: return "sendrecv_pp";
        case FlowCategory::reducescatter_tp: return "reducescatter_tp";
        case FlowCategory::allreduce_dp: return "allreduce_dp";
        case FlowCategory::allgather_tp: return "allgather_tp";
        case FlowCategory::generic: return "generic";
    }
    return "?";
}

FlowCategory flow_category_from_string(const std::string& s) {
    if (s == "sendrecv_pp") return FlowCategory::sendrecv_pp;
    if (s == "reducescatter_tp") return FlowCategory::reducescatter_tp;
    if (s == "allreduce_dp") return FlowCategory::allreduce_dp;
    if (s == "allgather_tp") return FlowCategory::allgather_tp;
    if (s == "generic") return FlowCategory::generic;
    throw ParseError("unknown flow category: " + s);
}

uint64_t FlowSet::total_bytes() const {
    uint64_t sum = 0;
    for (const auto& f : flows) sum += f.bytes;
    return sum;
}

uint64_t FlowSet::fabric_bytes() const {
    uint64_t sum = 0;
    for (const auto& f : flows)
        if (!f.intra_node) sum += f.bytes;
    return sum;
}

uint64_t FlowSet::category_bytes(FlowCategory c, bool fabric_only) const {
    uint64_t sum = 0;
    for (const auto& f : flows)
        if (f.category == c && (!fabric_only || !f.intra_node)) sum += f.bytes;
    return sum;
}

std::map<FlowCategory, uint64_t> FlowSet::fabric_bytes_by_category() const {
    std::map<FlowCategory, uint64_t> out;
    for (const auto& f : flows)
        if (!f.intra_node) out[f.category] += f.bytes;
    return out;
}

double FlowSet::fabric_share(FlowCategory c) const {
    uint64_t total = fabric_bytes();
    if (total == 0) return 0.0;
    return static_cast<double>(category_bytes(c, true)) / static_cast<double>(total);
}

// chunk c of a payload split into n near-equal parts
static uint64_t chunk_size(uint64_t payload, size_t n, size_t c) {
    return payload / n + (c < payload % n ? 1 : 0);
}

// Ring allreduce over `members`: N-1 reduce-scatter phases then N-1 allgather
// phases, each rank forwarding one chunk to its successor per phase. Phase
// numbers are offset by `phase_base`.
static void emit_ring(FlowSet& set, const std::vector<Participant>& members,
                      uint64_t payload, FlowCategory category, int phase_base) {
    size_t n = members.size();
    if (n <= 1 || payload == 0) return;
    for (size_t p = 0; p < n - 1; ++p) {
        for (size_t r = 0; r < n; ++r) {
            size_t next = (r + 1) % n;
            // reduce-scatter: rank r forwards chunk (r - p) mod n
            size_t chunk = (r + n - (p % n)) % n;
            PlannedFlow f;
            f.src = members[r];
            f.dst = members[next];
            f.bytes = chunk_size(payload, n, chunk);
            f.category = category;
            f.phase = phase_base + static_cast<int>(p);
            f.intra_node = f.src.node == f.dst.node;
            if (f.bytes > 0) set.flows.push_back(f);
        }
    }
    for (size_t p = 0; p < n - 1; ++p) {
        for (size_t r = 0; r < n; ++r) {
            size_t next = (r + 1) % n;
            // allgather: rank r forwards chunk (r + 1 - p) mod n
            size_t chunk = (r + 1 + n - (p % n)) % n;
            PlannedFlow f;
            f.src = members[r];
            f.dst = members[next];
            f.bytes = chunk_size(payload, n, chunk);
            f.category = category;
            f.phase = phase_base + static_cast<int>(n - 1 + p);
            f.intra_node = f.src.node == f.dst.node;
            if (f.bytes > 0) set.flows.push_back(f);
        }
    }
}

FlowSet ring_allreduce_plan(const CollectiveSpec& spec) {
    if (spec.participants.empty())
        throw DomainError("ring_allreduce: participants must be nonempty");
    FlowSet set;
    emit_ring(set, spec.participants, spec.payload_bytes, FlowCategory::generic, 0);
    return set;
}

FlowSet alltoall_plan(const CollectiveSpec& spec) {
    if (spec.participants.empty())
        throw DomainError("alltoall: participants must be nonempty");
    FlowSet set;
    size_t n = spec.participants.size();
    if (n <= 1) return set;
    for (size_t r = 0; r < n; ++r) {
        for (size_t d = 0; d < n; ++d) {
            if (d == r) continue;
            PlannedFlow f;
            f.src = spec.participants[r];
            f.dst = spec.participants[d];
            f.bytes = chunk_size(spec.payload_bytes, n, d);
            f.category = FlowCategory::generic;
            f.phase = 0;
            f.intra_node = f.src.node == f.dst.node;
            if (f.bytes > 0) set.flows.push_back(f);
        }
    }
    return set;
}

FlowSet parallel3d_plan(const CollectiveSpec& spec, int gpus_per_node) {
    size_t n = spec.participants.size();
    if (n == 0) throw DomainError("parallel3d: participants must be nonempty");
    if (spec.dp < 1 || spec.tp < 1 || spec.pp < 1 || spec.vp < 1 || spec.microbatches < 1)
        throw DomainError("parallel3d: dp/tp/pp/vp/microbatches must be >= 1");
    if (static_cast<size_t>(spec.dp) * spec.tp * spec.pp != n)
        throw DomainError("parallel3d: dp*tp*pp (" +
                          std::to_string(spec.dp * spec.tp * spec.pp) +
                          ") != participant count (" + std::to_string(n) + ")");
    if (spec.tp > gpus_per_node)
        throw DomainError("parallel3d: TP spills across nodes (tp=" + std::to_string(spec.tp) +
                          " > gpus_per_node=" + std::to_string(gpus_per_node) + ")");

    // rank layout: tp innermost, then dp, pp outermost
    auto rank_of = [&](int s, int d, int t) {
        return static_cast<size_t>((s * spec.dp + d) * spec.tp + t);
    };

    // TP groups must be co-located so tensor collectives stay on NVLink.
    for (int s = 0; s < spec.pp; ++s)
        for (int d = 0; d < spec.dp; ++d) {
            int node0 = spec.participants[rank_of(s, d, 0)].node;
            for (int t = 1; t < spec.tp; ++t)
                if (spec.participants[rank_of(s, d, t)].node != node0)
                    throw DomainError("parallel3d: TP spills across nodes (group pp=" +
                                      std::to_string(s) + " dp=" + std::to_string(d) + ")");
        }

    FlowSet set;

    // Pipeline point-to-point: per stage boundary, per (dp, tp) column, each
    // direction carries microbatches * pp_message_bytes split over vp
    // interleaved messages.
    uint64_t pp_total =
        static_cast<uint64_t>(spec.microbatches) * spec.pp_message_bytes;
    for (int s = 0; s + 1 < spec.pp; ++s) {
        for (int d = 0; d < spec.dp; ++d) {
            for (int t = 0; t < spec.tp; ++t) {
                Participant lo = spec.participants[rank_of(s, d, t)];
                Participant hi = spec.participants[rank_of(s + 1, d, t)];
                for (int dir = 0; dir < 2; ++dir) {
                    for (int v = 0; v < spec.vp; ++v) {
                        PlannedFlow f;
                        f.src = dir == 0 ? lo : hi;
                        f.dst = dir == 0 ? hi : lo;
                        f.bytes = chunk_size(pp_total, static_cast<size_t>(spec.vp),
                                             static_cast<size_t>(v));
                        f.category = FlowCategory::sendrecv_pp;
                        f.phase = 0;
                        f.intra_node = f.src.node == f.dst.node;
                        if (f.bytes > 0) set.flows.push_back(f);
                    }
                }
            }
        }
    }

    // Tensor-parallel collectives: intra-node ring traffic per TP group.
    if (spec.tp > 1 && spec.tp_message_bytes > 0) {
        for (int s = 0; s < spec.pp; ++s) {
            for (int d = 0; d < spec.dp; ++d) {
                for (int t = 0; t < spec.tp; ++t) {
                    Participant src = spec.participants[rank_of(s, d, t)];
                    Participant dst = spec.participants[rank_of(s, d, (t + 1) % spec.tp)];
                    uint64_t per_member =
                        spec.tp_message_bytes * static_cast<uint64_t>(spec.tp - 1) /
                        static_cast<uint64_t>(spec.tp);
                    for (auto cat : {FlowCategory::reducescatter_tp, FlowCategory::allgather_tp}) {
                        PlannedFlow f;
                        f.src = src;
                        f.dst = dst;
                        f.bytes = per_member;
                        f.category = cat;
                        f.phase = 0;
                        f.intra_node = true;
                        if (f.bytes > 0) set.flows.push_back(f);
                    }
                }
            }
        }
    }

    // Data-parallel gradient allreduce: one ring per (pp, tp) cell, barriered
    // after the step's pipeline traffic.
    if (spec.dp > 1 && spec.dp_allreduce_bytes > 0) {
        for (int s = 0; s < spec.pp; ++s) {
            for (int t = 0; t < spec.tp; ++t) {
                std::vector<Participant> group;
                for (int d = 0; d < spec.dp; ++d)
                    group.push_back(spec.participants[rank_of(s, d, t)]);
                emit_ring(set, group, spec.dp_allreduce_bytes, FlowCategory::allreduce_dp,
                          /*phase_base=*/1);
            }
        }
    }
    return set;
}

std::vector<FlowSpec> to_fabric_flows(const FlowSet& set, const ClusterTopology& topo) {
    std::vector<FlowSpec> out;
    int id = 0;
    for (const auto& pf : set.flows) {
        if (pf.intra_node) continue;
        auto nic_of = [&](const Participant& p) {
            if (p.node < 0 || p.node >= topo.node_count())
                throw DomainError("flow references unknown node " + std::to_string(p.node));
            const auto& affinity = topo.nodes[p.node].gpu_nic_affinity;
            if (p.gpu < 0 || p.gpu >= static_cast<int>(affinity.size()))
                throw DomainError("node " + std::to_string(p.node) + " has no GPU " +
                                  std::to_string(p.gpu));
            return affinity[p.gpu];
        };
        FlowSpec spec;
        spec.flow_id = id++;
        spec.src = Endpoint{pf.src.node, nic_of(pf.src)};
        spec.dst = Endpoint{pf.dst.node, nic_of(pf.dst)};
        spec.bytes = pf.bytes;
        spec.phase = pf.phase;
        spec.category = to_string(pf.category);
        out.push_back(std::move(spec));
    }
    return out;
}

void write_flowset_csv(std::ostream& out, const FlowSet& set) {
    out << "src_node,src_nic,dst_node,dst_nic,bytes,category,phase\n";
    for (const auto& f : set.flows) {
        write_csv_row(out, {std::to_string(f.src.node), std::to_string(f.src.gpu),
                            std::to_string(f.dst.node), std::to_string(f.dst.gpu),
                            std::to_string(f.bytes), to_string(f.category),
                            std::to_string(f.phase)});
    }
}

FlowSet read_flowset_csv(std::istream& in) {
    CsvTable t = read_csv(in);
    size_t c_sn = t.require_column("src_node");
    size_t c_sx = t.require_column("src_nic");
    size_t c_dn = t.require_column("dst_node");
    size_t c_dx = t.require_column("dst_nic");
    size_t c_b = t.require_column("bytes");
    size_t c_cat = t.require_column("category");
    size_t c_ph = t.require_column("phase");
    FlowSet set;
    for (size_t i = 0; i < t.rows.size(); ++i) {
        const auto& row = t.rows[i];
        size_t line = t.line_numbers[i];
        if (row.size() < t.header.size())
            throw ParseError("flow set: row too short (line " + std::to_string(line) + ")");
        PlannedFlow f;
        f.src = {static_cast<int>(parse_int(row[c_sn], "src_node", line)),
                 static_cast<int>(parse_int(row[c_sx], "src_nic", line))};
        f.dst = {static_cast<int>(parse_int(row[c_dn], "dst_node", line)),
                 static_cast<int>(parse_int(row[c_dx], "dst_nic", line))};
        f.bytes = static_cast<uint64_t>(parse_int(row[c_b], "bytes", line));
        f.category = flow_category_from_string(row[c_cat]);
        f.phase = static_cast<int>(parse_int(row[c_ph], "phase", line));
        f.intra_node = f.src.node == f.dst.node;
        set.flows.push_back(f);
    }
    return set;
}

}  // namespace clustersim
