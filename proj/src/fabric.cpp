#include "clustersim/fabric.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <queue>

#include "clustersim/rng.hpp"

namespace clustersim {

void EcnConfig::validate() const {
    if (min_bytes > max_bytes) throw DomainError("ecn: min_bytes > max_bytes");
    if (p_max < 0.0 || p_max > 1.0) throw DomainError("ecn: p_max outside [0,1]");
}

void PfcConfig::validate() const {
    if (xon_offset_bytes >= xoff_bytes) throw DomainError("pfc: xon_offset must be < xoff");
    if (headroom_bytes == 0) throw DomainError("pfc: headroom must be > 0");
}

void SharedBufferConfig::validate() const {
    if (total_bytes == 0) throw DomainError("shared buffer: total_bytes must be > 0");
    if (alpha <= 0.0) throw DomainError("shared buffer: alpha must be > 0");
    if (max_share <= 0.0 || max_share > 1.0)
        throw DomainError("shared buffer: max_share outside (0,1]");
}

void FabricConfig::validate() const {
    ecn.validate();
    pfc.validate();
    shared.validate();
    if (segment_bytes == 0) throw DomainError("fabric: segment_bytes must be > 0");
    if (sample_interval_ns <= 0) throw DomainError("fabric: sample_interval_ns must be > 0");
    if (mark_window_ns <= 0) throw DomainError("fabric: mark_window_ns must be > 0");
}

double ecn_mark_probability(uint64_t occupancy_bytes, const EcnConfig& cfg) {
    if (occupancy_bytes <= cfg.min_bytes) return 0.0;
    if (occupancy_bytes > cfg.max_bytes) return 1.0;
    // min < occupancy <= max, so min < max here.
    double span = static_cast<double>(cfg.max_bytes - cfg.min_bytes);
    return cfg.p_max * static_cast<double>(occupancy_bytes - cfg.min_bytes) / span;
}

PauseAction pfc_transition(const PortQueueState& state, const PfcConfig& cfg) {
    if (!state.paused && state.occupancy_bytes >= cfg.xoff_bytes)
        return PauseAction::send_pause;
    if (state.paused) {
        int64_t resume_at = static_cast<int64_t>(cfg.xoff_bytes) -
                            static_cast<int64_t>(cfg.xon_offset_bytes);
        if (static_cast<int64_t>(state.occupancy_bytes) <= std::max<int64_t>(resume_at, 0))
            return PauseAction::send_resume;
    }
    return PauseAction::none;
}

uint64_t dynamic_threshold(const SharedBufferConfig& cfg, uint64_t total_occupied_bytes) {
    if (total_occupied_bytes > cfg.total_bytes)
        throw DomainError("dynamic_threshold: occupied exceeds total buffer");
    double free_share = cfg.alpha * static_cast<double>(cfg.total_bytes - total_occupied_bytes);
    double cap = cfg.max_share * static_cast<double>(cfg.total_bytes);
    double t = std::min(free_share, cap);
    return t <= 0.0 ? 0 : static_cast<uint64_t>(t);
}

int final_hop_port(const ClusterTopology& topo, Endpoint dst) {
    int link = topo.host_link.at(dst.node).at(dst.nic);
    return port_of_link(link, /*from_a=*/false);  // leaf (endpoint b) transmits
}

bool SimReport::operator==(const SimReport& o) const {
    return horizon_ns == o.horizon_ns && end_ns == o.end_ns &&
           events_processed == o.events_processed && total_drops == o.total_drops &&
           ports == o.ports && flows == o.flows && port_series == o.port_series &&
           flow_series == o.flow_series;
}

const PortSummary* SimReport::find_port(int port_id) const {
    for (const auto& p : ports)
        if (p.port_id == port_id) return &p;
    return nullptr;
}

const FlowSummary* SimReport::find_flow(int flow_id) const {
    for (const auto& f : flows)
        if (f.flow_id == flow_id) return &f;
    return nullptr;
}

double SimReport::sustained_mark_fraction(int port_id, int64_t after_ns,
                                          uint64_t min_segments) const {
    const PortSummary* p = find_port(port_id);
    if (!p) return -1.0;
    double best = -1.0;
    for (const auto& w : p->mark_windows) {
        if (w.start_ns < after_ns || w.enqueued < min_segments) continue;
        best = std::max(best, static_cast<double>(w.marked) / static_cast<double>(w.enqueued));
    }
    return best;
}

namespace {

enum class EvKind : uint8_t {
    pause_on = 0,
    pause_off = 1,
    departure = 2,
    arrival = 3,
    timer = 4,
    job_event = 5,
};

enum class TimerKind : uint8_t { inject, alpha_tick, incr_tick, cnp_deliver, sample, warmup };

struct Seg {
    int32_t flow = 0;
    uint32_t bytes = 0;
    int16_t hop = 0;
    bool marked = false;
    bool headroom = false;
    int32_t ingress_port = -1;
};

struct Ev {
    int64_t t = 0;
    EvKind kind = EvKind::timer;
    uint64_t seq = 0;
    int32_t target = 0;  // port or flow id depending on kind
    uint32_t epoch = 0;
    TimerKind tk = TimerKind::inject;
    Seg seg;
};

struct EvCmp {
    bool operator()(const Ev& x, const Ev& y) const {
        if (x.t != y.t) return x.t > y.t;
        if (x.kind != y.kind) return static_cast<int>(x.kind) > static_cast<int>(y.kind);
        return x.seq > y.seq;
    }
};

struct PortRt {
    LinkEnd tx, rx;
    double gbps = 0.0;
    int64_t latency_ns = 0;
    std::deque<Seg> q;
    bool busy = false;
    PortQueueState st;
    uint64_t bytes_in = 0, bytes_out = 0;
    uint64_t pause_events = 0, resume_events = 0;
    std::vector<MarkWindow> windows;
    int64_t win_start = 0;
    uint64_t win_enq = 0, win_marks = 0;
};

struct IngressRt {
    uint64_t occ = 0;
    uint64_t headroom_used = 0;
    bool pause_sent = false;
};

struct SwitchRt {
    uint64_t shared_occ = 0;
    uint64_t headroom_occ = 0;
};

struct FlowRt {
    FlowSpec spec;
    std::vector<int> path;  // directed port ids, source NIC first
    int64_t path_latency_ns = 0;
    double line_gbps = 0.0;
    FlowState cc;
    uint64_t injected = 0, delivered = 0;
    int64_t started_at = -1, completion = -1;
    bool active = false;
    uint64_t bytes_to_bc = 0;
    int64_t last_cnp_rx = -(int64_t(1) << 62);
    bool cnp_since_alpha_tick = false;
    uint64_t cnp_count = 0;
    uint64_t delivered_at_warmup = 0;
    uint32_t incr_epoch = 0;
};

class FabricEngine {
  public:
    FabricEngine(const ClusterTopology& topo, const std::vector<FlowSpec>& flows,
                 const FabricConfig& cfg, uint64_t seed, int64_t horizon_ns)
        : topo_(topo), cfg_(cfg), rng_(seed), horizon_(horizon_ns) {
        cfg.validate();
        if (horizon_ns <= 0) throw DomainError("fabric: horizon must be > 0");
        init_ports();
        init_flows(flows);
    }

    SimReport run() {
        schedule_phase(0, 0);
        if (!flows_.empty()) {
            if (cfg_.warmup_ns > 0 && cfg_.warmup_ns < horizon_)
                push_timer(cfg_.warmup_ns, TimerKind::warmup, 0);
            push_timer(cfg_.sample_interval_ns, TimerKind::sample, 0);
        }

        while (!pq_.empty()) {
            Ev ev = pq_.top();
            if (ev.t > horizon_) break;
            pq_.pop();
            now_ = ev.t;
            ++events_;
            dispatch(ev);
        }
        return finalize();
    }

  private:
    const ClusterTopology& topo_;
    FabricConfig cfg_;
    Rng rng_;
    int64_t horizon_ = 0;
    int64_t now_ = 0;
    uint64_t events_ = 0;
    uint64_t seq_ = 0;
    uint64_t total_drops_ = 0;

    std::vector<PortRt> ports_;
    std::vector<IngressRt> ingress_;
    std::vector<SwitchRt> switches_;
    std::vector<FlowRt> flows_;
    std::map<int, std::vector<size_t>> phases_;  // phase value -> flow indexes
    std::map<int, size_t> phase_outstanding_;
    std::vector<PortSample> port_series_;
    std::vector<FlowSample> flow_series_;
    std::priority_queue<Ev, std::vector<Ev>, EvCmp> pq_;

    void init_ports() {
        ports_.resize(topo_.links.size() * 2);
        ingress_.resize(ports_.size());
        switches_.resize(topo_.switches.size());
        for (const auto& link : topo_.links) {
            for (int dir = 0; dir < 2; ++dir) {
                PortRt& p = ports_[port_of_link(link.link_id, dir == 0)];
                p.tx = dir == 0 ? link.a : link.b;
                p.rx = dir == 0 ? link.b : link.a;
                p.gbps = link.capacity_gbps;
                p.latency_ns = link.latency_ns;
            }
        }
    }

    void init_flows(const std::vector<FlowSpec>& specs) {
        for (const auto& spec : specs) {
            FlowRt f;
            f.spec = spec;
            Path path;
            try {
                path = route(topo_, spec.src, spec.dst);
            } catch (const DomainError& e) {
                throw DomainError("flow " + std::to_string(spec.flow_id) +
                                  " is unroutable: " + e.what());
            }
            f.path = directed_ports(path, spec.src);
            for (int pid : f.path) f.path_latency_ns += ports_[pid].latency_ns;
            f.line_gbps = ports_[f.path.front()].gbps;
            f.cc = make_flow_state(f.line_gbps);
            phases_[spec.phase].push_back(flows_.size());
            flows_.push_back(std::move(f));
        }
        for (const auto& [phase, members] : phases_) phase_outstanding_[phase] = members.size();
    }

    std::vector<int> directed_ports(const Path& path, Endpoint src) const {
        std::vector<int> out;
        LinkEnd cur = LinkEnd::node_nic(src.node, src.nic);
        for (int lid : path.links) {
            const Link& link = topo_.links[lid];
            bool from_a;
            if (matches(link.a, cur))
                from_a = true;
            else if (matches(link.b, cur))
                from_a = false;
            else
                throw DomainError("path discontinuity at link " + std::to_string(lid));
            out.push_back(port_of_link(lid, from_a));
            cur = from_a ? link.b : link.a;
        }
        return out;
    }

    static bool matches(const LinkEnd& end, const LinkEnd& cur) {
        if (end.is_switch != cur.is_switch) return false;
        if (end.is_switch) return end.sw == cur.sw;
        // Walking endpoints: a node matches regardless of NIC except at the
        // source, where cur carries the NIC.
        if (cur.nic >= 0) return end.node == cur.node && end.nic == cur.nic;
        return end.node == cur.node;
    }

    void push(Ev ev) {
        ev.seq = seq_++;
        pq_.push(ev);
    }

    void push_timer(int64_t t, TimerKind tk, int32_t target, uint32_t epoch = 0) {
        Ev ev;
        ev.t = t;
        ev.kind = EvKind::timer;
        ev.tk = tk;
        ev.target = target;
        ev.epoch = epoch;
        push(ev);
    }

    void dispatch(const Ev& ev) {
        switch (ev.kind) {
            case EvKind::pause_on: handle_pause(ev.target, true); break;
            case EvKind::pause_off: handle_pause(ev.target, false); break;
            case EvKind::departure: handle_departure(ev.target); break;
            case EvKind::arrival: handle_arrival(ev.target, ev.seg); break;
            case EvKind::job_event: break;
            case EvKind::timer:
                switch (ev.tk) {
                    case TimerKind::inject: handle_inject(ev.target); break;
                    case TimerKind::alpha_tick: handle_alpha_tick(ev.target); break;
                    case TimerKind::incr_tick: handle_incr_tick(ev.target, ev.epoch); break;
                    case TimerKind::cnp_deliver: handle_cnp(ev.target); break;
                    case TimerKind::sample: handle_sample(); break;
                    case TimerKind::warmup: handle_warmup(); break;
                }
                break;
        }
    }

    // --- phases ---

    void schedule_phase(size_t phase_index, int64_t at) {
        auto it = phases_.begin();
        std::advance(it, phase_index);
        if (it == phases_.end()) return;
        for (size_t fi : it->second) activate_flow(fi, at + std::max<int64_t>(flows_[fi].spec.start_ns, 0));
    }

    void activate_flow(size_t fi, int64_t at) {
        FlowRt& f = flows_[fi];
        f.active = true;
        f.started_at = at;
        if (f.spec.bytes == 0) {
            // nothing to move; completes on activation
            Ev ev;
            ev.t = at;
            ev.kind = EvKind::job_event;
            ev.target = static_cast<int32_t>(fi);
            push(ev);
            f.completion = at;
            phase_done(f.spec.phase, at);
            return;
        }
        push_timer(at, TimerKind::inject, static_cast<int32_t>(fi));
        push_timer(at + us_to_ns(cfg_.dcqcn.alpha_timer_us), TimerKind::alpha_tick,
                   static_cast<int32_t>(fi));
        push_timer(at + us_to_ns(cfg_.dcqcn.increase_timer_us), TimerKind::incr_tick,
                   static_cast<int32_t>(fi), f.incr_epoch);
    }

    void phase_done(int phase, int64_t at) {
        auto it = phase_outstanding_.find(phase);
        if (it == phase_outstanding_.end() || it->second == 0) return;
        if (--it->second == 0) {
            size_t idx = static_cast<size_t>(std::distance(phase_outstanding_.begin(), it));
            schedule_phase(idx + 1, at);
        }
    }

    static int64_t us_to_ns(double us) {
        return std::max<int64_t>(1, static_cast<int64_t>(std::llround(us * 1000.0)));
    }

    // --- flow events ---

    void handle_inject(int32_t fi) {
        FlowRt& f = flows_[static_cast<size_t>(fi)];
        if (!f.active || f.injected >= f.spec.bytes) return;
        uint32_t b = static_cast<uint32_t>(
            std::min<uint64_t>(cfg_.segment_bytes, f.spec.bytes - f.injected));
        Seg seg;
        seg.flow = fi;
        seg.bytes = b;
        f.injected += b;

        source_enqueue(f.path.front(), seg);

        f.bytes_to_bc += b;
        while (cfg_.dcqcn.byte_counter_bytes > 0 && f.bytes_to_bc >= cfg_.dcqcn.byte_counter_bytes) {
            f.bytes_to_bc -= cfg_.dcqcn.byte_counter_bytes;
            f.cc = on_increase_event(f.cc, cfg_.dcqcn, f.line_gbps, IncreaseTrigger::byte_counter);
        }

        if (f.injected < f.spec.bytes) {
            double gap_ns = static_cast<double>(b) * 8.0 / f.cc.rc_gbps;
            push_timer(now_ + std::max<int64_t>(1, static_cast<int64_t>(std::llround(gap_ns))),
                       TimerKind::inject, fi);
        }
    }

    void handle_alpha_tick(int32_t fi) {
        FlowRt& f = flows_[static_cast<size_t>(fi)];
        if (!f.active || f.completion >= 0) return;
        if (!f.cnp_since_alpha_tick) f.cc = alpha_decay(f.cc, cfg_.dcqcn);
        f.cnp_since_alpha_tick = false;
        push_timer(now_ + us_to_ns(cfg_.dcqcn.alpha_timer_us), TimerKind::alpha_tick, fi);
    }

    void handle_incr_tick(int32_t fi, uint32_t epoch) {
        FlowRt& f = flows_[static_cast<size_t>(fi)];
        if (!f.active || f.completion >= 0 || epoch != f.incr_epoch) return;
        f.cc = on_increase_event(f.cc, cfg_.dcqcn, f.line_gbps, IncreaseTrigger::timer);
        push_timer(now_ + us_to_ns(cfg_.dcqcn.increase_timer_us), TimerKind::incr_tick, fi, epoch);
    }

    void handle_cnp(int32_t fi) {
        FlowRt& f = flows_[static_cast<size_t>(fi)];
        if (!f.active || f.completion >= 0) return;
        f.cc = on_congestion_feedback(f.cc, cfg_.dcqcn, f.line_gbps, now_);
        f.cnp_count++;
        f.cnp_since_alpha_tick = true;
        f.bytes_to_bc = 0;
        f.incr_epoch++;
        push_timer(now_ + us_to_ns(cfg_.dcqcn.increase_timer_us), TimerKind::incr_tick, fi,
                   f.incr_epoch);
    }

    // --- port mechanics ---

    void roll_windows(PortRt& p) {
        while (now_ >= p.win_start + cfg_.mark_window_ns) {
            if (p.win_enq > 0) p.windows.push_back({p.win_start, p.win_enq, p.win_marks});
            p.win_start += cfg_.mark_window_ns;
            p.win_enq = 0;
            p.win_marks = 0;
        }
    }

    void source_enqueue(int pid, const Seg& seg) {
        PortRt& p = ports_[pid];
        roll_windows(p);
        p.q.push_back(seg);
        p.st.occupancy_bytes += seg.bytes;
        p.bytes_in += seg.bytes;
        p.st.enqueue_count++;
        p.win_enq++;
        if (!p.busy && !p.st.paused) start_tx(pid);
    }

    void start_tx(int pid) {
        PortRt& p = ports_[pid];
        const Seg& seg = p.q.front();
        p.busy = true;
        double tx_ns = static_cast<double>(seg.bytes) * 8.0 / p.gbps;
        Ev ev;
        ev.t = now_ + std::max<int64_t>(1, static_cast<int64_t>(std::llround(tx_ns)));
        ev.kind = EvKind::departure;
        ev.target = pid;
        push(ev);
    }

    void handle_departure(int pid) {
        PortRt& p = ports_[pid];
        Seg seg = p.q.front();
        p.q.pop_front();
        assert(p.st.occupancy_bytes >= seg.bytes);
        p.st.occupancy_bytes -= seg.bytes;
        p.bytes_out += seg.bytes;
        p.busy = false;

        if (p.tx.is_switch && seg.ingress_port >= 0) {
            // the segment leaves this switch's buffer
            SwitchRt& sw = switches_[p.tx.sw];
            IngressRt& ing = ingress_[seg.ingress_port];
            if (seg.headroom) {
                assert(ing.headroom_used >= seg.bytes && sw.headroom_occ >= seg.bytes);
                ing.headroom_used -= seg.bytes;
                sw.headroom_occ -= seg.bytes;
            } else {
                assert(ing.occ >= seg.bytes && sw.shared_occ >= seg.bytes);
                ing.occ -= seg.bytes;
                sw.shared_occ -= seg.bytes;
            }
            maybe_resume(seg.ingress_port, p.tx.sw);
        }

        Ev ev;
        ev.t = now_ + p.latency_ns;
        ev.kind = EvKind::arrival;
        ev.target = pid;
        ev.seg = seg;
        push(ev);

        if (!p.q.empty() && !p.st.paused) start_tx(pid);
    }

    void handle_arrival(int pid, Seg seg) {
        PortRt& p = ports_[pid];
        if (!p.rx.is_switch) {
            deliver(seg);
            return;
        }
        int sw_id = p.rx.sw;
        SwitchRt& sw = switches_[sw_id];
        FlowRt& f = flows_[static_cast<size_t>(seg.flow)];
        int next_pid = f.path[static_cast<size_t>(seg.hop) + 1];
        PortRt& np = ports_[next_pid];
        roll_windows(np);

        IngressRt& ing = ingress_[pid];
        if (!cfg_.pfc_enabled) {
            // lossy admission against the dynamic shared threshold
            uint64_t occupied = std::min(sw.shared_occ, cfg_.shared.total_bytes);
            if (np.st.occupancy_bytes >= dynamic_threshold(cfg_.shared, occupied)) {
                np.st.drop_count++;
                total_drops_++;
                return;
            }
            ing.occ += seg.bytes;
            sw.shared_occ += seg.bytes;
        } else if (ing.pause_sent) {
            // pause already signalled upstream: in-flight lands in headroom
            if (ing.headroom_used + seg.bytes > cfg_.pfc.headroom_bytes) {
                np.st.drop_count++;
                total_drops_++;
                return;
            }
            seg.headroom = true;
            ing.headroom_used += seg.bytes;
            p.st.headroom_used_bytes = std::max(p.st.headroom_used_bytes, ing.headroom_used);
            sw.headroom_occ += seg.bytes;
        } else {
            ing.occ += seg.bytes;
            sw.shared_occ += seg.bytes;
        }

        seg.ingress_port = pid;
        seg.hop++;

        if (cfg_.ecn_enabled && !seg.marked) {
            double pm = ecn_mark_probability(np.st.occupancy_bytes, cfg_.ecn);
            if (pm >= 1.0 || (pm > 0.0 && rng_.uniform01() < pm)) {
                seg.marked = true;
                np.st.mark_count++;
                np.win_marks++;
            }
        }

        np.q.push_back(seg);
        np.st.occupancy_bytes += seg.bytes;
        np.bytes_in += seg.bytes;
        np.st.enqueue_count++;
        np.win_enq++;
        if (!np.busy && !np.st.paused) start_tx(next_pid);

        if (cfg_.pfc_enabled) maybe_pause(pid, sw_id);
    }

    uint64_t effective_xoff(int sw_id) const {
        uint64_t occupied = std::min(switches_[sw_id].shared_occ, cfg_.shared.total_bytes);
        return std::min<uint64_t>(cfg_.pfc.xoff_bytes, dynamic_threshold(cfg_.shared, occupied));
    }

    void maybe_pause(int ingress_pid, int sw_id) {
        IngressRt& ing = ingress_[ingress_pid];
        if (ing.pause_sent) return;
        PfcConfig eff = cfg_.pfc;
        eff.xoff_bytes = effective_xoff(sw_id);
        PortQueueState view;
        view.occupancy_bytes = ing.occ;
        view.paused = false;
        if (pfc_transition(view, eff) == PauseAction::send_pause) {
            ing.pause_sent = true;
            Ev ev;
            ev.t = now_ + ports_[ingress_pid].latency_ns;
            ev.kind = EvKind::pause_on;
            ev.target = ingress_pid;
            push(ev);
        }
    }

    void maybe_resume(int ingress_pid, int sw_id) {
        IngressRt& ing = ingress_[ingress_pid];
        if (!ing.pause_sent || !cfg_.pfc_enabled) return;
        PfcConfig eff = cfg_.pfc;
        eff.xoff_bytes = effective_xoff(sw_id);
        PortQueueState view;
        view.occupancy_bytes = ing.occ + ing.headroom_used;
        view.paused = true;
        if (pfc_transition(view, eff) == PauseAction::send_resume) {
            ing.pause_sent = false;
            Ev ev;
            ev.t = now_ + ports_[ingress_pid].latency_ns;
            ev.kind = EvKind::pause_off;
            ev.target = ingress_pid;
            push(ev);
        }
    }

    void handle_pause(int pid, bool on) {
        PortRt& p = ports_[pid];
        p.st.paused = on;
        if (on) {
            p.pause_events++;
        } else {
            p.resume_events++;
            if (!p.busy && !p.q.empty()) start_tx(pid);
        }
    }

    void deliver(Seg seg) {
        FlowRt& f = flows_[static_cast<size_t>(seg.flow)];
        f.delivered += seg.bytes;
        if (seg.marked) {
            int64_t interval = us_to_ns(cfg_.dcqcn.cnp_interval_us);
            if (now_ - f.last_cnp_rx >= interval) {
                f.last_cnp_rx = now_;
                push_timer(now_ + f.path_latency_ns, TimerKind::cnp_deliver, seg.flow);
            }
        }
        if (f.delivered >= f.spec.bytes && f.completion < 0) {
            f.completion = now_;
            phase_done(f.spec.phase, now_);
        }
    }

    // --- sampling / report ---

    void handle_sample() {
        for (size_t pid = 0; pid < ports_.size(); ++pid) {
            const PortRt& p = ports_[pid];
            if (p.st.enqueue_count == 0) continue;
            // conservation invariant, checked on every sampling boundary
            if (p.bytes_in - p.bytes_out != p.st.occupancy_bytes)
                throw DomainError("conservation violated on port " + std::to_string(pid) +
                                  " at t=" + std::to_string(now_));
            port_series_.push_back({static_cast<int>(pid), now_, p.st.occupancy_bytes,
                                    p.st.mark_count, p.pause_events, p.st.drop_count});
        }
        for (size_t fi = 0; fi < flows_.size(); ++fi) {
            const FlowRt& f = flows_[fi];
            if (f.started_at < 0 || f.started_at > now_ || f.completion >= 0) continue;
            flow_series_.push_back({f.spec.flow_id, now_, f.cc.rc_gbps, f.cc.alpha});
        }
        if (now_ + cfg_.sample_interval_ns <= horizon_)
            push_timer(now_ + cfg_.sample_interval_ns, TimerKind::sample, 0);
    }

    void handle_warmup() {
        for (auto& f : flows_) f.delivered_at_warmup = f.delivered;
    }

    std::string port_label(size_t pid) const {
        const PortRt& p = ports_[pid];
        auto end_name = [&](const LinkEnd& e) {
            if (e.is_switch) {
                const auto& s = topo_.switches[e.sw];
                return (s.role == SwitchRole::leaf ? "leaf" : "spine") + std::to_string(e.sw);
            }
            return "n" + std::to_string(e.node) + ".nic" + std::to_string(e.nic);
        };
        return end_name(p.tx) + "->" + end_name(p.rx);
    }

    SimReport finalize() {
        SimReport rep;
        rep.horizon_ns = horizon_;
        rep.end_ns = std::min(now_, horizon_);
        rep.events_processed = events_;
        rep.total_drops = total_drops_;
        for (size_t pid = 0; pid < ports_.size(); ++pid) {
            PortRt& p = ports_[pid];
            if (p.st.enqueue_count == 0) continue;
            roll_windows(p);
            if (p.win_enq > 0) p.windows.push_back({p.win_start, p.win_enq, p.win_marks});
            PortSummary s;
            s.port_id = static_cast<int>(pid);
            s.label = port_label(pid);
            s.state = p.st;
            s.bytes_in = p.bytes_in;
            s.bytes_out = p.bytes_out;
            s.pause_events = p.pause_events;
            s.resume_events = p.resume_events;
            s.mark_windows = std::move(p.windows);
            rep.ports.push_back(std::move(s));
        }
        for (const auto& f : flows_) {
            FlowSummary s;
            s.flow_id = f.spec.flow_id;
            s.category = f.spec.category;
            s.bytes_requested = f.spec.bytes;
            s.delivered_bytes = f.delivered;
            s.start_ns = f.started_at;
            s.completion_ns = f.completion;
            s.cnp_count = f.cnp_count;
            int64_t measure_end = f.completion >= 0 ? f.completion : rep.end_ns;
            if (f.started_at >= 0 && measure_end > f.started_at)
                s.mean_rate_gbps = static_cast<double>(f.delivered) * 8.0 /
                                   static_cast<double>(measure_end - f.started_at);
            if (cfg_.warmup_ns > 0 && measure_end > cfg_.warmup_ns)
                s.window_gbps = static_cast<double>(f.delivered - f.delivered_at_warmup) * 8.0 /
                                static_cast<double>(measure_end - cfg_.warmup_ns);
            rep.flows.push_back(std::move(s));
        }
        rep.port_series = std::move(port_series_);
        rep.flow_series = std::move(flow_series_);
        return rep;
    }
};

}  // namespace

SimReport run_fabric(const ClusterTopology& topo, const std::vector<FlowSpec>& flows,
                     const FabricConfig& cfg, uint64_t seed, int64_t horizon_ns) {
    FabricEngine engine(topo, flows, cfg, seed, horizon_ns);
    return engine.run();
}

}  // namespace clustersim
