#include "clustersim/scheduler.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <queue>
#include <set>

#include "clustersim/csv.hpp"
#include "json.hpp"

namespace clustersim {

std::optional<Allocation> placement(const std::vector<int>& free_nodes, int request,
                                    const ClusterTopology& topo) {
    if (request < 1 || static_cast<size_t>(request) > free_nodes.size()) return std::nullopt;
    std::vector<int> sorted = free_nodes;
    std::sort(sorted.begin(), sorted.end());

    std::map<int, std::vector<int>> by_pod;
    for (int n : sorted) by_pod[topo.pod_of_node(n)].push_back(n);

    // single-pod preference: among pods that fit, the one holding the lowest
    // free node id
    const std::vector<int>* best = nullptr;
    for (const auto& [pod, nodes] : by_pod) {
        if (static_cast<int>(nodes.size()) < request) continue;
        if (!best || nodes.front() < best->front()) best = &nodes;
    }
    Allocation alloc;
    if (best) {
        alloc.nodes.assign(best->begin(), best->begin() + request);
        alloc.cross_pod = false;
    } else {
        alloc.nodes.assign(sorted.begin(), sorted.begin() + request);
        alloc.cross_pod = true;
    }
    return alloc;
}

const JobOutcome* ScheduleOutcome::find(const std::string& job_id) const {
    for (const auto& j : jobs)
        if (j.job_id == job_id) return &j;
    return nullptr;
}

double ScheduleOutcome::mean_wait_s(int max_nodes) const {
    double sum = 0.0;
    size_t n = 0;
    for (const auto& j : jobs) {
        if (j.requested_nodes > max_nodes || j.start_ts < 0) continue;
        sum += static_cast<double>(j.wait_s);
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

std::vector<std::string> ScheduleOutcome::oversubscriptions() const {
    std::vector<std::string> out;
    for (size_t n = 0; n < node_busy.size(); ++n) {
        auto intervals = node_busy[n];
        std::sort(intervals.begin(), intervals.end(),
                  [](const BusyInterval& a, const BusyInterval& b) { return a.from < b.from; });
        for (size_t i = 0; i + 1 < intervals.size(); ++i) {
            if (intervals[i].to > intervals[i + 1].from)
                out.push_back("node " + std::to_string(n) + ": " + intervals[i].job_id +
                              " overlaps " + intervals[i + 1].job_id);
        }
    }
    return out;
}

namespace {

enum class SchedEvKind : uint8_t {
    fault_start = 0,
    finish = 1,
    fault_end = 2,
    submit = 3,
    preempt_at_ckpt = 4,
};

struct SchedEv {
    int64_t t;
    SchedEvKind kind;
    uint64_t seq;
    size_t idx;      // job index, fault index, or node id (fault_end)
    uint64_t epoch;  // guards stale finish/preempt events
};

struct SchedEvCmp {
    bool operator()(const SchedEv& a, const SchedEv& b) const {
        if (a.t != b.t) return a.t > b.t;
        if (a.kind != b.kind) return static_cast<int>(a.kind) > static_cast<int>(b.kind);
        return a.seq > b.seq;
    }
};

constexpr uint64_t kNodeFlag = 1ull << 62;

struct JobRt {
    JobRecord rec;
    int64_t work_s = 0;         // total work from the trace
    int64_t work_done_s = 0;    // checkpointed progress
    int64_t seg_start = -1;     // progress resumes here (after any overhead)
    int64_t nodes_taken_at = -1;
    bool running = false;
    bool suspended = false;
    bool done = false;
    bool pending = false;
    std::vector<int> nodes;
    uint64_t epoch = 0;  // invalidates stale events
    bool preempt_scheduled = false;
    std::set<size_t> beneficiaries;   // while suspended
    std::vector<int> reserved_nodes;  // held for resume
    JobOutcome out;
};

class SchedulerSim {
  public:
    SchedulerSim(const std::vector<JobRecord>& trace, const ClusterTopology& topo,
                 const SchedulerPolicy& policy, const std::vector<FaultEvent>& faults)
        : topo_(topo), policy_(policy), faults_(faults) {
        int n = topo.node_count();
        node_free_.assign(n, true);
        node_drained_.assign(n, false);
        outcome_.node_busy.assign(n, {});
        for (const auto& rec : trace) {
            JobRt j;
            j.rec = rec;
            j.work_s = rec.has_runtime() ? rec.runtime_s() : 0;
            j.out.job_id = rec.job_id;
            j.out.requested_nodes = rec.requested_nodes;
            j.out.submit_ts = rec.submit_ts;
            j.out.final_state = rec.state;
            jobs_.push_back(std::move(j));
        }
    }

    ScheduleOutcome run() {
        for (size_t i = 0; i < jobs_.size(); ++i)
            push({jobs_[i].rec.submit_ts, SchedEvKind::submit, 0, i, 0});
        for (size_t i = 0; i < faults_.size(); ++i)
            push({faults_[i].time_s, SchedEvKind::fault_start, 0, i, 0});

        while (!pq_.empty()) {
            SchedEv ev = pq_.top();
            pq_.pop();
            now_ = ev.t;
            dispatch(ev);
        }
        for (auto& j : jobs_) outcome_.jobs.push_back(j.out);
        outcome_.horizon_end = now_;
        return std::move(outcome_);
    }

  private:
    const ClusterTopology& topo_;
    SchedulerPolicy policy_;
    std::vector<FaultEvent> faults_;
    std::vector<JobRt> jobs_;
    std::vector<bool> node_free_, node_drained_;
    std::vector<size_t> queue_;        // pending job indexes, FIFO
    std::vector<size_t> resume_ready_; // suspended jobs whose beneficiaries finished
    ScheduleOutcome outcome_;
    std::priority_queue<SchedEv, std::vector<SchedEv>, SchedEvCmp> pq_;
    uint64_t seq_ = 0;
    int64_t now_ = 0;

    void push(SchedEv ev) {
        ev.seq = seq_++;
        pq_.push(ev);
    }

    void dispatch(const SchedEv& ev) {
        switch (ev.kind) {
            case SchedEvKind::submit: handle_submit(ev.idx); break;
            case SchedEvKind::finish: handle_finish(ev.idx, ev.epoch); break;
            case SchedEvKind::fault_start: handle_fault_start(ev.idx); break;
            case SchedEvKind::fault_end: handle_fault_end(ev.idx); break;
            case SchedEvKind::preempt_at_ckpt: handle_preempt(ev.idx, ev.epoch); break;
        }
    }

    bool is_reserved(int n) const {
        for (const auto& j : jobs_)
            if (j.suspended &&
                std::find(j.reserved_nodes.begin(), j.reserved_nodes.end(), n) !=
                    j.reserved_nodes.end())
                return true;
        return false;
    }

    std::vector<int> free_nodes() const {
        std::vector<int> out;
        for (size_t n = 0; n < node_free_.size(); ++n)
            if (node_free_[n] && !node_drained_[n]) out.push_back(static_cast<int>(n));
        return out;
    }

    void handle_submit(size_t idx) {
        JobRt& j = jobs_[idx];
        if (j.rec.requested_nodes > topo_.node_count()) {
            j.done = true;
            j.out.final_state = JobState::FAILED;
            j.out.note = "requested " + std::to_string(j.rec.requested_nodes) +
                         " nodes, cluster has " + std::to_string(topo_.node_count());
            j.out.end_ts = now_;
            return;
        }
        j.pending = true;
        queue_.push_back(idx);
        try_schedule();
    }

    void start_job(size_t idx, const Allocation& alloc, int64_t overhead_s) {
        JobRt& j = jobs_[idx];
        j.pending = false;
        j.running = true;
        j.suspended = false;
        j.nodes = alloc.nodes;
        j.nodes_taken_at = now_;
        j.seg_start = now_ + overhead_s;
        for (int n : alloc.nodes) node_free_[n] = false;
        if (j.out.start_ts < 0) {
            j.out.start_ts = now_;
            j.out.wait_s = now_ - j.rec.submit_ts;
            j.out.cross_pod = alloc.cross_pod;
            j.out.nodes = alloc.nodes;
        }
        j.epoch++;
        push({j.seg_start + (j.work_s - j.work_done_s), SchedEvKind::finish, 0, idx, j.epoch});
    }

    void release_nodes(const std::vector<int>& nodes, const std::string& job_id,
                       int64_t busy_from) {
        for (int n : nodes) {
            outcome_.node_busy[n].push_back({busy_from, now_, job_id});
            if (!is_reserved(n)) node_free_[n] = true;
        }
    }

    void mark_resume_ready(size_t sponsor) {
        if (std::find(resume_ready_.begin(), resume_ready_.end(), sponsor) ==
            resume_ready_.end())
            resume_ready_.push_back(sponsor);
    }

    void handle_finish(size_t idx, uint64_t epoch) {
        JobRt& j = jobs_[idx];
        if (!j.running || epoch != j.epoch) return;  // stale after preemption/fault
        j.running = false;
        j.done = true;
        j.out.end_ts = now_;
        release_nodes(j.nodes, j.rec.job_id, j.nodes_taken_at);
        j.nodes.clear();

        // a beneficiary completing unblocks its suspended sponsor
        for (size_t s = 0; s < jobs_.size(); ++s) {
            JobRt& sponsor = jobs_[s];
            if (!sponsor.suspended) continue;
            if (sponsor.beneficiaries.erase(idx) && sponsor.beneficiaries.empty())
                mark_resume_ready(s);
        }
        try_schedule();
    }

    // --- faults ---

    std::optional<int> parse_node_target(const std::string& target) const {
        try {
            size_t pos = 0;
            std::string t = target;
            if (!t.empty() && t[0] == 'n') t = t.substr(1);
            int id = std::stoi(t, &pos);
            if (pos == t.size() && id >= 0 && id < topo_.node_count()) return id;
        } catch (const std::exception&) {
        }
        return std::nullopt;
    }

    void handle_fault_start(size_t fi) {
        const FaultEvent& f = faults_[fi];
        bool node_scoped = f.component == FaultComponent::gpu ||
                           f.component == FaultComponent::nvlink_pcie ||
                           f.component == FaultComponent::nic ||
                           f.component == FaultComponent::misconfig;
        if (node_scoped) {
            auto node = parse_node_target(f.target);
            if (!node) throw DomainError("fault target unknown: " + f.target);
            drain_node(*node, f);
        } else if (f.component == FaultComponent::leaf_spine_switch) {
            // rail degradation: this switch's links at capacity 0 for the
            // duration; jobs keep running over the remaining rails
            outcome_.fault_log.push_back(
                "t=" + std::to_string(f.time_s) + " " + std::string(to_string(f.component)) +
                " " + f.target + ": rail links down for " +
                std::to_string(f.recovery_duration_s) + "s (cross-rail degradation)");
            push({f.time_s + f.recovery_duration_s, SchedEvKind::fault_end, 0, fi, 0});
        } else {
            outcome_.fault_log.push_back("t=" + std::to_string(f.time_s) + " " +
                                         std::string(to_string(f.component)) + " " + f.target +
                                         ": no fabric impact modeled");
        }
    }

    void drain_node(int node, const FaultEvent& f) {
        node_drained_[node] = true;
        outcome_.fault_log.push_back("t=" + std::to_string(f.time_s) + " " +
                                     std::string(to_string(f.component)) + " on node " +
                                     std::to_string(node) + ": drained for " +
                                     std::to_string(f.recovery_duration_s) + "s");
        for (size_t i = 0; i < jobs_.size(); ++i) {
            JobRt& j = jobs_[i];
            if (!j.running ||
                std::find(j.nodes.begin(), j.nodes.end(), node) == j.nodes.end())
                continue;
            j.running = false;
            j.done = true;
            j.epoch++;  // invalidates the pending finish event
            j.out.end_ts = now_;
            j.out.final_state =
                policy_.fault_kills_as_cancelled ? JobState::CANCELLED : JobState::FAILED;
            j.out.note = "terminated by " + std::string(to_string(f.component)) +
                         " fault on node " + std::to_string(node);
            release_nodes(j.nodes, j.rec.job_id, j.nodes_taken_at);
            j.nodes.clear();
            for (size_t s = 0; s < jobs_.size(); ++s) {
                JobRt& sponsor = jobs_[s];
                if (sponsor.suspended && sponsor.beneficiaries.erase(i) &&
                    sponsor.beneficiaries.empty())
                    mark_resume_ready(s);
            }
            break;  // a node serves at most one job
        }
        push({f.time_s + f.recovery_duration_s, SchedEvKind::fault_end, 0,
              static_cast<size_t>(node) | kNodeFlag, 0});
        try_schedule();
    }

    void handle_fault_end(size_t idx) {
        if (idx & kNodeFlag) {
            node_drained_[static_cast<int>(idx & ~kNodeFlag)] = false;
        } else {
            outcome_.fault_log.push_back("t=" + std::to_string(now_) + " " +
                                         faults_[idx].target + ": links restored");
        }
        try_schedule();
    }

    // --- scheduling core ---

    int64_t estimate_s(const JobRt& j) const { return j.work_s; }  // oracle backfill

    struct PseudoRun {
        int64_t planned_end;
        int nodes;
    };

    std::vector<PseudoRun> running_view() const {
        std::vector<PseudoRun> out;
        for (const auto& j : jobs_) {
            if (j.running) {
                out.push_back({j.seg_start + (j.work_s - j.work_done_s),
                               static_cast<int>(j.nodes.size())});
            } else if (j.suspended) {
                // the reserved set frees when the suspended job eventually ends
                int64_t resume = now_;
                for (size_t b : j.beneficiaries)
                    resume = std::max(resume, jobs_[b].seg_start +
                                                  (jobs_[b].work_s - jobs_[b].work_done_s));
                out.push_back({resume + policy_.resume_overhead_s + (j.work_s - j.work_done_s),
                               static_cast<int>(j.reserved_nodes.size())});
            }
        }
        return out;
    }

    void try_schedule() {
        resume_suspended();

        bool progress = true;
        while (progress) {
            progress = false;
            queue_.erase(std::remove_if(queue_.begin(), queue_.end(),
                                        [&](size_t i) { return !jobs_[i].pending; }),
                         queue_.end());
            if (queue_.empty()) return;
            std::vector<int> free = free_nodes();
            JobRt& head = jobs_[queue_.front()];
            if (static_cast<int>(free.size()) >= head.rec.requested_nodes) {
                auto alloc = placement(free, head.rec.requested_nodes, topo_);
                start_job(queue_.front(), *alloc, 0);
                progress = true;
                continue;
            }
            // head reservation: shadow time plus nodes spare at the shadow
            auto running = running_view();
            std::sort(running.begin(), running.end(),
                      [](const PseudoRun& a, const PseudoRun& b) {
                          return a.planned_end < b.planned_end;
                      });
            int64_t shadow = -1;
            int avail = static_cast<int>(free.size());
            int extra = 0;
            for (const auto& r : running) {
                avail += r.nodes;
                if (avail >= head.rec.requested_nodes) {
                    shadow = r.planned_end;
                    extra = avail - head.rec.requested_nodes;
                    break;
                }
            }
            if (shadow >= 0) {
                for (size_t qi = 1; qi < queue_.size(); ++qi) {
                    size_t idx = queue_[qi];
                    JobRt& j = jobs_[idx];
                    if (!j.pending) continue;
                    std::vector<int> now_free = free_nodes();
                    if (static_cast<int>(now_free.size()) < j.rec.requested_nodes) continue;
                    bool fits_window = now_ + estimate_s(j) <= shadow;
                    bool fits_extra = j.rec.requested_nodes <= extra;
                    if (!fits_window && !fits_extra) continue;
                    auto alloc = placement(now_free, j.rec.requested_nodes, topo_);
                    start_job(idx, *alloc, 0);
                    if (!fits_window) extra -= j.rec.requested_nodes;
                    progress = true;
                }
            }
            if (!progress) {
                if (policy_.kind == PolicyKind::checkpoint_preempt) consider_preemption();
                return;
            }
        }
    }

    void resume_suspended() {
        while (!resume_ready_.empty()) {
            size_t idx = resume_ready_.front();
            JobRt& j = jobs_[idx];
            if (!j.suspended) {
                resume_ready_.erase(resume_ready_.begin());
                continue;
            }
            // reserved nodes plus the free pool (covers a drained reserved node)
            std::vector<int> pool;
            for (int n : j.reserved_nodes)
                if (!node_drained_[n] && node_free_or_mine(n, j)) pool.push_back(n);
            for (int n : free_nodes())
                if (std::find(pool.begin(), pool.end(), n) == pool.end()) pool.push_back(n);
            if (static_cast<int>(pool.size()) < j.rec.requested_nodes)
                return;  // wait for recovery or more completions
            resume_ready_.erase(resume_ready_.begin());
            auto alloc = placement(pool, j.rec.requested_nodes, topo_);
            std::vector<int> reserved = j.reserved_nodes;
            j.reserved_nodes.clear();
            j.suspended = false;
            for (int n : reserved)
                if (std::find(alloc->nodes.begin(), alloc->nodes.end(), n) == alloc->nodes.end())
                    node_free_[n] = true;
            j.pending = true;  // start_job flips it back
            start_job(idx, *alloc, policy_.resume_overhead_s);
        }
    }

    bool node_free_or_mine(int n, const JobRt& sponsor) const {
        if (node_free_[n]) return true;
        // reserved for this sponsor and not occupied by a beneficiary
        for (const auto& j : jobs_)
            if (j.running && std::find(j.nodes.begin(), j.nodes.end(), n) != j.nodes.end())
                return false;
        return std::find(sponsor.reserved_nodes.begin(), sponsor.reserved_nodes.end(), n) !=
               sponsor.reserved_nodes.end();
    }

    bool beneficiary_eligible(const JobRt& j, int64_t ckpt_interval) const {
        return j.pending && j.rec.requested_nodes <= policy_.short_job_node_cap &&
               estimate_s(j) <= ckpt_interval;
    }

    void consider_preemption() {
        bool any_short_waiting = false;
        for (size_t idx : queue_)
            if (jobs_[idx].pending &&
                jobs_[idx].rec.requested_nodes <= policy_.short_job_node_cap)
                any_short_waiting = true;
        if (!any_short_waiting) return;

        // candidate: running checkpointed large job with the earliest next
        // checkpoint that precedes its own finish
        int64_t best_t = INT64_MAX;
        size_t best = SIZE_MAX;
        for (size_t i = 0; i < jobs_.size(); ++i) {
            const JobRt& j = jobs_[i];
            if (!j.running || j.preempt_scheduled) continue;
            if (!j.rec.checkpoint_interval_s || *j.rec.checkpoint_interval_s <= 0) continue;
            if (j.rec.requested_nodes <= policy_.short_job_node_cap) continue;
            if (j.out.preemptions >= policy_.max_preemptions_per_job) continue;
            int64_t interval = *j.rec.checkpoint_interval_s;
            bool serves_anyone = false;
            for (size_t qi : queue_)
                if (beneficiary_eligible(jobs_[qi], interval)) serves_anyone = true;
            if (!serves_anyone) continue;
            int64_t progress = j.work_done_s + std::max<int64_t>(0, now_ - j.seg_start);
            int64_t next_ckpt = (progress / interval + 1) * interval;
            if (next_ckpt >= j.work_s) continue;  // finishes before the next checkpoint
            int64_t t = j.seg_start + (next_ckpt - j.work_done_s);
            if (t < best_t) {
                best_t = t;
                best = i;
            }
        }
        if (best == SIZE_MAX) return;
        jobs_[best].preempt_scheduled = true;
        push({best_t, SchedEvKind::preempt_at_ckpt, 0, best, jobs_[best].epoch});
    }

    void handle_preempt(size_t idx, uint64_t epoch) {
        JobRt& j = jobs_[idx];
        j.preempt_scheduled = false;
        if (!j.running || epoch != j.epoch) return;
        int64_t interval = *j.rec.checkpoint_interval_s;

        // re-check: beneficiaries must still be pending and unservable from the
        // free pool
        std::vector<size_t> beneficiaries;
        int reserved_count = static_cast<int>(j.nodes.size());
        int claimed = 0;
        int free_count = static_cast<int>(free_nodes().size());
        for (size_t qi : queue_) {
            JobRt& cand = jobs_[qi];
            if (!beneficiary_eligible(cand, interval)) continue;
            if (free_count >= cand.rec.requested_nodes) continue;
            if (claimed + cand.rec.requested_nodes > reserved_count) continue;
            beneficiaries.push_back(qi);
            claimed += cand.rec.requested_nodes;
        }
        if (beneficiaries.empty()) return;

        // suspend exactly at the checkpoint instant: progress is a checkpoint
        // multiple, so nothing is lost
        int64_t progress = j.work_done_s + (now_ - j.seg_start);
        assert(progress % interval == 0);
        j.work_done_s = progress;
        j.running = false;
        j.suspended = true;
        j.epoch++;  // cancels the in-flight finish event
        j.out.preemptions++;
        for (int n : j.nodes)
            outcome_.node_busy[n].push_back({j.nodes_taken_at, now_, j.rec.job_id});
        j.reserved_nodes = j.nodes;
        j.nodes.clear();

        // run the beneficiaries inside the reservation
        std::vector<int> pool = j.reserved_nodes;
        for (size_t b : beneficiaries) {
            JobRt& cand = jobs_[b];
            std::vector<int> avail;
            for (int n : pool)
                if (!node_drained_[n]) avail.push_back(n);
            auto alloc = placement(avail, cand.rec.requested_nodes, topo_);
            if (!alloc) break;
            for (int n : alloc->nodes) pool.erase(std::find(pool.begin(), pool.end(), n));
            j.beneficiaries.insert(b);
            start_job(b, *alloc, 0);
            cand.out.note = "backfilled via preemption of " + j.rec.job_id;
        }
        if (j.beneficiaries.empty()) {
            // nothing actually started (drained reservation); resume immediately
            mark_resume_ready(idx);
            resume_suspended();
        }
    }
};

}  // namespace

ScheduleOutcome simulate_schedule(const std::vector<JobRecord>& trace,
                                  const ClusterTopology& topo, const SchedulerPolicy& policy,
                                  const std::vector<FaultEvent>& faults, uint64_t /*seed*/) {
    for (size_t i = 1; i < trace.size(); ++i)
        if (trace[i].submit_ts < trace[i - 1].submit_ts)
            throw DomainError("trace must be sorted by submit_ts (job " + trace[i].job_id + ")");
    SchedulerSim sim(trace, topo, policy, faults);
    return sim.run();
}

void write_schedule_csv(std::ostream& out, const ScheduleOutcome& outcome) {
    out << "job_id,wait_s,start,end,preemptions\n";
    for (const auto& j : outcome.jobs)
        write_csv_row(out, {j.job_id, std::to_string(j.wait_s),
                            j.start_ts < 0 ? "" : std::to_string(j.start_ts),
                            j.end_ts < 0 ? "" : std::to_string(j.end_ts),
                            std::to_string(j.preemptions)});
}

std::string schedule_summary_json(const ScheduleOutcome& outcome) {
    nlohmann::json j;
    j["jobs"] = outcome.jobs.size();
    uint64_t preemptions = 0;
    uint64_t cross_pod = 0;
    for (const auto& o : outcome.jobs) {
        preemptions += static_cast<uint64_t>(o.preemptions);
        if (o.cross_pod) cross_pod++;
    }
    j["total_preemptions"] = preemptions;
    j["cross_pod_allocations"] = cross_pod;
    j["horizon_end"] = outcome.horizon_end;
    j["mean_wait_s_le2_nodes"] = outcome.mean_wait_s(2);
    j["fault_log"] = outcome.fault_log;
    nlohmann::json per_job = nlohmann::json::array();
    for (const auto& o : outcome.jobs) {
        per_job.push_back({{"job_id", o.job_id},
                           {"state", to_string(o.final_state)},
                           {"wait_s", o.wait_s},
                           {"preemptions", o.preemptions},
                           {"cross_pod", o.cross_pod},
                           {"note", o.note}});
    }
    j["outcomes"] = per_job;
    return j.dump(2);
}

}  // namespace clustersim
