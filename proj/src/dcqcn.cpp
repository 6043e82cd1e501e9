#include "clustersim/dcqcn.hpp"

#include <algorithm>

namespace clustersim {

FlowState make_flow_state(double line_rate_gbps) {
    FlowState s;
    s.rc_gbps = line_rate_gbps;
    s.rt_gbps = line_rate_gbps;
    s.alpha = 0.0;
    return s;
}

FlowState on_congestion_feedback(FlowState s, const DcqcnParams& p,
                                 double line_rate_gbps, int64_t now_ns) {
    s.rt_gbps = s.rc_gbps;
    s.rc_gbps = std::clamp(s.rc_gbps * (1.0 - s.alpha / 2.0), p.min_rate_gbps,
                           line_rate_gbps);
    s.alpha = (1.0 - p.g) * s.alpha + p.g;
    s.t_counter = 0;
    s.bc_counter = 0;
    s.last_cnp_time_ns = now_ns;
    return s;
}

FlowState on_increase_event(FlowState s, const DcqcnParams& p,
                            double line_rate_gbps, IncreaseTrigger trigger) {
    if (trigger == IncreaseTrigger::timer)
        s.t_counter++;
    else
        s.bc_counter++;

    bool t_past = s.t_counter > p.f_threshold;
    bool b_past = s.bc_counter > p.f_threshold;
    if (t_past && b_past) {
        int stage = std::min(s.t_counter, s.bc_counter) - p.f_threshold;
        s.rt_gbps += p.rate_hai_gbps * stage;
    } else if (t_past || b_past) {
        s.rt_gbps += p.rate_ai_gbps;
    }
    s.rt_gbps = std::min(s.rt_gbps, line_rate_gbps);
    s.rc_gbps = std::clamp((s.rc_gbps + s.rt_gbps) / 2.0, p.min_rate_gbps,
                           line_rate_gbps);
    return s;
}

FlowState alpha_decay(FlowState s, const DcqcnParams& p) {
    s.alpha = (1.0 - p.g) * s.alpha;
    return s;
}

}  // namespace clustersim
