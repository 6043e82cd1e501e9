#pragma once

#include <cstdint>

namespace clustersim {

// Per-flow rate control: multiplicative decrease on congestion feedback,
// staged increase (fast recovery -> additive -> hyper) on timer expiry or
// byte-counter rollover, and EWMA decay of the congestion estimate.

struct DcqcnParams {
    double g = 1.0 / 256.0;          // EWMA gain
    double rate_ai_gbps = 0.04;      // additive increase step
    double rate_hai_gbps = 0.2;      // hyper increase step (per hyper stage)
    double alpha_timer_us = 55.0;
    double increase_timer_us = 55.0;
    uint64_t byte_counter_bytes = 10ull * 1000 * 1000;
    double min_rate_gbps = 0.1;
    int f_threshold = 5;             // stages of fast recovery
    double cnp_interval_us = 50.0;   // receiver-side feedback window
};

struct FlowState {
    double rc_gbps = 0.0;   // current rate
    double rt_gbps = 0.0;   // target rate
    double alpha = 0.0;     // congestion estimate in [0, 1]
    int t_counter = 0;      // increase-timer expirations since last cut
    int bc_counter = 0;     // byte-counter rollovers since last cut
    int64_t last_cnp_time_ns = -1;
};

enum class IncreaseTrigger { timer, byte_counter };

FlowState make_flow_state(double line_rate_gbps);

// Congestion feedback (CNP analog): rt <- rc, rc <- rc*(1 - alpha/2) clamped
// to min_rate, alpha <- (1-g)*alpha + g, stage counters reset.
FlowState on_congestion_feedback(FlowState s, const DcqcnParams& p,
                                 double line_rate_gbps, int64_t now_ns);

// Staged rate increase. Fast recovery while both counters are below
// f_threshold, additive when exactly one has crossed, hyper once both have.
FlowState on_increase_event(FlowState s, const DcqcnParams& p,
                            double line_rate_gbps, IncreaseTrigger trigger);

// Alpha timer expired with no feedback in the window: alpha <- (1-g)*alpha.
FlowState alpha_decay(FlowState s, const DcqcnParams& p);

}  // namespace clustersim
