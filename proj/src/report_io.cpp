#include "clustersim/report_io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "clustersim/csv.hpp"
#include "json.hpp"

namespace clustersim {

static FabricConfig fabric_config_from_json(const nlohmann::json& j) {
    FabricConfig cfg;
    if (j.contains("ecn")) {
        const auto& e = j["ecn"];
        cfg.ecn.min_bytes = e.value("min_bytes", cfg.ecn.min_bytes);
        cfg.ecn.max_bytes = e.value("max_bytes", cfg.ecn.max_bytes);
        cfg.ecn.p_max = e.value("p_max", cfg.ecn.p_max);
        cfg.ecn_enabled = e.value("enabled", cfg.ecn_enabled);
    }
    if (j.contains("pfc")) {
        const auto& p = j["pfc"];
        cfg.pfc.priority = p.value("priority", cfg.pfc.priority);
        cfg.pfc.xoff_bytes = p.value("xoff_bytes", cfg.pfc.xoff_bytes);
        cfg.pfc.xon_offset_bytes = p.value("xon_offset_bytes", cfg.pfc.xon_offset_bytes);
        cfg.pfc.headroom_bytes = p.value("headroom_bytes", cfg.pfc.headroom_bytes);
        cfg.pfc_enabled = p.value("enabled", cfg.pfc_enabled);
    }
    if (j.contains("shared")) {
        const auto& s = j["shared"];
        cfg.shared.total_bytes = s.value("total_bytes", cfg.shared.total_bytes);
        cfg.shared.alpha = s.value("alpha", cfg.shared.alpha);
        cfg.shared.max_share = s.value("max_share", cfg.shared.max_share);
    }
    if (j.contains("dcqcn")) {
        const auto& d = j["dcqcn"];
        cfg.dcqcn.g = d.value("g", cfg.dcqcn.g);
        cfg.dcqcn.rate_ai_gbps = d.value("rate_ai_gbps", cfg.dcqcn.rate_ai_gbps);
        cfg.dcqcn.rate_hai_gbps = d.value("rate_hai_gbps", cfg.dcqcn.rate_hai_gbps);
        cfg.dcqcn.alpha_timer_us = d.value("alpha_timer_us", cfg.dcqcn.alpha_timer_us);
        cfg.dcqcn.increase_timer_us = d.value("increase_timer_us", cfg.dcqcn.increase_timer_us);
        cfg.dcqcn.byte_counter_bytes = d.value("byte_counter_bytes", cfg.dcqcn.byte_counter_bytes);
        cfg.dcqcn.min_rate_gbps = d.value("min_rate_gbps", cfg.dcqcn.min_rate_gbps);
        cfg.dcqcn.f_threshold = d.value("f_threshold", cfg.dcqcn.f_threshold);
        cfg.dcqcn.cnp_interval_us = d.value("cnp_interval_us", cfg.dcqcn.cnp_interval_us);
    }
    cfg.segment_bytes = j.value("segment_bytes", cfg.segment_bytes);
    cfg.sample_interval_ns = j.value("sample_interval_ns", cfg.sample_interval_ns);
    cfg.mark_window_ns = j.value("mark_window_ns", cfg.mark_window_ns);
    cfg.warmup_ns = j.value("warmup_ns", cfg.warmup_ns);
    return cfg;
}

FabricConfig fabric_config_from_json_text(const std::string& text) {
    try {
        return fabric_config_from_json(nlohmann::json::parse(text));
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("fabric config: ") + e.what());
    }
}

FabricConfig load_fabric_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open fabric config: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return fabric_config_from_json_text(ss.str());
}

std::vector<std::string> write_sim_report(const SimReport& rep, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    std::vector<std::string> written;
    auto open = [&](const std::string& name) {
        written.push_back((fs::path(out_dir) / name).string());
        return std::ofstream(written.back());
    };

    {
        auto f = open("ports.csv");
        f << "port_id,t_ns,occupancy,marks,pauses,drops\n";
        for (const auto& s : rep.port_series)
            write_csv_row(f, {std::to_string(s.port_id), std::to_string(s.t_ns),
                              std::to_string(s.occupancy_bytes), std::to_string(s.marks),
                              std::to_string(s.pauses), std::to_string(s.drops)});
    }
    {
        auto f = open("flows.csv");
        f << "flow_id,t_ns,rc_gbps,alpha\n";
        for (const auto& s : rep.flow_series)
            write_csv_row(f, {std::to_string(s.flow_id), std::to_string(s.t_ns),
                              format_double(s.rc_gbps), format_double(s.alpha)});
    }
    {
        auto f = open("windows.csv");
        f << "port_id,start_ns,enqueued,marked\n";
        for (const auto& p : rep.ports)
            for (const auto& w : p.mark_windows)
                write_csv_row(f, {std::to_string(p.port_id), std::to_string(w.start_ns),
                                  std::to_string(w.enqueued), std::to_string(w.marked)});
    }
    {
        auto f = open("summary.json");
        nlohmann::json j;
        j["horizon_ns"] = rep.horizon_ns;
        j["end_ns"] = rep.end_ns;
        j["events_processed"] = rep.events_processed;
        j["total_drops"] = rep.total_drops;
        auto ports = nlohmann::json::array();
        for (const auto& p : rep.ports) {
            ports.push_back({{"port_id", p.port_id},
                             {"label", p.label},
                             {"enqueues", p.state.enqueue_count},
                             {"marks", p.state.mark_count},
                             {"drops", p.state.drop_count},
                             {"pause_events", p.pause_events},
                             {"resume_events", p.resume_events},
                             {"bytes_in", p.bytes_in},
                             {"bytes_out", p.bytes_out},
                             {"headroom_peak_bytes", p.state.headroom_used_bytes}});
        }
        j["ports"] = ports;
        auto flows = nlohmann::json::array();
        for (const auto& fl : rep.flows) {
            flows.push_back({{"flow_id", fl.flow_id},
                             {"category", fl.category},
                             {"bytes_requested", fl.bytes_requested},
                             {"delivered_bytes", fl.delivered_bytes},
                             {"start_ns", fl.start_ns},
                             {"completion_ns", fl.completion_ns},
                             {"cnp_count", fl.cnp_count},
                             {"mean_rate_gbps", fl.mean_rate_gbps},
                             {"window_gbps", fl.window_gbps}});
        }
        j["flows"] = flows;
        f << j.dump(2) << '\n';
    }
    return written;
}

}  // namespace clustersim
