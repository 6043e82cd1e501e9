#pragma once

#include <string>
#include <vector>

#include "clustersim/fabric.hpp"

namespace clustersim {

// Fabric config as JSON (ecn/pfc/shared/dcqcn blocks plus engine knobs).
FabricConfig load_fabric_config(const std::string& path);
FabricConfig fabric_config_from_json_text(const std::string& text);

// SimReport emission: summary.json, ports.csv (port_id,t_ns,occupancy,marks,
// pauses,drops), flows.csv (flow_id,t_ns,rc_gbps,alpha), windows.csv
// (port_id,start_ns,enqueued,marked). Returns the files written.
std::vector<std::string> write_sim_report(const SimReport& report, const std::string& out_dir);

}  // namespace clustersim
