#include "ergmark/aggregate.hpp"

#include <limits>

namespace ergmark {

RunSummary aggregate_runs(const std::vector<RunRecord>& runs, bool require_min_runs) {
    if (runs.empty()) fail(ErrorKind::usage, "no runs to aggregate");
    for (const auto& r : runs) {
        if (!(r.key == runs.front().key)) {
            fail(ErrorKind::usage, "cannot aggregate runs of different configurations ('" +
                                       runs.front().key.workload_id + "/" + runs.front().key.precision + "@" +
                                       runs.front().key.device_id + "' vs '" + r.key.workload_id + "/" +
                                       r.key.precision + "@" + r.key.device_id + "')");
        }
    }

    RunSummary out;
    std::vector<double> times;
    std::vector<double> energies;
    bool any_energy = false;
    for (const auto& r : runs) {
        times.push_back(r.time_to_solution_s());
        if (!r.energy) continue;
        any_energy = true;
        if (r.energy->degraded()) {
            ++out.degraded_runs;
            continue;
        }
        energies.push_back(r.energy->joules_corrected);
    }
    out.time_s = summarize(times);
    out.energy_runs = energies.size();
    if (!energies.empty()) out.energy_j = summarize(energies);

    if (!require_min_runs) {
        out.valid = false;
        return out;
    }
    out.time_validity = check_validity(times, Metric::time);
    out.valid = out.time_validity->valid;
    if (any_energy) {
        if (energies.size() >= kMinRuns) {
            out.energy_validity = check_validity(energies, Metric::energy);
        } else {
            ValidityReport rep;
            rep.metric = Metric::energy;
            rep.values = energies;
            rep.max_rel_dev = std::numeric_limits<double>::infinity();
            rep.valid = false;
            rep.diagnostic = "fewer than 3 runs with full power coverage";
            out.energy_validity = rep;
        }
        out.valid = out.valid && out.energy_validity->valid;
    }
    return out;
}

}  // namespace ergmark
