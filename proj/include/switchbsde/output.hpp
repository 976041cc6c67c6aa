#ifndef SWBSDE_OUTPUT_HPP
#define SWBSDE_OUTPUT_HPP

#include <cstdio>
#include <ostream>
#include <string>

#include <json.hpp>

#include "lattice.hpp"
#include "oracle.hpp"
#include "switching.hpp"
#include "validation.hpp"

namespace swbsde {

inline constexpr const char* solution_csv_schema = "switchbsde.solution.v1";
inline constexpr const char* value_table_csv_schema = "switchbsde.value_table.v1";
inline constexpr const char* picard_report_schema = "switchbsde.picard_report.v1";
inline constexpr const char* validation_report_schema = "switchbsde.validation_report.v1";
inline constexpr const char* estimate_schema = "switchbsde.estimate.v1";
inline constexpr const char* verification_schema = "switchbsde.verification.v1";
inline constexpr const char* paths_csv_schema = "switchbsde.paths.v1";

/// Round-trip text of a double ("%.17g").
inline std::string fmt_double(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Rows (k, w, n, mode, y, dK), one per node and mode, after a schema comment line.
inline void write_solution_csv(std::ostream& os, const ChainGrid& g, const SystemSolution& sol) {
    os << "# schema=" << solution_csv_schema << "\n";
    os << "k,w,n,mode,y,dK\n";
    for (int k = 0; k <= g.n_steps; ++k) {
        for (std::size_t idx = 0; idx < g.slice_size(k); ++idx) {
            const NodeState s = g.node(k, idx);
            for (std::size_t i = 0; i < sol.modes.size(); ++i) {
                os << k << ',' << s.w << ',' << s.n << ',' << i << ',' << fmt_double(sol.modes[i].y.slice(k)[idx]) << ','
                   << fmt_double(sol.modes[i].dk.slice(k)[idx]) << '\n';
            }
        }
    }
}

/// Rows (k, w, n, mode, v, action) with action -1 for continuing.
inline void write_value_table_csv(std::ostream& os, const ChainGrid& g, const ValueTable& t) {
    os << "# schema=" << value_table_csv_schema << "\n";
    os << "k,w,n,mode,v,action\n";
    for (int k = 0; k <= g.n_steps; ++k) {
        for (std::size_t idx = 0; idx < g.slice_size(k); ++idx) {
            const NodeState s = g.node(k, idx);
            for (std::size_t i = 0; i < t.v.size(); ++i) {
                os << k << ',' << s.w << ',' << s.n << ',' << i << ',' << fmt_double(t.v[i].slice(k)[idx]) << ','
                   << t.action[i][static_cast<std::size_t>(k)][idx] << '\n';
            }
        }
    }
}

inline nlohmann::json to_json(const PicardReport& r, const SystemSolution& sol) {
    nlohmann::json j;
    j["schema"] = picard_report_schema;
    j["iterations"] = r.iterations;
    j["converged"] = r.converged;
    j["tolerance"] = nlohmann::json(r.tolerance);
    j["sup_delta_history"] = nlohmann::json::array();
    for (double d : r.sup_delta_history) j["sup_delta_history"].push_back(nlohmann::json(d));
    j["monotonicity_violations"] = r.monotonicity_violations;
    j["worst_violation"] = nlohmann::json(r.worst_violation);
    j["root_values"] = nlohmann::json::array();
    for (const auto& m : sol.modes) j["root_values"].push_back(nlohmann::json(m.y.root()));
    return j;
}

inline nlohmann::json to_json(const ValidationReport& r) {
    nlohmann::json j;
    j["schema"] = validation_report_schema;
    j["ok"] = r.ok();
    j["violations"] = nlohmann::json::array();
    for (const auto& v : r.violations) {
        j["violations"].push_back({{"kind", to_string(v.kind)},
                                   {"step", v.step},
                                   {"i", v.i},
                                   {"j", v.j},
                                   {"l", v.l},
                                   {"value", nlohmann::json(v.value)},
                                   {"warning", v.warning},
                                   {"message", v.message}});
    }
    return j;
}

inline nlohmann::json to_json(const Estimate& e) {
    return {{"mean", nlohmann::json(e.mean)}, {"std_error", nlohmann::json(e.std_error)}, {"n_paths", e.n_paths}};
}

inline nlohmann::json to_json(const VerificationReport& r) {
    nlohmann::json j;
    j["schema"] = verification_schema;
    j["start_mode"] = r.start_mode;
    j["y_root"] = nlohmann::json(r.y_root);
    j["extracted"] = to_json(r.extracted);
    j["extracted_direct"] = to_json(r.extracted_direct);
    j["extracted_gap_in_stderr"] = nlohmann::json(r.extracted_gap_in_stderr);
    j["dp_root"] = nlohmann::json(r.dp_root);
    j["dp_gap"] = nlohmann::json(r.dp_gap);
    j["random_exceeding"] = r.random_exceeding;
    j["random"] = nlohmann::json::array();
    for (const auto& c : r.random) {
        j["random"].push_back({{"q_switch", nlohmann::json(c.q_switch)},
                               {"n_switches", c.n_switches},
                               {"estimate", to_json(c.estimate)},
                               {"exceeds", c.exceeds}});
    }
    return j;
}

}  // namespace swbsde

#endif  // SWBSDE_OUTPUT_HPP
