#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "lssm/config.hpp"
#include "lssm/stats.hpp"

namespace lssm {

inline constexpr const char* kCsvHeader =
    "t,dt,ke,grad_l2_sq,grad_lr_r,trace_gg,f_dot_u,noise_dot_u,noise_sq,div_residual";

namespace detail {

inline std::string fmt_g17(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace detail

/// Step records as CSV at the configured cadence, closed by a dt = 0 terminal
/// row carrying the final-state integrands. The ke column holds the energy at
/// the row's time t (the step's left endpoint).
inline void write_records_csv(const std::string& path, const std::vector<StepRecord>& records,
                              const StepRecord& terminal, const std::string& cfg_hash,
                              std::uint64_t cadence = 1) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot open csv for writing: " + path);
    out << "# " << kVersionString << " config=" << cfg_hash << "\n" << kCsvHeader << "\n";
    auto row = [&out](const StepRecord& r) {
        out << detail::fmt_g17(r.t) << ',' << detail::fmt_g17(r.dt) << ','
            << detail::fmt_g17(r.ke_pre) << ',' << detail::fmt_g17(r.grad_l2_sq) << ','
            << detail::fmt_g17(r.grad_lr_r) << ',' << detail::fmt_g17(r.trace_gg) << ','
            << detail::fmt_g17(r.f_dot_u) << ',' << detail::fmt_g17(r.noise_dot_u) << ','
            << detail::fmt_g17(r.noise_sq) << ',' << detail::fmt_g17(r.div_residual) << '\n';
    };
    for (std::size_t i = 0; i < records.size(); ++i) {
        if (cadence <= 1 || i % cadence == 0 || i + 1 == records.size()) row(records[i]);
    }
    row(terminal);
    if (!out) throw IoError("csv write failed: " + path);
}

/// Parse a records CSV. ke_post of each step row is reconstructed from the
/// successor row's ke (the stream is contiguous and ends with the terminal
/// marker). Returns all rows including the terminal one (dt = 0, last).
inline std::vector<StepRecord> read_records_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open csv: " + path);
    std::vector<StepRecord> rows;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != kCsvHeader) throw IoError("unexpected csv header in " + path);
            header_seen = true;
            continue;
        }
        StepRecord r;
        double* fields[10] = {&r.t, &r.dt, &r.ke_pre, &r.grad_l2_sq, &r.grad_lr_r,
                              &r.trace_gg, &r.f_dot_u, &r.noise_dot_u, &r.noise_sq,
                              &r.div_residual};
        std::stringstream ss(line);
        std::string cell;
        for (int c = 0; c < 10; ++c) {
            if (!std::getline(ss, cell, ','))
                throw IoError("short csv row in " + path);
            *fields[c] = std::stod(cell);
        }
        rows.push_back(r);
    }
    if (!header_seen) throw IoError("csv has no header: " + path);
    for (std::size_t i = 0; i + 1 < rows.size(); ++i) rows[i].ke_post = rows[i + 1].ke_pre;
    if (!rows.empty()) rows.back().ke_post = rows.back().ke_pre;
    return rows;
}

// ---------------------------------------------------------------------------
// JSON serialization of reports

/// Doubles serialize as-is except non-finite values, which JSON cannot carry;
/// they become the strings "inf"/"-inf"/"nan" (the +inf Reynolds sentinel).
inline Json json_number(double v) {
    if (std::isfinite(v)) return v;
    if (std::isnan(v)) return "nan";
    return v > 0 ? "inf" : "-inf";
}

inline Json to_json(const Statistics& st) {
    Json j;
    j["eps0"] = json_number(st.eps0);
    j["epsM"] = json_number(st.epsM);
    j["eps"] = json_number(st.eps);
    j["U"] = json_number(st.U);
    j["F"] = json_number(st.F);
    j["L"] = json_number(st.L);
    j["G2"] = json_number(st.G2);
    j["Re_nu"] = json_number(st.Re_nu);
    j["Re_nubar"] = json_number(st.Re_nubar);
    j["tau"] = json_number(st.tau);
    j["T"] = json_number(st.horizon);
    j["T0"] = json_number(st.burn_in);
    return j;
}

inline Json to_json(const BoundReport& br) {
    Json j;
    j["residual_B1"] = json_number(br.residual_B1);
    j["residual_B2"] = json_number(br.residual_B2);
    j["residual_B2_nu_variant"] = json_number(br.residual_B2_nu_variant);
    j["ratio_B3"] = json_number(br.ratio_B3);
    j["boundary_term"] = json_number(br.finite_T_boundary);
    j["tol_B1"] = json_number(br.tol_b1);
    j["tol_B2"] = json_number(br.tol_b2);
    j["cap_B3"] = json_number(br.cap_b3);
    j["pass_B1"] = br.pass_b1;
    j["pass_B2"] = br.pass_b2;
    j["pass_B3"] = br.pass_b3;
    return j;
}

} // namespace lssm
