#pragma once

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "dpc/error.hpp"
#include "dpc/simulator.hpp"

namespace dpc::io {

inline constexpr int kDefaultCsvDecimation = 100;

/// t,s1,s2,s3,err,phi_1..phi_m,ns_active,sigma2
inline std::string trace_csv_header(int stages) {
    std::string h = "t,s1,s2,s3,err";
    for (int i = 1; i <= stages; ++i) {
        h += ",phi_" + std::to_string(i);
    }
    h += ",ns_active,sigma2";
    return h;
}

namespace detail {

inline void append_number(std::string& line, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    line += buf;
}

}  // namespace detail

/// Writes every `decimation`-th record (records 0, N, 2N, ...), ceil(size / N) rows.
inline void write_trace_csv(std::ostream& os, const std::vector<TraceRecord>& trace, int stages,
                            int decimation = kDefaultCsvDecimation) {
    if (decimation < 1) {
        throw InvalidArgumentError("CSV decimation must be >= 1");
    }
    os << trace_csv_header(stages) << '\n';
    std::string line;
    for (std::size_t i = 0; i < trace.size(); i += static_cast<std::size_t>(decimation)) {
        const TraceRecord& r = trace[i];
        line.clear();
        detail::append_number(line, r.t);
        for (int c = 0; c < 3; ++c) {
            line += ',';
            detail::append_number(line, r.s_out[c]);
        }
        line += ',';
        detail::append_number(line, r.error_norm);
        for (Eigen::Index c = 0; c < r.phi.size(); ++c) {
            line += ',';
            detail::append_number(line, r.phi[c]);
        }
        line += r.nullspace_active ? ",1," : ",0,";
        detail::append_number(line, r.sigma2);
        os << line << '\n';
    }
}

}  // namespace dpc::io
