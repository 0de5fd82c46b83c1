#pragma once

// CSV formats. A tensor row is `xx,yy,zz,xy,xz,yz`; a cohort row appends an
// integer group label. Blank lines, `#` comments and a non-numeric header
// line are skipped.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "spdperm/errors.hpp"
#include "spdperm/permutation.hpp"
#include "spdperm/similarity.hpp"
#include "spdperm/spd_tensor.hpp"

namespace spdperm {

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(line);
    while (std::getline(is, cur, ',')) {
        const auto b = cur.find_first_not_of(" \t\r");
        const auto e = cur.find_last_not_of(" \t\r");
        out.push_back(b == std::string::npos ? std::string{} : cur.substr(b, e - b + 1));
    }
    return out;
}

inline bool parse_double(const std::string& s, double& v) {
    if (s.empty()) return false;
    char* end = nullptr;
    v = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Reads a cohort. Rows carry 6 components plus an optional label (missing
/// labels mean group 0). Labels may be any integers; they are remapped to
/// dense indices in ascending order.
inline Cohort read_cohort_csv(std::istream& is) {
    Cohort c;
    std::vector<long> raw_labels;
    std::string line;
    std::size_t lineno = 0;
    bool first_data = true;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos || line[0] == '#') continue;
        const auto fields = detail::split_csv(line);
        double probe;
        if (first_data && !fields.empty() && !detail::parse_double(fields[0], probe)) {
            first_data = false;  // header
            continue;
        }
        first_data = false;
        if (fields.size() != 6 && fields.size() != 7) {
            throw ParseError("cohort CSV line " + std::to_string(lineno) + ": expected 6 or 7 fields");
        }
        std::array<double, 6> comps{};
        for (int k = 0; k < 6; ++k) {
            if (!detail::parse_double(fields[k], comps[k])) {
                throw ParseError("cohort CSV line " + std::to_string(lineno) + ": bad number '" +
                                 fields[k] + "'");
            }
        }
        long label = 0;
        if (fields.size() == 7) {
            const auto& f = fields[6];
            const auto r = std::from_chars(f.data(), f.data() + f.size(), label);
            if (r.ec != std::errc{} || r.ptr != f.data() + f.size()) {
                throw ParseError("cohort CSV line " + std::to_string(lineno) + ": bad label '" + f + "'");
            }
        }
        try {
            c.tensors.push_back(SpdTensor::from_components(comps));
        } catch (const Error& e) {
            throw ParseError("cohort CSV line " + std::to_string(lineno) + ": " + e.what());
        }
        raw_labels.push_back(label);
    }
    std::map<long, int> dense;
    for (long l : raw_labels) dense.emplace(l, 0);
    int next = 0;
    for (auto& [k, v] : dense) v = next++;
    c.labels.reserve(raw_labels.size());
    for (long l : raw_labels) c.labels.push_back(dense[l]);
    return c;
}

inline Cohort read_cohort_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ParseError("cannot open '" + path + "'");
    return read_cohort_csv(f);
}

inline void write_tensor_row(std::ostream& os, const SpdTensor& t) {
    const auto& c = t.components();
    for (int k = 0; k < 6; ++k) os << (k ? "," : "") << detail::format_double(c[k]);
    os << "\n";
}

inline void write_cohort_csv(std::ostream& os, const Cohort& c) {
    os << "xx,yy,zz,xy,xz,yz,group\n";
    for (std::size_t i = 0; i < c.size(); ++i) {
        const auto& comps = c.tensors[i].components();
        for (int k = 0; k < 6; ++k) os << detail::format_double(comps[k]) << ",";
        os << c.labels[i] << "\n";
    }
}

inline void write_similarity_csv(std::ostream& os, const SimilarityMatrix& s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        for (std::size_t j = 0; j < s.size(); ++j) {
            os << (j ? "," : "") << detail::format_double(s(i, j));
        }
        os << "\n";
    }
}

}  // namespace spdperm
