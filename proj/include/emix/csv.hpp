#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "emix/panel.hpp"

namespace emix {

// Column-to-role mapping for panel CSV files. `subject`, `day` and `beep`
// columns are required; every column listed in `variables` is ingested with a
// missing mask. Unlisted columns are ignored.
struct CsvSchema {
    std::string subject_column = "subject";
    std::string day_column = "day";
    std::string beep_column = "beep";
    std::vector<std::string> variables;
    std::vector<std::string> missing_tokens = {"", "NA"}; // matched case-insensitively
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
    return s;
}

inline bool is_missing_token(const std::string& cell, const std::vector<std::string>& tokens) {
    const std::string c = lower(cell);
    for (const auto& t : tokens)
        if (c == lower(t)) return true;
    return false;
}

inline double parse_double(const std::string& cell, std::size_t line_no, const std::string& col) {
    double v = 0.0;
    const char* begin = cell.data();
    const char* end = cell.data() + cell.size();
    auto [p, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc{} || p != end)
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + cell + "' in column '" + col + "'");
    return v;
}

inline long parse_int(const std::string& cell, std::size_t line_no, const std::string& col) {
    long v = 0;
    auto [p, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || p != cell.data() + cell.size())
        throw ParseError("line " + std::to_string(line_no) + ": cannot parse '" + cell + "' as integer in column '" + col + "'");
    return v;
}

// round-trip exact double formatting shared by every CSV writer
inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

} // namespace detail

inline PanelDataset ingest_csv(std::istream& in, const CsvSchema& schema, const std::string& origin = "<stream>") {
    std::string line;
    if (!std::getline(in, line))
        throw ParseError(origin + ": empty file, header row required");
    const std::vector<std::string> header = detail::split_csv_line(line);

    auto col_of = [&](const std::string& name) -> std::size_t {
        const auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end())
            throw UnknownVariable(origin + ": column '" + name + "' not found in header");
        return static_cast<std::size_t>(it - header.begin());
    };

    const std::size_t c_subject = col_of(schema.subject_column);
    const std::size_t c_day = col_of(schema.day_column);
    const std::size_t c_beep = col_of(schema.beep_column);
    std::vector<std::size_t> c_vars;
    for (const auto& v : schema.variables) c_vars.push_back(col_of(v));

    // rows grouped by subject in first-appearance order, then sorted by (day, beep)
    std::vector<std::string> subject_order;
    std::map<std::string, std::vector<OccasionRow>> rows;

    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            throw RaggedRow(origin + ": line " + std::to_string(line_no) + " has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(header.size()));
        OccasionRow row;
        row.day = static_cast<int>(detail::parse_int(cells[c_day], line_no, schema.day_column));
        row.beep = static_cast<int>(detail::parse_int(cells[c_beep], line_no, schema.beep_column));
        row.values.resize(c_vars.size(), 0.0);
        row.missing.resize(c_vars.size(), 0);
        for (std::size_t k = 0; k < c_vars.size(); ++k) {
            const std::string& cell = cells[c_vars[k]];
            if (detail::is_missing_token(cell, schema.missing_tokens)) {
                row.missing[k] = 1;
            } else {
                row.values[k] = detail::parse_double(cell, line_no, schema.variables[k]);
            }
        }
        const std::string& id = cells[c_subject];
        if (!rows.count(id)) subject_order.push_back(id);
        rows[id].push_back(std::move(row));
    }

    std::vector<SubjectBlock> subjects;
    subjects.reserve(subject_order.size());
    for (const auto& id : subject_order) {
        SubjectBlock block;
        block.subject_id = id;
        block.occasions = std::move(rows[id]);
        std::stable_sort(block.occasions.begin(), block.occasions.end(),
                         [](const OccasionRow& a, const OccasionRow& b) {
                             return std::pair{a.day, a.beep} < std::pair{b.day, b.beep};
                         });
        subjects.push_back(std::move(block));
    }
    return PanelDataset(schema.variables, std::move(subjects));
}

inline PanelDataset ingest_csv_file(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in)
        throw ParseError("cannot open '" + path + "'");
    return ingest_csv(in, schema, path);
}

inline void export_csv(std::ostream& out, const PanelDataset& data, const std::string& missing_token = "NA") {
    out << "subject,day,beep";
    for (const auto& v : data.variable_names()) out << ',' << v;
    out << '\n';
    for (const auto& s : data.subjects()) {
        for (const auto& o : s.occasions) {
            out << s.subject_id << ',' << o.day << ',' << o.beep;
            for (std::size_t k = 0; k < o.values.size(); ++k) {
                out << ',';
                if (o.missing[k])
                    out << missing_token;
                else
                    out << detail::format_double(o.values[k]);
            }
            out << '\n';
        }
    }
}

inline std::string export_csv_string(const PanelDataset& data, const std::string& missing_token = "NA") {
    std::ostringstream os;
    export_csv(os, data, missing_token);
    return os.str();
}

} // namespace emix
