#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pbitmc/graph.hpp"

namespace pbitmc {

inline constexpr const char* kRecordSchema = "pbitmc-records-1";

/// One solver measurement. dtsqa emits one row per cell; dtsqa-independent
/// one row per independent run (p_index); apt one row per requested t_a with
/// the running minimum at that point.
struct RunRecord {
    std::string algorithm;
    std::string instance_id;
    long long cell = 0;
    int run = 0;       // seed index within the grid
    int r_replicas = 0;
    int p_runs = 1;
    int p_index = 0;
    long long t_a = 0;
    int n = 0;
    double best_energy = 0.0;
    double mean_replica_energy = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

inline std::string record_header(const std::string& config_hash,
                                 std::uint64_t seed) {
    std::string out;
    out += "# schema=";
    out += kRecordSchema;
    out += "\n# config_hash=" + config_hash;
    out += "\n# seed=" + std::to_string(seed) + "\n";
    out += "algorithm,instance_id,cell,run,R,P,p_index,t_a,n,best_energy,"
           "mean_replica_energy\n";
    return out;
}

inline std::string record_row(const RunRecord& r) {
    std::string out;
    out += r.algorithm;
    out += ',' + r.instance_id;
    out += ',' + std::to_string(r.cell);
    out += ',' + std::to_string(r.run);
    out += ',' + std::to_string(r.r_replicas);
    out += ',' + std::to_string(r.p_runs);
    out += ',' + std::to_string(r.p_index);
    out += ',' + std::to_string(r.t_a);
    out += ',' + std::to_string(r.n);
    out += ',' + detail::format_double(r.best_energy);
    out += ',' + detail::format_double(r.mean_replica_energy);
    out += '\n';
    return out;
}

struct RecordFile {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string schema;
    std::vector<RunRecord> rows;
};

inline RecordFile read_records_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("read_records_csv: cannot open " + path);
    RecordFile file;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;
            const std::string key = line.substr(2, eq - 2);
            const std::string value = line.substr(eq + 1);
            if (key == "schema") file.schema = value;
            if (key == "config_hash") file.config_hash = value;
            if (key == "seed") file.seed = std::stoull(value);
            continue;
        }
        if (line.rfind("algorithm,", 0) == 0) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(field);
        if (fields.size() != 11)
            throw ParseError("record row with " + std::to_string(fields.size()) +
                                 " fields (want 11)",
                             line_no);
        RunRecord r;
        r.algorithm = fields[0];
        r.instance_id = fields[1];
        r.cell = std::stoll(fields[2]);
        r.run = std::stoi(fields[3]);
        r.r_replicas = std::stoi(fields[4]);
        r.p_runs = std::stoi(fields[5]);
        r.p_index = std::stoi(fields[6]);
        r.t_a = std::stoll(fields[7]);
        r.n = std::stoi(fields[8]);
        r.best_energy = std::stod(fields[9]);
        r.mean_replica_energy =
            fields[10] == "nan" ? std::numeric_limits<double>::quiet_NaN()
                                : std::stod(fields[10]);
        file.rows.push_back(std::move(r));
    }
    return file;
}

/// Canonical record ordering: cell, then p_index, then t_a.
inline void sort_records(std::vector<RunRecord>& rows) {
    std::sort(rows.begin(), rows.end(), [](const RunRecord& a, const RunRecord& b) {
        if (a.cell != b.cell) return a.cell < b.cell;
        if (a.p_index != b.p_index) return a.p_index < b.p_index;
        return a.t_a < b.t_a;
    });
}

inline void write_records_csv(const std::string& path,
                              const std::string& config_hash, std::uint64_t seed,
                              std::vector<RunRecord> rows) {
    sort_records(rows);
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("write_records_csv: cannot open " + tmp);
        out << record_header(config_hash, seed);
        for (const auto& r : rows) out << record_row(r);
        if (!out) throw Error("write_records_csv: write failed");
    }
    std::remove(path.c_str());
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw Error("write_records_csv: rename failed for " + path);
}

}  // namespace pbitmc
