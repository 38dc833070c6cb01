#pragma once
// Run reports, CSV tables and atomic file output.

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "config.hpp"

namespace torusdyn::runner {

// CSV with a fixed header; numbers printed in round-trip precision.
class Table {
public:
    Table() = default;
    explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

    void add(std::vector<std::string> row);
    void add(const std::vector<double>& row);
    const std::vector<std::string>& header() const { return header_; }
    std::size_t rows() const { return rows_.size(); }
    std::string csv() const;

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

std::string format_number(double x);

struct AuditEntry {
    std::string check;
    std::string tolerance;   // registry name, empty for exact or structural checks
    double limit = 0.0;
    double measured = 0.0;
    std::string relation;    // "<=", ">=", ">", "<", "=="
    bool pass = false;
};

class Audit {
public:
    // Records measured `relation` limit and returns the verdict.
    bool check(const std::string& what, double measured, const std::string& relation, double limit,
               const std::string& tolerance = "");
    bool expect(const std::string& what, bool ok);
    bool passed() const;
    std::size_t failures() const;
    const std::vector<AuditEntry>& entries() const { return entries_; }
    Json to_json() const;

private:
    std::vector<AuditEntry> entries_;
};

struct RunReport {
    Json config;
    Json results = Json::object();
    Audit audit;
    Json tolerances;
    std::string status = "ok";  // ok | check-failure | numeric-failure
    std::string error;
    std::map<std::string, Table> tables;  // file stem -> data
    double wall_seconds = 0.0;
    unsigned jobs = 0;  // execution setting, kept out of report.json

    Json to_json() const;  // no wall-clock values
};

// Writes via a temporary file in the same directory and renames it into place.
void write_atomic(const std::filesystem::path& path, const std::string& content);

// CSV series consumed by plotting; every file is written, header-only when the report has no data for it.
const std::vector<std::pair<std::string, std::vector<std::string>>>& plot_series();
std::vector<std::filesystem::path> emit_plot_data(const RunReport& report, const std::filesystem::path& dir);

// report.json, timing.json, the task tables and the plot series.
std::vector<std::filesystem::path> write_outputs(const RunReport& report, const std::filesystem::path& dir);

}  // namespace torusdyn::runner
