#include "report.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace torusdyn::runner {

std::string format_number(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, res.ptr};
}

void Table::add(std::vector<std::string> row) {
    if (row.size() != header_.size()) throw std::logic_error("table row width does not match header");
    rows_.push_back(std::move(row));
}

void Table::add(const std::vector<double>& row) {
    std::vector<std::string> s;
    s.reserve(row.size());
    for (double x : row) s.push_back(format_number(x));
    add(std::move(s));
}

std::string Table::csv() const {
    std::ostringstream out;
    auto line = [&out](const std::vector<std::string>& cells) {
        for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
        out << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
    return out.str();
}

bool Audit::check(const std::string& what, double measured, const std::string& relation, double limit,
                  const std::string& tolerance) {
    bool ok = false;
    if (relation == "<=") ok = measured <= limit;
    else if (relation == "<") ok = measured < limit;
    else if (relation == ">=") ok = measured >= limit;
    else if (relation == ">") ok = measured > limit;
    else if (relation == "==") ok = measured == limit;
    else throw std::logic_error("unknown relation " + relation);
    entries_.push_back({what, tolerance, limit, measured, relation, ok});
    return ok;
}

bool Audit::expect(const std::string& what, bool ok) { return check(what, ok ? 1.0 : 0.0, "==", 1.0); }

std::size_t Audit::failures() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += !e.pass;
    return n;
}

bool Audit::passed() const { return failures() == 0; }

Json Audit::to_json() const {
    Json arr = Json::array();
    for (const auto& e : entries_) {
        Json j = {{"check", e.check}, {"pass", e.pass}, {"measured", e.measured}, {"relation", e.relation},
                  {"limit", e.limit}};
        if (!e.tolerance.empty()) j["tolerance"] = e.tolerance;
        if (!e.pass) j["violation"] = e.measured - e.limit;
        arr.push_back(std::move(j));
    }
    return arr;
}

Json RunReport::to_json() const {
    Json files = Json::array();
    for (const auto& [stem, _] : tables)
        if (stem.rfind("plot_", 0) != 0) files.push_back(stem + ".csv");
    for (const auto& [stem, _] : plot_series()) files.push_back(stem + ".csv");
    Json j = {{"status", status},
              {"config", config},
              {"results", results},
              {"audit", {{"passed", audit.passed()}, {"failures", audit.failures()}, {"checks", audit.to_json()}}},
              {"tolerances", tolerances},
              {"data_files", files}};
    if (!error.empty()) j["error"] = error;
    return j;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) throw std::runtime_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

const std::vector<std::pair<std::string, std::vector<std::string>>>& plot_series() {
    static const std::vector<std::pair<std::string, std::vector<std::string>>> series{
        {"plot_eps_convergence", {"eps_delta", "limit_error_alpha", "limit_error_beta"}},
        {"plot_angle_vs_tilt", {"tilt", "angle_before", "angle_after"}},
        {"plot_eigen_locus", {"amplitude", "re_1", "im_1", "re_2", "im_2", "abs_1", "abs_2"}},
    };
    return series;
}

std::vector<std::filesystem::path> emit_plot_data(const RunReport& report, const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> written;
    for (const auto& [stem, header] : plot_series()) {
        const auto it = report.tables.find(stem);
        const Table t = it != report.tables.end() ? it->second : Table(header);
        const auto path = dir / (stem + ".csv");
        write_atomic(path, t.csv());
        written.push_back(path);
    }
    return written;
}

std::vector<std::filesystem::path> write_outputs(const RunReport& report, const std::filesystem::path& dir) {
    std::vector<std::filesystem::path> written;
    for (const auto& [stem, table] : report.tables) {
        if (stem.rfind("plot_", 0) == 0) continue;
        const auto path = dir / (stem + ".csv");
        write_atomic(path, table.csv());
        written.push_back(path);
    }
    for (auto& p : emit_plot_data(report, dir)) written.push_back(std::move(p));
    write_atomic(dir / "report.json", report.to_json().dump(2) + "\n");
    written.push_back(dir / "report.json");
    write_atomic(dir / "timing.json", Json{{"wall_seconds", report.wall_seconds}, {"jobs", report.jobs},
                                                      {"output", dir.generic_string()}}.dump(2) + "\n");
    written.push_back(dir / "timing.json");
    return written;
}

}  // namespace torusdyn::runner
