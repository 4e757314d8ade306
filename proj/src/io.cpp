#include "longit/io.hpp"

#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

namespace longit {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

}  // namespace

void write_dataset_csv(const LongitudinalDataset& ds, const std::string& csv_path,
                       const std::string& sidecar_path) {
    std::set<std::string> baseline_cols;
    for (const auto& subj : ds.subjects) {
        for (const auto& [k, v] : subj.baseline) baseline_cols.insert(k);
    }

    std::ofstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open for writing: " + csv_path);
    csv << std::setprecision(17);
    csv << "subject_id,visit_index,time,y,r,s";
    for (const auto& c : baseline_cols) csv << ',' << c;
    csv << '\n';
    for (const auto& subj : ds.subjects) {
        for (int j = 0; j < subj.n_visits(); ++j) {
            csv << subj.id << ',' << j << ',' << subj.visit_times[j] << ',' << subj.y[j] << ',';
            if (j < static_cast<int>(subj.r.size())) csv << subj.r[j];
            csv << ',';
            if (j < static_cast<int>(subj.s.size())) csv << subj.s[j];
            for (const auto& c : baseline_cols) {
                csv << ',';
                auto it = subj.baseline.find(c);
                if (it != subj.baseline.end()) csv << it->second;
            }
            csv << '\n';
        }
    }
    if (!csv) throw std::runtime_error("write failed: " + csv_path);

    nlohmann::json side;
    side["tau"] = ds.tau;
    side["time_unit"] = ds.time_unit;
    nlohmann::json usums = nlohmann::json::object();
    for (const auto& subj : ds.subjects) {
        if (subj.u_sum) usums[std::to_string(subj.id)] = *subj.u_sum;
    }
    if (!usums.empty()) side["u_sum"] = usums;
    std::ofstream sj(sidecar_path);
    if (!sj) throw std::runtime_error("cannot open for writing: " + sidecar_path);
    sj << side.dump(2) << '\n';
}

LongitudinalDataset read_dataset_csv(const std::string& csv_path, const std::string& sidecar_path) {
    std::ifstream sj(sidecar_path);
    if (!sj) throw std::runtime_error("cannot open: " + sidecar_path);
    nlohmann::json side = nlohmann::json::parse(sj);
    LongitudinalDataset ds;
    ds.tau = side.at("tau").get<double>();
    ds.time_unit = side.value("time_unit", std::string("years"));

    std::ifstream csv(csv_path);
    if (!csv) throw std::runtime_error("cannot open: " + csv_path);
    std::string line;
    if (!std::getline(csv, line)) throw std::runtime_error("empty CSV: " + csv_path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_csv_line(line);
    const std::vector<std::string> required = {"subject_id", "visit_index", "time", "y", "r", "s"};
    std::map<std::string, int> col;
    for (std::size_t k = 0; k < header.size(); ++k) col[header[k]] = static_cast<int>(k);
    for (const auto& name : required) {
        if (!col.count(name)) throw std::runtime_error("CSV missing column: " + name);
    }
    std::vector<std::string> baseline_cols;
    for (const auto& name : header) {
        bool is_req = false;
        for (const auto& r : required) is_req = is_req || r == name;
        if (!is_req) baseline_cols.push_back(name);
    }

    std::map<int, SubjectRecord> by_id;
    std::vector<int> order;
    int line_no = 1;
    while (std::getline(csv, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() < header.size()) {
            throw std::runtime_error("CSV line " + std::to_string(line_no) + ": too few fields");
        }
        auto cell = [&](const std::string& name) -> const std::string& {
            return cells[col.at(name)];
        };
        const int id = std::stoi(cell("subject_id"));
        auto [it, inserted] = by_id.try_emplace(id);
        if (inserted) {
            it->second.id = id;
            order.push_back(id);
        }
        SubjectRecord& subj = it->second;
        subj.visit_times.push_back(std::stod(cell("time")));
        subj.y.push_back(std::stod(cell("y")));
        if (!cell("r").empty()) subj.r.push_back(std::stod(cell("r")));
        if (!cell("s").empty()) subj.s.push_back(std::stod(cell("s")));
        for (const auto& c : baseline_cols) {
            const std::string& v = cells[col.at(c)];
            if (!v.empty()) subj.baseline[c] = std::stod(v);
        }
    }
    for (int id : order) ds.subjects.push_back(std::move(by_id.at(id)));

    if (side.contains("u_sum")) {
        for (auto& subj : ds.subjects) {
            const std::string key = std::to_string(subj.id);
            if (side["u_sum"].contains(key)) subj.u_sum = side["u_sum"][key].get<double>();
        }
    }
    return ds;
}

}  // namespace longit
