#include <fstream>

#include "snapnav/common.hpp"
#include "snapnav/metrics.hpp"

namespace snapnav {

using nlohmann::json;

namespace {

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& j) {
    const auto rows = static_cast<Eigen::Index>(j.size());
    const auto cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        if (static_cast<Eigen::Index>(j[i].size()) != cols) throw Error("ragged matrix in record");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = j[i][c].get<double>();
    }
    return m;
}

}  // namespace

json record_to_json(const RunRecord& r) {
    json steps = json::array();
    for (const auto& s : r.steps) {
        json step = {{"action", s.action}, {"member_scores", s.member_scores}, {"fused", s.fused}};
        if (s.attention) step["attention"] = mat_to_json(*s.attention);
        if (s.attention_target) step["attention_target"] = mat_to_json(*s.attention_target);
        steps.push_back(std::move(step));
    }
    json j = {{"episode_id", r.episode_id},
              {"scene_id", r.scene_id},
              {"members", r.members},
              {"trajectory", r.trajectory},
              {"action_count", r.action_count},
              {"success", r.success},
              {"forced_stop", r.forced_stop},
              {"final_distance", r.final_distance},
              {"path_length", r.path_length},
              {"optimal_length", r.optimal_length},
              {"steps", steps}};
    if (!r.instruction.empty()) j["instruction"] = r.instruction;
    return j;
}

RunRecord record_from_json(const json& j) {
    RunRecord r;
    r.episode_id = j.at("episode_id").get<std::string>();
    r.scene_id = j.at("scene_id").get<std::string>();
    r.members = j.at("members").get<std::vector<std::string>>();
    r.trajectory = j.at("trajectory").get<std::vector<ViewpointId>>();
    r.action_count = j.at("action_count").get<int>();
    r.success = j.at("success").get<bool>();
    r.forced_stop = j.value("forced_stop", false);
    r.final_distance = j.at("final_distance").get<double>();
    r.path_length = j.at("path_length").get<double>();
    r.optimal_length = j.at("optimal_length").get<double>();
    if (j.contains("instruction")) r.instruction = j["instruction"].get<std::vector<TokenId>>();
    for (const auto& s : j.value("steps", json::array())) {
        StepRecord step;
        step.action = s.at("action").get<std::size_t>();
        step.member_scores = s.value("member_scores", std::vector<std::vector<double>>{});
        step.fused = s.value("fused", std::vector<double>{});
        if (s.contains("attention")) step.attention = mat_from_json(s["attention"]);
        if (s.contains("attention_target")) step.attention_target = mat_from_json(s["attention_target"]);
        r.steps.push_back(std::move(step));
    }
    return r;
}

void write_records_jsonl(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

std::vector<RunRecord> read_records_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<RunRecord> out;
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (line.empty()) continue;
        try {
            out.push_back(record_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace snapnav
