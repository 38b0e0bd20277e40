#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "snapnav/navsim.hpp"
#include "snapnav/policy.hpp"

namespace snapnav {

struct StepRecord {
    std::vector<std::vector<double>> member_scores;  // member order of RunRecord::members
    std::vector<double> fused;
    std::size_t action = 0;
    // Cls->word attention logits of the first member that exposes them, with
    // the matching alignment targets (same shape).
    std::optional<Mat> attention;
    std::optional<Mat> attention_target;
};

struct RunRecord {
    std::string episode_id;
    std::string scene_id;
    std::vector<std::string> members;
    std::vector<ViewpointId> trajectory;
    int action_count = 0;
    bool success = false;
    bool forced_stop = false;
    double final_distance = 0.0;
    double path_length = 0.0;
    double optimal_length = 0.0;
    std::vector<TokenId> instruction;
    std::vector<StepRecord> steps;
};

nlohmann::json record_to_json(const RunRecord& r);
RunRecord record_from_json(const nlohmann::json& j);
void write_records_jsonl(const std::vector<RunRecord>& records, const std::filesystem::path& path);
std::vector<RunRecord> read_records_jsonl(const std::filesystem::path& path);

struct SceneMetrics {
    int episodes = 0;
    int successes = 0;
};

struct MetricReport {
    double sr = 0.0;   // %
    double tl = 0.0;   // meters
    double ne = 0.0;   // meters
    double spl = 0.0;  // %
    int episodes = 0;
    std::map<std::string, SceneMetrics> per_scene;
};

/// Throws snapnav::Error on an empty record set.
MetricReport compute_metrics(std::span<const RunRecord> records);
nlohmann::json metrics_to_json(const MetricReport& m);

struct DisagreementCounts {
    int both_succeed = 0;
    int only_a = 0;
    int only_b = 0;
    int both_fail = 0;
    int different() const { return only_a + only_b; }
    int total() const { return both_succeed + only_a + only_b + both_fail; }
};

/// Throws snapnav::Error unless both runs cover the same episode ids.
DisagreementCounts disagreement(std::span<const RunRecord> a, std::span<const RunRecord> b);

/// regions[mask] counts episodes failed by exactly the runs in mask
/// (bit 0 run 1, bit 1 run 2, bit 2 run 3); regions[0] is the all-succeed count.
struct VennCounts {
    std::array<int, 8> regions{};
    int total() const;
};
VennCounts venn3(std::span<const RunRecord> r1, std::span<const RunRecord> r2, std::span<const RunRecord> r3);

struct LongNavStats {
    int count = 0;
    int failures = 0;
    double failure_pct = 0.0;
};
LongNavStats long_nav_stats(std::span<const RunRecord> records, int threshold = 15);

struct SceneTable {
    std::vector<std::string> columns;
    std::vector<std::string> scenes;                 // sorted
    std::vector<std::vector<int>> counts;            // [scene][column]
};
/// Success counts per scene, one column per run. Scenes are resolved through
/// the dataset; an unknown episode id throws snapnav::Error.
SceneTable per_scene_success(const std::vector<std::span<const RunRecord>>& runs, const std::vector<std::string>& names,
                             const Dataset& data);

enum class AttentionClass { current, next, other };
std::string to_string(AttentionClass c);

struct AttentionRow {
    std::string episode_id;
    int step = 0;  // 1-based step
    int row = 0;   // 0 = oldest history entry, last = current cls
    int word = 0;  // 0-based instruction word
    TokenId token = 0;
    double value = 0.0;  // tanh of the logit
    AttentionClass cls = AttentionClass::other;
};

struct AttentionSummary {
    std::array<double, 3> mean{};  // indexed by AttentionClass
    std::array<long, 3> count{};
};

struct AttentionExport {
    std::vector<AttentionRow> rows;
    AttentionSummary summary;
    int skipped_records = 0;
};
/// Records without attention rows are skipped and counted.
AttentionExport export_attention(std::span<const RunRecord> records);
AttentionSummary summarize_attention(std::span<const AttentionRow> rows);

struct ScoreRow {
    std::string episode_id;
    int step = 0;
    std::string member;
    int action = 0;
    double score = 0.0;
    double fused = 0.0;
    bool taken = false;
};
std::vector<ScoreRow> export_score_table(std::span<const RunRecord> records);

void write_attention_csv(const AttentionExport& e, const std::filesystem::path& path);
void write_score_csv(std::span<const ScoreRow> rows, const std::filesystem::path& path);

// Human-readable tables.
std::string format_metrics_table(const std::vector<std::pair<std::string, MetricReport>>& rows);
std::string format_scene_table(const SceneTable& t);

}  // namespace snapnav
