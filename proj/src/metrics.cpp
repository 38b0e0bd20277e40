#include "snapnav/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "snapnav/common.hpp"

namespace snapnav {

using nlohmann::json;

MetricReport compute_metrics(std::span<const RunRecord> records) {
    if (records.empty()) throw Error("compute_metrics: no records");
    MetricReport m;
    double successes = 0.0, tl = 0.0, ne = 0.0, spl = 0.0;
    for (const auto& r : records) {
        if (!(r.optimal_length > 0.0)) throw Error("record " + r.episode_id + " has a non-positive optimal length");
        const double s = r.success ? 1.0 : 0.0;
        successes += s;
        tl += r.path_length;
        ne += r.final_distance;
        if (r.success) spl += r.optimal_length / std::max(r.optimal_length, r.path_length);
        auto& scene = m.per_scene[r.scene_id];
        ++scene.episodes;
        scene.successes += r.success ? 1 : 0;
    }
    const double n = static_cast<double>(records.size());
    m.episodes = static_cast<int>(records.size());
    m.sr = 100.0 * successes / n;
    m.tl = tl / n;
    m.ne = ne / n;
    m.spl = 100.0 * spl / n;
    return m;
}

json metrics_to_json(const MetricReport& m) {
    json scenes = json::object();
    for (const auto& [id, s] : m.per_scene) scenes[id] = {{"episodes", s.episodes}, {"successes", s.successes}};
    return {{"sr", m.sr}, {"tl", m.tl}, {"ne", m.ne}, {"spl", m.spl}, {"episodes", m.episodes}, {"per_scene", scenes}};
}

namespace {

std::map<std::string, bool> outcomes(std::span<const RunRecord> records, const char* what) {
    std::map<std::string, bool> out;
    for (const auto& r : records) {
        if (!out.emplace(r.episode_id, r.success).second)
            throw Error(std::string(what) + ": episode " + r.episode_id + " appears twice");
    }
    return out;
}

void require_same_episodes(const std::map<std::string, bool>& a, const std::map<std::string, bool>& b,
                           const char* what) {
    if (a.size() != b.size()) throw Error(std::string(what) + ": runs cover different episode sets");
    for (auto ia = a.begin(), ib = b.begin(); ia != a.end(); ++ia, ++ib) {
        if (ia->first != ib->first)
            throw Error(std::string(what) + ": runs cover different episode sets (" + ia->first + " vs " + ib->first +
                        ")");
    }
}

}  // namespace

DisagreementCounts disagreement(std::span<const RunRecord> a, std::span<const RunRecord> b) {
    const auto oa = outcomes(a, "disagreement");
    const auto ob = outcomes(b, "disagreement");
    require_same_episodes(oa, ob, "disagreement");
    DisagreementCounts c;
    for (const auto& [id, sa] : oa) {
        const bool sb = ob.at(id);
        if (sa && sb) ++c.both_succeed;
        else if (sa) ++c.only_a;
        else if (sb) ++c.only_b;
        else ++c.both_fail;
    }
    return c;
}

int VennCounts::total() const {
    int t = 0;
    for (int v : regions) t += v;
    return t;
}

VennCounts venn3(std::span<const RunRecord> r1, std::span<const RunRecord> r2, std::span<const RunRecord> r3) {
    const auto o1 = outcomes(r1, "venn3");
    const auto o2 = outcomes(r2, "venn3");
    const auto o3 = outcomes(r3, "venn3");
    require_same_episodes(o1, o2, "venn3");
    require_same_episodes(o1, o3, "venn3");
    VennCounts v;
    for (const auto& [id, s1] : o1) {
        const int mask = (s1 ? 0 : 1) | (o2.at(id) ? 0 : 2) | (o3.at(id) ? 0 : 4);
        ++v.regions[static_cast<std::size_t>(mask)];
    }
    return v;
}

LongNavStats long_nav_stats(std::span<const RunRecord> records, int threshold) {
    LongNavStats s;
    for (const auto& r : records) {
        if (r.action_count < threshold) continue;
        ++s.count;
        if (!r.success) ++s.failures;
    }
    s.failure_pct = s.count ? 100.0 * s.failures / s.count : 0.0;
    return s;
}

SceneTable per_scene_success(const std::vector<std::span<const RunRecord>>& runs, const std::vector<std::string>& names,
                             const Dataset& data) {
    if (runs.size() != names.size()) throw Error("per_scene_success: one name per run required");
    std::map<std::string, std::vector<int>> table;
    for (const auto& scene : data.scenes) table[scene.scene_id()].assign(runs.size(), 0);
    std::set<std::string> used;
    for (std::size_t c = 0; c < runs.size(); ++c) {
        for (const auto& r : runs[c]) {
            const std::string& scene = data.episode(r.episode_id).scene_id;
            used.insert(scene);
            if (r.success) ++table[scene][c];
        }
    }
    SceneTable t;
    t.columns = names;
    for (const auto& [scene, counts] : table) {
        if (!used.count(scene)) continue;
        t.scenes.push_back(scene);
        t.counts.push_back(counts);
    }
    return t;
}

std::string to_string(AttentionClass c) {
    switch (c) {
        case AttentionClass::current: return "current";
        case AttentionClass::next: return "next";
        case AttentionClass::other: return "other";
    }
    return "other";
}

AttentionSummary summarize_attention(std::span<const AttentionRow> rows) {
    AttentionSummary s;
    std::array<double, 3> sum{};
    for (const auto& r : rows) {
        const auto k = static_cast<std::size_t>(r.cls);
        sum[k] += r.value;
        ++s.count[k];
    }
    for (std::size_t k = 0; k < 3; ++k) s.mean[k] = s.count[k] ? sum[k] / static_cast<double>(s.count[k]) : 0.0;
    return s;
}

AttentionExport export_attention(std::span<const RunRecord> records) {
    AttentionExport e;
    for (const auto& r : records) {
        bool any = false;
        for (std::size_t k = 0; k < r.steps.size(); ++k) {
            const auto& step = r.steps[k];
            if (!step.attention || !step.attention_target) continue;
            any = true;
            const Mat& x = *step.attention;
            const Mat& g = *step.attention_target;
            for (Eigen::Index i = 0; i < x.rows(); ++i) {
                for (Eigen::Index j = 0; j < x.cols(); ++j) {
                    AttentionRow row;
                    row.episode_id = r.episode_id;
                    row.step = static_cast<int>(k) + 1;
                    row.row = static_cast<int>(i);
                    row.word = static_cast<int>(j);
                    row.token = static_cast<std::size_t>(j) < r.instruction.size() ? r.instruction[j] : -1;
                    row.value = std::tanh(x(i, j));
                    const double target = g(i, j);
                    row.cls = target == 1.0 ? AttentionClass::current
                              : target == 0.5 ? AttentionClass::next
                                              : AttentionClass::other;
                    e.rows.push_back(std::move(row));
                }
            }
        }
        if (!any) ++e.skipped_records;
    }
    e.summary = summarize_attention(e.rows);
    return e;
}

std::vector<ScoreRow> export_score_table(std::span<const RunRecord> records) {
    std::vector<ScoreRow> rows;
    for (const auto& r : records) {
        for (std::size_t k = 0; k < r.steps.size(); ++k) {
            const auto& step = r.steps[k];
            for (std::size_t m = 0; m < step.member_scores.size(); ++m) {
                const auto& scores = step.member_scores[m];
                for (std::size_t a = 0; a < scores.size(); ++a) {
                    ScoreRow row;
                    row.episode_id = r.episode_id;
                    row.step = static_cast<int>(k) + 1;
                    row.member = m < r.members.size() ? r.members[m] : std::to_string(m);
                    row.action = static_cast<int>(a);
                    row.score = scores[a];
                    row.fused = a < step.fused.size() ? step.fused[a] : 0.0;
                    row.taken = a == step.action;
                    rows.push_back(std::move(row));
                }
            }
        }
    }
    return rows;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    return out;
}

}  // namespace

void write_attention_csv(const AttentionExport& e, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "episode_id,step,row,word,token,tanh_attention,class\n";
    char buf[64];
    for (const auto& r : e.rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", r.value);
        out << r.episode_id << ',' << r.step << ',' << r.row << ',' << r.word << ',' << r.token << ',' << buf << ','
            << to_string(r.cls) << '\n';
    }
}

void write_score_csv(std::span<const ScoreRow> rows, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "episode_id,step,member,action,score,fused,taken\n";
    char a[64], b[64];
    for (const auto& r : rows) {
        std::snprintf(a, sizeof(a), "%.17g", r.score);
        std::snprintf(b, sizeof(b), "%.17g", r.fused);
        out << r.episode_id << ',' << r.step << ',' << r.member << ',' << r.action << ',' << a << ',' << b << ','
            << (r.taken ? 1 : 0) << '\n';
    }
}

std::string format_metrics_table(const std::vector<std::pair<std::string, MetricReport>>& rows) {
    std::size_t width = 4;
    for (const auto& [name, m] : rows) width = std::max(width, name.size());
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-*s %8s %8s %8s %8s %8s\n", static_cast<int>(width), "name", "TL", "NE", "SR", "SPL",
                  "N");
    out << buf;
    for (const auto& [name, m] : rows) {
        std::snprintf(buf, sizeof(buf), "%-*s %8.2f %8.2f %8.2f %8.2f %8d\n", static_cast<int>(width), name.c_str(), m.tl,
                      m.ne, m.sr, m.spl, m.episodes);
        out << buf;
    }
    return out.str();
}

std::string format_scene_table(const SceneTable& t) {
    std::ostringstream out;
    out << "scene";
    for (const auto& c : t.columns) out << '\t' << c;
    out << '\n';
    for (std::size_t s = 0; s < t.scenes.size(); ++s) {
        out << t.scenes[s];
        for (int v : t.counts[s]) out << '\t' << v;
        out << '\n';
    }
    return out.str();
}

}  // namespace snapnav
