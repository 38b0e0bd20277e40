#include "snapnav/dataset_io.hpp"

#include <fstream>
#include <sstream>

#include "snapnav/common.hpp"

namespace snapnav {

using nlohmann::json;

namespace {

constexpr int kDatasetFormatVersion = 1;

json scene_to_json(const SceneGraph& scene) {
    json vps = json::array();
    for (const auto& vp : scene.viewpoints()) {
        json cands = json::array();
        for (const auto& [to, feature] : vp.candidate_features) cands.push_back({{"to", to}, {"feature", feature}});
        vps.push_back({{"id", vp.id},
                       {"position", {vp.position.x(), vp.position.y()}},
                       {"landmark", vp.landmark},
                       {"candidates", std::move(cands)}});
    }
    json edges = json::array();
    for (auto [a, b] : scene.edges()) edges.push_back({a, b});
    return {{"scene_id", scene.scene_id()}, {"viewpoints", std::move(vps)}, {"edges", std::move(edges)}};
}

SceneGraph scene_from_json(const json& j) {
    std::vector<Viewpoint> vps;
    for (const auto& jv : j.at("viewpoints")) {
        Viewpoint vp;
        vp.id = jv.at("id").get<ViewpointId>();
        const auto& pos = jv.at("position");
        if (pos.size() != 2) throw Error("viewpoint position must have 2 coordinates");
        vp.position = Eigen::Vector2d(pos[0].get<double>(), pos[1].get<double>());
        vp.landmark = jv.value("landmark", 0);
        for (const auto& jc : jv.at("candidates"))
            vp.candidate_features[jc.at("to").get<ViewpointId>()] = jc.at("feature").get<std::vector<double>>();
        vps.push_back(std::move(vp));
    }
    std::set<std::pair<ViewpointId, ViewpointId>> edges;
    for (const auto& je : j.at("edges")) {
        if (je.size() != 2) throw Error("edge must have 2 endpoints");
        edges.emplace(je[0].get<ViewpointId>(), je[1].get<ViewpointId>());
    }
    return SceneGraph(j.at("scene_id").get<std::string>(), std::move(vps), std::move(edges));
}

json episode_to_json(const Episode& ep) {
    json subs = json::array();
    for (const auto& s : ep.sub_instructions)
        subs.push_back({{"tokens", {s.token_begin, s.token_end}}, {"viewpoints", s.viewpoints}});
    return {{"episode_id", ep.episode_id}, {"scene_id", ep.scene_id},   {"instruction", ep.instruction},
            {"sub_instructions", subs},    {"path", ep.path}};
}

Episode episode_from_json(const json& j, Split split) {
    Episode ep;
    ep.episode_id = j.at("episode_id").get<std::string>();
    ep.scene_id = j.at("scene_id").get<std::string>();
    ep.instruction = j.at("instruction").get<std::vector<TokenId>>();
    ep.path = j.at("path").get<std::vector<ViewpointId>>();
    ep.split = split;
    for (const auto& js : j.at("sub_instructions")) {
        SubInstruction sub;
        const auto& range = js.at("tokens");
        if (range.size() != 2) throw Error("sub-instruction token range must have 2 entries");
        sub.token_begin = range[0].get<int>();
        sub.token_end = range[1].get<int>();
        sub.viewpoints = js.at("viewpoints").get<std::vector<ViewpointId>>();
        ep.sub_instructions.push_back(std::move(sub));
    }
    return ep;
}

}  // namespace

json scenes_to_json(const Dataset& data) {
    json scenes = json::array();
    for (const auto& s : data.scenes) scenes.push_back(scene_to_json(s));
    return {{"format", "snapnav-scenes"},
            {"version", kDatasetFormatVersion},
            {"vocab_size", data.vocab_size},
            {"scenes", std::move(scenes)}};
}

json episodes_to_json(const Dataset& data, Split split) {
    json eps = json::array();
    for (const auto& ep : data.split(split)) eps.push_back(episode_to_json(ep));
    return {{"format", "snapnav-episodes"},
            {"version", kDatasetFormatVersion},
            {"split", to_string(split)},
            {"episodes", std::move(eps)}};
}

std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return json::parse(in, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::exception& e) {
        throw Error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "scenes.json", dump_json(scenes_to_json(data)));
    for (Split s : kAllSplits) write_text_file(dir / ("episodes_" + to_string(s) + ".json"), dump_json(episodes_to_json(data, s)));
}

Dataset load_dataset(const std::filesystem::path& dir) {
    Dataset data;
    try {
        const json scenes = read_json_file(dir / "scenes.json");
        if (scenes.at("format") != "snapnav-scenes" || scenes.at("version") != kDatasetFormatVersion)
            throw Error("scenes.json: unsupported format or version");
        data.vocab_size = scenes.at("vocab_size").get<int>();
        for (const auto& js : scenes.at("scenes")) data.scenes.push_back(scene_from_json(js));
        for (Split s : kAllSplits) {
            const auto path = dir / ("episodes_" + to_string(s) + ".json");
            if (!std::filesystem::exists(path)) continue;
            const json eps = read_json_file(path);
            if (eps.at("format") != "snapnav-episodes" || eps.at("version") != kDatasetFormatVersion)
                throw Error(path.filename().string() + ": unsupported format or version");
            auto& list = data.episodes[s];
            for (const auto& je : eps.at("episodes")) {
                Episode ep = episode_from_json(je, s);
                validate_episode(ep, data.scene(ep.scene_id));
                for (TokenId tok : ep.instruction) {
                    if (tok < kStopWord || tok >= data.vocab_size)
                        throw Error("episode " + ep.episode_id + ": token " + std::to_string(tok) +
                                    " is reserved or outside the vocabulary");
                }
                list.push_back(std::move(ep));
            }
        }
    } catch (const json::exception& e) {
        throw Error("dataset " + dir.string() + ": " + e.what());
    }
    return data;
}

#define SNAPNAV_GEN_FIELDS(X)                                                                                      \
    X(train_scenes) X(val_unseen_scenes) X(test_scenes) X(train_episodes) X(val_seen_episodes)                     \
    X(val_unseen_episodes) X(test_episodes) X(viewpoints_per_scene) X(grid_columns) X(spacing) X(jitter)           \
    X(mean_degree) X(min_path_edges) X(max_path_edges) X(landmark_count) X(direction_words) X(vocab_size)          \
    X(tokens_per_sub_instruction) X(feature_dim) X(feature_noise) X(max_retries)

json generator_config_to_json(const GeneratorConfig& c) {
    json j;
#define X(name) j[#name] = c.name;
    SNAPNAV_GEN_FIELDS(X)
#undef X
    return j;
}

GeneratorConfig generator_config_from_json(const json& j) {
    GeneratorConfig c;
    for (const auto& [key, value] : j.items()) {
        bool known = false;
#define X(name)                                            \
    if (key == #name) {                                    \
        c.name = value.get<decltype(GeneratorConfig::name)>(); \
        known = true;                                      \
    }
        SNAPNAV_GEN_FIELDS(X)
#undef X
        if (!known) throw Error("generator config: unknown key '" + key + "'");
    }
    return c;
}

}  // namespace snapnav
