#include "modfactory/mixture.hpp"

#include "modfactory/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <fstream>
#include <sstream>

namespace modfactory::mixture {

using nlohmann::json;

Strategy strategy_from_string(const std::string& s) {
    if (s == "caption_only") return Strategy::caption_only;
    if (s == "mix_all") return Strategy::mix_all;
    if (s == "two_stage") return Strategy::two_stage;
    throw ConfigError("unknown strategy: " + s);
}

const char* to_string(Strategy s) {
    switch (s) {
        case Strategy::caption_only: return "caption_only";
        case Strategy::mix_all: return "mix_all";
        default: return "two_stage";
    }
}

const char* to_string(Component c) {
    switch (c) {
        case Component::language_model: return "language_model";
        case Component::vision_encoder: return "vision_encoder";
        default: return "projector";
    }
}

const char* to_string(Selection s) {
    return s == Selection::last ? "last" : "best_by_validation";
}

namespace {

Stage caption_stage() {
    Stage s;
    s.stage_id = "caption";
    s.task_filter = {TaskKind::caption};
    // the language model stays frozen in the caption phase
    s.trainable_components = {Component::vision_encoder, Component::projector};
    s.dataset_ref = "caption.manifest.json";
    s.epochs = 1;
    // checkpoint choice matches the two-stage recipe so the caption stage is
    // the same object in both plans
    s.selection = Selection::best_by_validation;
    return s;
}

Stage mix_stage() {
    Stage s;
    s.stage_id = "mix";
    s.task_filter = {TaskKind::caption, TaskKind::vqa_binary, TaskKind::vqa_multi,
                     TaskKind::cot};
    s.trainable_components = {Component::language_model, Component::vision_encoder,
                              Component::projector};
    s.dataset_ref = "mix.manifest.json";
    s.epochs = 1;
    s.selection = Selection::last;
    return s;
}

}  // namespace

StagePlan build_stage_plan(Strategy strategy) {
    StagePlan plan;
    plan.strategy = strategy;
    switch (strategy) {
        case Strategy::caption_only:
            plan.stages = {caption_stage()};
            break;
        case Strategy::mix_all:
            plan.stages = {mix_stage()};
            break;
        case Strategy::two_stage:
            plan.stages = {caption_stage(), mix_stage()};
            break;
    }
    return plan;
}

std::string StagePlan::to_json() const {
    json j;
    j["strategy"] = mixture::to_string(strategy);
    json stages_json = json::array();
    for (const auto& s : stages) {
        json sj;
        sj["stage_id"] = s.stage_id;
        json tasks = json::array();
        for (TaskKind t : s.task_filter) tasks.push_back(modfactory::to_string(t));
        sj["task_filter"] = tasks;
        json comps = json::array();
        for (Component c : s.trainable_components)
            comps.push_back(mixture::to_string(c));
        sj["trainable_components"] = comps;
        sj["dataset_ref"] = s.dataset_ref;
        sj["epochs"] = s.epochs;
        sj["selection"] = mixture::to_string(s.selection);
        if (s.selection == Selection::best_by_validation)
            sj["validation_metric"] = s.validation_metric;
        stages_json.push_back(sj);
    }
    j["stages"] = stages_json;
    return j.dump(2);
}

std::string manifest_checksum(const std::vector<ManifestEntry>& entries) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& e : entries) {
        h = fnv1a64(e.sample_id, h);
        h = fnv1a64("\n", h);
    }
    return to_hex(h);
}

MixtureManifest pack_mixture(const std::vector<PackInput>& samples,
                             const Stage& stage, std::uint64_t seed) {
    std::vector<std::size_t> eligible;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i].sample;
        if (s.filtered) continue;
        if (!stage.task_filter.count(s.task)) continue;
        eligible.push_back(i);
    }
    if (eligible.empty())
        throw EmptyMixture("no unfiltered samples match stage '" + stage.stage_id +
                           "'");

    // stable base order, then one seeded Fisher-Yates pass
    std::sort(eligible.begin(), eligible.end(), [&](std::size_t a, std::size_t b) {
        return samples[a].sample.sample_id < samples[b].sample.sample_id;
    });
    Rng rng(seed);
    rng.shuffle(eligible);

    MixtureManifest manifest;
    manifest.stage_id = stage.stage_id;
    manifest.seed = seed;
    for (std::size_t i : eligible) {
        const auto& s = samples[i].sample;
        manifest.entries.push_back({s.sample_id, samples[i].file_offset});
        ++manifest.counts[{s.issue_id, modfactory::to_string(s.task)}];
    }
    manifest.checksum = manifest_checksum(manifest.entries);
    return manifest;
}

MixtureSummary summarize_mixture(const MixtureManifest& manifest,
                                 std::optional<std::int64_t> reference_total,
                                 bool allow_empty) {
    if (manifest.checksum != manifest_checksum(manifest.entries))
        throw ChecksumMismatch("manifest checksum does not match its entry list");
    std::int64_t total = 0;
    for (const auto& [_, c] : manifest.counts) total += c;
    if (total != static_cast<std::int64_t>(manifest.entries.size()))
        throw ChecksumMismatch("manifest counts do not sum to its entry count");
    if (manifest.entries.empty() && !allow_empty)
        throw ChecksumMismatch("manifest is empty");

    MixtureSummary summary;
    summary.counts = manifest.counts;
    summary.grand_total = total;
    if (reference_total) {
        summary.reference_total = reference_total;
        summary.reference_delta = total - *reference_total;
    }
    return summary;
}

namespace {

json counts_to_json(
    const std::map<std::pair<std::string, std::string>, std::int64_t>& counts) {
    json out = json::object();
    for (const auto& [key, count] : counts) out[key.first][key.second] = count;
    return out;
}

std::map<std::pair<std::string, std::string>, std::int64_t> counts_from_json(
    const json& j) {
    std::map<std::pair<std::string, std::string>, std::int64_t> counts;
    for (const auto& [issue, tasks] : j.items())
        for (const auto& [task, count] : tasks.items())
            counts[{issue, task}] = count.get<std::int64_t>();
    return counts;
}

}  // namespace

std::string MixtureManifest::to_json() const {
    json j;
    j["strategy"] = strategy;
    j["stage_id"] = stage_id;
    j["seed"] = seed;
    j["counts"] = counts_to_json(counts);
    j["checksum"] = checksum;
    json entries_json = json::array();
    for (const auto& e : entries)
        entries_json.push_back({{"sample_id", e.sample_id},
                                {"file_offset", e.file_offset}});
    j["entries"] = entries_json;
    return j.dump();
}

MixtureManifest MixtureManifest::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed manifest: ") + e.what());
    }
    MixtureManifest m;
    m.strategy = j.value("strategy", "");
    m.stage_id = j.value("stage_id", "");
    m.seed = j.value("seed", 0ULL);
    m.counts = counts_from_json(j.value("counts", json::object()));
    m.checksum = j.value("checksum", "");
    for (const auto& e : j.value("entries", json::array()))
        m.entries.push_back({e.at("sample_id").get<std::string>(),
                             e.value("file_offset", 0ULL)});
    return m;
}

MixtureManifest MixtureManifest::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open manifest: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

void MixtureManifest::store(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out << to_json() << "\n";
    if (!out) throw IoError("write failed: " + path);
}

std::string MixtureSummary::to_json() const {
    json j;
    j["counts"] = counts_to_json(counts);
    j["grand_total"] = grand_total;
    if (reference_total) {
        j["reference_total"] = *reference_total;
        j["reference_delta"] = *reference_delta;
    }
    return j.dump(2);
}

}  // namespace modfactory::mixture
