#include <doctest.h>

#include "modfactory/mixture.hpp"
#include "test_helpers.hpp"

#include <algorithm>
#include <cstdio>

using namespace modfactory;
using namespace modfactory::mixture;
using testing_helpers::load_default_guidelines;

namespace {

std::vector<PackInput> toy_samples(int n, TaskKind task = TaskKind::caption) {
    std::vector<PackInput> out;
    for (int i = 0; i < n; ++i) {
        datagen::InstructionSample s;
        s.sample_id = datagen::make_sample_id("v" + std::to_string(i), "ssc", task);
        s.video_id = "v" + std::to_string(i);
        s.issue_id = "ssc";
        s.task = task;
        out.push_back({std::move(s), static_cast<std::uint64_t>(i * 100)});
    }
    return out;
}

std::vector<PackInput> generated_samples(int pos, int neg, std::uint64_t seed,
                                         double flip_rate = 0.0) {
    auto guidelines = load_default_guidelines();
    auto records = corpus::generate_synthetic_corpus(
        guidelines, testing_helpers::desk_spec(pos, neg, seed));
    annotator::MockAnnotatorConfig cfg;
    cfg.flip_rate = flip_rate;
    annotator::MockAnnotator mock(cfg, guidelines, records);
    datagen::GenerationConfig gen;
    auto result = datagen::generate_all(records, guidelines, mock,
                                        datagen::TemplateSet::defaults(), gen,
                                        {"mock", "1970-01-01T00:00:00Z", "1"});
    datagen::consistency_filter(result.samples, records);
    std::vector<PackInput> inputs;
    std::uint64_t offset = 0;
    for (auto& s : result.samples) {
        inputs.push_back({std::move(s), offset});
        offset += 200;
    }
    return inputs;
}

}  // namespace

TEST_CASE("stage plans encode the three training recipes") {
    auto caption_only = build_stage_plan(Strategy::caption_only);
    REQUIRE(caption_only.stages.size() == 1);
    const Stage& cap = caption_only.stages[0];
    CHECK(cap.task_filter == std::set<TaskKind>{TaskKind::caption});
    CHECK(cap.trainable_components ==
          std::set<Component>{Component::vision_encoder, Component::projector});
    CHECK(cap.trainable_components.count(Component::language_model) == 0);

    auto mix_all = build_stage_plan(Strategy::mix_all);
    REQUIRE(mix_all.stages.size() == 1);
    const Stage& mix = mix_all.stages[0];
    CHECK(mix.task_filter ==
          std::set<TaskKind>{TaskKind::caption, TaskKind::vqa_binary,
                             TaskKind::vqa_multi, TaskKind::cot});
    CHECK(mix.trainable_components ==
          std::set<Component>{Component::language_model, Component::vision_encoder,
                              Component::projector});
    CHECK(mix.selection == Selection::last);

    auto two_stage = build_stage_plan(Strategy::two_stage);
    REQUIRE(two_stage.stages.size() == 2);
    // the first phase of the curriculum is exactly the caption-only recipe
    CHECK(two_stage.stages[0] == cap);
    CHECK(two_stage.stages[1] == mix);
    CHECK(two_stage.stages[0].stage_id != two_stage.stages[1].stage_id);

    auto plan_json = two_stage.to_json();
    CHECK(plan_json.find("\"strategy\": \"two_stage\"") != std::string::npos);
    CHECK(plan_json.find("best_by_validation") != std::string::npos);
    CHECK(plan_json.find("overall_auc") != std::string::npos);
}

TEST_CASE("strategy names round-trip") {
    for (Strategy s : {Strategy::caption_only, Strategy::mix_all, Strategy::two_stage})
        CHECK(strategy_from_string(to_string(s)) == s);
    CHECK_THROWS_AS(strategy_from_string("three_stage"), ConfigError);
}

TEST_CASE("packing is deterministic in the seed") {
    auto samples = toy_samples(12);
    auto stage = build_stage_plan(Strategy::caption_only).stages[0];
    auto a = pack_mixture(samples, stage, 7);
    auto b = pack_mixture(samples, stage, 7);
    CHECK(a.entries == b.entries);
    CHECK(a.checksum == b.checksum);

    auto c = pack_mixture(samples, stage, 8);
    CHECK(a.checksum != c.checksum);
    bool same_order = a.entries == c.entries;
    CHECK_FALSE(same_order);
}

TEST_CASE("packing filters by task and drops filtered samples") {
    auto samples = toy_samples(6, TaskKind::caption);
    auto more = toy_samples(6, TaskKind::cot);
    samples.insert(samples.end(), more.begin(), more.end());
    samples[2].sample.filtered = true;
    samples[2].sample.filter_reason = "label_mismatch";

    auto caption_stage = build_stage_plan(Strategy::caption_only).stages[0];
    auto manifest = pack_mixture(samples, caption_stage, 1);
    CHECK(manifest.entries.size() == 5);  // 6 captions minus 1 filtered
    for (const auto& e : manifest.entries)
        CHECK(e.sample_id != samples[2].sample.sample_id);

    auto mix_stage = build_stage_plan(Strategy::mix_all).stages[0];
    auto full = pack_mixture(samples, mix_stage, 1);
    CHECK(full.entries.size() == 11);
}

TEST_CASE("packing permutes without losing or inventing samples") {
    auto inputs = generated_samples(6, 6, 71);
    auto stage = build_stage_plan(Strategy::mix_all).stages[0];
    auto manifest = pack_mixture(inputs, stage, 99);

    std::multiset<std::string> expected;
    std::map<std::string, std::uint64_t> offsets;
    for (const auto& in : inputs) {
        if (in.sample.filtered) continue;
        expected.insert(in.sample.sample_id);
        offsets[in.sample.sample_id] = in.file_offset;
    }
    std::multiset<std::string> got;
    for (const auto& e : manifest.entries) {
        got.insert(e.sample_id);
        CHECK(e.file_offset == offsets.at(e.sample_id));
    }
    CHECK(got == expected);

    // and the shuffle actually moved things
    std::vector<std::string> sorted(got.begin(), got.end());
    std::vector<std::string> packed;
    for (const auto& e : manifest.entries) packed.push_back(e.sample_id);
    CHECK(packed != sorted);
}

TEST_CASE("manifest counts reconcile with the closed-form corpus size") {
    // per issue: pretrain videos x (caption + n sub-questions + multi + cot)
    auto guidelines = load_default_guidelines();
    auto inputs = generated_samples(10, 10, 73);
    auto stage = build_stage_plan(Strategy::mix_all).stages[0];
    auto manifest = pack_mixture(inputs, stage, 3);
    auto summary = summarize_mixture(manifest);

    const std::int64_t videos = 60;  // (10+10) per issue, 3 issues
    std::int64_t expected_total = 0;
    for (const auto& issue : guidelines.issues)
        expected_total +=
            videos * (1 + static_cast<std::int64_t>(issue.sub_questions.size()) + 2);
    CHECK(summary.grand_total == expected_total);

    for (const auto& issue : guidelines.issues) {
        CHECK(summary.counts.at({issue.issue_id, "caption"}) == videos);
        CHECK(summary.counts.at({issue.issue_id, "vqa_binary"}) ==
              videos * static_cast<std::int64_t>(issue.sub_questions.size()));
        CHECK(summary.counts.at({issue.issue_id, "vqa_multi"}) == videos);
        CHECK(summary.counts.at({issue.issue_id, "cot"}) == videos);
    }

    auto with_ref = summarize_mixture(manifest, expected_total + 5);
    CHECK(with_ref.reference_delta == -5);
    CHECK(with_ref.to_json().find("reference_delta") != std::string::npos);
}

TEST_CASE("empty mixtures are rejected") {
    auto stage = build_stage_plan(Strategy::caption_only).stages[0];
    CHECK_THROWS_AS(pack_mixture({}, stage, 1), EmptyMixture);

    auto cots = toy_samples(4, TaskKind::cot);  // no captions at all
    CHECK_THROWS_AS(pack_mixture(cots, stage, 1), EmptyMixture);

    auto filtered = toy_samples(4);
    for (auto& s : filtered) s.sample.filtered = true;
    CHECK_THROWS_AS(pack_mixture(filtered, stage, 1), EmptyMixture);
}

TEST_CASE("manifest json round trip and checksum verification") {
    auto samples = toy_samples(9);
    auto stage = build_stage_plan(Strategy::caption_only).stages[0];
    auto manifest = pack_mixture(samples, stage, 5);
    manifest.strategy = "caption_only";

    std::string path = "/tmp/modfactory_test_manifest.json";
    manifest.store(path);
    auto loaded = MixtureManifest::load(path);
    CHECK(loaded.strategy == "caption_only");
    CHECK(loaded.stage_id == "caption");
    CHECK(loaded.seed == 5);
    CHECK(loaded.entries == manifest.entries);
    CHECK(loaded.counts == manifest.counts);
    CHECK(loaded.checksum == manifest.checksum);
    CHECK_NOTHROW(summarize_mixture(loaded));
    std::remove(path.c_str());

    SUBCASE("tampered entry list") {
        auto bad = manifest;
        std::swap(bad.entries.front().sample_id, bad.entries.back().sample_id);
        bad.entries.front().sample_id += "x";
        CHECK_THROWS_AS(summarize_mixture(bad), ChecksumMismatch);
    }
    SUBCASE("tampered counts") {
        auto bad = manifest;
        bad.counts.begin()->second += 1;
        CHECK_THROWS_AS(summarize_mixture(bad), ChecksumMismatch);
    }
    SUBCASE("malformed json") {
        CHECK_THROWS_AS(MixtureManifest::from_json("{nope"), DataError);
        CHECK_THROWS_AS(MixtureManifest::load("/nonexistent/manifest.json"), IoError);
    }
}
