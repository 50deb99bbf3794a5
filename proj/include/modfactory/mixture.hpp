#pragma once

#include "modfactory/common.hpp"
#include "modfactory/datagen.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace modfactory::mixture {

enum class Strategy { caption_only, mix_all, two_stage };

enum class Component { language_model, vision_encoder, projector };

enum class Selection { last, best_by_validation };

Strategy strategy_from_string(const std::string& s);
const char* to_string(Strategy s);
const char* to_string(Component c);
const char* to_string(Selection s);

struct Stage {
    std::string stage_id;
    std::set<TaskKind> task_filter;
    std::set<Component> trainable_components;
    std::string dataset_ref;
    int epochs = 1;
    Selection selection = Selection::last;
    // name of the validation metric an external trainer should maximize
    // when selection == best_by_validation
    std::string validation_metric = "overall_auc";

    bool operator==(const Stage&) const = default;
};

struct StagePlan {
    Strategy strategy = Strategy::caption_only;
    std::vector<Stage> stages;

    std::string to_json() const;
};

class EmptyMixture : public DataError {
  public:
    using DataError::DataError;
};

class ChecksumMismatch : public DataError {
  public:
    using DataError::DataError;
};

struct ManifestEntry {
    std::string sample_id;
    std::uint64_t file_offset = 0;

    bool operator==(const ManifestEntry&) const = default;
};

struct MixtureManifest {
    std::string strategy;
    std::string stage_id;
    std::uint64_t seed = 0;
    // (issue_id, task name) -> count
    std::map<std::pair<std::string, std::string>, std::int64_t> counts;
    std::vector<ManifestEntry> entries;
    std::string checksum;  // over the ordered id list

    std::string to_json() const;
    static MixtureManifest from_json(const std::string& text);
    static MixtureManifest load(const std::string& path);
    void store(const std::string& path) const;
};

StagePlan build_stage_plan(Strategy strategy);

struct PackInput {
    datagen::InstructionSample sample;
    std::uint64_t file_offset = 0;
};

// Seeded unbiased shuffle of the unfiltered samples matching the stage's
// task filter.
MixtureManifest pack_mixture(const std::vector<PackInput>& samples,
                             const Stage& stage, std::uint64_t seed);

std::string manifest_checksum(const std::vector<ManifestEntry>& entries);

struct MixtureSummary {
    std::map<std::pair<std::string, std::string>, std::int64_t> counts;
    std::int64_t grand_total = 0;
    // informational delta against a reference total (e.g. a published
    // corpus size), when one is supplied
    std::optional<std::int64_t> reference_total;
    std::optional<std::int64_t> reference_delta;

    std::string to_json() const;
};

MixtureSummary summarize_mixture(const MixtureManifest& manifest,
                                 std::optional<std::int64_t> reference_total = {},
                                 bool allow_empty = false);

}  // namespace modfactory::mixture
