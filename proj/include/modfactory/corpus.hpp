#pragma once

#include "modfactory/common.hpp"
#include "modfactory/guideline.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace modfactory::corpus {

// issue_id -> subq_id -> violates
using LatentTruth = std::map<std::string, std::map<std::string, bool>>;

struct VideoRecord {
    std::string video_id;
    std::vector<std::string> frame_refs;  // opaque locators, never decoded
    std::string overlay_text;
    std::vector<std::string> hashtags;
    std::map<std::string, Label> human_labels;
    Split split = Split::pretrain;
    // present only for synthetic corpora; labels are always derived from it
    std::optional<LatentTruth> latent_truth;

    bool operator==(const VideoRecord&) const = default;
};

struct CorpusSpec {
    int pretrain_pos = 0;
    int pretrain_neg = 0;
    int sft_total = 0;
    double sft_pos_rate = 0.1;
    int eval_total = 0;
    double eval_pos_rate = 0.5;
    std::uint64_t seed = 0;
};

class InfeasibleSpec : public DataError {
  public:
    using DataError::DataError;
};

class SchemaError : public DataError {
  public:
    SchemaError(std::size_t record_index, const std::string& msg);
    std::size_t record_index;
};

// Deterministic in (guidelines, spec); per-video RNG keyed by video id so
// the parallel and serial paths produce identical corpora.
std::vector<VideoRecord> generate_synthetic_corpus(
    const guideline::GuidelineSet& guidelines, const CorpusSpec& spec,
    bool parallel = false);

std::vector<VideoRecord> load_corpus(const std::string& path);
void store_corpus(std::vector<VideoRecord> records, const std::string& path,
                  bool strip_latent = false);

std::string to_jsonl_line(const VideoRecord& rec, bool strip_latent = false);
VideoRecord from_jsonl_line(const std::string& line, std::size_t record_index);

// yes/no answer map for one issue, derived from latent truth and polarity
std::map<std::string, bool> latent_answers(const guideline::IssueSpec& issue,
                                           const VideoRecord& video);

}  // namespace modfactory::corpus
