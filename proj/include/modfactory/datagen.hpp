#pragma once

#include "modfactory/annotator.hpp"
#include "modfactory/common.hpp"
#include "modfactory/corpus.hpp"
#include "modfactory/guideline.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace modfactory::datagen {

struct Provenance {
    std::string backend_id;
    std::string timestamp;  // caller-supplied so reruns stay byte-identical
    std::string generator_version = "1";
};

struct InstructionSample {
    std::string sample_id;
    std::string video_id;
    std::string issue_id;
    TaskKind task = TaskKind::caption;
    std::optional<std::string> subq_id;  // present iff task == vqa_binary
    std::string prompt;
    std::string response;
    std::optional<Label> derived_label;  // absent iff task == caption
    bool filtered = false;
    std::string filter_reason;
    Provenance provenance;
    std::vector<std::string> notes;
};

class UnboundPlaceholder : public DataError {
  public:
    using DataError::DataError;
};

class UnknownVideo : public DataError {
  public:
    using DataError::DataError;
};

class MissingHumanLabel : public DataError {
  public:
    using DataError::DataError;
};

// Placeholders: {issue_title} {issue_title_lower} {question_text} {options_block}
struct TemplateSet {
    std::string caption;
    std::string vqa_binary;
    std::string vqa_multi;
    std::string cot;
    std::string eval_zero_shot;

    static TemplateSet defaults();
    // one file per task kind: caption.txt, vqa_binary.txt, vqa_multi.txt,
    // cot.txt, eval_zero_shot.txt
    static TemplateSet load(const std::string& templates_dir);
};

std::string render_prompt(const std::string& template_text,
                          const guideline::IssueSpec* issue,
                          const guideline::SubQuestion* subq,
                          const guideline::GuidelineSet* issues_for_options);

// lettered options, one per issue, plus a trailing "None of the above"
std::string options_block(const guideline::GuidelineSet& issues);

std::string make_sample_id(const std::string& video_id, const std::string& issue_id,
                           TaskKind task, const std::string& subq_id = "");

InstructionSample generate_caption(const corpus::VideoRecord& video,
                                   const guideline::IssueSpec& issue,
                                   annotator::AnnotatorClient& client,
                                   const TemplateSet& templates,
                                   const Provenance& provenance);

InstructionSample generate_binary_vqa(const corpus::VideoRecord& video,
                                      const guideline::IssueSpec& issue,
                                      const guideline::SubQuestion& subq,
                                      annotator::AnnotatorClient& client,
                                      const TemplateSet& templates,
                                      annotator::AnswerFormat format,
                                      const Provenance& provenance);

// One annotator call, one sample per issue (the shared response is decoded
// per issue against its own option letter).
std::vector<InstructionSample> generate_multichoice_vqa(
    const corpus::VideoRecord& video, const guideline::GuidelineSet& issues,
    annotator::AnnotatorClient& client, const TemplateSet& templates,
    const Provenance& provenance);

struct SubAnswer {
    bool answer_yes = false;
    std::string explanation;
};

// Assembled from the binary-VQA pass; the conclusion is computed by the
// aggregation rule, never free-generated.
InstructionSample generate_cot(const corpus::VideoRecord& video,
                               const guideline::IssueSpec& issue,
                               const std::map<std::string, SubAnswer>& vqa_answers,
                               const TemplateSet& templates,
                               const Provenance& provenance);

// issue-selection decoding for a multi-choice response: indices of selected
// issues; the none-option yields the empty set
std::set<std::size_t> parse_option_selection(const std::string& text,
                                             std::size_t issue_count);

struct TaskCounts {
    std::int64_t kept = 0;
    std::int64_t discarded = 0;
    std::map<std::string, std::int64_t> reasons;
};

struct FilterReport {
    // issue_id -> task name -> counts
    std::map<std::string, std::map<std::string, TaskCounts>> per_issue;
    std::string to_json() const;
};

// Marks filtered=true on every vqa_multi/cot sample whose derived label
// disagrees with the human label, and on every vqa_binary sample claiming a
// violation on a human-negative video. Captions are never filtered.
FilterReport consistency_filter(std::vector<InstructionSample>& samples,
                                const std::vector<corpus::VideoRecord>& corpus);

struct GenerationFailure {
    std::string video_id;
    std::string issue_id;
    TaskKind task = TaskKind::caption;
    std::string error;
};

struct GenerationConfig {
    int parallelism = 1;
    annotator::AnswerFormat answer_format = annotator::AnswerFormat::answer_then_reason;
    bool caption = true;
    bool binary = true;
    bool multi = true;
    bool cot = true;
};

struct GenerationResult {
    std::vector<InstructionSample> samples;  // sorted by sample_id
    std::vector<GenerationFailure> failures;
};

// Full pass over the pretrain split: per (video, issue) one caption,
// one binary VQA per sub-question, one multi-choice sample, and one CoT
// assembled from the binary answers.
GenerationResult generate_all(const std::vector<corpus::VideoRecord>& corpus,
                              const guideline::GuidelineSet& guidelines,
                              annotator::AnnotatorClient& client,
                              const TemplateSet& templates,
                              const GenerationConfig& config,
                              const Provenance& provenance);

std::string to_jsonl_line(const InstructionSample& s);
InstructionSample from_jsonl_line(const std::string& line, std::size_t record_index);

void store_samples(std::vector<InstructionSample> samples, const std::string& path);
std::vector<InstructionSample> load_samples(const std::string& path,
                                            std::vector<std::uint64_t>* offsets = nullptr);

}  // namespace modfactory::datagen
