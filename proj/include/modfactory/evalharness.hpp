#pragma once

#include "modfactory/annotator.hpp"
#include "modfactory/common.hpp"
#include "modfactory/corpus.hpp"
#include "modfactory/guideline.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace modfactory::evalharness {

enum class EvalMode { zero_shot, sft };

struct EvalRecord {
    std::string video_id;
    std::string issue_id;
    Label human_label = Label::negative;
    Label predicted_label = Label::negative;
    double score = 0.0;  // probability of positive, in [0,1]
    std::optional<std::string> explanation;
    EvalMode mode = EvalMode::zero_shot;
};

class NonFiniteLogit : public DataError {
  public:
    using DataError::DataError;
};

class EmptyInput : public DataError {
  public:
    using DataError::DataError;
};

class DegenerateClasses : public DataError {
  public:
    using DataError::DataError;
};

class NoPositives : public DataError {
  public:
    using DataError::DataError;
};

struct Extracted {
    Label label;
    std::string explanation;
};

// answer_then_reason reads the leading yes/no token; reason_then_answer
// reads the last one.
Extracted extract_answer(const std::string& text, annotator::AnswerFormat format);

enum class RationaleCheck { consistent, inconsistent, indeterminate };

// Best-effort: matches the per-sub-question cue phrases the annotator emits,
// aggregates them under the issue's rule, and compares with the final label.
RationaleCheck detect_inconsistency(const std::string& explanation,
                                    Label final_label,
                                    const guideline::IssueSpec& issue);

// two-way softmax over the yes/no label tokens, computed stably
double label_probability(const annotator::LabelLogits& logits);

double accuracy(std::span<const EvalRecord> records);
double f1(std::span<const EvalRecord> records);
double roc_auc(std::span<const EvalRecord> records);
double precision_at_recall(std::span<const EvalRecord> records, double target);

struct IssueMetrics {
    double accuracy = 0;
    double f1 = 0;
    double auc = 0;
    double p_at_r90 = 0;
    std::int64_t total = 0;
    std::int64_t positives = 0;
};

struct MetricsReport {
    std::map<std::string, IssueMetrics> per_issue;
    double overall_auc = 0;  // pooled over all issues' records
    double threshold = 0.5;
    std::string to_json() const;
};

MetricsReport compute_metrics(
    const std::map<std::string, std::vector<EvalRecord>>& per_issue_records);

// ---- published-table fixtures -------------------------------------------

struct FixtureCell {
    std::optional<double> acc, f1, auc, p_at_r90;
};

struct FixtureRow {
    std::string model;
    std::string strategy;  // "-" when not applicable
    std::map<std::string, FixtureCell> cells;
    std::optional<double> overall_auc;
};

struct Fixture {
    std::string layout;  // "zero_shot" or "sft"
    std::vector<std::string> issues;
    std::vector<FixtureRow> rows;

    static Fixture from_json(const std::string& text);
    static Fixture load(const std::string& path);
};

// Plain-text table: 2-decimal percentages, column maxima wrapped in ** **,
// a dash for missing values.
std::string render_fixture_table(const Fixture& fixture);

std::string render_metrics_table(const MetricsReport& report, EvalMode layout);

// ---- eval drivers --------------------------------------------------------

std::map<std::string, std::vector<EvalRecord>> run_zero_shot_eval(
    const std::vector<corpus::VideoRecord>& corpus,
    const guideline::GuidelineSet& guidelines, annotator::AnnotatorClient& client,
    const std::string& eval_prompt_template, annotator::AnswerFormat format,
    int parallelism = 1);

// score file: JSONL of {video_id, issue_id, score}
std::map<std::string, std::vector<EvalRecord>> run_sft_eval(
    const std::vector<corpus::VideoRecord>& corpus,
    const guideline::GuidelineSet& guidelines, const std::string& score_file);

std::string to_jsonl_line(const EvalRecord& rec);
EvalRecord from_jsonl_line(const std::string& line, std::size_t record_index);
void store_records(const std::map<std::string, std::vector<EvalRecord>>& records,
                   const std::string& path);

}  // namespace modfactory::evalharness
