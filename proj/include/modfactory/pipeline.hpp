#pragma once

#include "modfactory/annotator.hpp"
#include "modfactory/common.hpp"
#include "modfactory/corpus.hpp"
#include "modfactory/datagen.hpp"
#include "modfactory/guideline.hpp"
#include "modfactory/mixture.hpp"

#include <memory>
#include <optional>
#include <string>

namespace modfactory::pipeline {

struct BackendConfig {
    std::string kind = "mock";  // "mock" or "http"
    double flip_rate = 0.0;
    std::uint64_t seed = 0;
    std::string answer_format = "answer_then_reason";
    double inconsistency_rate = 0.0;
    std::string url;
    int timeout_ms = 30000;
    int parallelism_ceiling = 64;
};

struct PipelineConfig {
    std::string guidelines_path;
    std::string corpus_path;
    std::string out_dir = "out";
    std::string templates_dir;  // empty: built-in templates
    BackendConfig backend;
    corpus::CorpusSpec corpus_spec;
    std::string strategy = "two_stage";
    std::uint64_t seed = 0;
    int parallelism = 1;
    // fixed so reruns are byte-identical; override for real provenance
    std::string timestamp = "1970-01-01T00:00:00Z";
    std::optional<std::int64_t> reference_total;

    static PipelineConfig load(const std::string& path);
    void validate() const;

    std::string samples_path() const { return out_dir + "/samples.jsonl"; }
    std::string filter_report_path() const { return out_dir + "/filter_report.json"; }
    std::string failures_path() const { return out_dir + "/generation_failures.jsonl"; }
    std::string eval_records_path() const { return out_dir + "/eval_records.jsonl"; }
    std::string metrics_path() const { return out_dir + "/metrics.json"; }
};

datagen::TemplateSet load_templates(const PipelineConfig& config);

// mock backends need the corpus and guidelines; http backends ignore them
std::unique_ptr<annotator::AnnotatorClient> make_client(
    const PipelineConfig& config, const guideline::GuidelineSet& guidelines,
    const std::vector<corpus::VideoRecord>& corpus_records);

}  // namespace modfactory::pipeline
