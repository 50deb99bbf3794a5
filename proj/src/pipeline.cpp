#include "modfactory/pipeline.hpp"

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace modfactory::pipeline {

using nlohmann::json;

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    json j;
    try {
        j = json::parse(ss.str());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }

    PipelineConfig c;
    try {
        c.guidelines_path = j.value("guidelines", "");
        c.corpus_path = j.value("corpus", "");
        c.out_dir = j.value("out_dir", "out");
        c.templates_dir = j.value("templates_dir", "");
        c.strategy = j.value("strategy", "two_stage");
        c.seed = j.value("seed", 0ULL);
        c.parallelism = j.value("parallelism", 1);
        c.timestamp = j.value("timestamp", "1970-01-01T00:00:00Z");
        if (j.contains("reference_total"))
            c.reference_total = j["reference_total"].get<std::int64_t>();
        if (j.contains("backend")) {
            const auto& b = j["backend"];
            c.backend.kind = b.value("kind", "mock");
            c.backend.flip_rate = b.value("flip_rate", 0.0);
            c.backend.seed = b.value("seed", 0ULL);
            c.backend.answer_format = b.value("answer_format", "answer_then_reason");
            c.backend.inconsistency_rate = b.value("inconsistency_rate", 0.0);
            c.backend.url = b.value("url", "");
            c.backend.timeout_ms = b.value("timeout_ms", 30000);
            c.backend.parallelism_ceiling = b.value("parallelism_ceiling", 64);
        }
        if (j.contains("corpus_spec")) {
            const auto& s = j["corpus_spec"];
            c.corpus_spec.pretrain_pos = s.value("pretrain_pos", 0);
            c.corpus_spec.pretrain_neg = s.value("pretrain_neg", 0);
            c.corpus_spec.sft_total = s.value("sft_total", 0);
            c.corpus_spec.sft_pos_rate = s.value("sft_pos_rate", 0.1);
            c.corpus_spec.eval_total = s.value("eval_total", 0);
            c.corpus_spec.eval_pos_rate = s.value("eval_pos_rate", 0.5);
            if (!s.contains("seed"))
                throw ConfigError("corpus_spec.seed must be explicit");
            c.corpus_spec.seed = s["seed"].get<std::uint64_t>();
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("bad config value: ") + e.what());
    }
    return c;
}

void PipelineConfig::validate() const {
    if (guidelines_path.empty()) throw ConfigError("config: 'guidelines' is required");
    if (!std::filesystem::exists(guidelines_path))
        throw ConfigError("guidelines file does not exist: " + guidelines_path);
    if (!templates_dir.empty() && !std::filesystem::exists(templates_dir))
        throw ConfigError("templates dir does not exist: " + templates_dir);
    if (backend.kind != "mock" && backend.kind != "http")
        throw ConfigError("backend.kind must be 'mock' or 'http'");
    if (backend.kind == "http" && backend.url.empty())
        throw ConfigError("http backend requires backend.url");
    if (parallelism < 1) throw ConfigError("parallelism must be positive");
    if (parallelism > backend.parallelism_ceiling)
        throw ConfigError("parallelism exceeds the configured ceiling");
    annotator::answer_format_from_string(backend.answer_format);
    mixture::strategy_from_string(strategy);
}

datagen::TemplateSet load_templates(const PipelineConfig& config) {
    if (config.templates_dir.empty()) return datagen::TemplateSet::defaults();
    return datagen::TemplateSet::load(config.templates_dir);
}

std::unique_ptr<annotator::AnnotatorClient> make_client(
    const PipelineConfig& config, const guideline::GuidelineSet& guidelines,
    const std::vector<corpus::VideoRecord>& corpus_records) {
    if (config.backend.kind == "mock") {
        annotator::MockAnnotatorConfig mc;
        mc.flip_rate = config.backend.flip_rate;
        mc.seed = config.backend.seed;
        mc.answer_format =
            annotator::answer_format_from_string(config.backend.answer_format);
        mc.inconsistency_rate = config.backend.inconsistency_rate;
        return std::make_unique<annotator::MockAnnotator>(mc, guidelines,
                                                          corpus_records);
    }
    annotator::HttpAnnotatorConfig hc;
    hc.base_url = config.backend.url;
    hc.timeout_ms = config.backend.timeout_ms;
    return std::make_unique<annotator::HttpAnnotator>(hc);
}

}  // namespace modfactory::pipeline
