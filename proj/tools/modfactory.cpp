// modfactory: data factory and evaluation harness for guideline-based
// short-video moderation pretraining corpora.
//
// Subcommands: validate | synth | generate | filter | pack | eval | report
// Exit codes:  0 success, 2 configuration error, 3 backend error, 4 data error

#include "modfactory/evalharness.hpp"
#include "modfactory/pipeline.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace modfactory;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitBackend = 3;
constexpr int kExitData = 4;

void log_event(const std::string& event, json fields = json::object()) {
    fields["event"] = event;
    std::cout << fields.dump() << "\n";
}

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> parallelism;
    std::optional<std::string> backend;
    std::optional<std::string> out_dir;
};

pipeline::PipelineConfig load_config(const GlobalOptions& opts) {
    if (opts.config_path.empty()) throw ConfigError("--config is required");
    auto config = pipeline::PipelineConfig::load(opts.config_path);
    if (opts.seed) config.seed = *opts.seed;
    if (opts.parallelism) config.parallelism = *opts.parallelism;
    if (opts.backend) config.backend.kind = *opts.backend;
    if (opts.out_dir) config.out_dir = *opts.out_dir;
    config.validate();
    std::filesystem::create_directories(config.out_dir);
    return config;
}

std::vector<corpus::VideoRecord> load_corpus_or_throw(
    const pipeline::PipelineConfig& config) {
    if (config.corpus_path.empty())
        throw ConfigError("config: 'corpus' is required for this command");
    if (!std::filesystem::exists(config.corpus_path))
        throw ConfigError("corpus file does not exist: " + config.corpus_path);
    return corpus::load_corpus(config.corpus_path);
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    out << text;
    if (!out.good()) throw IoError("write failed: " + path);
}

// ---- subcommand bodies ---------------------------------------------------

int cmd_validate(const GlobalOptions& opts) {
    auto config = load_config(opts);
    auto guidelines = guideline::load_guideline_set(config.guidelines_path);
    json issues = json::array();
    int diagnostics = 0;
    for (const auto& issue : guidelines.issues) {
        json ji;
        ji["issue_id"] = issue.issue_id;
        ji["sub_questions"] = issue.sub_questions.size();
        ji["clauses"] = issue.clauses.size();
        json warnings = json::array();
        for (const auto& d : guideline::validate_decomposition(issue)) {
            json w;
            switch (d.kind) {
                case guideline::Diagnostic::Kind::uncovered_clause:
                    w["kind"] = "uncovered_clause";
                    break;
                case guideline::Diagnostic::Kind::unreferenced_subq:
                    w["kind"] = "unreferenced_subq";
                    break;
                case guideline::Diagnostic::Kind::duplicate_question:
                    w["kind"] = "duplicate_question";
                    break;
            }
            w["detail"] = d.message;
            warnings.push_back(w);
            ++diagnostics;
        }
        ji["warnings"] = warnings;
        issues.push_back(ji);
    }
    log_event("validate", {{"guidelines", config.guidelines_path},
                           {"issues", issues},
                           {"diagnostics", diagnostics}});
    return kExitOk;
}

int cmd_synth(const GlobalOptions& opts) {
    auto config = load_config(opts);
    if (config.corpus_path.empty())
        throw ConfigError("config: 'corpus' is required for synth");
    auto guidelines = guideline::load_guideline_set(config.guidelines_path);
    auto records = corpus::generate_synthetic_corpus(guidelines, config.corpus_spec,
                                                     config.parallelism > 1);
    corpus::store_corpus(records, config.corpus_path);
    json splits = json::object();
    for (const auto& r : records) splits[to_string(r.split)] = 0;
    for (const auto& r : records)
        splits[to_string(r.split)] = splits[to_string(r.split)].get<int>() + 1;
    log_event("synth", {{"corpus", config.corpus_path},
                        {"videos", records.size()},
                        {"splits", splits},
                        {"seed", config.corpus_spec.seed}});
    return kExitOk;
}

int cmd_generate(const GlobalOptions& opts) {
    auto config = load_config(opts);
    auto guidelines = guideline::load_guideline_set(config.guidelines_path);
    auto records = load_corpus_or_throw(config);
    auto templates = pipeline::load_templates(config);
    auto client = pipeline::make_client(config, guidelines, records);

    datagen::GenerationConfig gen;
    gen.parallelism = config.parallelism;
    gen.answer_format =
        annotator::answer_format_from_string(config.backend.answer_format);
    datagen::Provenance prov{client->backend_id(), config.timestamp, "1"};
    auto result =
        datagen::generate_all(records, guidelines, *client, templates, gen, prov);

    datagen::store_samples(result.samples, config.samples_path());
    {
        std::ofstream out(config.failures_path(), std::ios::binary);
        if (!out) throw IoError("cannot open for write: " + config.failures_path());
        for (const auto& f : result.failures) {
            json j{{"video_id", f.video_id},
                   {"issue_id", f.issue_id},
                   {"task", to_string(f.task)},
                   {"error", f.error}};
            out << j.dump() << "\n";
        }
    }
    log_event("generate", {{"samples", result.samples.size()},
                           {"failures", result.failures.size()},
                           {"backend", client->backend_id()},
                           {"samples_path", config.samples_path()}});
    return kExitOk;
}

int cmd_filter(const GlobalOptions& opts) {
    auto config = load_config(opts);
    auto records = load_corpus_or_throw(config);
    auto samples = datagen::load_samples(config.samples_path());
    auto report = datagen::consistency_filter(samples, records);
    datagen::store_samples(samples, config.samples_path());
    write_text(config.filter_report_path(), report.to_json() + "\n");

    std::int64_t kept = 0, discarded = 0;
    for (const auto& s : samples) (s.filtered ? discarded : kept)++;
    log_event("filter", {{"kept", kept},
                         {"discarded", discarded},
                         {"report_path", config.filter_report_path()}});
    return kExitOk;
}

int cmd_pack(const GlobalOptions& opts) {
    auto config = load_config(opts);
    std::vector<std::uint64_t> offsets;
    auto samples = datagen::load_samples(config.samples_path(), &offsets);
    std::vector<mixture::PackInput> inputs;
    inputs.reserve(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i)
        inputs.push_back({std::move(samples[i]), offsets[i]});

    auto strategy = mixture::strategy_from_string(config.strategy);
    auto plan = mixture::build_stage_plan(strategy);
    write_text(config.out_dir + "/stage_plan.json", plan.to_json() + "\n");

    json stages = json::array();
    for (const auto& stage : plan.stages) {
        auto manifest = mixture::pack_mixture(inputs, stage, config.seed);
        manifest.strategy = config.strategy;
        std::string path = config.out_dir + "/" + stage.dataset_ref;
        manifest.store(path);
        auto summary = mixture::summarize_mixture(manifest, config.reference_total);
        json js{{"stage_id", stage.stage_id},
                {"manifest", path},
                {"samples", manifest.entries.size()},
                {"checksum", manifest.checksum}};
        if (summary.reference_delta) js["reference_delta"] = *summary.reference_delta;
        stages.push_back(js);
    }
    log_event("pack", {{"strategy", config.strategy},
                       {"seed", config.seed},
                       {"stages", stages}});
    return kExitOk;
}

int cmd_eval(const GlobalOptions& opts, const std::string& mode,
             const std::string& scores_path) {
    auto config = load_config(opts);
    auto guidelines = guideline::load_guideline_set(config.guidelines_path);
    auto records = load_corpus_or_throw(config);

    std::map<std::string, std::vector<evalharness::EvalRecord>> per_issue;
    if (mode == "zero_shot") {
        auto templates = pipeline::load_templates(config);
        auto client = pipeline::make_client(config, guidelines, records);
        per_issue = evalharness::run_zero_shot_eval(
            records, guidelines, *client, templates.eval_zero_shot,
            annotator::answer_format_from_string(config.backend.answer_format),
            config.parallelism);
    } else if (mode == "sft") {
        if (scores_path.empty())
            throw ConfigError("eval --mode sft requires --scores");
        per_issue = evalharness::run_sft_eval(records, guidelines, scores_path);
    } else {
        throw ConfigError("eval mode must be 'zero_shot' or 'sft'");
    }

    evalharness::store_records(per_issue, config.eval_records_path());
    auto report = evalharness::compute_metrics(per_issue);
    write_text(config.metrics_path(), report.to_json() + "\n");

    json issues = json::object();
    for (const auto& [issue, m] : report.per_issue)
        issues[issue] = {{"accuracy", m.accuracy},
                         {"f1", m.f1},
                         {"auc", m.auc},
                         {"p_at_r90", m.p_at_r90},
                         {"total", m.total}};
    log_event("eval", {{"mode", mode},
                       {"per_issue", issues},
                       {"overall_auc", report.overall_auc},
                       {"metrics_path", config.metrics_path()}});
    return kExitOk;
}

int cmd_report(const GlobalOptions& opts, const std::string& fixture_path,
               const std::string& layout) {
    if (!fixture_path.empty()) {
        auto fixture = evalharness::Fixture::load(fixture_path);
        std::cout << evalharness::render_fixture_table(fixture);
        return kExitOk;
    }
    auto config = load_config(opts);
    if (!std::filesystem::exists(config.eval_records_path()))
        throw DataError("no eval records at " + config.eval_records_path() +
                        "; run eval first or pass --fixture");
    std::ifstream in(config.eval_records_path(), std::ios::binary);
    std::map<std::string, std::vector<evalharness::EvalRecord>> per_issue;
    std::string line;
    std::size_t idx = 0;
    while (std::getline(in, line)) {
        ++idx;
        if (line.empty()) continue;
        auto rec = evalharness::from_jsonl_line(line, idx);
        per_issue[rec.issue_id].push_back(std::move(rec));
    }
    auto report = evalharness::compute_metrics(per_issue);
    std::cout << evalharness::render_metrics_table(
        report, layout == "sft" ? evalharness::EvalMode::sft
                                : evalharness::EvalMode::zero_shot);
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"data factory and evaluation harness for moderation pretraining"};
    app.require_subcommand(1);

    GlobalOptions opts;
    app.add_option("--config", opts.config_path, "pipeline config JSON");
    app.add_option("--seed", opts.seed, "override the pipeline seed");
    app.add_option("--parallelism", opts.parallelism, "override worker count");
    app.add_option("--backend", opts.backend, "override backend kind")
        ->check(CLI::IsMember({"mock", "http"}));
    app.add_option("--out", opts.out_dir, "override the output directory");

    auto* validate = app.add_subcommand("validate", "check guidelines and config");
    auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
    auto* generate = app.add_subcommand("generate", "generate instruction samples");
    auto* filter = app.add_subcommand("filter", "apply the consistency filter");
    auto* pack = app.add_subcommand("pack", "pack stage mixtures and manifests");

    auto* eval = app.add_subcommand("eval", "run an evaluation pass");
    std::string eval_mode = "zero_shot";
    std::string scores_path;
    eval->add_option("--mode", eval_mode, "zero_shot or sft")
        ->check(CLI::IsMember({"zero_shot", "sft"}));
    eval->add_option("--scores", scores_path, "SFT score JSONL file");

    auto* report = app.add_subcommand("report", "render a results table");
    std::string fixture_path;
    std::string layout = "zero_shot";
    report->add_option("--fixture", fixture_path, "render a fixture JSON instead");
    report->add_option("--layout", layout, "zero_shot or sft")
        ->check(CLI::IsMember({"zero_shot", "sft"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (validate->parsed()) return cmd_validate(opts);
        if (synth->parsed()) return cmd_synth(opts);
        if (generate->parsed()) return cmd_generate(opts);
        if (filter->parsed()) return cmd_filter(opts);
        if (pack->parsed()) return cmd_pack(opts);
        if (eval->parsed()) return cmd_eval(opts, eval_mode, scores_path);
        if (report->parsed()) return cmd_report(opts, fixture_path, layout);
    } catch (const ConfigError& e) {
        log_event("error", {{"kind", "config"}, {"message", e.what()}});
        return kExitConfig;
    } catch (const annotator::AnnotatorError& e) {
        log_event("error", {{"kind", "backend"}, {"message", e.what()}});
        return kExitBackend;
    } catch (const Error& e) {
        log_event("error", {{"kind", "data"}, {"message", e.what()}});
        return kExitData;
    } catch (const std::exception& e) {
        log_event("error", {{"kind", "data"}, {"message", e.what()}});
        return kExitData;
    }
    return kExitConfig;
}
