#include "modfactory/datagen.hpp"

#include "modfactory/evalharness.hpp"
#include "modfactory/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace modfactory::datagen {

using annotator::AnnotatorClient;
using annotator::AnswerFormat;
using corpus::VideoRecord;
using guideline::GuidelineSet;
using guideline::IssueSpec;
using guideline::SubQuestion;
using nlohmann::json;

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

int sentence_count(const std::string& text) {
    int n = 0;
    for (char c : text)
        if (c == '.' || c == '!' || c == '?') ++n;
    return n;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open template file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string s = ss.str();
    // template files are one-prompt-per-file; strip the trailing newline
    while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
    return s;
}

}  // namespace

TemplateSet TemplateSet::defaults() {
    TemplateSet t;
    t.caption = "Describe the video regarding the {issue_title_lower} issue.";
    t.vqa_binary =
        "Regarding the {issue_title_lower} issue: {question_text} "
        "Answer yes or no, then explain.";
    t.vqa_multi =
        "Select which issues the video violates from the given options.\n"
        "{options_block}\n"
        "Answer with the matching option letters, or the final option if none "
        "apply.";
    t.cot =
        "Does the video violate the {issue_title_lower} issue? "
        "Go through each sub-question in turn, then conclude.";
    t.eval_zero_shot =
        "Does the video violate the {issue_title_lower} issue? "
        "Answer yes or no, then explain.";
    return t;
}

TemplateSet TemplateSet::load(const std::string& dir) {
    TemplateSet t;
    t.caption = read_file(dir + "/caption.txt");
    t.vqa_binary = read_file(dir + "/vqa_binary.txt");
    t.vqa_multi = read_file(dir + "/vqa_multi.txt");
    t.cot = read_file(dir + "/cot.txt");
    t.eval_zero_shot = read_file(dir + "/eval_zero_shot.txt");
    return t;
}

std::string options_block(const GuidelineSet& issues) {
    std::string out;
    char letter = 'A';
    for (const auto& issue : issues.issues) {
        out += std::string(1, letter++) + ". " + issue.title + "\n";
    }
    out += std::string(1, letter) + ". None of the above";
    return out;
}

std::string render_prompt(const std::string& template_text, const IssueSpec* issue,
                          const SubQuestion* subq,
                          const GuidelineSet* issues_for_options) {
    std::string out;
    out.reserve(template_text.size() + 64);
    for (std::size_t i = 0; i < template_text.size();) {
        if (template_text[i] != '{') {
            out += template_text[i++];
            continue;
        }
        auto close = template_text.find('}', i);
        if (close == std::string::npos)
            throw UnboundPlaceholder("unterminated placeholder in template");
        std::string name = template_text.substr(i + 1, close - i - 1);
        if (name == "issue_title") {
            if (!issue) throw UnboundPlaceholder("unbound placeholder {issue_title}");
            out += issue->title;
        } else if (name == "issue_title_lower") {
            if (!issue)
                throw UnboundPlaceholder("unbound placeholder {issue_title_lower}");
            out += lowercase(issue->title);
        } else if (name == "question_text") {
            if (!subq)
                throw UnboundPlaceholder("unbound placeholder {question_text}");
            out += subq->question_text;
        } else if (name == "options_block") {
            if (!issues_for_options)
                throw UnboundPlaceholder("unbound placeholder {options_block}");
            out += options_block(*issues_for_options);
        } else {
            throw UnboundPlaceholder("unknown placeholder {" + name + "}");
        }
        i = close + 1;
    }
    return out;
}

std::string make_sample_id(const std::string& video_id, const std::string& issue_id,
                           TaskKind task, const std::string& subq_id) {
    std::uint64_t h = fnv1a64(video_id);
    h = fnv1a64("|", h);
    h = fnv1a64(issue_id, h);
    h = fnv1a64("|", h);
    h = fnv1a64(modfactory::to_string(task), h);
    h = fnv1a64("|", h);
    h = fnv1a64(subq_id, h);
    return std::string("s_") + to_hex(h);
}

InstructionSample generate_caption(const VideoRecord& video, const IssueSpec& issue,
                                   AnnotatorClient& client,
                                   const TemplateSet& templates,
                                   const Provenance& provenance) {
    InstructionSample s;
    s.sample_id = make_sample_id(video.video_id, issue.issue_id, TaskKind::caption);
    s.video_id = video.video_id;
    s.issue_id = issue.issue_id;
    s.task = TaskKind::caption;
    s.prompt = render_prompt(templates.caption, &issue, nullptr, nullptr);
    s.provenance = provenance;
    auto resp = client.annotate({s.prompt, video.frame_refs});
    s.response = resp.text;
    int n = sentence_count(s.response);
    if (n < 2 || n > 3)
        s.notes.push_back("sentence_count=" + std::to_string(n));
    return s;
}

InstructionSample generate_binary_vqa(const VideoRecord& video,
                                      const IssueSpec& issue,
                                      const SubQuestion& subq,
                                      AnnotatorClient& client,
                                      const TemplateSet& templates,
                                      AnswerFormat format,
                                      const Provenance& provenance) {
    InstructionSample s;
    s.sample_id = make_sample_id(video.video_id, issue.issue_id, TaskKind::vqa_binary,
                                 subq.subq_id);
    s.video_id = video.video_id;
    s.issue_id = issue.issue_id;
    s.task = TaskKind::vqa_binary;
    s.subq_id = subq.subq_id;
    s.prompt = render_prompt(templates.vqa_binary, &issue, &subq, nullptr);
    s.provenance = provenance;
    auto resp = client.annotate({s.prompt, video.frame_refs});
    s.response = resp.text;
    try {
        auto ex = evalharness::extract_answer(resp.text, format);
        bool answer_yes = ex.label == Label::positive;
        s.derived_label = guideline::is_violation(subq, answer_yes)
                              ? Label::positive
                              : Label::negative;
    } catch (const UnparseableAnswer&) {
        s.filtered = true;
        s.filter_reason = "unparseable_answer";
    }
    return s;
}

std::set<std::size_t> parse_option_selection(const std::string& text,
                                             std::size_t issue_count) {
    // leading option list: letters separated by commas, terminated by '.'
    std::set<std::size_t> selected;
    bool none_selected = false;
    std::size_t i = 0;
    bool expecting_letter = true;
    for (; i < text.size(); ++i) {
        char c = text[i];
        if (c == ' ') continue;
        if (expecting_letter) {
            char u = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
            if (u < 'A' || u > 'Z') break;
            std::size_t idx = static_cast<std::size_t>(u - 'A');
            if (idx > issue_count) break;  // beyond the none option
            // a letter must stand alone, not start a word
            if (i + 1 < text.size() && std::isalpha(static_cast<unsigned char>(text[i + 1])))
                break;
            if (idx == issue_count)
                none_selected = true;
            else
                selected.insert(idx);
            expecting_letter = false;
        } else if (c == ',') {
            expecting_letter = true;
        } else {
            break;
        }
    }
    bool terminated = !expecting_letter || (selected.empty() && !none_selected);
    if ((!selected.empty() || none_selected) && terminated)
        return none_selected ? std::set<std::size_t>{} : selected;
    if (text.find(annotator::prompts::kNoneOption) != std::string::npos ||
        text.find("none of the above") != std::string::npos)
        return {};
    throw UnparseableAnswer("no option letters or none-option found in: " +
                            text.substr(0, 80));
}

std::vector<InstructionSample> generate_multichoice_vqa(
    const VideoRecord& video, const GuidelineSet& issues, AnnotatorClient& client,
    const TemplateSet& templates, const Provenance& provenance) {
    if (issues.issues.size() < 2)
        throw DataError("multi-choice VQA requires at least 2 issues");
    std::string prompt = render_prompt(templates.vqa_multi, nullptr, nullptr, &issues);
    auto resp = client.annotate({prompt, video.frame_refs});

    std::optional<std::set<std::size_t>> selected;
    try {
        selected = parse_option_selection(resp.text, issues.issues.size());
    } catch (const UnparseableAnswer&) {
        selected = std::nullopt;
    }

    std::vector<InstructionSample> out;
    for (std::size_t i = 0; i < issues.issues.size(); ++i) {
        const IssueSpec& issue = issues.issues[i];
        InstructionSample s;
        s.sample_id =
            make_sample_id(video.video_id, issue.issue_id, TaskKind::vqa_multi);
        s.video_id = video.video_id;
        s.issue_id = issue.issue_id;
        s.task = TaskKind::vqa_multi;
        s.prompt = prompt;
        s.response = resp.text;
        s.provenance = provenance;
        if (selected) {
            s.derived_label =
                selected->count(i) ? Label::positive : Label::negative;
        } else {
            s.filtered = true;
            s.filter_reason = "unparseable_answer";
        }
        out.push_back(std::move(s));
    }
    return out;
}

InstructionSample generate_cot(const VideoRecord& video, const IssueSpec& issue,
                               const std::map<std::string, SubAnswer>& vqa_answers,
                               const TemplateSet& templates,
                               const Provenance& provenance) {
    std::map<std::string, bool> answers;
    for (const auto& sq : issue.sub_questions) {
        auto it = vqa_answers.find(sq.subq_id);
        if (it == vqa_answers.end())
            throw guideline::MissingAnswer("no VQA answer for sub-question '" +
                                           sq.subq_id + "'");
        answers[sq.subq_id] = it->second.answer_yes;
    }
    Label conclusion = guideline::aggregate(issue, answers);

    std::ostringstream response;
    int step = 0;
    for (const auto& sq : issue.sub_questions) {
        const SubAnswer& sa = vqa_answers.at(sq.subq_id);
        response << "Step " << ++step << ": " << sq.question_text << " "
                 << (sa.answer_yes ? "Yes." : "No.");
        if (!sa.explanation.empty()) response << " " << sa.explanation;
        response << "\n";
    }
    response << "Conclusion: the video is "
             << (conclusion == Label::positive ? "positive" : "negative")
             << " for the " << lowercase(issue.title) << " issue.";

    InstructionSample s;
    s.sample_id = make_sample_id(video.video_id, issue.issue_id, TaskKind::cot);
    s.video_id = video.video_id;
    s.issue_id = issue.issue_id;
    s.task = TaskKind::cot;
    s.prompt = render_prompt(templates.cot, &issue, nullptr, nullptr);
    s.response = response.str();
    s.derived_label = conclusion;
    s.provenance = provenance;
    return s;
}

GenerationResult generate_all(const std::vector<VideoRecord>& corpus,
                              const GuidelineSet& guidelines,
                              AnnotatorClient& client, const TemplateSet& templates,
                              const GenerationConfig& config,
                              const Provenance& provenance) {
    std::vector<const VideoRecord*> pretrain;
    for (const auto& v : corpus)
        if (v.split == Split::pretrain) pretrain.push_back(&v);

    GenerationResult result;

    auto process_video = [&](const VideoRecord& video,
                             std::vector<InstructionSample>& samples,
                             std::vector<GenerationFailure>& failures) {
        if (config.multi && guidelines.issues.size() >= 2) {
            try {
                auto multi = generate_multichoice_vqa(video, guidelines, client,
                                                      templates, provenance);
                for (auto& s : multi) samples.push_back(std::move(s));
            } catch (const Error& e) {
                failures.push_back({video.video_id, "", TaskKind::vqa_multi, e.what()});
            }
        }
        for (const auto& issue : guidelines.issues) {
            if (config.caption) {
                try {
                    samples.push_back(generate_caption(video, issue, client,
                                                       templates, provenance));
                } catch (const Error& e) {
                    failures.push_back(
                        {video.video_id, issue.issue_id, TaskKind::caption, e.what()});
                }
            }
            std::map<std::string, SubAnswer> sub_answers;
            if (config.binary) {
                for (const auto& sq : issue.sub_questions) {
                    try {
                        auto s = generate_binary_vqa(video, issue, sq, client,
                                                     templates, config.answer_format,
                                                     provenance);
                        if (s.derived_label) {
                            auto ex = evalharness::extract_answer(
                                s.response, config.answer_format);
                            sub_answers[sq.subq_id] = SubAnswer{
                                ex.label == Label::positive, ex.explanation};
                        }
                        samples.push_back(std::move(s));
                    } catch (const Error& e) {
                        failures.push_back({video.video_id, issue.issue_id,
                                            TaskKind::vqa_binary, e.what()});
                    }
                }
            }
            if (config.cot && config.binary) {
                try {
                    samples.push_back(generate_cot(video, issue, sub_answers,
                                                   templates, provenance));
                } catch (const Error& e) {
                    failures.push_back(
                        {video.video_id, issue.issue_id, TaskKind::cot, e.what()});
                }
            }
        }
    };

    if (config.parallelism > 1) {
#pragma omp parallel
        {
            std::vector<InstructionSample> local_samples;
            std::vector<GenerationFailure> local_failures;
#pragma omp for schedule(dynamic, 16) nowait
            for (long i = 0; i < static_cast<long>(pretrain.size()); ++i)
                process_video(*pretrain[i], local_samples, local_failures);
#pragma omp critical
            {
                for (auto& s : local_samples) result.samples.push_back(std::move(s));
                for (auto& f : local_failures)
                    result.failures.push_back(std::move(f));
            }
        }
    } else {
        for (const VideoRecord* v : pretrain)
            process_video(*v, result.samples, result.failures);
    }

    std::sort(result.samples.begin(), result.samples.end(),
              [](const InstructionSample& a, const InstructionSample& b) {
                  return a.sample_id < b.sample_id;
              });
    std::sort(result.failures.begin(), result.failures.end(),
              [](const GenerationFailure& a, const GenerationFailure& b) {
                  return std::tie(a.video_id, a.issue_id) <
                         std::tie(b.video_id, b.issue_id);
              });
    return result;
}

std::string FilterReport::to_json() const {
    json j;
    json issues = json::object();
    for (const auto& [issue, tasks] : per_issue) {
        json per_task = json::object();
        for (const auto& [task, counts] : tasks) {
            json c;
            c["kept"] = counts.kept;
            c["discarded"] = counts.discarded;
            c["reasons"] = counts.reasons;
            per_task[task] = c;
        }
        issues[issue] = per_task;
    }
    j["per_issue"] = issues;
    return j.dump(2);
}

FilterReport consistency_filter(std::vector<InstructionSample>& samples,
                                const std::vector<VideoRecord>& corpus) {
    std::map<std::string, const VideoRecord*> by_id;
    for (const auto& v : corpus) by_id[v.video_id] = &v;

    FilterReport report;
    for (auto& s : samples) {
        auto& counts = report.per_issue[s.issue_id][modfactory::to_string(s.task)];
        if (s.task == TaskKind::caption) {
            ++counts.kept;
            continue;
        }
        auto it = by_id.find(s.video_id);
        if (it == by_id.end())
            throw UnknownVideo("sample " + s.sample_id + " references unknown video " +
                               s.video_id);
        const VideoRecord& video = *it->second;
        auto lt = video.human_labels.find(s.issue_id);
        if (lt == video.human_labels.end())
            throw MissingHumanLabel("video " + s.video_id + " has no label for issue " +
                                    s.issue_id);
        Label human = lt->second;

        if (s.filtered) {  // e.g. unparseable at generation time
            ++counts.discarded;
            ++counts.reasons[s.filter_reason.empty() ? "unspecified"
                                                     : s.filter_reason];
            continue;
        }
        bool discard = false;
        if (s.task == TaskKind::vqa_binary) {
            // a violating sub-answer on a clean video contradicts the
            // OR-aggregation; the reverse is not a contradiction
            discard = s.derived_label == Label::positive && human == Label::negative;
            if (discard) s.filter_reason = "positive_on_clean";
        } else {
            discard = s.derived_label && *s.derived_label != human;
            if (discard) s.filter_reason = "label_mismatch";
        }
        if (discard) {
            s.filtered = true;
            ++counts.discarded;
            ++counts.reasons[s.filter_reason];
        } else {
            ++counts.kept;
        }
    }
    return report;
}

std::string to_jsonl_line(const InstructionSample& s) {
    json j;
    j["sample_id"] = s.sample_id;
    j["video_id"] = s.video_id;
    j["issue_id"] = s.issue_id;
    j["task"] = modfactory::to_string(s.task);
    if (s.subq_id) j["subq_id"] = *s.subq_id;
    j["prompt"] = s.prompt;
    j["response"] = s.response;
    if (s.derived_label) j["derived_label"] = modfactory::to_string(*s.derived_label);
    j["filtered"] = s.filtered;
    if (!s.filter_reason.empty()) j["filter_reason"] = s.filter_reason;
    j["provenance"] = {{"backend_id", s.provenance.backend_id},
                       {"timestamp", s.provenance.timestamp},
                       {"generator_version", s.provenance.generator_version}};
    if (!s.notes.empty()) j["notes"] = s.notes;
    return j.dump();
}

InstructionSample from_jsonl_line(const std::string& line, std::size_t idx) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw corpus::SchemaError(idx, std::string("invalid JSON: ") + e.what());
    }
    InstructionSample s;
    try {
        s.sample_id = j.at("sample_id").get<std::string>();
        s.video_id = j.at("video_id").get<std::string>();
        s.issue_id = j.at("issue_id").get<std::string>();
        s.task = task_from_string(j.at("task").get<std::string>());
        if (j.contains("subq_id")) s.subq_id = j["subq_id"].get<std::string>();
        s.prompt = j.at("prompt").get<std::string>();
        s.response = j.at("response").get<std::string>();
        if (j.contains("derived_label"))
            s.derived_label = label_from_string(j["derived_label"].get<std::string>());
        s.filtered = j.value("filtered", false);
        s.filter_reason = j.value("filter_reason", "");
        if (j.contains("provenance")) {
            const auto& p = j["provenance"];
            s.provenance.backend_id = p.value("backend_id", "");
            s.provenance.timestamp = p.value("timestamp", "");
            s.provenance.generator_version = p.value("generator_version", "");
        }
        if (j.contains("notes"))
            s.notes = j["notes"].get<std::vector<std::string>>();
    } catch (const std::exception& e) {
        throw corpus::SchemaError(idx, e.what());
    }
    return s;
}

void store_samples(std::vector<InstructionSample> samples, const std::string& path) {
    std::sort(samples.begin(), samples.end(),
              [](const InstructionSample& a, const InstructionSample& b) {
                  return a.sample_id < b.sample_id;
              });
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    for (const auto& s : samples) out << to_jsonl_line(s) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

std::vector<InstructionSample> load_samples(const std::string& path,
                                            std::vector<std::uint64_t>* offsets) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open sample file: " + path);
    std::vector<InstructionSample> samples;
    std::string line;
    std::uint64_t offset = 0;
    std::size_t idx = 0;
    while (std::getline(in, line)) {
        ++idx;
        if (!line.empty()) {
            samples.push_back(from_jsonl_line(line, idx));
            if (offsets) offsets->push_back(offset);
        }
        offset += line.size() + 1;
    }
    return samples;
}

}  // namespace modfactory::datagen
