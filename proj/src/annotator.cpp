#include "modfactory/annotator.hpp"

#include "modfactory/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <sstream>
#include <thread>

namespace modfactory::annotator {

using corpus::VideoRecord;
using guideline::GuidelineSet;
using guideline::IssueSpec;
using guideline::SubQuestion;

namespace {

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

std::string join(const std::vector<std::string>& v, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += sep;
        out += v[i];
    }
    return out;
}

std::uint64_t request_key(std::uint64_t seed, const AnnotationRequest& req,
                          std::string_view salt) {
    std::uint64_t h = fnv1a64(req.prompt);
    for (const auto& f : req.frame_refs) h = fnv1a64(f, h);
    h = fnv1a64(salt, h);
    return h ^ seed;
}

std::string cue_sentence(const SubQuestion& sq, bool answer_yes) {
    return "Sub-question \"" + sq.question_text + "\" answer: " +
           (answer_yes ? "yes" : "no") + ".";
}

}  // namespace

AnswerFormat answer_format_from_string(const std::string& s) {
    if (s == "answer_then_reason") return AnswerFormat::answer_then_reason;
    if (s == "reason_then_answer") return AnswerFormat::reason_then_answer;
    throw ConfigError("unknown answer format: " + s);
}

const char* to_string(AnswerFormat f) {
    return f == AnswerFormat::answer_then_reason ? "answer_then_reason"
                                                 : "reason_then_answer";
}

MockAnnotator::MockAnnotator(MockAnnotatorConfig config, GuidelineSet guidelines,
                             std::vector<VideoRecord> videos)
    : config_(config), guidelines_(std::move(guidelines)) {
    if (config_.flip_rate < 0 || config_.flip_rate > 1)
        throw ConfigError("flip_rate must lie in [0,1]");
    if (config_.inconsistency_rate < 0 || config_.inconsistency_rate > 1)
        throw ConfigError("inconsistency_rate must lie in [0,1]");
    for (auto& v : videos) videos_.emplace(v.video_id, std::move(v));
}

const VideoRecord& MockAnnotator::video_for(const AnnotationRequest& req) const {
    if (req.frame_refs.empty())
        throw ProtocolError("mock request carries no frame refs");
    const std::string& ref = req.frame_refs.front();
    const std::string scheme = "synthetic://";
    if (ref.rfind(scheme, 0) != 0)
        throw ProtocolError("mock expects synthetic:// frame refs, got " + ref);
    auto slash = ref.find('/', scheme.size());
    std::string id = ref.substr(scheme.size(), slash - scheme.size());
    auto it = videos_.find(id);
    if (it == videos_.end())
        throw ProtocolError("mock has no video '" + id + "'");
    return it->second;
}

AnnotationResponse MockAnnotator::annotate(const AnnotationRequest& req) {
    if (req.prompt.empty()) throw ProtocolError("empty prompt");
    const VideoRecord& video = video_for(req);
    const std::string prompt_lc = lowercase(req.prompt);

    auto find_issue = [&]() -> const IssueSpec* {
        const IssueSpec* best = nullptr;
        for (const auto& issue : guidelines_.issues)
            if (prompt_lc.find(lowercase(issue.title)) != std::string::npos)
                if (!best || issue.title.size() > best->title.size()) best = &issue;
        return best;
    };

    // One Bernoulli flip per (seed, request, sub-question); pure in its inputs.
    auto flipped_answer = [&](const IssueSpec& issue, const SubQuestion& sq) {
        bool truth = corpus::latent_answers(issue, video).at(sq.subq_id);
        Rng r(request_key(config_.seed, req, "flip:" + sq.subq_id));
        return (r.uniform() < config_.flip_rate) ? !truth : truth;
    };

    auto make_logits = [&](bool chose_yes) {
        Rng r(request_key(config_.seed, req, "jitter"));
        LabelLogits lg;
        lg.yes = (chose_yes ? 2.0 : -2.0) + r.uniform(-0.5, 0.5);
        lg.no = (chose_yes ? -2.0 : 2.0) + r.uniform(-0.5, 0.5);
        return lg;
    };

    // reasoning_yes: the answer the emitted reasoning supports; final may
    // contradict it in reason_then_answer mode.
    auto compose_yes_no = [&](bool reasoning_yes, const std::string& explanation) {
        AnnotationResponse resp;
        bool final_yes = reasoning_yes;
        if (config_.answer_format == AnswerFormat::reason_then_answer) {
            Rng r(request_key(config_.seed, req, "inconsistency"));
            if (r.uniform() < config_.inconsistency_rate) final_yes = !final_yes;
            resp.text = explanation + " Final answer: " +
                        (final_yes ? "Yes." : "No.");
        } else {
            resp.text = std::string(final_yes ? "Yes. " : "No. ") + explanation;
        }
        if (req.want_label_logits) resp.label_logits = make_logits(final_yes);
        return resp;
    };

    if (req.prompt.find(prompts::kCaptionMarker) != std::string::npos) {
        const IssueSpec* issue = find_issue();
        if (!issue) throw ProtocolError("caption prompt names no known issue");
        std::string tags = video.hashtags.empty() ? "no hashtags"
                                                  : join(video.hashtags, " ");
        bool positive = video.human_labels.count(issue->issue_id) &&
                        video.human_labels.at(issue->issue_id) == Label::positive;
        std::string second =
            positive ? "Regarding the " + lowercase(issue->title) +
                           " issue, the overlay text itself signals a violation"
                     : "Regarding the " + lowercase(issue->title) +
                           " issue, nothing in the frames points to a violation";
        AnnotationResponse resp;
        resp.text = "The video shows \"" + video.overlay_text + "\" with " + tags +
                    ". " + second + ".";
        if (req.want_label_logits) resp.label_logits = make_logits(positive);
        return resp;
    }

    if (req.prompt.find(prompts::kMultiChoiceMarker) != std::string::npos) {
        std::vector<std::string> letters;
        std::vector<std::string> titles;
        for (std::size_t i = 0; i < guidelines_.issues.size(); ++i) {
            const IssueSpec& issue = guidelines_.issues[i];
            std::map<std::string, bool> answers;
            for (const auto& sq : issue.sub_questions)
                answers[sq.subq_id] = flipped_answer(issue, sq);
            if (guideline::aggregate(issue, answers) == Label::positive) {
                letters.push_back(std::string(1, static_cast<char>('A' + i)));
                titles.push_back(issue.title);
            }
        }
        AnnotationResponse resp;
        if (letters.empty()) {
            char none = static_cast<char>('A' + guidelines_.issues.size());
            resp.text = std::string(1, none) +
                        ". None of the above issues apply to this video.";
        } else {
            resp.text = join(letters, ", ") + ". The video shows signals for: " +
                        join(titles, "; ") + ".";
        }
        if (req.want_label_logits) resp.label_logits = make_logits(!letters.empty());
        return resp;
    }

    if (req.prompt.find(prompts::kJudgmentMarker) != std::string::npos) {
        const IssueSpec* issue = find_issue();
        if (!issue) throw ProtocolError("judgment prompt names no known issue");
        std::map<std::string, bool> answers;
        std::string cues;
        for (const auto& sq : issue->sub_questions) {
            bool a = flipped_answer(*issue, sq);
            answers[sq.subq_id] = a;
            if (!cues.empty()) cues += " ";
            cues += cue_sentence(sq, a);
        }
        bool violates = guideline::aggregate(*issue, answers) == Label::positive;
        return compose_yes_no(violates, cues);
    }

    // Binary VQA: identify the sub-question quoted in the prompt.
    for (const auto& issue : guidelines_.issues) {
        for (const auto& sq : issue.sub_questions) {
            if (req.prompt.find(sq.question_text) == std::string::npos) continue;
            bool a = flipped_answer(issue, sq);
            std::string explanation =
                cue_sentence(sq, a) +
                " The frames and overlay text support this reading.";
            return compose_yes_no(a, explanation);
        }
    }

    throw ProtocolError("mock cannot interpret prompt: " +
                        req.prompt.substr(0, 80));
}

std::vector<BatchOutcome> annotate_batch(AnnotatorClient& client,
                                         const std::vector<AnnotationRequest>& requests,
                                         int parallelism) {
    if (parallelism < 1) throw ConfigError("parallelism must be positive");
    std::vector<BatchOutcome> out(requests.size());
    if (requests.empty()) return out;

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            std::size_t i = next.fetch_add(1);
            if (i >= requests.size()) return;
            try {
                out[i].response = client.annotate(requests[i]);
            } catch (const Timeout& e) {
                out[i].error = std::string("Timeout: ") + e.what();
            } catch (const RateLimited& e) {
                out[i].error = std::string("RateLimited: ") + e.what();
            } catch (const BackendError& e) {
                out[i].error = std::string("BackendError: ") + e.what();
            } catch (const ProtocolError& e) {
                out[i].error = std::string("ProtocolError: ") + e.what();
            } catch (const std::exception& e) {
                out[i].error = std::string("Error: ") + e.what();
            }
        }
    };

    int threads = std::min<std::size_t>(parallelism, requests.size());
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(threads);
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    return out;
}

}  // namespace modfactory::annotator
