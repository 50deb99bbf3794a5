#include "modfactory/corpus.hpp"

#include "modfactory/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace modfactory::corpus {

using guideline::AggregationKind;
using guideline::GuidelineSet;
using guideline::IssueSpec;
using nlohmann::json;

namespace {

const std::vector<std::string> kNeutralOverlays = {
    "Sunset timelapse over the city skyline",
    "Quick pasta recipe you can make tonight",
    "Day 3 of my morning workout routine",
    "Unboxing the new camera gear",
    "Street food tour highlights",
    "My cat reacting to cucumbers",
    "DIY desk setup on a budget",
    "Rainy day study with me",
};

const std::vector<std::string> kHashtagPool = {
    "#fyp", "#viral", "#daily", "#trend", "#shorts", "#fun", "#explore",
};

std::string lowercase(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

// "Are private body parts exposed?" -> "are private body parts exposed"
std::string question_phrase(const std::string& q) {
    std::string s = q;
    if (!s.empty() && s.back() == '?') s.pop_back();
    return lowercase(s);
}

int positive_violation_count(const IssueSpec& issue, Rng& rng) {
    const int n = static_cast<int>(issue.sub_questions.size());
    switch (issue.aggregation.kind) {
        case AggregationKind::any_positive:
            return 1 + static_cast<int>(rng.bounded(n));
        case AggregationKind::all_positive:
            return n;
        case AggregationKind::k_of_n: {
            int k = issue.aggregation.k.value_or(1);
            return k + static_cast<int>(rng.bounded(n - k + 1));
        }
    }
    return 1;
}

std::string pad6(int v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", v);
    return buf;
}

struct VideoPlan {
    std::string video_id;
    std::string target_issue;
    Split split;
    bool positive;
};

VideoRecord build_video(const GuidelineSet& guidelines, const VideoPlan& plan,
                        std::uint64_t corpus_seed) {
    Rng rng(corpus_seed ^ fnv1a64(plan.video_id));
    VideoRecord rec;
    rec.video_id = plan.video_id;
    rec.split = plan.split;

    int frames = 3 + static_cast<int>(rng.bounded(6));
    for (int f = 0; f < frames; ++f)
        rec.frame_refs.push_back("synthetic://" + plan.video_id + "/frame_" +
                                 std::to_string(f));

    LatentTruth truth;
    for (const auto& issue : guidelines.issues) {
        auto& per_issue = truth[issue.issue_id];
        for (const auto& sq : issue.sub_questions) per_issue[sq.subq_id] = false;
        if (issue.issue_id == plan.target_issue && plan.positive) {
            int m = positive_violation_count(issue, rng);
            std::vector<std::string> ids;
            for (const auto& sq : issue.sub_questions) ids.push_back(sq.subq_id);
            rng.shuffle(ids);
            for (int v = 0; v < m; ++v) per_issue[ids[v]] = true;
        }
    }

    rec.overlay_text = kNeutralOverlays[rng.bounded(kNeutralOverlays.size())];
    if (plan.positive) {
        const IssueSpec& issue = guidelines.at(plan.target_issue);
        std::string signals;
        for (const auto& sq : issue.sub_questions) {
            if (!truth[issue.issue_id][sq.subq_id]) continue;
            if (!signals.empty()) signals += "; ";
            signals += question_phrase(sq.question_text);
        }
        rec.overlay_text += " | " + signals;
    }

    int tags = static_cast<int>(rng.bounded(4));
    std::vector<std::string> pool = kHashtagPool;
    rng.shuffle(pool);
    for (int t = 0; t < tags; ++t) rec.hashtags.push_back(pool[t]);
    if (plan.positive) rec.hashtags.push_back("#" + plan.target_issue);

    for (const auto& issue : guidelines.issues) {
        std::map<std::string, bool> answers;
        for (const auto& sq : issue.sub_questions)
            answers[sq.subq_id] =
                truth[issue.issue_id][sq.subq_id]
                    ? (sq.polarity == guideline::Polarity::yes_is_violation)
                    : (sq.polarity == guideline::Polarity::no_is_violation);
        rec.human_labels[issue.issue_id] = guideline::aggregate(issue, answers);
    }
    rec.latent_truth = std::move(truth);
    return rec;
}

}  // namespace

SchemaError::SchemaError(std::size_t idx, const std::string& msg)
    : DataError("record " + std::to_string(idx) + ": " + msg), record_index(idx) {}

std::map<std::string, bool> latent_answers(const IssueSpec& issue,
                                           const VideoRecord& video) {
    if (!video.latent_truth)
        throw DataError("video " + video.video_id + " has no latent truth");
    auto it = video.latent_truth->find(issue.issue_id);
    if (it == video.latent_truth->end())
        throw DataError("video " + video.video_id + " has no latent truth for issue " +
                        issue.issue_id);
    std::map<std::string, bool> answers;
    for (const auto& sq : issue.sub_questions) {
        auto jt = it->second.find(sq.subq_id);
        bool violates = jt != it->second.end() && jt->second;
        answers[sq.subq_id] =
            violates ? (sq.polarity == guideline::Polarity::yes_is_violation)
                     : (sq.polarity == guideline::Polarity::no_is_violation);
    }
    return answers;
}

std::vector<VideoRecord> generate_synthetic_corpus(const GuidelineSet& guidelines,
                                                   const CorpusSpec& spec,
                                                   bool parallel) {
    if (spec.pretrain_pos < 0 || spec.pretrain_neg < 0 || spec.sft_total < 0 ||
        spec.eval_total < 0)
        throw InfeasibleSpec("corpus counts must be nonnegative");
    if (spec.sft_pos_rate < 0 || spec.sft_pos_rate > 1 || spec.eval_pos_rate < 0 ||
        spec.eval_pos_rate > 1)
        throw InfeasibleSpec("positive rates must lie in [0,1]");
    if (guidelines.issues.empty()) throw InfeasibleSpec("empty guideline set");

    std::vector<VideoPlan> plans;
    for (const auto& issue : guidelines.issues) {
        bool wants_positive =
            spec.pretrain_pos > 0 ||
            std::llround(spec.sft_pos_rate * spec.sft_total) > 0 ||
            std::llround(spec.eval_pos_rate * spec.eval_total) > 0;
        if (wants_positive && issue.sub_questions.empty())
            throw InfeasibleSpec("issue '" + issue.issue_id +
                                 "' has no sub-questions, cannot produce positives");

        auto add = [&](Split split, int pos, int total) {
            const char* split_name = modfactory::to_string(split);
            for (int i = 0; i < total; ++i)
                plans.push_back(VideoPlan{
                    "vid_" + issue.issue_id + "_" + split_name + "_" + pad6(i),
                    issue.issue_id, split, i < pos});
        };
        add(Split::pretrain, spec.pretrain_pos, spec.pretrain_pos + spec.pretrain_neg);
        add(Split::sft, static_cast<int>(std::llround(spec.sft_pos_rate * spec.sft_total)),
            spec.sft_total);
        add(Split::eval, static_cast<int>(std::llround(spec.eval_pos_rate * spec.eval_total)),
            spec.eval_total);
    }

    std::vector<VideoRecord> records(plans.size());
    if (parallel) {
#pragma omp parallel for schedule(static)
        for (long i = 0; i < static_cast<long>(plans.size()); ++i)
            records[i] = build_video(guidelines, plans[i], spec.seed);
    } else {
        for (std::size_t i = 0; i < plans.size(); ++i)
            records[i] = build_video(guidelines, plans[i], spec.seed);
    }
    return records;
}

std::string to_jsonl_line(const VideoRecord& rec, bool strip_latent) {
    json j;
    j["video_id"] = rec.video_id;
    j["frame_refs"] = rec.frame_refs;
    j["overlay_text"] = rec.overlay_text;
    j["hashtags"] = rec.hashtags;
    json labels = json::object();
    for (const auto& [issue, label] : rec.human_labels)
        labels[issue] = modfactory::to_string(label);
    j["human_labels"] = labels;
    j["split"] = modfactory::to_string(rec.split);
    if (rec.latent_truth && !strip_latent) j["latent_truth"] = *rec.latent_truth;
    return j.dump();
}

VideoRecord from_jsonl_line(const std::string& line, std::size_t record_index) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw SchemaError(record_index, std::string("invalid JSON: ") + e.what());
    }
    VideoRecord rec;
    try {
        if (!j.contains("video_id")) throw SchemaError(record_index, "missing video_id");
        rec.video_id = j.at("video_id").get<std::string>();
        rec.frame_refs = j.at("frame_refs").get<std::vector<std::string>>();
        rec.overlay_text = j.value("overlay_text", "");
        rec.hashtags = j.value("hashtags", std::vector<std::string>{});
        for (const auto& [k, v] : j.at("human_labels").items())
            rec.human_labels[k] = label_from_string(v.get<std::string>());
        rec.split = split_from_string(j.at("split").get<std::string>());
        if (j.contains("latent_truth"))
            rec.latent_truth = j.at("latent_truth").get<LatentTruth>();
    } catch (const SchemaError&) {
        throw;
    } catch (const std::exception& e) {
        throw SchemaError(record_index, e.what());
    }
    if (rec.frame_refs.empty())
        throw SchemaError(record_index, "frame_refs must be nonempty");
    return rec;
}

void store_corpus(std::vector<VideoRecord> records, const std::string& path,
                  bool strip_latent) {
    std::sort(records.begin(), records.end(),
              [](const VideoRecord& a, const VideoRecord& b) {
                  return a.video_id < b.video_id;
              });
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    for (const auto& rec : records) out << to_jsonl_line(rec, strip_latent) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

std::vector<VideoRecord> load_corpus(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open corpus file: " + path);
    std::vector<VideoRecord> records;
    std::string line;
    std::size_t idx = 0;
    while (std::getline(in, line)) {
        ++idx;
        if (line.empty()) continue;
        records.push_back(from_jsonl_line(line, idx));
    }
    return records;
}

}  // namespace modfactory::corpus
