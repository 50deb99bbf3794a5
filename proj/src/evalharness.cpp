#include "modfactory/evalharness.hpp"

#include "modfactory/datagen.hpp"
#include "modfactory/rng.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

namespace modfactory::evalharness {

using annotator::AnswerFormat;
using guideline::IssueSpec;
using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\n\r");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\n\r");
    return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return s;
}

struct WordMatch {
    std::size_t begin = std::string::npos;
    std::size_t end = 0;
    bool yes = false;
};

// alphabetic tokens equal to yes/no, case-insensitive
std::vector<WordMatch> yes_no_tokens(const std::string& text) {
    std::vector<WordMatch> out;
    std::size_t i = 0;
    while (i < text.size()) {
        if (!std::isalpha(static_cast<unsigned char>(text[i]))) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j < text.size() && std::isalpha(static_cast<unsigned char>(text[j])))
            ++j;
        std::string word = lower(text.substr(i, j - i));
        if (word == "yes" || word == "no")
            out.push_back({i, j, word == "yes"});
        i = j;
    }
    return out;
}

}  // namespace

Extracted extract_answer(const std::string& text, AnswerFormat format) {
    if (trim(text).empty()) throw UnparseableAnswer("empty response text");
    auto tokens = yes_no_tokens(text);
    if (format == AnswerFormat::answer_then_reason) {
        // the yes/no must be the leading token, punctuation aside
        std::size_t first_alpha = text.find_first_of(
            "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ");
        if (tokens.empty() || tokens.front().begin != first_alpha)
            throw UnparseableAnswer("no leading yes/no token in: " +
                                    text.substr(0, 80));
        const WordMatch& m = tokens.front();
        std::size_t rest = m.end;
        while (rest < text.size() &&
               (std::ispunct(static_cast<unsigned char>(text[rest])) ||
                std::isspace(static_cast<unsigned char>(text[rest]))))
            ++rest;
        return {m.yes ? Label::positive : Label::negative, text.substr(rest)};
    }
    // reason_then_answer: the last yes/no token decides
    if (tokens.empty())
        throw UnparseableAnswer("no yes/no token in: " + text.substr(0, 80));
    const WordMatch& m = tokens.back();
    // strip the final clause (back to the previous sentence end) from the
    // explanation so cue sentences stay intact
    std::size_t cut = text.rfind('.', m.begin == 0 ? 0 : m.begin - 1);
    std::string explanation =
        cut == std::string::npos ? "" : trim(text.substr(0, cut + 1));
    return {m.yes ? Label::positive : Label::negative, explanation};
}

RationaleCheck detect_inconsistency(const std::string& explanation,
                                    Label final_label, const IssueSpec& issue) {
    std::map<std::string, bool> found;  // subq_id -> answer yes
    for (const auto& sq : issue.sub_questions) {
        std::string cue = "Sub-question \"" + sq.question_text + "\" answer:";
        auto pos = explanation.find(cue);
        if (pos == std::string::npos) continue;
        auto tokens = yes_no_tokens(explanation.substr(pos + cue.size(), 8));
        if (tokens.empty()) continue;
        found[sq.subq_id] = tokens.front().yes;
    }
    if (found.empty()) return RationaleCheck::indeterminate;

    bool any_violation = false;
    for (const auto& [id, yes] : found)
        if (guideline::is_violation(*issue.find_subq(id), yes)) any_violation = true;

    std::optional<Label> rationale;
    if (issue.aggregation.kind == guideline::AggregationKind::any_positive) {
        if (any_violation)
            rationale = Label::positive;
        else if (found.size() == issue.sub_questions.size())
            rationale = Label::negative;
    } else if (found.size() == issue.sub_questions.size()) {
        std::map<std::string, bool> answers;
        for (const auto& [id, yes] : found) answers[id] = yes;
        rationale = guideline::aggregate(issue, answers);
    }
    if (!rationale) return RationaleCheck::indeterminate;
    return *rationale == final_label ? RationaleCheck::consistent
                                     : RationaleCheck::inconsistent;
}

double label_probability(const annotator::LabelLogits& logits) {
    if (!std::isfinite(logits.yes) || !std::isfinite(logits.no))
        throw NonFiniteLogit("label logits must be finite");
    double m = std::max(logits.yes, logits.no);
    double ey = std::exp(logits.yes - m);
    double en = std::exp(logits.no - m);
    return ey / (ey + en);
}

double accuracy(std::span<const EvalRecord> records) {
    if (records.empty()) throw EmptyInput("accuracy over empty record set");
    std::int64_t correct = 0;
    for (const auto& r : records)
        if (r.predicted_label == r.human_label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(records.size());
}

double f1(std::span<const EvalRecord> records) {
    if (records.empty()) throw EmptyInput("f1 over empty record set");
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (const auto& r : records) {
        bool pred = r.predicted_label == Label::positive;
        bool truth = r.human_label == Label::positive;
        if (pred && truth) ++tp;
        else if (pred && !truth) ++fp;
        else if (!pred && truth) ++fn;
    }
    double p = (tp + fp) ? static_cast<double>(tp) / (tp + fp) : 0.0;
    double r = (tp + fn) ? static_cast<double>(tp) / (tp + fn) : 0.0;
    return (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
}

double roc_auc(std::span<const EvalRecord> records) {
    std::vector<std::pair<double, bool>> scored;  // (score, is_positive)
    std::int64_t npos = 0, nneg = 0;
    for (const auto& r : records) {
        bool pos = r.human_label == Label::positive;
        scored.emplace_back(r.score, pos);
        pos ? ++npos : ++nneg;
    }
    if (npos == 0 || nneg == 0)
        throw DegenerateClasses("roc_auc needs at least one record per class");
    std::sort(scored.begin(), scored.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // Mann-Whitney via tie-averaged ranks
    double pos_rank_sum = 0;
    std::size_t i = 0;
    while (i < scored.size()) {
        std::size_t j = i;
        while (j < scored.size() && scored[j].first == scored[i].first) ++j;
        double avg_rank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (scored[k].second) pos_rank_sum += avg_rank;
        i = j;
    }
    double u = pos_rank_sum - 0.5 * static_cast<double>(npos) * (npos + 1);
    return u / (static_cast<double>(npos) * static_cast<double>(nneg));
}

double precision_at_recall(std::span<const EvalRecord> records, double target) {
    std::int64_t npos = 0;
    for (const auto& r : records)
        if (r.human_label == Label::positive) ++npos;
    if (npos == 0) throw NoPositives("precision_at_recall needs a positive record");

    std::vector<double> thresholds;
    for (const auto& r : records) thresholds.push_back(r.score);
    std::sort(thresholds.begin(), thresholds.end());
    thresholds.erase(std::unique(thresholds.begin(), thresholds.end()),
                     thresholds.end());

    double best = 0.0;
    for (double t : thresholds) {  // predict positive iff score >= t
        std::int64_t tp = 0, fp = 0;
        for (const auto& r : records) {
            if (r.score < t) continue;
            (r.human_label == Label::positive) ? ++tp : ++fp;
        }
        double recall = static_cast<double>(tp) / static_cast<double>(npos);
        if (recall < target) continue;
        double precision =
            (tp + fp) ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        best = std::max(best, precision);
    }
    return best;
}

MetricsReport compute_metrics(
    const std::map<std::string, std::vector<EvalRecord>>& per_issue_records) {
    MetricsReport report;
    std::vector<EvalRecord> pooled;
    for (const auto& [issue, records] : per_issue_records) {
        if (records.empty()) throw EmptyInput("no records for issue " + issue);
        IssueMetrics m;
        m.accuracy = accuracy(records);
        m.f1 = f1(records);
        m.auc = roc_auc(records);
        m.p_at_r90 = precision_at_recall(records, 0.90);
        m.total = static_cast<std::int64_t>(records.size());
        for (const auto& r : records)
            if (r.human_label == Label::positive) ++m.positives;
        report.per_issue[issue] = m;
        pooled.insert(pooled.end(), records.begin(), records.end());
    }
    report.overall_auc = roc_auc(pooled);
    return report;
}

std::string MetricsReport::to_json() const {
    json j;
    json issues = json::object();
    for (const auto& [issue, m] : per_issue) {
        issues[issue] = {{"accuracy", m.accuracy}, {"f1", m.f1},
                         {"auc", m.auc},           {"p_at_r90", m.p_at_r90},
                         {"total", m.total},       {"positives", m.positives}};
    }
    j["per_issue"] = issues;
    j["overall_auc"] = overall_auc;
    j["threshold"] = threshold;
    return j.dump(2);
}

// ---- fixture & rendering -------------------------------------------------

Fixture Fixture::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed fixture: ") + e.what());
    }
    Fixture f;
    f.layout = j.value("layout", "zero_shot");
    f.issues = j.value("issues", std::vector<std::string>{});
    for (const auto& row : j.value("rows", json::array())) {
        FixtureRow r;
        r.model = row.value("model", "");
        r.strategy = row.value("strategy", "-");
        if (row.contains("overall_auc") && !row["overall_auc"].is_null())
            r.overall_auc = row["overall_auc"].get<double>();
        const json cells = row.value("cells", json::object());
        for (const auto& [issue, cell] : cells.items()) {
            FixtureCell c;
            auto get = [&](const char* key) -> std::optional<double> {
                if (cell.contains(key) && !cell[key].is_null())
                    return cell[key].get<double>();
                return std::nullopt;
            };
            c.acc = get("acc");
            c.f1 = get("f1");
            c.auc = get("auc");
            c.p_at_r90 = get("p_at_r90");
            r.cells[issue] = c;
        }
        f.rows.push_back(std::move(r));
    }
    return f;
}

Fixture Fixture::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open fixture: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

namespace {

std::string fmt2(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

// cells laid out as text; numeric columns get their maxima bolded
std::string render_table(const std::vector<std::string>& headers,
                         const std::vector<bool>& numeric,
                         std::vector<std::vector<std::optional<double>>> values,
                         const std::vector<std::vector<std::string>>& labels) {
    const std::size_t cols = headers.size();
    const std::size_t rows = labels.size();
    std::vector<std::vector<std::string>> text(rows,
                                               std::vector<std::string>(cols));
    for (std::size_t c = 0; c < cols; ++c) {
        if (!numeric[c]) {
            for (std::size_t r = 0; r < rows; ++r) text[r][c] = labels[r][c];
            continue;
        }
        std::optional<double> colmax;
        for (std::size_t r = 0; r < rows; ++r)
            if (values[r][c] && (!colmax || *values[r][c] > *colmax))
                colmax = values[r][c];
        for (std::size_t r = 0; r < rows; ++r) {
            if (!values[r][c]) {
                text[r][c] = "-";
            } else if (colmax && *values[r][c] == *colmax) {
                text[r][c] = "**" + fmt2(*values[r][c]) + "**";
            } else {
                text[r][c] = fmt2(*values[r][c]);
            }
        }
    }

    std::vector<std::size_t> width(cols);
    for (std::size_t c = 0; c < cols; ++c) {
        width[c] = headers[c].size();
        for (std::size_t r = 0; r < rows; ++r)
            width[c] = std::max(width[c], text[r][c].size());
    }

    std::ostringstream out;
    auto emit_row = [&](const std::vector<std::string>& cells) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (c) out << "  ";
            if (numeric[c])
                out << std::string(width[c] - cells[c].size(), ' ') << cells[c];
            else
                out << cells[c] << std::string(width[c] - cells[c].size(), ' ');
        }
        out << "\n";
    };
    emit_row(headers);
    std::size_t total = 0;
    for (std::size_t c = 0; c < cols; ++c) total += width[c] + (c ? 2 : 0);
    out << std::string(total, '-') << "\n";
    for (std::size_t r = 0; r < rows; ++r) emit_row(text[r]);
    return out.str();
}

}  // namespace

std::string render_fixture_table(const Fixture& fixture) {
    const bool zero_shot = fixture.layout == "zero_shot";
    std::vector<std::string> headers;
    std::vector<bool> numeric;
    headers.push_back("Model");
    numeric.push_back(false);
    if (zero_shot) {
        headers.push_back("Strategy");
        numeric.push_back(false);
    }
    for (const auto& issue : fixture.issues) {
        if (zero_shot) {
            headers.push_back(issue + " ACC");
            headers.push_back(issue + " F1");
            numeric.insert(numeric.end(), {true, true});
        } else {
            headers.push_back(issue + " AUC");
            headers.push_back(issue + " ACC");
            headers.push_back(issue + " P@R90");
            numeric.insert(numeric.end(), {true, true, true});
        }
    }
    if (zero_shot) {
        headers.push_back("Overall AUC");
        numeric.push_back(true);
    }

    std::vector<std::vector<std::optional<double>>> values;
    std::vector<std::vector<std::string>> labels;
    for (const auto& row : fixture.rows) {
        std::vector<std::optional<double>> v(headers.size());
        std::vector<std::string> l(headers.size());
        std::size_t c = 0;
        l[c++] = row.model;
        if (zero_shot) l[c++] = row.strategy;
        for (const auto& issue : fixture.issues) {
            FixtureCell cell;
            auto it = row.cells.find(issue);
            if (it != row.cells.end()) cell = it->second;
            if (zero_shot) {
                v[c++] = cell.acc;
                v[c++] = cell.f1;
            } else {
                v[c++] = cell.auc;
                v[c++] = cell.acc;
                v[c++] = cell.p_at_r90;
            }
        }
        if (zero_shot) v[c++] = row.overall_auc;
        values.push_back(std::move(v));
        labels.push_back(std::move(l));
    }
    return render_table(headers, numeric, std::move(values), labels);
}

std::string render_metrics_table(const MetricsReport& report, EvalMode layout) {
    Fixture f;
    f.layout = layout == EvalMode::zero_shot ? "zero_shot" : "sft";
    FixtureRow row;
    row.model = "measured";
    row.strategy = "-";
    for (const auto& [issue, m] : report.per_issue) {
        f.issues.push_back(issue);
        FixtureCell cell;
        cell.acc = m.accuracy * 100.0;
        cell.f1 = m.f1 * 100.0;
        cell.auc = m.auc * 100.0;
        cell.p_at_r90 = m.p_at_r90 * 100.0;
        row.cells[issue] = cell;
    }
    row.overall_auc = report.overall_auc * 100.0;
    f.rows.push_back(std::move(row));
    return render_fixture_table(f);
}

// ---- eval drivers --------------------------------------------------------

std::map<std::string, std::vector<EvalRecord>> run_zero_shot_eval(
    const std::vector<corpus::VideoRecord>& corpus_records,
    const guideline::GuidelineSet& guidelines, annotator::AnnotatorClient& client,
    const std::string& eval_prompt_template, AnswerFormat format, int parallelism) {
    struct Pending {
        const corpus::VideoRecord* video;
        const IssueSpec* issue;
    };
    std::vector<Pending> pending;
    std::vector<annotator::AnnotationRequest> requests;
    for (const auto& video : corpus_records) {
        if (video.split != Split::eval) continue;
        for (const auto& issue : guidelines.issues) {
            if (!video.human_labels.count(issue.issue_id)) continue;
            annotator::AnnotationRequest req;
            req.prompt =
                datagen::render_prompt(eval_prompt_template, &issue, nullptr, nullptr);
            req.frame_refs = video.frame_refs;
            req.want_label_logits = true;
            pending.push_back({&video, &issue});
            requests.push_back(std::move(req));
        }
    }

    auto outcomes = annotator::annotate_batch(client, requests, parallelism);
    std::map<std::string, std::vector<EvalRecord>> out;
    for (std::size_t i = 0; i < outcomes.size(); ++i) {
        if (!outcomes[i].ok())
            throw annotator::BackendError("eval request for video " +
                                          pending[i].video->video_id + " failed: " +
                                          outcomes[i].error);
        const auto& resp = *outcomes[i].response;
        EvalRecord rec;
        rec.video_id = pending[i].video->video_id;
        rec.issue_id = pending[i].issue->issue_id;
        rec.human_label = pending[i].video->human_labels.at(rec.issue_id);
        rec.mode = EvalMode::zero_shot;
        auto ex = extract_answer(resp.text, format);
        rec.explanation = ex.explanation;
        if (resp.label_logits) {
            rec.score = label_probability(*resp.label_logits);
        } else {
            rec.score = ex.label == Label::positive ? 1.0 : 0.0;
        }
        rec.predicted_label = rec.score >= 0.5 ? Label::positive : Label::negative;
        out[rec.issue_id].push_back(std::move(rec));
    }
    return out;
}

std::map<std::string, std::vector<EvalRecord>> run_sft_eval(
    const std::vector<corpus::VideoRecord>& corpus_records,
    const guideline::GuidelineSet& guidelines, const std::string& score_file) {
    std::ifstream in(score_file, std::ios::binary);
    if (!in) throw IoError("cannot open SFT score file: " + score_file);
    std::map<std::pair<std::string, std::string>, double> scores;
    std::string line;
    std::size_t idx = 0;
    while (std::getline(in, line)) {
        ++idx;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw corpus::SchemaError(idx, std::string("invalid JSON: ") + e.what());
        }
        try {
            double s = j.at("score").get<double>();
            if (!(s >= 0.0 && s <= 1.0))
                throw corpus::SchemaError(idx, "score outside [0,1]");
            scores[{j.at("video_id").get<std::string>(),
                    j.at("issue_id").get<std::string>()}] = s;
        } catch (const corpus::SchemaError&) {
            throw;
        } catch (const std::exception& e) {
            throw corpus::SchemaError(idx, e.what());
        }
    }

    std::map<std::string, std::vector<EvalRecord>> out;
    for (const auto& video : corpus_records) {
        if (video.split != Split::eval) continue;
        for (const auto& issue : guidelines.issues) {
            auto lt = video.human_labels.find(issue.issue_id);
            if (lt == video.human_labels.end()) continue;
            auto it = scores.find({video.video_id, issue.issue_id});
            if (it == scores.end())
                throw DataError("no SFT score for (" + video.video_id + ", " +
                                issue.issue_id + ")");
            EvalRecord rec;
            rec.video_id = video.video_id;
            rec.issue_id = issue.issue_id;
            rec.human_label = lt->second;
            rec.score = it->second;
            rec.predicted_label =
                rec.score >= 0.5 ? Label::positive : Label::negative;
            rec.mode = EvalMode::sft;
            out[rec.issue_id].push_back(std::move(rec));
        }
    }
    return out;
}

std::string to_jsonl_line(const EvalRecord& rec) {
    json j;
    j["video_id"] = rec.video_id;
    j["issue_id"] = rec.issue_id;
    j["human_label"] = modfactory::to_string(rec.human_label);
    j["predicted_label"] = modfactory::to_string(rec.predicted_label);
    j["score"] = rec.score;
    if (rec.explanation) j["explanation"] = *rec.explanation;
    j["mode"] = rec.mode == EvalMode::zero_shot ? "zero_shot" : "sft";
    return j.dump();
}

EvalRecord from_jsonl_line(const std::string& line, std::size_t idx) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        throw corpus::SchemaError(idx, std::string("invalid JSON: ") + e.what());
    }
    EvalRecord rec;
    try {
        rec.video_id = j.at("video_id").get<std::string>();
        rec.issue_id = j.at("issue_id").get<std::string>();
        rec.human_label = label_from_string(j.at("human_label").get<std::string>());
        rec.predicted_label =
            label_from_string(j.at("predicted_label").get<std::string>());
        rec.score = j.at("score").get<double>();
        if (j.contains("explanation"))
            rec.explanation = j["explanation"].get<std::string>();
        rec.mode = j.value("mode", "zero_shot") == "sft" ? EvalMode::sft
                                                         : EvalMode::zero_shot;
    } catch (const std::exception& e) {
        throw corpus::SchemaError(idx, e.what());
    }
    return rec;
}

void store_records(const std::map<std::string, std::vector<EvalRecord>>& records,
                   const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for write: " + path);
    for (const auto& [issue, recs] : records)
        for (const auto& r : recs) out << to_jsonl_line(r) << "\n";
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace modfactory::evalharness
