#include "modfactory/guideline.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace modfactory::guideline {

namespace {

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

bool valid_id(const std::string& s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) {
        return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
    });
}

// "[a, b, c]" or "a, b, c"
std::vector<std::string> parse_id_list(const std::string& raw) {
    std::string s = trim(raw);
    if (!s.empty() && s.front() == '[' && s.back() == ']')
        s = s.substr(1, s.size() - 2);
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Line {
    int number;      // 1-based
    int indent;      // leading spaces
    std::string key;
    std::string value;
    bool has_key;    // false for bare indented prose
    std::string raw;
};

void finish_issue(IssueSpec& issue, std::vector<IssueSpec>& issues, int line) {
    if (issue.sub_questions.empty())
        throw ValidationError("issue '" + issue.issue_id +
                              "' has no sub-questions (ending at line " +
                              std::to_string(line) + ")");
    std::set<std::string> subq_ids;
    for (const auto& sq : issue.sub_questions) {
        if (!subq_ids.insert(sq.subq_id).second)
            throw ValidationError("duplicate sub-question id '" + sq.subq_id +
                                  "' in issue '" + issue.issue_id + "'");
        if (sq.question_text.empty() || sq.question_text.back() != '?')
            throw ValidationError("sub-question '" + sq.subq_id +
                                  "' text must end with '?'");
    }
    for (const auto& cl : issue.clauses) {
        if (cl.maps_to.empty())
            throw ValidationError("clause in issue '" + issue.issue_id +
                                  "' references no sub-questions");
        for (const auto& id : cl.maps_to)
            if (!subq_ids.count(id))
                throw ValidationError("clause in issue '" + issue.issue_id +
                                      "' references unknown sub-question '" + id +
                                      "'");
    }
    if (issue.aggregation.kind == AggregationKind::k_of_n) {
        if (!issue.aggregation.k)
            throw ValidationError("issue '" + issue.issue_id +
                                  "': k_of_n aggregation requires k");
        int k = *issue.aggregation.k;
        if (k < 1 || k > static_cast<int>(issue.sub_questions.size()))
            throw ValidationError("issue '" + issue.issue_id + "': k=" +
                                  std::to_string(k) + " out of range 1.." +
                                  std::to_string(issue.sub_questions.size()));
    }
    for (const auto& prev : issues)
        if (prev.issue_id == issue.issue_id)
            throw ValidationError("duplicate issue id '" + issue.issue_id + "'");
    issues.push_back(std::move(issue));
    issue = IssueSpec{};
}

}  // namespace

SyntaxError::SyntaxError(int line_, int column_, const std::string& msg)
    : DataError("line " + std::to_string(line_) + ":" + std::to_string(column_) +
                ": " + msg),
      line(line_),
      column(column_) {}

const SubQuestion* IssueSpec::find_subq(const std::string& id) const {
    for (const auto& sq : sub_questions)
        if (sq.subq_id == id) return &sq;
    return nullptr;
}

const IssueSpec* GuidelineSet::find(const std::string& issue_id) const {
    for (const auto& i : issues)
        if (i.issue_id == issue_id) return &i;
    return nullptr;
}

const IssueSpec& GuidelineSet::at(const std::string& issue_id) const {
    const IssueSpec* p = find(issue_id);
    if (!p) throw DataError("unknown issue id: " + issue_id);
    return *p;
}

const char* to_string(Polarity p) {
    return p == Polarity::yes_is_violation ? "yes_is_violation" : "no_is_violation";
}

const char* to_string(AggregationKind k) {
    switch (k) {
        case AggregationKind::any_positive: return "any_positive";
        case AggregationKind::all_positive: return "all_positive";
        default: return "k_of_n";
    }
}

GuidelineSet parse_guideline_set(const std::string& document) {
    std::vector<Line> lines;
    {
        std::stringstream ss(document);
        std::string raw;
        int n = 0;
        while (std::getline(ss, raw)) {
            ++n;
            if (!raw.empty() && raw.back() == '\r') raw.pop_back();
            std::string t = trim(raw);
            if (t.empty() || t.front() == '#') continue;
            Line ln;
            ln.number = n;
            ln.raw = raw;
            ln.indent = static_cast<int>(raw.find_first_not_of(' '));
            if (raw.find('\t') != std::string::npos &&
                raw.find('\t') < static_cast<std::size_t>(ln.indent))
                throw SyntaxError(n, 1, "tab indentation is not allowed");
            auto colon = t.find(':');
            if (colon != std::string::npos) {
                ln.has_key = true;
                ln.key = trim(t.substr(0, colon));
                ln.value = trim(t.substr(colon + 1));
            } else {
                ln.has_key = false;
                ln.value = t;
            }
            lines.push_back(std::move(ln));
        }
    }

    GuidelineSet set;
    IssueSpec issue;
    bool in_issue = false;
    // what the last top-level entry was, for attaching indented lines
    enum class Ctx { none, guideline, subq, clause } ctx = Ctx::none;

    for (const auto& ln : lines) {
        if (ln.indent > 0) {
            if (!in_issue || ctx == Ctx::none)
                throw SyntaxError(ln.number, ln.indent + 1,
                                  "unexpected indented line");
            switch (ctx) {
                case Ctx::guideline:
                    if (!issue.guideline_text.empty()) issue.guideline_text += "\n";
                    issue.guideline_text += ln.has_key
                        ? trim(ln.raw)
                        : ln.value;
                    break;
                case Ctx::subq: {
                    if (!ln.has_key)
                        throw SyntaxError(ln.number, ln.indent + 1,
                                          "expected 'text:' or 'polarity:'");
                    auto& sq = issue.sub_questions.back();
                    if (ln.key == "text") {
                        sq.question_text = ln.value;
                    } else if (ln.key == "polarity") {
                        if (ln.value == "yes_is_violation")
                            sq.polarity = Polarity::yes_is_violation;
                        else if (ln.value == "no_is_violation")
                            sq.polarity = Polarity::no_is_violation;
                        else
                            throw SyntaxError(ln.number, ln.indent + 1,
                                              "unknown polarity '" + ln.value + "'");
                    } else {
                        throw SyntaxError(ln.number, ln.indent + 1,
                                          "unknown sub-question key '" + ln.key + "'");
                    }
                    break;
                }
                case Ctx::clause: {
                    if (!ln.has_key || ln.key != "maps_to")
                        throw SyntaxError(ln.number, ln.indent + 1,
                                          "expected 'maps_to:'");
                    issue.clauses.back().maps_to = parse_id_list(ln.value);
                    break;
                }
                default: break;
            }
            continue;
        }

        if (!ln.has_key)
            throw SyntaxError(ln.number, 1, "expected 'key: value'");

        if (ln.key == "version") {
            if (in_issue)
                throw SyntaxError(ln.number, 1, "version must precede issues");
            set.version = ln.value;
            continue;
        }
        if (ln.key == "issue") {
            if (in_issue) finish_issue(issue, set.issues, ln.number);
            in_issue = true;
            ctx = Ctx::none;
            if (!valid_id(ln.value))
                throw SyntaxError(ln.number, 1,
                                  "issue id must match [a-z0-9_]+, got '" +
                                      ln.value + "'");
            issue.issue_id = ln.value;
            continue;
        }
        if (!in_issue)
            throw SyntaxError(ln.number, 1,
                              "'" + ln.key + "' outside of an issue block");
        if (ln.key == "title") {
            issue.title = ln.value;
            ctx = Ctx::none;
        } else if (ln.key == "guideline") {
            ctx = Ctx::guideline;
            if (!ln.value.empty()) issue.guideline_text = ln.value;
        } else if (ln.key == "subq") {
            if (!valid_id(ln.value))
                throw SyntaxError(ln.number, 1,
                                  "sub-question id must match [a-z0-9_]+");
            issue.sub_questions.push_back(SubQuestion{ln.value, "", {}});
            ctx = Ctx::subq;
        } else if (ln.key == "clause") {
            issue.clauses.push_back(GuidelineClause{ln.value, {}});
            ctx = Ctx::clause;
        } else if (ln.key == "aggregation") {
            std::stringstream ss(ln.value);
            std::string kind;
            ss >> kind;
            if (kind == "any_positive")
                issue.aggregation = {AggregationKind::any_positive, {}};
            else if (kind == "all_positive")
                issue.aggregation = {AggregationKind::all_positive, {}};
            else if (kind == "k_of_n") {
                int k = 0;
                if (!(ss >> k))
                    throw SyntaxError(ln.number, 1, "k_of_n requires a count");
                issue.aggregation = {AggregationKind::k_of_n, k};
            } else {
                throw SyntaxError(ln.number, 1,
                                  "unknown aggregation kind '" + kind + "'");
            }
            ctx = Ctx::none;
        } else {
            throw SyntaxError(ln.number, 1, "unknown key '" + ln.key + "'");
        }
    }
    if (in_issue) finish_issue(issue, set.issues, lines.empty() ? 0 : lines.back().number);

    if (set.issues.empty())
        throw ValidationError("guideline document contains no issues");
    return set;
}

GuidelineSet load_guideline_set(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open guideline file: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_guideline_set(ss.str());
}

std::string serialize(const GuidelineSet& set) {
    std::ostringstream out;
    out << "version: " << set.version << "\n";
    for (const auto& issue : set.issues) {
        out << "\nissue: " << issue.issue_id << "\n";
        out << "title: " << issue.title << "\n";
        if (!issue.guideline_text.empty()) {
            out << "guideline:\n";
            std::stringstream ss(issue.guideline_text);
            std::string line;
            while (std::getline(ss, line)) out << "  " << line << "\n";
        }
        for (const auto& sq : issue.sub_questions) {
            out << "subq: " << sq.subq_id << "\n";
            out << "  text: " << sq.question_text << "\n";
            out << "  polarity: " << to_string(sq.polarity) << "\n";
        }
        for (const auto& cl : issue.clauses) {
            out << "clause: " << cl.text << "\n  maps_to: [";
            for (std::size_t i = 0; i < cl.maps_to.size(); ++i)
                out << (i ? ", " : "") << cl.maps_to[i];
            out << "]\n";
        }
        out << "aggregation: " << to_string(issue.aggregation.kind);
        if (issue.aggregation.k) out << " " << *issue.aggregation.k;
        out << "\n";
    }
    return out.str();
}

std::vector<Diagnostic> validate_decomposition(const IssueSpec& spec) {
    std::vector<Diagnostic> diags;
    std::set<std::string> referenced;
    for (const auto& cl : spec.clauses) {
        if (cl.maps_to.empty()) {
            std::string head = cl.text.substr(0, 60);
            diags.push_back({Diagnostic::Kind::uncovered_clause,
                             "clause not covered by any sub-question: \"" + head +
                                 "\""});
        }
        for (const auto& id : cl.maps_to) referenced.insert(id);
    }
    for (const auto& sq : spec.sub_questions)
        if (!referenced.count(sq.subq_id))
            diags.push_back({Diagnostic::Kind::unreferenced_subq,
                             "sub-question '" + sq.subq_id +
                                 "' is referenced by no clause"});
    for (std::size_t i = 0; i < spec.sub_questions.size(); ++i)
        for (std::size_t j = i + 1; j < spec.sub_questions.size(); ++j)
            if (spec.sub_questions[i].question_text ==
                spec.sub_questions[j].question_text)
                diags.push_back({Diagnostic::Kind::duplicate_question,
                                 "sub-questions '" + spec.sub_questions[i].subq_id +
                                     "' and '" + spec.sub_questions[j].subq_id +
                                     "' have identical text"});
    return diags;
}

Label aggregate(const IssueSpec& spec, const std::map<std::string, bool>& answers) {
    for (const auto& [id, _] : answers)
        if (!spec.find_subq(id))
            throw UnknownAnswer("answer for unknown sub-question '" + id +
                                "' in issue '" + spec.issue_id + "'");
    int violations = 0;
    for (const auto& sq : spec.sub_questions) {
        auto it = answers.find(sq.subq_id);
        if (it == answers.end())
            throw MissingAnswer("missing answer for sub-question '" + sq.subq_id +
                                "' in issue '" + spec.issue_id + "'");
        if (is_violation(sq, it->second)) ++violations;
    }
    const int n = static_cast<int>(spec.sub_questions.size());
    bool positive = false;
    switch (spec.aggregation.kind) {
        case AggregationKind::any_positive: positive = violations >= 1; break;
        case AggregationKind::all_positive: positive = violations == n; break;
        case AggregationKind::k_of_n:
            if (!spec.aggregation.k)
                throw ValidationError("k_of_n aggregation without k in issue '" +
                                      spec.issue_id + "'");
            positive = violations >= *spec.aggregation.k;
            break;
    }
    return positive ? Label::positive : Label::negative;
}

}  // namespace modfactory::guideline
