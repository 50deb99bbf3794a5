#pragma once

#include "modfactory/common.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace modfactory::guideline {

enum class Polarity { yes_is_violation, no_is_violation };

enum class AggregationKind { any_positive, all_positive, k_of_n };

struct SubQuestion {
    std::string subq_id;
    std::string question_text;  // yes/no interrogative, ends with '?'
    Polarity polarity = Polarity::yes_is_violation;
};

struct GuidelineClause {
    std::string text;
    std::vector<std::string> maps_to;  // sub-question ids
};

struct AggregationRule {
    AggregationKind kind = AggregationKind::any_positive;
    std::optional<int> k;  // required iff kind == k_of_n
};

struct IssueSpec {
    std::string issue_id;  // [a-z0-9_]+
    std::string title;
    std::string guideline_text;
    std::vector<GuidelineClause> clauses;
    std::vector<SubQuestion> sub_questions;
    AggregationRule aggregation;

    const SubQuestion* find_subq(const std::string& id) const;
};

struct GuidelineSet {
    std::string version;
    std::vector<IssueSpec> issues;  // file order preserved

    const IssueSpec* find(const std::string& issue_id) const;
    const IssueSpec& at(const std::string& issue_id) const;
};

class SyntaxError : public DataError {
  public:
    SyntaxError(int line, int column, const std::string& msg);
    int line;
    int column;
};

class ValidationError : public DataError {
  public:
    using DataError::DataError;
};

class MissingAnswer : public DataError {
  public:
    using DataError::DataError;
};

class UnknownAnswer : public DataError {
  public:
    using DataError::DataError;
};

struct Diagnostic {
    enum class Kind { uncovered_clause, unreferenced_subq, duplicate_question };
    Kind kind;
    std::string message;
};

GuidelineSet parse_guideline_set(const std::string& document);
GuidelineSet load_guideline_set(const std::string& path);
std::string serialize(const GuidelineSet& set);

std::vector<Diagnostic> validate_decomposition(const IssueSpec& spec);

// answers: subq_id -> true for "yes". Label is positive when the
// aggregation rule fires over per-sub-question violation indicators.
Label aggregate(const IssueSpec& spec, const std::map<std::string, bool>& answers);

inline bool is_violation(const SubQuestion& sq, bool answer_is_yes) {
    return sq.polarity == Polarity::yes_is_violation ? answer_is_yes : !answer_is_yes;
}

const char* to_string(Polarity p);
const char* to_string(AggregationKind k);

}  // namespace modfactory::guideline
