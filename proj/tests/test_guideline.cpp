#include <doctest.h>

#include "modfactory/guideline.hpp"
#include "test_helpers.hpp"

#include <map>

using namespace modfactory;
using namespace modfactory::guideline;

namespace {

IssueSpec make_issue(int n_subq, AggregationKind kind = AggregationKind::any_positive,
                     std::optional<int> k = {}) {
    IssueSpec issue;
    issue.issue_id = "t";
    issue.title = "Test Issue";
    for (int i = 0; i < n_subq; ++i) {
        SubQuestion sq;
        sq.subq_id = "q" + std::to_string(i);
        sq.question_text = "Question " + std::to_string(i) + "?";
        sq.polarity = Polarity::yes_is_violation;
        issue.sub_questions.push_back(sq);
    }
    issue.aggregation = {kind, k};
    return issue;
}

}  // namespace

TEST_CASE("parses the bundled guideline file") {
    auto set = testing_helpers::load_default_guidelines();
    CHECK(set.version == "1");
    REQUIRE(set.issues.size() == 3);

    const IssueSpec& ssc = set.at("ssc");
    CHECK(ssc.title == "Sexually Suggestive Content");
    REQUIRE(ssc.sub_questions.size() == 3);
    CHECK(ssc.sub_questions[0].question_text == "Are private body parts exposed?");
    CHECK(ssc.guideline_text.find("Adult Image-Based Sexual Abuse") !=
          std::string::npos);
    REQUIRE(ssc.clauses.size() == 3);
    CHECK(ssc.clauses[0].text.find("Adult Image-Based Sexual Abuse occurs when") !=
          std::string::npos);
    CHECK(ssc.clauses[0].maps_to == std::vector<std::string>{"q_exposure"});
    CHECK(ssc.aggregation.kind == AggregationKind::any_positive);

    // mixed polarity survives the round trip
    const IssueSpec& uc = set.at("uc");
    CHECK(uc.find_subq("q_transformative")->polarity == Polarity::no_is_violation);
}

TEST_CASE("empty document is a validation error") {
    CHECK_THROWS_AS(parse_guideline_set("version: 1\n"), ValidationError);
}

TEST_CASE("dangling clause reference names the missing id") {
    std::string doc =
        "version: 1\n"
        "issue: a\n"
        "title: A\n"
        "subq: q1\n"
        "  text: Is it bad?\n"
        "clause: something\n"
        "  maps_to: [q9]\n"
        "aggregation: any_positive\n";
    try {
        parse_guideline_set(doc);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("q9") != std::string::npos);
    }
}

TEST_CASE("duplicate ids are rejected") {
    std::string doc =
        "version: 1\n"
        "issue: a\n"
        "subq: q1\n"
        "  text: One?\n"
        "subq: q1\n"
        "  text: Two?\n"
        "aggregation: any_positive\n";
    CHECK_THROWS_AS(parse_guideline_set(doc), ValidationError);

    std::string doc2 =
        "version: 1\n"
        "issue: a\n"
        "subq: q1\n"
        "  text: One?\n"
        "aggregation: any_positive\n"
        "issue: a\n"
        "subq: q1\n"
        "  text: One?\n"
        "aggregation: any_positive\n";
    CHECK_THROWS_AS(parse_guideline_set(doc2), ValidationError);
}

TEST_CASE("syntax errors carry 1-based line numbers") {
    std::string doc =
        "version: 1\n"
        "issue: a\n"
        "bogus_key: x\n";
    try {
        parse_guideline_set(doc);
        FAIL("expected SyntaxError");
    } catch (const SyntaxError& e) {
        CHECK(e.line == 3);
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
}

TEST_CASE("question text must end with a question mark") {
    std::string doc =
        "version: 1\n"
        "issue: a\n"
        "subq: q1\n"
        "  text: This is not a question\n"
        "aggregation: any_positive\n";
    CHECK_THROWS_AS(parse_guideline_set(doc), ValidationError);
}

TEST_CASE("serialize then parse is the identity") {
    auto set = testing_helpers::load_default_guidelines();
    auto round = parse_guideline_set(serialize(set));
    REQUIRE(round.issues.size() == set.issues.size());
    for (std::size_t i = 0; i < set.issues.size(); ++i) {
        const auto& a = set.issues[i];
        const auto& b = round.issues[i];
        CHECK(a.issue_id == b.issue_id);
        CHECK(a.title == b.title);
        CHECK(a.guideline_text == b.guideline_text);
        REQUIRE(a.sub_questions.size() == b.sub_questions.size());
        for (std::size_t q = 0; q < a.sub_questions.size(); ++q) {
            CHECK(a.sub_questions[q].subq_id == b.sub_questions[q].subq_id);
            CHECK(a.sub_questions[q].question_text == b.sub_questions[q].question_text);
            CHECK(a.sub_questions[q].polarity == b.sub_questions[q].polarity);
        }
        REQUIRE(a.clauses.size() == b.clauses.size());
        for (std::size_t c = 0; c < a.clauses.size(); ++c) {
            CHECK(a.clauses[c].text == b.clauses[c].text);
            CHECK(a.clauses[c].maps_to == b.clauses[c].maps_to);
        }
        CHECK(a.aggregation.kind == b.aggregation.kind);
        CHECK(a.aggregation.k == b.aggregation.k);
    }
    // and serialization itself is stable
    CHECK(serialize(set) == serialize(round));
}

TEST_CASE("validate_decomposition warnings") {
    SUBCASE("fully covered issue yields no diagnostics") {
        auto set = testing_helpers::load_default_guidelines();
        for (const auto& issue : set.issues)
            CHECK(validate_decomposition(issue).empty());
    }
    SUBCASE("uncovered clause") {
        IssueSpec issue = make_issue(2);
        issue.clauses.push_back({"an orphan clause", {}});
        auto diags = validate_decomposition(issue);
        REQUIRE(diags.size() == 3);  // 1 uncovered + 2 unreferenced subqs
        CHECK(diags[0].kind == Diagnostic::Kind::uncovered_clause);
    }
    SUBCASE("duplicate question text") {
        IssueSpec issue = make_issue(2);
        issue.sub_questions[1].question_text = issue.sub_questions[0].question_text;
        issue.clauses.push_back({"c", {"q0", "q1"}});
        auto diags = validate_decomposition(issue);
        REQUIRE(diags.size() == 1);
        CHECK(diags[0].kind == Diagnostic::Kind::duplicate_question);
    }
}

TEST_CASE("aggregate basics") {
    IssueSpec issue = make_issue(3);
    std::map<std::string, bool> answers{{"q0", false}, {"q1", false}, {"q2", false}};
    CHECK(aggregate(issue, answers) == Label::negative);
    answers["q1"] = true;
    CHECK(aggregate(issue, answers) == Label::positive);

    SUBCASE("missing answer") {
        answers.erase("q2");
        CHECK_THROWS_AS(aggregate(issue, answers), MissingAnswer);
    }
    SUBCASE("unknown answer") {
        answers["q9"] = true;
        CHECK_THROWS_AS(aggregate(issue, answers), UnknownAnswer);
    }
}

TEST_CASE("any_positive equals OR over all assignments, exhaustively") {
    for (int n = 1; n <= 10; ++n) {
        IssueSpec issue = make_issue(n);
        // exercise mixed polarity as well
        if (n >= 2) issue.sub_questions[1].polarity = Polarity::no_is_violation;
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            std::map<std::string, bool> answers;
            bool any_violation = false;
            for (int q = 0; q < n; ++q) {
                bool yes = (mask >> q) & 1u;
                answers["q" + std::to_string(q)] = yes;
                any_violation |= is_violation(issue.sub_questions[q], yes);
            }
            Label expected = any_violation ? Label::positive : Label::negative;
            CHECK(aggregate(issue, answers) == expected);
        }
    }
}

TEST_CASE("any_positive is monotone in violation flips") {
    const int n = 6;
    IssueSpec issue = make_issue(n);
    for (unsigned mask = 0; mask < (1u << n); ++mask) {
        std::map<std::string, bool> answers;
        for (int q = 0; q < n; ++q)
            answers["q" + std::to_string(q)] = (mask >> q) & 1u;
        Label before = aggregate(issue, answers);
        for (int q = 0; q < n; ++q) {
            if (answers["q" + std::to_string(q)]) continue;  // already violating
            auto flipped = answers;
            flipped["q" + std::to_string(q)] = true;
            Label after = aggregate(issue, flipped);
            // flipping toward violation never turns positive into negative
            CHECK((before == Label::negative || after == Label::positive));
            CHECK(after == Label::positive);
        }
    }
}

TEST_CASE("k_of_n and all_positive aggregation") {
    IssueSpec issue = make_issue(4, AggregationKind::k_of_n, 2);
    for (unsigned mask = 0; mask < 16; ++mask) {
        std::map<std::string, bool> answers;
        int count = 0;
        for (int q = 0; q < 4; ++q) {
            bool yes = (mask >> q) & 1u;
            answers["q" + std::to_string(q)] = yes;
            if (yes) ++count;
        }
        CHECK(aggregate(issue, answers) ==
              (count >= 2 ? Label::positive : Label::negative));
    }

    IssueSpec all = make_issue(3, AggregationKind::all_positive);
    std::map<std::string, bool> answers{{"q0", true}, {"q1", true}, {"q2", true}};
    CHECK(aggregate(all, answers) == Label::positive);
    answers["q2"] = false;
    CHECK(aggregate(all, answers) == Label::negative);
}
