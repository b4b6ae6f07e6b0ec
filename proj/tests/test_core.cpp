#include <catch2/catch_amalgamated.hpp>

#include "mavqa/core.hpp"

using namespace mavqa;

TEST_CASE("normalize_question rejects duplicate options", "[core]") {
    QuestionRecord q;
    q.id = "q1";
    q.question = "What is on the table?";
    q.options = {"A ", "A"};
    CHECK_THROWS_AS(normalize_question(q), DuplicateOptionsError);
}

TEST_CASE("normalize_question trims and collapses whitespace", "[core]") {
    QuestionRecord q;
    q.id = "q2";
    q.question = "  Why did  the boy   jump? ";
    q.options = {" to  play ", "to sleep", "to eat", "to run", "to hide"};
    const QuestionRecord n = normalize_question(q);
    CHECK(n.question == "Why did the boy jump?");
    CHECK(n.options[0] == "to play");
    CHECK(n.options[1] == "to sleep");
    CHECK(n.category == CategoryCode::Other);
}

TEST_CASE("normalize_question keeps clean records unchanged", "[core]") {
    QuestionRecord q;
    q.id = "q3";
    q.question = "Who opened the door?";
    q.options = {"the man", "the woman", "the child", "the dog", "nobody"};
    q.gold = 2;
    q.category = CategoryCode::CH;
    const QuestionRecord n = normalize_question(q);
    CHECK(n.options == q.options);
    CHECK(n.gold == 2);
    CHECK(n.category == CategoryCode::CH);
}

TEST_CASE("normalize_question rejects empty question and bad gold", "[core]") {
    QuestionRecord q;
    q.id = "q4";
    q.question = "   ";
    q.options = {"x", "y"};
    CHECK_THROWS_AS(normalize_question(q), EmptyQuestionError);

    q.question = "ok?";
    q.gold = 5;
    CHECK_THROWS_AS(normalize_question(q), InvalidOptionError);
}

TEST_CASE("category codes round-trip and default", "[core]") {
    for (CategoryCode c : kNextQaCategories) {
        CHECK(category_from_string(to_string(c)) == c);
    }
    CHECK(category_from_string("made-up") == CategoryCode::Other);
    CHECK(category_from_string("tn") == CategoryCode::TN);
}

TEST_CASE("time spans intersect on closed boundaries", "[core]") {
    TimeSpan a{0, 4};
    CHECK(a.intersects({4, 9}));
    CHECK(a.intersects({0, 0}));
    CHECK_FALSE(a.intersects({4.5, 9}));
    CHECK_FALSE(TimeSpan{-1, 0}.valid());
    CHECK_FALSE(TimeSpan{3, 2}.valid());
}

TEST_CASE("option letters map 0-based indices", "[core]") {
    CHECK(option_letter(0) == "A");
    CHECK(option_letter(4) == "E");
}
