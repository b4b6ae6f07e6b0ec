#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <random>

#include "mavqa/backends.hpp"
#include "mavqa/organizer.hpp"

using namespace mavqa;

namespace {

AgentReport rep(ModalityKind m, int chosen, std::string rationale = "") {
    return {m, chosen, std::move(rationale), {}, 0};
}

QuestionRecord question(CategoryCode cat = CategoryCode::Other) {
    QuestionRecord q;
    q.id = "q";
    q.video_id = "v";
    q.question = "What happens?";
    q.options = {"red", "green", "blue", "yellow", "purple"};
    q.category = cat;
    return q;
}

// Independent count-then-rank reference for the majority policy.
int majority_oracle(const std::vector<AgentReport>& reports, const ModalityRanking& ranking) {
    std::map<int, int> counts;
    for (const auto& r : reports) ++counts[r.chosen];
    int best = 0;
    for (const auto& [opt, n] : counts) best = std::max(best, n);
    std::vector<int> tied;
    for (const auto& [opt, n] : counts) {
        if (n == best) tied.push_back(opt);
    }
    if (tied.size() == 1) return tied[0];
    for (ModalityKind m : ranking) {
        for (const auto& r : reports) {
            if (r.modality == m &&
                std::find(tied.begin(), tied.end(), r.chosen) != tied.end()) {
                return r.chosen;
            }
        }
    }
    return tied[0];
}

std::vector<ModalityRanking> all_rankings() {
    std::array<ModalityKind, 3> base = {ModalityKind::Text, ModalityKind::Video,
                                        ModalityKind::Graph};
    std::sort(base.begin(), base.end());
    std::vector<ModalityRanking> out;
    do {
        out.push_back({base[0], base[1], base[2]});
    } while (std::next_permutation(base.begin(), base.end()));
    return out;
}

}  // namespace

TEST_CASE("default ranking is Video > Text > Graph", "[organizer]") {
    const ModalityRanking r = default_ranking();
    CHECK(r[0] == ModalityKind::Video);
    CHECK(r[1] == ModalityKind::Text);
    CHECK(r[2] == ModalityKind::Graph);
}

TEST_CASE("default category table matches the frozen mapping", "[organizer]") {
    const CategoryTable t = default_category_table();
    REQUIRE(t.size() == 8);
    CHECK(t.at(CategoryCode::CH) == ModalityKind::Text);
    CHECK(t.at(CategoryCode::CW) == ModalityKind::Video);
    CHECK(t.at(CategoryCode::DC) == ModalityKind::Video);
    CHECK(t.at(CategoryCode::DL) == ModalityKind::Text);
    CHECK(t.at(CategoryCode::DO) == ModalityKind::Video);
    CHECK(t.at(CategoryCode::TC) == ModalityKind::Text);
    CHECK(t.at(CategoryCode::TN) == ModalityKind::Video);
    CHECK(t.at(CategoryCode::TP) == ModalityKind::Text);
    for (CategoryCode c : kNextQaCategories) CHECK(t.count(c) == 1);
}

TEST_CASE("policy_majority frozen examples", "[organizer]") {
    const ModalityRanking ranking = default_ranking();
    // strict majority
    CHECK(policy_majority({rep(ModalityKind::Text, 2), rep(ModalityKind::Video, 2),
                           rep(ModalityKind::Graph, 4)},
                          ranking) == 2);
    // three-way tie goes to the highest-ranked modality (Video)
    CHECK(policy_majority({rep(ModalityKind::Text, 0), rep(ModalityKind::Video, 1),
                           rep(ModalityKind::Graph, 2)},
                          ranking) == 1);
    // unanimity
    CHECK(policy_majority({rep(ModalityKind::Text, 3), rep(ModalityKind::Video, 3),
                           rep(ModalityKind::Graph, 3)},
                          ranking) == 3);
    // single report
    CHECK(policy_majority({rep(ModalityKind::Graph, 4)}, ranking) == 4);
    CHECK_THROWS_AS(policy_majority({}, ranking), EmptyRunError);
}

TEST_CASE("policy_majority equals the exhaustive oracle", "[organizer]") {
    const auto rankings = all_rankings();
    REQUIRE(rankings.size() == 6);
    int cases = 0;
    for (const auto& ranking : rankings) {
        for (int t = 0; t < 5; ++t) {
            for (int v = 0; v < 5; ++v) {
                for (int g = 0; g < 5; ++g) {
                    const std::vector<AgentReport> reports = {rep(ModalityKind::Text, t),
                                                              rep(ModalityKind::Video, v),
                                                              rep(ModalityKind::Graph, g)};
                    REQUIRE(policy_majority(reports, ranking) ==
                            majority_oracle(reports, ranking));
                    ++cases;
                }
            }
        }
    }
    CHECK(cases == 750);
}

TEST_CASE("strict majorities ignore the ranking and report order", "[organizer]") {
    std::vector<AgentReport> reports = {rep(ModalityKind::Text, 2), rep(ModalityKind::Video, 2),
                                        rep(ModalityKind::Graph, 0)};
    std::sort(reports.begin(), reports.end(),
              [](const AgentReport& a, const AgentReport& b) { return a.chosen < b.chosen; });
    do {
        for (const auto& ranking : all_rankings()) {
            REQUIRE(policy_majority(reports, ranking) == 2);
        }
    } while (std::next_permutation(reports.begin(), reports.end(),
                                   [](const AgentReport& a, const AgentReport& b) {
                                       return a.chosen < b.chosen;
                                   }));
}

TEST_CASE("policy_best_category routes by table", "[organizer]") {
    const CategoryTable table = default_category_table();
    const std::vector<AgentReport> reports = {rep(ModalityKind::Text, 0),
                                              rep(ModalityKind::Video, 1),
                                              rep(ModalityKind::Graph, 2)};
    CHECK(policy_best_category(CategoryCode::CH, reports, table) == 0);  // Text
    CHECK(policy_best_category(CategoryCode::DO, reports, table) == 1);  // Video
    CHECK(policy_best_category(CategoryCode::DL, reports, table) == 0);  // Text (tie-break)
    CHECK(policy_best_category(CategoryCode::TP, reports, table) == 0);  // Text
    CHECK(policy_best_category(CategoryCode::CW, reports, table) == 1);  // Video
}

TEST_CASE("policy_best_category falls back sensibly", "[organizer]") {
    const CategoryTable table = default_category_table();
    SECTION("missing designated modality falls back to ranking order") {
        const std::vector<AgentReport> reports = {rep(ModalityKind::Text, 0),
                                                  rep(ModalityKind::Graph, 2)};
        // DO routes to Video, which is absent -> highest-ranked available is Text
        CHECK(policy_best_category(CategoryCode::DO, reports, table) == 0);
    }
    SECTION("unknown category falls back to majority") {
        const std::vector<AgentReport> reports = {rep(ModalityKind::Text, 3),
                                                  rep(ModalityKind::Video, 3),
                                                  rep(ModalityKind::Graph, 0)};
        CHECK(policy_best_category(CategoryCode::Other, reports, table) == 3);
        const PolicyDecision d = best_category_decision(CategoryCode::Other, reports, table,
                                                        default_ranking());
        CHECK(d.rule_id.find("unknown_category") != std::string::npos);
    }
}

TEST_CASE("match_option applies letter, exact, then prefix rules", "[organizer]") {
    const std::vector<std::string> options = {"red", "green", "blue", "yellow", "purple"};
    CHECK(match_option("D", options) == 3);
    CHECK(match_option(R"({"answer": 2})", options) == 2);
    CHECK(match_option("Answer: B", options) == 1);
    CHECK(match_option("YELLOW", options) == 3);   // exact, case-insensitive
    CHECK(match_option("yellowish", options) == 3);  // longest prefix
    CHECK(match_option("purp", options) == 4);
    CHECK_FALSE(match_option("magenta", options).has_value());
    // ambiguous prefix: "gre" vs... unique here, so craft a tie
    const std::vector<std::string> ambiguous = {"take one", "take two"};
    CHECK_FALSE(match_option("take", ambiguous).has_value());
}

TEST_CASE("organize_model weighs reports via the backend", "[organizer]") {
    const QuestionRecord q = question();
    const std::vector<AgentReport> reports = {
        rep(ModalityKind::Video, 1, "looks green"),
        rep(ModalityKind::Text, 3, "caption says yellow at 10s"),
        rep(ModalityKind::Graph, 3, "triplet (sun, colored, yellow)")};

    SECTION("evidence-weighing mock settles on the agreeing answer") {
        FnBackend backend("org", [](const ChatRequest& req) {
            REQUIRE(req.messages.size() == 2);
            return ModelTurnWire::from_text(
                "D. The text and graph agents provide concordant timestamped evidence.");
        });
        const Verdict v = organize_model(q, reports, backend);
        CHECK(v.final == 3);
        CHECK(v.policy_id == "model");
        CHECK(v.reports.size() == 3);
    }
    SECTION("single report passes through") {
        FnBackend backend("org", [](const ChatRequest&) {
            return ModelTurnWire::from_text("A");
        });
        const Verdict v = organize_model(q, {rep(ModalityKind::Text, 0)}, backend);
        CHECK(v.final == 0);
    }
    SECTION("free text matching an option text resolves to its index") {
        FnBackend backend("org", [](const ChatRequest&) {
            return ModelTurnWire::from_text("yellow");
        });
        const Verdict v = organize_model(q, reports, backend);
        CHECK(v.final == 3);
    }
    SECTION("prompt carries every report's option, rationale, and evidence") {
        std::string seen;
        FnBackend backend("org", [&seen](const ChatRequest& req) {
            seen = req.messages[1].content;
            return ModelTurnWire::from_text("D");
        });
        std::vector<AgentReport> with_evidence = reports;
        with_evidence[1].evidence = {{EvidenceKind::CaptionRef, TimeSpan{8, 12},
                                      "the sun turns yellow"}};
        organize_model(q, with_evidence, backend);
        CHECK(seen.find("looks green") != std::string::npos);
        CHECK(seen.find("caption says yellow at 10s") != std::string::npos);
        CHECK(seen.find("the sun turns yellow") != std::string::npos);
        CHECK(seen.find("[8s-12s]") != std::string::npos);
        CHECK(seen.find("option B") != std::string::npos);
        CHECK(seen.find("option D") != std::string::npos);
    }
    SECTION("unmatchable answers fall back to majority with a recorded policy id") {
        FnBackend backend("org", [](const ChatRequest&) {
            return ModelTurnWire::from_text("the answer lies within us all");
        });
        const Verdict v = organize_model(q, reports, backend);
        CHECK(v.final == 3);  // majority of (1, 3, 3)
        CHECK(v.policy_id.rfind("model_fallback:", 0) == 0);
    }
    SECTION("verdicts never carry an out-of-range index") {
        std::mt19937 rng(59);
        const std::vector<std::string> junk = {"F", "option 9", "{\"answer\": 42}", "nothing",
                                               "Z9", "yellow", "D", "blue-ish skies"};
        for (int round = 0; round < 60; ++round) {
            const std::string reply = junk[rng() % junk.size()];
            FnBackend backend("org", [&reply](const ChatRequest&) {
                return ModelTurnWire::from_text(reply);
            });
            const Verdict v = organize_model(q, reports, backend);
            REQUIRE(v.final >= 0);
            REQUIRE(v.final < static_cast<int>(q.options.size()));
        }
    }
}
