#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>

#include "mavqa/bench.hpp"

using namespace mavqa;

namespace {

namespace fs = std::filesystem;

fs::path temp_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / "mavqa_bench" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string write_dataset(const fs::path& dir, const json& records) {
    const std::string path = (dir / "dataset.json").string();
    std::ofstream out(path);
    out << records.dump(2);
    return path;
}

json valid_record(const std::string& id, const std::string& answer = "B",
                  const std::string& category = "CH") {
    return json{{"id", id},
                {"video", "vid_" + id},
                {"question", "What happens in " + id + "?"},
                {"options", {"opt one", "opt two", "opt three", "opt four", "opt five"}},
                {"answer", answer},
                {"category", category}};
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

QuestionOutcome outcome(const std::string& id, CategoryCode cat, int gold, int chosen) {
    QuestionOutcome o;
    o.question_id = id;
    o.category = cat;
    o.gold = gold;
    o.chosen = chosen;
    return o;
}

// Report-mode config whose agents immediately emit the same final answer.
RunConfig mock_config(const std::string& dataset, const std::string& output,
                      const std::string& reply) {
    RunConfig c;
    c.mode = RunMode::Report;
    c.aggregator = OrganizerConfig::Aggregate::Majority;
    c.dataset_path = dataset;
    c.output_dir = output;
    BackendConfig agents;
    agents.backend_id = "agents";
    agents.kind = BackendKind::Mock;
    agents.mock_reply = reply;
    c.backends.emplace("agents", agents);
    c.agent_backend = "agents";
    return c;
}

}  // namespace

TEST_CASE("load_dataset parses records and reports schema errors", "[bench]") {
    const auto dir = temp_dir("load");

    SECTION("a 3-record file loads in order") {
        const std::string path = write_dataset(
            dir, json::array({valid_record("q1", "A", "CH"), valid_record("q2", "E", "TN"),
                              valid_record("q3")}));
        const auto qs = load_dataset(path);
        REQUIRE(qs.size() == 3);
        CHECK(qs[0].id == "q1");
        CHECK(qs[0].gold == 0);
        CHECK(qs[1].gold == 4);
        CHECK(qs[1].category == CategoryCode::TN);
        CHECK(qs[2].id == "q3");
    }
    SECTION("missing options raise SchemaError with the record index") {
        json bad = valid_record("q1");
        bad.erase("options");
        const std::string path = write_dataset(dir, json::array({valid_record("q0"), bad}));
        try {
            load_dataset(path);
            FAIL("expected SchemaError");
        } catch (const SchemaError& e) {
            CHECK(e.record_index == 1);
            CHECK(e.field == "options");
        }
    }
    SECTION("records without an answer load with gold absent") {
        json hidden = valid_record("q1");
        hidden.erase("answer");
        const std::string path = write_dataset(dir, json::array({hidden}));
        const auto qs = load_dataset(path);
        REQUIRE(qs.size() == 1);
        CHECK_FALSE(qs[0].gold.has_value());
        CHECK(qs[0].category == CategoryCode::CH);
    }
    SECTION("integer answers and missing categories work") {
        json rec = valid_record("q1");
        rec["answer"] = 2;
        rec.erase("category");
        const auto qs = load_dataset(write_dataset(dir, json::array({rec})));
        CHECK(qs[0].gold == 2);
        CHECK(qs[0].category == CategoryCode::Other);
    }
    SECTION("out-of-range answers raise SchemaError") {
        json rec = valid_record("q1");
        rec["answer"] = 9;
        CHECK_THROWS_AS(load_dataset(write_dataset(dir, json::array({rec}))), SchemaError);
    }
    SECTION("duplicate options raise SchemaError") {
        json rec = valid_record("q1");
        rec["options"] = {"same ", "same", "x", "y", "z"};
        CHECK_THROWS_AS(load_dataset(write_dataset(dir, json::array({rec}))), SchemaError);
    }
}

TEST_CASE("score computes per-category and overall accuracy", "[bench]") {
    SECTION("4 of 5 correct is 80.0") {
        std::vector<QuestionOutcome> outcomes;
        for (int i = 0; i < 5; ++i) {
            outcomes.push_back(outcome("q" + std::to_string(i), CategoryCode::CH, 1,
                                       i == 0 ? 0 : 1));
        }
        const Aggregate agg = score(outcomes);
        REQUIRE(agg.overall_accuracy.has_value());
        CHECK(round1(*agg.overall_accuracy) == 80.0);
        CHECK(agg.answered == 5);
        CHECK(agg.correct == 4);
    }
    SECTION("empty input raises EmptyRun") {
        CHECK_THROWS_AS(score({}), EmptyRunError);
    }
    SECTION("answered outcome without gold raises MissingGold") {
        QuestionOutcome o;
        o.question_id = "q";
        o.chosen = 1;
        CHECK_THROWS_AS(score({o}), MissingGoldError);
    }
    SECTION("unanswered outcomes count as errors, not in the denominator") {
        std::vector<QuestionOutcome> outcomes = {outcome("q1", CategoryCode::CH, 1, 1)};
        QuestionOutcome errored;
        errored.question_id = "q2";
        errored.gold = 1;
        errored.error = "backend down";
        outcomes.push_back(errored);
        const Aggregate agg = score(outcomes);
        CHECK(agg.answered == 1);
        CHECK(agg.errors == 1);
        CHECK(*agg.overall_accuracy == 100.0);
    }
    SECTION("zero-question categories are omitted") {
        const Aggregate agg = score({outcome("q1", CategoryCode::TP, 0, 0)});
        CHECK(agg.per_category.size() == 1);
        CHECK(agg.per_category.count(CategoryCode::TP) == 1);
    }
    SECTION("score is permutation-invariant") {
        std::vector<QuestionOutcome> outcomes;
        std::mt19937 rng(73);
        for (int i = 0; i < 16; ++i) {
            outcomes.push_back(outcome("q" + std::to_string(i),
                                       kNextQaCategories[i % 8], static_cast<int>(rng() % 5),
                                       static_cast<int>(rng() % 5)));
        }
        const Aggregate base = score(outcomes);
        for (int round = 0; round < 5; ++round) {
            std::shuffle(outcomes.begin(), outcomes.end(), rng);
            const Aggregate shuffled = score(outcomes);
            REQUIRE(shuffled.overall_accuracy == base.overall_accuracy);
            REQUIRE(shuffled.per_category.size() == base.per_category.size());
            for (const auto& [cat, s] : base.per_category) {
                REQUIRE(shuffled.per_category.at(cat).correct == s.correct);
                REQUIRE(shuffled.per_category.at(cat).total == s.total);
            }
        }
    }
}

TEST_CASE("run_benchmark executes, persists, and resumes", "[bench]") {
    const auto dir = temp_dir("run");
    const std::string dataset = write_dataset(
        dir, json::array({valid_record("q1", "A", "CH"), valid_record("q2", "A", "TN"),
                          valid_record("q3", "B", "TP")}));
    const std::string reply = json{{"answer", 0}, {"rationale", "mocked"}}.dump();

    SECTION("a full run writes outcomes, traces, and aggregates") {
        const auto out = dir / "out1";
        const RunResult result = run_benchmark(mock_config(dataset, out.string(), reply));
        REQUIRE(result.outcomes.size() == 3);
        CHECK(result.outcomes[0].chosen == 0);
        CHECK(*result.outcomes[0].correct());       // gold A
        CHECK_FALSE(*result.outcomes[2].correct());  // gold B
        REQUIRE(result.aggregate.overall_accuracy.has_value());
        CHECK(round1(*result.aggregate.overall_accuracy) ==
              round1(100.0 * 2 / 3));
        CHECK(fs::exists(out / "results.json"));
        CHECK(fs::exists(out / "questions.jsonl"));
        CHECK(fs::exists(out / "ledger.jsonl"));
        CHECK(fs::exists(out / "traces" / "q1.jsonl"));

        const RunTrace trace = read_trace_file((out / "traces" / "q1.jsonl").string());
        CHECK(audit_trace(trace).empty());
        CHECK_FALSE(trace.config_digest.empty());

        // recomputing from the per-question file reproduces the aggregate
        const Aggregate rescored = score(load_outcomes((out / "questions.jsonl").string()));
        CHECK(rescored.overall_accuracy == result.aggregate.overall_accuracy);
        CHECK(rescored.correct == result.aggregate.correct);
        CHECK(rescored.per_category.size() == result.aggregate.per_category.size());
    }

    SECTION("worker pools give the same outcomes as sequential runs") {
        RunConfig seq_config = mock_config(dataset, (dir / "out_w1").string(), reply);
        RunConfig par_config = mock_config(dataset, (dir / "out_w4").string(), reply);
        par_config.workers = 4;
        const RunResult seq = run_benchmark(seq_config);
        const RunResult par = run_benchmark(par_config);
        REQUIRE(seq.outcomes.size() == par.outcomes.size());
        for (std::size_t i = 0; i < seq.outcomes.size(); ++i) {
            CHECK(seq.outcomes[i].question_id == par.outcomes[i].question_id);
            CHECK(seq.outcomes[i].chosen == par.outcomes[i].chosen);
        }
        CHECK(slurp(dir / "out_w1" / "questions.jsonl") ==
              slurp(dir / "out_w4" / "questions.jsonl"));
    }

    SECTION("re-running a completed ledger changes no output bytes") {
        const auto out = dir / "out2";
        run_benchmark(mock_config(dataset, out.string(), reply));
        const std::string results_before = slurp(out / "results.json");
        const std::string questions_before = slurp(out / "questions.jsonl");
        const std::string ledger_before = slurp(out / "ledger.jsonl");
        const std::string trace_before = slurp(out / "traces" / "q2.jsonl");

        run_benchmark(mock_config(dataset, out.string(), reply));
        CHECK(slurp(out / "results.json") == results_before);
        CHECK(slurp(out / "questions.jsonl") == questions_before);
        CHECK(slurp(out / "ledger.jsonl") == ledger_before);
        CHECK(slurp(out / "traces" / "q2.jsonl") == trace_before);
    }

    SECTION("questions already in the ledger are not re-executed") {
        const auto out = dir / "out3";
        fs::create_directories(out);
        {
            std::ofstream ledger(out / "ledger.jsonl");
            QuestionOutcome pre1 = outcome("q1", CategoryCode::CH, 0, 4);
            pre1.policy_id = "preseeded";
            QuestionOutcome pre2 = outcome("q2", CategoryCode::TN, 0, 4);
            pre2.policy_id = "preseeded";
            ledger << dump_stable(to_json(pre1)) << "\n" << dump_stable(to_json(pre2)) << "\n";
        }
        const RunResult result = run_benchmark(mock_config(dataset, out.string(), reply));
        REQUIRE(result.outcomes.size() == 3);
        CHECK(result.outcomes[0].policy_id == "preseeded");
        CHECK(result.outcomes[1].policy_id == "preseeded");
        CHECK(result.outcomes[2].policy_id != "preseeded");
        CHECK_FALSE(fs::exists(out / "traces" / "q1.jsonl"));
        CHECK(fs::exists(out / "traces" / "q3.jsonl"));
    }

    SECTION("failing questions are bookkept and excluded from the denominator") {
        const auto out = dir / "out4";
        const RunResult result =
            run_benchmark(mock_config(dataset, out.string(), "not an answer at all ~~~"));
        REQUIRE(result.outcomes.size() == 3);
        for (const auto& o : result.outcomes) {
            CHECK_FALSE(o.chosen.has_value());
            CHECK_FALSE(o.error.empty());
        }
        CHECK(result.aggregate.errors == 3);
        CHECK(result.aggregate.answered == 0);
        CHECK_FALSE(result.aggregate.overall_accuracy.has_value());
    }

    SECTION("missing dataset is rejected") {
        CHECK_THROWS_AS(run_benchmark(mock_config((dir / "nope.json").string(),
                                                  (dir / "out5").string(), reply)),
                        ConfigError);
    }
}

TEST_CASE("run config round-trips through json", "[bench]") {
    RunConfig c;
    c.mode = RunMode::Debate;
    c.aggregator = OrganizerConfig::Aggregate::Majority;
    c.dataset_path = "d.json";
    c.output_dir = "out";
    c.ranking = {ModalityKind::Graph, ModalityKind::Text, ModalityKind::Video};
    c.debate_order = {ModalityKind::Graph, ModalityKind::Video, ModalityKind::Text};
    c.category_table = default_category_table();
    BackendConfig b;
    b.backend_id = "x";
    b.kind = BackendKind::Replay;
    b.cassette = "tape.jsonl";
    c.backends.emplace("x", b);

    const RunConfig back = run_config_from_json(to_json(c));
    CHECK(back.mode == RunMode::Debate);
    CHECK(back.ranking == c.ranking);
    CHECK(back.debate_order == c.debate_order);
    CHECK(back.backends.at("x").kind == BackendKind::Replay);
    REQUIRE(back.category_table.has_value());
    CHECK(back.category_table->at(CategoryCode::CH) == ModalityKind::Text);
    CHECK(run_config_digest(c) == run_config_digest(back));

    RunConfig other = c;
    other.tool_budget = 7;
    CHECK(run_config_digest(c) != run_config_digest(other));
    // output_dir is excluded from the digest
    RunConfig moved = c;
    moved.output_dir = "elsewhere";
    CHECK(run_config_digest(c) == run_config_digest(moved));
}

TEST_CASE("compare_runs reports flips, deltas, and McNemar counts", "[bench]") {
    std::vector<QuestionOutcome> a, b;
    for (int i = 0; i < 10; ++i) {
        a.push_back(outcome("q" + std::to_string(i), CategoryCode::CH, 0, i == 0 ? 1 : 0));
        b.push_back(outcome("q" + std::to_string(i), CategoryCode::CH, 0, i == 0 ? 1 : 0));
    }

    SECTION("identical runs have no flips and zero deltas") {
        const RunDiff diff = compare_runs(a, a);
        CHECK(diff.flips.empty());
        REQUIRE(diff.overall_delta.has_value());
        CHECK(*diff.overall_delta == 0.0);
        CHECK(diff.a_only == 0);
        CHECK(diff.b_only == 0);
        CHECK(diff.both_right == 9);
        CHECK(diff.both_wrong == 1);
    }
    SECTION("one wrong-to-right flip among 10 moves overall by +10 points") {
        b[0].chosen = 0;  // fixes the one wrong answer
        const RunDiff diff = compare_runs(a, b);
        REQUIRE(diff.flips.size() == 1);
        CHECK(diff.flips[0].question_id == "q0");
        REQUIRE(diff.overall_delta.has_value());
        CHECK(round1(*diff.overall_delta) == 10.0);
        CHECK(diff.b_only == 1);
        CHECK(diff.a_only == 0);
    }
    SECTION("disjoint question sets are rejected") {
        std::vector<QuestionOutcome> c = {outcome("zz", CategoryCode::CH, 0, 0)};
        CHECK_THROWS_AS(compare_runs(a, c), QuestionSetMismatchError);
    }
}

TEST_CASE("outcome json round-trips including error states", "[bench]") {
    QuestionOutcome o = outcome("q9", CategoryCode::DL, 2, 2);
    o.policy_id = "majority/strict";
    o.trace_path = "traces/q9.jsonl";
    const QuestionOutcome back = outcome_from_json(to_json(o));
    CHECK(back.question_id == "q9");
    CHECK(back.category == CategoryCode::DL);
    CHECK(back.gold == 2);
    CHECK(back.chosen == 2);
    CHECK(back.policy_id == "majority/strict");

    QuestionOutcome errored;
    errored.question_id = "qe";
    errored.error = "boom";
    const QuestionOutcome eb = outcome_from_json(to_json(errored));
    CHECK_FALSE(eb.chosen.has_value());
    CHECK(eb.error == "boom");
}
