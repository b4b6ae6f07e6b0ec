#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <random>

#include "mavqa/backends.hpp"
#include "mavqa/scenegraph.hpp"

using namespace mavqa;

namespace {

Caption cap(int start, int end, std::string text) {
    return {FrameWindow{start, end, 1}, std::move(text), false, {}};
}

Triplet trip(std::string s, std::string r, std::string o, double t0, double t1) {
    return {std::move(s), std::move(r), std::move(o), TimeSpan{t0, t1}};
}

std::vector<Triplet> random_triplets(std::mt19937& rng, TimeSpan span, int max_count = 6) {
    static const std::vector<std::string> subjects = {"man", "woman", "dog", "cup", "table",
                                                      "ball"};
    static const std::vector<std::string> relations = {"holds", "sits on", "next to", "chases",
                                                       "throws"};
    std::vector<Triplet> out;
    const int n = static_cast<int>(rng() % (max_count + 1));
    for (int i = 0; i < n; ++i) {
        out.push_back(trip(subjects[rng() % subjects.size()], relations[rng() % relations.size()],
                           subjects[rng() % subjects.size()], span.start, span.end));
    }
    return out;
}

}  // namespace

TEST_CASE("chunk_by_similarity groups by Jaccard against the anchor", "[scenegraph]") {
    SECTION("identical captions form one chunk") {
        std::vector<Caption> captions(4, cap(0, 4, "a man runs"));
        const ChunkPlan plan = chunk_by_similarity(captions, 0.9);
        REQUIRE(plan.size() == 1);
        CHECK(plan[0] == IndexRange{0, 3});
    }
    SECTION("token-disjoint captions form singleton chunks") {
        std::vector<Caption> captions = {cap(0, 4, "alpha beta"), cap(4, 8, "gamma delta"),
                                         cap(8, 12, "epsilon zeta")};
        const ChunkPlan plan = chunk_by_similarity(captions, 0.3);
        REQUIRE(plan.size() == 3);
        CHECK(plan[0] == IndexRange{0, 0});
        CHECK(plan[2] == IndexRange{2, 2});
    }
    SECTION("hand-computed Jaccard boundary") {
        // J({a,man,runs},{a,man,runs,fast}) = 3/4 >= 0.3;
        // J({a,man,runs},{a,cat,sleeps}) = 1/5 < 0.3.
        std::vector<Caption> captions = {cap(0, 4, "a man runs"), cap(4, 8, "a man runs fast"),
                                         cap(8, 12, "a cat sleeps")};
        const ChunkPlan plan = chunk_by_similarity(captions, 0.3);
        REQUIRE(plan.size() == 2);
        CHECK(plan[0] == IndexRange{0, 1});
        CHECK(plan[1] == IndexRange{2, 2});
    }
}

TEST_CASE("chunk plans partition the caption index space", "[scenegraph]") {
    std::mt19937 rng(11);
    static const std::vector<std::string> words = {"man", "dog", "cup", "runs", "sits", "red",
                                                   "park", "holds"};
    for (int round = 0; round < 100; ++round) {
        const int n = 1 + static_cast<int>(rng() % 12);
        std::vector<Caption> captions;
        for (int i = 0; i < n; ++i) {
            std::string text;
            const int len = 1 + static_cast<int>(rng() % 5);
            for (int w = 0; w < len; ++w) text += words[rng() % words.size()] + " ";
            captions.push_back(cap(i * 4, i * 4 + 4, text));
        }
        const double threshold = (rng() % 11) / 10.0;
        const ChunkPlan plan = chunk_by_similarity(captions, threshold);
        std::size_t expected_next = 0;
        for (const auto& range : plan) {
            REQUIRE(range.first == expected_next);
            REQUIRE(range.last >= range.first);
            expected_next = range.last + 1;
        }
        REQUIRE(expected_next == captions.size());
    }
}

TEST_CASE("build_graph_prompt includes captions and continuity", "[scenegraph]") {
    std::vector<Caption> chunk = {cap(0, 4, "a man pours coffee"), cap(4, 8, "a man drinks"),
                                  cap(8, 12, "a man washes the cup")};

    SECTION("no previous graph, no continuity header") {
        const std::string prompt = build_graph_prompt(chunk, nullptr);
        CHECK(prompt.find(kContinuityHeader) == std::string::npos);
        CHECK(prompt.find("a man pours coffee") != std::string::npos);
        CHECK(prompt.find("a man drinks") != std::string::npos);
        CHECK(prompt.find("a man washes the cup") != std::string::npos);
        CHECK(prompt.find("(subject, relation, object)") != std::string::npos);
    }
    SECTION("previous graph triplets are serialized in") {
        SceneGraph prev;
        prev.chunk_index = 0;
        prev.span = {0, 4};
        prev.triplets = {trip("man", "holds", "cup", 0, 4), trip("cup", "on", "table", 0, 4)};
        const std::string prompt = build_graph_prompt(chunk, &prev);
        CHECK(prompt.find(kContinuityHeader) != std::string::npos);
        CHECK(prompt.find("(man, holds, cup)") != std::string::npos);
        CHECK(prompt.find("(cup, on, table)") != std::string::npos);
    }
}

TEST_CASE("parse_triplets enforces the strict line format", "[scenegraph]") {
    SECTION("canonical form") {
        const auto ts = parse_triplets("(man, holds, cup)", {0, 4});
        REQUIRE(ts.size() == 1);
        CHECK(ts[0] == trip("man", "holds", "cup", 0, 4));
    }
    SECTION("blank lines are skipped") {
        const auto ts = parse_triplets("(man, holds, cup)\n\n(cup, on, table)", {0, 4});
        REQUIRE(ts.size() == 2);
        CHECK(ts[1] == trip("cup", "on", "table", 0, 4));
    }
    SECTION("missing separators fail with the line number") {
        try {
            parse_triplets("(man holds cup)", {0, 4});
            FAIL("expected MalformedTripletError");
        } catch (const MalformedTripletError& e) {
            CHECK(e.line_number == 1);
            CHECK(e.content == "(man holds cup)");
        }
    }
    SECTION("junk after valid lines reports the right line") {
        try {
            parse_triplets("(a, b, c)\n\nnot a triplet", {0, 4});
            FAIL("expected MalformedTripletError");
        } catch (const MalformedTripletError& e) {
            CHECK(e.line_number == 3);
        }
    }
    SECTION("empty fields are rejected") {
        CHECK_THROWS_AS(parse_triplets("(, holds, cup)", {0, 4}), MalformedTripletError);
        CHECK_THROWS_AS(parse_triplets("(a, b, c, d)", {0, 4}), MalformedTripletError);
    }
}

TEST_CASE("serialize/parse round-trips triplet lists", "[scenegraph]") {
    std::mt19937 rng(23);
    for (int round = 0; round < 200; ++round) {
        const TimeSpan span{static_cast<double>(rng() % 50), 50 + static_cast<double>(rng() % 50)};
        const std::vector<Triplet> original = random_triplets(rng, span);
        const std::string wire = serialize_triplets(original);
        const std::vector<Triplet> reparsed = parse_triplets(wire, span);
        REQUIRE(reparsed == original);
    }
}

TEST_CASE("triplets_in_range matches brute force", "[scenegraph]") {
    SECTION("empty graph list") {
        CHECK(triplets_in_range({}, 0, 10).empty());
    }
    SECTION("point query on a boundary") {
        SceneGraph g;
        g.span = {0, 4};
        g.triplets = {trip("man", "holds", "cup", 0, 4)};
        const auto hits = triplets_in_range({g}, 0, 0);
        REQUIRE(hits.size() == 1);
    }
    SECTION("query spanning two chunks returns both") {
        SceneGraph g0, g1;
        g0.chunk_index = 0;
        g0.span = {0, 4};
        g0.triplets = {trip("man", "holds", "cup", 0, 4)};
        g1.chunk_index = 1;
        g1.span = {5, 9};
        g1.prev_chunk = 0;
        g1.triplets = {trip("man", "drinks", "coffee", 5, 9)};
        const auto hits = triplets_in_range({g0, g1}, 4, 5);
        REQUIRE(hits.size() == 2);
        CHECK(hits[0].relation == "holds");
        CHECK(hits[1].relation == "drinks");
    }
    SECTION("rejects inverted spans") {
        CHECK_THROWS_AS(triplets_in_range({}, 5, 4), InvalidSpanError);
    }
    SECTION("random graph sets agree with brute-force filtering") {
        std::mt19937 rng(31);
        for (int round = 0; round < 100; ++round) {
            std::vector<SceneGraph> graphs;
            const int chunks = 1 + static_cast<int>(rng() % 5);
            double t = 0;
            for (int c = 0; c < chunks; ++c) {
                SceneGraph g;
                g.chunk_index = c;
                g.span = {t, t + 4};
                g.triplets = random_triplets(rng, g.span);
                if (c > 0) g.prev_chunk = c - 1;
                graphs.push_back(std::move(g));
                t += 5;
            }
            const double q0 = static_cast<double>(rng() % 30);
            const double q1 = q0 + static_cast<double>(rng() % 10);
            const auto fast = triplets_in_range(graphs, q0, q1);
            std::vector<Triplet> brute;
            for (const auto& g : graphs) {
                for (const auto& tr : g.triplets) {
                    if (tr.span.start <= q1 && q0 <= tr.span.end) brute.push_back(tr);
                }
            }
            REQUIRE(fast == brute);
        }
    }
}

TEST_CASE("triplets_with_entity case-folds subject and object", "[scenegraph]") {
    SceneGraph g;
    g.span = {0, 4};
    g.triplets = {trip("man", "holds", "cup", 0, 4), trip("cup", "on", "table", 0, 4)};

    CHECK(triplets_with_entity({g}, "MAN").size() == 1);
    CHECK(triplets_with_entity({g}, "ghost").empty());
    // appears as object only
    const auto table_hits = triplets_with_entity({g}, "table");
    REQUIRE(table_hits.size() == 1);
    CHECK(table_hits[0].subject == "cup");
    // subject or object
    CHECK(triplets_with_entity({g}, "cup").size() == 2);
}

TEST_CASE("build_scene_graphs chains chunks with continuity", "[scenegraph]") {
    std::vector<Caption> captions = {cap(0, 4, "alpha beta"), cap(4, 8, "alpha beta"),
                                     cap(8, 12, "gamma delta"), cap(12, 16, "epsilon zeta")};
    std::vector<std::string> prompts;
    FnBackend backend("graph", [&prompts](const ChatRequest& req) {
        prompts.push_back(req.messages.back().content);
        const int n = static_cast<int>(prompts.size());
        return ModelTurnWire::from_text("(entity" + std::to_string(n) + ", acts, thing" +
                                        std::to_string(n) + ")");
    });
    const auto graphs = build_scene_graphs(captions, backend, 0.5);
    REQUIRE(graphs.size() == 3);
    CHECK_FALSE(graphs[0].prev_chunk.has_value());
    CHECK(graphs[1].prev_chunk == 0);
    CHECK(graphs[2].prev_chunk == 1);
    CHECK(graphs[0].span.start == 0);
    CHECK(graphs[0].span.end == 8);
    CHECK(graphs[1].span.start == 8);
    // second prompt references the first chunk's graph
    CHECK(prompts[1].find(kContinuityHeader) != std::string::npos);
    CHECK(prompts[1].find("(entity1, acts, thing1)") != std::string::npos);
    CHECK(prompts[0].find(kContinuityHeader) == std::string::npos);
    // triplet spans sit inside their chunk span
    for (const auto& g : graphs) {
        for (const auto& t : g.triplets) {
            CHECK(g.span.contains(t.span));
        }
    }
}

TEST_CASE("scene graph store round-trips by video", "[scenegraph]") {
    const auto dir = std::filesystem::temp_directory_path() / "mavqa_graphstore";
    std::filesystem::remove_all(dir);
    const std::string path = (dir / "graphs.jsonl").string();

    SceneGraph g0, g1;
    g0.chunk_index = 0;
    g0.span = {0, 8};
    g0.triplets = {trip("man", "holds", "cup", 0, 8)};
    g1.chunk_index = 1;
    g1.span = {8, 16};
    g1.prev_chunk = 0;
    g1.triplets = {trip("man", "waves", "hand", 8, 16)};
    {
        SceneGraphStore store(path);
        store.put("v1", {g0, g1});
    }
    SceneGraphStore reloaded(path);
    auto found = reloaded.find("v1");
    REQUIRE(found.has_value());
    REQUIRE(found->size() == 2);
    CHECK((*found)[1].prev_chunk == 0);
    CHECK((*found)[1].triplets[0].span.start == 8);
    CHECK_FALSE(reloaded.find("v2").has_value());
}
