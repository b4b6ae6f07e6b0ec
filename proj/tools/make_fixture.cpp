// Regenerates the bundled replay fixture: a small multiple-choice
// dataset, synthetic frame directories, and cassettes recorded from a
// deterministic scripted model. Run from anywhere:
//
//   mavqa-make-fixture [fixture_dir]   (default: fixtures/replay8)

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "mavqa/mavqa.hpp"

namespace fs = std::filesystem;
using namespace mavqa;

namespace {

// 1x1 RGB PNG, valid for any image decoder.
constexpr unsigned char kPngBytes[] = {
    0x89, 0x50, 0x4e, 0x47, 0x0d, 0x0a, 0x1a, 0x0a, 0x00, 0x00, 0x00, 0x0d, 0x49, 0x48,
    0x44, 0x52, 0x00, 0x00, 0x00, 0x01, 0x00, 0x00, 0x00, 0x01, 0x08, 0x02, 0x00, 0x00,
    0x00, 0x90, 0x77, 0x53, 0xde, 0x00, 0x00, 0x00, 0x0c, 0x49, 0x44, 0x41, 0x54, 0x78,
    0x9c, 0x63, 0x68, 0x68, 0x68, 0x00, 0x00, 0x03, 0x04, 0x01, 0x81, 0x4b, 0xd3, 0xd2,
    0x10, 0x00, 0x00, 0x00, 0x00, 0x49, 0x45, 0x4e, 0x44, 0xae, 0x42, 0x60, 0x82};

struct QuestionScript {
    std::string id;
    std::string video;
    std::string category;
    std::string anchor;  // unique word the scripted model keys on
    std::string question;
    std::vector<std::string> options;
    int gold;
    int text_ans;
    int video_ans;
    int graph_ans;
    std::string organizer_reply;  // letter + justification
};

std::vector<QuestionScript> fixture_scripts() {
    return {
        {"q1", "vidA", "CH", "chef", "Why did the chef wipe the counter?",
         {"to dry spilled water", "to clear crumbs", "to polish the wood", "to clean up flour",
          "to move the plates"},
         3, 3, 1, 3,
         "D. The caption and graph agents both report flour residue with matching timestamps,"
         " which outweighs the video agent's guess."},
        {"q2", "vidA", "TC", "kettle", "What was happening while the kettle boiled?",
         {"bread was being kneaded", "the oven was cleaned", "dishes were dried",
          "a recipe was read", "the table was set"},
         0, 0, 0, 0, "A. All three agents agree on the kneading."},
        {"q3", "vidB", "CW", "gardener", "Why did the gardener kneel beside the rosebush?",
         {"to rest for a moment", "to pull the weeds", "to check the soil", "to pick a flower",
          "to fix the fence"},
         2, 1, 2, 2,
         "C. Two agents cite the soil inspection; the caption agent's weed reading lacks"
         " support."},
        {"q4", "vidB", "TN", "watering", "What happened after the watering can was filled?",
         {"the hose was coiled", "the roses were sprayed", "the can was carried away",
          "the tap kept running", "the gate was closed"},
         4, 1, 2, 3,
         "C. The reports conflict; the video agent's direct observation of the carried can is"
         " the most concrete."},
        {"q5", "vidC", "DC", "mover", "How many boxes did the mover carry upstairs?",
         {"one", "two", "three", "four", "five"},
         1, 0, 1, 0,
         "B. Counting is a direct visual task and the video agent observed two boxes."},
        {"q6", "vidC", "DL", "dolly", "Where was the dolly left at the end?",
         {"in the truck", "on the porch", "by the staircase", "in the hallway",
          "next to the van"},
         2, 2, 2, 2, "C. Unanimous."},
        {"q7", "vidD", "DO", "jacket", "What color was the jacket worn during the jog?",
         {"red", "blue", "black", "green", "white"},
         0, 1, 1, 1,
         "B. Every agent read the jacket as blue."},
        {"q8", "vidD", "TP", "warmup", "What was the person doing during the warmup?",
         {"tying shoelaces", "checking a watch", "drinking water", "stretching the legs",
          "adjusting headphones"},
         3, 3, 0, 3,
         "D. The caption and graph agents give timestamped stretching evidence from the"
         " opening seconds."}};
}

const std::map<std::string, int> kVideoFrames = {
    {"vidA", 13}, {"vidB", 10}, {"vidC", 9}, {"vidD", 5}};

std::string flatten(const ChatRequest& request) {
    std::string out;
    for (const auto& m : request.messages) out += m.content + "\n";
    return out;
}

bool has_tool(const ChatRequest& request, const std::string& name) {
    for (const auto& t : request.tools) {
        if (t.name == name) return true;
    }
    return false;
}

int tool_result_count(const ChatRequest& request) {
    int n = 0;
    for (const auto& m : request.messages) {
        if (m.role == Role::Tool) ++n;
    }
    return n;
}

std::string last_tool_result(const ChatRequest& request) {
    std::string out;
    for (const auto& m : request.messages) {
        if (m.role == Role::Tool) out = m.content;
    }
    return out;
}

std::string first_line(const std::string& text) {
    const auto nl = text.find('\n');
    return nl == std::string::npos ? text : text.substr(0, nl);
}

// Deterministic stand-in for the hosted models: classifies each request
// by shape and answers from the per-question script table.
class FixtureModel : public ModelBackend {
public:
    explicit FixtureModel(std::string id) : id_(std::move(id)) {
        for (auto& s : fixture_scripts()) scripts_.push_back(std::move(s));
    }

    ModelTurnWire complete(const ChatRequest& request) override {
        const std::string text = flatten(request);

        if (!request.tools.empty()) return agent_turn(request, text);
        if (text.rfind("You are given", 0) == 0) return caption_turn(text);
        if (text.rfind("Build a scene graph", 0) == 0) return graph_build_turn(text);
        if (text.find("Reports from the modality agents") != std::string::npos) {
            return organizer_turn(text);
        }
        if (!request.messages.empty() && !request.messages.back().media.empty()) {
            return video_query_turn(text);
        }
        throw BackendFailureError("fixture model cannot classify request", false);
    }

    std::string id() const override { return id_; }

private:
    const QuestionScript& script_for(const std::string& text) const {
        for (const auto& s : scripts_) {
            if (text.find(s.anchor) != std::string::npos) return s;
        }
        throw BackendFailureError("no fixture script matches request", false);
    }

    ModelTurnWire agent_turn(const ChatRequest& request, const std::string& text) const {
        const QuestionScript& s = script_for(text);
        const bool has_result = tool_result_count(request) > 0;
        if (has_tool(request, "get_captions")) {
            if (!has_result) return ModelTurnWire::from_tool_call("get_captions", "{}");
            return final_answer(s.text_ans, "caption",
                                "the captions describe the " + s.anchor + " scene",
                                first_line(last_tool_result(request)));
        }
        if (has_tool(request, "video_query")) {
            if (!has_result) {
                return ModelTurnWire::from_tool_call(
                    "video_query",
                    json{{"query", "describe the key actions around the " + s.anchor}}.dump());
            }
            return final_answer(s.video_ans, "video",
                                "direct visual inspection of the " + s.anchor + " footage",
                                first_line(last_tool_result(request)));
        }
        if (has_tool(request, "graph_range")) {
            if (!has_result) {
                return ModelTurnWire::from_tool_call("graph_range",
                                                     json{{"t0", 0}, {"t1", 999}}.dump());
            }
            return final_answer(s.graph_ans, "triplet",
                                "the relation triplets cover the " + s.anchor + " interaction",
                                first_line(last_tool_result(request)));
        }
        throw BackendFailureError("fixture model saw unknown tool schemas", false);
    }

    static ModelTurnWire final_answer(int index, const std::string& kind,
                                      const std::string& rationale, const std::string& content) {
        json evidence = json::array();
        evidence.push_back(json{{"kind", kind}, {"time_span", {0, 4}}, {"content", content}});
        return ModelTurnWire::from_text(
            json{{"answer", index}, {"rationale", rationale}, {"evidence", evidence}}.dump());
    }

    ModelTurnWire caption_turn(const std::string& text) const {
        const QuestionScript& s = script_for(text);
        // "covering seconds X to Y"
        int start = 0;
        const auto pos = text.find("covering seconds ");
        if (pos != std::string::npos) start = std::atoi(text.c_str() + pos + 17);
        std::string caption;
        if (start == 0) {
            caption = "a person works with the " + s.anchor + " on the counter";
        } else if (start == 4) {
            caption = "a person works with the " + s.anchor + " near the counter";
        } else {
            caption = "later the room is empty and quiet";
        }
        return ModelTurnWire::from_text(caption);
    }

    static ModelTurnWire graph_build_turn(const std::string& text) {
        // One triplet per caption line, built from its last word.
        std::string out;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line)) {
            if (line.rfind("- [", 0) != 0) continue;
            while (!line.empty() && (line.back() == ' ' || line.back() == '.')) line.pop_back();
            const auto space = line.find_last_of(' ');
            const std::string word = line.substr(space + 1);
            out += "(person, interacts with, " + word + ")\n";
        }
        if (out.empty()) out = "(person, stands in, room)\n";
        return ModelTurnWire::from_text(out);
    }

    ModelTurnWire organizer_turn(const std::string& text) const {
        return ModelTurnWire::from_text(script_for(text).organizer_reply);
    }

    ModelTurnWire video_query_turn(const std::string& text) const {
        const QuestionScript& s = script_for(text);
        return ModelTurnWire::from_text("the footage shows a person handling the " + s.anchor +
                                        " across the clip");
    }

    std::string id_;
    std::vector<QuestionScript> scripts_;
};

void write_frames(const fs::path& root) {
    for (const auto& [video, count] : kVideoFrames) {
        const fs::path dir = root / video;
        fs::create_directories(dir);
        for (int i = 0; i < count; ++i) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%06d.png", i);
            std::ofstream out(dir / name, std::ios::binary);
            out.write(reinterpret_cast<const char*>(kPngBytes), sizeof(kPngBytes));
        }
    }
}

void write_dataset(const fs::path& path) {
    json records = json::array();
    for (const auto& s : fixture_scripts()) {
        json options = json::array();
        for (const auto& o : s.options) options.push_back(o);
        records.push_back(json{{"id", s.id},
                               {"video", s.video},
                               {"question", s.question},
                               {"options", options},
                               {"answer", option_letter(s.gold)},
                               {"category", s.category}});
    }
    std::ofstream out(path);
    out << records.dump(2) << "\n";
}

void check_anchor_uniqueness() {
    const auto scripts = fixture_scripts();
    for (const auto& s : scripts) {
        if (s.question.find(s.anchor) == std::string::npos) {
            throw Error("anchor '" + s.anchor + "' missing from its question: " + s.id);
        }
        for (const auto& other : scripts) {
            if (other.id == s.id) continue;
            std::string haystack = s.question;
            for (const auto& o : s.options) haystack += " " + o;
            if (haystack.find(other.anchor) != std::string::npos) {
                throw Error("question " + s.id + " leaks anchor '" + other.anchor + "'");
            }
        }
    }
}

RunConfig fixture_config(const fs::path& root) {
    RunConfig config;
    config.mode = RunMode::Report;
    config.aggregator = OrganizerConfig::Aggregate::Model;
    config.dataset_path = (root / "dataset.json").string();
    config.frames_root = (root / "frames").string();
    config.guided_captions = true;
    config.agent_backend = "agents";
    config.organizer_backend = "organizer";
    config.captioner_backend = "captioner";
    config.grapher_backend = "grapher";
    config.video_backend = "video";
    config.workers = 1;
    return config;
}

const std::vector<std::string> kBackendIds = {"agents", "organizer", "captioner", "grapher",
                                              "video"};

}  // namespace

int main(int argc, char** argv) {
    const fs::path root = argc > 1 ? fs::path(argv[1]) : fs::path("fixtures/replay8");
    try {
        check_anchor_uniqueness();

        fs::remove_all(root / "cassettes");
        fs::remove_all(root / "frames");
        fs::create_directories(root / "cassettes");
        write_frames(root / "frames");
        write_dataset(root / "dataset.json");

        // Record pass: deterministic scripted models behind record-through
        // cassettes, outputs discarded.
        RunConfig config = fixture_config(root);
        config.output_dir = (fs::temp_directory_path() / "mavqa_fixture_record").string();
        fs::remove_all(config.output_dir);

        BenchContext ctx;
        ctx.captions = std::make_shared<CaptionStore>(
            (fs::path(config.output_dir) / "stores" / "captions.jsonl").string());
        ctx.graphs = std::make_shared<SceneGraphStore>(
            (fs::path(config.output_dir) / "stores" / "graphs.jsonl").string());
        for (const auto& id : kBackendIds) {
            auto cassette =
                std::make_shared<Cassette>((root / "cassettes" / (id + ".jsonl")).string());
            ctx.registry.add(id, std::make_shared<RecordBackend>(
                                     std::make_shared<FixtureModel>(id), std::move(cassette)));
        }
        const RunResult result = run_benchmark(config, ctx);

        // Self-check against the hand-planned outcomes.
        const std::vector<int> expected_final = {3, 0, 2, 2, 1, 2, 1, 3};
        const std::vector<bool> expected_correct = {true, true, true, false,
                                                    true, true, false, true};
        if (result.outcomes.size() != 8) throw Error("expected 8 outcomes");
        for (std::size_t i = 0; i < 8; ++i) {
            if (!result.outcomes[i].chosen || *result.outcomes[i].chosen != expected_final[i]) {
                throw Error("outcome drift at " + result.outcomes[i].question_id + ": " +
                            result.outcomes[i].error);
            }
            if (*result.outcomes[i].correct() != expected_correct[i]) {
                throw Error("correctness drift at " + result.outcomes[i].question_id);
            }
        }
        if (round1(*result.aggregate.overall_accuracy) != 75.0) {
            throw Error("expected overall accuracy 75.0");
        }

        // Replay config shipped with the fixture; paths relative to it.
        RunConfig shipped = fixture_config(root);
        shipped.dataset_path = "dataset.json";
        shipped.frames_root = "frames";
        shipped.output_dir = "";
        for (const auto& id : kBackendIds) {
            BackendConfig b;
            b.backend_id = id;
            b.kind = BackendKind::Replay;
            b.cassette = "cassettes/" + id + ".jsonl";
            shipped.backends.emplace(id, b);
        }
        std::ofstream out(root / "config.json");
        out << to_json(shipped).dump(2) << "\n";

        fs::remove_all(config.output_dir);
        std::cout << "fixture written to " << root.string() << " (accuracy "
                  << round1(*result.aggregate.overall_accuracy) << ")\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "fixture generation failed: " << e.what() << "\n";
        return 1;
    }
}
