#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmcodec/icl.hpp"
#include "llmcodec/train.hpp"
#include "episode_fixtures.hpp"
#include "test_util.hpp"

using namespace llmcodec;
using namespace llmcodec::icl;
using testutil::code_of;

namespace {

std::string golden(const std::string& name) {
    std::ifstream in(std::string(LLMCODEC_GOLDEN_DIR) + "/" + name, std::ios::binary);
    EXPECT_TRUE(in.good()) << name;
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t count_of(const std::string& text, const std::string& needle) {
    std::size_t n = 0;
    for (std::size_t p = text.find(needle); p != std::string::npos; p = text.find(needle, p + 1)) ++n;
    return n;
}

// Two classes drawn from disjoint label ranges; each clip is a random
// sequence of its class's labels.
class LocalServer {
public:
    LocalServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~LocalServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string url() const { return "http://127.0.0.1:" + std::to_string(port_); }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

}  // namespace

TEST(Prompt, EmotionGoldenFiles) {
    for (std::size_t r : {0u, 1u, 3u}) {
        EXPECT_EQ(build_classification_prompt(testutil::emotion_episode(r, true)),
                  golden("emotion_2way_repeats" + std::to_string(r) + ".txt"));
        EXPECT_EQ(build_classification_prompt(testutil::emotion_episode(r, false)),
                  golden("emotion_2way_noinduction_repeats" + std::to_string(r) + ".txt"));
    }
}

TEST(Prompt, DigitsGoldenFiles) {
    for (std::size_t r : {0u, 1u, 3u})
        EXPECT_EQ(build_generation_prompt(testutil::digits_episode(r, true)),
                  golden("digits_tts_repeats" + std::to_string(r) + ".txt"));
    EXPECT_EQ(build_generation_prompt(testutil::digits_episode(0, false)), golden("digits_tts_noinduction_repeats0.txt"));
}

TEST(Prompt, StructureRules) {
    const auto no_induction = build_classification_prompt(testutil::emotion_episode(0, false));
    EXPECT_EQ(no_induction.rfind("###", 0), 0u);
    for (std::size_t r = 0; r < 5; ++r) {
        const auto p = build_classification_prompt(testutil::emotion_episode(r, true));
        EXPECT_EQ(count_of(p, "###\n"), 2 * (r + 1) + 1);
        EXPECT_TRUE(p.ends_with("Output: sad\n###\nInput: <token sequence from the query audio>\nOutput:"));
    }
    Episode one = testutil::digits_episode(0, false);
    one.demonstrations.resize(1);
    EXPECT_EQ(count_of(build_generation_prompt(one), "###\n"), 2u);
    EXPECT_NE(build_generation_prompt(one).find("Input: <an audio of 1>\n"), std::string::npos);

    Episode custom = testutil::emotion_episode(0, true);
    custom.induction = "Classify the emotion.";
    EXPECT_EQ(build_classification_prompt(custom).rfind("Classify the emotion.\n###\n", 0), 0u);
    EXPECT_EQ(build_prompt(custom), build_classification_prompt(custom));
    EXPECT_EQ(build_prompt(testutil::digits_episode(1, true)), build_generation_prompt(testutil::digits_episode(1, true)));
}

TEST(Prompt, Errors) {
    Episode ep = testutil::emotion_episode(0, true);
    ep.demonstrations.clear();
    EXPECT_EQ(code_of([&] { build_classification_prompt(ep); }), ErrorCode::EmptyDemonstrations);
    ep = testutil::emotion_episode(0, true);
    ep.demonstrations[1].output = "angry";
    try {
        build_classification_prompt(ep);
        FAIL() << "expected LabelNotInSet";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::LabelNotInSet);
        EXPECT_EQ(e.detail(), "angry");
    }
    Episode gen = testutil::digits_episode(0, true);
    gen.demonstrations.clear();
    EXPECT_EQ(code_of([&] { build_generation_prompt(gen); }), ErrorCode::EmptyDemonstrations);
    EXPECT_EQ(code_of([&] { build_generation_prompt(testutil::emotion_episode(0, true)); }), ErrorCode::InvalidArgument);
}

TEST(Episodes, JsonRoundTripAndErrors) {
    testutil::TempDir dir("eps");
    std::vector<Episode> eps{testutil::emotion_episode(2, true), testutil::digits_episode(0, false), testutil::emotion_episode(0, false)};
    eps[0].layer_selection = {0, 2};
    eps[2].induction = "Custom line";
    save_episodes(eps, dir / "e.json");
    const auto back = load_episodes(dir / "e.json");
    ASSERT_EQ(back.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(build_prompt(back[i]), build_prompt(eps[i]));
        EXPECT_EQ(back[i].layer_selection, eps[i].layer_selection);
        EXPECT_EQ(back[i].answer, eps[i].answer);
        EXPECT_EQ(back[i].induction, eps[i].induction);
    }
    std::ofstream(dir / "sem.json") << R"([{"task_kind":"classification","label_set":["a"],)"
                                       R"("demonstrations":[{"input":"x","output":"a"}],"query":"y","layer_selection":"semantic"}])";
    const auto sem = load_episodes(dir / "sem.json");
    EXPECT_EQ(sem[0].layer_selection, (LayerSelection{0}));
    EXPECT_FALSE(sem[0].induction.has_value());
    EXPECT_EQ(sem[0].repeats, 0u);
    std::ofstream(dir / "bad1.json") << "{}";
    std::ofstream(dir / "bad2.json") << R"([{"task_kind":"dance","demonstrations":[],"query":""}])";
    std::ofstream(dir / "bad3.json") << "[{";
    for (auto f : {"bad1.json", "bad2.json", "bad3.json"})
        EXPECT_EQ(code_of([&] { load_episodes(dir / f); }), ErrorCode::ParseError) << f;
    EXPECT_EQ(code_of([&] { load_episodes(dir / "missing.json"); }), ErrorCode::NotFound);
}

TEST(Clients, NearestDemoOverlapRule) {
    Episode ep = testutil::emotion_episode(0, true);
    ep.label_set = {"happy", "sad"};
    ep.demonstrations = {{"a b c", "happy"}, {"d e f", "sad"}};
    ep.query = "a b c";
    NearestDemoClient mock;
    EXPECT_EQ(mock.complete({build_prompt(ep)}).text, " happy\n###");
    ep.query = "f e x";
    EXPECT_EQ(mock.complete({build_prompt(ep)}).text, " sad\n###");
    ep.query = "a d";  // tie -> lowest index
    EXPECT_EQ(mock.complete({build_prompt(ep)}).text, " happy\n###");
    ep.query = "a a a d e";  // distinct tokens count once
    EXPECT_EQ(mock.complete({build_prompt(ep)}).text, " sad\n###");
}

TEST(Clients, ParsePromptRecoversBlocks) {
    const auto p = parse_prompt(build_prompt(testutil::emotion_episode(1, true)));
    ASSERT_EQ(p.demonstrations.size(), 4u);
    EXPECT_EQ(p.demonstrations[3].input, "<token sequence from a sad emotion of audio>");
    EXPECT_EQ(p.demonstrations[3].output, "sad");
    EXPECT_EQ(p.query, "<token sequence from the query audio>");
}

TEST(Clients, ConstantTableAndValidation) {
    ConstantClient c("sad");
    EXPECT_EQ(lm_complete(c, {"x"}).text, "sad");
    EXPECT_EQ(code_of([&] { lm_complete(c, {""}); }), ErrorCode::EmptyInput);
    TableClient t({{"<an audio of 1+1>", "two"}}, "none");
    EXPECT_EQ(lm_complete(t, {build_prompt(testutil::digits_episode(0, true))}).text, "two");
    Episode other = testutil::digits_episode(0, true);
    other.query = "<an audio of 9>";
    EXPECT_EQ(lm_complete(t, {build_prompt(other)}).text, "none");
}

TEST(Scoring, NormalizationAndExtraction) {
    EXPECT_EQ(normalize_completion("  Happy\n###"), "happy\n###");
    EXPECT_EQ(extract_label("Happy\n###", {"happy", "sad"}), "happy");
    EXPECT_EQ(extract_label("I think sad", {"happy", "sad"}), "sad");
    EXPECT_EQ(extract_label("sad but happy", {"happy", "sad"}), "sad");
    EXPECT_EQ(extract_label("happy or sad", {"sad", "happy"}), "happy");
    EXPECT_EQ(extract_label("no idea", {"happy", "sad"}), std::nullopt);
    EXPECT_EQ(truncate_completion(" c a\n### Input"), "c a");
    EXPECT_EQ(truncate_completion("###"), "");
}

TEST(Scoring, NearestDemoOracleIsPerfect) {
    const auto eps = testutil::separable_episodes(50, 3);
    NearestDemoClient mock;
    for (std::size_t in_flight : {1u, 4u}) {
        ScoreOptions opt;
        opt.max_in_flight = in_flight;
        const auto report = score_classification(eps, mock, opt);
        EXPECT_FALSE(report.error.has_value());
        EXPECT_EQ(report.total, 50u);
        EXPECT_EQ(report.correct, 50u);
        EXPECT_EQ(report.accuracy, 1.0);
        for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(report.episodes[i].index, i);
    }
}

TEST(Scoring, ConstantClientOnBalancedSetIsHalf) {
    const auto eps = testutil::separable_episodes(50, 4);
    ConstantClient c(" happy");
    const auto report = score_classification(eps, c);
    EXPECT_EQ(report.accuracy, 0.5);
    ConstantClient junk("???");
    EXPECT_EQ(score_classification(eps, junk).accuracy, 0.0);
}

TEST(Scoring, ClientFailureGivesPartialReport) {
    class FailingAfter : public LmClient {
    public:
        CompletionResponse complete(const CompletionRequest&) const override {
            if (calls_.fetch_add(1) >= 3) throw HttpError(503, "busy");
            return {"happy", "stop"};
        }
        mutable std::atomic<int> calls_{0};
    };
    FailingAfter client;
    ScoreOptions opt;
    opt.max_in_flight = 1;
    const auto report = score_classification(testutil::separable_episodes(10, 5), client, opt);
    ASSERT_TRUE(report.error.has_value());
    EXPECT_NE(report.error->find("HTTP 503"), std::string::npos);
    EXPECT_EQ(report.total, 3u);
    EXPECT_EQ(code_of([&] { score_classification({}, client); }), ErrorCode::EmptyInput);
}

TEST(Http, SuccessRequestShape) {
    LocalServer srv;
    std::string seen_body, seen_auth;
    srv.server().Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
        seen_body = req.body;
        seen_auth = req.get_header_value("Authorization");
        res.set_content(R"({"choices":[{"text":" sad","finish_reason":"length"}]})", "application/json");
    });
    HttpClient client({srv.url(), "secret", "test-model", std::chrono::seconds(5)});
    const auto r = lm_complete(client, {"prompt text", 16, 0.7});
    EXPECT_EQ(r.text, " sad");
    EXPECT_EQ(r.finish_reason, "length");
    EXPECT_EQ(seen_auth, "Bearer secret");
    const auto body = nlohmann::json::parse(seen_body);
    EXPECT_EQ(body.at("model"), "test-model");
    EXPECT_EQ(body.at("prompt"), "prompt text");
    EXPECT_EQ(body.at("max_tokens"), 16);
    EXPECT_EQ(body.at("temperature"), 0);
}

TEST(Http, BaseUrlPathIsAPrefix) {
    LocalServer srv;
    srv.server().Post("/api/v1/completions", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"choices":[{"text":"ok"}]})", "application/json");
    });
    HttpClient client({srv.url() + "/api/", "", "m", std::chrono::seconds(5)});
    EXPECT_EQ(client.complete({"p"}).text, "ok");
}

TEST(Http, ErrorsAndRetries) {
    LocalServer srv;
    std::atomic<int> flaky_calls{0};
    std::atomic<int> fail_calls{0};
    srv.server().Post("/fail/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
        fail_calls.fetch_add(1);
        res.status = 500;
        res.set_content("boom", "text/plain");
    });
    srv.server().Post("/bad/v1/completions", [](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"nope":1})", "application/json");
    });
    srv.server().Post("/flaky/v1/completions", [&](const httplib::Request&, httplib::Response& res) {
        if (flaky_calls.fetch_add(1) < 2) {
            res.status = 503;
            return;
        }
        res.set_content(R"({"choices":[{"text":"third time"}]})", "application/json");
    });
    srv.server().Post("/missing/v1/completions", [](const httplib::Request&, httplib::Response& res) { res.status = 404; });

    HttpClient fail({srv.url() + "/fail", "", "m", std::chrono::seconds(5)});
    try {
        fail.complete({"p"});
        FAIL() << "expected HttpStatus";
    } catch (const HttpError& e) {
        EXPECT_EQ(e.code(), ErrorCode::HttpStatus);
        EXPECT_EQ(e.status(), 500);
    }
    HttpClient bad({srv.url() + "/bad", "", "m", std::chrono::seconds(5)});
    EXPECT_EQ(code_of([&] { bad.complete({"p"}); }), ErrorCode::MalformedResponse);

    HttpClient flaky({srv.url() + "/flaky", "", "m", std::chrono::seconds(5)});
    RetryingClient retry(flaky, 3, std::chrono::milliseconds(1));
    EXPECT_EQ(retry.complete({"p"}).text, "third time");
    EXPECT_EQ(flaky_calls.load(), 3);

    fail_calls = 0;
    RetryingClient exhausted(fail, 3, std::chrono::milliseconds(1));
    EXPECT_EQ(code_of([&] { exhausted.complete({"p"}); }), ErrorCode::HttpStatus);
    EXPECT_EQ(fail_calls.load(), 4);

    HttpClient missing({srv.url() + "/missing", "", "m", std::chrono::seconds(5)});
    RetryingClient no_retry(missing, 3, std::chrono::milliseconds(1));
    EXPECT_EQ(code_of([&] { no_retry.complete({"p"}); }), ErrorCode::HttpStatus);

    HttpClient closed({"http://127.0.0.1:1", "", "m", std::chrono::seconds(2)});
    const auto c = code_of([&] { closed.complete({"p"}); });
    EXPECT_TRUE(c == ErrorCode::IoError || c == ErrorCode::Timeout);
}

TEST(Http, EnvironmentConfiguration) {
    ::unsetenv("LLMCODEC_LM_URL");
    EXPECT_EQ(code_of([] { HttpClient::from_env(); }), ErrorCode::InvalidArgument);
    EXPECT_EQ(code_of([] { HttpClient(HttpClientOptions{}); }), ErrorCode::InvalidArgument);
}

TEST(Generation, EchoedDemoDecodesToTheSameAudio) {
    CodecConfig cfg;
    cfg.latent_dim = 6;
    const auto assets = make_synthetic_assets(64, 16, 40, 2);
    std::vector<Codebook> books{build_word_codebook(assets.words, assets.tokenizer, assets.table, 6, 1),
                                build_subword_codebook(assets.table, 6, 2), build_subword_codebook(assets.table, 6, 3)};
    nn::ModelOptions mo;
    mo.channels = 2;
    mo.max_channels = 8;
    const nn::ToyCodecModel model(cfg, books, mo);
    AudioBuffer clip = nn::synthetic_corpus(1, 480 * 8, 16000, 3)[0];
    QuantizedAudio q = model.quantize_audio(clip);

    for (const LayerSelection& sel : {LayerSelection{0}, LayerSelection{0, 1, 2}}) {
        QuantizedAudio kept = q;
        for (std::size_t i = 0; i < 3; ++i)
            if (std::find(sel.begin(), sel.end(), i) == sel.end()) kept.layers[i].clear();
        Episode ep = testutil::digits_episode(0, true);
        ep.layer_selection = sel;
        ep.demonstrations[0].output = render_tokens(q, model.books(), sel);
        TableClient echo(std::map<std::string, std::string>{{ep.query, " " + ep.demonstrations[0].output + "\n###\nInput:"}});
        const AudioBuffer out = run_generation(ep, echo, model);
        EXPECT_EQ(out.samples, model.reconstruct(kept).samples);
    }

    Episode ep = testutil::digits_episode(0, true);
    ConstantClient empty("###");
    EXPECT_EQ(code_of([&] { run_generation(ep, empty, model); }), ErrorCode::EmptyCompletion);
    ConstantClient unknown(" not_a_label_anywhere");
    EXPECT_EQ(code_of([&] { run_generation(ep, unknown, model); }), ErrorCode::UnknownLabel);
}
