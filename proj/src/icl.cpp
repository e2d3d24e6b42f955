#include "llmcodec/icl.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#ifdef LLMCODEC_HAVE_OPENSSL
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "llmcodec/binary_io.hpp"
#include "llmcodec/error.hpp"
#include "llmcodec/hash.hpp"

namespace llmcodec::icl {

namespace {

using nlohmann::json;

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    const auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
    while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
    while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_words(std::string_view s) {
    std::vector<std::string> out;
    std::istringstream in{std::string(s)};
    for (std::string w; in >> w;) out.push_back(std::move(w));
    return out;
}

bool in_label_set(const std::string& label, const std::vector<std::string>& labels) {
    const std::string l = lower(label);
    return std::any_of(labels.begin(), labels.end(), [&](const std::string& x) { return lower(x) == l; });
}

void append_blocks(std::string& out, const Episode& ep) {
    for (std::size_t r = 0; r <= ep.repeats; ++r)
        for (const auto& d : ep.demonstrations) out += "###\nInput: " + d.input + "\nOutput: " + d.output + "\n";
    out += "###\nInput: " + ep.query + "\nOutput:";
}

std::string quoted_labels(const std::vector<std::string>& labels) {
    std::string out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (i) out += " or ";
        out += "`" + labels[i] + "'";
    }
    return out;
}

}  // namespace

std::string build_classification_prompt(const Episode& ep) {
    if (ep.task_kind != TaskKind::Classification)
        throw Error(ErrorCode::InvalidArgument, "episode is not a classification task");
    if (ep.demonstrations.empty()) throw Error(ErrorCode::EmptyDemonstrations, "classification prompt needs demonstrations");
    for (const auto& d : ep.demonstrations)
        if (!in_label_set(d.output, ep.label_set))
            throw Error(ErrorCode::LabelNotInSet, "demonstration output not in label set", d.output);

    std::string out;
    if (ep.induction) {
        if (ep.induction->empty())
            out += "For each of the following input-output pairs, the output is one of [" + quoted_labels(ep.label_set) + "]\n";
        else
            out += *ep.induction + "\n";
    }
    append_blocks(out, ep);
    return out;
}

std::string build_generation_prompt(const Episode& ep) {
    if (ep.task_kind != TaskKind::Generation) throw Error(ErrorCode::InvalidArgument, "episode is not a generation task");
    if (ep.demonstrations.empty()) throw Error(ErrorCode::EmptyDemonstrations, "generation prompt needs demonstrations");
    std::string out;
    if (ep.induction) out += "Instruction: " + *ep.induction + "\n";
    append_blocks(out, ep);
    return out;
}

std::string build_prompt(const Episode& ep) {
    return ep.task_kind == TaskKind::Classification ? build_classification_prompt(ep) : build_generation_prompt(ep);
}

// ---------------------------------------------------------------------------

namespace {

Episode episode_from_json(const json& j) {
    Episode ep;
    const std::string kind = j.at("task_kind").get<std::string>();
    if (kind == "classification")
        ep.task_kind = TaskKind::Classification;
    else if (kind == "generation")
        ep.task_kind = TaskKind::Generation;
    else
        throw Error(ErrorCode::ParseError, "unknown task_kind", kind);
    if (j.contains("induction") && !j["induction"].is_null()) ep.induction = j["induction"].get<std::string>();
    if (j.contains("label_set")) ep.label_set = j["label_set"].get<std::vector<std::string>>();
    for (const auto& d : j.at("demonstrations"))
        ep.demonstrations.push_back({d.at("input").get<std::string>(), d.at("output").get<std::string>()});
    ep.repeats = j.value("repeats", std::size_t{0});
    ep.query = j.at("query").get<std::string>();
    ep.answer = j.value("answer", std::string{});
    if (j.contains("layer_selection")) {
        const auto& ls = j["layer_selection"];
        if (ls.is_string()) {
            if (ls.get<std::string>() != "semantic")
                throw Error(ErrorCode::ParseError, "layer_selection must be \"semantic\" or a list of 1-based ids");
            ep.layer_selection = {0};
        } else {
            ep.layer_selection.clear();
            for (const auto& v : ls) {
                const int id = v.get<int>();
                if (id < 1) throw Error(ErrorCode::ParseError, "layer ids are 1-based");
                ep.layer_selection.push_back(static_cast<std::size_t>(id - 1));
            }
            std::sort(ep.layer_selection.begin(), ep.layer_selection.end());
            ep.layer_selection.erase(std::unique(ep.layer_selection.begin(), ep.layer_selection.end()),
                                     ep.layer_selection.end());
        }
    }
    return ep;
}

json episode_to_json(const Episode& ep) {
    json j;
    j["task_kind"] = ep.task_kind == TaskKind::Classification ? "classification" : "generation";
    j["induction"] = ep.induction ? json(*ep.induction) : json(nullptr);
    j["label_set"] = ep.label_set;
    j["demonstrations"] = json::array();
    for (const auto& d : ep.demonstrations) j["demonstrations"].push_back({{"input", d.input}, {"output", d.output}});
    j["repeats"] = ep.repeats;
    j["query"] = ep.query;
    j["answer"] = ep.answer;
    std::vector<std::size_t> ids;
    for (auto id : ep.layer_selection) ids.push_back(id + 1);
    j["layer_selection"] = ids;
    return j;
}

}  // namespace

std::vector<Episode> load_episodes(const std::filesystem::path& path) {
    const std::string text = bin::read_file(path.string());
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what(), path.string());
    }
    if (!j.is_array()) throw Error(ErrorCode::ParseError, "episode file must hold a JSON list", path.string());
    std::vector<Episode> out;
    try {
        for (const auto& e : j) out.push_back(episode_from_json(e));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::ParseError, e.what(), path.string());
    }
    return out;
}

void save_episodes(const std::vector<Episode>& episodes, const std::filesystem::path& path) {
    json j = json::array();
    for (const auto& ep : episodes) j.push_back(episode_to_json(ep));
    bin::write_file(path.string(), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------

CompletionResponse lm_complete(const LmClient& client, const CompletionRequest& request) {
    if (request.prompt.empty()) throw Error(ErrorCode::EmptyInput, "prompt is empty");
    if (request.max_tokens <= 0) throw Error(ErrorCode::InvalidArgument, "max_tokens must be positive");
    CompletionRequest greedy = request;
    greedy.temperature = 0.0;
    return client.complete(greedy);
}

ParsedPrompt parse_prompt(std::string_view prompt) {
    ParsedPrompt out;
    std::vector<std::string_view> blocks;
    std::size_t pos = prompt.find("###\n");
    while (pos != std::string_view::npos) {
        const std::size_t start = pos + 4;
        const std::size_t next = prompt.find("###\n", start);
        blocks.push_back(prompt.substr(start, next == std::string_view::npos ? std::string_view::npos : next - start));
        pos = next;
    }
    const auto field = [](std::string_view block, std::string_view key) -> std::string {
        const std::size_t at = block.find(key);
        if (at == std::string_view::npos) return {};
        std::string_view rest = block.substr(at + key.size());
        const std::size_t nl = rest.find('\n');
        return std::string(trim(rest.substr(0, nl)));
    };
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i + 1 == blocks.size())
            out.query = field(blocks[i], "Input:");
        else
            out.demonstrations.push_back({field(blocks[i], "Input:"), field(blocks[i], "Output:")});
    }
    return out;
}

CompletionResponse NearestDemoClient::complete(const CompletionRequest& request) const {
    const ParsedPrompt p = parse_prompt(request.prompt);
    if (p.demonstrations.empty()) return {"", "stop"};
    const auto query_words = split_words(p.query);
    const std::set<std::string> query(query_words.begin(), query_words.end());
    std::size_t best = 0;
    std::size_t best_overlap = 0;
    for (std::size_t i = 0; i < p.demonstrations.size(); ++i) {
        const auto words = split_words(p.demonstrations[i].input);
        const std::set<std::string> demo(words.begin(), words.end());
        std::size_t overlap = 0;
        for (const auto& w : demo) overlap += query.count(w);
        if (overlap > best_overlap) {
            best_overlap = overlap;
            best = i;
        }
    }
    return {" " + p.demonstrations[best].output + "\n###", "stop"};
}

CompletionResponse ConstantClient::complete(const CompletionRequest&) const { return {text_, "stop"}; }

CompletionResponse TableClient::complete(const CompletionRequest& request) const {
    const ParsedPrompt p = parse_prompt(request.prompt);
    const auto it = table_.find(p.query);
    return {it == table_.end() ? fallback_ : it->second, "stop"};
}

// ---------------------------------------------------------------------------

HttpClient::HttpClient(HttpClientOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) throw Error(ErrorCode::InvalidArgument, "completion endpoint URL is empty");
}

HttpClient HttpClient::from_env() {
    const char* url = std::getenv("LLMCODEC_LM_URL");
    if (!url || !*url) throw Error(ErrorCode::InvalidArgument, "LLMCODEC_LM_URL is not set");
    HttpClientOptions opts;
    opts.base_url = url;
    if (const char* key = std::getenv("LLMCODEC_LM_KEY")) opts.api_key = key;
    if (const char* model = std::getenv("LLMCODEC_LM_MODEL"); model && *model) opts.model = model;
    return HttpClient(std::move(opts));
}

CompletionResponse HttpClient::complete(const CompletionRequest& request) const {
    // httplib takes scheme://host[:port]; any path on the base URL becomes a prefix.
    std::string origin = options_.base_url;
    std::string prefix;
    const std::size_t scheme = origin.find("://");
    const std::size_t slash = origin.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (slash != std::string::npos) {
        prefix = origin.substr(slash);
        origin.resize(slash);
    }
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();

    httplib::Client cli(origin);
    const auto secs = static_cast<time_t>(options_.timeout.count());
    cli.set_connection_timeout(secs, 0);
    cli.set_read_timeout(secs, 0);
    cli.set_write_timeout(secs, 0);
    httplib::Headers headers;
    if (!options_.api_key.empty()) headers.emplace("Authorization", "Bearer " + options_.api_key);

    const json body = {{"model", options_.model},
                       {"prompt", request.prompt},
                       {"max_tokens", request.max_tokens},
                       {"temperature", 0}};
    auto res = cli.Post(prefix + "/v1/completions", headers, body.dump(), "application/json");
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read)
            throw Error(ErrorCode::Timeout, "completion request timed out", httplib::to_string(err));
        throw Error(ErrorCode::IoError, "completion request failed", httplib::to_string(err));
    }
    if (res->status != 200) throw HttpError(res->status, res->body);

    try {
        const json j = json::parse(res->body);
        const auto& choice = j.at("choices").at(0);
        CompletionResponse out;
        out.text = choice.at("text").get<std::string>();
        if (choice.contains("finish_reason") && choice["finish_reason"].is_string())
            out.finish_reason = choice["finish_reason"].get<std::string>();
        return out;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedResponse, e.what(), res->body.substr(0, 200));
    }
}

CompletionResponse RetryingClient::complete(const CompletionRequest& request) const {
    for (int attempt = 0;; ++attempt) {
        try {
            return inner_.complete(request);
        } catch (const HttpError& e) {
            const bool transient = e.status() == 429 || e.status() >= 500;
            if (!transient || attempt >= retries_) throw;
        } catch (const Error& e) {
            const bool transient = e.code() == ErrorCode::Timeout || e.code() == ErrorCode::IoError;
            if (!transient || attempt >= retries_) throw;
        }
        std::this_thread::sleep_for(backoff_ * (1 << attempt));
    }
}

// ---------------------------------------------------------------------------

std::string normalize_completion(std::string_view text) { return lower(trim(text)); }

std::optional<std::string> extract_label(std::string_view completion, const std::vector<std::string>& label_set) {
    const std::string norm = normalize_completion(completion);
    for (const auto& label : label_set) {
        const std::string l = lower(label);
        if (!l.empty() && norm.compare(0, l.size(), l) == 0) return label;
    }
    for (const auto& label : label_set) {
        const std::string l = lower(label);
        if (!l.empty() && norm.find(l) != std::string::npos) return label;
    }
    return std::nullopt;
}

ClassificationReport score_classification(const std::vector<Episode>& episodes, const LmClient& client,
                                          const ScoreOptions& options) {
    if (episodes.empty()) throw Error(ErrorCode::EmptyInput, "no episodes to score");
    const std::size_t n = episodes.size();
    // Prompts are built up front so template errors surface before any request.
    std::vector<std::string> prompts;
    prompts.reserve(n);
    for (const auto& ep : episodes) prompts.push_back(build_classification_prompt(ep));

    std::vector<std::optional<EpisodeResult>> results(n);
    std::atomic<std::size_t> next{0};
    std::atomic<bool> abort{false};
    std::mutex error_mutex;
    std::optional<std::string> first_error;

    const auto worker = [&] {
        while (!abort.load()) {
            const std::size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                EpisodeResult r;
                r.index = i;
                Fnv1a64 h;
                h.update(prompts[i]);
                r.prompt_hash = to_hex(h.digest());
                CompletionRequest req;
                req.prompt = prompts[i];
                req.max_tokens = options.max_tokens;
                r.completion = lm_complete(client, req).text;
                r.prediction = extract_label(r.completion, episodes[i].label_set);
                r.correct = r.prediction && lower(*r.prediction) == lower(episodes[i].answer);
                results[i] = std::move(r);
            } catch (const std::exception& e) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = "episode " + std::to_string(i) + ": " + e.what();
                abort = true;
            }
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(options.max_in_flight, 1, n);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    ClassificationReport report;
    report.error = first_error;
    for (auto& r : results) {
        if (!r) continue;
        report.correct += r->correct ? 1 : 0;
        report.episodes.push_back(std::move(*r));
    }
    report.total = report.episodes.size();
    report.accuracy = report.total ? static_cast<double>(report.correct) / static_cast<double>(report.total) : 0.0;
    return report;
}

// ---------------------------------------------------------------------------

std::string truncate_completion(std::string_view completion) {
    const std::size_t cut = completion.find("###");
    return std::string(trim(completion.substr(0, cut)));
}

AudioBuffer run_generation(const Episode& ep, const LmClient& client, const nn::ToyCodecModel& model, int max_tokens) {
    CompletionRequest req;
    req.prompt = build_generation_prompt(ep);
    req.max_tokens = max_tokens;
    const std::string text = truncate_completion(lm_complete(client, req).text);
    if (text.empty()) throw Error(ErrorCode::EmptyCompletion, "completion holds no tokens");

    const CodecConfig& cfg = model.config();
    const auto& books = model.books();
    QuantizedAudio q = parse_tokens(text, books, ep.layer_selection);

    // Frame count follows from the finest selected layer.
    std::size_t finest = ep.layer_selection.front();
    for (auto id : ep.layer_selection)
        if (cfg.vq_strides[id] < cfg.vq_strides[finest]) finest = id;
    const std::size_t frames = q.layers[finest].size() * cfg.vq_strides[finest];
    for (auto id : ep.layer_selection)
        if (q.layers[id].size() != std::max<std::size_t>(1, frames / cfg.vq_strides[id]))
            throw Error(ErrorCode::LengthMismatch, "layer token counts disagree", std::to_string(id + 1));

    q.frame_count = frames;
    q.strides = cfg.vq_strides;
    q.config_digest = config_digest(cfg, books);
    return model.reconstruct(q);
}

}  // namespace llmcodec::icl
