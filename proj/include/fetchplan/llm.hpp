#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fetchplan/episode_log.hpp"
#include "fetchplan/names.hpp"
#include "fetchplan/prompts.hpp"

namespace fetchplan::llm {

class BudgetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class OversizedTurnError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Backend failures a caller can react to: transport problems, truncated or
/// malformed responses, and timeouts are distinguishable so the dialog layer
/// can fall back to asking the user.
class BackendError : public std::runtime_error {
public:
    enum class Kind { transport, truncated, timeout };

    BackendError(Kind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Sampling and size parameters of one generation request.
struct GenerationParams {
    int max_seq_len = 4096;
    int max_gen_len = 2048;
    double temperature = 0.6;
    double top_p = 0.9;
};

enum class Role { user, assistant };

inline const char* to_string(Role role) { return role == Role::user ? "user" : "assistant"; }

struct ChatTurn {
    Role role;
    std::string text;
    int token_count = 0;
};

/// Token estimator used to enforce the memory budget without the model's
/// tokenizer. Deterministic and monotone in text length.
using TokenEstimator = std::function<int(std::string_view)>;

inline int default_token_estimate(std::string_view text) {
    return static_cast<int>((text.size() + 3) / 4);
}

inline int estimate_tokens(std::string_view text) { return default_token_estimate(text); }

/// Context budget: floor((max_seq_len / 2 - sys_token) * 0.8). Keeps 80% of
/// the usable half-window for history so generation can still complete.
inline int compute_token_budget(int max_seq_len, int sys_token) {
    if (max_seq_len <= 0) throw BudgetError("max_seq_len must be positive");
    if (sys_token < 0) throw BudgetError("sys_token must be non-negative");
    int budget = static_cast<int>(std::floor((max_seq_len / 2.0 - sys_token) * 0.8));
    if (budget <= 0)
        throw BudgetError("non-positive token budget: system prompt of " +
                          std::to_string(sys_token) + " tokens leaves no room in a window of " +
                          std::to_string(max_seq_len));
    return budget;
}

/// Rolling window of prior chat turns under a token budget. The system
/// prompt is never stored here, so it can never be evicted.
struct DialogMemory {
    std::vector<ChatTurn> turns;
    int budget = 0;
    bool enabled = false;

    int total_tokens() const {
        int sum = 0;
        for (const auto& t : turns) sum += t.token_count;
        return sum;
    }
};

/// Append `turn` and evict whole turns, oldest first, until the total fits
/// the budget again.
inline void append_and_trim(DialogMemory& memory, ChatTurn turn) {
    if (turn.token_count > memory.budget)
        throw OversizedTurnError("turn of " + std::to_string(turn.token_count) +
                                 " tokens exceeds memory budget of " + std::to_string(memory.budget));
    memory.turns.push_back(std::move(turn));
    int total = memory.total_tokens();
    std::size_t evict = 0;
    while (total > memory.budget) {
        total -= memory.turns[evict].token_count;
        ++evict;
    }
    if (evict > 0) memory.turns.erase(memory.turns.begin(), memory.turns.begin() + evict);
}

struct BackendRequest {
    std::string system_prompt;
    std::vector<ChatTurn> turns;
    std::string inquiry;
    GenerationParams params;
};

struct BackendResponse {
    std::string text;
    int generated_tokens = 0;
    double latency_s = 0.0;
};

/// Chat-model backend behind a single synchronous request/response exchange.
class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendResponse complete(const BackendRequest& request) = 0;
};

// ---------------------------------------------------------------------------
// Scripted backend
// ---------------------------------------------------------------------------

/// Key a scripted entry matches on: the inquiry's template label plus the
/// object name it mentions. An empty object matches any object.
struct ScriptMatch {
    std::string label;
    std::string object;
};

struct ScriptEntry {
    ScriptMatch match;
    std::string response;
};

struct Script {
    std::vector<ScriptEntry> entries;
    std::string default_response = "I am not sure.";

    Script& add(std::string label, std::string object, std::string response) {
        entries.push_back({{std::move(label), std::move(object)}, std::move(response)});
        return *this;
    }
};

inline Script load_script(const nlohmann::json& doc) {
    Script script;
    const nlohmann::json* entries = &doc;
    if (doc.is_object()) {
        if (doc.contains("default_response"))
            script.default_response = doc.at("default_response").get<std::string>();
        entries = &doc.at("entries");
    }
    for (const auto& e : *entries) {
        ScriptEntry entry;
        entry.match.label = e.at("match").at("label").get<std::string>();
        entry.match.object = e.at("match").value("object", std::string{});
        entry.response = e.at("response").get<std::string>();
        script.entries.push_back(std::move(entry));
    }
    return script;
}

inline Script load_script_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open backend script: " + path.string());
    return load_script(nlohmann::json::parse(in));
}

namespace detail {

/// Pull the object name out of an "I am searching for X." style sentence.
inline std::string object_of_inquiry(const std::string& inquiry) {
    const std::string cue = "for ";
    auto pos = inquiry.find(cue);
    if (pos == std::string::npos) return {};
    auto end = inquiry.find_first_of(".,?", pos);
    if (end == std::string::npos) end = inquiry.size();
    return normalize_name(inquiry.substr(pos + cue.size(), end - pos - cue.size()));
}

/// Classify a rendered inquiry back to its template label via wording cues,
/// so scripts survive template rewording.
inline std::string label_of_inquiry(const std::string& inquiry) {
    if (inquiry.find("summarize") != std::string::npos) return "summarize";
    if (inquiry.find("choose potential places") != std::string::npos) return "again";
    if (inquiry.find("furniture list") != std::string::npos) return "furniture";
    if (inquiry.find("sort them") != std::string::npos) return "multiple_pos";
    return "general_pos";
}

} // namespace detail

/// Deterministic test double: answers each inquiry from a script, matching
/// by inferred template label and object name. Construct one per episode;
/// the parsed script itself can be shared.
class ScriptedBackend : public Backend {
public:
    explicit ScriptedBackend(std::shared_ptr<const Script> script, double synthetic_latency_s = 0.0,
                             TokenEstimator estimator = default_token_estimate)
        : script_(std::move(script)), latency_(synthetic_latency_s), estimator_(std::move(estimator)) {}

    explicit ScriptedBackend(Script script)
        : ScriptedBackend(std::make_shared<const Script>(std::move(script))) {}

    BackendResponse complete(const BackendRequest& request) override {
        std::string label = detail::label_of_inquiry(request.inquiry);
        std::string object = detail::object_of_inquiry(request.inquiry);
        if (object.empty())
            object = last_object_; // the `again` template names no object
        else
            last_object_ = object;
        asked_.push_back({label, object});

        const std::string* text = &script_->default_response;
        for (const auto& entry : script_->entries) {
            if (entry.match.label != label) continue;
            if (entry.match.object.empty() || entry.match.object == object) {
                text = &entry.response;
                break;
            }
        }
        return BackendResponse{*text, estimator_(*text), latency_};
    }

    /// Inquiries seen so far, as (label, object) pairs.
    const std::vector<ScriptMatch>& asked() const { return asked_; }

private:
    std::shared_ptr<const Script> script_;
    double latency_ = 0.0;
    TokenEstimator estimator_;
    std::string last_object_;
    std::vector<ScriptMatch> asked_;
};

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

/// Send one inquiry: system prompt, the memory turns when enabled, then the
/// inquiry. On success the exchange is appended to memory (when enabled).
inline BackendResponse generate(Backend& backend, const std::string& system_prompt,
                                DialogMemory& memory, const std::string& inquiry,
                                const GenerationParams& params,
                                const TokenEstimator& estimator = default_token_estimate) {
    if (inquiry.empty()) throw std::invalid_argument("inquiry must be non-empty");

    BackendRequest request;
    request.system_prompt = system_prompt;
    if (memory.enabled) request.turns = memory.turns;
    request.inquiry = inquiry;
    request.params = params;

    BackendResponse response = backend.complete(request);
    if (response.text.empty())
        throw BackendError(BackendError::Kind::truncated, "backend returned an empty response");

    if (memory.enabled) {
        append_and_trim(memory, ChatTurn{Role::user, inquiry, estimator(inquiry)});
        append_and_trim(memory, ChatTurn{Role::assistant, response.text, estimator(response.text)});
    }
    return response;
}

// ---------------------------------------------------------------------------
// Session
// ---------------------------------------------------------------------------

/// Running totals a session keeps for the benchmark metrics.
struct BackendStats {
    int calls = 0;
    double total_latency_s = 0.0;
    std::int64_t generated_tokens = 0;
};

/// One episode's handle on the backend: owns the dialog memory, the system
/// prompt, parameters, and call statistics. Not shared across episodes.
class BackendSession {
public:
    BackendSession(Backend& backend, std::string system_prompt, GenerationParams params,
                   bool memory_enabled, TokenEstimator estimator = default_token_estimate)
        : backend_(backend), system_prompt_(std::move(system_prompt)), params_(params),
          estimator_(std::move(estimator)) {
        // the budget formula needs the measured size of this session's
        // actual system prompt
        memory_.budget = compute_token_budget(params_.max_seq_len, estimator_(system_prompt_));
        memory_.enabled = memory_enabled;
    }

    BackendResponse ask(const std::string& inquiry) {
        BackendResponse response = generate(backend_, system_prompt_, memory_, inquiry, params_, estimator_);
        stats_.calls += 1;
        stats_.total_latency_s += response.latency_s;
        stats_.generated_tokens += response.generated_tokens;
        if (log_)
            log_->event("llm_call", {{"inquiry", inquiry},
                                     {"response", response.text},
                                     {"generated_tokens", response.generated_tokens},
                                     {"latency_s", response.latency_s}});
        return response;
    }

    const BackendStats& stats() const { return stats_; }
    const DialogMemory& memory() const { return memory_; }
    const std::string& system_prompt() const { return system_prompt_; }
    const GenerationParams& params() const { return params_; }

    void attach_log(EpisodeLog* log) { log_ = log; }
    EpisodeLog* log() const { return log_; }

private:
    Backend& backend_;
    std::string system_prompt_;
    GenerationParams params_;
    TokenEstimator estimator_;
    DialogMemory memory_;
    BackendStats stats_;
    EpisodeLog* log_ = nullptr;
};

} // namespace fetchplan::llm
