#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fetchplan/kb.hpp"
#include "fetchplan/llm.hpp"
#include "fetchplan/names.hpp"
#include "fetchplan/prompts.hpp"

namespace fetchplan::verify {

class UnparseableOutputError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tuning of the verification pipeline. The retry counts bound the number of
/// backend calls, so termination is provable from this config.
struct VerificationConfig {
    int max_summarize_retries = 1;
    int max_again_retries = 1;
    int top_k_furniture = 3;
    int top_k_general = 5;
    prompts::InquiryTemplates templates = prompts::InquiryTemplates::builtin();
    prompts::LocationOutputSchema schema;
};

/// Names routed by exact ontology lookup. The three lists are pairwise
/// disjoint and together hold the deduplicated input.
struct NamePartition {
    std::vector<EntityName> rooms;
    std::vector<EntityName> furniture;
    std::vector<EntityName> unknown;
};

/// Either an ordered, deduplicated, existence-checked furniture list, or
/// not_found when the pipeline ends empty-handed.
struct VerificationOutcome {
    bool found = false;
    std::vector<EntityName> locations; // non-empty iff found

    static VerificationOutcome Found(std::vector<EntityName> list) {
        return {true, std::move(list)};
    }
    static VerificationOutcome NotFound() { return {}; }
};

namespace detail {

/// Pull the schema's list field out of `raw`. Accepts a bare JSON document
/// or one embedded in surrounding prose; nullopt when nothing parses.
inline std::optional<std::vector<EntityName>> extract_schema_list(
    const std::string& raw, const prompts::LocationOutputSchema& schema) {
    auto take = [&](const nlohmann::json& doc) -> std::optional<std::vector<EntityName>> {
        if (!doc.is_object() || !doc.contains(schema.field_name)) return std::nullopt;
        const auto& list = doc.at(schema.field_name);
        if (!list.is_array()) return std::nullopt;
        std::vector<EntityName> names;
        for (const auto& item : list)
            if (item.is_string()) {
                EntityName name = normalize_name(item.get<std::string>());
                if (!name.empty()) names.push_back(std::move(name));
            }
        return names;
    };

    nlohmann::json doc = nlohmann::json::parse(raw, nullptr, false);
    if (!doc.is_discarded())
        if (auto names = take(doc)) return names;

    // models sometimes wrap the document in prose; scan balanced {...} spans
    for (std::size_t open = raw.find('{'); open != std::string::npos;
         open = raw.find('{', open + 1)) {
        int depth = 0;
        for (std::size_t i = open; i < raw.size(); ++i) {
            if (raw[i] == '{') ++depth;
            if (raw[i] == '}') --depth;
            if (depth == 0) {
                nlohmann::json inner = nlohmann::json::parse(raw.substr(open, i - open + 1), nullptr, false);
                if (!inner.is_discarded())
                    if (auto names = take(inner)) return names;
                break;
            }
        }
    }
    return std::nullopt;
}

} // namespace detail

/// Extract the location names from a backend response. When the response
/// does not follow the output schema, the summarize inquiry is issued up to
/// max_summarize_retries times; exhaustion raises UnparseableOutputError.
inline std::vector<EntityName> preprocess(const std::string& raw, llm::BackendSession& session,
                                          const EntityName& object,
                                          const VerificationConfig& config) {
    if (auto names = detail::extract_schema_list(raw, config.schema)) return *names;

    for (int attempt = 0; attempt < config.max_summarize_retries; ++attempt) {
        prompts::Bindings bindings;
        bindings.object_name = object;
        bindings.situation = "locations";
        std::string inquiry =
            prompts::render_inquiry(config.templates, prompts::InquiryLabel::summarize, bindings);
        try {
            llm::BackendResponse reply = session.ask(inquiry);
            if (auto names = detail::extract_schema_list(reply.text, config.schema)) return *names;
        } catch (const llm::BackendError&) {
            // a failed retry is an unparseable attempt
        }
    }
    throw UnparseableOutputError("no schema-conformant output for '" + object + "' after " +
                                 std::to_string(config.max_summarize_retries) + " summarize retries");
}

/// Route each name to rooms, furniture, or unknown by exact lookup,
/// preserving input order and dropping duplicates (first occurrence wins).
inline NamePartition classify_names(const kb::OntologyStore& store,
                                    const std::vector<EntityName>& names) {
    NamePartition partition;
    std::vector<EntityName> seen;
    for (const auto& name : names) {
        if (contains(seen, name)) continue;
        seen.push_back(name);
        if (store.has_furniture(name))
            partition.furniture.push_back(name);
        else if (store.has_room(name))
            partition.rooms.push_back(name);
        else
            partition.unknown.push_back(name);
    }
    return partition;
}

/// Ask the backend which furniture in `room` likely holds `object`, keeping
/// only names that exist and are actually located in that room, at most
/// top_k_furniture of them, in reply order. An empty room costs no backend
/// call; an unparseable reply yields an empty expansion.
inline std::vector<EntityName> expand_room(const kb::OntologyStore& store,
                                           llm::BackendSession& session, const EntityName& object,
                                           const EntityName& room,
                                           const VerificationConfig& config) {
    std::vector<EntityName> room_furniture = kb::furniture_in_room(store, room);
    if (room_furniture.empty()) return {};

    prompts::Bindings bindings;
    bindings.object_name = object;
    bindings.room_name = room;
    bindings.furniture_list = room_furniture;
    std::string inquiry =
        prompts::render_inquiry(config.templates, prompts::InquiryLabel::furniture, bindings);

    std::vector<EntityName> reply_names;
    try {
        llm::BackendResponse reply = session.ask(inquiry);
        reply_names = preprocess(reply.text, session, object, config);
    } catch (const llm::BackendError&) {
        return {};
    } catch (const UnparseableOutputError&) {
        return {};
    }

    std::vector<EntityName> expansion;
    for (const auto& name : reply_names) {
        if (static_cast<int>(expansion.size()) >= config.top_k_furniture) break;
        const kb::Furniture* item = store.find_furniture(name);
        if (item && item->room == room && !contains(expansion, name))
            expansion.push_back(name);
    }
    return expansion;
}

/// Full consistency verification of one location response: parse, partition
/// against the ontology, expand named rooms into their furniture, drop
/// hallucinated names, optionally intersect with the default-location list,
/// and retry with the `again` inquiry while the result is empty. Every name
/// in a Found outcome exists in the ontology's furniture set.
inline VerificationOutcome verify_locations(const kb::OntologyStore& store,
                                            llm::BackendSession& session, const EntityName& object,
                                            const std::string& raw,
                                            const std::optional<std::vector<EntityName>>& defaults,
                                            const VerificationConfig& config) {
    nlohmann::json trace_attempts = nlohmann::json::array();

    auto run_pipeline = [&](const std::string& text) -> std::vector<EntityName> {
        nlohmann::json attempt;
        attempt["raw"] = text;

        std::vector<EntityName> names;
        try {
            names = preprocess(text, session, object, config);
        } catch (const UnparseableOutputError&) {
            attempt["unparseable"] = true;
            trace_attempts.push_back(std::move(attempt));
            return {};
        }
        attempt["names"] = names;

        NamePartition partition = classify_names(store, names);
        attempt["partition"] = {{"rooms", partition.rooms},
                                {"furniture", partition.furniture},
                                {"unknown", partition.unknown}};

        // directly named furniture first, then room expansions
        std::vector<EntityName> candidates = partition.furniture;
        nlohmann::json expansions = nlohmann::json::array();
        for (const auto& room : partition.rooms) {
            std::vector<EntityName> expansion = expand_room(store, session, object, room, config);
            expansions.push_back({{"room", room}, {"furniture", expansion}});
            for (const auto& name : expansion)
                if (!contains(candidates, name)) candidates.push_back(name);
        }
        attempt["expansions"] = std::move(expansions);

        std::vector<EntityName> deduped;
        for (const auto& name : candidates)
            if (!contains(deduped, name)) deduped.push_back(name);
        attempt["candidates"] = deduped;

        if (defaults) {
            std::vector<EntityName> kept;
            for (const auto& name : deduped)
                if (contains(*defaults, name)) kept.push_back(name);
            deduped = std::move(kept);
            attempt["after_defaults"] = deduped;
        }
        trace_attempts.push_back(std::move(attempt));
        return deduped;
    };

    std::vector<EntityName> result = run_pipeline(raw);
    for (int round = 0; result.empty() && round < config.max_again_retries; ++round) {
        std::string inquiry =
            prompts::render_inquiry(config.templates, prompts::InquiryLabel::again, {});
        try {
            llm::BackendResponse reply = session.ask(inquiry);
            result = run_pipeline(reply.text);
        } catch (const llm::BackendError&) {
            break;
        }
    }

    VerificationOutcome outcome =
        result.empty() ? VerificationOutcome::NotFound() : VerificationOutcome::Found(result);
    if (session.log())
        session.log()->event("verification", {{"object", object},
                                              {"raw", raw},
                                              {"defaults", defaults ? nlohmann::json(*defaults)
                                                                    : nlohmann::json(nullptr)},
                                              {"attempts", trace_attempts},
                                              {"found", outcome.found},
                                              {"locations", outcome.locations}});
    return outcome;
}

} // namespace fetchplan::verify
