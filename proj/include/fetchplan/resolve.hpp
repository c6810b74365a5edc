#pragma once

#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "fetchplan/dialog.hpp"
#include "fetchplan/episode_log.hpp"
#include "fetchplan/kb.hpp"
#include "fetchplan/llm.hpp"
#include "fetchplan/names.hpp"
#include "fetchplan/prompts.hpp"
#include "fetchplan/simworld.hpp"
#include "fetchplan/verify.hpp"

namespace fetchplan::resolve {

class ParseError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnresolvableObjectError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class UnresolvableLocationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Verb { find, take, bring };

inline const char* to_string(Verb verb) {
    switch (verb) {
        case Verb::find: return "find";
        case Verb::take: return "take";
        case Verb::bring: return "bring";
    }
    return "?";
}

struct Command {
    Verb verb;
    EntityName object_term;
};

/// Knowledge strategy for one episode: whether the model is consulted,
/// whether it sees the dialog history, and whether default locations are
/// available.
struct ApproachConfig {
    bool use_llm = false;
    bool use_memory = false;
    bool use_defaults = false;

    static ApproachConfig okb(bool defaults) { return {false, false, defaults}; }
    static ApproachConfig okb_llm(bool defaults) { return {true, false, defaults}; }
    static ApproachConfig okb_llm_mem(bool defaults) { return {true, true, defaults}; }

    std::string approach_name() const {
        if (!use_llm) return "okb";
        return use_memory ? "okb_llm_mem" : "okb_llm";
    }
    std::string situation_name() const { return use_defaults ? "with_defaults" : "without_defaults"; }
};

/// The robot plan: furniture to visit in likelihood order, plus what to do
/// on detection.
struct ResolutionPlan {
    EntityName object;
    std::vector<EntityName> visit_list;
    bool grasp = false;
    std::optional<EntityName> deliver_to;
};

struct InquiryEvent {
    dialog::InquiryKind kind;
    EntityName subject;
    std::string question;
    std::string answer;
};

/// Parse a "find/take/bring <object>" sentence. Articles are stripped and
/// the noun phrase is normalized to an entity name.
inline Command parse_command(const std::string& text) {
    std::istringstream in(text);
    std::string word;
    if (!(in >> word)) throw ParseError("empty command");

    EntityName verb_word = normalize_name(word);
    Verb verb;
    if (verb_word == "find")
        verb = Verb::find;
    else if (verb_word == "take")
        verb = Verb::take;
    else if (verb_word == "bring")
        verb = Verb::bring;
    else
        throw ParseError("unrecognized verb '" + word + "'");

    std::vector<std::string> rest;
    while (in >> word) {
        EntityName token = normalize_name(word);
        if (token.empty()) continue;
        if (rest.empty() && (token == "a" || token == "an" || token == "the")) continue;
        rest.push_back(token);
    }
    if (rest.empty()) throw ParseError("command names no object: '" + text + "'");

    std::string object;
    for (std::size_t i = 0; i < rest.size(); ++i) {
        if (i > 0) object += "_";
        object += rest[i];
    }
    return Command{verb, object};
}

namespace detail {

inline std::string ask_user(dialog::UserAgent& user, dialog::Inquiry inquiry,
                            std::vector<InquiryEvent>& events, EpisodeLog* log) {
    std::string answer = user.answer(inquiry);
    events.push_back({inquiry.kind, inquiry.subject, inquiry.question, answer});
    if (log)
        log->event("user_inquiry", {{"kind", dialog::to_string(inquiry.kind)},
                                    {"subject", inquiry.subject},
                                    {"question", inquiry.question},
                                    {"answer", answer}});
    return normalize_name(answer);
}

} // namespace detail

/// Resolve what object a command term denotes, by ontology lookup or one
/// round of user dialog. Object preference is personal, so the model is
/// never consulted here.
inline EntityName resolve_object(const kb::OntologyStore& store, dialog::UserAgent& user,
                                 const EntityName& term, std::vector<InquiryEvent>& events,
                                 EpisodeLog* log = nullptr) {
    kb::TermResolution resolution = kb::classify_term(store, term);
    if (auto* concrete = std::get_if<kb::ConcreteObject>(&resolution)) return concrete->name;

    dialog::Inquiry inquiry;
    if (auto* ambiguous = std::get_if<kb::AmbiguousClass>(&resolution)) {
        inquiry.kind = dialog::InquiryKind::object_preference;
        inquiry.subject = ambiguous->name;
        inquiry.options = ambiguous->members;
        inquiry.question =
            "Which " + ambiguous->name + " do you prefer: " + join(ambiguous->members) + "?";
    } else {
        inquiry.kind = dialog::InquiryKind::object_preference;
        inquiry.subject = term;
        inquiry.question = "I do not know '" + term + "'. Which object should I search for?";
    }

    EntityName answer = detail::ask_user(user, inquiry, events, log);
    if (std::holds_alternative<kb::ConcreteObject>(kb::classify_term(store, answer))) return answer;
    throw UnresolvableObjectError("cannot resolve object '" + term + "': user answered '" + answer +
                                  "'");
}

struct LocationResolution {
    ResolutionPlan plan;
    std::vector<InquiryEvent> inquiries;
};

namespace detail {

inline EntityName ask_user_for_location(const kb::OntologyStore& store, dialog::UserAgent& user,
                                        const EntityName& object,
                                        std::vector<InquiryEvent>& events, EpisodeLog* log) {
    dialog::Inquiry inquiry;
    inquiry.kind = dialog::InquiryKind::location;
    inquiry.subject = object;
    inquiry.question = "Where should I search for " + object + "?";
    EntityName answer = ask_user(user, inquiry, events, log);
    if (!store.has_furniture(answer))
        throw UnresolvableLocationError("user answered '" + answer +
                                        "', which is not a known furniture item");
    return answer;
}

} // namespace detail

/// Resolve where to search for `object`. The ontology is consulted first: a
/// single default location goes straight to the robot. Otherwise the model
/// is asked (when the approach uses one) and its answer is verified against
/// the ontology; the user is the last resort.
inline LocationResolution resolve_location(const kb::OntologyStore& store,
                                           llm::BackendSession& session, dialog::UserAgent& user,
                                           const EntityName& object, const ApproachConfig& approach,
                                           const verify::VerificationConfig& config = {}) {
    LocationResolution out;
    out.plan.object = object;

    std::optional<std::vector<EntityName>> defaults;
    if (approach.use_defaults) defaults = kb::default_locations(store, object);

    if (defaults && defaults->size() == 1) {
        out.plan.visit_list = *defaults;
        if (session.log())
            session.log()->event("plan", {{"object", object},
                                          {"source", "ontology"},
                                          {"visit_list", out.plan.visit_list}});
        return out;
    }

    if (approach.use_llm) {
        try {
            prompts::Bindings bindings;
            bindings.object_name = object;
            std::string inquiry;
            if (defaults) {
                bindings.position_list = *defaults;
                inquiry = prompts::render_inquiry(config.templates,
                                                  prompts::InquiryLabel::multiple_pos, bindings);
            } else {
                inquiry = prompts::render_inquiry(config.templates,
                                                  prompts::InquiryLabel::general_pos, bindings);
            }
            llm::BackendResponse response = session.ask(inquiry);
            verify::VerificationOutcome outcome =
                verify::verify_locations(store, session, object, response.text, defaults, config);
            if (outcome.found) {
                out.plan.visit_list = outcome.locations;
                if (session.log())
                    session.log()->event("plan", {{"object", object},
                                                  {"source", "llm"},
                                                  {"visit_list", out.plan.visit_list}});
                return out;
            }
        } catch (const llm::BackendError&) {
            // fall through to user dialog
        }
    }

    EntityName answer = detail::ask_user_for_location(store, user, object, out.inquiries,
                                                      session.log());
    out.plan.visit_list = {answer};
    if (session.log())
        session.log()->event("plan", {{"object", object},
                                      {"source", "user"},
                                      {"visit_list", out.plan.visit_list}});
    return out;
}

/// After a plan was exhausted without a detection, ask the user where to
/// search and return a single-visit plan there.
inline ResolutionPlan handle_search_failure(const kb::OntologyStore& store,
                                            dialog::UserAgent& user, const EntityName& object,
                                            const ResolutionPlan& exhausted_plan,
                                            std::vector<InquiryEvent>& events,
                                            EpisodeLog* log = nullptr) {
    if (exhausted_plan.visit_list.empty())
        throw std::invalid_argument("handle_search_failure requires an exhausted non-empty plan");

    ResolutionPlan plan = exhausted_plan;
    plan.visit_list = {detail::ask_user_for_location(store, user, object, events, log)};
    return plan;
}

/// Outcome of one command executed end to end.
struct EpisodeResult {
    bool success = false;
    double completion_time_s = 0.0;
    int inquiries = 0;
    int visits = 0;
    int llm_calls = 0;
    double llm_time_s = 0.0;
    long long generated_tokens = 0;
    EntityName object;
    std::optional<EntityName> found_at;
    std::string failure_reason; // empty on success
};

/// How many user-fallback rounds an episode may use after its initial plan.
inline constexpr int kMaxFallbackRounds = 2;

/// Execute one command end to end: parse, resolve the object, resolve the
/// locations, drive the robot, and fall back to the user when the search
/// comes up empty. Failures are recorded in the result, never thrown.
inline EpisodeResult run_episode(const simworld::WorldState& world, const kb::OntologyStore& store,
                                 llm::BackendSession& session, dialog::UserAgent& user,
                                 const ApproachConfig& approach, const std::string& command_text,
                                 simworld::PerceptionModel& perception, EpisodeLog& log,
                                 const verify::VerificationConfig& config = {}) {
    EpisodeResult result;
    session.attach_log(&log);
    log.event("command", {{"text", command_text},
                          {"approach", approach.approach_name()},
                          {"situation", approach.situation_name()}});

    auto finish = [&](bool success, const std::string& reason) {
        result.success = success;
        result.failure_reason = reason;
        result.llm_calls = session.stats().calls;
        result.llm_time_s = session.stats().total_latency_s;
        result.generated_tokens = session.stats().generated_tokens;
        result.completion_time_s += result.llm_time_s;
        log.event("result", {{"success", result.success},
                             {"failure_reason", result.failure_reason},
                             {"completion_time_s", result.completion_time_s},
                             {"inquiries", result.inquiries},
                             {"visits", result.visits},
                             {"llm_calls", result.llm_calls},
                             {"generated_tokens", result.generated_tokens}});
        return result;
    };

    std::vector<InquiryEvent> events;
    Command command;
    try {
        command = parse_command(command_text);
        result.object = resolve_object(store, user, command.object_term, events, &log);
        log.event("object_resolved", {{"term", command.object_term}, {"object", result.object}});
    } catch (const std::exception& e) {
        result.inquiries = static_cast<int>(events.size());
        return finish(false, e.what());
    }

    ResolutionPlan plan;
    try {
        LocationResolution resolution =
            resolve_location(store, session, user, result.object, approach, config);
        plan = resolution.plan;
        events.insert(events.end(), resolution.inquiries.begin(), resolution.inquiries.end());
    } catch (const std::exception& e) {
        result.inquiries = static_cast<int>(events.size());
        return finish(false, e.what());
    }
    plan.grasp = command.verb != Verb::find;
    plan.deliver_to =
        command.verb == Verb::bring ? std::optional<EntityName>(world.delivery_point) : std::nullopt;

    simworld::RobotState robot{world.initial_position, std::nullopt, 0.0};
    simworld::ExecutionResult exec = simworld::execute_plan(
        world, robot, plan.visit_list, result.object, plan.grasp, plan.deliver_to, perception, &log);
    result.visits = static_cast<int>(exec.visits.size());

    for (int round = 0; !exec.found_at && round < kMaxFallbackRounds; ++round) {
        try {
            plan = handle_search_failure(store, user, result.object, plan, events, &log);
        } catch (const std::exception& e) {
            result.inquiries = static_cast<int>(events.size());
            result.completion_time_s = robot.odometer_s;
            return finish(false, e.what());
        }
        exec = simworld::execute_plan(world, robot, plan.visit_list, result.object, plan.grasp,
                                      plan.deliver_to, perception, &log);
        result.visits += static_cast<int>(exec.visits.size());
    }

    result.inquiries = static_cast<int>(events.size());
    result.completion_time_s = robot.odometer_s;
    result.found_at = exec.found_at;

    bool success = false;
    switch (command.verb) {
        case Verb::find: success = exec.found_at.has_value(); break;
        case Verb::take: success = exec.grasped; break;
        case Verb::bring: success = exec.delivered; break;
    }
    return finish(success, success ? "" : "object not found");
}

} // namespace fetchplan::resolve
