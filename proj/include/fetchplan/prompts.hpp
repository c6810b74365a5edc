#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fetchplan/kb.hpp"
#include "fetchplan/names.hpp"

namespace fetchplan::prompts {

/// The five inquiry templates. Closed set; nothing else is renderable.
enum class InquiryLabel { general_pos, multiple_pos, furniture, again, summarize };

inline const char* to_string(InquiryLabel label) {
    switch (label) {
        case InquiryLabel::general_pos: return "general_pos";
        case InquiryLabel::multiple_pos: return "multiple_pos";
        case InquiryLabel::furniture: return "furniture";
        case InquiryLabel::again: return "again";
        case InquiryLabel::summarize: return "summarize";
    }
    return "?";
}

inline std::optional<InquiryLabel> label_from_string(std::string_view s) {
    if (s == "general_pos") return InquiryLabel::general_pos;
    if (s == "multiple_pos") return InquiryLabel::multiple_pos;
    if (s == "furniture") return InquiryLabel::furniture;
    if (s == "again") return InquiryLabel::again;
    if (s == "summarize") return InquiryLabel::summarize;
    return std::nullopt;
}

class BindingError : public std::runtime_error {
public:
    BindingError(std::string field, const std::string& message)
        : std::runtime_error(message), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

/// Placeholder values for one rendered inquiry. Which fields are required
/// depends on the label.
struct Bindings {
    std::string object_name;
    std::optional<std::vector<EntityName>> position_list;
    std::optional<EntityName> room_name;
    std::optional<std::vector<EntityName>> furniture_list;
    std::optional<std::string> situation;
};

/// Shape of the structured model output: a single field holding an ordered
/// list of room-or-furniture names, most likely first.
struct LocationOutputSchema {
    std::string field_name = "position_list";
};

/// Inquiry template set, loadable from a resource file so wording can be
/// experimented with without recompiling. The built-in set is the default.
class InquiryTemplates {
public:
    static InquiryTemplates builtin() {
        InquiryTemplates t;
        t.set(InquiryLabel::general_pos,
              "I am searching for #object name. Which places are most probably where I can find "
              "it? Please tell me the top 5.");
        t.set(InquiryLabel::multiple_pos,
              "I am searching for #object name. Which places are most probably where I can find "
              "it, #position? Please sort them in the order of likelihood.");
        t.set(InquiryLabel::furniture,
              "I am searching for #object name. Which furniture are most probably where I can "
              "find it in #room name? Please tell me the top 3 furniture from furniture list, "
              "#furniture list.");
        t.set(InquiryLabel::again, "You must choose potential places from the list given above.");
        t.set(InquiryLabel::summarize,
              "Please summarize about potential #situation for #object name. You must follow the "
              "given output format above.");
        return t;
    }

    static InquiryTemplates from_json(const nlohmann::json& doc) {
        InquiryTemplates t;
        for (const auto& [key, value] : doc.items()) {
            auto label = label_from_string(key);
            if (!label) throw BindingError(key, "unknown inquiry label '" + key + "'");
            if (!value.is_string()) throw BindingError(key, "template for '" + key + "' must be a string");
            t.set(*label, value.get<std::string>());
        }
        for (auto label : {InquiryLabel::general_pos, InquiryLabel::multiple_pos,
                           InquiryLabel::furniture, InquiryLabel::again, InquiryLabel::summarize}) {
            if (t.text(label).empty())
                throw BindingError(to_string(label),
                                   std::string("template file misses label '") + to_string(label) + "'");
        }
        return t;
    }

    static InquiryTemplates load_file(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw BindingError(path.string(), "cannot open template file: " + path.string());
        nlohmann::json doc = nlohmann::json::parse(in);
        return from_json(doc);
    }

    const std::string& text(InquiryLabel label) const { return texts_[index(label)]; }

    nlohmann::json to_json() const {
        nlohmann::json doc;
        for (auto label : {InquiryLabel::general_pos, InquiryLabel::multiple_pos,
                           InquiryLabel::furniture, InquiryLabel::again, InquiryLabel::summarize})
            doc[to_string(label)] = text(label);
        return doc;
    }

    bool operator==(const InquiryTemplates&) const = default;

private:
    static std::size_t index(InquiryLabel label) { return static_cast<std::size_t>(label); }
    void set(InquiryLabel label, std::string text) { texts_[index(label)] = std::move(text); }

    std::array<std::string, 5> texts_{};
};

namespace detail {

inline void replace_all(std::string& text, std::string_view token, std::string_view value) {
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        text.replace(pos, token.size(), value);
        pos += value.size();
    }
}

inline const std::string& require_field(const std::optional<std::string>& field, const char* name) {
    if (!field) throw BindingError(name, std::string("missing required binding '") + name + "'");
    return *field;
}

inline std::string require_list(const std::optional<std::vector<EntityName>>& field, const char* name) {
    if (!field) throw BindingError(name, std::string("missing required binding '") + name + "'");
    return join(*field);
}

} // namespace detail

/// Substitute placeholders into the template for `label`. List placeholders
/// render comma-separated. A missing required binding raises BindingError
/// naming the field.
inline std::string render_inquiry(const InquiryTemplates& templates, InquiryLabel label,
                                  const Bindings& bindings) {
    std::string text = templates.text(label);

    switch (label) {
        case InquiryLabel::general_pos:
            if (bindings.object_name.empty()) throw BindingError("object_name", "missing required binding 'object_name'");
            break;
        case InquiryLabel::multiple_pos:
            if (bindings.object_name.empty()) throw BindingError("object_name", "missing required binding 'object_name'");
            detail::replace_all(text, "#position", detail::require_list(bindings.position_list, "position_list"));
            break;
        case InquiryLabel::furniture:
            if (bindings.object_name.empty()) throw BindingError("object_name", "missing required binding 'object_name'");
            detail::replace_all(text, "#room name",
                                detail::require_field(bindings.room_name, "room_name"));
            detail::replace_all(text, "#furniture list",
                                detail::require_list(bindings.furniture_list, "furniture_list"));
            break;
        case InquiryLabel::again:
            break;
        case InquiryLabel::summarize:
            if (bindings.object_name.empty()) throw BindingError("object_name", "missing required binding 'object_name'");
            detail::replace_all(text, "#situation",
                                detail::require_field(bindings.situation, "situation"));
            break;
    }
    if (label != InquiryLabel::again)
        detail::replace_all(text, "#object name", bindings.object_name);
    return text;
}

inline std::string render_inquiry(InquiryLabel label, const Bindings& bindings) {
    static const InquiryTemplates defaults = InquiryTemplates::builtin();
    return render_inquiry(defaults, label, bindings);
}

/// The output-format instruction embedded in the system prompt: names the
/// schema's single list field and demands structured output only.
inline std::string schema_instruction(const LocationOutputSchema& schema) {
    std::string out;
    out += "Answer only with a JSON object of the following format: {\"";
    out += schema.field_name;
    out += "\": [\"place1\", \"place2\", ...]}. The field \"";
    out += schema.field_name;
    out += "\" must hold a list of room or furniture names ordered from most to least likely. "
           "Do not write any text outside the JSON object.";
    return out;
}

/// Build the environment-grounded system prompt: role framing, the complete
/// room and furniture lists, one "furniture: room" line per furniture item,
/// and the output-format instruction. Deterministic for a given store.
inline std::string build_system_prompt(const kb::OntologyStore& store,
                                       const LocationOutputSchema& schema = {}) {
    std::string out;
    out += "You are an assistant for a service robot that searches for objects in a home. "
           "When asked where an object may be found, answer with likely places in this home.\n";

    out += "The home has the following rooms: ";
    out += join(store.rooms);
    out += ".\n";

    std::vector<EntityName> furniture_names;
    furniture_names.reserve(store.furniture.size());
    for (const auto& f : store.furniture) furniture_names.push_back(f.name);
    out += "The home has the following furniture: ";
    out += join(furniture_names);
    out += ".\n";

    out += "Each furniture item is located in a room as follows:\n";
    for (const auto& f : store.furniture) {
        out += f.name;
        out += ": ";
        out += f.room;
        out += "\n";
    }

    out += "Only use room and furniture names from the lists above.\n";
    out += schema_instruction(schema);
    return out;
}

} // namespace fetchplan::prompts
