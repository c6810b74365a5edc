#pragma once

#include <string>
#include <vector>

#include "fetchplan/names.hpp"

namespace fetchplan::dialog {

enum class InquiryKind { object_preference, location };

inline const char* to_string(InquiryKind kind) {
    return kind == InquiryKind::object_preference ? "object_preference" : "location";
}

/// One question the system puts to the user. `subject` names the object or
/// class the question is about; `options` lists choices when there are any.
struct Inquiry {
    InquiryKind kind;
    EntityName subject;
    std::string question;
    std::vector<EntityName> options;
};

/// Source of user answers: the simulated user in batch runs, a person at
/// the terminal in the REPL.
class UserAgent {
public:
    virtual ~UserAgent() = default;
    virtual std::string answer(const Inquiry& inquiry) = 0;
};

} // namespace fetchplan::dialog
