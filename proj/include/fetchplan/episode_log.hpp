#pragma once

#include <chrono>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace fetchplan {

/// Structured event log for one episode. Records are appended in order and
/// can be dumped as newline-delimited JSON for offline inspection.
class EpisodeLog {
public:
    struct Record {
        std::string type;
        double timestamp; // seconds since epoch
        nlohmann::json payload;
    };

    void event(std::string type, nlohmann::json payload = nlohmann::json::object()) {
        records_.push_back({std::move(type), now(), std::move(payload)});
    }

    const std::vector<Record>& records() const { return records_; }

    std::vector<const Record*> of_type(std::string_view type) const {
        std::vector<const Record*> out;
        for (const auto& r : records_)
            if (r.type == type) out.push_back(&r);
        return out;
    }

    std::size_t count(std::string_view type) const { return of_type(type).size(); }

    void write_jsonl(std::ostream& os) const {
        for (const auto& r : records_) {
            nlohmann::json line = {{"event", r.type}, {"t", r.timestamp}, {"payload", r.payload}};
            os << line.dump() << '\n';
        }
    }

private:
    static double now() {
        using namespace std::chrono;
        return duration<double>(system_clock::now().time_since_epoch()).count();
    }

    std::vector<Record> records_;
};

} // namespace fetchplan
