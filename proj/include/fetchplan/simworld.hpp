#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <random>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "fetchplan/dialog.hpp"
#include "fetchplan/episode_log.hpp"
#include "fetchplan/names.hpp"

namespace fetchplan::simworld {

class WorldError : public std::runtime_error {
public:
    enum class Kind { schema, unknown_entity, unreachable, not_at_location };

    WorldError(Kind kind, const std::string& message) : std::runtime_error(message), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Discrete household world standing in for a full 3D simulation: locations
/// are graph nodes, travel times are edge weights in seconds, and objects
/// sit on furniture. Immutable during an episode.
struct WorldState {
    std::vector<EntityName> rooms;
    std::vector<EntityName> furniture;                     // declaration order
    std::unordered_map<EntityName, EntityName> furniture_room;
    std::vector<EntityName> waypoints;                     // non-furniture nodes
    std::map<EntityName, EntityName> placements;           // object -> furniture
    EntityName delivery_point;
    EntityName initial_position;
    double grasp_seconds = 5.0;
    double release_seconds = 5.0;

    // adjacency: node -> (neighbor, seconds)
    std::unordered_map<EntityName, std::vector<std::pair<EntityName, double>>> edges;

    bool has_node(const EntityName& name) const { return edges.count(name) > 0; }
    bool has_furniture(const EntityName& name) const { return furniture_room.count(name) > 0; }
};

struct RobotState {
    EntityName position;
    std::optional<EntityName> carrying;
    double odometer_s = 0.0; // simulated time spent so far
};

/// Per-observation Bernoulli detection with its own seeded stream, so runs
/// replay exactly. One draw is consumed per perceive call.
struct PerceptionModel {
    double detect_prob = 1.0;
    std::mt19937_64 rng;

    PerceptionModel(double prob, std::uint64_t seed) : detect_prob(prob), rng(seed) {}

    bool draw() {
        // top 53 bits -> uniform double in [0, 1)
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return u < detect_prob;
    }
};

namespace detail {

inline void add_edge(WorldState& world, const EntityName& a, const EntityName& b, double seconds) {
    world.edges[a].push_back({b, seconds});
    world.edges[b].push_back({a, seconds});
}

} // namespace detail

/// Shortest travel time between two locations (Dijkstra over the layout).
inline std::optional<double> shortest_time(const WorldState& world, const EntityName& from,
                                           const EntityName& to) {
    if (!world.has_node(from) || !world.has_node(to)) return std::nullopt;
    if (from == to) return 0.0;
    std::unordered_map<EntityName, double> dist;
    using Item = std::pair<double, EntityName>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    dist[from] = 0.0;
    queue.push({0.0, from});
    while (!queue.empty()) {
        auto [d, node] = queue.top();
        queue.pop();
        if (d > dist.at(node)) continue;
        if (node == to) return d;
        for (const auto& [next, w] : world.edges.at(node)) {
            double nd = d + w;
            auto it = dist.find(next);
            if (it == dist.end() || nd < it->second) {
                dist[next] = nd;
                queue.push({nd, next});
            }
        }
    }
    return std::nullopt;
}

/// Load a world document: rooms, furniture-with-room, extra waypoints, the
/// weighted edge list, object placements, delivery point, initial position.
inline WorldState load_world(const nlohmann::json& doc) {
    WorldState world;
    auto require = [&](const char* key) -> const nlohmann::json& {
        if (!doc.is_object() || !doc.contains(key))
            throw WorldError(WorldError::Kind::schema,
                             std::string("world document missing required key '") + key + "'");
        return doc.at(key);
    };

    for (const auto& r : require("rooms")) world.rooms.push_back(normalize_name(r.get<std::string>()));
    for (const auto& f : require("furniture")) {
        EntityName name = normalize_name(f.at("name").get<std::string>());
        EntityName room = normalize_name(f.at("room").get<std::string>());
        if (!contains(world.rooms, room))
            throw WorldError(WorldError::Kind::schema,
                             "furniture '" + name + "' references undeclared room '" + room + "'");
        if (world.furniture_room.count(name))
            throw WorldError(WorldError::Kind::schema, "duplicate furniture '" + name + "'");
        world.furniture.push_back(name);
        world.furniture_room[name] = room;
        world.edges[name]; // every furniture item is a node
    }
    if (doc.contains("waypoints"))
        for (const auto& w : doc.at("waypoints")) {
            EntityName name = normalize_name(w.get<std::string>());
            world.waypoints.push_back(name);
            world.edges[name];
        }

    for (const auto& e : require("edges")) {
        EntityName a = normalize_name(e.at("a").get<std::string>());
        EntityName b = normalize_name(e.at("b").get<std::string>());
        double seconds = e.at("seconds").get<double>();
        if (!world.has_node(a) || !world.has_node(b))
            throw WorldError(WorldError::Kind::schema,
                             "edge references undeclared location '" + (world.has_node(a) ? b : a) + "'");
        if (seconds < 0)
            throw WorldError(WorldError::Kind::schema, "negative travel time on edge " + a + "--" + b);
        detail::add_edge(world, a, b, seconds);
    }

    for (const auto& [object, furniture] : require("placements").items()) {
        EntityName obj = normalize_name(object);
        EntityName at = normalize_name(furniture.get<std::string>());
        if (!world.has_furniture(at))
            throw WorldError(WorldError::Kind::unknown_entity,
                             "placement of '" + obj + "' on unknown furniture '" + at + "'");
        world.placements[obj] = at;
    }

    world.delivery_point = normalize_name(require("delivery_point").get<std::string>());
    world.initial_position = normalize_name(require("initial_position").get<std::string>());
    if (!world.has_node(world.delivery_point))
        throw WorldError(WorldError::Kind::schema, "delivery point is not a location");
    if (!world.has_node(world.initial_position))
        throw WorldError(WorldError::Kind::schema, "initial position is not a location");
    world.grasp_seconds = doc.value("grasp_seconds", 5.0);
    world.release_seconds = doc.value("release_seconds", 5.0);

    // every furniture item must be reachable from the start
    for (const auto& f : world.furniture)
        if (!shortest_time(world, world.initial_position, f))
            throw WorldError(WorldError::Kind::unreachable,
                             "furniture '" + f + "' is not reachable from the initial position");
    return world;
}

inline WorldState load_world_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw WorldError(WorldError::Kind::schema, "cannot open world file: " + path.string());
    return load_world(nlohmann::json::parse(in));
}

/// Move the robot to `destination`, advancing the odometer by the
/// shortest-path travel time.
inline void travel(const WorldState& world, RobotState& robot, const EntityName& destination) {
    if (!world.has_node(destination))
        throw WorldError(WorldError::Kind::unknown_entity, "unknown location '" + destination + "'");
    std::optional<double> seconds = shortest_time(world, robot.position, destination);
    if (!seconds)
        throw WorldError(WorldError::Kind::unreachable,
                         "no path from '" + robot.position + "' to '" + destination + "'");
    robot.position = destination;
    robot.odometer_s += *seconds;
}

/// Look for `target` on `furniture`. The robot must already be there. When
/// the object is actually present, detection succeeds with probability
/// detect_prob; an absent object is never detected. Consumes exactly one
/// random draw either way.
inline bool perceive(const WorldState& world, const RobotState& robot, const EntityName& furniture,
                     const EntityName& target, PerceptionModel& perception) {
    if (robot.position != furniture)
        throw WorldError(WorldError::Kind::not_at_location,
                         "robot is at '" + robot.position + "', not at '" + furniture + "'");
    bool detected = perception.draw();
    auto it = world.placements.find(target);
    return it != world.placements.end() && it->second == furniture && detected;
}

// ---------------------------------------------------------------------------
// Simulated user
// ---------------------------------------------------------------------------

/// Test double for the person giving commands: always answers consistently
/// with the world's ground truth. Preference questions are answered from a
/// fixed table (falling back to the first option).
class SimulatedUser : public dialog::UserAgent {
public:
    SimulatedUser(const WorldState& world, std::map<EntityName, EntityName> preference_table = {})
        : world_(world), preferences_(std::move(preference_table)) {}

    std::string answer(const dialog::Inquiry& inquiry) override {
        switch (inquiry.kind) {
            case dialog::InquiryKind::location: {
                auto it = world_.placements.find(inquiry.subject);
                return it == world_.placements.end() ? "unknown" : it->second;
            }
            case dialog::InquiryKind::object_preference: {
                auto it = preferences_.find(inquiry.subject);
                if (it != preferences_.end()) return it->second;
                if (!inquiry.options.empty()) return inquiry.options.front();
                return "unknown";
            }
        }
        return "unknown";
    }

private:
    const WorldState& world_;
    std::map<EntityName, EntityName> preferences_;
};

inline std::string answer_inquiry(SimulatedUser& user, const dialog::Inquiry& inquiry) {
    return user.answer(inquiry);
}

// ---------------------------------------------------------------------------
// Plan execution
// ---------------------------------------------------------------------------

struct VisitRecord {
    EntityName furniture;
    double arrival_s = 0.0;
    bool detected = false;
};

struct ExecutionResult {
    std::vector<VisitRecord> visits;
    std::optional<EntityName> found_at;
    bool grasped = false;
    bool delivered = false;
};

/// Visit the planned furniture in order, perceiving at each stop and
/// stopping early on detection. When `grasp` is set the object is picked up
/// on detection; when `deliver_to` is set the robot then carries it there
/// and releases it.
inline ExecutionResult execute_plan(const WorldState& world, RobotState& robot,
                                    const std::vector<EntityName>& visit_list,
                                    const EntityName& target, bool grasp,
                                    const std::optional<EntityName>& deliver_to,
                                    PerceptionModel& perception, EpisodeLog* log = nullptr) {
    ExecutionResult result;
    for (const auto& stop : visit_list) {
        travel(world, robot, stop);
        bool detected = perceive(world, robot, stop, target, perception);
        result.visits.push_back({stop, robot.odometer_s, detected});
        if (log)
            log->event("visit", {{"furniture", stop},
                                 {"arrival_s", robot.odometer_s},
                                 {"detected", detected}});
        if (detected) {
            result.found_at = stop;
            break;
        }
    }

    if (result.found_at && grasp) {
        robot.odometer_s += world.grasp_seconds;
        robot.carrying = target;
        result.grasped = true;
        if (log) log->event("grasp", {{"object", target}, {"at", *result.found_at}});
    }
    if (result.found_at && grasp && deliver_to) {
        travel(world, robot, *deliver_to);
        robot.odometer_s += world.release_seconds;
        robot.carrying.reset();
        result.delivered = true;
        if (log) log->event("deliver", {{"object", target}, {"at", *deliver_to}});
    }
    return result;
}

} // namespace fetchplan::simworld
