#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <variant>
#include <vector>

#include "json.hpp"

#include "fetchplan/names.hpp"

namespace fetchplan::kb {

/// Error raised while loading or querying the ontology. `name` carries the
/// offending entity where applicable.
class OntologyError : public std::runtime_error {
public:
    enum class Kind {
        schema,
        dangling_reference,
        duplicate_entity,
        duplicate_membership,
        unknown_entity,
    };

    OntologyError(Kind kind, std::string name, const std::string& message)
        : std::runtime_error(message), kind_(kind), name_(std::move(name)) {}

    Kind kind() const { return kind_; }
    const std::string& name() const { return name_; }

private:
    Kind kind_;
    std::string name_;
};

/// A piece of furniture and the room it stands in.
struct Furniture {
    EntityName name;
    EntityName room;

    bool operator==(const Furniture&) const = default;
};

/// An object class: its member objects and, when surveyed, an ordered list
/// of default furniture locations (most likely first). A class with a single
/// member represents an ordinary object.
struct ObjectClass {
    EntityName name;
    std::vector<EntityName> members;
    std::optional<std::vector<EntityName>> default_locations;

    bool operator==(const ObjectClass&) const = default;
};

/// Immutable store of environment facts: rooms, furniture with containment,
/// and object classes. All lists keep declaration order, which is the
/// canonical order for every query result.
struct OntologyStore {
    std::vector<EntityName> rooms;
    std::vector<Furniture> furniture;
    std::vector<ObjectClass> classes;

    // derived lookup tables, built at load
    std::unordered_map<EntityName, std::size_t> furniture_index;
    std::unordered_map<EntityName, std::size_t> class_index;
    std::unordered_map<EntityName, EntityName> object_index; // object -> class name

    bool has_room(const EntityName& name) const { return contains(rooms, name); }
    bool has_furniture(const EntityName& name) const { return furniture_index.count(name) > 0; }
    bool has_object(const EntityName& name) const { return object_index.count(name) > 0; }

    const Furniture* find_furniture(const EntityName& name) const {
        auto it = furniture_index.find(name);
        return it == furniture_index.end() ? nullptr : &furniture[it->second];
    }

    const ObjectClass* find_class(const EntityName& name) const {
        auto it = class_index.find(name);
        return it == class_index.end() ? nullptr : &classes[it->second];
    }

    /// The class an object belongs to, or nullptr for unknown objects.
    const ObjectClass* class_of_object(const EntityName& object) const {
        auto it = object_index.find(object);
        return it == object_index.end() ? nullptr : find_class(it->second);
    }

    bool operator==(const OntologyStore& other) const {
        return rooms == other.rooms && furniture == other.furniture && classes == other.classes;
    }
};

namespace detail {

inline const nlohmann::json& require(const nlohmann::json& doc, const char* key) {
    if (!doc.is_object() || !doc.contains(key))
        throw OntologyError(OntologyError::Kind::schema, key,
                            std::string("ontology document missing required key '") + key + "'");
    return doc.at(key);
}

inline std::string require_string(const nlohmann::json& value, const char* what) {
    if (!value.is_string())
        throw OntologyError(OntologyError::Kind::schema, what,
                            std::string("expected a string for ") + what);
    EntityName name = normalize_name(value.get<std::string>());
    if (name.empty())
        throw OntologyError(OntologyError::Kind::schema, what,
                            std::string("empty name for ") + what);
    return name;
}

} // namespace detail

/// Build an OntologyStore from its JSON document form. Validates every
/// store invariant and reports the offending entity name on failure.
inline OntologyStore load_ontology(const nlohmann::json& doc) {
    OntologyStore store;
    std::unordered_set<EntityName> taken; // rooms + furniture share one namespace

    for (const auto& r : detail::require(doc, "rooms")) {
        EntityName name = detail::require_string(r, "room name");
        if (!taken.insert(name).second)
            throw OntologyError(OntologyError::Kind::duplicate_entity, name,
                                "duplicate room '" + name + "'");
        store.rooms.push_back(name);
    }

    for (const auto& f : detail::require(doc, "furniture")) {
        Furniture item;
        item.name = detail::require_string(detail::require(f, "name"), "furniture name");
        item.room = detail::require_string(detail::require(f, "room"), "furniture room");
        if (!taken.insert(item.name).second)
            throw OntologyError(OntologyError::Kind::duplicate_entity, item.name,
                                "duplicate entity '" + item.name + "'");
        if (!store.has_room(item.room))
            throw OntologyError(OntologyError::Kind::dangling_reference, item.room,
                                "furniture '" + item.name + "' references undeclared room '" +
                                    item.room + "'");
        store.furniture_index[item.name] = store.furniture.size();
        store.furniture.push_back(std::move(item));
    }

    for (const auto& c : detail::require(doc, "classes")) {
        ObjectClass cls;
        cls.name = detail::require_string(detail::require(c, "name"), "class name");
        if (store.class_index.count(cls.name))
            throw OntologyError(OntologyError::Kind::duplicate_entity, cls.name,
                                "duplicate class '" + cls.name + "'");

        const auto& members = detail::require(c, "members");
        if (!members.is_array() || members.empty())
            throw OntologyError(OntologyError::Kind::schema, cls.name,
                                "class '" + cls.name + "' must list at least one member");
        for (const auto& m : members) {
            EntityName object = detail::require_string(m, "class member");
            if (store.object_index.count(object))
                throw OntologyError(OntologyError::Kind::duplicate_membership, object,
                                    "object '" + object + "' belongs to both '" +
                                        store.object_index.at(object) + "' and '" + cls.name + "'");
            if (contains(cls.members, object))
                throw OntologyError(OntologyError::Kind::duplicate_membership, object,
                                    "object '" + object + "' listed twice in class '" + cls.name + "'");
            store.object_index[object] = cls.name;
            cls.members.push_back(object);
        }

        if (c.contains("default_locations")) {
            const auto& defaults = c.at("default_locations");
            if (!defaults.is_array() || defaults.empty())
                throw OntologyError(OntologyError::Kind::schema, cls.name,
                                    "default_locations for class '" + cls.name +
                                        "' must be a non-empty list when present");
            std::vector<EntityName> list;
            for (const auto& d : defaults) {
                EntityName loc = detail::require_string(d, "default location");
                if (!store.has_furniture(loc))
                    throw OntologyError(OntologyError::Kind::dangling_reference, loc,
                                        "default location '" + loc + "' of class '" + cls.name +
                                            "' is not a known furniture item");
                if (contains(list, loc))
                    throw OntologyError(OntologyError::Kind::duplicate_entity, loc,
                                        "default location '" + loc + "' repeated in class '" +
                                            cls.name + "'");
                list.push_back(loc);
            }
            cls.default_locations = std::move(list);
        }

        store.class_index[cls.name] = store.classes.size();
        store.classes.push_back(std::move(cls));
    }

    return store;
}

inline OntologyStore load_ontology_text(const std::string& text) {
    nlohmann::json doc = nlohmann::json::parse(text, nullptr, false);
    if (doc.is_discarded())
        throw OntologyError(OntologyError::Kind::schema, "",
                            "ontology document is not valid JSON");
    return load_ontology(doc);
}

inline OntologyStore load_ontology_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw OntologyError(OntologyError::Kind::schema, path.string(),
                            "cannot open ontology file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return load_ontology_text(text);
}

/// Inverse of load_ontology: the returned document parses back to an
/// equal store.
inline nlohmann::json serialize(const OntologyStore& store) {
    nlohmann::json doc;
    doc["rooms"] = store.rooms;
    doc["furniture"] = nlohmann::json::array();
    for (const auto& f : store.furniture)
        doc["furniture"].push_back({{"name", f.name}, {"room", f.room}});
    doc["classes"] = nlohmann::json::array();
    for (const auto& c : store.classes) {
        nlohmann::json entry = {{"name", c.name}, {"members", c.members}};
        if (c.default_locations) entry["default_locations"] = *c.default_locations;
        doc["classes"].push_back(std::move(entry));
    }
    return doc;
}

/// Furniture located in `room`, in declaration order.
inline std::vector<EntityName> furniture_in_room(const OntologyStore& store, const EntityName& room) {
    if (!store.has_room(room))
        throw OntologyError(OntologyError::Kind::unknown_entity, room,
                            "unknown room '" + room + "'");
    std::vector<EntityName> out;
    for (const auto& f : store.furniture)
        if (f.room == room) out.push_back(f.name);
    return out;
}

/// Default locations for `object`, resolved through its class. Absent when
/// the class records none; that is distinct from the object being unknown.
inline std::optional<std::vector<EntityName>> default_locations(const OntologyStore& store,
                                                                const EntityName& object) {
    const ObjectClass* cls = store.class_of_object(object);
    if (!cls)
        throw OntologyError(OntologyError::Kind::unknown_entity, object,
                            "unknown object '" + object + "'");
    return cls->default_locations;
}

struct ConcreteObject {
    EntityName name;
};
struct AmbiguousClass {
    EntityName name;
    std::vector<EntityName> members;
};
struct UnknownTerm {};

using TermResolution = std::variant<ConcreteObject, AmbiguousClass, UnknownTerm>;

/// Resolve what a command term denotes: a concrete object, a class with
/// several members (ambiguous), or nothing known.
inline TermResolution classify_term(const OntologyStore& store, const EntityName& term) {
    if (store.has_object(term)) return ConcreteObject{term};
    if (const ObjectClass* cls = store.find_class(term); cls && cls->members.size() >= 2)
        return AmbiguousClass{cls->name, cls->members};
    return UnknownTerm{};
}

} // namespace fetchplan::kb
