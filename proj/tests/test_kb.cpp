#include <catch2/catch_amalgamated.hpp>

#include "fetchplan/kb.hpp"

#include "test_util.hpp"

using namespace fetchplan;

namespace {

const kb::OntologyStore& fixture_store() {
    static const kb::OntologyStore store = kb::load_ontology_file(data_path("ontology.json"));
    return store;
}

} // namespace

TEST_CASE("ontology fixture loads with the expected shape", "[kb]") {
    const auto& store = fixture_store();
    REQUIRE(store.rooms.size() == 4);
    REQUIRE(store.furniture.size() == 10);
    CHECK(store.has_room("kitchen"));
    CHECK(store.has_room("lobby"));
    CHECK(store.has_furniture("dining_table"));
    CHECK(store.has_furniture("shelf_lobby"));
    CHECK(store.has_object("apple"));
    CHECK(store.has_object("power_drill"));
    for (const auto& f : store.furniture) CHECK(store.has_room(f.room));
}

TEST_CASE("furniture_in_room returns declaration order", "[kb]") {
    const auto& store = fixture_store();
    auto kitchen = kb::furniture_in_room(store, "kitchen");
    REQUIRE(kitchen ==
            std::vector<EntityName>{"cabinet_kitchen", "counter_wagon", "high_table"});

    auto living = kb::furniture_in_room(store, "living_room");
    REQUIRE(living == std::vector<EntityName>{"dining_table", "coffee_table", "sofa"});

    CHECK_THROWS_AS(kb::furniture_in_room(store, "spaceship"), kb::OntologyError);
}

TEST_CASE("room with no furniture yields an empty list", "[kb]") {
    auto store = kb::load_ontology_text(R"({
        "rooms": ["attic"],
        "furniture": [],
        "classes": []
    })");
    CHECK(kb::furniture_in_room(store, "attic").empty());
}

TEST_CASE("default_locations resolves through the object's class", "[kb]") {
    const auto& store = fixture_store();

    auto mug = kb::default_locations(store, "mug");
    REQUIRE(mug.has_value());
    CHECK(*mug == std::vector<EntityName>{"dining_table", "coffee_table", "counter_wagon"});

    auto apple = kb::default_locations(store, "apple");
    REQUIRE(apple.has_value());
    CHECK(*apple == std::vector<EntityName>{"dining_table", "counter_wagon", "high_table"});

    auto drill = kb::default_locations(store, "power_drill");
    REQUIRE(drill.has_value());
    CHECK(*drill == std::vector<EntityName>{"shelf_lobby"});
}

TEST_CASE("absent defaults are distinct from unknown objects", "[kb]") {
    const auto& store = fixture_store();
    CHECK_FALSE(kb::default_locations(store, "colored_wood_blocks").has_value());

    try {
        kb::default_locations(store, "unicorn");
        FAIL("expected unknown-entity error");
    } catch (const kb::OntologyError& e) {
        CHECK(e.kind() == kb::OntologyError::Kind::unknown_entity);
        CHECK(e.name() == "unicorn");
    }
}

TEST_CASE("classify_term distinguishes objects, classes, and unknowns", "[kb]") {
    const auto& store = fixture_store();

    auto apple = kb::classify_term(store, "apple");
    REQUIRE(std::holds_alternative<kb::ConcreteObject>(apple));
    CHECK(std::get<kb::ConcreteObject>(apple).name == "apple");

    auto fruit = kb::classify_term(store, "fruit");
    REQUIRE(std::holds_alternative<kb::AmbiguousClass>(fruit));
    const auto& cls = std::get<kb::AmbiguousClass>(fruit);
    CHECK(cls.name == "fruit");
    CHECK(cls.members == std::vector<EntityName>{"apple", "banana", "orange", "peach", "pear",
                                                 "strawberry"});

    CHECK(std::holds_alternative<kb::UnknownTerm>(kb::classify_term(store, "unicorn")));
}

TEST_CASE("single-member class names resolve to the object first", "[kb]") {
    const auto& store = fixture_store();
    // "mug" names both the class and its only member; the object wins
    auto res = kb::classify_term(store, "mug");
    REQUIRE(std::holds_alternative<kb::ConcreteObject>(res));
}

TEST_CASE("loader reports dangling and duplicate references by name", "[kb]") {
    try {
        kb::load_ontology_text(R"({
            "rooms": ["bedroom"],
            "furniture": [{"name": "desk", "room": "garage"}],
            "classes": []
        })");
        FAIL("expected dangling-reference error");
    } catch (const kb::OntologyError& e) {
        CHECK(e.kind() == kb::OntologyError::Kind::dangling_reference);
        CHECK(e.name() == "garage");
    }

    try {
        kb::load_ontology_text(R"({
            "rooms": ["kitchen"],
            "furniture": [{"name": "table", "room": "kitchen"}],
            "classes": [
                {"name": "fruits", "members": ["apple"]},
                {"name": "snacks", "members": ["apple"]}
            ]
        })");
        FAIL("expected duplicate-membership error");
    } catch (const kb::OntologyError& e) {
        CHECK(e.kind() == kb::OntologyError::Kind::duplicate_membership);
        CHECK(e.name() == "apple");
    }

    // rooms and furniture share a namespace
    CHECK_THROWS_AS(kb::load_ontology_text(R"({
        "rooms": ["kitchen"],
        "furniture": [{"name": "kitchen", "room": "kitchen"}],
        "classes": []
    })"),
                    kb::OntologyError);
}

TEST_CASE("defaults must name known furniture", "[kb]") {
    try {
        kb::load_ontology_text(R"({
            "rooms": ["kitchen"],
            "furniture": [{"name": "table", "room": "kitchen"}],
            "classes": [{"name": "mug", "members": ["mug"],
                         "default_locations": ["cloud"]}]
        })");
        FAIL("expected dangling-reference error");
    } catch (const kb::OntologyError& e) {
        CHECK(e.kind() == kb::OntologyError::Kind::dangling_reference);
        CHECK(e.name() == "cloud");
    }
}

TEST_CASE("serialize round-trips to an equal store", "[kb]") {
    const auto& store = fixture_store();
    auto doc = kb::serialize(store);
    auto again = kb::load_ontology(doc);
    CHECK(again == store);
}

TEST_CASE("names are normalized to snake_case at load", "[kb]") {
    auto store = kb::load_ontology_text(R"({
        "rooms": ["Living Room"],
        "furniture": [{"name": "Coffee-Table", "room": "living room"}],
        "classes": [{"name": "Mug", "members": ["MUG"]}]
    })");
    CHECK(store.has_room("living_room"));
    CHECK(store.has_furniture("coffee_table"));
    CHECK(store.has_object("mug"));
}
