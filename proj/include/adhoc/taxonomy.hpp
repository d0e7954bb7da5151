#pragma once

// Object / receptacle / room taxonomy and the commonsense placement rules
// table. The rules table decides what counts as misplaced; it ships as a
// built-in default and can be overridden from a JSON file (--rules).

#include "adhoc/rng.hpp"

#include <json.hpp>

#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace adhoc::world {

enum class RoomType { kitchen, bedroom, living_room, bathroom, office, hallway };

// Fixed order, also the tie-break order for room-type inference.
inline const std::vector<RoomType>& all_room_types() {
    static const std::vector<RoomType> kAll = {
        RoomType::kitchen,  RoomType::bedroom, RoomType::living_room,
        RoomType::bathroom, RoomType::office,  RoomType::hallway};
    return kAll;
}

inline std::string to_string(RoomType t) {
    switch (t) {
        case RoomType::kitchen: return "kitchen";
        case RoomType::bedroom: return "bedroom";
        case RoomType::living_room: return "living_room";
        case RoomType::bathroom: return "bathroom";
        case RoomType::office: return "office";
        case RoomType::hallway: return "hallway";
    }
    return "?";
}

inline RoomType room_type_from_string(const std::string& s) {
    for (RoomType t : all_room_types())
        if (to_string(t) == s) return t;
    throw std::invalid_argument("unknown room type: " + s);
}

enum class Elevation { floor, low, high };

inline std::string to_string(Elevation e) {
    switch (e) {
        case Elevation::floor: return "floor";
        case Elevation::low: return "low";
        case Elevation::high: return "high";
    }
    return "?";
}

inline Elevation elevation_from_string(const std::string& s) {
    if (s == "floor") return Elevation::floor;
    if (s == "low") return Elevation::low;
    if (s == "high") return Elevation::high;
    throw std::invalid_argument("unknown elevation: " + s);
}

// The always-unreasonable pseudo-receptacle for objects lying on the ground.
inline constexpr const char* kFloorReceptacleType = "Floor";

using PlacementPair = std::pair<std::string, RoomType>; // (receptacle_type, room_type)

struct PlacementRules {
    // object_type -> set of reasonable (receptacle_type, room_type) pairs
    std::map<std::string, std::set<PlacementPair>> table;

    bool has_object_type(const std::string& t) const { return table.count(t) > 0; }
};

inline const std::vector<std::pair<std::string, Elevation>>& receptacle_taxonomy() {
    static const std::vector<std::pair<std::string, Elevation>> kReceptacles = {
        {"CounterTop", Elevation::low}, {"DiningTable", Elevation::low},
        {"Sink", Elevation::low},       {"Fridge", Elevation::high},
        {"Cabinet", Elevation::high},   {"Shelf", Elevation::high},
        {"Bookshelf", Elevation::high}, {"Sofa", Elevation::low},
        {"SideTable", Elevation::low},  {"Desk", Elevation::low},
        {"Bed", Elevation::low},        {"Dresser", Elevation::low},
        {"TrashCan", Elevation::low},   {kFloorReceptacleType, Elevation::floor},
    };
    return kReceptacles;
}

inline bool is_receptacle_type(const std::string& t) {
    for (const auto& [name, elev] : receptacle_taxonomy())
        if (name == t) return true;
    return false;
}

inline Elevation receptacle_elevation(const std::string& receptacle_type) {
    for (const auto& [name, elev] : receptacle_taxonomy())
        if (name == receptacle_type) return elev;
    throw std::invalid_argument("unknown receptacle type: " + receptacle_type);
}

// Receptacle types the house generator may place in a room of a given type.
inline const std::vector<std::string>& room_receptacle_types(RoomType room) {
    static const std::map<RoomType, std::vector<std::string>> kByRoom = {
        {RoomType::kitchen, {"CounterTop", "Cabinet", "Sink", "Fridge", "DiningTable", "TrashCan"}},
        {RoomType::bedroom, {"Bed", "Dresser", "SideTable", "Desk", "Shelf"}},
        {RoomType::living_room, {"Sofa", "SideTable", "Bookshelf", "Shelf", "DiningTable"}},
        {RoomType::bathroom, {"Sink", "Cabinet", "TrashCan"}},
        {RoomType::office, {"Desk", "Bookshelf", "Shelf", "TrashCan"}},
        {RoomType::hallway, {"SideTable", "Cabinet", "Shelf"}},
    };
    return kByRoom.at(room);
}

inline PlacementRules default_placement_rules() {
    using R = RoomType;
    PlacementRules rules;
    auto add = [&rules](const std::string& obj,
                        std::initializer_list<PlacementPair> pairs) {
        rules.table[obj].insert(pairs.begin(), pairs.end());
    };
    add("Knife", {{"CounterTop", R::kitchen}, {"Sink", R::kitchen}});
    add("Fork", {{"CounterTop", R::kitchen}, {"Sink", R::kitchen}});
    add("Spoon", {{"CounterTop", R::kitchen}, {"Sink", R::kitchen}});
    add("Plate", {{"CounterTop", R::kitchen}, {"Cabinet", R::kitchen}, {"DiningTable", R::kitchen}});
    add("Bowl", {{"CounterTop", R::kitchen}, {"Cabinet", R::kitchen}, {"DiningTable", R::kitchen}});
    add("Mug", {{"CounterTop", R::kitchen}, {"Cabinet", R::kitchen}, {"Desk", R::office}});
    add("Cup", {{"CounterTop", R::kitchen}, {"Cabinet", R::kitchen}});
    add("Pot", {{"CounterTop", R::kitchen}, {"Cabinet", R::kitchen}});
    add("Pan", {{"CounterTop", R::kitchen}, {"Cabinet", R::kitchen}});
    add("Apple", {{"CounterTop", R::kitchen}, {"DiningTable", R::kitchen}, {"Fridge", R::kitchen}});
    add("Bread", {{"CounterTop", R::kitchen}, {"DiningTable", R::kitchen}});
    add("Tomato", {{"CounterTop", R::kitchen}, {"Sink", R::kitchen}, {"Fridge", R::kitchen}});
    add("Lettuce", {{"CounterTop", R::kitchen}, {"Fridge", R::kitchen}});
    add("SodaCan", {{"Fridge", R::kitchen}, {"TrashCan", R::kitchen}, {"TrashCan", R::office}});
    add("Book", {{"Bookshelf", R::office}, {"Bookshelf", R::living_room}, {"Desk", R::office}, {"Desk", R::bedroom}, {"Shelf", R::bedroom}});
    add("Pen", {{"Desk", R::office}, {"Desk", R::bedroom}});
    add("Pencil", {{"Desk", R::office}, {"Desk", R::bedroom}});
    add("Notebook", {{"Desk", R::office}, {"Bookshelf", R::office}, {"Desk", R::bedroom}});
    add("Laptop", {{"Desk", R::office}, {"SideTable", R::living_room}});
    add("CellPhone", {{"SideTable", R::bedroom}, {"Desk", R::office}, {"SideTable", R::living_room}});
    add("KeyChain", {{"SideTable", R::bedroom}, {"SideTable", R::hallway}, {"Dresser", R::bedroom}});
    add("Wallet", {{"SideTable", R::hallway}, {"Dresser", R::bedroom}, {"Desk", R::office}});
    add("Watch", {{"Dresser", R::bedroom}, {"SideTable", R::bedroom}});
    add("RemoteControl", {{"Sofa", R::living_room}, {"SideTable", R::living_room}});
    add("Pillow", {{"Bed", R::bedroom}, {"Sofa", R::living_room}});
    add("Blanket", {{"Bed", R::bedroom}, {"Sofa", R::living_room}});
    add("AlarmClock", {{"SideTable", R::bedroom}, {"Dresser", R::bedroom}});
    add("Towel", {{"Cabinet", R::bathroom}, {"Shelf", R::hallway}});
    add("SoapBar", {{"Sink", R::bathroom}, {"Cabinet", R::bathroom}});
    add("Toothbrush", {{"Sink", R::bathroom}, {"Cabinet", R::bathroom}});
    add("ToiletPaper", {{"Cabinet", R::bathroom}, {"Shelf", R::hallway}});
    add("SprayBottle", {{"Cabinet", R::bathroom}, {"Cabinet", R::kitchen}});
    add("Bottle", {{"Shelf", R::living_room}, {"CounterTop", R::kitchen}, {"Cabinet", R::kitchen}});
    add("Vase", {{"Shelf", R::living_room}, {"SideTable", R::living_room}});
    add("Candle", {{"Shelf", R::living_room}, {"SideTable", R::living_room}, {"Cabinet", R::bathroom}});
    add("Statue", {{"Shelf", R::living_room}, {"Bookshelf", R::living_room}});
    add("TissueBox", {{"SideTable", R::living_room}, {"Desk", R::office}});
    add("Newspaper", {{"DiningTable", R::kitchen}, {"Sofa", R::living_room}, {"TrashCan", R::kitchen}});
    return rules;
}

// true iff placing object_type on receptacle_type in room_type violates the
// rules table. Anything resting on the Floor pseudo-receptacle is misplaced.
inline bool is_misplaced(const std::string& object_type,
                         const std::string& receptacle_type, RoomType room_type,
                         const PlacementRules& rules) {
    if (!is_receptacle_type(receptacle_type))
        throw std::invalid_argument("unknown receptacle type: " + receptacle_type);
    auto it = rules.table.find(object_type);
    if (it == rules.table.end())
        throw std::invalid_argument("unknown object type: " + object_type);
    if (receptacle_type == kFloorReceptacleType) return true;
    return it->second.count({receptacle_type, room_type}) == 0;
}

inline const std::set<PlacementPair>&
reasonable_placements(const std::string& object_type, const PlacementRules& rules) {
    auto it = rules.table.find(object_type);
    if (it == rules.table.end())
        throw std::invalid_argument("unknown object type: " + object_type);
    return it->second;
}

// Room-affinity votes, derived mechanically from the rules table: an object
// type votes for every room type in its reasonable pairs; a receptacle type
// votes for every room type it is paired with across all objects.
inline std::set<RoomType> room_affinity(const std::string& type_name,
                                        const PlacementRules& rules) {
    std::set<RoomType> rooms;
    if (auto it = rules.table.find(type_name); it != rules.table.end()) {
        for (const auto& [rec, room] : it->second) rooms.insert(room);
        return rooms;
    }
    for (const auto& [obj, pairs] : rules.table)
        for (const auto& [rec, room] : pairs)
            if (rec == type_name) rooms.insert(room);
    return rooms;
}

inline nlohmann::json rules_to_json(const PlacementRules& rules) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [obj, pairs] : rules.table) {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& [rec, room] : pairs)
            arr.push_back({rec, to_string(room)});
        j[obj] = arr;
    }
    return j;
}

inline PlacementRules rules_from_json(const nlohmann::json& j) {
    PlacementRules rules;
    for (auto it = j.begin(); it != j.end(); ++it) {
        auto& pairs = rules.table[it.key()];
        for (const auto& pr : it.value()) {
            const std::string rec = pr.at(0).get<std::string>();
            if (!is_receptacle_type(rec))
                throw std::invalid_argument("rules file: unknown receptacle type " + rec);
            pairs.insert({rec, room_type_from_string(pr.at(1).get<std::string>())});
        }
        if (pairs.empty())
            throw std::invalid_argument("rules file: empty pair set for " + it.key());
    }
    if (rules.table.empty()) throw std::invalid_argument("rules file: empty table");
    return rules;
}

} // namespace adhoc::world
