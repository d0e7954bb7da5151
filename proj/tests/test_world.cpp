#include "adhoc/rng.hpp"
#include "adhoc/taxonomy.hpp"
#include "adhoc/world.hpp"

#include <gtest/gtest.h>

#include <json.hpp>

#include <set>
#include <string>
#include <vector>

using namespace adhoc;
using namespace adhoc::world;

// ---------------------------------------------------------------------------
// Rng
// ---------------------------------------------------------------------------

TEST(Rng, MatchesSplitmix64Reference) {
    // Reference sequence computed independently from the splitmix64 recipe.
    Rng r(42);
    EXPECT_EQ(r.next(), 0xbdd732262feb6e95ull);
    EXPECT_EQ(r.next(), 0x28efe333b266f103ull);
    EXPECT_EQ(r.next(), 0x47526757130f9f52ull);
    EXPECT_EQ(r.next(), 0x581ce1ff0e4ae394ull);
}

TEST(Rng, Fnv1a64Reference) {
    EXPECT_EQ(fnv1a64("house"), 0x4d3e3b7b4e55c31bull);
}

TEST(Rng, UniformIntCoversInclusiveRange) {
    Rng r(7);
    std::set<int> seen;
    for (int i = 0; i < 1000; ++i) {
        int v = r.uniform_int(3, 7);
        ASSERT_GE(v, 3);
        ASSERT_LE(v, 7);
        seen.insert(v);
    }
    EXPECT_EQ(seen.size(), 5u);
}

TEST(Rng, UniformRealStaysInHalfOpenRange) {
    Rng r(9);
    for (int i = 0; i < 1000; ++i) {
        double v = r.uniform_real(0.1, 20.0);
        ASSERT_GE(v, 0.1);
        ASSERT_LT(v, 20.0);
    }
}

TEST(Rng, ShuffleIsDeterministicPermutation) {
    std::vector<int> a{0, 1, 2, 3, 4, 5, 6, 7};
    std::vector<int> b = a;
    Rng r1(11), r2(11);
    r1.shuffle(a);
    r2.shuffle(b);
    EXPECT_EQ(a, b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    EXPECT_EQ(sorted, (std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7}));
}

// ---------------------------------------------------------------------------
// Taxonomy and placement rules
// ---------------------------------------------------------------------------

TEST(Taxonomy, ReceptacleElevations) {
    EXPECT_EQ(receptacle_elevation("Floor"), Elevation::floor);
    for (const char* low : {"CounterTop", "DiningTable", "Sink", "Sofa", "SideTable",
                            "Desk", "Bed", "Dresser", "TrashCan"})
        EXPECT_EQ(receptacle_elevation(low), Elevation::low) << low;
    for (const char* high : {"Fridge", "Cabinet", "Shelf", "Bookshelf"})
        EXPECT_EQ(receptacle_elevation(high), Elevation::high) << high;
    EXPECT_THROW(receptacle_elevation("Spaceship"), std::invalid_argument);
}

TEST(Taxonomy, KnownReasonableAndMisplacedExamples) {
    const auto rules = default_placement_rules();
    EXPECT_FALSE(is_misplaced("Knife", "CounterTop", RoomType::kitchen, rules));
    EXPECT_TRUE(is_misplaced("Knife", "Sofa", RoomType::living_room, rules));
    EXPECT_FALSE(is_misplaced("Book", "Desk", RoomType::bedroom, rules));
    EXPECT_FALSE(is_misplaced("KeyChain", "SideTable", RoomType::bedroom, rules));
    EXPECT_FALSE(is_misplaced("Bottle", "Shelf", RoomType::living_room, rules));
    // A reasonable receptacle type in the wrong room is still misplaced.
    EXPECT_TRUE(is_misplaced("Knife", "CounterTop", RoomType::bedroom, rules));
}

TEST(Taxonomy, FloorIsAlwaysMisplaced) {
    const auto rules = default_placement_rules();
    for (const auto& [obj_type, pairs] : rules.table)
        for (RoomType room : all_room_types())
            EXPECT_TRUE(is_misplaced(obj_type, kFloorReceptacleType, room, rules)) << obj_type;
}

// Oracle: is_misplaced must be the exact complement of membership in the
// reasonable-placement set, across the full cross product.
TEST(Taxonomy, MisplacedComplementsReasonableEverywhere) {
    const auto rules = default_placement_rules();
    for (const auto& [obj_type, pairs] : rules.table) {
        for (const auto& [rec_type, elevation] : receptacle_taxonomy()) {
            for (RoomType room : all_room_types()) {
                const bool reasonable = pairs.count({rec_type, room}) > 0;
                EXPECT_EQ(is_misplaced(obj_type, rec_type, room, rules), !reasonable)
                    << obj_type << " on " << rec_type << " in " << to_string(room);
            }
        }
    }
}

TEST(Taxonomy, UnknownTypesThrow) {
    const auto rules = default_placement_rules();
    EXPECT_THROW(is_misplaced("Unobtainium", "Desk", RoomType::office, rules),
                 std::invalid_argument);
    EXPECT_THROW(is_misplaced("Knife", "Spaceship", RoomType::kitchen, rules),
                 std::invalid_argument);
}

TEST(Taxonomy, RoomAffinityAnchorsKitchen) {
    const auto rules = default_placement_rules();
    EXPECT_TRUE(room_affinity("Fridge", rules).count(RoomType::kitchen));
    EXPECT_TRUE(room_affinity("CounterTop", rules).count(RoomType::kitchen));
    EXPECT_TRUE(room_affinity("Bed", rules).count(RoomType::bedroom));
    EXPECT_TRUE(room_affinity("Knife", rules).count(RoomType::kitchen));
}

TEST(Taxonomy, RulesJsonRoundTrip) {
    const auto rules = default_placement_rules();
    const auto j = rules_to_json(rules);
    const auto back = rules_from_json(j);
    EXPECT_EQ(rules_to_json(back).dump(), j.dump());
    EXPECT_EQ(back.table.size(), rules.table.size());
}

// ---------------------------------------------------------------------------
// House generation
// ---------------------------------------------------------------------------

namespace {

// Independent reachability oracle over the serialized grid rows: flood fill
// from the first non-wall cell, then require no non-wall cell is unreached.
bool oracle_fully_connected(const nlohmann::json& house_json) {
    std::vector<std::string> rows;
    for (const auto& r : house_json.at("grid")) rows.push_back(r.get<std::string>());
    const int R = static_cast<int>(rows.size());
    const int C = R ? static_cast<int>(rows[0].size()) : 0;
    std::vector<std::vector<bool>> seen(R, std::vector<bool>(C, false));
    int first_r = -1, first_c = -1, open_cells = 0;
    for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
            if (rows[r][c] != '#') {
                ++open_cells;
                if (first_r < 0) { first_r = r; first_c = c; }
            }
    if (open_cells == 0) return false;
    std::vector<std::pair<int, int>> stack{{first_r, first_c}};
    seen[first_r][first_c] = true;
    int reached = 1;
    while (!stack.empty()) {
        auto [r, c] = stack.back();
        stack.pop_back();
        const int dr[] = {-1, 1, 0, 0}, dc[] = {0, 0, -1, 1};
        for (int i = 0; i < 4; ++i) {
            int nr = r + dr[i], nc = c + dc[i];
            if (nr < 0 || nr >= R || nc < 0 || nc >= C) continue;
            if (rows[nr][nc] == '#' || seen[nr][nc]) continue;
            seen[nr][nc] = true;
            ++reached;
            stack.push_back({nr, nc});
        }
    }
    return reached == open_cells;
}

} // namespace

TEST(HouseGen, RejectsRoomCountOutOfRange) {
    EXPECT_THROW(generate_house(1, 0), std::invalid_argument);
    EXPECT_THROW(generate_house(1, 11), std::invalid_argument);
}

TEST(HouseGen, Deterministic) {
    const auto a = to_json(generate_house(7, 5)).dump();
    const auto b = to_json(generate_house(7, 5)).dump();
    EXPECT_EQ(a, b);
    const auto c = to_json(generate_house(8, 5)).dump();
    EXPECT_NE(a, c);
}

TEST(HouseGen, StructureInvariantsAcrossSeeds) {
    const auto rules = default_placement_rules();
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        for (int n_rooms : {1, 2, 4, 7, 10}) {
            const House h = generate_house(seed, n_rooms);
            ASSERT_EQ(static_cast<int>(h.rooms.size()), n_rooms);

            // Outer ring is wall.
            for (int c = 0; c < h.cols; ++c) {
                ASSERT_EQ(h.at({0, c}).kind, CellKind::wall);
                ASSERT_EQ(h.at({h.rows - 1, c}).kind, CellKind::wall);
            }
            for (int r = 0; r < h.rows; ++r) {
                ASSERT_EQ(h.at({r, 0}).kind, CellKind::wall);
                ASSERT_EQ(h.at({r, h.cols - 1}).kind, CellKind::wall);
            }

            // Receptacle and object counts per room.
            std::vector<int> recs_in_room(n_rooms, 0), objs_in_room(n_rooms, 0);
            std::set<GridPos> rec_cells;
            for (const auto& rec : h.receptacles) {
                const int room = h.room_id_at(rec.position);
                ASSERT_GE(room, 0) << "receptacle on non-floor cell";
                ++recs_in_room[room];
                ASSERT_TRUE(rec_cells.insert(rec.position).second)
                    << "two receptacles share a cell";
                ASSERT_EQ(rec.elevation, receptacle_elevation(rec.receptacle_type));
            }
            for (const auto& obj : h.objects) {
                ASSERT_EQ(obj.location.kind, ObjectLocation::Kind::on_receptacle);
                const auto* rec = h.find_receptacle(obj.location.receptacle_id);
                ASSERT_NE(rec, nullptr);
                const int room = h.room_id_at(rec->position);
                ++objs_in_room[room];
                ASSERT_GE(obj.mass_kg, 0.1);
                ASSERT_LE(obj.mass_kg, 20.0);
                // Initial placements are reasonable.
                ASSERT_FALSE(is_misplaced(obj.object_type, rec->receptacle_type,
                                          h.room_type_of(room), rules))
                    << obj.object_id << " starts misplaced";
            }
            for (int i = 0; i < n_rooms; ++i) {
                ASSERT_GE(recs_in_room[i], 2);
                ASSERT_LE(recs_in_room[i], 6);
                ASSERT_GE(objs_in_room[i], 1);
                ASSERT_LE(objs_in_room[i], 8);
            }

            ASSERT_TRUE(oracle_fully_connected(to_json(h)))
                << "seed " << seed << " rooms " << n_rooms;
        }
    }
}

TEST(HouseGen, IdsAreUniqueAndTyped) {
    const House h = generate_house(13, 8);
    std::set<std::string> ids;
    for (const auto& rec : h.receptacles) {
        EXPECT_TRUE(ids.insert(rec.receptacle_id).second);
        EXPECT_EQ(rec.receptacle_id.rfind(rec.receptacle_type + "_", 0), 0u);
    }
    for (const auto& obj : h.objects) {
        EXPECT_TRUE(ids.insert(obj.object_id).second);
        EXPECT_EQ(obj.object_id.rfind(obj.object_type + "_", 0), 0u);
    }
}

TEST(HouseGen, JsonRoundTrip) {
    const House h = generate_house(21, 6);
    const auto j = to_json(h);
    const House back = house_from_json(j);
    EXPECT_EQ(to_json(back).dump(), j.dump());
}

// ---------------------------------------------------------------------------
// Scenarios
// ---------------------------------------------------------------------------

TEST(ScenarioGen, MisplacementsViolateRules) {
    const auto rules = default_placement_rules();
    for (std::uint64_t seed : {1ull, 5ull, 9ull}) {
        const House h = generate_house(seed, 6);
        if (static_cast<int>(h.objects.size()) < 5) continue;
        const Scenario sc = generate_scenario(h, 5, seed + 100);
        ASSERT_EQ(sc.k(), 5);
        std::set<std::string> moved;
        for (const auto& mp : sc.misplacements) {
            ASSERT_TRUE(moved.insert(mp.object_id).second) << "object misplaced twice";
            const auto* obj = sc.house.find_object(mp.object_id);
            ASSERT_NE(obj, nullptr);
            ASSERT_TRUE(obj->location == mp.placed_at);
            ASSERT_NE(h.find_receptacle(mp.original_receptacle_id), nullptr);
            if (obj->location.kind == ObjectLocation::Kind::on_receptacle) {
                const auto* rec = sc.house.find_receptacle(obj->location.receptacle_id);
                ASSERT_NE(rec, nullptr);
                const RoomType room = sc.house.room_type_of(sc.house.room_id_at(rec->position));
                ASSERT_TRUE(is_misplaced(obj->object_type, rec->receptacle_type, room, rules));
            } else {
                ASSERT_EQ(obj->location.kind, ObjectLocation::Kind::on_floor);
                ASSERT_TRUE(sc.house.traversable(obj->location.cell));
            }
        }
        // Untouched objects stay put.
        for (const auto& obj : h.objects)
            if (!moved.count(obj.object_id))
                ASSERT_TRUE(sc.house.find_object(obj.object_id)->location == obj.location);
    }
}

TEST(ScenarioGen, Deterministic) {
    const House h = generate_house(3, 4);
    const auto a = to_json(generate_scenario(h, 3, 77)).dump();
    const auto b = to_json(generate_scenario(h, 3, 77)).dump();
    EXPECT_EQ(a, b);
}

TEST(ScenarioGen, RejectsBadK) {
    const House h = generate_house(3, 4);
    EXPECT_THROW(generate_scenario(h, 0, 1), std::invalid_argument);
    EXPECT_THROW(generate_scenario(h, 6, 1), std::invalid_argument);
}

TEST(ScenarioGen, JsonRoundTrip) {
    const House h = generate_house(31, 5);
    Scenario sc = generate_scenario(h, 2, 31);
    sc.scenario_id = "house31_k2_team3";
    sc.team = generate_team(h, 31, 3);
    sc.adhoc = generate_adhoc_agent(h, 31);
    const auto j = to_json(sc);
    const Scenario back = scenario_from_json(j);
    EXPECT_EQ(to_json(back).dump(), j.dump());
    EXPECT_EQ(back.team.size(), 3u);
    EXPECT_EQ(back.k(), 2);
}

// ---------------------------------------------------------------------------
// Teams
// ---------------------------------------------------------------------------

TEST(TeamGen, ProfilesRespectCapabilityRanges) {
    const House h = generate_house(17, 5);
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const int n = 3 + static_cast<int>(seed % 3);
        const auto team = generate_team(h, seed, n);
        ASSERT_EQ(static_cast<int>(team.size()), n);
        std::set<GridPos> starts;
        bool any_manip = false;
        for (const auto& p : team) {
            ASSERT_TRUE(p.alpha_nav);
            ASSERT_TRUE(p.height == 0 || p.height == 1);
            ASSERT_GE(p.payload_kg, 0.1);
            ASSERT_LE(p.payload_kg, 20.0);
            ASSERT_GE(p.battery_steps, 50);
            ASSERT_LE(p.battery_steps, 500);
            ASSERT_EQ(p.join_time, 0);
            ASSERT_TRUE(h.traversable(p.start_position));
            ASSERT_TRUE(starts.insert(p.start_position).second) << "duplicate start";
            any_manip = any_manip || p.alpha_manip;
        }
        ASSERT_TRUE(any_manip) << "team without a manipulator, seed " << seed;
        for (int i = 0; i < n; ++i) ASSERT_EQ(team[i].agent_id, i + 1);
    }
}

TEST(TeamGen, RejectsBadSize) {
    const House h = generate_house(17, 5);
    EXPECT_THROW(generate_team(h, 1, 2), std::invalid_argument);
    EXPECT_THROW(generate_team(h, 1, 6), std::invalid_argument);
}

TEST(TeamGen, AdhocAgentIsIdZero) {
    const House h = generate_house(17, 5);
    const auto p = generate_adhoc_agent(h, 5);
    EXPECT_EQ(p.agent_id, 0);
    EXPECT_TRUE(p.alpha_nav);
    EXPECT_GE(p.payload_kg, 0.1);
    EXPECT_LE(p.payload_kg, 20.0);
    EXPECT_GE(p.battery_steps, 50);
    EXPECT_LE(p.battery_steps, 500);
    EXPECT_TRUE(h.traversable(p.start_position));
    const auto q = generate_adhoc_agent(h, 5);
    EXPECT_EQ(q.start_position, p.start_position);
    EXPECT_EQ(q.battery_steps, p.battery_steps);
}

// ---------------------------------------------------------------------------
// Difficulty
// ---------------------------------------------------------------------------

TEST(Difficulty, RoomCountBands) {
    EXPECT_EQ(classify_difficulty(1), Difficulty::Easy);
    EXPECT_EQ(classify_difficulty(3), Difficulty::Easy);
    EXPECT_EQ(classify_difficulty(4), Difficulty::Medium);
    EXPECT_EQ(classify_difficulty(6), Difficulty::Medium);
    EXPECT_EQ(classify_difficulty(7), Difficulty::Difficult);
    EXPECT_EQ(classify_difficulty(10), Difficulty::Difficult);
    EXPECT_THROW(classify_difficulty(0), std::invalid_argument);
    EXPECT_THROW(classify_difficulty(11), std::invalid_argument);
}
