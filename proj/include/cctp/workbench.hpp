#pragma once

// Discrete workbench simulator: a single target object on a 3x5 grid with
// optional obstacles and a dyer. Everything here is a pure function of its
// inputs.

#include <algorithm>
#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <fmt/format.h>

namespace cctp {

inline constexpr int kGridWidth = 3;   // pos_x in [0, 3)
inline constexpr int kGridHeight = 5;  // pos_y in [0, 5)
inline constexpr int kNumRotations = 4;
inline constexpr int kNumColors = 6;
inline constexpr int kNumSizes = 4;
inline constexpr int kNumSeenTypes = 8;
inline constexpr int kNumUnseenTypes = 4;
inline constexpr int kNumLevels = 4;

enum class Action : std::uint8_t {
    move_front,
    move_back,
    move_left,
    move_right,
    rotate_left,
    rotate_right,
    change_color,
};

inline constexpr int kNumActions = 7;

/// Fixed ordering used for every deterministic tie-break in the project.
inline constexpr std::array<Action, kNumActions> kAllActions{
    Action::move_front,  Action::move_back,    Action::move_left,   Action::move_right,
    Action::rotate_left, Action::rotate_right, Action::change_color,
};

constexpr int index_of(Action a) noexcept { return static_cast<int>(a); }

inline constexpr std::array<std::string_view, kNumActions> kActionNames{
    "move_front",  "move_back",    "move_left",   "move_right",
    "rotate_left", "rotate_right", "change_color",
};

constexpr std::string_view to_string(Action a) noexcept { return kActionNames[index_of(a)]; }

inline std::optional<Action> parse_action(std::string_view name) {
    for (Action a : kAllActions)
        if (to_string(a) == name) return a;
    return std::nullopt;
}

constexpr bool is_movement(Action a) noexcept { return index_of(a) <= index_of(Action::move_right); }

struct Cell {
    int x = 0;
    int y = 0;
    auto operator<=>(const Cell&) const = default;
};

constexpr bool on_grid(Cell c) noexcept {
    return c.x >= 0 && c.x < kGridWidth && c.y >= 0 && c.y < kGridHeight;
}

constexpr int manhattan(Cell a, Cell b) noexcept {
    return (a.x > b.x ? a.x - b.x : b.x - a.x) + (a.y > b.y ? a.y - b.y : b.y - a.y);
}

struct ObjectState {
    int type_id = 0;
    int pos_x = 0;
    int pos_y = 0;
    int rotation = 0;  // degrees, multiple of 90
    int color = 0;
    int size = 0;

    constexpr Cell cell() const noexcept { return {pos_x, pos_y}; }
    auto operator<=>(const ObjectState&) const = default;
};

constexpr int max_len_for_level(int level) {
    constexpr std::array<int, kNumLevels> caps{6, 9, 15, 16};
    if (level < 1 || level > kNumLevels) throw std::invalid_argument(fmt::format("level {} not in [1, 4]", level));
    return caps[static_cast<std::size_t>(level - 1)];
}

struct EnvConfig {
    int level = 1;
    std::vector<Cell> obstacles;
    std::optional<Cell> dyer;
    int dyer_color = 0;
    int max_len = 6;

    static EnvConfig empty(int level) {
        EnvConfig env;
        env.level = level;
        env.max_len = max_len_for_level(level);
        return env;
    }

    bool blocked(Cell c) const noexcept {
        return (dyer && *dyer == c) || std::find(obstacles.begin(), obstacles.end(), c) != obstacles.end();
    }

    bool dyer_adjacent(Cell c) const noexcept { return dyer && manhattan(*dyer, c) == 1; }

    bool operator==(const EnvConfig&) const = default;
};

/// Throws std::invalid_argument when the level/obstacle/dyer invariants do not hold.
inline void validate(const EnvConfig& env) {
    if (env.max_len != max_len_for_level(env.level))
        throw std::invalid_argument(fmt::format("max_len {} does not match level {}", env.max_len, env.level));
    if (env.level == 1 && !env.obstacles.empty()) throw std::invalid_argument("level 1 has no obstacles");
    if (env.level <= 2 && env.dyer) throw std::invalid_argument("levels 1-2 have no dyer");
    if (env.level >= 3 && !env.dyer) throw std::invalid_argument("levels 3-4 require a dyer");
    if (env.dyer_color < 0 || env.dyer_color >= kNumColors) throw std::invalid_argument("dyer_color out of range");
    std::vector<Cell> cells = env.obstacles;
    if (env.dyer) cells.push_back(*env.dyer);
    for (Cell c : cells)
        if (!on_grid(c)) throw std::invalid_argument("environment object off grid");
    std::sort(cells.begin(), cells.end());
    if (std::adjacent_find(cells.begin(), cells.end()) != cells.end())
        throw std::invalid_argument("obstacle and dyer cells must be distinct");
}

enum class ActionFault : std::uint8_t { none, out_of_bounds, collision, dyer_unavailable };

constexpr std::string_view to_string(ActionFault f) noexcept {
    switch (f) {
        case ActionFault::none: return "none";
        case ActionFault::out_of_bounds: return "out_of_bounds";
        case ActionFault::collision: return "collision";
        case ActionFault::dyer_unavailable: return "dyer_unavailable";
    }
    return "?";
}

class ActionError : public std::runtime_error {
public:
    ActionError(ActionFault fault, Action action, std::optional<std::size_t> step = std::nullopt)
        : std::runtime_error(step ? fmt::format("{} at step {}: {}", to_string(action), *step, to_string(fault))
                                  : fmt::format("{}: {}", to_string(action), to_string(fault))),
          fault_(fault), action_(action), step_(step) {}

    ActionFault fault() const noexcept { return fault_; }
    Action action() const noexcept { return action_; }
    std::optional<std::size_t> step() const noexcept { return step_; }

private:
    ActionFault fault_;
    Action action_;
    std::optional<std::size_t> step_;
};

struct StepOutcome {
    ActionFault fault = ActionFault::none;
    ObjectState state;  // unchanged input state when fault != none

    bool ok() const noexcept { return fault == ActionFault::none; }
};

inline bool is_valid_state(const ObjectState& s, const EnvConfig& env) noexcept {
    return on_grid(s.cell()) && !env.blocked(s.cell()) && s.rotation >= 0 && s.rotation < 360 && s.rotation % 90 == 0 &&
           s.color >= 0 && s.color < kNumColors;
}

/// Non-throwing transition used by search loops.
inline StepOutcome try_apply(const ObjectState& s, Action a, const EnvConfig& env) noexcept {
    ObjectState next = s;
    switch (a) {
        case Action::move_front: ++next.pos_y; break;
        case Action::move_back: --next.pos_y; break;
        case Action::move_left: --next.pos_x; break;
        case Action::move_right: ++next.pos_x; break;
        case Action::rotate_left: next.rotation = (s.rotation + 270) % 360; break;
        case Action::rotate_right: next.rotation = (s.rotation + 90) % 360; break;
        case Action::change_color:
            if (!env.dyer_adjacent(s.cell())) return {ActionFault::dyer_unavailable, s};
            next.color = env.dyer_color;
            return {ActionFault::none, next};
    }
    if (!on_grid(next.cell())) return {ActionFault::out_of_bounds, s};
    if (env.blocked(next.cell())) return {ActionFault::collision, s};
    return {ActionFault::none, next};
}

inline ObjectState apply_action(const ObjectState& s, Action a, const EnvConfig& env) {
    StepOutcome out = try_apply(s, a, env);
    if (!out.ok()) throw ActionError(out.fault, a);
    return out.state;
}

/// Trajectory including the initial state; throws ActionError annotated with
/// the index of the first illegal action.
inline std::vector<ObjectState> simulate(const ObjectState& init, std::span<const Action> actions,
                                         const EnvConfig& env) {
    std::vector<ObjectState> traj;
    traj.reserve(actions.size() + 1);
    traj.push_back(init);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        StepOutcome out = try_apply(traj.back(), actions[i], env);
        if (!out.ok()) throw ActionError(out.fault, actions[i], i);
        traj.push_back(out.state);
    }
    return traj;
}

enum class Split : std::uint8_t { train, val, test };

constexpr std::string_view to_string(Split s) noexcept {
    switch (s) {
        case Split::train: return "train";
        case Split::val: return "val";
        case Split::test: return "test";
    }
    return "?";
}

inline std::optional<Split> parse_split(std::string_view s) {
    if (s == "train") return Split::train;
    if (s == "val") return Split::val;
    if (s == "test") return Split::test;
    return std::nullopt;
}

struct Task {
    std::string task_id;
    EnvConfig env;
    ObjectState init;
    ObjectState goal;
    std::vector<Action> gt_actions;
    Split split = Split::train;

    int level() const noexcept { return env.level; }
    bool operator==(const Task&) const = default;
};

/// Success rule per level: position and color always, rotation only at level 4.
/// Type and size are never altered by any action.
inline bool goal_reached(const ObjectState& s, const ObjectState& goal, int level) noexcept {
    return s.pos_x == goal.pos_x && s.pos_y == goal.pos_y && s.color == goal.color &&
           (level < 4 || s.rotation == goal.rotation);
}

enum class FailureReason : std::uint8_t { none, illegal_action, collision, wrong_final_state };

constexpr std::string_view to_string(FailureReason r) noexcept {
    switch (r) {
        case FailureReason::none: return "none";
        case FailureReason::illegal_action: return "illegal_action";
        case FailureReason::collision: return "collision";
        case FailureReason::wrong_final_state: return "wrong_final_state";
    }
    return "?";
}

struct SuccessReport {
    bool success = false;
    FailureReason failure_reason = FailureReason::wrong_final_state;
    ObjectState final_state;  // last legal state reached
};

inline SuccessReport adjudicate(const Task& task, std::span<const Action> actions) {
    ObjectState s = task.init;
    for (Action a : actions) {
        StepOutcome out = try_apply(s, a, task.env);
        if (!out.ok()) {
            auto reason = out.fault == ActionFault::collision ? FailureReason::collision : FailureReason::illegal_action;
            return {false, reason, s};
        }
        s = out.state;
    }
    if (goal_reached(s, task.goal, task.level())) return {true, FailureReason::none, s};
    return {false, FailureReason::wrong_final_state, s};
}

}  // namespace cctp
