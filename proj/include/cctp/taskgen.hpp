#pragma once

// Task and dataset generation: per-level environment sampling, breadth-first
// ground-truth plans, generalization splits and the dataset text format.

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cctp/parallel.hpp"
#include "cctp/rng.hpp"
#include "cctp/textio.hpp"
#include "cctp/workbench.hpp"

namespace cctp {

class GenerationError : public std::runtime_error {
public:
    enum class Kind { unreachable, exhausted, unsupported, invalid_argument };

    GenerationError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct SplitCounts {
    int train = 800;
    int val = 100;
    int test = 100;

    int total() const noexcept { return train + val + test; }
    bool operator==(const SplitCounts&) const = default;
};

struct Dataset {
    int level = 1;
    std::vector<Task> tasks;
    std::uint64_t seed = 0;
    std::uint64_t codebook_seed = 1;
    SplitCounts counts;
    std::string variant = "standard";

    std::vector<const Task*> split(Split s) const {
        std::vector<const Task*> out;
        for (const Task& t : tasks)
            if (t.split == s) out.push_back(&t);
        return out;
    }

    bool operator==(const Dataset&) const = default;
};

inline constexpr std::uint64_t kDefaultCodebookSeed = 1;
inline constexpr int kMaxGenerationAttempts = 10000;

namespace detail {

// Joint changeable state (x, y, rotation index, color): 3*5*4*6 = 360 nodes.
constexpr int kSearchStates = kGridWidth * kGridHeight * kNumRotations * kNumColors;

constexpr int search_key(const ObjectState& s) noexcept {
    return ((s.pos_x * kGridHeight + s.pos_y) * kNumRotations + s.rotation / 90) * kNumColors + s.color;
}

inline bool changeable_equal(const ObjectState& a, const ObjectState& b) noexcept {
    return a.pos_x == b.pos_x && a.pos_y == b.pos_y && a.rotation == b.rotation && a.color == b.color;
}

/// All free cells reachable from each other by unit moves.
inline bool free_cells_connected(const EnvConfig& env) {
    std::vector<Cell> free;
    for (int x = 0; x < kGridWidth; ++x)
        for (int y = 0; y < kGridHeight; ++y)
            if (!env.blocked({x, y})) free.push_back({x, y});
    if (free.empty()) return false;
    std::array<bool, kGridWidth * kGridHeight> seen{};
    std::vector<Cell> stack{free.front()};
    seen[static_cast<std::size_t>(free.front().x * kGridHeight + free.front().y)] = true;
    std::size_t reached = 1;
    while (!stack.empty()) {
        Cell c = stack.back();
        stack.pop_back();
        for (Cell n : {Cell{c.x + 1, c.y}, Cell{c.x - 1, c.y}, Cell{c.x, c.y + 1}, Cell{c.x, c.y - 1}}) {
            if (!on_grid(n) || env.blocked(n)) continue;
            auto idx = static_cast<std::size_t>(n.x * kGridHeight + n.y);
            if (seen[idx]) continue;
            seen[idx] = true;
            ++reached;
            stack.push_back(n);
        }
    }
    return reached == free.size();
}

inline Cell sample_free_cell(const EnvConfig& env, Rng& rng) {
    std::vector<Cell> free;
    for (int x = 0; x < kGridWidth; ++x)
        for (int y = 0; y < kGridHeight; ++y)
            if (!env.blocked({x, y})) free.push_back({x, y});
    return free[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(free.size()) - 1))];
}

inline EnvConfig sample_env(int level, Rng& rng) {
    for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
        EnvConfig env = EnvConfig::empty(level);
        if (level >= 2) {
            int n = uniform_int(rng, 1, 3);
            for (int i = 0; i < n; ++i) env.obstacles.push_back(sample_free_cell(env, rng));
        }
        if (level >= 3) {
            env.dyer = sample_free_cell(env, rng);
            env.dyer_color = uniform_int(rng, 0, kNumColors - 1);
        }
        if (free_cells_connected(env)) return env;
    }
    throw GenerationError(GenerationError::Kind::exhausted, "could not sample a connected workbench");
}

}  // namespace detail

/// Breadth-first search over (x, y, rotation, color). Actions are expanded in
/// kAllActions order and the first discovered parent is kept, which makes the
/// returned plan unique for given inputs. Returns nullopt when unreachable.
inline std::optional<std::vector<Action>> try_oracle_shortest_plan(const EnvConfig& env, const ObjectState& init,
                                                                   const ObjectState& goal) {
    using detail::search_key;
    if (detail::changeable_equal(init, goal)) return std::vector<Action>{};
    struct Parent {
        int prev = -1;
        Action action = Action::move_front;
    };
    std::vector<Parent> parent(detail::kSearchStates);
    std::vector<bool> seen(detail::kSearchStates, false);
    std::vector<ObjectState> states(detail::kSearchStates);
    std::queue<ObjectState> frontier;
    seen[static_cast<std::size_t>(search_key(init))] = true;
    frontier.push(init);
    while (!frontier.empty()) {
        ObjectState s = frontier.front();
        frontier.pop();
        int key = search_key(s);
        for (Action a : kAllActions) {
            StepOutcome out = try_apply(s, a, env);
            if (!out.ok()) continue;
            auto nk = static_cast<std::size_t>(search_key(out.state));
            if (seen[nk]) continue;
            seen[nk] = true;
            parent[nk] = {key, a};
            states[nk] = out.state;
            if (detail::changeable_equal(out.state, goal)) {
                std::vector<Action> plan;
                for (int k = static_cast<int>(nk); k != search_key(init); k = parent[static_cast<std::size_t>(k)].prev)
                    plan.push_back(parent[static_cast<std::size_t>(k)].action);
                std::reverse(plan.begin(), plan.end());
                return plan;
            }
            frontier.push(out.state);
        }
    }
    return std::nullopt;
}

inline std::vector<Action> oracle_shortest_plan(const EnvConfig& env, const ObjectState& init,
                                                const ObjectState& goal) {
    if (!is_valid_state(init, env) || !is_valid_state(goal, env))
        throw GenerationError(GenerationError::Kind::invalid_argument, "init and goal must be valid in env");
    auto plan = try_oracle_shortest_plan(env, init, goal);
    if (!plan) throw GenerationError(GenerationError::Kind::unreachable, "goal unreachable");
    return *std::move(plan);
}

/// Predicate over a candidate plan, used to carve generalization splits.
using PlanFilter = bool (*)(std::span<const Action>);

/// Rejection-samples one task. Levels 1-2 keep rotation and color fixed;
/// level 3 may require a color change (goal color = dyer color); level 4 may
/// additionally change rotation. Trivial tasks (init == goal) are rejected.
inline Task generate_task(int level, Rng& rng, PlanFilter accept = nullptr) {
    if (level < 1 || level > kNumLevels)
        throw GenerationError(GenerationError::Kind::invalid_argument, fmt::format("level {} not in [1, 4]", level));
    for (int attempt = 0; attempt < kMaxGenerationAttempts; ++attempt) {
        Task task;
        task.env = detail::sample_env(level, rng);
        ObjectState& init = task.init;
        init.type_id = uniform_int(rng, 0, kNumSeenTypes - 1);
        init.size = uniform_int(rng, 0, kNumSizes - 1);
        init.rotation = 90 * uniform_int(rng, 0, kNumRotations - 1);
        init.color = uniform_int(rng, 0, kNumColors - 1);
        Cell start = detail::sample_free_cell(task.env, rng);
        init.pos_x = start.x;
        init.pos_y = start.y;

        ObjectState& goal = task.goal;
        goal = init;
        Cell end = detail::sample_free_cell(task.env, rng);
        goal.pos_x = end.x;
        goal.pos_y = end.y;
        if (level >= 3 && uniform_int(rng, 0, 1) == 1) {
            if (init.color == task.env.dyer_color)
                init.color = (task.env.dyer_color + uniform_int(rng, 1, kNumColors - 1)) % kNumColors;
            goal.color = task.env.dyer_color;
        }
        if (level == 4) goal.rotation = 90 * uniform_int(rng, 0, kNumRotations - 1);

        if (detail::changeable_equal(init, goal)) continue;
        auto plan = try_oracle_shortest_plan(task.env, init, goal);
        if (!plan || static_cast<int>(plan->size()) > task.env.max_len) continue;
        if (accept && !accept(*plan)) continue;
        task.gt_actions = *std::move(plan);
        return task;
    }
    throw GenerationError(GenerationError::Kind::exhausted,
                          fmt::format("no acceptable level-{} task after {} attempts", level, kMaxGenerationAttempts));
}

inline std::string make_task_id(int level, Split split, int index) {
    return fmt::format("L{}-{}-{:05d}", level, to_string(split), index);
}

namespace detail {

inline Split split_for_index(const SplitCounts& counts, int i) {
    if (i < counts.train) return Split::train;
    if (i < counts.train + counts.val) return Split::val;
    return Split::test;
}

inline Dataset generate_with(int level, SplitCounts counts, std::uint64_t seed, std::uint64_t codebook_seed,
                             std::string variant, PlanFilter train_filter, PlanFilter test_filter, unsigned jobs) {
    if (counts.train <= 0 || counts.val < 0 || counts.test <= 0)
        throw GenerationError(GenerationError::Kind::invalid_argument, "split counts must be positive");
    Dataset ds;
    ds.level = level;
    ds.seed = seed;
    ds.codebook_seed = codebook_seed;
    ds.counts = counts;
    ds.variant = std::move(variant);
    ds.tasks.resize(static_cast<std::size_t>(counts.total()));
    parallel_for(ds.tasks.size(), jobs, [&](std::size_t i) {
        Rng rng = derive_stream(seed, fmt::format("task/L{}", level), i);
        Split split = split_for_index(counts, static_cast<int>(i));
        Task t = generate_task(level, rng, split == Split::test ? test_filter : train_filter);
        t.split = split;
        t.task_id = make_task_id(level, split, static_cast<int>(i));
        ds.tasks[i] = std::move(t);
    });
    return ds;
}

}  // namespace detail

/// Task i draws from its own stream derived from (seed, level, i), so the
/// output does not depend on `jobs`.
inline Dataset generate_dataset(int level, SplitCounts counts, std::uint64_t seed,
                                std::uint64_t codebook_seed = kDefaultCodebookSeed, unsigned jobs = 1) {
    return detail::generate_with(level, counts, seed, codebook_seed, "standard", nullptr, nullptr, jobs);
}

inline std::vector<int> sorted_unique(std::vector<int> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

/// Re-types every test task with a held-out type (cycling through the sorted
/// set); train and val tasks are untouched.
inline Dataset make_unseen_object_split(const Dataset& dataset, const std::vector<int>& held_out_types) {
    std::vector<int> held = sorted_unique(held_out_types);
    if (held.empty()) throw GenerationError(GenerationError::Kind::invalid_argument, "held-out type set is empty");
    for (const Task& t : dataset.tasks) {
        if (t.split != Split::train) continue;
        if (std::binary_search(held.begin(), held.end(), t.init.type_id))
            throw GenerationError(GenerationError::Kind::invalid_argument,
                                  fmt::format("type {} is held out but appears in training", t.init.type_id));
    }
    Dataset out = dataset;
    std::string tag = "unseen_object:";
    for (std::size_t i = 0; i < held.size(); ++i) tag += fmt::format("{}{}", i ? "," : "", held[i]);
    out.variant = tag;
    std::size_t n = 0;
    for (Task& t : out.tasks) {
        if (t.split != Split::test) continue;
        int type = held[n++ % held.size()];
        t.init.type_id = type;
        t.goal.type_id = type;
    }
    return out;
}

/// Action families seen during unseen-task training.
inline constexpr std::array<std::array<Action, 2>, 2> kUnseenTaskTrainFamilies{{
    {Action::move_left, Action::move_front},
    {Action::move_right, Action::move_back},
}};

inline bool plan_within_training_family(std::span<const Action> plan) {
    for (const auto& family : kUnseenTaskTrainFamilies) {
        bool inside = std::all_of(plan.begin(), plan.end(), [&](Action a) {
            return std::find(family.begin(), family.end(), a) != family.end();
        });
        if (inside) return true;
    }
    return false;
}

inline bool plan_outside_training_families(std::span<const Action> plan) { return !plan_within_training_family(plan); }

/// Train/val plans use only {move_left, move_front} or only
/// {move_right, move_back}; test plans use a combination outside both.
inline Dataset make_unseen_task_split(int level, SplitCounts counts, std::uint64_t seed,
                                      std::uint64_t codebook_seed = kDefaultCodebookSeed, unsigned jobs = 1) {
    if (level != 1 && level != 2)
        throw GenerationError(GenerationError::Kind::unsupported, "unseen-task splits exist only for levels 1 and 2");
    return detail::generate_with(level, counts, seed, codebook_seed, "unseen_task", &plan_within_training_family,
                                 &plan_outside_training_families, jobs);
}

// ---------------------------------------------------------------------------
// Dataset file: schema line, config line, then one task per line.

inline constexpr std::string_view kDatasetSchema = "cctp.dataset";
inline constexpr int kDatasetVersion = 1;

namespace detail {

inline std::string format_state(std::string_view prefix, const ObjectState& s) {
    return fmt::format("{0}.type={1} {0}.x={2} {0}.y={3} {0}.rot={4} {0}.color={5} {0}.size={6}", prefix, s.type_id,
                       s.pos_x, s.pos_y, s.rotation, s.color, s.size);
}

inline ObjectState parse_state(const textio::KeyValues& kv, std::string_view prefix) {
    auto key = [&](std::string_view name) { return fmt::format("{}.{}", prefix, name); };
    ObjectState s;
    s.type_id = kv.integer(key("type"));
    s.pos_x = kv.integer(key("x"));
    s.pos_y = kv.integer(key("y"));
    s.rotation = kv.integer(key("rot"));
    s.color = kv.integer(key("color"));
    s.size = kv.integer(key("size"));
    return s;
}

inline Cell parse_cell(std::string_view s) {
    auto parts = textio::split(s, ':');
    if (parts.size() != 2) textio::malformed(fmt::format("bad cell '{}'", s));
    return {textio::parse_int<int>(parts[0]), textio::parse_int<int>(parts[1])};
}

}  // namespace detail

inline std::string format_task(const Task& t) {
    std::string obstacles;
    for (std::size_t i = 0; i < t.env.obstacles.size(); ++i)
        obstacles += fmt::format("{}{}:{}", i ? ";" : "", t.env.obstacles[i].x, t.env.obstacles[i].y);
    std::string actions;
    for (std::size_t i = 0; i < t.gt_actions.size(); ++i)
        actions += fmt::format("{}{}", i ? "," : "", to_string(t.gt_actions[i]));
    return fmt::format("task_id={} level={} split={} obstacles={} dyer={} dyer_color={} {} {} gt_actions={}",
                       t.task_id, t.env.level, to_string(t.split), obstacles.empty() ? "-" : obstacles,
                       t.env.dyer ? fmt::format("{}:{}", t.env.dyer->x, t.env.dyer->y) : "-", t.env.dyer_color,
                       detail::format_state("init", t.init), detail::format_state("goal", t.goal),
                       actions.empty() ? "-" : actions);
}

inline Task parse_task(std::string_view line) {
    auto kv = textio::KeyValues::parse(line);
    Task t;
    t.task_id = kv.str("task_id");
    auto split = parse_split(kv.str("split"));
    if (!split) textio::malformed("bad split");
    t.split = *split;
    t.env = EnvConfig::empty(kv.integer("level"));
    if (kv.str("obstacles") != "-")
        for (auto c : textio::split(kv.str("obstacles"), ';')) t.env.obstacles.push_back(detail::parse_cell(c));
    if (kv.str("dyer") != "-") t.env.dyer = detail::parse_cell(kv.str("dyer"));
    t.env.dyer_color = kv.integer("dyer_color");
    t.init = detail::parse_state(kv, "init");
    t.goal = detail::parse_state(kv, "goal");
    if (kv.str("gt_actions") != "-") {
        for (auto name : textio::split(kv.str("gt_actions"), ',')) {
            auto a = parse_action(name);
            if (!a) textio::malformed(fmt::format("unknown action '{}'", name));
            t.gt_actions.push_back(*a);
        }
    }
    return t;
}

inline std::string dataset_config_line(const Dataset& ds) {
    return fmt::format("#config level={} seed={} codebook_seed={} train={} val={} test={} variant={}\n", ds.level,
                       ds.seed, ds.codebook_seed, ds.counts.train, ds.counts.val, ds.counts.test, ds.variant);
}

inline std::string write_dataset(const Dataset& ds) {
    std::string out = textio::schema_line(kDatasetSchema, kDatasetVersion);
    out += dataset_config_line(ds);
    for (const Task& t : ds.tasks) {
        out += format_task(t);
        out += '\n';
    }
    return out;
}

inline Dataset read_dataset(std::istream& in) {
    textio::expect_schema(in, kDatasetSchema, kDatasetVersion);
    auto cfg = textio::read_config(in);
    Dataset ds;
    ds.level = cfg.integer("level");
    ds.seed = cfg.u64("seed");
    ds.codebook_seed = cfg.u64("codebook_seed");
    ds.counts = {cfg.integer("train"), cfg.integer("val"), cfg.integer("test")};
    ds.variant = cfg.str("variant");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        Task t = parse_task(line);
        if (t.env.level != ds.level) textio::malformed(fmt::format("task {} has level {}", t.task_id, t.env.level));
        ds.tasks.push_back(std::move(t));
    }
    return ds;
}

inline Dataset read_dataset(std::string_view text) {
    std::istringstream in{std::string(text)};
    return read_dataset(in);
}

}  // namespace cctp
