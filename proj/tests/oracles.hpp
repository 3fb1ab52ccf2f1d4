#pragma once

// Independent reference computations used only by the tests.

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "cctp/cctp.hpp"

namespace oracle {

using namespace cctp;

// Grid states as (x, y, rotation index, color), enumerated in a flat array.
inline constexpr int kStates = kGridWidth * kGridHeight * kNumRotations * kNumColors;

inline int flat(const ObjectState& s) {
    return ((s.pos_x * kGridHeight + s.pos_y) * kNumRotations + s.rotation / 90) * kNumColors + s.color;
}

inline ObjectState unflat(int i, const ObjectState& proto) {
    ObjectState s = proto;
    s.color = i % kNumColors;
    i /= kNumColors;
    s.rotation = (i % kNumRotations) * 90;
    i /= kNumRotations;
    s.pos_y = i % kGridHeight;
    s.pos_x = i / kGridHeight;
    return s;
}

/// Steps-to-goal for every state by repeated relaxation until nothing
/// changes (no queue, no parent pointers). -1 where the goal is unreachable.
inline std::vector<int> relaxed_distances(const EnvConfig& env, const ObjectState& goal) {
    constexpr int inf = std::numeric_limits<int>::max() / 2;
    std::vector<int> dist(kStates, inf);
    for (int i = 0; i < kStates; ++i) {
        ObjectState s = unflat(i, goal);
        if (is_valid_state(s, env) && goal_reached(s, goal, env.level)) dist[static_cast<std::size_t>(i)] = 0;
    }
    bool changed = true;
    while (changed) {
        changed = false;
        for (int i = 0; i < kStates; ++i) {
            ObjectState s = unflat(i, goal);
            if (!is_valid_state(s, env)) continue;
            for (Action a : kAllActions) {
                StepOutcome out = try_apply(s, a, env);
                if (!out.ok()) continue;
                int via = dist[static_cast<std::size_t>(flat(out.state))] + 1;
                if (via < dist[static_cast<std::size_t>(i)]) {
                    dist[static_cast<std::size_t>(i)] = via;
                    changed = true;
                }
            }
        }
    }
    for (int& d : dist)
        if (d >= inf) d = -1;
    return dist;
}

/// True when some action sequence of exactly `depth` steps solves the task.
inline bool solvable_in(const Task& t, const ObjectState& s, int depth) {
    if (depth == 0) return goal_reached(s, t.goal, t.level());
    for (Action a : kAllActions) {
        StepOutcome out = try_apply(s, a, t.env);
        if (out.ok() && solvable_in(t, out.state, depth - 1)) return true;
    }
    return false;
}

// ---------------------------------------------------------------------------
// Propagation written directly from the count tables.

struct SymbolEnv {
    Cardinalities cards{};
    std::vector<std::vector<bool>> cell;      // [sx][sy]
    std::vector<std::vector<bool>> adjacent;  // [sx][sy]
    int dyer_color = -1;
};

inline SymbolEnv symbol_env(const EnvConfig& env, const ValueSymbolMap& vs, const Cardinalities& cards) {
    SymbolEnv out;
    out.cards = cards;
    const auto nx = static_cast<std::size_t>(cards[1]), ny = static_cast<std::size_t>(cards[2]);
    out.cell.assign(nx, std::vector<bool>(ny, false));
    out.adjacent.assign(nx, std::vector<bool>(ny, false));
    for (int x = 0; x < kGridWidth; ++x)
        for (int y = 0; y < kGridHeight; ++y) {
            if (env.blocked({x, y})) continue;
            const auto sx = static_cast<std::size_t>(vs[1][static_cast<std::size_t>(x)]);
            const auto sy = static_cast<std::size_t>(vs[2][static_cast<std::size_t>(y)]);
            out.cell[sx][sy] = true;
            if (env.dyer && std::abs(env.dyer->x - x) + std::abs(env.dyer->y - y) == 1) out.adjacent[sx][sy] = true;
        }
    if (env.dyer) out.dyer_color = vs[4][static_cast<std::size_t>(env.dyer_color)];
    return out;
}

inline double ratio(std::uint64_t num, std::uint64_t den) {
    return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

inline bool legal(const TransitionModel& m, Concept c, int from, Action a) {
    std::uint64_t total = 0;
    for (Action b : kAllActions) total += m.occurrence(c, from, b);
    return ratio(m.occurrence(c, from, a), total) > m.thresh();
}

inline double step_prob(const TransitionModel& m, Concept c, Action a, int from, int to) {
    std::uint64_t total = 0;
    for (int t = 0; t < m.cardinality(c); ++t) total += m.count(c, a, from, t);
    return ratio(m.count(c, a, from, to), total);
}

using Marginals = std::array<std::vector<double>, kNumConcepts>;

/// One masked step. nullopt when the action kills the distribution.
inline std::optional<Marginals> step(const Marginals& p, Action a, const TransitionModel& m, const SymbolEnv& env) {
    Marginals q;
    for (Concept c : {Concept::type, Concept::rotation, Concept::color, Concept::size}) {
        const auto k = static_cast<std::size_t>(index_of(c));
        const int n = m.cardinality(c);
        q[k].assign(static_cast<std::size_t>(n), 0.0);
        double z = 0.0;
        for (int to = 0; to < n; ++to) {
            if (c == Concept::color && a == Action::change_color && to != env.dyer_color) continue;
            double v = 0.0;
            for (int from = 0; from < n; ++from)
                if (legal(m, c, from, a)) v += p[k][static_cast<std::size_t>(from)] * step_prob(m, c, a, from, to);
            q[k][static_cast<std::size_t>(to)] = v;
            z += v;
        }
        if (z <= 0.0) return std::nullopt;
        for (double& v : q[k]) v /= z;
    }
    // Joint over (x, y) sources and destinations.
    const int nx = m.cardinality(Concept::pos_x), ny = m.cardinality(Concept::pos_y);
    q[1].assign(static_cast<std::size_t>(nx), 0.0);
    q[2].assign(static_cast<std::size_t>(ny), 0.0);
    double z = 0.0;
    for (int ox = 0; ox < nx; ++ox)
        for (int oy = 0; oy < ny; ++oy) {
            if (!legal(m, Concept::pos_x, ox, a) || !legal(m, Concept::pos_y, oy, a)) continue;
            const double w = p[1][static_cast<std::size_t>(ox)] * p[2][static_cast<std::size_t>(oy)];
            if (w == 0.0) continue;
            for (int tx = 0; tx < nx; ++tx)
                for (int ty = 0; ty < ny; ++ty) {
                    const auto ux = static_cast<std::size_t>(tx), uy = static_cast<std::size_t>(ty);
                    if (!env.cell[ux][uy]) continue;
                    if (a == Action::change_color && !env.adjacent[ux][uy]) continue;
                    const double v = w * step_prob(m, Concept::pos_x, a, ox, tx) * step_prob(m, Concept::pos_y, a, oy, ty);
                    q[1][ux] += v;
                    q[2][uy] += v;
                    z += v;
                }
        }
    if (z <= 0.0) return std::nullopt;
    for (double& v : q[1]) v /= z;
    for (double& v : q[2]) v /= z;
    return q;
}

inline Marginals point(const SymbolState& s, const Cardinalities& cards) {
    Marginals p;
    for (int k = 0; k < kNumConcepts; ++k) {
        p[static_cast<std::size_t>(k)].assign(static_cast<std::size_t>(cards[static_cast<std::size_t>(k)]), 0.0);
        p[static_cast<std::size_t>(k)][static_cast<std::size_t>(s.symbols[static_cast<std::size_t>(k)])] = 1.0;
    }
    return p;
}

}  // namespace oracle
