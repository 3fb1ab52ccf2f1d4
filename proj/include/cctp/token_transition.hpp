#pragma once

// Token-space causal transitions: one affine map per action (and, for
// change_color at dyer levels, per dyer color) over the concatenated
// 6*dim concept-token vector, fit by least squares.

#include <compare>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "cctp/concepts.hpp"
#include "cctp/mdp.hpp"
#include "cctp/symbols.hpp"
#include "cctp/textio.hpp"
#include "cctp/workbench.hpp"

namespace cctp {

inline constexpr std::size_t kMinAffinePairs = 8;
inline constexpr double kRidgeLambda = 1e-6;

/// condition = dyer color for change_color maps fit on dyer levels, -1 otherwise.
struct MapKey {
    Action action = Action::move_front;
    int condition = -1;

    auto operator<=>(const MapKey&) const = default;
};

struct AffineMap {
    Eigen::MatrixXd A;
    Vector b;
    double residual_mse = 0.0;
    std::size_t pairs = 0;
    bool ridge = false;

    Vector apply(const Vector& x) const { return A * x + b; }
};

struct ActionTransitionMaps {
    int dim = 0;
    std::map<MapKey, AffineMap> maps;

    /// Exact (action, condition) match, falling back to the unconditioned map.
    const AffineMap* find(Action a, int condition = -1) const {
        if (auto it = maps.find({a, condition}); it != maps.end()) return &it->second;
        if (auto it = maps.find({a, -1}); it != maps.end()) return &it->second;
        return nullptr;
    }

    bool has(Action a) const {
        for (const auto& [key, map] : maps)
            if (key.action == a) return true;
        return false;
    }
};

struct TokenPair {
    ConceptTokens before;
    ConceptTokens after;
};

using TokenPairsByKey = std::map<MapKey, std::vector<TokenPair>>;

class TransitionFitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Solves min ||[x 1] W - y||^2 through the normal equations. Falls back to
/// ridge (lambda on the linear part only) when there are fewer than D+1
/// pairs or the Gram matrix is numerically singular.
inline AffineMap fit_affine_map(std::span<const TokenPair> pairs) {
    if (pairs.size() < kMinAffinePairs)
        throw TransitionFitError(fmt::format("need at least {} pairs, got {}", kMinAffinePairs, pairs.size()));
    const Eigen::Index d = pairs[0].before.dim() * kNumConcepts;
    const auto n = static_cast<Eigen::Index>(pairs.size());
    Eigen::MatrixXd X(n, d + 1), Y(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
        X.row(i).head(d) = pairs[static_cast<std::size_t>(i)].before.concatenated().transpose();
        X(i, d) = 1.0;
        Y.row(i) = pairs[static_cast<std::size_t>(i)].after.concatenated().transpose();
    }
    Eigen::MatrixXd gram = X.transpose() * X;
    Eigen::MatrixXd rhs = X.transpose() * Y;

    AffineMap map;
    map.pairs = pairs.size();
    Eigen::MatrixXd W;
    bool solved = false;
    if (n >= d + 1) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
        const Eigen::VectorXd diag = ldlt.vectorD().cwiseAbs();
        if (ldlt.info() == Eigen::Success && diag.minCoeff() > 1e-10 * diag.maxCoeff()) {
            W = ldlt.solve(rhs);
            solved = true;
        }
    }
    if (!solved) {
        gram.diagonal().head(d).array() += kRidgeLambda;
        W = gram.ldlt().solve(rhs);
        map.ridge = true;
    }
    map.A = W.topRows(d).transpose();
    map.b = W.row(d).transpose();
    map.residual_mse = (X * W - Y).squaredNorm() / static_cast<double>(n * d);
    return map;
}

inline ActionTransitionMaps fit_affine(const TokenPairsByKey& pairs) {
    ActionTransitionMaps out;
    for (const auto& [key, list] : pairs) {
        if (list.empty()) continue;
        if (out.dim == 0) out.dim = list.front().before.dim();
        out.maps.emplace(key, fit_affine_map(list));
    }
    if (out.maps.empty()) throw TransitionFitError("no token pairs to fit");
    return out;
}

inline ConceptTokens transition(const ConceptTokens& tokens, Action a, const ActionTransitionMaps& maps,
                                int condition = -1) {
    const AffineMap* m = maps.find(a, condition);
    if (!m) throw PlanningError(PlanningError::Kind::unknown_action, fmt::format("no map for {}", to_string(a)));
    return ConceptTokens::split(m->apply(tokens.concatenated()));
}

/// All intermediate token states, starting with `tokens`.
inline std::vector<ConceptTokens> rollout(const ConceptTokens& tokens, std::span<const Action> actions,
                                          const ActionTransitionMaps& maps, int condition = -1) {
    std::vector<ConceptTokens> out{tokens};
    out.reserve(actions.size() + 1);
    for (std::size_t i = 0; i < actions.size(); ++i) {
        const AffineMap* m = maps.find(actions[i], condition);
        if (!m)
            throw PlanningError(PlanningError::Kind::unknown_action,
                                fmt::format("no map for {} at step {}", to_string(actions[i]), i));
        out.push_back(ConceptTokens::split(m->apply(out.back().concatenated())));
    }
    return out;
}

inline double token_mse(const ConceptTokens& pred, const ConceptTokens& truth) {
    if (pred.dim() != truth.dim()) throw std::invalid_argument("token dims differ");
    return (pred.concatenated() - truth.concatenated()).squaredNorm() / static_cast<double>(kNumConcepts * pred.dim());
}

namespace detail {

struct TokenNode {
    SymbolState state;  // snapped
    std::vector<Action> actions;
    double score = 0.0;  // negative distance to goal tokens
    Vector flat;
};

}  // namespace detail

/// Search directly in token space. States are advanced with the affine maps
/// and snapped to symbols only to key the visited set and to check the
/// environment masks; candidates are ranked by closeness to the goal tokens.
/// There is no learned action-legality filter here.
inline PlanResult plan_tokenspace(const ActionTransitionMaps& maps, const ConceptTokens& init,
                                  const ConceptTokens& goal, const Symbolizer& symbolizer, const SymbolMasks& masks,
                                  int top_k = kDefaultTopK, int max_len = kDefaultMaxPlanLength, int condition = -1) {
    const SymbolState init_sym = symbolize(init, symbolizer);
    const SymbolState goal_sym = symbolize(goal, symbolizer);
    if (!masks.position_valid(init_sym[Concept::pos_x], init_sym[Concept::pos_y]))
        throw PlanningError(PlanningError::Kind::invalid_init, "initial symbol state is invalid under env masks");
    const Vector goal_flat = goal.concatenated();
    Vector init_flat = init.concatenated();
    const double init_score = -(init_flat - goal_flat).norm();

    PlanResult result = detail::layered_search<SymbolState>(
        detail::TokenNode{init_sym, {}, init_score, std::move(init_flat)}, top_k, max_len,
        [](const detail::TokenNode& n, int) { return n.state; },
        [&](const detail::TokenNode& n) { return changeable_match(n.state, goal_sym); },
        [&](const detail::TokenNode& n, std::vector<detail::TokenNode>& out) {
            for (Action a : kAllActions) {
                const AffineMap* m = maps.find(a, condition);
                if (!m) continue;
                Vector next = m->apply(n.flat);
                ConceptTokens t = ConceptTokens::split(next);
                SymbolState s = symbolize(t, symbolizer);
                if (!masks.position_valid(s[Concept::pos_x], s[Concept::pos_y], a)) continue;
                if (!masks.concept_valid(Concept::color, s[Concept::color], a)) continue;
                detail::TokenNode child{s, n.actions, -(next - goal_flat).norm(), std::move(next)};
                child.actions.push_back(a);
                out.push_back(std::move(child));
            }
        });
    result.type_size_mismatch =
        init_sym[Concept::type] != goal_sym[Concept::type] || init_sym[Concept::size] != goal_sym[Concept::size];
    if (result.plans.empty())
        throw PlanningError(PlanningError::Kind::no_plan_found, fmt::format("no token-space plan within {} steps", max_len));
    return result;
}

// ---------------------------------------------------------------------------
// Maps file

inline constexpr std::string_view kMapsSchema = "cctp.action-maps";
inline constexpr int kMapsVersion = 1;

inline std::string write_maps(const ActionTransitionMaps& maps, std::string_view config = {}) {
    std::string out = textio::schema_line(kMapsSchema, kMapsVersion);
    out += fmt::format("#config dim={}{}{}\n", maps.dim, config.empty() ? "" : " ", config);
    for (const auto& [key, m] : maps.maps) {
        out += fmt::format("map action={} condition={} pairs={} ridge={} residual_mse={}\n", to_string(key.action),
                           key.condition, m.pairs, m.ridge ? 1 : 0, textio::fmt_double(m.residual_mse));
        for (Eigen::Index r = 0; r < m.A.rows(); ++r) out += fmt::format("row {}\n", format_vector(m.A.row(r).transpose()));
        out += fmt::format("offset {}\n", format_vector(m.b));
    }
    return out;
}

struct MapsFile {
    ActionTransitionMaps maps;
    textio::KeyValues config;
};

inline MapsFile read_maps(std::istream& in) {
    textio::expect_schema(in, kMapsSchema, kMapsVersion);
    MapsFile file;
    file.config = textio::read_config(in);
    file.maps.dim = file.config.integer("dim");
    const int d = file.maps.dim * kNumConcepts;
    AffineMap* current = nullptr;
    Eigen::Index row = 0;
    std::string line;
    while (std::getline(in, line)) {
        auto f = textio::fields(line);
        if (f.empty()) continue;
        if (f[0] == "map") {
            auto kv = textio::KeyValues::parse(std::string_view(line).substr(3));
            auto a = parse_action(kv.str("action"));
            if (!a) textio::malformed("unknown action in maps file");
            AffineMap m;
            m.A = Eigen::MatrixXd::Zero(d, d);
            m.b = Vector::Zero(d);
            m.pairs = kv.u64("pairs");
            m.ridge = kv.integer("ridge") != 0;
            m.residual_mse = kv.number("residual_mse");
            current = &file.maps.maps.insert_or_assign(MapKey{*a, kv.integer("condition")}, std::move(m)).first->second;
            row = 0;
        } else if (f[0] == "row" && current) {
            if (row >= d) textio::malformed("too many map rows");
            current->A.row(row++) = parse_vector(std::span(f).subspan(1), d).transpose();
        } else if (f[0] == "offset" && current) {
            if (row != d) textio::malformed("map has missing rows");
            current->b = parse_vector(std::span(f).subspan(1), d);
        } else {
            textio::malformed(fmt::format("unexpected maps line '{}'", f[0]));
        }
    }
    return file;
}

inline MapsFile read_maps(std::string_view text) {
    std::istringstream in{std::string(text)};
    return read_maps(in);
}

}  // namespace cctp
