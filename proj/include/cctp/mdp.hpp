#pragma once

// Symbol-level MDP: transition counts recorded from (state, action, next)
// triplets, distribution propagation with action- and state-legality
// masking, and k-best plan search over MAP successor states.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "cctp/concepts.hpp"
#include "cctp/symbols.hpp"
#include "cctp/textio.hpp"
#include "cctp/workbench.hpp"

namespace cctp {

inline constexpr double kDefaultThresh = 0.01;

class PlanningError : public std::runtime_error {
public:
    enum class Kind { no_plan_found, invalid_init, dead_distribution, unknown_action };

    PlanningError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class TransitionModel {
public:
    TransitionModel() = default;
    TransitionModel(const Cardinalities& cards, double thresh) : cards_(cards), thresh_(thresh) {
        if (!(thresh > 0.0 && thresh < 1.0)) throw std::invalid_argument("thresh must lie in (0, 1)");
        for (int k = 0; k < kNumConcepts; ++k) {
            const auto n = static_cast<std::size_t>(cards[static_cast<std::size_t>(k)]);
            for (auto& m : counts_[static_cast<std::size_t>(k)]) m.assign(n * n, 0);
            occurrences_[static_cast<std::size_t>(k)].assign(n * kNumActions, 0);
        }
        refresh();
    }

    const Cardinalities& cardinalities() const noexcept { return cards_; }
    int cardinality(Concept c) const { return cards_[static_cast<std::size_t>(index_of(c))]; }
    double thresh() const noexcept { return thresh_; }

    /// N_k[a][from][to]
    std::uint64_t count(Concept c, Action a, int from, int to) const {
        return counts_[ki(c)][static_cast<std::size_t>(index_of(a))][cell(c, from, to)];
    }
    /// M_k[from][a]
    std::uint64_t occurrence(Concept c, int from, Action a) const {
        return occurrences_[ki(c)][static_cast<std::size_t>(from * kNumActions + index_of(a))];
    }

    void add(Concept c, Action a, int from, int to, std::uint64_t n = 1) {
        counts_[ki(c)][static_cast<std::size_t>(index_of(a))][cell(c, from, to)] += n;
    }
    void add_occurrence(Concept c, int from, Action a, std::uint64_t n = 1) {
        occurrences_[ki(c)][static_cast<std::size_t>(from * kNumActions + index_of(a))] += n;
    }

    /// Recomputes normalized tables from counts; call after add().
    void refresh() {
        for (int k = 0; k < kNumConcepts; ++k) {
            const int n = cards_[static_cast<std::size_t>(k)];
            auto c = static_cast<Concept>(k);
            for (int a = 0; a < kNumActions; ++a) {
                auto& probs = probs_[static_cast<std::size_t>(k)][static_cast<std::size_t>(a)];
                probs.assign(static_cast<std::size_t>(n * n), 0.0);
                for (int from = 0; from < n; ++from) {
                    std::uint64_t total = 0;
                    for (int to = 0; to < n; ++to) total += count(c, static_cast<Action>(a), from, to);
                    if (total == 0) continue;
                    for (int to = 0; to < n; ++to)
                        probs[cell(c, from, to)] =
                            static_cast<double>(count(c, static_cast<Action>(a), from, to)) / static_cast<double>(total);
                }
            }
            auto& legal = legal_[static_cast<std::size_t>(k)];
            legal.assign(static_cast<std::size_t>(n * kNumActions), 0);
            for (int from = 0; from < n; ++from) {
                std::uint64_t total = 0;
                for (Action a : kAllActions) total += occurrence(c, from, a);
                if (total == 0) continue;
                for (Action a : kAllActions) {
                    double p = static_cast<double>(occurrence(c, from, a)) / static_cast<double>(total);
                    legal[static_cast<std::size_t>(from * kNumActions + index_of(a))] = p > thresh_ ? 1 : 0;
                }
            }
        }
    }

    /// Pr[to | a, from]; zero for rows never observed.
    double transition_prob(Concept c, Action a, int from, int to) const {
        return probs_[ki(c)][static_cast<std::size_t>(index_of(a))][cell(c, from, to)];
    }

    /// Pr[a | from] for one concept; zero when the symbol was never observed.
    double action_prob(Concept c, int from, Action a) const {
        std::uint64_t total = 0;
        for (Action b : kAllActions) total += occurrence(c, from, b);
        return total == 0 ? 0.0 : static_cast<double>(occurrence(c, from, a)) / static_cast<double>(total);
    }

    /// Per-concept legality indicator Pr[a | from] > thresh.
    bool legal_at(Concept c, int from, Action a) const {
        return legal_[ki(c)][static_cast<std::size_t>(from * kNumActions + index_of(a))] != 0;
    }

    bool operator==(const TransitionModel& o) const {
        return cards_ == o.cards_ && thresh_ == o.thresh_ && counts_ == o.counts_ && occurrences_ == o.occurrences_;
    }

private:
    static std::size_t ki(Concept c) { return static_cast<std::size_t>(index_of(c)); }
    std::size_t cell(Concept c, int from, int to) const {
        return static_cast<std::size_t>(from * cards_[ki(c)] + to);
    }

    Cardinalities cards_{};
    double thresh_ = kDefaultThresh;
    std::array<std::array<std::vector<std::uint64_t>, kNumActions>, kNumConcepts> counts_;
    std::array<std::vector<std::uint64_t>, kNumConcepts> occurrences_;
    std::array<std::array<std::vector<double>, kNumActions>, kNumConcepts> probs_;
    std::array<std::vector<char>, kNumConcepts> legal_;
};

struct Triplet {
    SymbolState before;
    Action action = Action::move_front;
    SymbolState after;
};

inline TransitionModel fit_transitions(std::span<const Triplet> triplets, const Cardinalities& cards,
                                       double thresh = kDefaultThresh) {
    if (triplets.empty()) throw std::invalid_argument("fit_transitions needs triplets");
    TransitionModel m(cards, thresh);
    for (const Triplet& t : triplets) {
        for (Concept c : kAllConcepts) {
            const int from = t.before[c];
            const int to = t.after[c];
            if (from < 0 || from >= m.cardinality(c) || to < 0 || to >= m.cardinality(c))
                throw std::invalid_argument(fmt::format("{} symbol out of range", to_string(c)));
            m.add(c, t.action, from, to);
            m.add_occurrence(c, from, t.action);
        }
    }
    m.refresh();
    return m;
}

/// Conjunction of the per-concept legality indicators.
inline bool action_legal(const TransitionModel& m, const SymbolState& s, Action a) {
    for (Concept c : kAllConcepts)
        if (!m.legal_at(c, s[c], a)) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Environment masks

/// Ground-truth value space: which grid cells the object may occupy.
struct StateMask {
    std::array<std::array<bool, kGridHeight>, kGridWidth> cells{};
    std::optional<Cell> dyer;
    int dyer_color = 0;

    int valid_cell_count() const {
        int n = 0;
        for (const auto& col : cells)
            for (bool v : col) n += v ? 1 : 0;
        return n;
    }
    bool valid(Cell c) const { return on_grid(c) && cells[static_cast<std::size_t>(c.x)][static_cast<std::size_t>(c.y)]; }
};

inline StateMask state_mask(const EnvConfig& env) {
    StateMask m;
    for (int x = 0; x < kGridWidth; ++x)
        for (int y = 0; y < kGridHeight; ++y) m.cells[static_cast<std::size_t>(x)][static_cast<std::size_t>(y)] = !env.blocked({x, y});
    m.dyer = env.dyer;
    m.dyer_color = env.dyer_color;
    return m;
}

/// Environment masks in symbol space. Position validity is joint over
/// (POSITION_X, POSITION_Y). change_color additionally requires a
/// dyer-adjacent position and forces COLOR to the dyer's color symbol.
struct SymbolMasks {
    Cardinalities cards{};
    std::vector<char> position;       // [sx * cards[pos_y] + sy]
    std::vector<char> dyer_adjacent;  // same layout
    int dyer_color = -1;              // symbol, -1 without dyer

    int ny() const { return cards[static_cast<std::size_t>(index_of(Concept::pos_y))]; }
    int nx() const { return cards[static_cast<std::size_t>(index_of(Concept::pos_x))]; }

    bool position_valid(int sx, int sy) const { return position[static_cast<std::size_t>(sx * ny() + sy)] != 0; }

    bool position_valid(int sx, int sy, Action a) const {
        if (!position_valid(sx, sy)) return false;
        return a != Action::change_color || dyer_adjacent[static_cast<std::size_t>(sx * ny() + sy)] != 0;
    }

    bool concept_valid(Concept c, int symbol, Action a) const {
        return !(c == Concept::color && a == Action::change_color) || symbol == dyer_color;
    }

    int valid_cell_count() const {
        int n = 0;
        for (char v : position) n += v ? 1 : 0;
        return n;
    }

    /// Maps a value-space mask through value_to_symbol. A symbol cell is
    /// valid when any value cell mapping onto it is valid.
    static SymbolMasks from_state_mask(const StateMask& m, const ValueSymbolMap& vs, const Cardinalities& cards) {
        SymbolMasks out;
        out.cards = cards;
        const auto n = static_cast<std::size_t>(out.nx() * out.ny());
        out.position.assign(n, 0);
        out.dyer_adjacent.assign(n, 0);
        const auto& xs = vs[static_cast<std::size_t>(index_of(Concept::pos_x))];
        const auto& ys = vs[static_cast<std::size_t>(index_of(Concept::pos_y))];
        for (int x = 0; x < kGridWidth; ++x)
            for (int y = 0; y < kGridHeight; ++y) {
                const auto idx = static_cast<std::size_t>(xs[static_cast<std::size_t>(x)] * out.ny() + ys[static_cast<std::size_t>(y)]);
                if (!m.valid({x, y})) continue;
                out.position[idx] = 1;
                if (m.dyer && manhattan(*m.dyer, {x, y}) == 1) out.dyer_adjacent[idx] = 1;
            }
        if (m.dyer) out.dyer_color = vs[static_cast<std::size_t>(index_of(Concept::color))][static_cast<std::size_t>(m.dyer_color)];
        return out;
    }

    /// Symbols equal ground-truth values.
    static SymbolMasks identity(const StateMask& m, const Cardinalities& cards = kConceptCardinalities) {
        ValueSymbolMap vs;
        for (int k = 0; k < kNumConcepts; ++k) {
            const int n = cards[static_cast<std::size_t>(k)];
            for (int v = 0; v < n; ++v) vs[static_cast<std::size_t>(k)].push_back(v);
        }
        return from_state_mask(m, vs, cards);
    }
};

// ---------------------------------------------------------------------------
// Distribution propagation

struct SymbolDistribution {
    std::array<std::vector<double>, kNumConcepts> probs;

    const std::vector<double>& operator[](Concept c) const { return probs[static_cast<std::size_t>(index_of(c))]; }
    std::vector<double>& operator[](Concept c) { return probs[static_cast<std::size_t>(index_of(c))]; }

    static SymbolDistribution point_mass(const SymbolState& s, const Cardinalities& cards) {
        SymbolDistribution d;
        for (Concept c : kAllConcepts) {
            auto& p = d[c];
            p.assign(static_cast<std::size_t>(cards[static_cast<std::size_t>(index_of(c))]), 0.0);
            p.at(static_cast<std::size_t>(s[c])) = 1.0;
        }
        return d;
    }

    /// Per-concept argmax, lowest symbol on ties.
    SymbolState map_state() const {
        SymbolState s;
        for (Concept c : kAllConcepts) {
            const auto& p = (*this)[c];
            s[c] = static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
        }
        return s;
    }

    /// Product over concepts of the largest probability.
    double map_probability() const {
        double prob = 1.0;
        for (Concept c : kAllConcepts) prob *= *std::max_element((*this)[c].begin(), (*this)[c].end());
        return prob;
    }
};

/// One step of masked propagation. Per concept: drop source mass where the
/// action is illegal, push the rest through the transition matrix, zero
/// invalid destinations and renormalize. Position validity is applied to the
/// joint (x, y) product and marginalized back. Returns nullopt when any
/// concept loses all its mass.
inline std::optional<SymbolDistribution> try_propagate(const SymbolDistribution& dist, Action a,
                                                       const TransitionModel& m, const SymbolMasks& masks) {
    SymbolDistribution out;
    for (Concept c : kAllConcepts) {
        const int n = m.cardinality(c);
        const auto& src = dist[c];
        auto& q = out[c];
        q.assign(static_cast<std::size_t>(n), 0.0);
        for (int o = 0; o < n; ++o) {
            const double w = src[static_cast<std::size_t>(o)];
            if (w == 0.0 || !m.legal_at(c, o, a)) continue;
            for (int to = 0; to < n; ++to) q[static_cast<std::size_t>(to)] += w * m.transition_prob(c, a, o, to);
        }
        if (c == Concept::pos_x || c == Concept::pos_y) continue;
        double total = 0.0;
        for (int s = 0; s < n; ++s) {
            if (!masks.concept_valid(c, s, a)) q[static_cast<std::size_t>(s)] = 0.0;
            total += q[static_cast<std::size_t>(s)];
        }
        if (total <= 0.0) return std::nullopt;
        for (double& v : q) v /= total;
    }

    auto& qx = out[Concept::pos_x];
    auto& qy = out[Concept::pos_y];
    std::vector<double> mx(qx.size(), 0.0), my(qy.size(), 0.0);
    double z = 0.0;
    for (std::size_t x = 0; x < qx.size(); ++x)
        for (std::size_t y = 0; y < qy.size(); ++y) {
            if (!masks.position_valid(static_cast<int>(x), static_cast<int>(y), a)) continue;
            const double j = qx[x] * qy[y];
            mx[x] += j;
            my[y] += j;
            z += j;
        }
    if (z <= 0.0) return std::nullopt;
    for (auto& v : mx) v /= z;
    for (auto& v : my) v /= z;
    qx = std::move(mx);
    qy = std::move(my);
    return out;
}

inline SymbolDistribution propagate(const SymbolDistribution& dist, Action a, const TransitionModel& m,
                                    const SymbolMasks& masks) {
    auto out = try_propagate(dist, a, m, masks);
    if (!out)
        throw PlanningError(PlanningError::Kind::dead_distribution,
                            fmt::format("{} eliminates all probability mass", to_string(a)));
    return *std::move(out);
}

// ---------------------------------------------------------------------------
// Plan search

struct RankedPlan {
    std::vector<Action> actions;
    double score = 1.0;
};

struct PlanResult {
    std::vector<RankedPlan> plans;  // ordered by (length ascending, score descending)
    bool type_size_mismatch = false;
    std::size_t expansions = 0;
};

inline constexpr int kDefaultTopK = 5;
inline constexpr int kDefaultMaxPlanLength = 16;

namespace detail {

struct SearchNode {
    SymbolState state;
    std::vector<Action> actions;
    double score = 1.0;
};

/// Layer order: score descending, then action sequence in kAllActions order.
template <typename Node>
bool node_before(const Node& a, const Node& b) {
    if (a.score != b.score) return a.score > b.score;
    return std::lexicographical_compare(a.actions.begin(), a.actions.end(), b.actions.begin(), b.actions.end(),
                                        [](Action x, Action y) { return index_of(x) < index_of(y); });
}

/// Breadth-first k-best search shared by the symbolic and token-space
/// planners. Every plan has unit step cost, so layers are expanded in order
/// of length; within a layer nodes are ranked by score. A node is dropped
/// once K nodes with the same dominance key have been expanded.
template <typename Key, typename Node, typename KeyOf, typename IsGoal, typename Expand>
PlanResult layered_search(Node root, int top_k, int max_len, KeyOf key_of, IsGoal is_goal, Expand expand) {
    if (top_k < 1) throw std::invalid_argument("K must be >= 1");
    PlanResult result;
    std::map<Key, int> expanded;
    std::vector<Node> layer;
    layer.push_back(std::move(root));
    for (int len = 0; len <= max_len && !layer.empty(); ++len) {
        std::stable_sort(layer.begin(), layer.end(), node_before<Node>);
        std::vector<Node> next;
        for (Node& node : layer) {
            int& seen = expanded[key_of(node, len)];
            if (seen >= top_k) continue;
            ++seen;
            ++result.expansions;
            if (is_goal(node)) {
                result.plans.push_back({node.actions, node.score});
                if (static_cast<int>(result.plans.size()) == top_k) return result;
                continue;
            }
            if (len < max_len) expand(node, next);
        }
        layer = std::move(next);
    }
    return result;
}

}  // namespace detail

/// Goal-conditioned k-best planning over MAP symbol states. From each state
/// every action is propagated from a point mass; a dead distribution means
/// the action is illegal there, otherwise the argmax successor becomes the
/// child and its MAP probability multiplies into the score.
inline PlanResult plan(const TransitionModel& m, const SymbolState& init, const SymbolState& goal,
                       const SymbolMasks& masks, int top_k = kDefaultTopK, int max_len = kDefaultMaxPlanLength) {
    if (!masks.position_valid(init[Concept::pos_x], init[Concept::pos_y]))
        throw PlanningError(PlanningError::Kind::invalid_init, "initial symbol state is invalid under env masks");

    std::map<std::pair<SymbolState, int>, std::optional<std::pair<SymbolState, double>>> memo;
    auto step = [&](const SymbolState& s, Action a) -> const std::optional<std::pair<SymbolState, double>>& {
        auto [it, fresh] = memo.try_emplace({s, index_of(a)});
        if (fresh) {
            auto d = try_propagate(SymbolDistribution::point_mass(s, m.cardinalities()), a, m, masks);
            if (d) it->second = std::make_pair(d->map_state(), d->map_probability());
        }
        return it->second;
    };

    PlanResult result = detail::layered_search<std::pair<SymbolState, int>>(
        detail::SearchNode{init, {}, 1.0}, top_k, max_len,
        [](const detail::SearchNode& n, int len) { return std::make_pair(n.state, len); },
        [&](const detail::SearchNode& n) { return changeable_match(n.state, goal); },
        [&](const detail::SearchNode& n, std::vector<detail::SearchNode>& out) {
            for (Action a : kAllActions) {
                const auto& succ = step(n.state, a);
                if (!succ) continue;
                detail::SearchNode child{succ->first, n.actions, n.score * succ->second};
                child.actions.push_back(a);
                out.push_back(std::move(child));
            }
        });
    result.type_size_mismatch = init[Concept::type] != goal[Concept::type] || init[Concept::size] != goal[Concept::size];
    if (result.plans.empty())
        throw PlanningError(PlanningError::Kind::no_plan_found, fmt::format("no plan within {} steps", max_len));
    return result;
}

// ---------------------------------------------------------------------------
// Model file: sparse count triples plus occurrence tables.

inline constexpr std::string_view kModelSchema = "cctp.transition-model";
inline constexpr int kModelVersion = 1;

inline std::string write_model(const TransitionModel& m, std::string_view config = {}) {
    std::string out = textio::schema_line(kModelSchema, kModelVersion);
    const auto& cards = m.cardinalities();
    out += fmt::format("#config thresh={} cards={},{},{},{},{},{}{}{}\n", textio::fmt_double(m.thresh()), cards[0],
                       cards[1], cards[2], cards[3], cards[4], cards[5], config.empty() ? "" : " ", config);
    for (Concept c : kAllConcepts)
        for (Action a : kAllActions)
            for (int from = 0; from < m.cardinality(c); ++from)
                for (int to = 0; to < m.cardinality(c); ++to)
                    if (auto n = m.count(c, a, from, to))
                        out += fmt::format("count {} {} {} {} {}\n", index_of(c), to_string(a), from, to, n);
    for (Concept c : kAllConcepts)
        for (int from = 0; from < m.cardinality(c); ++from)
            for (Action a : kAllActions)
                if (auto n = m.occurrence(c, from, a))
                    out += fmt::format("occurrence {} {} {} {}\n", index_of(c), from, to_string(a), n);
    return out;
}

struct ModelFile {
    TransitionModel model;
    textio::KeyValues config;
};

inline ModelFile read_model(std::istream& in) {
    textio::expect_schema(in, kModelSchema, kModelVersion);
    ModelFile file;
    file.config = textio::read_config(in);
    Cardinalities cards{};
    auto parts = textio::split(file.config.str("cards"), ',');
    if (parts.size() != kNumConcepts) textio::malformed("cards must list 6 cardinalities");
    for (std::size_t k = 0; k < kNumConcepts; ++k) cards[k] = textio::parse_int<int>(parts[k]);
    TransitionModel m(cards, file.config.number("thresh"));
    auto concept_at = [](std::string_view s) {
        auto k = textio::parse_int<int>(s);
        if (k < 0 || k >= kNumConcepts) textio::malformed("concept index out of range");
        return static_cast<Concept>(k);
    };
    auto action_at = [](std::string_view s) {
        auto a = parse_action(s);
        if (!a) textio::malformed(fmt::format("unknown action '{}'", s));
        return *a;
    };
    auto symbol_at = [&](Concept c, std::string_view s) {
        auto v = textio::parse_int<int>(s);
        if (v < 0 || v >= m.cardinality(c)) textio::malformed("symbol out of range");
        return v;
    };
    std::string line;
    while (std::getline(in, line)) {
        auto f = textio::fields(line);
        if (f.empty()) continue;
        if (f[0] == "count" && f.size() == 6) {
            Concept c = concept_at(f[1]);
            m.add(c, action_at(f[2]), symbol_at(c, f[3]), symbol_at(c, f[4]), textio::parse_int<std::uint64_t>(f[5]));
        } else if (f[0] == "occurrence" && f.size() == 5) {
            Concept c = concept_at(f[1]);
            m.add_occurrence(c, symbol_at(c, f[2]), action_at(f[3]), textio::parse_int<std::uint64_t>(f[4]));
        } else {
            textio::malformed(fmt::format("unexpected model line '{}'", line));
        }
    }
    m.refresh();
    file.model = std::move(m);
    return file;
}

inline ModelFile read_model(std::string_view text) {
    std::istringstream in{std::string(text)};
    return read_model(in);
}

}  // namespace cctp
