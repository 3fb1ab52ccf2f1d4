#pragma once

// Evaluation harness: ASAcc (top-1/top-5), ASE, FSD, the chance baseline,
// full experiment runs and the displacement (interpretability) tables.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "cctp/concepts.hpp"
#include "cctp/mdp.hpp"
#include "cctp/parallel.hpp"
#include "cctp/pipeline.hpp"
#include "cctp/rng.hpp"
#include "cctp/symbols.hpp"
#include "cctp/taskgen.hpp"
#include "cctp/textio.hpp"
#include "cctp/token_transition.hpp"
#include "cctp/workbench.hpp"

namespace cctp {

struct AseSample {
    std::size_t gt_length = 0;
    std::size_t pred_length = 0;
    bool success = false;
};

/// Mean of gt/pred length over successes; a zero-length successful plan
/// counts as 1. Absent when nothing succeeded.
inline std::optional<double> ase(std::span<const AseSample> samples) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : samples) {
        if (!s.success) continue;
        ++n;
        sum += s.pred_length == 0 ? 1.0 : static_cast<double>(s.gt_length) / static_cast<double>(s.pred_length);
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

/// Euclidean distance between positions, in grid cells.
inline double fsd(const ObjectState& final_state, const ObjectState& goal) {
    return std::hypot(static_cast<double>(final_state.pos_x - goal.pos_x),
                      static_cast<double>(final_state.pos_y - goal.pos_y));
}

struct AsaccResult {
    double top1 = 0.0;  // percent
    double top5 = 0.0;  // percent
};

/// attempt_sets[i][j]: whether attempt j of task i succeeded.
inline AsaccResult asacc(std::span<const std::vector<bool>> attempt_sets) {
    if (attempt_sets.empty()) return {};
    std::size_t first = 0, any = 0;
    for (const auto& attempts : attempt_sets) {
        if (attempts.empty()) throw std::invalid_argument("every task needs at least one attempt");
        first += attempts.front() ? 1 : 0;
        any += std::find(attempts.begin(), attempts.end(), true) != attempts.end() ? 1 : 0;
    }
    const auto n = static_cast<double>(attempt_sets.size());
    return {100.0 * static_cast<double>(first) / n, 100.0 * static_cast<double>(any) / n};
}

/// Uniformly random action sequences with length uniform in [1, max_len].
inline std::vector<std::vector<Action>> chance_baseline(const Task& task, Rng& rng, int attempts = kDefaultTopK) {
    std::vector<std::vector<Action>> out(static_cast<std::size_t>(attempts));
    for (auto& seq : out) {
        const int len = uniform_int(rng, 1, task.env.max_len);
        for (int i = 0; i < len; ++i) seq.push_back(kAllActions[static_cast<std::size_t>(uniform_int(rng, 0, kNumActions - 1))]);
    }
    return out;
}

enum class PlannerKind { symbolic, tokenspace, chance };

constexpr std::string_view to_string(PlannerKind p) noexcept {
    switch (p) {
        case PlannerKind::symbolic: return "symbolic";
        case PlannerKind::tokenspace: return "tokenspace";
        case PlannerKind::chance: return "chance";
    }
    return "?";
}

struct ExperimentConfig {
    PlannerKind planner = PlannerKind::symbolic;
    double noise_sigma = 0.0;
    std::uint64_t seed = 1;
    int top_k = kDefaultTopK;
    int max_len = kDefaultMaxPlanLength;
    Split split = Split::test;
    unsigned jobs = 1;
};

struct AttemptRecord {
    std::vector<Action> actions;
    bool success = false;
    FailureReason reason = FailureReason::wrong_final_state;
    double fsd = 0.0;
};

struct TaskRecord {
    std::string task_id;
    std::size_t gt_length = 0;
    std::vector<AttemptRecord> attempts;  // padded with failures up to top_k
    std::size_t planned = 0;              // attempts actually produced by the planner
    std::string planner_error;

    bool top1() const { return !attempts.empty() && attempts.front().success; }
    bool any() const {
        return std::any_of(attempts.begin(), attempts.end(), [](const AttemptRecord& a) { return a.success; });
    }
};

struct EvalReport {
    std::string label;
    int level = 1;
    ExperimentConfig config;
    std::size_t n_tasks = 0;
    double asacc_top1 = 0.0;
    double asacc_top5 = 0.0;
    std::optional<double> ase;
    double fsd_mean = 0.0;  // over all tasks, top-1 attempt
    std::optional<double> fsd_mean_success;
    std::vector<TaskRecord> records;
};

namespace detail {

inline ConceptCodebook codebook_covering(const ConceptCodebook& cb, std::span<const Task* const> tasks) {
    int needed = cb.cardinality(Concept::type);
    for (const Task* t : tasks) needed = std::max({needed, t->init.type_id + 1, t->goal.type_id + 1});
    if (needed == cb.cardinality(Concept::type)) return cb;
    return extend_codebook(cb, Concept::type, needed - cb.cardinality(Concept::type));
}

inline EvalReport aggregate(std::string label, int level, const ExperimentConfig& cfg, std::vector<TaskRecord> records) {
    EvalReport rep;
    rep.label = std::move(label);
    rep.level = level;
    rep.config = cfg;
    rep.n_tasks = records.size();
    std::vector<std::vector<bool>> flags;
    std::vector<AseSample> ase_samples;
    double fsd_total = 0.0, fsd_success = 0.0;
    std::size_t successes = 0;
    for (const auto& r : records) {
        std::vector<bool> f;
        for (const auto& a : r.attempts) f.push_back(a.success);
        flags.push_back(std::move(f));
        const auto& first = r.attempts.front();
        ase_samples.push_back({r.gt_length, first.actions.size(), first.success});
        fsd_total += first.fsd;
        if (first.success) {
            fsd_success += first.fsd;
            ++successes;
        }
    }
    auto acc = asacc(flags);
    rep.asacc_top1 = acc.top1;
    rep.asacc_top5 = acc.top5;
    rep.ase = ase(ase_samples);
    rep.fsd_mean = records.empty() ? 0.0 : fsd_total / static_cast<double>(records.size());
    if (successes) rep.fsd_mean_success = fsd_success / static_cast<double>(successes);
    rep.records = std::move(records);
    return rep;
}

}  // namespace detail

/// Encode init/goal (noise per config), plan, adjudicate every attempt in the
/// simulator and aggregate. Attempt streams are derived per task, so results
/// do not depend on `jobs`.
inline EvalReport run_experiment(const Dataset& ds, const FittedArtifacts& art, const ExperimentConfig& cfg) {
    if (ds.codebook_seed != art.codebook.seed)
        throw ArtifactError(ArtifactError::Kind::schema_mismatch,
                            fmt::format("dataset codebook seed {} does not match fitted codebook seed {}",
                                        ds.codebook_seed, art.codebook.seed));
    const auto tasks = ds.split(cfg.split);
    const ConceptCodebook codebook = detail::codebook_covering(art.codebook, tasks);
    const ValueSymbolMap vs = value_symbols(codebook, art.symbolizer);
    const Cardinalities cards = art.symbolizer.cardinalities();

    std::vector<TaskRecord> records(tasks.size());
    parallel_for(tasks.size(), cfg.jobs, [&](std::size_t i) {
        const Task& task = *tasks[i];
        TaskRecord& rec = records[i];
        rec.task_id = task.task_id;
        rec.gt_length = task.gt_actions.size();

        std::vector<std::vector<Action>> attempts;
        if (cfg.planner == PlannerKind::chance) {
            Rng rng = derive_stream(cfg.seed, "chance", i);
            attempts = chance_baseline(task, rng, cfg.top_k);
        } else {
            Rng rng = derive_stream(cfg.seed, "eval-encode", i);
            const ConceptTokens init = encode(task.init, codebook, cfg.noise_sigma, rng);
            const ConceptTokens goal = encode(task.goal, codebook, cfg.noise_sigma, rng);
            const SymbolMasks masks = SymbolMasks::from_state_mask(state_mask(task.env), vs, cards);
            try {
                PlanResult result =
                    cfg.planner == PlannerKind::symbolic
                        ? plan(art.model, symbolize(init, art.symbolizer), symbolize(goal, art.symbolizer), masks,
                               cfg.top_k, cfg.max_len)
                        : plan_tokenspace(art.maps, init, goal, art.symbolizer, masks, cfg.top_k, cfg.max_len,
                                          map_condition(Action::change_color, task.env));
                for (auto& p : result.plans) attempts.push_back(std::move(p.actions));
            } catch (const PlanningError& e) {
                rec.planner_error = e.what();
            }
        }
        rec.planned = attempts.size();
        for (auto& seq : attempts) {
            SuccessReport sr = adjudicate(task, seq);
            rec.attempts.push_back({std::move(seq), sr.success, sr.failure_reason, fsd(sr.final_state, task.goal)});
        }
        // Missing attempts fail; the object stays where it started.
        while (rec.attempts.size() < static_cast<std::size_t>(std::max(cfg.top_k, 1)))
            rec.attempts.push_back({{}, false, FailureReason::wrong_final_state, fsd(task.init, task.goal)});
    });
    return detail::aggregate(std::string(to_string(cfg.planner)), ds.level, cfg, std::move(records));
}

// ---------------------------------------------------------------------------
// Report file

inline std::string format_summary(const EvalReport& r) {
    return fmt::format(
        "{:<11} level={} tasks={} top1={:.2f}% top5={:.2f}% ase={} fsd_mean={:.4f} fsd_mean_success={}\n", r.label,
        r.level, r.n_tasks, r.asacc_top1, r.asacc_top5, r.ase ? fmt::format("{:.4f}", *r.ase) : "absent", r.fsd_mean,
        r.fsd_mean_success ? fmt::format("{:.4f}", *r.fsd_mean_success) : "absent");
}

inline std::string experiment_config_line(const EvalReport& r) {
    const auto& c = r.config;
    return fmt::format("#config planner={} level={} sigma={} seed={} topk={} lmax={} split={}\n", to_string(c.planner),
                       r.level, textio::fmt_double(c.noise_sigma), c.seed, c.top_k, c.max_len, to_string(c.split));
}

/// Tab-separated per-task records, one row per task.
inline std::string format_records_tsv(const EvalReport& r) {
    std::string out = experiment_config_line(r);
    out += "planner\ttask_id\tgt_length\tplanned\ttop1\ttop5\tlength\tfailure\tfsd\tactions\terror\n";
    for (const auto& rec : r.records) {
        const auto& first = rec.attempts.front();
        std::string actions;
        for (std::size_t i = 0; i < first.actions.size(); ++i)
            actions += fmt::format("{}{}", i ? "," : "", to_string(first.actions[i]));
        out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", r.label, rec.task_id, rec.gt_length,
                           rec.planned, rec.top1() ? 1 : 0, rec.any() ? 1 : 0, first.actions.size(),
                           to_string(first.reason), textio::fmt_double(first.fsd), actions.empty() ? "-" : actions,
                           rec.planner_error.empty() ? "-" : rec.planner_error);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Interpretability

struct TransitionSample {
    Action action = Action::move_front;
    int condition = -1;
    ConceptTokens before;
    ObjectState truth;
};

struct InterpretabilityReport {
    /// mean l2 displacement of token k under action a: [concept][action]
    std::array<std::array<double, kNumActions>, kNumConcepts> displacement{};
    std::array<std::size_t, kNumActions> samples{};
    /// (action, dx, dy) -> count, from nearest-centroid decoding of the
    /// predicted position tokens.
    std::map<std::tuple<int, int, int>, std::size_t> position_changes;

    /// Concept with the largest mean displacement; nullopt if unsampled.
    std::optional<Concept> dominant_concept(Action a) const {
        if (samples[static_cast<std::size_t>(index_of(a))] == 0) return std::nullopt;
        Concept best = Concept::type;
        for (Concept c : kAllConcepts)
            if (displacement[static_cast<std::size_t>(index_of(c))][static_cast<std::size_t>(index_of(a))] >
                displacement[static_cast<std::size_t>(index_of(best))][static_cast<std::size_t>(index_of(a))])
                best = c;
        return best;
    }
};

inline InterpretabilityReport interpretability_report(const ActionTransitionMaps& maps, const ConceptCodebook& cb,
                                                      std::span<const TransitionSample> samples) {
    InterpretabilityReport rep;
    for (const auto& s : samples) {
        const AffineMap* m = maps.find(s.action, s.condition);
        if (!m) continue;
        const ConceptTokens after = ConceptTokens::split(m->apply(s.before.concatenated()));
        const auto a = static_cast<std::size_t>(index_of(s.action));
        ++rep.samples[a];
        for (Concept c : kAllConcepts)
            rep.displacement[static_cast<std::size_t>(index_of(c))][a] += (after[c] - s.before[c]).norm();
        if (is_movement(s.action)) {
            const int dx = decode_value(after[Concept::pos_x], cb, Concept::pos_x) - s.truth.pos_x;
            const int dy = decode_value(after[Concept::pos_y], cb, Concept::pos_y) - s.truth.pos_y;
            ++rep.position_changes[{index_of(s.action), dx, dy}];
        }
    }
    for (auto& row : rep.displacement)
        for (std::size_t a = 0; a < kNumActions; ++a)
            if (rep.samples[a]) row[a] /= static_cast<double>(rep.samples[a]);
    return rep;
}

/// Samples every (state, action) step of the given tasks' ground-truth plans.
inline std::vector<TransitionSample> sample_transitions(std::span<const Task* const> tasks, const ConceptCodebook& cb,
                                                        double sigma, std::uint64_t seed) {
    std::vector<TransitionSample> out;
    const auto encoded = encode_trajectories(tasks, cb, sigma, seed, "report-encode");
    for (std::size_t i = 0; i < tasks.size(); ++i)
        for (std::size_t j = 0; j < tasks[i]->gt_actions.size(); ++j) {
            Action a = tasks[i]->gt_actions[j];
            out.push_back({a, map_condition(a, tasks[i]->env), encoded[i].tokens[j], encoded[i].states[j]});
        }
    return out;
}

inline std::string format_displacement_table(const InterpretabilityReport& r) {
    std::string out = fmt::format("{:<12}", "concept");
    for (Action a : kAllActions) out += fmt::format(" {:>13}", to_string(a));
    out += '\n';
    for (Concept c : kAllConcepts) {
        out += fmt::format("{:<12}", to_string(c));
        for (Action a : kAllActions)
            out += fmt::format(" {:>13.4f}", r.displacement[static_cast<std::size_t>(index_of(c))][static_cast<std::size_t>(index_of(a))]);
        out += '\n';
    }
    out += fmt::format("{:<12}", "dominant");
    for (Action a : kAllActions) {
        auto d = r.dominant_concept(a);
        out += fmt::format(" {:>13}", d ? to_string(*d) : "-");
    }
    out += '\n';
    return out;
}

inline std::string format_displacement_tsv(const InterpretabilityReport& r) {
    std::string out = "concept\taction\tmean_l2\tsamples\n";
    for (Concept c : kAllConcepts)
        for (Action a : kAllActions)
            out += fmt::format("{}\t{}\t{}\t{}\n", to_string(c), to_string(a),
                               textio::fmt_double(r.displacement[static_cast<std::size_t>(index_of(c))][static_cast<std::size_t>(index_of(a))]),
                               r.samples[static_cast<std::size_t>(index_of(a))]);
    return out;
}

inline std::string format_position_changes_tsv(const InterpretabilityReport& r) {
    std::string out = "action\tdx\tdy\tcount\n";
    for (const auto& [key, n] : r.position_changes)
        out += fmt::format("{}\t{}\t{}\t{}\n", to_string(static_cast<Action>(std::get<0>(key))), std::get<1>(key),
                           std::get<2>(key), n);
    return out;
}

}  // namespace cctp
