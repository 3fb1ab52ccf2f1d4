// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "oracles.hpp"

using namespace cctp;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

constexpr double kMinSep = 1.0;
constexpr std::uint64_t kDataSeed = 7;

struct Outcome {
    bool pass = true;
    std::string detail;

    void check(bool ok, const std::string& what) {
        pass = pass && ok;
        if (!detail.empty()) detail += "; ";
        detail += what + (ok ? "" : " [x]");
    }
};

struct Run {
    Dataset ds;
    FittedArtifacts art;
    EvalReport report;
    double seconds = 0.0;
};

Run full_run(int level, double sigma, unsigned jobs = 1) {
    auto t0 = Clock::now();
    Run r;
    r.ds = generate_dataset(level, {800, 100, 100}, kDataSeed, kDefaultCodebookSeed, jobs);
    FitConfig fc;
    fc.min_sep = kMinSep;
    fc.noise_sigma = sigma;
    r.art = fit_pipeline(r.ds, fc, jobs);
    ExperimentConfig ec;
    ec.noise_sigma = sigma;
    ec.jobs = jobs;
    r.report = run_experiment(r.ds, r.art, ec);
    r.seconds = seconds_since(t0);
    return r;
}

EvalReport rerun(const Run& r, PlannerKind planner, double sigma) {
    ExperimentConfig ec;
    ec.planner = planner;
    ec.noise_sigma = sigma;
    return run_experiment(r.ds, r.art, ec);
}

std::map<std::pair<int, double>, Run>& runs() {
    static std::map<std::pair<int, double>, Run> cache;
    return cache;
}

const Run& get_run(int level, double sigma) {
    auto key = std::make_pair(level, sigma);
    auto it = runs().find(key);
    if (it == runs().end()) it = runs().emplace(key, full_run(level, sigma)).first;
    return it->second;
}

std::string pct(double v) { return fmt::format("{:.2f}%", v); }

ObjectState random_state(Rng& rng) {
    return {uniform_int(rng, 0, kNumSeenTypes - 1), uniform_int(rng, 0, kGridWidth - 1),
            uniform_int(rng, 0, kGridHeight - 1), 90 * uniform_int(rng, 0, kNumRotations - 1),
            uniform_int(rng, 0, kNumColors - 1), uniform_int(rng, 0, kNumSizes - 1)};
}

// ---------------------------------------------------------------------------

Outcome planning_easy() {
    Outcome o;
    for (int level : {1, 2}) {
        const Run& r = get_run(level, 0.0);
        o.check(r.report.asacc_top1 >= 99.0, fmt::format("L{} top1 {}", level, pct(r.report.asacc_top1)));
        o.check(r.seconds < 60.0, fmt::format("L{} {:.2f}s", level, r.seconds));
    }
    return o;
}

Outcome planning_hard() {
    Outcome o;
    for (int level : {3, 4}) {
        const Run& r = get_run(level, 0.0);
        o.check(r.report.asacc_top1 >= 95.0, fmt::format("L{} top1 {}", level, pct(r.report.asacc_top1)));
    }
    const Run& noisy = get_run(4, 0.2 * kMinSep);
    o.check(noisy.report.asacc_top1 >= 60.0, fmt::format("L4 sigma 0.2 top1 {}", pct(noisy.report.asacc_top1)));
    bool ordered = true;
    for (const auto& [key, r] : runs()) ordered = ordered && r.report.asacc_top5 >= r.report.asacc_top1;
    o.check(ordered, "top5 >= top1 on every run");
    return o;
}

Outcome efficiency() {
    Outcome o;
    for (int level = 1; level <= 4; ++level) {
        const Run& r = get_run(level, 0.0);
        if (!r.report.ase) {
            o.check(false, fmt::format("L{} no successes", level));
            continue;
        }
        o.check(*r.report.ase >= 0.95 && *r.report.ase <= 1.0, fmt::format("L{} ASE {:.4f}", level, *r.report.ase));
    }
    const Run& noisy = get_run(4, 0.2 * kMinSep);
    o.check(noisy.report.ase && *noisy.report.ase >= 0.95 && *noisy.report.ase <= 1.0,
            fmt::format("L4 sigma 0.2 ASE {:.4f}", noisy.report.ase.value_or(-1)));
    return o;
}

Outcome distance() {
    Outcome o;
    bool zero = true;
    for (const auto& [key, r] : runs()) zero = zero && r.report.fsd_mean_success.value_or(0.0) == 0.0;
    o.check(zero, "success FSD = 0 on every run");
    for (int level : {1, 4}) {
        EvalReport chance = rerun(get_run(level, 0.0), PlannerKind::chance, 0.0);
        const double cap = level == 1 ? 5.0 : 1.0;
        o.check(chance.fsd_mean >= 1.5, fmt::format("L{} chance FSD {:.3f}", level, chance.fsd_mean));
        o.check(chance.asacc_top1 <= cap, fmt::format("L{} chance top1 {}", level, pct(chance.asacc_top1)));
    }
    return o;
}

// All point-mass starts over the fitted symbol space, all action sequences
// of length <= 3, compared step by step with the count-table oracle.
Outcome propagation_oracle() {
    Outcome o;
    const Run& r = get_run(4, 0.2 * kMinSep);
    const TransitionModel& m = r.art.model;
    const Task& task = *r.ds.split(Split::test).front();
    const ValueSymbolMap vs = value_symbols(r.art.codebook, r.art.symbolizer);
    const Cardinalities cards = m.cardinalities();
    const SymbolMasks masks = SymbolMasks::from_state_mask(state_mask(task.env), vs, cards);
    const oracle::SymbolEnv env = oracle::symbol_env(task.env, vs, cards);

    auto t0 = Clock::now();
    std::size_t steps = 0, dead = 0, starts = 0;
    double worst = 0.0;
    bool agree = true;
    std::function<void(const SymbolDistribution&, const oracle::Marginals&, int)> walk =
        [&](const SymbolDistribution& d, const oracle::Marginals& p, int depth) {
            if (depth == 3) return;
            for (Action a : kAllActions) {
                auto next = try_propagate(d, a, m, masks);
                auto want = oracle::step(p, a, m, env);
                ++steps;
                if (next.has_value() != want.has_value()) {
                    agree = false;
                    continue;
                }
                if (!next) {
                    ++dead;
                    continue;
                }
                for (Concept c : kAllConcepts)
                    for (std::size_t i = 0; i < (*next)[c].size(); ++i)
                        worst = std::max(worst, std::abs((*next)[c][i] - (*want)[static_cast<std::size_t>(index_of(c))][i]));
                walk(*next, *want, depth + 1);
            }
        };
    SymbolState s;
    for (s.symbols[0] = 0; s.symbols[0] < cards[0]; ++s.symbols[0])
        for (s.symbols[1] = 0; s.symbols[1] < cards[1]; ++s.symbols[1])
            for (s.symbols[2] = 0; s.symbols[2] < cards[2]; ++s.symbols[2])
                for (s.symbols[3] = 0; s.symbols[3] < cards[3]; ++s.symbols[3])
                    for (s.symbols[4] = 0; s.symbols[4] < cards[4]; ++s.symbols[4])
                        for (s.symbols[5] = 0; s.symbols[5] < cards[5]; ++s.symbols[5]) {
                            ++starts;
                            walk(SymbolDistribution::point_mass(s, cards), oracle::point(s, cards), 0);
                        }
    const double secs = seconds_since(t0);
    o.check(agree, fmt::format("{} starts, {} steps ({} dead) agree on liveness", starts, steps, dead));
    o.check(worst <= 1e-9, fmt::format("max deviation {:.2e}", worst));
    o.check(secs < 5.0, fmt::format("{:.2f}s", secs));
    return o;
}

Outcome legality() {
    Outcome o;
    for (int level = 1; level <= 4; ++level) {
        const Run& r = get_run(level, level == 4 ? 0.2 * kMinSep : 0.0);
        const TransitionModel& m = r.art.model;
        const ValueSymbolMap vs = value_symbols(r.art.codebook, r.art.symbolizer);
        const SymbolMasks masks = SymbolMasks::from_state_mask(state_mask(EnvConfig::empty(1)), vs, m.cardinalities());
        std::size_t checked = 0, violations = 0;
        for (int x = 0; x < kGridWidth; ++x)
            for (int y = 0; y < kGridHeight; ++y)
                for (Action a : {Action::move_front, Action::move_back, Action::move_left, Action::move_right}) {
                    ObjectState probe{0, x, y, 0, 0, 0};
                    if (try_apply(probe, a, EnvConfig::empty(1)).fault != ActionFault::out_of_bounds) continue;
                    // every combination of the other concepts' symbols
                    SymbolState s;
                    s[Concept::pos_x] = vs[1][static_cast<std::size_t>(x)];
                    s[Concept::pos_y] = vs[2][static_cast<std::size_t>(y)];
                    for (s.symbols[0] = 0; s.symbols[0] < m.cardinality(Concept::type); ++s.symbols[0])
                        for (s.symbols[3] = 0; s.symbols[3] < m.cardinality(Concept::rotation); ++s.symbols[3])
                            for (s.symbols[4] = 0; s.symbols[4] < m.cardinality(Concept::color); ++s.symbols[4])
                                for (s.symbols[5] = 0; s.symbols[5] < m.cardinality(Concept::size); ++s.symbols[5]) {
                                    ++checked;
                                    const bool rejected =
                                        !action_legal(m, s, a) &&
                                        !try_propagate(SymbolDistribution::point_mass(s, m.cardinalities()), a, m, masks);
                                    violations += rejected ? 0 : 1;
                                }
                }
        o.check(violations == 0, fmt::format("L{} {} boundary checks, {} accepted", level, checked, violations));
    }
    return o;
}

Outcome purity_check() {
    Outcome o;
    const ConceptCodebook cb = build_codebook(8, kDefaultCodebookSeed, kMinSep);
    for (double sigma : {0.0, 0.1 * kMinSep}) {
        Rng rng = derive_stream(kDataSeed, "acceptance-purity");
        std::vector<LabeledTokens> data;
        std::vector<ConceptTokens> tokens;
        for (int i = 0; i < 10000; ++i) {
            ObjectState s = random_state(rng);
            data.push_back({encode(s, cb, sigma, rng), s});
            tokens.push_back(data.back().tokens);
        }
        Symbolizer sym = fit_symbolizer(tokens, kConceptCardinalities, 1);
        auto p = purity(sym, data);
        double lowest = *std::min_element(p.begin(), p.end());
        o.check(sigma == 0.0 ? lowest == 1.0 : lowest >= 0.99,
                fmt::format("sigma {} min purity {:.4f} over {} tokens", sigma, lowest, data.size()));
    }
    return o;
}

Outcome disentanglement() {
    Outcome o;
    const ConceptCodebook cb = build_codebook(8, kDefaultCodebookSeed, kMinSep);
    for (double sigma : {0.0, 0.05 * kMinSep}) {
        Rng rng = derive_stream(kDataSeed, "acceptance-cdl");
        std::vector<ChangedPair> pairs;
        for (int i = 0; i < 10000; ++i) {
            ObjectState a = random_state(rng);
            auto c = static_cast<Concept>(uniform_int(rng, 0, kNumConcepts - 1));
            ObjectState b = a;
            ObjectState fresh = random_state(rng);
            while (concept_value(fresh, c) == concept_value(a, c)) fresh = random_state(rng);
            switch (c) {
                case Concept::type: b.type_id = fresh.type_id; break;
                case Concept::pos_x: b.pos_x = fresh.pos_x; break;
                case Concept::pos_y: b.pos_y = fresh.pos_y; break;
                case Concept::rotation: b.rotation = fresh.rotation; break;
                case Concept::color: b.color = fresh.color; break;
                case Concept::size: b.size = fresh.size; break;
            }
            pairs.push_back({encode(a, cb, sigma, rng), encode(b, cb, sigma, rng), c});
        }
        double score = disentanglement_score(pairs);
        o.check(sigma == 0.0 ? score == 1.0 : score >= 0.99, fmt::format("sigma {} accuracy {:.4f}", sigma, score));
    }
    return o;
}

Outcome interpretability() {
    Outcome o;
    const Run& r = get_run(4, 0.2 * kMinSep);
    auto samples = sample_transitions(r.ds.split(Split::test), r.art.codebook, 0.2 * kMinSep, kDataSeed);
    InterpretabilityReport rep = interpretability_report(r.art.maps, r.art.codebook, samples);
    auto expected = [](Action a) {
        switch (a) {
            case Action::move_front:
            case Action::move_back: return Concept::pos_y;
            case Action::move_left:
            case Action::move_right: return Concept::pos_x;
            case Action::rotate_left:
            case Action::rotate_right: return Concept::rotation;
            case Action::change_color: return Concept::color;
        }
        return Concept::type;
    };
    int hits = 0;
    std::string misses;
    for (Action a : kAllActions) {
        auto d = rep.dominant_concept(a);
        if (d && *d == expected(a))
            ++hits;
        else
            misses += fmt::format(" {}->{}", to_string(a), d ? to_string(*d) : "-");
    }
    o.check(hits == kNumActions, fmt::format("{}/7 actions{}", hits, misses));
    return o;
}

Outcome generalization() {
    Outcome o;
    for (int level = 1; level <= 4; ++level) {
        const Run& r = get_run(level, 0.0);
        Dataset unseen = make_unseen_object_split(r.ds, {8, 9, 10, 11});
        ExperimentConfig ec;
        EvalReport held = run_experiment(unseen, r.art, ec);
        o.check(held.asacc_top1 == r.report.asacc_top1 && held.asacc_top5 == r.report.asacc_top5,
                fmt::format("L{} unseen-object {} vs seen {}", level, pct(held.asacc_top1), pct(r.report.asacc_top1)));
    }
    for (int level : {1, 2}) {
        Dataset ut = make_unseen_task_split(level, {800, 100, 100}, kDataSeed);
        FitConfig fc;
        fc.noise_sigma = 0.0;
        FittedArtifacts restricted = fit_pipeline(ut, fc);
        ExperimentConfig ec;
        EvalReport novel = run_experiment(ut, restricted, ec);
        EvalReport full = run_experiment(ut, get_run(level, 0.0).art, ec);
        o.check(std::abs(novel.asacc_top1 - full.asacc_top1) <= 2.0,
                fmt::format("L{} unseen-task {} vs full-data {}", level, pct(novel.asacc_top1), pct(full.asacc_top1)));
    }
    return o;
}

Outcome ablation() {
    Outcome o;
    for (double sigma : {0.1 * kMinSep, 0.2 * kMinSep}) {
        const Run& r = get_run(3, sigma);
        EvalReport tok = rerun(r, PlannerKind::tokenspace, sigma);
        o.check(tok.asacc_top1 <= r.report.asacc_top1,
                fmt::format("L3 sigma {} token-space {} vs symbolic {}", sigma, pct(tok.asacc_top1),
                            pct(r.report.asacc_top1)));
    }
    return o;
}

Outcome determinism() {
    Outcome o;
    auto pipeline = [](const fs::path& dir, unsigned jobs) {
        fs::remove_all(dir);
        Dataset ds = generate_dataset(4, {800, 100, 100}, kDataSeed, kDefaultCodebookSeed, jobs);
        textio::write_file(dir / "dataset.txt", write_dataset(ds));
        FitConfig fc;
        fc.noise_sigma = 0.1;
        FittedArtifacts art = fit_pipeline(ds, fc, jobs);
        save_artifacts(art, dir);
        ExperimentConfig ec;
        ec.noise_sigma = 0.1;
        ec.jobs = jobs;
        std::string summary, records;
        for (PlannerKind k : {PlannerKind::symbolic, PlannerKind::tokenspace, PlannerKind::chance}) {
            ec.planner = k;
            EvalReport rep = run_experiment(ds, art, ec);
            summary += experiment_config_line(rep) + format_summary(rep);
            records += format_records_tsv(rep);
        }
        textio::write_file(dir / "summary.txt", summary);
        textio::write_file(dir / "records.tsv", records);
        auto samples = sample_transitions(ds.split(Split::test), art.codebook, 0.1, kDataSeed);
        textio::write_file(dir / "displacement.tsv",
                           format_displacement_tsv(interpretability_report(art.maps, art.codebook, samples)));
    };
    const fs::path base = fs::temp_directory_path() / "cctp_acceptance_determinism";
    pipeline(base / "a", 1);
    pipeline(base / "b", 1);
    pipeline(base / "c", 3);
    std::size_t files = 0, same = 0;
    for (const auto& entry : fs::directory_iterator(base / "a")) {
        const auto name = entry.path().filename();
        const std::string a = textio::read_file(entry.path());
        ++files;
        same += a == textio::read_file(base / "b" / name) && a == textio::read_file(base / "c" / name) ? 1 : 0;
    }
    fs::remove_all(base);
    o.check(files >= 8 && same == files, fmt::format("{}/{} files identical across 3 runs", same, files));
    return o;
}

}  // namespace

int main() {
    struct Criterion {
        const char* name;
        Outcome (*run)();
    };
    const std::vector<Criterion> criteria{
        {"planning accuracy, levels 1-2", planning_easy},
        {"planning accuracy, levels 3-4", planning_hard},
        {"action sequence efficiency", efficiency},
        {"final state distance and chance", distance},
        {"propagation vs brute-force oracle", propagation_oracle},
        {"boundary legality", legality},
        {"symbol purity", purity_check},
        {"changed-concept accuracy", disentanglement},
        {"displacement table argmax", interpretability},
        {"unseen object / unseen task", generalization},
        {"token-space ablation gap", ablation},
        {"byte-identical reruns", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        auto t0 = Clock::now();
        Outcome out;
        try {
            out = criteria[i].run();
        } catch (const std::exception& e) {
            out.check(false, fmt::format("exception: {}", e.what()));
        }
        failed += out.pass ? 0 : 1;
        fmt::print("[{:02d}] {} {:<36} ({:.1f}s) {}\n", i + 1, out.pass ? "PASS" : "FAIL", criteria[i].name,
                   seconds_since(t0), out.detail);
        std::fflush(stdout);
    }
    fmt::print("{} of {} criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
    return failed == 0 ? 0 : 1;
}
