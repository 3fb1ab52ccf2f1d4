// cctp: dataset generation, fitting, planning, evaluation and reports.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "cctp/cctp.hpp"

namespace fs = std::filesystem;
using namespace cctp;

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kArtifact = 2, kThreshold = 3, kNoPlan = 4 };

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

fs::path default_artifact_dir() {
    if (const char* env = std::getenv("CCTP_ARTIFACT_DIR"); env && *env) return env;
    return "artifacts";
}

Dataset load_dataset(const fs::path& p) { return read_dataset(textio::read_file(p)); }

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    if (s.empty()) return out;
    for (auto item : textio::split(s, ',')) {
        try {
            out.push_back(textio::parse_int<int>(item));
        } catch (const ArtifactError&) {
            throw UsageError(fmt::format("bad integer '{}' in list", item));
        }
    }
    return out;
}

// "x=1,y=2,rot=90,color=3,type=0,size=1"; omitted keys default to 0.
ObjectState parse_state_spec(const std::string& spec) {
    std::string spaced = spec;
    for (char& c : spaced)
        if (c == ',') c = ' ';
    try {
        auto kv = textio::KeyValues::parse(spaced);
        auto get = [&](std::string_view k) { return kv.has(k) ? kv.integer(k) : 0; };
        for (const auto& [k, v] : kv.entries())
            if (k != "x" && k != "y" && k != "rot" && k != "color" && k != "type" && k != "size")
                throw UsageError(fmt::format("unknown state key '{}'", k));
        return {get("type"), get("x"), get("y"), get("rot"), get("color"), get("size")};
    } catch (const ArtifactError& e) {
        throw UsageError(fmt::format("bad state spec '{}': {}", spec, e.what()));
    }
}

std::string join_actions(std::span<const Action> actions) {
    if (actions.empty()) return "(empty)";
    std::string out;
    for (std::size_t i = 0; i < actions.size(); ++i) out += fmt::format("{}{}", i ? " " : "", to_string(actions[i]));
    return out;
}

// ---------------------------------------------------------------------------

struct GenArgs {
    int level = 1;
    SplitCounts counts;
    std::uint64_t seed = 0;
    std::uint64_t codebook_seed = kDefaultCodebookSeed;
    std::string split = "standard";
    std::string held_out = "8,9,10,11";
    std::string out;
    unsigned jobs = 0;
};

int cmd_gen(const GenArgs& a) {
    Dataset ds;
    if (a.split == "unseen-task") {
        ds = make_unseen_task_split(a.level, a.counts, a.seed, a.codebook_seed, a.jobs);
    } else {
        ds = generate_dataset(a.level, a.counts, a.seed, a.codebook_seed, a.jobs);
        if (a.split == "unseen-object") ds = make_unseen_object_split(ds, parse_int_list(a.held_out));
    }
    const fs::path out = a.out.empty() ? default_artifact_dir() / fmt::format("dataset_L{}.txt", a.level) : fs::path(a.out);
    textio::write_file(out, write_dataset(ds));
    std::size_t total = 0, longest = 0;
    for (const Task& t : ds.tasks) {
        total += t.gt_actions.size();
        longest = std::max(longest, t.gt_actions.size());
    }
    fmt::print("wrote {} tasks (level {}, variant {}) to {}\n", ds.tasks.size(), ds.level, ds.variant, out.string());
    fmt::print("gt length: mean {:.3f} max {}\n", static_cast<double>(total) / static_cast<double>(ds.tasks.size()),
               longest);
    return kOk;
}

struct FitArgs {
    std::string data;
    std::string dir;
    FitConfig cfg;
    unsigned jobs = 0;
};

int cmd_fit(const FitArgs& a) {
    const Dataset ds = load_dataset(a.data);
    const FittedArtifacts art = fit_pipeline(ds, a.cfg, a.jobs);
    const fs::path dir = a.dir.empty() ? default_artifact_dir() : fs::path(a.dir);
    save_artifacts(art, dir);
    fmt::print("fitted level {} ({} training tasks) into {}\n", ds.level, ds.split(Split::train).size(), dir.string());
    for (Concept c : kAllConcepts)
        fmt::print("purity {:<11} {}\n", to_string(c), textio::fmt_double(art.purity[static_cast<std::size_t>(index_of(c))]));
    fmt::print("affine maps: {}", art.maps.maps.size());
    if (!art.skipped_maps.empty()) fmt::print(" (skipped below pair floor: {})", art.skipped_maps.size());
    fmt::print("\n");
    return kOk;
}

struct PlanArgs {
    std::string dir;
    std::string data;
    std::string task_id;
    std::string init, goal;
    int level = 1;
    std::string obstacles, dyer;
    int dyer_color = 0;
    std::string planner = "symbolic";
    int top_k = kDefaultTopK;
    int max_len = kDefaultMaxPlanLength;
    double sigma = 0.0;
    std::uint64_t seed = 1;
};

int cmd_plan(const PlanArgs& a) {
    const FittedArtifacts art = load_artifacts(a.dir.empty() ? default_artifact_dir() : fs::path(a.dir));
    Task task;
    if (!a.task_id.empty()) {
        if (a.data.empty()) throw UsageError("--task-id needs --data");
        const Dataset ds = load_dataset(a.data);
        auto it = std::find_if(ds.tasks.begin(), ds.tasks.end(), [&](const Task& t) { return t.task_id == a.task_id; });
        if (it == ds.tasks.end()) throw UsageError(fmt::format("no task '{}' in {}", a.task_id, a.data));
        task = *it;
    } else {
        if (a.init.empty() || a.goal.empty()) throw UsageError("give --task-id or both --init and --goal");
        task.task_id = "adhoc";
        task.env = EnvConfig::empty(a.level);
        try {
            if (!a.obstacles.empty())
                for (auto c : textio::split(a.obstacles, ';')) task.env.obstacles.push_back(detail::parse_cell(c));
            if (!a.dyer.empty()) task.env.dyer = detail::parse_cell(a.dyer);
        } catch (const ArtifactError& e) {
            throw UsageError(e.what());
        }
        task.env.dyer_color = a.dyer_color;
        try {
            validate(task.env);
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
        task.init = parse_state_spec(a.init);
        task.goal = parse_state_spec(a.goal);
    }

    const Task* tp = &task;
    const ConceptCodebook cb = detail::codebook_covering(art.codebook, std::span(&tp, 1));
    Rng rng = derive_stream(a.seed, "plan-encode");
    const ConceptTokens init = encode(task.init, cb, a.sigma, rng);
    const ConceptTokens goal = encode(task.goal, cb, a.sigma, rng);
    const SymbolMasks masks =
        SymbolMasks::from_state_mask(state_mask(task.env), value_symbols(cb, art.symbolizer), art.symbolizer.cardinalities());
    const int cond = map_condition(Action::change_color, task.env);

    PlanResult result;
    try {
        if (a.planner == "tokenspace")
            result = plan_tokenspace(art.maps, init, goal, art.symbolizer, masks, a.top_k, a.max_len, cond);
        else
            result = plan(art.model, symbolize(init, art.symbolizer), symbolize(goal, art.symbolizer), masks, a.top_k,
                          a.max_len);
    } catch (const PlanningError& e) {
        fmt::print(stderr, "planning failed: {}\n", e.what());
        return kNoPlan;
    }

    fmt::print("task {} level {} planner {}\n", task.task_id, task.level(), a.planner);
    if (result.type_size_mismatch) fmt::print("warning: init and goal differ in type or size; no action changes these\n");
    for (std::size_t i = 0; i < result.plans.size(); ++i) {
        const auto& p = result.plans[i];
        const SuccessReport sr = adjudicate(task, p.actions);
        const std::string_view verdict = sr.success ? "success" : to_string(sr.failure_reason);
        fmt::print("#{} score={:.6g} len={} [{}] {}\n", i + 1, p.score, p.actions.size(), verdict,
                   join_actions(p.actions));
    }
    const auto& best = result.plans.front().actions;
    try {
        const auto states = rollout(init, best, art.maps, cond);
        const SymbolState end = symbolize(states.back(), art.symbolizer);
        const SymbolState want = symbolize(goal, art.symbolizer);
        fmt::print("token rollout of #1: {} steps, distance to goal tokens {:.4f}, snapped state {} goal\n",
                   best.size(), (states.back().concatenated() - goal.concatenated()).norm(),
                   changeable_match(end, want) ? "matches" : "misses");
    } catch (const PlanningError& e) {
        fmt::print("token rollout unavailable: {}\n", e.what());
    }
    return kOk;
}

struct EvalArgs {
    std::string dir;
    std::string data;
    std::string out;
    ExperimentConfig cfg;
    std::string split = "test";
    std::string planner = "symbolic";
    std::string baseline;
    bool compare = false;
    std::optional<double> min_top1;
};

int cmd_eval(EvalArgs a) {
    const fs::path dir = a.dir.empty() ? default_artifact_dir() : fs::path(a.dir);
    const FittedArtifacts art = load_artifacts(dir);
    const Dataset ds = load_dataset(a.data);
    auto split = parse_split(a.split);
    if (!split) throw UsageError(fmt::format("unknown split '{}'", a.split));
    a.cfg.split = *split;

    std::vector<PlannerKind> kinds;
    if (a.baseline == "chance")
        kinds.push_back(PlannerKind::chance);
    else
        kinds.push_back(a.planner == "tokenspace" ? PlannerKind::tokenspace : PlannerKind::symbolic);
    if (a.compare)
        for (PlannerKind k : {PlannerKind::symbolic, PlannerKind::tokenspace, PlannerKind::chance})
            if (std::find(kinds.begin(), kinds.end(), k) == kinds.end()) kinds.push_back(k);

    std::vector<EvalReport> reports;
    for (PlannerKind k : kinds) {
        ExperimentConfig c = a.cfg;
        c.planner = k;
        reports.push_back(run_experiment(ds, art, c));
    }

    std::string summary = textio::schema_line("cctp.report", 1);
    summary += fmt::format("#config data={} {}\n", fs::path(a.data).filename().string(),
                           art.provenance());
    std::string records;
    for (const auto& r : reports) {
        summary += experiment_config_line(r);
        summary += format_summary(r);
        records += format_records_tsv(r);
    }
    const fs::path out = a.out.empty() ? dir / "report" : fs::path(a.out);
    textio::write_file(out / "summary.txt", summary);
    textio::write_file(out / "records.tsv", records);
    for (const auto& r : reports) fmt::print("{}", format_summary(r));
    fmt::print("report written to {}\n", out.string());

    if (a.min_top1 && reports.front().asacc_top1 < *a.min_top1) {
        fmt::print(stderr, "top-1 {:.2f}% is below the required {:.2f}%\n", reports.front().asacc_top1, *a.min_top1);
        return kThreshold;
    }
    return kOk;
}

struct ReportArgs {
    std::string dir;
    std::string data;
    std::string out;
    double sigma = 0.0;
    std::uint64_t seed = 1;
    std::string split = "test";
};

int cmd_report(const ReportArgs& a) {
    const fs::path dir = a.dir.empty() ? default_artifact_dir() : fs::path(a.dir);
    const FittedArtifacts art = load_artifacts(dir);
    const Dataset ds = load_dataset(a.data);
    auto split = parse_split(a.split);
    if (!split) throw UsageError(fmt::format("unknown split '{}'", a.split));
    const auto tasks = ds.split(*split);
    const ConceptCodebook cb = detail::codebook_covering(art.codebook, tasks);
    const auto samples = sample_transitions(tasks, cb, a.sigma, a.seed);
    const InterpretabilityReport rep = interpretability_report(art.maps, cb, samples);

    const fs::path out = a.out.empty() ? dir / "report" : fs::path(a.out);
    const std::string table = format_displacement_table(rep);
    textio::write_file(out / "displacement.txt", table);
    textio::write_file(out / "displacement.tsv", format_displacement_tsv(rep));
    textio::write_file(out / "position_changes.tsv", format_position_changes_tsv(rep));
    fmt::print("{}", table);
    fmt::print("tables written to {}\n", out.string());
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Concept-centric planning workbench"};
    app.require_subcommand(1);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate a task dataset");
    g->add_option("--level", gen.level, "Difficulty level")->check(CLI::Range(1, kNumLevels));
    g->add_option("--train", gen.counts.train)->check(CLI::PositiveNumber);
    g->add_option("--val", gen.counts.val)->check(CLI::NonNegativeNumber);
    g->add_option("--test", gen.counts.test)->check(CLI::PositiveNumber);
    g->add_option("--seed", gen.seed);
    g->add_option("--codebook-seed", gen.codebook_seed);
    g->add_option("--split", gen.split)->check(CLI::IsMember({"standard", "unseen-task", "unseen-object"}));
    g->add_option("--held-out", gen.held_out, "Comma-separated type ids for unseen-object");
    g->add_option("-o,--out", gen.out);
    g->add_option("--jobs", gen.jobs);

    FitArgs fit;
    auto* f = app.add_subcommand("fit", "Fit symbolizer, transition model and affine maps");
    f->add_option("--data", fit.data)->required();
    f->add_option("--artifacts", fit.dir);
    f->add_option("--dim", fit.cfg.dim)->check(CLI::PositiveNumber);
    f->add_option("--min-sep", fit.cfg.min_sep)->check(CLI::PositiveNumber);
    f->add_option("--sigma", fit.cfg.noise_sigma)->check(CLI::NonNegativeNumber);
    f->add_option("--thresh", fit.cfg.thresh)->check(CLI::Range(0.0, 1.0));
    f->add_option("--seed", fit.cfg.seed);
    f->add_option("--restarts", fit.cfg.restarts)->check(CLI::PositiveNumber);
    f->add_option("--jobs", fit.jobs);

    PlanArgs pl;
    auto* p = app.add_subcommand("plan", "Plan a single task");
    p->add_option("--artifacts", pl.dir);
    p->add_option("--data", pl.data);
    p->add_option("--task-id", pl.task_id);
    p->add_option("--init", pl.init, "e.g. x=0,y=0,rot=0,color=1");
    p->add_option("--goal", pl.goal);
    p->add_option("--level", pl.level)->check(CLI::Range(1, kNumLevels));
    p->add_option("--obstacles", pl.obstacles, "e.g. 1:2;0:3");
    p->add_option("--dyer", pl.dyer, "e.g. 2:4");
    p->add_option("--dyer-color", pl.dyer_color)->check(CLI::Range(0, kNumColors - 1));
    p->add_option("--planner", pl.planner)->check(CLI::IsMember({"symbolic", "tokenspace"}));
    p->add_option("--topk", pl.top_k)->check(CLI::PositiveNumber);
    p->add_option("--lmax", pl.max_len)->check(CLI::NonNegativeNumber);
    p->add_option("--sigma", pl.sigma)->check(CLI::NonNegativeNumber);
    p->add_option("--seed", pl.seed);

    EvalArgs ev;
    ev.cfg.jobs = 0;
    auto* e = app.add_subcommand("eval", "Evaluate planners on a dataset split");
    e->add_option("--artifacts", ev.dir);
    e->add_option("--data", ev.data)->required();
    e->add_option("-o,--out", ev.out);
    e->add_option("--planner", ev.planner)->check(CLI::IsMember({"symbolic", "tokenspace"}));
    e->add_option("--baseline", ev.baseline)->check(CLI::IsMember({"chance"}));
    e->add_flag("--compare", ev.compare, "Also run the token-space ablation and chance baseline");
    e->add_option("--sigma", ev.cfg.noise_sigma)->check(CLI::NonNegativeNumber);
    e->add_option("--seed", ev.cfg.seed);
    e->add_option("--topk", ev.cfg.top_k)->check(CLI::PositiveNumber);
    e->add_option("--lmax", ev.cfg.max_len)->check(CLI::NonNegativeNumber);
    e->add_option("--split", ev.split)->check(CLI::IsMember({"train", "val", "test"}));
    e->add_option("--min-top1", ev.min_top1, "Exit 3 if top-1 ASAcc (percent) falls below this");
    e->add_option("--jobs", ev.cfg.jobs);

    ReportArgs rp;
    auto* r = app.add_subcommand("report", "Displacement tables of the fitted affine maps");
    r->add_option("--artifacts", rp.dir);
    r->add_option("--data", rp.data)->required();
    r->add_option("-o,--out", rp.out);
    r->add_option("--sigma", rp.sigma)->check(CLI::NonNegativeNumber);
    r->add_option("--seed", rp.seed);
    r->add_option("--split", rp.split)->check(CLI::IsMember({"train", "val", "test"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kUsage;
    }

    try {
        if (*g) return cmd_gen(gen);
        if (*f) return cmd_fit(fit);
        if (*p) return cmd_plan(pl);
        if (*e) return cmd_eval(ev);
        if (*r) return cmd_report(rp);
    } catch (const UsageError& ex) {
        fmt::print(stderr, "error: {}\n", ex.what());
        return kUsage;
    } catch (const GenerationError& ex) {
        fmt::print(stderr, "error: {}\n", ex.what());
        return kUsage;
    } catch (const ArtifactError& ex) {
        fmt::print(stderr, "artifact error: {}\n", ex.what());
        return kArtifact;
    } catch (const TransitionFitError& ex) {
        fmt::print(stderr, "fit error: {}\n", ex.what());
        return kArtifact;
    } catch (const std::exception& ex) {
        fmt::print(stderr, "error: {}\n", ex.what());
        return kUsage;
    }
    return kUsage;
}
