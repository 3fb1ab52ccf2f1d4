#pragma once

// End-to-end fitting: encode training trajectories, cluster tokens into
// symbols, record symbol triplets and fit token-space maps. Also the on-disk
// artifact bundle (codebook, symbolizer, transition model, maps).

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cctp/concepts.hpp"
#include "cctp/mdp.hpp"
#include "cctp/parallel.hpp"
#include "cctp/rng.hpp"
#include "cctp/symbols.hpp"
#include "cctp/taskgen.hpp"
#include "cctp/textio.hpp"
#include "cctp/token_transition.hpp"

namespace cctp {

struct FitConfig {
    int dim = 8;
    double min_sep = 1.0;
    double noise_sigma = 0.1;  // absolute, per coordinate
    double thresh = kDefaultThresh;
    std::uint64_t seed = 1;
    int restarts = kDefaultRestarts;
};

struct FittedArtifacts {
    ConceptCodebook codebook;
    Symbolizer symbolizer;
    TransitionModel model;
    ActionTransitionMaps maps;
    FitConfig config;
    int level = 1;
    std::uint64_t dataset_seed = 0;
    std::string variant = "standard";
    std::array<double, kNumConcepts> purity{};
    std::vector<MapKey> skipped_maps;  // keys below the pair floor

    /// Provenance recorded into every artifact's #config line.
    std::string provenance() const {
        std::string skipped;
        for (const auto& k : skipped_maps)
            skipped += fmt::format("{}{}@{}", skipped.empty() ? "" : ",", to_string(k.action), k.condition);
        return fmt::format(
            "level={} dataset_seed={} variant={} codebook_seed={} min_sep={} sigma={} fit_seed={} "
            "restarts={} skipped_maps={}",
            level, dataset_seed, variant, codebook.seed, textio::fmt_double(config.min_sep),
            textio::fmt_double(config.noise_sigma), config.seed, config.restarts,
            skipped.empty() ? "-" : skipped);
    }
};

/// change_color at dyer levels is conditioned on the dyer color.
inline int map_condition(Action a, const EnvConfig& env) {
    return a == Action::change_color && env.level >= 3 ? env.dyer_color : -1;
}

struct EncodedTask {
    std::vector<ObjectState> states;
    std::vector<ConceptTokens> tokens;
};

/// One noisy encoding per trajectory state; the stream is derived from
/// (seed, tag, task index).
inline std::vector<EncodedTask> encode_trajectories(std::span<const Task* const> tasks, const ConceptCodebook& cb,
                                                    double sigma, std::uint64_t seed, std::string_view tag,
                                                    unsigned jobs = 1) {
    std::vector<EncodedTask> out(tasks.size());
    parallel_for(tasks.size(), jobs, [&](std::size_t i) {
        const Task& t = *tasks[i];
        Rng rng = derive_stream(seed, tag, i);
        out[i].states = simulate(t.init, t.gt_actions, t.env);
        for (const auto& s : out[i].states) out[i].tokens.push_back(encode(s, cb, sigma, rng));
    });
    return out;
}

inline FittedArtifacts fit_pipeline(const Dataset& ds, const FitConfig& cfg, unsigned jobs = 1) {
    FittedArtifacts art;
    art.config = cfg;
    art.level = ds.level;
    art.dataset_seed = ds.seed;
    art.variant = ds.variant;
    art.codebook = build_codebook(cfg.dim, ds.codebook_seed, cfg.min_sep);

    const auto train = ds.split(Split::train);
    if (train.empty()) throw std::invalid_argument("dataset has no training tasks");
    const auto encoded = encode_trajectories(train, art.codebook, cfg.noise_sigma, cfg.seed, "fit-encode", jobs);

    std::vector<ConceptTokens> all_tokens;
    std::vector<LabeledTokens> labeled;
    for (const auto& e : encoded)
        for (std::size_t j = 0; j < e.tokens.size(); ++j) {
            all_tokens.push_back(e.tokens[j]);
            labeled.push_back({e.tokens[j], e.states[j]});
        }
    art.symbolizer = fit_symbolizer(all_tokens, kConceptCardinalities, cfg.seed, cfg.restarts);
    art.purity = purity(art.symbolizer, labeled);

    std::vector<Triplet> triplets;
    TokenPairsByKey pairs;
    for (std::size_t i = 0; i < train.size(); ++i) {
        const auto& e = encoded[i];
        std::vector<SymbolState> symbols;
        for (const auto& t : e.tokens) symbols.push_back(symbolize(t, art.symbolizer));
        for (std::size_t j = 0; j < train[i]->gt_actions.size(); ++j) {
            Action a = train[i]->gt_actions[j];
            triplets.push_back({symbols[j], a, symbols[j + 1]});
            pairs[{a, map_condition(a, train[i]->env)}].push_back({e.tokens[j], e.tokens[j + 1]});
        }
    }
    if (triplets.empty()) throw std::invalid_argument("training tasks contain no transitions");
    art.model = fit_transitions(triplets, art.symbolizer.cardinalities(), cfg.thresh);

    for (auto it = pairs.begin(); it != pairs.end();) {
        if (it->second.size() < kMinAffinePairs) {
            art.skipped_maps.push_back(it->first);
            it = pairs.erase(it);
        } else {
            ++it;
        }
    }
    art.maps = fit_affine(pairs);
    return art;
}

// ---------------------------------------------------------------------------
// Artifact directory

inline constexpr std::string_view kCodebookFile = "codebook.txt";
inline constexpr std::string_view kSymbolizerFile = "symbolizer.txt";
inline constexpr std::string_view kModelFile = "model.txt";
inline constexpr std::string_view kMapsFile = "maps.txt";

inline void save_artifacts(const FittedArtifacts& art, const std::filesystem::path& dir) {
    const std::string prov = art.provenance();
    textio::write_file(dir / kCodebookFile, write_codebook(art.codebook));
    std::string purity_cfg;
    for (Concept c : kAllConcepts)
        purity_cfg += fmt::format(" purity.{}={}", to_string(c), textio::fmt_double(art.purity[static_cast<std::size_t>(index_of(c))]));
    textio::write_file(dir / kSymbolizerFile, write_symbolizer(art.symbolizer, prov + purity_cfg));
    textio::write_file(dir / kModelFile, write_model(art.model, prov));
    textio::write_file(dir / kMapsFile, write_maps(art.maps, prov));
}

inline FittedArtifacts load_artifacts(const std::filesystem::path& dir) {
    FittedArtifacts art;
    art.codebook = read_codebook(textio::read_file(dir / kCodebookFile));
    auto sym = read_symbolizer(textio::read_file(dir / kSymbolizerFile));
    auto model = read_model(textio::read_file(dir / kModelFile));
    auto maps = read_maps(textio::read_file(dir / kMapsFile));
    art.symbolizer = std::move(sym.symbolizer);
    art.model = std::move(model.model);
    art.maps = std::move(maps.maps);

    const auto& cfg = sym.config;
    for (const auto* other : {&model.config, &maps.config})
        if (other->str("codebook_seed") != cfg.str("codebook_seed") || other->str("fit_seed") != cfg.str("fit_seed"))
            throw ArtifactError(ArtifactError::Kind::schema_mismatch, "artifacts come from different fits");
    if (cfg.u64("codebook_seed") != art.codebook.seed)
        throw ArtifactError(ArtifactError::Kind::schema_mismatch, "codebook file does not match the fitted symbolizer");
    if (art.symbolizer.dim() != art.codebook.dim || art.maps.dim != art.codebook.dim ||
        art.model.cardinalities() != art.symbolizer.cardinalities())
        throw ArtifactError(ArtifactError::Kind::schema_mismatch, "artifact dimensions disagree");
    art.level = cfg.integer("level");
    art.dataset_seed = cfg.u64("dataset_seed");
    art.variant = cfg.str("variant");
    art.config.dim = art.codebook.dim;
    art.config.min_sep = cfg.number("min_sep");
    art.config.noise_sigma = cfg.number("sigma");
    art.config.thresh = art.model.thresh();
    art.config.seed = cfg.u64("fit_seed");
    art.config.restarts = cfg.integer("restarts");
    for (Concept c : kAllConcepts)
        art.purity[static_cast<std::size_t>(index_of(c))] = cfg.number(fmt::format("purity.{}", to_string(c)));
    if (cfg.str("skipped_maps") != "-")
        for (auto item : textio::split(cfg.str("skipped_maps"), ',')) {
            auto at = item.find('@');
            auto a = parse_action(item.substr(0, at));
            if (!a || at == std::string_view::npos) textio::malformed("bad skipped_maps entry");
            art.skipped_maps.push_back({*a, textio::parse_int<int>(item.substr(at + 1))});
        }
    return art;
}

}  // namespace cctp
