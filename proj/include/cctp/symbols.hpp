#pragma once

// Symbol abstraction: per-concept K-means over concept tokens and
// nearest-center assignment.

#include <algorithm>
#include <array>
#include <cstdint>
#include <istream>
#include <limits>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <fmt/format.h>

#include "cctp/concepts.hpp"
#include "cctp/rng.hpp"
#include "cctp/textio.hpp"

namespace cctp {

class ClusteringError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr int kDefaultRestarts = 10;
inline constexpr int kMaxLloydIterations = 300;
inline constexpr double kLloydTolerance = 1e-9;

struct KMeansResult {
    std::vector<Vector> centers;
    double inertia = 0.0;
    int iterations = 0;
    std::vector<double> inertia_trace;  // after each assignment step of the winning run
};

/// Euclidean-nearest center; ties go to the lowest index.
inline int assign(const Vector& token, std::span<const Vector> centers) {
    if (centers.empty()) throw std::invalid_argument("assign needs at least one center");
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < centers.size(); ++i) {
        double d = (centers[i] - token).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(i);
        }
    }
    return best;
}

namespace detail {

inline std::vector<Vector> kmeans_pp_init(std::span<const Vector> points, int k, Rng& rng) {
    const std::size_t n = points.size();
    std::vector<Vector> centers;
    centers.reserve(static_cast<std::size_t>(k));
    centers.push_back(points[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(n) - 1))]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = (points[i] - centers[0]).squaredNorm();
    while (static_cast<int>(centers.size()) < k) {
        double total = 0.0;
        for (double d : d2) total += d;
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = uniform01(rng) * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc > r && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            pick = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(n) - 1));
        }
        centers.push_back(points[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], (points[i] - centers.back()).squaredNorm());
    }
    return centers;
}

inline KMeansResult lloyd(std::span<const Vector> points, std::vector<Vector> centers) {
    const std::size_t n = points.size();
    const std::size_t k = centers.size();
    const Eigen::Index dim = points[0].size();
    std::vector<int> label(n, 0);
    KMeansResult res;
    for (int it = 1; it <= kMaxLloydIterations; ++it) {
        double inertia = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            label[i] = assign(points[i], centers);
            inertia += (points[i] - centers[static_cast<std::size_t>(label[i])]).squaredNorm();
        }
        res.inertia_trace.push_back(inertia);

        std::vector<Vector> sums(k, Vector::Zero(dim));
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            sums[static_cast<std::size_t>(label[i])] += points[i];
            ++counts[static_cast<std::size_t>(label[i])];
        }
        std::vector<Vector> next(k);
        std::vector<bool> taken(n, false);
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                next[c] = sums[c] / static_cast<double>(counts[c]);
                continue;
            }
            // Empty cluster: re-seed at the point farthest from its center.
            std::size_t far = 0;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                double d = (points[i] - centers[static_cast<std::size_t>(label[i])]).squaredNorm();
                if (!taken[i] && d > far_d) {
                    far_d = d;
                    far = i;
                }
            }
            taken[far] = true;
            next[c] = points[far];
        }
        double shift = 0.0;
        for (std::size_t c = 0; c < k; ++c) shift = std::max(shift, (next[c] - centers[c]).norm());
        centers = std::move(next);
        res.iterations = it;
        if (shift < kLloydTolerance) break;
    }
    res.inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) res.inertia += (points[i] - centers[static_cast<std::size_t>(assign(points[i], centers))]).squaredNorm();
    res.centers = std::move(centers);
    return res;
}

inline bool lexicographic_less(const Vector& a, const Vector& b) {
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        if (a[i] < b[i]) return true;
        if (a[i] > b[i]) return false;
    }
    return false;
}

}  // namespace detail

/// k-means++ seeding, Lloyd iterations, best of `restarts` by inertia.
/// Centers are returned in lexicographic order.
inline KMeansResult fit_kmeans(std::span<const Vector> points, int k, std::uint64_t seed,
                               int restarts = kDefaultRestarts) {
    if (k < 1 || points.size() < static_cast<std::size_t>(k))
        throw ClusteringError(fmt::format("need at least k={} points, got {}", k, points.size()));
    if (restarts < 1) throw std::invalid_argument("restarts must be >= 1");
    KMeansResult best;
    best.inertia = std::numeric_limits<double>::infinity();
    for (int r = 0; r < restarts; ++r) {
        Rng rng = derive_stream(seed, "kmeans", static_cast<std::uint64_t>(r));
        KMeansResult run = detail::lloyd(points, detail::kmeans_pp_init(points, k, rng));
        if (run.inertia < best.inertia) best = std::move(run);
    }
    std::sort(best.centers.begin(), best.centers.end(), detail::lexicographic_less);
    return best;
}

struct SymbolState {
    std::array<int, kNumConcepts> symbols{};

    int operator[](Concept c) const { return symbols[static_cast<std::size_t>(index_of(c))]; }
    int& operator[](Concept c) { return symbols[static_cast<std::size_t>(index_of(c))]; }
    auto operator<=>(const SymbolState&) const = default;
};

/// Position, rotation and color: the concepts actions can change.
inline constexpr std::array<Concept, 4> kChangeableConcepts{Concept::pos_x, Concept::pos_y, Concept::rotation,
                                                            Concept::color};

inline bool changeable_match(const SymbolState& a, const SymbolState& b) {
    for (Concept c : kChangeableConcepts)
        if (a[c] != b[c]) return false;
    return true;
}

struct ConceptFit {
    int iterations = 0;
    double inertia = 0.0;
};

struct Symbolizer {
    std::array<std::vector<Vector>, kNumConcepts> centers;
    std::array<ConceptFit, kNumConcepts> fit;
    std::uint64_t seed = 0;

    const std::vector<Vector>& centers_of(Concept c) const { return centers[static_cast<std::size_t>(index_of(c))]; }
    int dim() const { return centers[0].empty() ? 0 : static_cast<int>(centers[0][0].size()); }
    Cardinalities cardinalities() const {
        Cardinalities out{};
        for (int k = 0; k < kNumConcepts; ++k) out[static_cast<std::size_t>(k)] = static_cast<int>(centers[static_cast<std::size_t>(k)].size());
        return out;
    }

    bool operator==(const Symbolizer& o) const {
        if (seed != o.seed) return false;
        for (int k = 0; k < kNumConcepts; ++k) {
            const auto& a = centers[static_cast<std::size_t>(k)];
            const auto& b = o.centers[static_cast<std::size_t>(k)];
            if (a.size() != b.size()) return false;
            for (std::size_t i = 0; i < a.size(); ++i)
                if (a[i] != b[i]) return false;
            if (fit[static_cast<std::size_t>(k)].iterations != o.fit[static_cast<std::size_t>(k)].iterations ||
                fit[static_cast<std::size_t>(k)].inertia != o.fit[static_cast<std::size_t>(k)].inertia)
                return false;
        }
        return true;
    }
};

/// Each concept is clustered independently with k = its cardinality.
inline Symbolizer fit_symbolizer(std::span<const ConceptTokens> tokens, const Cardinalities& cards,
                                 std::uint64_t seed, int restarts = kDefaultRestarts) {
    if (tokens.empty()) throw ClusteringError("fit_symbolizer needs tokens");
    Symbolizer s;
    s.seed = seed;
    for (Concept c : kAllConcepts) {
        const auto k = static_cast<std::size_t>(index_of(c));
        std::vector<Vector> points;
        points.reserve(tokens.size());
        for (const auto& t : tokens) points.push_back(t[c]);
        KMeansResult r = fit_kmeans(points, cards[k], derive_stream(seed, "symbolizer", k)(), restarts);
        s.centers[k] = std::move(r.centers);
        s.fit[k] = {r.iterations, r.inertia};
    }
    return s;
}

inline SymbolState symbolize(const ConceptTokens& tokens, const Symbolizer& s) {
    if (tokens.dim() != s.dim()) throw std::invalid_argument("token dim does not match symbolizer");
    SymbolState out;
    for (Concept c : kAllConcepts) out[c] = assign(tokens[c], s.centers_of(c));
    return out;
}

/// value_to_symbol[k][v]: symbol of the noiseless centroid of value v.
using ValueSymbolMap = std::array<std::vector<int>, kNumConcepts>;

inline ValueSymbolMap value_symbols(const ConceptCodebook& cb, const Symbolizer& s) {
    ValueSymbolMap out;
    for (Concept c : kAllConcepts)
        for (int v = 0; v < cb.cardinality(c); ++v)
            out[static_cast<std::size_t>(index_of(c))].push_back(assign(cb.centroid(c, v), s.centers_of(c)));
    return out;
}

struct LabeledTokens {
    ConceptTokens tokens;
    ObjectState truth;
};

/// Majority-vote purity per concept: map each cluster to its most frequent
/// true value, then report the fraction of points whose mapped value is right.
inline std::array<double, kNumConcepts> purity(const Symbolizer& s, std::span<const LabeledTokens> labeled) {
    if (labeled.empty()) throw std::invalid_argument("purity needs labeled tokens");
    std::array<double, kNumConcepts> out{};
    for (Concept c : kAllConcepts) {
        std::map<std::pair<int, int>, std::size_t> counts;  // (cluster, value) -> n
        for (const auto& l : labeled) ++counts[{assign(l.tokens[c], s.centers_of(c)), concept_value(l.truth, c)}];
        std::map<int, std::size_t> majority;
        for (const auto& [key, n] : counts) majority[key.first] = std::max(majority[key.first], n);
        std::size_t correct = 0;
        for (const auto& [cluster, n] : majority) correct += n;
        out[static_cast<std::size_t>(index_of(c))] = static_cast<double>(correct) / static_cast<double>(labeled.size());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Symbolizer file

inline constexpr std::string_view kSymbolizerSchema = "cctp.symbolizer";
inline constexpr int kSymbolizerVersion = 1;

/// `config` is appended verbatim to the #config line (provenance of the fit).
inline std::string write_symbolizer(const Symbolizer& s, std::string_view config = {}) {
    std::string out = textio::schema_line(kSymbolizerSchema, kSymbolizerVersion);
    out += fmt::format("#config dim={} seed={}{}{}\n", s.dim(), s.seed, config.empty() ? "" : " ", config);
    for (Concept c : kAllConcepts) {
        const auto k = static_cast<std::size_t>(index_of(c));
        out += fmt::format("concept {} {} k={} iterations={} inertia={}\n", k, to_string(c), s.centers[k].size(),
                           s.fit[k].iterations, textio::fmt_double(s.fit[k].inertia));
        for (std::size_t i = 0; i < s.centers[k].size(); ++i)
            out += fmt::format("center {} {} {}\n", k, i, format_vector(s.centers[k][i]));
    }
    return out;
}

struct SymbolizerFile {
    Symbolizer symbolizer;
    textio::KeyValues config;
};

inline SymbolizerFile read_symbolizer(std::istream& in) {
    textio::expect_schema(in, kSymbolizerSchema, kSymbolizerVersion);
    SymbolizerFile file;
    file.config = textio::read_config(in);
    const int dim = file.config.integer("dim");
    file.symbolizer.seed = file.config.u64("seed");
    std::string line;
    while (std::getline(in, line)) {
        auto f = textio::fields(line);
        if (f.empty()) continue;
        if (f[0] == "concept") {
            auto k = textio::parse_int<std::size_t>(f.at(1));
            if (k >= kNumConcepts) textio::malformed("concept index out of range");
            auto kv = textio::KeyValues::parse(line.substr(line.find("k=")));
            file.symbolizer.fit[k] = {kv.integer("iterations"), kv.number("inertia")};
        } else if (f[0] == "center") {
            if (f.size() < 3) textio::malformed("short center line");
            auto k = textio::parse_int<std::size_t>(f[1]);
            if (k >= kNumConcepts) textio::malformed("concept index out of range");
            file.symbolizer.centers[k].push_back(parse_vector(std::span(f).subspan(3), dim));
        }
    }
    return file;
}

inline SymbolizerFile read_symbolizer(std::string_view text) {
    std::istringstream in{std::string(text)};
    return read_symbolizer(in);
}

}  // namespace cctp
