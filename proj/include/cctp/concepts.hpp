#pragma once

// Synthetic disentangled concept tokens. Each of the six concepts owns a
// codebook of well-separated random centroids; an object state is encoded by
// looking up its six centroids and adding isotropic Gaussian noise.

#include <array>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "cctp/rng.hpp"
#include "cctp/textio.hpp"
#include "cctp/workbench.hpp"

namespace cctp {

enum class Concept : int { type = 0, pos_x, pos_y, rotation, color, size };

inline constexpr int kNumConcepts = 6;

inline constexpr std::array<Concept, kNumConcepts> kAllConcepts{
    Concept::type, Concept::pos_x, Concept::pos_y, Concept::rotation, Concept::color, Concept::size,
};

constexpr int index_of(Concept c) noexcept { return static_cast<int>(c); }

inline constexpr std::array<std::string_view, kNumConcepts> kConceptNames{
    "TYPE", "POSITION_X", "POSITION_Y", "ROTATION", "COLOR", "SIZE",
};

constexpr std::string_view to_string(Concept c) noexcept { return kConceptNames[index_of(c)]; }

using Cardinalities = std::array<int, kNumConcepts>;

/// Value-space sizes of the six concepts as seen in training.
inline constexpr Cardinalities kConceptCardinalities{kNumSeenTypes, kGridWidth, kGridHeight,
                                                     kNumRotations, kNumColors, kNumSizes};

constexpr int concept_value(const ObjectState& s, Concept c) noexcept {
    switch (c) {
        case Concept::type: return s.type_id;
        case Concept::pos_x: return s.pos_x;
        case Concept::pos_y: return s.pos_y;
        case Concept::rotation: return s.rotation / 90;
        case Concept::color: return s.color;
        case Concept::size: return s.size;
    }
    return -1;
}

using Vector = Eigen::VectorXd;

struct ConceptTokens {
    std::array<Vector, kNumConcepts> tokens;

    int dim() const noexcept { return static_cast<int>(tokens[0].size()); }
    const Vector& operator[](Concept c) const { return tokens[static_cast<std::size_t>(index_of(c))]; }
    Vector& operator[](Concept c) { return tokens[static_cast<std::size_t>(index_of(c))]; }

    Vector concatenated() const {
        const int d = dim();
        Vector out(kNumConcepts * d);
        for (int k = 0; k < kNumConcepts; ++k) out.segment(k * d, d) = tokens[static_cast<std::size_t>(k)];
        return out;
    }

    static ConceptTokens split(const Vector& flat) {
        if (flat.size() % kNumConcepts != 0) throw std::invalid_argument("flat token length not a multiple of 6");
        const auto d = flat.size() / kNumConcepts;
        ConceptTokens t;
        for (int k = 0; k < kNumConcepts; ++k) t.tokens[static_cast<std::size_t>(k)] = flat.segment(k * d, d);
        return t;
    }

    bool all_finite() const {
        for (const auto& v : tokens)
            if (!v.allFinite()) return false;
        return true;
    }

    bool operator==(const ConceptTokens& o) const {
        for (int k = 0; k < kNumConcepts; ++k)
            if (tokens[static_cast<std::size_t>(k)] != o.tokens[static_cast<std::size_t>(k)]) return false;
        return true;
    }
};

class CodebookError : public std::runtime_error {
public:
    enum class Kind { separation_unachievable, unknown_value, invalid_argument };

    CodebookError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

struct ConceptCodebook {
    int dim = 8;
    std::uint64_t seed = 0;
    double min_sep = 1.0;
    std::array<std::vector<Vector>, kNumConcepts> centroids;

    int cardinality(Concept c) const { return static_cast<int>(centroids[static_cast<std::size_t>(index_of(c))].size()); }
    const Vector& centroid(Concept c, int value) const {
        return centroids[static_cast<std::size_t>(index_of(c))].at(static_cast<std::size_t>(value));
    }
    Cardinalities cardinalities() const {
        Cardinalities out{};
        for (Concept c : kAllConcepts) out[static_cast<std::size_t>(index_of(c))] = cardinality(c);
        return out;
    }

    bool operator==(const ConceptCodebook& o) const {
        if (dim != o.dim || seed != o.seed || min_sep != o.min_sep) return false;
        for (int k = 0; k < kNumConcepts; ++k) {
            const auto& a = centroids[static_cast<std::size_t>(k)];
            const auto& b = o.centroids[static_cast<std::size_t>(k)];
            if (a.size() != b.size()) return false;
            for (std::size_t v = 0; v < a.size(); ++v)
                if (a[v] != b[v]) return false;
        }
        return true;
    }
};

inline constexpr int kMaxCentroidDraws = 10000;

inline double min_pairwise_distance(std::span<const Vector> points) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < points.size(); ++i)
        for (std::size_t j = i + 1; j < points.size(); ++j) best = std::min(best, (points[i] - points[j]).norm());
    return best;
}

namespace detail {

// Centroid v of concept k comes from its own stream, so extending a concept
// reproduces the existing centroids bit for bit.
inline void append_centroids(ConceptCodebook& cb, Concept c, int count) {
    auto& list = cb.centroids[static_cast<std::size_t>(index_of(c))];
    for (int n = 0; n < count; ++n) {
        const auto value = static_cast<std::uint64_t>(list.size());
        Rng rng = derive_stream(cb.seed, "centroid", static_cast<std::uint64_t>(index_of(c)) * 4096 + value);
        bool placed = false;
        for (int draw = 0; draw < kMaxCentroidDraws && !placed; ++draw) {
            Vector v(cb.dim);
            for (int i = 0; i < cb.dim; ++i) v[i] = normal(rng, 1.0);
            bool separated = true;
            for (const Vector& other : list)
                if ((other - v).norm() < cb.min_sep) {
                    separated = false;
                    break;
                }
            if (separated) {
                list.push_back(std::move(v));
                placed = true;
            }
        }
        if (!placed)
            throw CodebookError(CodebookError::Kind::separation_unachievable,
                                fmt::format("cannot place {} value {} at separation {} in {} dims", to_string(c),
                                            value, cb.min_sep, cb.dim));
    }
}

}  // namespace detail

inline ConceptCodebook build_codebook(int dim, std::uint64_t seed, double min_sep,
                                      const Cardinalities& cards = kConceptCardinalities) {
    if (dim < 2) throw CodebookError(CodebookError::Kind::invalid_argument, "dim must be >= 2");
    if (!(min_sep >= 0.0)) throw CodebookError(CodebookError::Kind::invalid_argument, "min_sep must be >= 0");
    ConceptCodebook cb;
    cb.dim = dim;
    cb.seed = seed;
    cb.min_sep = min_sep;
    for (Concept c : kAllConcepts) detail::append_centroids(cb, c, cards[static_cast<std::size_t>(index_of(c))]);
    return cb;
}

/// Appends `new_values` TYPE centroids; existing centroids are untouched.
inline ConceptCodebook extend_codebook(const ConceptCodebook& cb, Concept c, int new_values) {
    if (c != Concept::type) throw CodebookError(CodebookError::Kind::invalid_argument, "only TYPE can be extended");
    if (new_values < 0) throw CodebookError(CodebookError::Kind::invalid_argument, "new_values must be >= 0");
    ConceptCodebook out = cb;
    detail::append_centroids(out, c, new_values);
    return out;
}

inline ConceptTokens encode(const ObjectState& s, const ConceptCodebook& cb, double noise_sigma, Rng& rng) {
    ConceptTokens out;
    for (Concept c : kAllConcepts) {
        const int v = concept_value(s, c);
        if (v < 0 || v >= cb.cardinality(c))
            throw CodebookError(CodebookError::Kind::unknown_value,
                                fmt::format("{} value {} outside codebook of size {}", to_string(c), v,
                                            cb.cardinality(c)));
        Vector t = cb.centroid(c, v);
        if (noise_sigma > 0.0)
            for (int i = 0; i < cb.dim; ++i) t[i] += normal(rng, noise_sigma);
        out[c] = std::move(t);
    }
    return out;
}

/// Nearest-centroid decoding of one concept; ties go to the lowest value.
inline int decode_value(const Vector& token, const ConceptCodebook& cb, Concept c) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (int v = 0; v < cb.cardinality(c); ++v) {
        double d = (cb.centroid(c, v) - token).squaredNorm();
        if (d < best_d) {
            best_d = d;
            best = v;
        }
    }
    return best;
}

/// Per-token l2 change, argmax, lowest index on ties.
inline Concept changed_concept_index(const ConceptTokens& a, const ConceptTokens& b) {
    if (a.dim() != b.dim()) throw std::invalid_argument("token dims differ");
    Concept best = Concept::type;
    double best_norm = -1.0;
    for (Concept c : kAllConcepts) {
        double n = (a[c] - b[c]).norm();
        if (n > best_norm) {
            best_norm = n;
            best = c;
        }
    }
    return best;
}

struct ChangedPair {
    ConceptTokens a;
    ConceptTokens b;
    Concept changed = Concept::type;
};

inline double disentanglement_score(std::span<const ChangedPair> pairs) {
    if (pairs.empty()) throw std::invalid_argument("disentanglement_score needs at least one pair");
    std::size_t hits = 0;
    for (const auto& p : pairs) hits += changed_concept_index(p.a, p.b) == p.changed ? 1 : 0;
    return static_cast<double>(hits) / static_cast<double>(pairs.size());
}

// ---------------------------------------------------------------------------
// Codebook file

inline constexpr std::string_view kCodebookSchema = "cctp.codebook";
inline constexpr int kCodebookVersion = 1;

inline std::string format_vector(const Vector& v) {
    std::string out;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (i) out += ' ';
        out += textio::fmt_double(v[i]);
    }
    return out;
}

inline Vector parse_vector(std::span<const std::string_view> fields, int dim) {
    if (static_cast<int>(fields.size()) != dim)
        textio::malformed(fmt::format("expected {} values, got {}", dim, fields.size()));
    Vector v(dim);
    for (int i = 0; i < dim; ++i) v[i] = textio::parse_double(fields[static_cast<std::size_t>(i)]);
    return v;
}

inline std::string write_codebook(const ConceptCodebook& cb) {
    std::string out = textio::schema_line(kCodebookSchema, kCodebookVersion);
    out += fmt::format("#config dim={} seed={} min_sep={}\n", cb.dim, cb.seed, textio::fmt_double(cb.min_sep));
    for (Concept c : kAllConcepts) {
        out += fmt::format("concept {} {} {}\n", index_of(c), to_string(c), cb.cardinality(c));
        for (int v = 0; v < cb.cardinality(c); ++v)
            out += fmt::format("centroid {} {} {}\n", index_of(c), v, format_vector(cb.centroid(c, v)));
    }
    return out;
}

inline ConceptCodebook read_codebook(std::istream& in) {
    textio::expect_schema(in, kCodebookSchema, kCodebookVersion);
    auto cfg = textio::read_config(in);
    ConceptCodebook cb;
    cb.dim = cfg.integer("dim");
    cb.seed = cfg.u64("seed");
    cb.min_sep = cfg.number("min_sep");
    std::string line;
    while (std::getline(in, line)) {
        auto f = textio::fields(line);
        if (f.empty() || f[0] != "centroid") continue;
        if (f.size() < 3) textio::malformed("short centroid line");
        auto k = textio::parse_int<std::size_t>(f[1]);
        auto v = textio::parse_int<std::size_t>(f[2]);
        if (k >= kNumConcepts || v != cb.centroids[k].size()) textio::malformed("centroid rows out of order");
        cb.centroids[k].push_back(parse_vector(std::span(f).subspan(3), cb.dim));
    }
    return cb;
}

inline ConceptCodebook read_codebook(std::string_view text) {
    std::istringstream in{std::string(text)};
    return read_codebook(in);
}

}  // namespace cctp
