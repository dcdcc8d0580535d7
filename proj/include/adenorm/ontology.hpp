#pragma once

// Concept dictionaries: loading, validation and training-pair generation.
//
// Dictionary TSV:  concept_id<TAB>term<TAB>is_preferred(0|1)
// Definitions TSV: concept_id<TAB>definition

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "adenorm/error.hpp"
#include "adenorm/text.hpp"

namespace adenorm {

struct Concept {
    std::string concept_id;
    std::string preferred_term;
    std::vector<std::string> synonyms;  // includes preferred_term
    std::optional<std::string> definition;

    bool operator==(const Concept&) const = default;
};

struct TrainingPair {
    std::string text_a;
    std::string text_b;
    std::string concept_id;

    bool operator==(const TrainingPair&) const = default;
};

/// Non-fatal findings collected while loading.
struct Diagnostics {
    std::vector<std::string> warnings;
};

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string_view::npos) {
            cols.push_back(line.substr(start));
            return cols;
        }
        cols.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
}

inline std::string_view strip_cr(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

inline std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open file: " + path);
    return in;
}

}  // namespace detail

/// Immutable collection of concepts keyed (and iterated) by concept_id.
class ConceptStore {
public:
    using Map = std::map<std::string, Concept, std::less<>>;

    ConceptStore() = default;
    ConceptStore(Map concepts, std::string source_tag)
        : concepts_(std::move(concepts)), source_tag_(std::move(source_tag)) {
        validate();
    }

    /// Throws ValidationError when any invariant is broken.
    void validate() const {
        if (concepts_.empty()) throw ValidationError("empty dictionary");
        for (const auto& [id, c] : concepts_) {
            if (id != c.concept_id) throw ValidationError("concept key mismatch: " + id);
            if (c.preferred_term.empty())
                throw ValidationError("concept " + id + " has no preferred term");
            if (std::find(c.synonyms.begin(), c.synonyms.end(), c.preferred_term) == c.synonyms.end())
                throw ValidationError("concept " + id + ": preferred term missing from synonyms");
            std::set<std::string> seen;
            for (const auto& s : c.synonyms) {
                auto norm = normalize_text(s);
                if (norm.empty()) throw ValidationError("concept " + id + " has an empty synonym");
                if (!seen.insert(std::move(norm)).second)
                    throw ValidationError("concept " + id + " has duplicate synonym '" + s + "'");
            }
        }
    }

    std::size_t size() const noexcept { return concepts_.size(); }
    const std::string& source_tag() const noexcept { return source_tag_; }

    const Concept* find(std::string_view id) const {
        auto it = concepts_.find(id);
        return it == concepts_.end() ? nullptr : &it->second;
    }

    const Concept& at(std::string_view id) const {
        const Concept* c = find(id);
        if (!c) throw Error("unknown concept id: " + std::string(id));
        return *c;
    }

    bool contains(std::string_view id) const { return find(id) != nullptr; }

    std::size_t synonym_count() const {
        std::size_t n = 0;
        for (const auto& [_, c] : concepts_) n += c.synonyms.size();
        return n;
    }

    std::size_t definition_count() const {
        std::size_t n = 0;
        for (const auto& [_, c] : concepts_) n += c.definition.has_value();
        return n;
    }

    auto begin() const { return concepts_.begin(); }
    auto end() const { return concepts_.end(); }
    const Map& concepts() const noexcept { return concepts_; }

    bool operator==(const ConceptStore& other) const { return concepts_ == other.concepts_; }

private:
    Map concepts_;
    std::string source_tag_;
};

/// Parses a dictionary TSV stream. Duplicate (concept, normalized synonym)
/// rows are skipped with a warning.
inline ConceptStore parse_dictionary(std::istream& in, std::string source_tag,
                                     Diagnostics* diag = nullptr) {
    struct Building {
        Concept entry;
        std::set<std::string> normalized;
    };
    std::map<std::string, Building, std::less<>> building;

    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = detail::strip_cr(raw);
        if (line.empty()) continue;

        auto cols = detail::split_tabs(line);
        if (cols.size() != 3)
            throw ParseError("expected 3 tab-separated columns, got " + std::to_string(cols.size()),
                             line_no);
        if (cols[0].empty()) throw ParseError("empty concept id", line_no);
        if (cols[2] != "0" && cols[2] != "1")
            throw ParseError("is_preferred must be 0 or 1", line_no);

        std::string term(cols[1]);
        std::string norm = normalize_text(term);
        if (norm.empty()) throw ParseError("empty term", line_no);
        const bool preferred = cols[2] == "1";

        auto [it, fresh] = building.try_emplace(std::string(cols[0]));
        Building& b = it->second;
        if (fresh) b.entry.concept_id = std::string(cols[0]);

        if (preferred && !b.entry.preferred_term.empty() &&
            normalize_text(b.entry.preferred_term) != norm)
            throw ValidationError("concept " + b.entry.concept_id +
                                  " has more than one preferred term (line " +
                                  std::to_string(line_no) + ")");

        if (!b.normalized.insert(norm).second) {
            if (diag)
                diag->warnings.push_back("line " + std::to_string(line_no) + ": duplicate synonym '" +
                                         term + "' for concept " + b.entry.concept_id +
                                         " skipped");
            if (preferred && b.entry.preferred_term.empty()) {
                for (const auto& s : b.entry.synonyms)
                    if (normalize_text(s) == norm) b.entry.preferred_term = s;
            }
            continue;
        }
        b.entry.synonyms.push_back(term);
        if (preferred) b.entry.preferred_term = term;
    }

    if (building.empty()) throw ValidationError("empty dictionary");

    ConceptStore::Map concepts;
    for (auto& [id, b] : building) {
        if (b.entry.preferred_term.empty())
            throw ValidationError("concept " + id + " has no preferred term");
        concepts.emplace(id, std::move(b.entry));
    }
    return ConceptStore(std::move(concepts), std::move(source_tag));
}

inline ConceptStore load_dictionary(const std::string& path, Diagnostics* diag = nullptr) {
    auto in = detail::open_input(path);
    return parse_dictionary(in, path, diag);
}

/// Writes the store back in dictionary TSV form (definitions are not included).
inline void write_dictionary(const ConceptStore& store, std::ostream& out) {
    for (const auto& [id, c] : store) {
        for (const auto& s : c.synonyms)
            out << id << '\t' << s << '\t' << (s == c.preferred_term ? '1' : '0') << '\n';
    }
}

struct DefinitionReport {
    std::size_t attached = 0;
    std::size_t unknown_skipped = 0;
    std::size_t overwritten = 0;
    std::vector<std::string> warnings;
};

/// Attaches definitions to a copy of `store`. Unknown IDs are skipped and
/// counted; a repeated ID overwrites the earlier definition with a warning.
inline ConceptStore parse_definitions(std::istream& in, const ConceptStore& store,
                                      DefinitionReport* report = nullptr) {
    DefinitionReport local;
    DefinitionReport& rep = report ? *report : local;

    ConceptStore::Map concepts = store.concepts();
    std::set<std::string, std::less<>> seen;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = detail::strip_cr(raw);
        if (line.empty()) continue;
        auto cols = detail::split_tabs(line);
        if (cols.size() != 2)
            throw ParseError("expected 2 tab-separated columns, got " + std::to_string(cols.size()),
                             line_no);
        if (cols[1].empty()) throw ParseError("empty definition", line_no);

        auto it = concepts.find(cols[0]);
        if (it == concepts.end()) {
            ++rep.unknown_skipped;
            rep.warnings.push_back("line " + std::to_string(line_no) + ": unknown concept " +
                                   std::string(cols[0]) + " skipped");
            continue;
        }
        if (!seen.insert(std::string(cols[0])).second) {
            ++rep.overwritten;
            rep.warnings.push_back("line " + std::to_string(line_no) + ": concept " +
                                   std::string(cols[0]) +
                                   " already has a definition; last one wins");
        } else {
            ++rep.attached;
        }
        it->second.definition = std::string(cols[1]);
    }
    return ConceptStore(std::move(concepts), store.source_tag());
}

inline ConceptStore load_definitions(const std::string& path, const ConceptStore& store,
                                     DefinitionReport* report = nullptr) {
    auto in = detail::open_input(path);
    return parse_definitions(in, store, report);
}

inline constexpr std::size_t kDefaultPairCap = 50;

/// All unordered synonym pairs per concept (at most `cap` per concept, sampled
/// uniformly under `seed`), then shuffled as a whole under `seed`.
inline std::vector<TrainingPair> synonym_pairs(const ConceptStore& store, std::uint64_t seed,
                                               std::size_t cap = kDefaultPairCap) {
    Rng rng(seed);
    std::vector<TrainingPair> out;
    for (const auto& [id, c] : store) {
        const auto& syn = c.synonyms;
        std::vector<std::pair<std::size_t, std::size_t>> pairs;
        for (std::size_t i = 0; i < syn.size(); ++i)
            for (std::size_t j = i + 1; j < syn.size(); ++j) pairs.emplace_back(i, j);

        if (pairs.size() > cap) {
            // Partial Fisher-Yates, then restore canonical order of the kept pairs.
            for (std::size_t i = 0; i < cap; ++i) {
                std::size_t j = i + static_cast<std::size_t>(rng.below(pairs.size() - i));
                std::swap(pairs[i], pairs[j]);
            }
            pairs.resize(cap);
            std::sort(pairs.begin(), pairs.end());
        }
        for (auto [i, j] : pairs) out.push_back({syn[i], syn[j], id});
    }
    rng.shuffle(out);
    return out;
}

/// (synonym, definition) for every synonym of every defined concept, in store
/// order. A synonym identical to its definition is not a usable pair and is left out.
inline std::vector<TrainingPair> name_definition_pairs(const ConceptStore& store) {
    std::vector<TrainingPair> out;
    for (const auto& [id, c] : store) {
        if (!c.definition) continue;
        const auto def_norm = normalize_text(*c.definition);
        for (const auto& s : c.synonyms)
            if (normalize_text(s) != def_norm) out.push_back({s, *c.definition, id});
    }
    return out;
}

/// Debug dump: one `{"a": ..., "b": ..., "cid": ...}` object per line.
inline void write_pairs_jsonl(const std::vector<TrainingPair>& pairs, std::ostream& out) {
    for (const auto& p : pairs) {
        nlohmann::ordered_json j;
        j["a"] = p.text_a;
        j["b"] = p.text_b;
        j["cid"] = p.concept_id;
        out << j.dump() << '\n';
    }
}

}  // namespace adenorm
