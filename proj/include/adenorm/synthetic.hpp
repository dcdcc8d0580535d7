#pragma once

// Synthetic ontology for end-to-end checks. Each concept combines an
// "attribute" meaning and a "site" meaning; every meaning has several
// lexically unrelated surface words, and every synonym picks one word per
// meaning and may carry a character-level typo. One synonym per concept is
// held out as the evaluation mention, so linking it requires knowing which
// surface words are interchangeable.

#include <cstdint>
#include <cstdio>
#include <ostream>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adenorm/evaluation.hpp"
#include "adenorm/ontology.hpp"
#include "adenorm/text.hpp"
#include "adenorm/training.hpp"

namespace adenorm::synthetic {

struct Config {
    std::size_t attributes = 20;
    std::size_t sites = 10;            // concepts = attributes * sites
    std::size_t words_per_meaning = 4;
    std::size_t synonyms_per_concept = 5;  // the last one is held out
    double typo_rate = 0.5;
    std::size_t sts_pairs = 2000;
    std::size_t splits = 4;
    std::uint64_t seed = 7;
};

struct Benchmark {
    ConceptStore store;                   // training synonyms + definitions
    std::vector<MentionExample> heldout;  // one held-out synonym per concept
    std::vector<STSExample> sts;          // graded by shared meanings
};

namespace detail {

inline std::string make_word(Rng& rng) {
    static constexpr std::string_view kOnsets[] = {"b", "d", "f", "g", "k", "l", "m", "n", "p", "r",
                                                   "s", "t", "v", "z", "br", "tr", "st", "pl", "kr", "sn"};
    static constexpr std::string_view kVowels[] = {"a", "e", "i", "o", "u", "ai", "ou", "ei"};
    std::string w;
    const std::size_t syllables = 2 + rng.below(2);
    for (std::size_t i = 0; i < syllables; ++i) {
        w += kOnsets[rng.below(std::size(kOnsets))];
        w += kVowels[rng.below(std::size(kVowels))];
    }
    if (rng.below(2)) w += kOnsets[rng.below(10)];
    return w;
}

/// One random edit: swap, delete, duplicate or substitute a letter.
inline std::string typo(std::string s, Rng& rng) {
    if (s.size() < 4) return s;
    std::size_t pos = 1 + rng.below(s.size() - 2);
    if (s[pos] == ' ' || s[pos - 1] == ' ') return s;
    switch (rng.below(4)) {
    case 0: std::swap(s[pos - 1], s[pos]); break;
    case 1: s.erase(pos, 1); break;
    case 2: s.insert(pos, 1, s[pos]); break;
    default: s[pos] = static_cast<char>('a' + rng.below(26)); break;
    }
    return s;
}

}  // namespace detail

inline Benchmark generate(const Config& cfg) {
    Rng rng(cfg.seed);
    std::set<std::string> used;
    auto fresh_word = [&] {
        while (true) {
            auto w = detail::make_word(rng);
            if (used.insert(w).second) return w;
        }
    };

    std::vector<std::vector<std::string>> attr_words(cfg.attributes), site_words(cfg.sites);
    for (auto& ws : attr_words)
        for (std::size_t i = 0; i < cfg.words_per_meaning; ++i) ws.push_back(fresh_word());
    for (auto& ws : site_words)
        for (std::size_t i = 0; i < cfg.words_per_meaning; ++i) ws.push_back(fresh_word());

    ConceptStore::Map concepts;
    struct Meta {
        std::size_t attr, site;
    };
    std::vector<std::pair<std::string, Meta>> train_terms;
    std::vector<std::vector<std::size_t>> members;  // concept -> indices into train_terms
    Benchmark b;

    std::size_t index = 0;
    for (std::size_t a = 0; a < cfg.attributes; ++a) {
        for (std::size_t s = 0; s < cfg.sites; ++s, ++index) {
            char id[16];
            std::snprintf(id, sizeof id, "C%04zu", index);

            // Distinct word combinations; combination (0, 0) is the preferred term.
            std::vector<std::pair<std::size_t, std::size_t>> combos;
            for (std::size_t i = 0; i < cfg.words_per_meaning; ++i)
                for (std::size_t j = 0; j < cfg.words_per_meaning; ++j)
                    if (i + j > 0) combos.emplace_back(i, j);
            rng.shuffle(combos);
            combos.insert(combos.begin(), {0, 0});
            combos.resize(cfg.synonyms_per_concept);

            Concept c;
            c.concept_id = id;
            members.emplace_back();
            std::set<std::string> seen;
            for (std::size_t k = 0; k < combos.size(); ++k) {
                std::string term = attr_words[a][combos[k].first] + " " + site_words[s][combos[k].second];
                if (k > 0 && rng.uniform() < cfg.typo_rate) term = detail::typo(term, rng);
                if (!seen.insert(normalize_text(term)).second) continue;
                if (k + 1 == combos.size()) {
                    b.heldout.push_back({term, std::nullopt, c.concept_id,
                                         static_cast<std::int64_t>(index % cfg.splits)});
                } else {
                    c.synonyms.push_back(term);
                    members.back().push_back(train_terms.size());
                    train_terms.push_back({term, {a, s}});
                }
            }
            c.preferred_term = c.synonyms.front();
            c.definition = "a disorder of " + attr_words[a][0] + " character affecting the " + site_words[s][0] +
                           " region";
            concepts.emplace(c.concept_id, std::move(c));
        }
    }
    b.store = ConceptStore(std::move(concepts), "synthetic");

    // STS on the 0..5 scale: 5 for the same concept, 3.75 for one shared
    // meaning, 2.5 (orthogonal after the cosine mapping) otherwise.
    // A third of the pairs are drawn from the same concept.
    for (std::size_t i = 0; i < cfg.sts_pairs; ++i) {
        std::size_t x, y;
        if (i % 3 == 0) {
            const auto& group = members[rng.below(members.size())];
            if (group.size() < 2) continue;
            std::size_t p = rng.below(group.size());
            std::size_t q = (p + 1 + rng.below(group.size() - 1)) % group.size();
            x = group[p];
            y = group[q];
        } else {
            x = rng.below(train_terms.size());
            y = rng.below(train_terms.size());
            if (y == x) y = (y + 1) % train_terms.size();
        }
        const auto& [ta, ma] = train_terms[x];
        const auto& [tb, mb] = train_terms[y];
        int shared = (ma.attr == mb.attr) + (ma.site == mb.site);
        b.sts.push_back({ta, tb, 0.5 + 0.25 * shared});
    }
    return b;
}

inline void write_definitions(const ConceptStore& store, std::ostream& out) {
    for (const auto& [id, c] : store)
        if (c.definition) out << id << '\t' << *c.definition << '\n';
}

/// STS rows with gold rescaled back to the 0..5 file scale.
inline void write_sts(const std::vector<STSExample>& rows, std::ostream& out) {
    for (const auto& r : rows) out << r.text_a << '\t' << r.text_b << '\t' << r.gold_score * 5.0 << '\n';
}

inline void write_dataset(const std::vector<MentionExample>& rows, std::ostream& out) {
    for (const auto& r : rows) {
        nlohmann::ordered_json j;
        j["mention"] = r.mention_text;
        if (r.context) j["context"] = *r.context;
        j["gold"] = r.gold_concept_id;
        j["split"] = r.split_id;
        out << j.dump() << '\n';
    }
}

}  // namespace adenorm::synthetic
