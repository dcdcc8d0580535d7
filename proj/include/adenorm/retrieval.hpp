#pragma once

// Exact and HNSW nearest-neighbor indexes over synonym embeddings, and the
// mention linker that resolves queries to ranked, concept-deduplicated results.
//
// Result order everywhere: score descending, then concept_id ascending, then
// synonym ascending. Scores are raw cosines of unit vectors.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

#include "adenorm/encoder.hpp"
#include "adenorm/error.hpp"
#include "adenorm/io.hpp"
#include "adenorm/ontology.hpp"
#include "adenorm/text.hpp"

namespace adenorm {

struct IndexEntry {
    EmbeddingVector vector;
    std::string concept_id;
    std::string synonym;
};

struct HnswParams {
    std::uint32_t M = 16;
    std::uint32_t ef_construction = 200;
    std::uint32_t ef_search = 64;
    std::uint64_t seed = 0;

    void validate() const {
        if (M < 2) throw ValidationError("HNSW requires M >= 2");
        if (ef_construction == 0 || ef_search == 0) throw ValidationError("HNSW ef values must be positive");
    }

    bool operator==(const HnswParams&) const = default;
};

struct RetrievalResult {
    std::string concept_id;
    std::string synonym;
    double score = 0.0;
    std::size_t rank = 0;  // 1-based

    bool operator==(const RetrievalResult&) const = default;
};

enum class IndexKind : std::uint8_t { Exact = 0, Hnsw = 1 };

inline constexpr std::string_view kIndexMagic = "adenorm-idx-v1\n";

class VectorIndex {
public:
    /// Brute-force index; search is exact.
    static VectorIndex build_exact(const std::vector<IndexEntry>& entries,
                                   std::uint64_t encoder_fingerprint = 0) {
        VectorIndex idx;
        idx.kind_ = IndexKind::Exact;
        idx.encoder_fingerprint_ = encoder_fingerprint;
        idx.store_entries(entries);
        return idx;
    }

    /// HNSW graph; level assignment is seeded so that a fixed seed and
    /// insertion order always produce the same graph.
    static VectorIndex build_hnsw(const std::vector<IndexEntry>& entries, const HnswParams& params,
                                  std::uint64_t encoder_fingerprint = 0) {
        params.validate();
        VectorIndex idx;
        idx.kind_ = IndexKind::Hnsw;
        idx.params_ = params;
        idx.encoder_fingerprint_ = encoder_fingerprint;
        idx.store_entries(entries);
        idx.build_graph();
        return idx;
    }

    IndexKind kind() const noexcept { return kind_; }
    std::size_t size() const noexcept { return concept_ids_.size(); }
    std::size_t dim() const noexcept { return dim_; }
    const HnswParams& params() const noexcept { return params_; }
    std::uint64_t encoder_fingerprint() const noexcept { return encoder_fingerprint_; }

    const std::string& concept_id(std::size_t i) const { return concept_ids_[i]; }
    const std::string& synonym(std::size_t i) const { return synonyms_[i]; }
    std::span<const double> vector(std::size_t i) const { return {vectors_.data() + i * dim_, dim_}; }

    /// Distinct concept IDs present in the index.
    std::set<std::string, std::less<>> concept_set() const {
        return {concept_ids_.begin(), concept_ids_.end()};
    }

    /// HNSW level of node i (0 for exact indexes).
    std::size_t node_level(std::size_t i) const { return kind_ == IndexKind::Hnsw ? links_[i].size() - 1 : 0; }
    const std::vector<std::uint32_t>& neighbors(std::size_t node, std::size_t level) const {
        return links_.at(node).at(level);
    }

    /// Top-k entries for a unit query. k larger than the index returns everything.
    std::vector<RetrievalResult> search(const EmbeddingVector& query, std::size_t k) const {
        return search(query, k, params_.ef_search);
    }

    std::vector<RetrievalResult> search(const EmbeddingVector& query, std::size_t k,
                                        std::size_t ef_search) const {
        if (k == 0) throw Error("k must be at least 1");
        if (query.dim() != dim_)
            throw Error("query dimension " + std::to_string(query.dim()) + " does not match index dimension " +
                        std::to_string(dim_));
        k = std::min(k, size());

        std::vector<Scored> hits;
        if (kind_ == IndexKind::Exact) {
            hits.reserve(size());
            for (std::size_t i = 0; i < size(); ++i) hits.push_back({dot(query.values, vector(i)), static_cast<std::uint32_t>(i)});
        } else {
            hits = hnsw_search(query.values, std::max(ef_search, k));
        }
        auto better = [this](const Scored& a, const Scored& b) { return ranks_before(a, b); };
        k = std::min(k, hits.size());
        std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);

        std::vector<RetrievalResult> out;
        out.reserve(k);
        for (std::size_t r = 0; r < k; ++r)
            out.push_back({concept_ids_[hits[r].id], synonyms_[hits[r].id], hits[r].score, r + 1});
        return out;
    }

    void write(std::ostream& out) const {
        io::BinaryWriter w(out);
        w.raw(kIndexMagic);
        w.u8(static_cast<std::uint8_t>(kind_));
        w.u64(encoder_fingerprint_);
        w.u32(params_.M);
        w.u32(params_.ef_construction);
        w.u32(params_.ef_search);
        w.u64(params_.seed);
        w.u64(dim_);
        w.u64(size());
        for (std::size_t i = 0; i < size(); ++i) {
            w.str(concept_ids_[i]);
            w.str(synonyms_[i]);
            w.f64s(vector(i));
        }
        if (kind_ == IndexKind::Hnsw) {
            w.u32(entry_point_);
            w.u32(max_level_);
            for (const auto& levels : links_) {
                w.u32(static_cast<std::uint32_t>(levels.size()));
                for (const auto& nbrs : levels) {
                    w.u32(static_cast<std::uint32_t>(nbrs.size()));
                    for (auto n : nbrs) w.u32(n);
                }
            }
        }
    }

    static VectorIndex read(std::istream& in) {
        io::BinaryReader r(in);
        r.expect(kIndexMagic);
        VectorIndex idx;
        auto kind = r.u8();
        if (kind > 1) throw ParseError("unknown index kind");
        idx.kind_ = static_cast<IndexKind>(kind);
        idx.encoder_fingerprint_ = r.u64();
        idx.params_.M = r.u32();
        idx.params_.ef_construction = r.u32();
        idx.params_.ef_search = r.u32();
        idx.params_.seed = r.u64();
        idx.dim_ = r.u64();
        const std::uint64_t n = r.u64();
        if (n == 0 || idx.dim_ == 0) throw ParseError("empty index file");
        idx.concept_ids_.reserve(n);
        idx.synonyms_.reserve(n);
        idx.vectors_.resize(n * idx.dim_);
        for (std::uint64_t i = 0; i < n; ++i) {
            idx.concept_ids_.push_back(r.str());
            idx.synonyms_.push_back(r.str());
            r.f64s(std::span<double>(idx.vectors_.data() + i * idx.dim_, idx.dim_));
        }
        if (idx.kind_ == IndexKind::Hnsw) {
            idx.entry_point_ = r.u32();
            idx.max_level_ = r.u32();
            if (idx.entry_point_ >= n) throw ParseError("corrupt HNSW entry point");
            idx.links_.resize(n);
            for (auto& levels : idx.links_) {
                levels.resize(r.u32());
                if (levels.empty()) throw ParseError("corrupt HNSW node");
                for (auto& nbrs : levels) {
                    nbrs.resize(r.u32());
                    for (auto& x : nbrs) {
                        x = r.u32();
                        if (x >= n) throw ParseError("corrupt HNSW neighbor id");
                    }
                }
            }
        }
        return idx;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write index: " + path);
        write(out);
        if (!out) throw Error("failed writing index: " + path);
    }

    static VectorIndex load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open index: " + path);
        return read(in);
    }

private:
    struct Scored {
        double score;
        std::uint32_t id;
    };

    bool ranks_before(const Scored& a, const Scored& b) const {
        if (a.score != b.score) return a.score > b.score;
        const auto& ca = concept_ids_[a.id];
        const auto& cb = concept_ids_[b.id];
        if (ca != cb) return ca < cb;
        if (synonyms_[a.id] != synonyms_[b.id]) return synonyms_[a.id] < synonyms_[b.id];
        return a.id < b.id;
    }

    void store_entries(const std::vector<IndexEntry>& entries) {
        if (entries.empty()) throw ValidationError("cannot build an index from no entries");
        dim_ = entries.front().vector.dim();
        if (dim_ == 0) throw ValidationError("entry 0 has an empty vector");
        vectors_.reserve(entries.size() * dim_);
        for (std::size_t i = 0; i < entries.size(); ++i) {
            const auto& e = entries[i];
            if (e.vector.dim() != dim_)
                throw ValidationError("entry " + std::to_string(i) + " (" + e.concept_id + ", '" + e.synonym +
                                      "') has dimension " + std::to_string(e.vector.dim()) + ", expected " +
                                      std::to_string(dim_));
            if (std::abs(l2_norm(e.vector.values) - 1.0) > 1e-6)
                throw ValidationError("entry " + std::to_string(i) + " is not unit-norm");
            vectors_.insert(vectors_.end(), e.vector.values.begin(), e.vector.values.end());
            concept_ids_.push_back(e.concept_id);
            synonyms_.push_back(e.synonym);
        }
        if (entries.size() > std::numeric_limits<std::uint32_t>::max())
            throw ValidationError("too many index entries");
    }

    // ---- HNSW ------------------------------------------------------------

    // Candidate ordering inside the graph: higher similarity first, lower id on ties.
    struct Closer {
        bool operator()(const Scored& a, const Scored& b) const {
            return a.score != b.score ? a.score > b.score : a.id < b.id;
        }
    };
    // Max-heap on "further" (top is the furthest element).
    struct FurtherOnTop {
        bool operator()(const Scored& a, const Scored& b) const { return Closer{}(a, b); }
    };
    // Max-heap on "closer" (top is the closest element).
    struct CloserOnTop {
        bool operator()(const Scored& a, const Scored& b) const { return Closer{}(b, a); }
    };

    double sim(std::span<const double> q, std::uint32_t id) const { return dot(q, vector(id)); }

    // Layer 0 holds 4M links: with the default M and ef_search this keeps
    // recall@10 above 0.95 on high-dimensional data where 2M does not.
    static constexpr std::size_t kLayer0Factor = 4;
    std::size_t max_links(std::size_t level) const { return level == 0 ? kLayer0Factor * params_.M : params_.M; }

    std::vector<Scored> search_layer(std::span<const double> q, const std::vector<Scored>& entry,
                                     std::size_t ef, std::size_t level, std::vector<char>& visited) const {
        std::priority_queue<Scored, std::vector<Scored>, CloserOnTop> candidates;
        std::priority_queue<Scored, std::vector<Scored>, FurtherOnTop> found;
        for (const auto& e : entry) {
            visited[e.id] = 1;
            candidates.push(e);
            found.push(e);
        }
        while (found.size() > ef) found.pop();
        while (!candidates.empty()) {
            Scored c = candidates.top();
            if (found.size() >= ef && Closer{}(found.top(), c)) break;
            candidates.pop();
            for (std::uint32_t nb : links_[c.id][level]) {
                if (visited[nb]) continue;
                visited[nb] = 1;
                Scored s{sim(q, nb), nb};
                if (found.size() < ef || Closer{}(s, found.top())) {
                    candidates.push(s);
                    found.push(s);
                    if (found.size() > ef) found.pop();
                }
            }
        }
        std::vector<Scored> out;
        out.reserve(found.size());
        while (!found.empty()) {
            out.push_back(found.top());
            found.pop();
        }
        std::reverse(out.begin(), out.end());  // closest first
        return out;
    }

    Scored greedy_descend(std::span<const double> q, Scored cur, std::size_t level) const {
        bool changed = true;
        while (changed) {
            changed = false;
            for (std::uint32_t nb : links_[cur.id][level]) {
                Scored s{sim(q, nb), nb};
                if (Closer{}(s, cur)) {
                    cur = s;
                    changed = true;
                }
            }
        }
        return cur;
    }

    /// Neighbor-diversity heuristic: keep a candidate only if it is closer to
    /// the base than to every neighbor already kept; free slots are then filled
    /// with the closest pruned candidates. `candidates` is closest first.
    std::vector<std::uint32_t> select_neighbors(const std::vector<Scored>& candidates, std::size_t m) const {
        std::vector<std::uint32_t> kept, pruned;
        for (const auto& c : candidates) {
            if (kept.size() >= m) break;
            bool good = true;
            for (std::uint32_t r : kept) {
                if (sim(vector(c.id), r) > c.score) {
                    good = false;
                    break;
                }
            }
            (good ? kept : pruned).push_back(c.id);
        }
        for (std::size_t i = 0; i < pruned.size() && kept.size() < m; ++i) kept.push_back(pruned[i]);
        return kept;
    }

    // Back-link; an overflowing list drops its furthest link.
    void connect(std::uint32_t node, std::uint32_t nb, std::size_t level) {
        auto& list = links_[nb][level];
        list.push_back(node);
        if (list.size() <= max_links(level)) return;
        std::vector<Scored> cands;
        cands.reserve(list.size());
        for (std::uint32_t x : list) cands.push_back({sim(vector(nb), x), x});
        std::sort(cands.begin(), cands.end(), Closer{});
        cands.pop_back();
        list.clear();
        for (const auto& c : cands) list.push_back(c.id);
    }

    void build_graph() {
        const std::size_t n = size();
        const double ml = 1.0 / std::log(static_cast<double>(params_.M));
        Rng rng(params_.seed);
        links_.assign(n, {});
        std::vector<char> visited(n, 0);

        for (std::uint32_t node = 0; node < n; ++node) {
            const double u = 1.0 - rng.uniform();  // (0, 1]
            const auto level = static_cast<std::uint32_t>(std::floor(-std::log(u) * ml));
            links_[node].resize(level + 1);
            if (node == 0) {
                entry_point_ = 0;
                max_level_ = level;
                continue;
            }
            auto q = vector(node);
            Scored cur{sim(q, entry_point_), entry_point_};
            for (std::size_t l = max_level_; l > level; --l) cur = greedy_descend(q, cur, l);

            std::vector<Scored> entry{cur};
            for (std::size_t l = std::min<std::size_t>(level, max_level_) + 1; l-- > 0;) {
                std::fill(visited.begin(), visited.end(), 0);
                auto found = search_layer(q, entry, params_.ef_construction, l, visited);
                auto chosen = select_neighbors(found, max_links(l));
                links_[node][l] = chosen;
                for (std::uint32_t nb : chosen) connect(node, nb, l);
                entry = std::move(found);
            }
            if (level > max_level_) {
                max_level_ = level;
                entry_point_ = node;
            }
        }
    }

    std::vector<Scored> hnsw_search(std::span<const double> q, std::size_t ef) const {
        Scored cur{sim(q, entry_point_), entry_point_};
        for (std::size_t l = max_level_; l > 0; --l) cur = greedy_descend(q, cur, l);
        std::vector<char> visited(size(), 0);
        return search_layer(q, {cur}, ef, 0, visited);
    }

    IndexKind kind_ = IndexKind::Exact;
    HnswParams params_;
    std::uint64_t encoder_fingerprint_ = 0;
    std::size_t dim_ = 0;
    std::vector<double> vectors_;
    std::vector<std::string> concept_ids_;
    std::vector<std::string> synonyms_;

    std::uint32_t entry_point_ = 0;
    std::uint32_t max_level_ = 0;
    std::vector<std::vector<std::vector<std::uint32_t>>> links_;  // node -> level -> neighbors
};

/// One index entry per synonym of every concept.
inline std::vector<IndexEntry> encode_store(const ConceptStore& store, const TextEncoder& encoder) {
    std::vector<IndexEntry> out;
    out.reserve(store.synonym_count());
    for (const auto& [id, c] : store)
        for (const auto& s : c.synonyms) out.push_back({encoder.encode(s), id, s});
    return out;
}

/// Resolves mentions to the top-k distinct concepts of an index.
class Linker {
public:
    Linker(const TextEncoder& encoder, const VectorIndex& index) : encoder_(encoder), index_(index) {
        if (encoder.dim() != index.dim())
            throw Error("encoder dimension " + std::to_string(encoder.dim()) + " does not match index dimension " +
                        std::to_string(index.dim()));
        if (index.encoder_fingerprint() != 0 && index.encoder_fingerprint() != encoder.fingerprint())
            throw Error("index was built with a different encoder");
    }

    /// Over-fetches max(4k, 32) entries, keeps each concept's best hit, and widens
    /// the fetch while fewer than k distinct concepts were found.
    std::vector<RetrievalResult> link(std::string_view mention, std::size_t k) const {
        if (k == 0) throw Error("k must be at least 1");
        auto query = encoder_.encode(mention);
        std::size_t fetch = std::max<std::size_t>(4 * k, 32);
        while (true) {
            fetch = std::min(fetch, index_.size());
            auto hits = index_.search(query, fetch, std::max<std::size_t>(index_.params().ef_search, fetch));
            std::vector<RetrievalResult> out;
            std::unordered_set<std::string> seen;
            for (auto& h : hits) {
                if (!seen.insert(h.concept_id).second) continue;
                h.rank = out.size() + 1;
                out.push_back(std::move(h));
                if (out.size() == k) break;
            }
            if (out.size() == k || fetch >= index_.size()) return out;
            fetch *= 2;
        }
    }

    const VectorIndex& index() const noexcept { return index_; }

private:
    const TextEncoder& encoder_;
    const VectorIndex& index_;
};

}  // namespace adenorm
