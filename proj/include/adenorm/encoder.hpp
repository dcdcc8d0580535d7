#pragma once

// Text encoders: a hashed character n-gram encoder with a trainable projection,
// and a lookup encoder serving externally computed embeddings.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "adenorm/error.hpp"
#include "adenorm/io.hpp"
#include "adenorm/text.hpp"

namespace adenorm {

inline constexpr double kDegenerateNorm = 1e-12;

/// Fixed-dimension real vector. Encoders always return unit-norm vectors.
struct EmbeddingVector {
    std::vector<double> values;

    std::size_t dim() const noexcept { return values.size(); }
    bool operator==(const EmbeddingVector&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Scales to unit L2 norm; throws EncodeError below the degenerate threshold.
inline void normalize_in_place(std::span<double> v) {
    double n = l2_norm(v);
    if (!(n >= kDegenerateNorm)) throw EncodeError("degenerate embedding");
    for (double& x : v) x /= n;
}

/// Cosine of two unit vectors.
inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dim() != b.dim()) throw Error("dimension mismatch in cosine");
    return dot(a.values, b.values);
}

/// Dense row-major matrix of doubles; rows are embeddings.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
    std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

    std::vector<double>& data() noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

using EmbeddingMatrix = Matrix;

struct EncoderConfig {
    std::uint32_t dim = 256;
    std::uint32_t ngram_min = 3;
    std::uint32_t ngram_max = 5;
    std::uint32_t num_buckets = 262144;
    std::uint64_t seed = 0;

    void validate() const {
        if (dim == 0) throw ValidationError("encoder dim must be positive");
        if (ngram_min < 1 || ngram_min > ngram_max)
            throw ValidationError("encoder requires 1 <= ngram_min <= ngram_max");
        if (num_buckets < dim) throw ValidationError("encoder requires dim <= num_buckets");
    }

    bool operator==(const EncoderConfig&) const = default;
};

inline constexpr char kNgramBoundary = '#';

/// Bucket index of every character n-gram (n in [ngram_min, ngram_max]) of
/// `#text#`, counted over code points, hashed with FNV-1a 64 modulo num_buckets.
/// `text` is expected to be normalized already.
inline std::vector<std::uint32_t> hash_ngrams(std::string_view text, const EncoderConfig& config) {
    if (text.empty()) throw EncodeError("empty input");
    std::string padded;
    padded.reserve(text.size() + 2);
    padded += kNgramBoundary;
    padded += text;
    padded += kNgramBoundary;

    auto cps = utf8_code_points(padded);
    std::vector<std::uint32_t> out;
    for (std::size_t n = config.ngram_min; n <= config.ngram_max; ++n) {
        if (n > cps.size()) break;
        for (std::size_t start = 0; start + n <= cps.size(); ++start) {
            const char* first = cps[start].data();
            const char* last = cps[start + n - 1].data() + cps[start + n - 1].size();
            std::uint64_t h = fnv1a64(std::string_view(first, static_cast<std::size_t>(last - first)));
            out.push_back(static_cast<std::uint32_t>(h % config.num_buckets));
        }
    }
    return out;
}

/// Common interface for anything that maps text to unit vectors.
class TextEncoder {
public:
    virtual ~TextEncoder() = default;

    virtual std::size_t dim() const = 0;
    virtual EmbeddingVector encode(std::string_view text) const = 0;
    /// Stable content hash; index files record it to detect encoder mismatches.
    virtual std::uint64_t fingerprint() const = 0;

    /// Row i is encode(texts[i]). An empty text fails with its index.
    EmbeddingMatrix encode_batch(std::span<const std::string> texts) const {
        Matrix out(texts.size(), dim());
        for (std::size_t i = 0; i < texts.size(); ++i) {
            EmbeddingVector v;
            try {
                v = encode(texts[i]);
            } catch (const EncodeError& e) {
                throw EncodeError("batch item " + std::to_string(i) + ": " + e.what());
            }
            std::copy(v.values.begin(), v.values.end(), out.row(i).begin());
        }
        return out;
    }
};

/// Parameters of the hashed n-gram encoder.
/// embedding(t) = normalize(projection * mean(bucket rows of t's n-grams)).
struct TrainableEncoderState {
    EncoderConfig config;
    std::vector<float> bucket_embeddings;  // num_buckets x dim, row-major
    std::vector<float> projection;         // dim x dim, row-major

    /// Buckets ~ U(-1/sqrt(dim), 1/sqrt(dim)) under config.seed; projection = identity.
    static TrainableEncoderState initialize(const EncoderConfig& config) {
        config.validate();
        TrainableEncoderState s;
        s.config = config;
        const std::size_t d = config.dim;
        s.bucket_embeddings.resize(static_cast<std::size_t>(config.num_buckets) * d);
        Rng rng(config.seed);
        const double bound = 1.0 / std::sqrt(static_cast<double>(d));
        for (float& x : s.bucket_embeddings) x = static_cast<float>(rng.uniform(-bound, bound));
        s.projection.assign(d * d, 0.0f);
        for (std::size_t i = 0; i < d; ++i) s.projection[i * d + i] = 1.0f;
        return s;
    }

    void validate() const {
        config.validate();
        const std::size_t d = config.dim;
        if (bucket_embeddings.size() != static_cast<std::size_t>(config.num_buckets) * d)
            throw ValidationError("bucket_embeddings shape does not match config");
        if (projection.size() != d * d) throw ValidationError("projection shape does not match config");
        for (float x : bucket_embeddings)
            if (!std::isfinite(x)) throw ValidationError("non-finite bucket embedding");
        for (float x : projection)
            if (!std::isfinite(x)) throw ValidationError("non-finite projection entry");
    }

    bool operator==(const TrainableEncoderState&) const = default;
};

/// Intermediate values of one forward pass, kept for backpropagation.
struct EncoderForward {
    std::vector<std::uint32_t> grams;
    std::vector<double> pooled;  // mean of bucket rows
    std::vector<double> raw;     // projection * pooled
    double norm = 0.0;
    std::vector<double> unit;    // raw / norm
};

/// Forward pass over precomputed n-gram buckets.
inline EncoderForward encoder_forward(const TrainableEncoderState& state,
                                      std::vector<std::uint32_t> grams) {
    const std::size_t d = state.config.dim;
    EncoderForward f;
    f.grams = std::move(grams);
    f.pooled.assign(d, 0.0);
    for (std::uint32_t g : f.grams) {
        const float* row = state.bucket_embeddings.data() + static_cast<std::size_t>(g) * d;
        for (std::size_t j = 0; j < d; ++j) f.pooled[j] += row[j];
    }
    const double inv = 1.0 / static_cast<double>(f.grams.size());
    for (double& x : f.pooled) x *= inv;

    f.raw.assign(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const float* prow = state.projection.data() + i * d;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += prow[j] * f.pooled[j];
        f.raw[i] = s;
    }
    f.norm = l2_norm(f.raw);
    if (!(f.norm >= kDegenerateNorm)) throw EncodeError("degenerate embedding");
    f.unit.resize(d);
    for (std::size_t i = 0; i < d; ++i) f.unit[i] = f.raw[i] / f.norm;
    return f;
}

inline constexpr std::string_view kEncoderMagic = "adenorm-enc-v1\n";

inline void write_checkpoint(const TrainableEncoderState& state, std::ostream& out) {
    io::BinaryWriter w(out);
    w.raw(kEncoderMagic);
    w.u32(state.config.dim);
    w.u32(state.config.ngram_min);
    w.u32(state.config.ngram_max);
    w.u32(state.config.num_buckets);
    w.u64(state.config.seed);
    w.f32s(state.bucket_embeddings);
    w.f32s(state.projection);
}

inline TrainableEncoderState read_checkpoint(std::istream& in) {
    io::BinaryReader r(in);
    r.expect(kEncoderMagic);
    TrainableEncoderState s;
    s.config.dim = r.u32();
    s.config.ngram_min = r.u32();
    s.config.ngram_max = r.u32();
    s.config.num_buckets = r.u32();
    s.config.seed = r.u64();
    s.config.validate();
    const std::size_t d = s.config.dim;
    s.bucket_embeddings.resize(static_cast<std::size_t>(s.config.num_buckets) * d);
    s.projection.resize(d * d);
    r.f32s(s.bucket_embeddings);
    r.f32s(s.projection);
    s.validate();
    return s;
}

inline void save_checkpoint(const TrainableEncoderState& state, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write checkpoint: " + path);
    write_checkpoint(state, out);
    if (!out) throw Error("failed writing checkpoint: " + path);
}

inline TrainableEncoderState load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open checkpoint: " + path);
    return read_checkpoint(in);
}

inline std::uint64_t fingerprint(const TrainableEncoderState& state) {
    std::uint64_t h = kFnvOffsetBasis;
    auto mix_u64 = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xFF;
            h *= kFnvPrime;
        }
    };
    mix_u64(state.config.dim);
    mix_u64(state.config.ngram_min);
    mix_u64(state.config.ngram_max);
    mix_u64(state.config.num_buckets);
    mix_u64(state.config.seed);
    auto mix_floats = [&](const std::vector<float>& xs) {
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(xs.data()), xs.size() * sizeof(float)), h);
    };
    mix_floats(state.bucket_embeddings);
    mix_floats(state.projection);
    return h;
}

/// The hashed n-gram encoder over a fixed parameter state.
class HashingEncoder final : public TextEncoder {
public:
    explicit HashingEncoder(TrainableEncoderState state)
        : state_(std::make_shared<const TrainableEncoderState>(std::move(state))),
          fingerprint_(adenorm::fingerprint(*state_)) {
        state_->validate();
    }

    std::size_t dim() const override { return state_->config.dim; }

    EmbeddingVector encode(std::string_view text) const override {
        auto norm = normalize_text(text);
        auto f = encoder_forward(*state_, hash_ngrams(norm, state_->config));
        return EmbeddingVector{std::move(f.unit)};
    }

    std::uint64_t fingerprint() const override { return fingerprint_; }

    const TrainableEncoderState& state() const noexcept { return *state_; }

private:
    std::shared_ptr<const TrainableEncoderState> state_;
    std::uint64_t fingerprint_;
};

/// Serves stored vectors keyed by normalized text.
/// File format: JSON Lines `{"text": "...", "vec": [f, ...]}`.
class LookupEncoder final : public TextEncoder {
public:
    static LookupEncoder parse(std::istream& in) {
        LookupEncoder enc;
        std::string line;
        std::size_t line_no = 0;
        std::uint64_t h = kFnvOffsetBasis;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            h = fnv1a64(line, h);
            h = fnv1a64("\n", h);
            nlohmann::json j;
            try {
                j = nlohmann::json::parse(line);
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
            }
            if (!j.contains("text") || !j["text"].is_string() || !j.contains("vec") ||
                !j["vec"].is_array())
                throw ParseError("expected {\"text\": string, \"vec\": array}", line_no);
            std::vector<double> vec;
            for (const auto& x : j["vec"]) {
                if (!x.is_number()) throw ParseError("non-numeric vector entry", line_no);
                vec.push_back(x.get<double>());
            }
            if (vec.empty()) throw ParseError("empty vector", line_no);
            if (enc.dim_ == 0) enc.dim_ = vec.size();
            if (vec.size() != enc.dim_)
                throw ParseError("inconsistent dimensions: expected " + std::to_string(enc.dim_) +
                                     ", got " + std::to_string(vec.size()),
                                 line_no);
            try {
                normalize_in_place(vec);
            } catch (const EncodeError&) {
                throw ParseError("zero vector", line_no);
            }
            enc.table_[normalize_text(j["text"].get<std::string>())] = std::move(vec);
        }
        if (enc.table_.empty()) throw ParseError("no embeddings in file");
        enc.fingerprint_ = h;
        return enc;
    }

    static LookupEncoder load(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw Error("cannot open embeddings file: " + path);
        return parse(in);
    }

    std::size_t dim() const override { return dim_; }
    std::size_t size() const noexcept { return table_.size(); }

    EmbeddingVector encode(std::string_view text) const override {
        auto norm = normalize_text(text);
        if (norm.empty()) throw EncodeError("empty input");
        auto it = table_.find(norm);
        if (it == table_.end()) throw EncodeError("out of vocabulary: '" + norm + "'");
        return EmbeddingVector{it->second};
    }

    std::uint64_t fingerprint() const override { return fingerprint_; }

private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> table_;
    std::uint64_t fingerprint_ = 0;
};

}  // namespace adenorm
