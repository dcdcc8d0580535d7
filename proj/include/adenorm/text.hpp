#pragma once

// Text canonicalization, hashing and seeded randomness shared by every module.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/locid.h>

#include "adenorm/error.hpp"

namespace adenorm {

/// Canonical form used for deduplication and encoding:
/// NFKC, lowercase (root locale), whitespace runs collapsed to one space, trimmed.
inline std::string normalize_text(std::string_view text) {
    UErrorCode status = U_ZERO_ERROR;
    const icu::Normalizer2* nfkc = icu::Normalizer2::getNFKCInstance(status);
    if (U_FAILURE(status)) throw Error("ICU NFKC normalizer unavailable");

    icu::UnicodeString src = icu::UnicodeString::fromUTF8(
        icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
    icu::UnicodeString normed = nfkc->normalize(src, status);
    if (U_FAILURE(status)) throw Error("NFKC normalization failed");
    normed.toLower(icu::Locale::getRoot());

    icu::UnicodeString collapsed;
    bool pending_space = false;
    for (int32_t i = 0; i < normed.length();) {
        UChar32 c = normed.char32At(i);
        i += U16_LENGTH(c);
        if (u_isUWhiteSpace(c)) {
            pending_space = !collapsed.isEmpty();
            continue;
        }
        if (pending_space) {
            collapsed.append(static_cast<UChar>(u' '));
            pending_space = false;
        }
        collapsed.append(c);
    }

    std::string out;
    collapsed.toUTF8String(out);
    return out;
}

/// Splits valid UTF-8 into one string per code point.
inline std::vector<std::string_view> utf8_code_points(std::string_view text) {
    std::vector<std::string_view> out;
    out.reserve(text.size());
    std::size_t i = 0;
    while (i < text.size()) {
        auto lead = static_cast<unsigned char>(text[i]);
        std::size_t len = 1;
        if (lead >= 0xF0) len = 4;
        else if (lead >= 0xE0) len = 3;
        else if (lead >= 0xC0) len = 2;
        if (i + len > text.size()) len = text.size() - i;
        out.push_back(text.substr(i, len));
        i += len;
    }
    return out;
}

/// FNV-1a, 64-bit. Offset basis 0xcbf29ce484222325, prime 0x100000001b3.
inline constexpr std::uint64_t kFnvOffsetBasis = 0xcbf29ce484222325ULL;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

inline constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                       std::uint64_t state = kFnvOffsetBasis) noexcept {
    for (char ch : bytes) {
        state ^= static_cast<unsigned char>(ch);
        state *= kFnvPrime;
    }
    return state;
}

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Component seed derivation: splitmix64(root XOR fnv1a64(component)).
inline constexpr std::uint64_t derive_seed(std::uint64_t root, std::string_view component) noexcept {
    return splitmix64(root ^ fnv1a64(component));
}

/// Seeded generator with platform-independent helpers. std::mt19937_64 is fully
/// specified by the standard; the distribution helpers below are ours because
/// the standard library distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        // Rejection keeps the result unbiased.
        const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(items[i - 1], items[j]);
        }
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        shuffle(std::span<T>(items));
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace adenorm
