#include <catch_amalgamated.hpp>

#include <cmath>
#include <set>
#include <sstream>
#include <unordered_set>

#include "adenorm/encoder.hpp"
#include "test_support.hpp"

using namespace adenorm;

namespace {

EncoderConfig small_config(std::uint32_t dim = 32, std::uint32_t buckets = 4096) {
    EncoderConfig c;
    c.dim = dim;
    c.num_buckets = buckets;
    c.seed = 17;
    return c;
}

std::string random_word(Rng& rng, std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += static_cast<char>('a' + rng.below(26));
    return s;
}

}  // namespace

TEST_CASE("hash_ngrams enumerates bounded n-grams", "[encoder][hash]") {
    auto cfg = small_config();
    auto grams = hash_ngrams("ab", cfg);
    REQUIRE(grams.size() == 3);
    std::multiset<std::uint32_t> expected;
    for (const char* g : {"#ab", "ab#", "#ab#"}) expected.insert(fnv1a64(g) % cfg.num_buckets);
    CHECK(std::multiset<std::uint32_t>(grams.begin(), grams.end()) == expected);

    // "#abcd#": 4 trigrams, 3 four-grams, 2 five-grams.
    CHECK(hash_ngrams("abcd", cfg).size() == 9);
    // Multibyte characters count as one position.
    CHECK(hash_ngrams("é", cfg).size() == 1);
}

TEST_CASE("hash_ngrams is deterministic and rejects empty text", "[encoder][hash]") {
    auto cfg = small_config();
    CHECK(hash_ngrams("dry mouth", cfg) == hash_ngrams("dry mouth", cfg));
    CHECK_THROWS_WITH(hash_ngrams("", cfg), "empty input");
}

TEST_CASE("bucket distribution is near-uniform (chi-square)", "[encoder][hash][statistics]") {
    Rng rng(12345);
    std::unordered_set<std::string> grams;
    EncoderConfig probe = small_config();
    probe.ngram_min = 3;
    probe.ngram_max = 5;
    for (int i = 0; i < 10000; ++i) {
        std::string padded = "#" + random_word(rng, 4 + rng.below(9)) + "#";
        for (std::size_t n = 3; n <= 5; ++n)
            for (std::size_t s = 0; s + n <= padded.size(); ++s) grams.insert(padded.substr(s, n));
    }
    REQUIRE(grams.size() > 50000);

    for (std::uint32_t buckets : {1024u, 1000u}) {
        std::vector<double> counts(buckets, 0.0);
        for (const auto& g : grams) counts[fnv1a64(g) % buckets] += 1.0;
        const double expected = static_cast<double>(grams.size()) / buckets;
        double chi2 = 0.0;
        for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
        const double dof = buckets - 1.0;
        INFO("buckets=" << buckets << " chi2=" << chi2);
        CHECK(chi2 < dof + 5.0 * std::sqrt(2.0 * dof));
        CHECK(chi2 > dof - 5.0 * std::sqrt(2.0 * dof));
    }
}

TEST_CASE("initialization follows the documented scheme", "[encoder]") {
    auto cfg = small_config(16, 256);
    auto st = TrainableEncoderState::initialize(cfg);
    REQUIRE(st.bucket_embeddings.size() == 256 * 16);
    const double bound = 1.0 / std::sqrt(16.0);
    for (float x : st.bucket_embeddings) {
        REQUIRE(std::abs(x) <= bound);
    }
    for (std::size_t i = 0; i < 16; ++i)
        for (std::size_t j = 0; j < 16; ++j) REQUIRE(st.projection[i * 16 + j] == (i == j ? 1.0f : 0.0f));
    CHECK(TrainableEncoderState::initialize(cfg) == st);

    EncoderConfig bad = cfg;
    bad.num_buckets = 8;
    CHECK_THROWS_AS(TrainableEncoderState::initialize(bad), ValidationError);
    bad = cfg;
    bad.ngram_min = 6;
    CHECK_THROWS_AS(TrainableEncoderState::initialize(bad), ValidationError);
}

TEST_CASE("encode returns unit vectors deterministically", "[encoder][property]") {
    HashingEncoder enc(TrainableEncoderState::initialize(small_config()));
    Rng rng(8);
    for (int i = 0; i < 200; ++i) {
        std::string text = random_word(rng, 1 + rng.below(20));
        if (rng.below(3) == 0) text += " " + random_word(rng, 1 + rng.below(6));
        auto v = enc.encode(text);
        REQUIRE(v.dim() == 32);
        REQUIRE(std::abs(l2_norm(v.values) - 1.0) <= 1e-6);
        REQUIRE(enc.encode(text) == v);
    }
    // Encoding goes through the canonical text form.
    CHECK(enc.encode("  Dry   MOUTH ") == enc.encode("dry mouth"));
    CHECK_THROWS_AS(enc.encode("   "), EncodeError);
}

TEST_CASE("cosine is exactly symmetric", "[encoder][property]") {
    HashingEncoder enc(TrainableEncoderState::initialize(small_config()));
    auto a = enc.encode("stomach ache");
    auto b = enc.encode("abdominal pain");
    CHECK(cosine(a, b) == cosine(b, a));
}

TEST_CASE("zero projection gives a degenerate embedding error", "[encoder][errors]") {
    auto st = TrainableEncoderState::initialize(small_config());
    std::fill(st.projection.begin(), st.projection.end(), 0.0f);
    HashingEncoder enc(st);
    CHECK_THROWS_WITH(enc.encode("headache"), "degenerate embedding");
}

TEST_CASE("texts with no shared buckets are orthogonal under one-hot rows", "[encoder]") {
    // dim == num_buckets, identity projection, bucket row r = e_r: the embedding
    // is the normalized bucket histogram.
    EncoderConfig cfg = small_config(512, 512);
    auto st = TrainableEncoderState::initialize(cfg);
    std::fill(st.bucket_embeddings.begin(), st.bucket_embeddings.end(), 0.0f);
    for (std::size_t r = 0; r < 512; ++r) st.bucket_embeddings[r * 512 + r] = 1.0f;

    auto ga = hash_ngrams("abc", cfg);
    auto gb = hash_ngrams("xyz", cfg);
    std::set<std::uint32_t> sa(ga.begin(), ga.end()), sb(gb.begin(), gb.end());
    for (auto g : sa) REQUIRE_FALSE(sb.contains(g));

    HashingEncoder enc(st);
    CHECK(cosine(enc.encode("abc"), enc.encode("xyz")) == 0.0);
    CHECK(cosine(enc.encode("abc"), enc.encode("abc")) == Catch::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("encode_batch matches per-item encoding", "[encoder][batch]") {
    HashingEncoder enc(TrainableEncoderState::initialize(small_config()));
    std::vector<std::string> texts{"a", "a", "nausea", "feeling sick"};
    auto m = enc.encode_batch(texts);
    REQUIRE(m.rows() == 4);
    REQUIRE(m.cols() == 32);
    for (std::size_t i = 0; i < texts.size(); ++i) {
        auto v = enc.encode(texts[i]);
        for (std::size_t j = 0; j < 32; ++j) REQUIRE(m(i, j) == v.values[j]);
    }
    for (std::size_t j = 0; j < 32; ++j) CHECK(m(0, j) == m(1, j));

    std::vector<std::string> bad{"ok", " \t", "fine"};
    CHECK_THROWS_WITH(enc.encode_batch(bad), Catch::Matchers::ContainsSubstring("batch item 1"));
}

TEST_CASE("encode_batch handles 10k texts", "[encoder][batch][resources]") {
    HashingEncoder enc(TrainableEncoderState::initialize(small_config(16, 1024)));
    Rng rng(1);
    std::vector<std::string> texts;
    for (int i = 0; i < 10000; ++i) texts.push_back(random_word(rng, 3 + rng.below(10)));
    auto m = enc.encode_batch(texts);
    REQUIRE(m.rows() == 10000);
    CHECK(m.data().size() == 10000u * 16u);
    for (std::size_t i = 0; i < m.rows(); i += 997) CHECK(std::abs(l2_norm(m.row(i)) - 1.0) <= 1e-6);
}

TEST_CASE("checkpoints round-trip bit-exactly", "[encoder][checkpoint]") {
    auto st = TrainableEncoderState::initialize(small_config(8, 64));
    st.projection[3] = 0.25f;
    std::stringstream buf;
    write_checkpoint(st, buf);
    CHECK(buf.str().rfind("adenorm-enc-v1", 0) == 0);
    auto back = read_checkpoint(buf);
    CHECK(back == st);
    CHECK(fingerprint(back) == fingerprint(st));

    back.bucket_embeddings[0] += 1.0f;
    CHECK(fingerprint(back) != fingerprint(st));

    std::stringstream bad("adenorm-enc-v0\n....");
    CHECK_THROWS_AS(read_checkpoint(bad), ParseError);

    std::stringstream truncated(buf.str().substr(0, 40));
    CHECK_THROWS_AS(read_checkpoint(truncated), ParseError);
}

TEST_CASE("lookup encoder serves stored vectors", "[encoder][external]") {
    std::ostringstream file;
    file << "{\"text\": \"Headache\", \"vec\": [";
    for (int i = 0; i < 384; ++i) file << (i ? "," : "") << (i == 0 ? 3.0 : (i == 1 ? 4.0 : 0.0));
    file << "]}\n";
    std::istringstream in(file.str());
    auto enc = LookupEncoder::parse(in);
    CHECK(enc.dim() == 384);
    auto v = enc.encode("headache");
    CHECK(v.values[0] == Catch::Approx(0.6));
    CHECK(v.values[1] == Catch::Approx(0.8));
    CHECK_THROWS_WITH(enc.encode("unseen"), Catch::Matchers::ContainsSubstring("out of vocabulary"));
}

TEST_CASE("lookup encoder rejects inconsistent dimensions", "[encoder][external][errors]") {
    std::ostringstream file;
    file << "{\"text\": \"a\", \"vec\": [";
    for (int i = 0; i < 256; ++i) file << (i ? "," : "") << 1;
    file << "]}\n{\"text\": \"b\", \"vec\": [";
    for (int i = 0; i < 384; ++i) file << (i ? "," : "") << 1;
    file << "]}\n";
    std::istringstream in(file.str());
    CHECK_THROWS_WITH(LookupEncoder::parse(in), Catch::Matchers::ContainsSubstring("inconsistent dimensions"));

    std::istringstream junk("{not json}\n");
    CHECK_THROWS_AS(LookupEncoder::parse(junk), ParseError);
}
