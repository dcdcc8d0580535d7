// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "adenorm/cli.hpp"
#include "adenorm/losses.hpp"
#include "adenorm/synthetic.hpp"
#include "test_support.hpp"

using namespace adenorm;

namespace {

struct Outcome {
    bool ok = true;
    std::string detail;
};

class Suite {
public:
    void check(const std::string& name, double budget_s, const std::function<Outcome()>& body) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = body();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (secs > budget_s) {
            o.ok = false;
            o.detail += (o.detail.empty() ? "" : "; ") + std::string("over time budget");
        }
        char timing[64];
        std::snprintf(timing, sizeof timing, "%.2fs/%.0fs", secs, budget_s);
        std::cout << (o.ok ? "PASS " : "FAIL ") << name << " [" << timing << "]"
                  << (o.detail.empty() ? "" : " " + o.detail) << std::endl;
        failures_ += o.ok ? 0 : 1;
    }
    int failures() const { return failures_; }

private:
    int failures_ = 0;
};

std::string fmt(const char* f, double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

Matrix random_rows(Rng& rng, std::size_t n, std::size_t d) {
    Matrix m(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        auto v = testing::random_unit(rng, d);
        std::copy(v.values.begin(), v.values.end(), m.row(i).begin());
    }
    return m;
}

double grad_rel_error(std::vector<double>& x, const std::vector<double>& analytic, const std::function<double()>& f) {
    constexpr double h = 1e-5;
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + h;
        const double up = f();
        x[i] = saved - h;
        const double down = f();
        x[i] = saved;
        const double g = (up - down) / (2 * h);
        diff += (g - analytic[i]) * (g - analytic[i]);
        na += analytic[i] * analytic[i];
        nn += g * g;
    }
    return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-300});
}

int run_cli(std::vector<std::string> args, std::string* out = nullptr) {
    args.insert(args.begin(), "adenorm");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream o, e;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), o, e);
    if (out) *out = o.str();
    if (code != 0) std::cerr << e.str();
    return code;
}

// Synthetic benchmark files plus the run configuration used by the end-to-end criteria.
struct Bench {
    testing::TempDir dir;
    std::string config = dir.file("run.conf");

    void write(const std::string& sub, const synthetic::Config& cfg) {
        auto b = synthetic::generate(cfg);
        std::filesystem::create_directories(dir.file(sub));
        std::ofstream dict(path(sub, "dictionary.tsv")), defs(path(sub, "definitions.tsv")), sts(path(sub, "sts.tsv")),
            data(path(sub, "heldout.jsonl"));
        write_dictionary(b.store, dict);
        synthetic::write_definitions(b.store, defs);
        synthetic::write_sts(b.sts, sts);
        synthetic::write_dataset(b.heldout, data);
    }
    std::string path(const std::string& sub, const std::string& name) const { return dir.file(sub + "/" + name); }

    Bench() {
        write("main", synthetic::Config{});
        synthetic::Config other;
        other.seed = 99;
        write("other", other);
        testing::write_file(config,
                            "seed = 13\n"
                            "[encoder]\ndim = 64\nnum_buckets = 32768\n"
                            "[lord]\nepochs = 40\nlearning_rate = 0.005\n"
                            "[sts]\nepochs = 10\nlearning_rate = 0.003\nbatch_size = 32\n");
    }

    std::vector<std::string> train_args(const std::string& schedule, const std::string& prefix) const {
        return {"--config", config, "--quiet", "train", "--schedule", schedule, "--dictionary",
                path("main", "dictionary.tsv"), "--definitions", path("main", "definitions.tsv"), "--sts",
                path("main", "sts.tsv"), "--out", prefix};
    }

    // Returns the JSON report of evaluating `ckpt` on `sub`'s held-out synonyms.
    nlohmann::json evaluate(const std::string& ckpt, const std::string& sub, const std::string& index = "") const {
        std::vector<std::string> args{"--config", config, "--quiet", "evaluate", "--checkpoint", ckpt,
                                      "--dataset", path(sub, "heldout.jsonl"), "--json-out", dir.file("report.json")};
        if (index.empty()) {
            args.insert(args.end(), {"--dictionary", path(sub, "dictionary.tsv")});
        } else {
            args.insert(args.end(), {"--index", index});
        }
        if (run_cli(args) != 0) throw Error("evaluate failed");
        return nlohmann::json::parse(testing::read_file(dir.file("report.json")));
    }
};

}  // namespace

int main() {
    Suite suite;

    suite.check("loss oracles match closed forms within 1e-9", 1.0, [] {
        Outcome o;
        for (std::size_t b : {2u, 4u, 8u}) {
            Matrix same(b, 5, 0.0);
            for (std::size_t i = 0; i < b; ++i) same(i, 1) = 1.0;
            o.ok = o.ok && std::abs(info_nce_loss(same, same, 0.05).loss - std::log(double(b))) <= 1e-9;
        }
        Matrix eye(4, 16, 0.0);
        for (std::size_t i = 0; i < 4; ++i) eye(i, i) = 1.0;
        const double l = info_nce_loss(eye, eye, 0.05).loss;
        o.ok = o.ok && std::abs(l - std::log1p(3 * std::exp(-20.0))) <= 1e-9;
        std::vector<double> p{1.0, -1.0, 0.0}, g{1.0, 0.0, 0.5}, p1{-1.0}, g1{1.0};
        o.ok = o.ok && sts_loss(p, g).loss == 0.0 && sts_loss(p1, g1).loss == 1.0;
        o.detail = "orthonormal loss=" + fmt("%.4e", l);
        return o;
    });

    suite.check("analytic gradients match finite differences over 20 seeds", 10.0, [] {
        double worst = 0.0;
        for (std::uint64_t seed = 1; seed <= 20; ++seed) {
            Rng rng(seed);
            Matrix a = random_rows(rng, 8, 16), b = random_rows(rng, 8, 16);
            const double tau = 0.05 + 0.5 * rng.uniform();
            auto l = info_nce_loss(a, b, tau);
            auto f = [&] { return info_nce_loss(a, b, tau).loss; };
            worst = std::max(worst, grad_rel_error(a.data(), l.grad_a.data(), f));
            worst = std::max(worst, grad_rel_error(b.data(), l.grad_b.data(), f));
            std::vector<double> pred(8), gold(8);
            for (std::size_t i = 0; i < 8; ++i) {
                pred[i] = rng.uniform(-0.9, 0.9);
                gold[i] = rng.uniform();
            }
            auto s = sts_loss(pred, gold);
            worst = std::max(worst, grad_rel_error(pred, s.grad, [&] { return sts_loss(pred, gold).loss; }));
        }
        return Outcome{worst <= 1e-4, "max relative error " + fmt("%.2e", worst)};
    });

    suite.check("exact search equals brute force, ties included", 1.0, [] {
        Rng rng(21);
        std::vector<IndexEntry> entries;
        for (int i = 0; i < 90; ++i)
            entries.push_back({testing::random_unit(rng, 32), "C" + std::to_string(i % 40), "s" + std::to_string(i)});
        // Duplicated vectors under other labels force exact score ties.
        for (int i = 0; i < 10; ++i) entries.push_back({entries[i].vector, "D" + std::to_string(9 - i), "dup"});
        auto idx = VectorIndex::build_exact(entries);
        int mismatches = 0;
        for (int q = 0; q < 50; ++q) {
            auto query = q % 5 == 0 ? entries[q].vector : testing::random_unit(rng, 32);
            std::vector<std::tuple<double, std::string, std::string>> all;
            for (const auto& e : entries) all.emplace_back(-dot(query.values, e.vector.values), e.concept_id, e.synonym);
            std::sort(all.begin(), all.end());
            auto got = idx.search(query, 10);
            if (got.size() != 10) ++mismatches;
            for (std::size_t r = 0; r < std::min<std::size_t>(10, got.size()); ++r)
                if (got[r].concept_id != std::get<1>(all[r]) || got[r].synonym != std::get<2>(all[r]) ||
                    got[r].score != -std::get<0>(all[r]) || got[r].rank != r + 1)
                    ++mismatches;
        }
        return Outcome{mismatches == 0, std::to_string(mismatches) + " mismatched ranks over 50 queries"};
    });

    suite.check("HNSW recall@10 >= 0.95 on 10k vectors (d=64, default parameters)", 120.0, [] {
        Rng rng(5);
        std::vector<IndexEntry> entries;
        for (int i = 0; i < 10000; ++i)
            entries.push_back({testing::random_unit(rng, 64), "C" + std::to_string(i), "s" + std::to_string(i)});
        const auto t0 = std::chrono::steady_clock::now();
        auto hnsw = VectorIndex::build_hnsw(entries, HnswParams{});
        const double build = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        auto exact = VectorIndex::build_exact(entries);
        std::size_t found = 0, total = 0;
        for (int q = 0; q < 200; ++q) {
            auto query = testing::random_unit(rng, 64);
            std::set<std::string> got;
            for (const auto& r : hnsw.search(query, 10)) got.insert(r.synonym);
            for (const auto& r : exact.search(query, 10)) found += got.contains(r.synonym);
            total += 10;
        }
        const double recall = double(found) / double(total);
        return Outcome{recall >= 0.95 && build <= 60.0,
                       "recall=" + fmt("%.4f", recall) + " build=" + fmt("%.1fs", build)};
    });

    Bench bench;
    std::string lord_ckpt, multi_ckpt;
    double lord_acc = 0.0;

    suite.check("synthetic benchmark: LORD beats the untrained encoder and STS-LORD-STS keeps pace", 300.0, [&] {
        auto settings = Settings::load(bench.config);
        const std::string base_ckpt = bench.dir.file("base.ckpt");
        save_checkpoint(TrainableEncoderState::initialize(cli::encoder_config(settings)), base_ckpt);
        const double base = bench.evaluate(base_ckpt, "main").at("mean");

        if (run_cli(bench.train_args("lord", bench.dir.file("lord"))) != 0) throw Error("lord training failed");
        lord_ckpt = bench.dir.file("lord.stage1.ckpt");
        lord_acc = bench.evaluate(lord_ckpt, "main").at("mean");

        if (run_cli(bench.train_args("sts-lord-sts", bench.dir.file("multi"))) != 0) throw Error("multi-stage training failed");
        multi_ckpt = bench.dir.file("multi.stage3.ckpt");
        const double multi = bench.evaluate(multi_ckpt, "main").at("mean");

        const bool ok = lord_acc >= base + 20.0 && lord_acc >= 90.0 && multi >= lord_acc - 2.0;
        return Outcome{ok, "untrained=" + format_two_decimals(base) + " lord=" + format_two_decimals(lord_acc) +
                               " sts-lord-sts=" + format_two_decimals(multi)};
    });

    suite.check("aggregation and display format", 1.0, [] {
        auto a = aggregate({70, 71, 70, 71});
        auto one = aggregate({42.0});
        const bool ok = a.mean == 70.5 && std::abs(a.std - 0.5773502691896258) <= 1e-9 &&
                        format_mean_std(60.275, 0.8) == "60.28 ± 0.80" &&
                        format_mean_std(100.0, 0.0) == "100.00 ± 0.00" && one.std == 0.0 && one.single_split;
        return Outcome{ok, format_mean_std(a.mean, a.std)};
    });

    suite.check("fixed seeds give byte-identical checkpoints, indexes and reports", 120.0, [&] {
        if (lord_ckpt.empty()) return Outcome{false, "needs the synthetic benchmark run"};
        if (run_cli(bench.train_args("lord", bench.dir.file("again"))) != 0) throw Error("retraining failed");
        const bool same_ckpt =
            testing::read_file(lord_ckpt) == testing::read_file(bench.dir.file("again.stage1.ckpt"));
        std::vector<std::string> idx_paths;
        for (const char* name : {"a.idx", "b.idx"}) {
            idx_paths.push_back(bench.dir.file(name));
            if (run_cli({"--config", bench.config, "--quiet", "index", "--checkpoint", lord_ckpt, "--dictionary",
                     bench.path("main", "dictionary.tsv"), "--kind", "hnsw", "--out", idx_paths.back()}) != 0)
                throw Error("index failed");
        }
        const bool same_idx = testing::read_file(idx_paths[0]) == testing::read_file(idx_paths[1]);
        const bool same_report =
            bench.evaluate(lord_ckpt, "main", idx_paths[0]).dump() == bench.evaluate(lord_ckpt, "main", idx_paths[1]).dump();
        return Outcome{same_ckpt && same_idx && same_report,
                       std::string("checkpoint ") + (same_ckpt ? "same" : "differs") + ", index " +
                           (same_idx ? "same" : "differs") + ", report " + (same_report ? "same" : "differs")};
    });

    suite.check("retargeting to a new ontology changes only the index", 60.0, [&] {
        if (lord_ckpt.empty()) return Outcome{false, "needs the synthetic benchmark run"};
        const std::string idx = bench.dir.file("other.idx");
        const std::string report = bench.dir.file("report.json");
        auto snapshot = [&] {
            std::map<std::string, std::string> files;
            for (const auto& f : std::filesystem::recursive_directory_iterator(bench.dir.file("")))
                if (f.is_regular_file() && f.path() != idx && f.path() != report)
                    files[f.path().string()] = testing::read_file(f.path().string());
            return files;
        };
        const auto before = snapshot();
        if (run_cli({"--config", bench.config, "--quiet", "index", "--checkpoint", lord_ckpt, "--dictionary",
                     bench.path("other", "dictionary.tsv"), "--out", idx}) != 0)
            throw Error("index failed");
        auto result = bench.evaluate(lord_ckpt, "other", idx);
        const bool unchanged = snapshot() == before;
        return Outcome{unchanged && std::filesystem::exists(idx) && !result.at("splits").empty(),
                       std::string(unchanged ? "only the index was written" : "other artifacts changed") +
                           ", new-ontology accuracy=" + format_two_decimals(result.at("mean"))};
    });

    std::cout << (suite.failures() == 0 ? "ALL PASS" : std::to_string(suite.failures()) + " FAILED") << std::endl;
    return suite.failures() == 0 ? 0 : 1;
}
