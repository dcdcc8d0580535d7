#pragma once

// `adenorm ingest|train|index|link|evaluate`
//
// Every setting can come from the --config file or from a flag; flags win.
// All randomness derives from the root seed via derive_seed(root, component).

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "adenorm/config.hpp"
#include "adenorm/encoder.hpp"
#include "adenorm/error.hpp"
#include "adenorm/evaluation.hpp"
#include "adenorm/ontology.hpp"
#include "adenorm/retrieval.hpp"
#include "adenorm/training.hpp"

namespace adenorm::cli {

class UsageError : public Error {
public:
    using Error::Error;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct Streams {
    std::ostream& out;
    std::ostream& err;
    bool quiet = false;

    void warn(const std::string& msg) const {
        if (!quiet) err << "warning: " << msg << '\n';
    }
};

inline std::uint64_t root_seed(const Settings& s) { return s.number<std::uint64_t>("seed", 0); }

inline EncoderConfig encoder_config(const Settings& s) {
    EncoderConfig c;
    c.dim = s.number<std::uint32_t>("encoder.dim", c.dim);
    c.ngram_min = s.number<std::uint32_t>("encoder.ngram_min", c.ngram_min);
    c.ngram_max = s.number<std::uint32_t>("encoder.ngram_max", c.ngram_max);
    c.num_buckets = s.number<std::uint32_t>("encoder.num_buckets", c.num_buckets);
    c.seed = derive_seed(root_seed(s), "encoder");
    c.validate();
    return c;
}

inline TrainConfig stage_config(const Settings& s, StageKind kind, std::size_t stage_number) {
    const std::string sec = kind == StageKind::Lord ? "lord." : "sts.";
    TrainConfig c;
    c.stage_kind = kind;
    c.batch_size = s.number<std::size_t>(sec + "batch_size", c.batch_size);
    c.temperature = s.number<double>(sec + "temperature", c.temperature);
    c.learning_rate = s.number<double>(sec + "learning_rate", c.learning_rate);
    c.epochs = s.number<std::size_t>(sec + "epochs", c.epochs);
    c.seed = derive_seed(root_seed(s), "train.stage" + std::to_string(stage_number));
    c.validate();
    return c;
}

inline HnswParams hnsw_params(const Settings& s) {
    HnswParams p;
    p.M = s.number<std::uint32_t>("hnsw.M", p.M);
    p.ef_construction = s.number<std::uint32_t>("hnsw.ef_construction", p.ef_construction);
    p.ef_search = s.number<std::uint32_t>("hnsw.ef_search", p.ef_search);
    p.seed = derive_seed(root_seed(s), "hnsw");
    p.validate();
    return p;
}

inline std::size_t top_k(const Settings& s) {
    auto v = s.get("k");
    if (!v) return 1;
    long long k = 0;
    auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), k);
    if (ec != std::errc{} || ptr != v->data() + v->size() || k < 1)
        throw UsageError("--k must be a positive integer, got '" + *v + "'");
    return static_cast<std::size_t>(k);
}

/// Encoder from --checkpoint, or from --embeddings when no checkpoint is given.
inline std::unique_ptr<TextEncoder> open_encoder(const Settings& s) {
    if (auto ckpt = s.get("checkpoint"); ckpt && !ckpt->empty())
        return std::make_unique<HashingEncoder>(load_checkpoint(*ckpt));
    if (auto emb = s.get("embeddings"); emb && !emb->empty())
        return std::make_unique<LookupEncoder>(LookupEncoder::load(*emb));
    throw UsageError("an encoder is required: pass --checkpoint or --embeddings");
}

inline ConceptStore open_store(const Settings& s, const Streams& io) {
    Diagnostics diag;
    auto store = load_dictionary(s.required("dictionary"), &diag);
    for (const auto& w : diag.warnings) io.warn(w);
    if (auto defs = s.get("definitions"); defs && !defs->empty()) {
        DefinitionReport rep;
        store = load_definitions(*defs, store, &rep);
        for (const auto& w : rep.warnings) io.warn(w);
    }
    return store;
}

inline VectorIndex build_index(const Settings& s, const ConceptStore& store, const TextEncoder& encoder) {
    auto entries = encode_store(store, encoder);
    const std::string kind = s.str("index.kind", "exact");
    if (kind == "exact") return VectorIndex::build_exact(entries, encoder.fingerprint());
    if (kind == "hnsw") return VectorIndex::build_hnsw(entries, hnsw_params(s), encoder.fingerprint());
    throw UsageError("index kind must be 'exact' or 'hnsw', got '" + kind + "'");
}

// ---- commands ---------------------------------------------------------------

inline int cmd_ingest(const Settings& s, const Streams& io) {
    auto store = open_store(s, io);
    io.out << "concepts=" << store.size() << " synonyms=" << store.synonym_count()
           << " definitions=" << store.definition_count() << '\n';
    if (auto dump = s.get("dump_pairs"); dump && !dump->empty()) {
        std::ofstream f(*dump, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + *dump);
        auto pairs = synonym_pairs(store, derive_seed(root_seed(s), "pairs"),
                                   s.number<std::size_t>("pair_cap", kDefaultPairCap));
        auto defs = name_definition_pairs(store);
        pairs.insert(pairs.end(), defs.begin(), defs.end());
        write_pairs_jsonl(pairs, f);
    }
    return kExitOk;
}

/// Schedules: lord, sts-lord-sts, sts-only, synonym-lord.
inline Schedule make_schedule(const Settings& s, const Streams& io) {
    const std::string name = s.required("schedule");
    std::vector<StageKind> kinds;
    bool synonym_views = false;
    if (name == "lord") {
        kinds = {StageKind::Lord};
    } else if (name == "sts-lord-sts") {
        kinds = {StageKind::Sts, StageKind::Lord, StageKind::Sts};
    } else if (name == "sts-only") {
        kinds = {StageKind::Sts};
    } else if (name == "synonym-lord") {
        kinds = {StageKind::Lord};
        synonym_views = true;
    } else {
        throw UsageError("unknown schedule '" + name + "' (expected lord, sts-lord-sts, sts-only, synonym-lord)");
    }

    std::optional<std::vector<TrainingPair>> pairs;
    std::optional<std::vector<STSExample>> sts;
    Schedule schedule;
    for (std::size_t i = 0; i < kinds.size(); ++i) {
        ScheduleStage stage{{}, stage_config(s, kinds[i], i + 1)};
        if (kinds[i] == StageKind::Lord) {
            if (!pairs) {
                auto store = open_store(s, io);
                if (synonym_views) {
                    pairs = synonym_pairs(store, derive_seed(root_seed(s), "pairs"),
                                          s.number<std::size_t>("pair_cap", kDefaultPairCap));
                } else {
                    pairs = name_definition_pairs(store);
                    if (pairs->empty()) throw ValidationError("schedule '" + name + "' needs concept definitions");
                }
            }
            stage.data = *pairs;
        } else {
            if (!sts) sts = load_sts(s.required("sts"));
            stage.data = *sts;
        }
        schedule.stages.push_back(std::move(stage));
    }
    return schedule;
}

inline int cmd_train(const Settings& s, const Streams& io) {
    const std::string prefix = s.required("out");
    auto schedule = make_schedule(s, io);
    TrainableEncoderState initial = s.has("init") ? load_checkpoint(s.required("init"))
                                                  : TrainableEncoderState::initialize(encoder_config(s));

    const std::string log_path = s.str("log", prefix + ".train.jsonl");
    std::ofstream log(log_path, std::ios::binary | std::ios::trunc);
    if (!log) throw Error("cannot write training log: " + log_path);
    auto result = run_schedule(std::move(initial), schedule, prefix, [&](std::size_t stage, std::size_t epoch, double loss) {
        log << training_log_line(stage, epoch, loss) << '\n';
        log.flush();
        if (!io.quiet) io.err << "stage " << stage << " epoch " << epoch << " loss " << loss << '\n';
    });
    for (const auto& path : result.checkpoints) io.out << "checkpoint " << path << '\n';
    return kExitOk;
}

inline int cmd_index(const Settings& s, const Streams& io) {
    const std::string out_path = s.required("out");
    auto encoder = open_encoder(s);
    auto store = open_store(s, io);
    auto index = build_index(s, store, *encoder);
    index.save(out_path);
    io.out << "entries=" << index.size() << '\n';
    return kExitOk;
}

inline void print_results(const std::vector<RetrievalResult>& results, std::ostream& out) {
    char score[32];
    for (const auto& r : results) {
        std::snprintf(score, sizeof score, "%.4f", r.score);
        out << r.concept_id << '\t' << r.synonym << '\t' << score << '\t' << r.rank << '\n';
    }
}

inline int cmd_link(const Settings& s, const Streams& io) {
    const std::size_t k = top_k(s);
    auto mention = s.get("mention");
    auto file = s.get("mentions_file");
    if (!mention && !file) throw UsageError("pass --mention or --mentions-file");
    if (mention && file) throw UsageError("--mention and --mentions-file are mutually exclusive");

    auto encoder = open_encoder(s);
    auto index = VectorIndex::load(s.required("index"));
    Linker linker(*encoder, index);

    if (mention) {
        print_results(linker.link(*mention, k), io.out);
        return kExitOk;
    }
    auto in = detail::open_input(*file);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        std::string_view m = detail::strip_cr(line);
        if (normalize_text(m).empty()) continue;
        if (!first) io.out << '\n';
        first = false;
        io.out << "# " << m << '\n';
        print_results(linker.link(m, k), io.out);
    }
    return kExitOk;
}

inline int cmd_evaluate(const Settings& s, const Streams& io) {
    const std::size_t k = top_k(s);
    auto encoder = open_encoder(s);
    VectorIndex index = s.has("index") ? VectorIndex::load(s.required("index"))
                                       : build_index(s, open_store(s, io), *encoder);
    Linker linker(*encoder, index);

    const std::string dataset_path = s.required("dataset");
    auto examples = load_dataset(dataset_path);
    auto outcome = evaluate_dataset(examples, linker, k, s.str("model", "model"), s.str("dataset_name", dataset_path));
    for (const auto& w : outcome.report.warnings) io.warn(w);

    io.out << format_report(outcome.report);
    const std::string json = report_to_json(outcome.report).dump();
    if (auto path = s.get("json_out"); path && !path->empty()) {
        std::ofstream f(*path, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + *path);
        f << json << '\n';
    } else {
        io.out << json << '\n';
    }
    if (auto path = s.get("misses_out"); path && !path->empty()) {
        std::ofstream f(*path, std::ios::binary | std::ios::trunc);
        for (const auto& split : outcome.splits)
            for (const auto& m : split.misses) {
                nlohmann::ordered_json j;
                j["split"] = split.split_id;
                j["mention"] = m.mention;
                j["gold"] = m.gold;
                j["predicted"] = m.predicted;
                f << j.dump() << '\n';
            }
    }
    return kExitOk;
}

// ---- entry point --------------------------------------------------------------

/// Parses argv and runs one command. Returns the process exit code.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"adenorm: zero-shot biomedical concept normalization"};
    app.require_subcommand(1);
    app.fallthrough();

    std::map<std::string, std::string> flags;
    auto flag = [&flags](CLI::App* cmd, const std::string& name, const std::string& key, const std::string& help) {
        cmd->add_option_function<std::string>(name, [&flags, key](const std::string& v) { flags[key] = v; }, help);
    };

    std::string config_path;
    bool quiet = false;
    app.add_option("--config", config_path, "Key/value configuration file");
    flag(&app, "--seed", "seed", "Root seed for every seeded component");
    app.add_flag("--quiet", quiet, "Suppress warnings and progress on stderr");

    auto* ingest = app.add_subcommand("ingest", "Load and validate a dictionary");
    flag(ingest, "--dictionary", "dictionary", "Dictionary TSV");
    flag(ingest, "--definitions", "definitions", "Definitions TSV");
    flag(ingest, "--dump-pairs", "dump_pairs", "Write training pairs as JSON Lines");

    auto* train = app.add_subcommand("train", "Run a training schedule");
    flag(train, "--schedule", "schedule", "lord | sts-lord-sts | sts-only | synonym-lord");
    flag(train, "--dictionary", "dictionary", "Dictionary TSV");
    flag(train, "--definitions", "definitions", "Definitions TSV");
    flag(train, "--sts", "sts", "STS TSV (scores 0..5)");
    flag(train, "--init", "init", "Initial encoder checkpoint");
    flag(train, "--out", "out", "Checkpoint path prefix");
    flag(train, "--log", "log", "Training log path (JSON Lines)");

    auto* index = app.add_subcommand("index", "Encode a dictionary into a vector index");
    flag(index, "--checkpoint", "checkpoint", "Encoder checkpoint");
    flag(index, "--embeddings", "embeddings", "External embeddings (JSON Lines)");
    flag(index, "--dictionary", "dictionary", "Dictionary TSV");
    flag(index, "--kind", "index.kind", "exact | hnsw");
    flag(index, "--M", "hnsw.M", "HNSW links per node");
    flag(index, "--ef-construction", "hnsw.ef_construction", "HNSW build beam width");
    flag(index, "--ef-search", "hnsw.ef_search", "HNSW query beam width");
    flag(index, "--out", "out", "Index output path");

    auto* link = app.add_subcommand("link", "Link mentions to concepts");
    flag(link, "--index", "index", "Index file");
    flag(link, "--checkpoint", "checkpoint", "Encoder checkpoint");
    flag(link, "--embeddings", "embeddings", "External embeddings (JSON Lines)");
    flag(link, "--mention", "mention", "Mention text");
    flag(link, "--mentions-file", "mentions_file", "File with one mention per line");
    flag(link, "--k", "k", "Number of concepts to return");

    auto* evaluate = app.add_subcommand("evaluate", "Zero-shot accuracy@k over dataset splits");
    flag(evaluate, "--index", "index", "Index file (else built from --dictionary)");
    flag(evaluate, "--checkpoint", "checkpoint", "Encoder checkpoint");
    flag(evaluate, "--embeddings", "embeddings", "External embeddings (JSON Lines)");
    flag(evaluate, "--dictionary", "dictionary", "Dictionary TSV");
    flag(evaluate, "--kind", "index.kind", "exact | hnsw, when building from --dictionary");
    flag(evaluate, "--dataset", "dataset", "Dataset JSON Lines");
    flag(evaluate, "--k", "k", "Accuracy@k");
    flag(evaluate, "--model", "model", "Model tag for the report");
    flag(evaluate, "--dataset-name", "dataset_name", "Dataset name for the report");
    flag(evaluate, "--json-out", "json_out", "Write the JSON report here instead of stdout");
    flag(evaluate, "--misses-out", "misses_out", "Write misses as JSON Lines");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
    }

    Streams io{out, err, quiet};
    try {
        Settings settings = config_path.empty() ? Settings{} : Settings::load(config_path);
        for (const auto& [key, value] : flags) settings.set(key, value);

        if (*ingest) return cmd_ingest(settings, io);
        if (*train) return cmd_train(settings, io);
        if (*index) return cmd_index(settings, io);
        if (*link) return cmd_link(settings, io);
        if (*evaluate) return cmd_evaluate(settings, io);
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

}  // namespace adenorm::cli
