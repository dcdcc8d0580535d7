#pragma once

// Zero-shot accuracy@k per split, aggregation to "mean ± std", and reports.

#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "adenorm/error.hpp"
#include "adenorm/ontology.hpp"
#include "adenorm/retrieval.hpp"

namespace adenorm {

struct MentionExample {
    std::string mention_text;
    std::optional<std::string> context;  // carried, not used for encoding
    std::string gold_concept_id;
    std::int64_t split_id = 0;
};

/// Dataset JSON Lines: {"mention": "...", "context": "...", "gold": "<id>", "split": <int>}.
inline std::vector<MentionExample> parse_dataset(std::istream& in) {
    std::vector<MentionExample> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::strip_cr(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(std::string("invalid JSON: ") + e.what(), line_no);
        }
        if (!j.is_object() || !j.contains("mention") || !j["mention"].is_string() || !j.contains("gold") ||
            !j["gold"].is_string())
            throw ParseError("expected string fields \"mention\" and \"gold\"", line_no);
        MentionExample ex;
        ex.mention_text = j["mention"].get<std::string>();
        if (normalize_text(ex.mention_text).empty()) throw ParseError("empty mention", line_no);
        ex.gold_concept_id = j["gold"].get<std::string>();
        if (j.contains("context") && j["context"].is_string()) ex.context = j["context"].get<std::string>();
        if (j.contains("split")) {
            if (!j["split"].is_number_integer() || j["split"].get<std::int64_t>() < 0)
                throw ParseError("split must be a non-negative integer", line_no);
            ex.split_id = j["split"].get<std::int64_t>();
        }
        out.push_back(std::move(ex));
    }
    return out;
}

inline std::vector<MentionExample> load_dataset(const std::string& path) {
    auto in = detail::open_input(path);
    return parse_dataset(in);
}

struct LinkMiss {
    std::string mention;
    std::string gold;
    std::string predicted;  // rank-1 concept
};

struct SplitResult {
    std::int64_t split_id = 0;
    std::size_t n = 0;         // linkable examples
    std::size_t correct = 0;
    std::size_t excluded = 0;  // unlinkable-gold examples
    double accuracy = 0.0;     // percent
    std::vector<LinkMiss> misses;
};

/// accuracy@k = 100 * hits / n over examples whose gold concept is in `known`.
inline SplitResult evaluate_split(const std::vector<MentionExample>& examples, const Linker& linker,
                                  std::size_t k, const std::set<std::string, std::less<>>& known) {
    if (k == 0) throw Error("k must be at least 1");
    SplitResult r;
    if (!examples.empty()) r.split_id = examples.front().split_id;
    for (const auto& ex : examples) {
        if (!known.contains(ex.gold_concept_id)) {
            ++r.excluded;
            continue;
        }
        ++r.n;
        auto hits = linker.link(ex.mention_text, k);
        bool hit = false;
        for (const auto& h : hits) hit = hit || h.concept_id == ex.gold_concept_id;
        if (hit) {
            ++r.correct;
        } else {
            r.misses.push_back({ex.mention_text, ex.gold_concept_id, hits.empty() ? "" : hits.front().concept_id});
        }
    }
    if (r.n == 0) throw ValidationError("no linkable examples");
    r.accuracy = 100.0 * static_cast<double>(r.correct) / static_cast<double>(r.n);
    return r;
}

inline SplitResult evaluate_split(const std::vector<MentionExample>& examples, const Linker& linker, std::size_t k) {
    return evaluate_split(examples, linker, k, linker.index().concept_set());
}

struct Aggregate {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, n - 1 denominator
    bool single_split = false;
};

inline Aggregate aggregate(const std::vector<double>& split_accuracies) {
    if (split_accuracies.empty()) throw Error("cannot aggregate an empty list of splits");
    Aggregate a;
    const double n = static_cast<double>(split_accuracies.size());
    for (double x : split_accuracies) a.mean += x;
    a.mean /= n;
    if (split_accuracies.size() == 1) {
        a.single_split = true;
        return a;
    }
    double ss = 0.0;
    for (double x : split_accuracies) ss += (x - a.mean) * (x - a.mean);
    a.std = std::sqrt(ss / (n - 1.0));
    return a;
}

struct SplitScore {
    std::int64_t id = 0;
    std::size_t n = 0;
    double acc = 0.0;

    bool operator==(const SplitScore&) const = default;
};

struct EvalReport {
    std::string model_tag;
    std::string dataset;
    std::size_t k = 1;
    std::vector<SplitScore> per_split;
    double mean = 0.0;
    double std = 0.0;
    std::size_t excluded = 0;
    std::vector<std::string> warnings;

    bool operator==(const EvalReport& o) const {
        return model_tag == o.model_tag && dataset == o.dataset && k == o.k && per_split == o.per_split &&
               mean == o.mean && std == o.std && excluded == o.excluded;
    }
};

struct EvalOutcome {
    EvalReport report;
    std::vector<SplitResult> splits;
};

/// Groups examples by split (ascending split id) and evaluates each.
inline EvalOutcome evaluate_dataset(const std::vector<MentionExample>& examples, const Linker& linker,
                                    std::size_t k, std::string model_tag, std::string dataset) {
    std::map<std::int64_t, std::vector<MentionExample>> by_split;
    for (const auto& ex : examples) by_split[ex.split_id].push_back(ex);
    if (by_split.empty()) throw ValidationError("dataset has no examples");

    const auto known = linker.index().concept_set();
    EvalOutcome out;
    out.report.model_tag = std::move(model_tag);
    out.report.dataset = std::move(dataset);
    out.report.k = k;

    std::size_t linkable = 0;
    for (const auto& ex : examples) {
        if (known.contains(ex.gold_concept_id))
            ++linkable;
        else
            ++out.report.excluded;
    }
    if (linkable == 0) throw ValidationError("no linkable examples");

    std::vector<double> accs;
    for (const auto& [id, exs] : by_split) {
        SplitResult r;
        try {
            r = evaluate_split(exs, linker, k, known);
        } catch (const ValidationError&) {
            out.report.warnings.push_back("split " + std::to_string(id) + " has no linkable examples; skipped");
            continue;
        }
        r.split_id = id;
        out.report.per_split.push_back({id, r.n, r.accuracy});
        accs.push_back(r.accuracy);
        out.splits.push_back(std::move(r));
    }
    auto agg = aggregate(accs);
    out.report.mean = agg.mean;
    out.report.std = agg.std;
    if (agg.single_split) out.report.warnings.push_back("only one split; std reported as 0");
    return out;
}

/// Half-away-from-zero rounding to two decimals, then fixed formatting.
inline std::string format_two_decimals(double x) {
    double r = std::round(x * 100.0) / 100.0;
    if (r == 0.0) r = 0.0;  // no "-0.00"
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", r);
    return buf;
}

/// "60.28 ± 0.80"
inline std::string format_mean_std(double mean, double std) {
    return format_two_decimals(mean) + " ± " + format_two_decimals(std);
}

inline std::string format_report_header() { return "model\tdataset\tk\tsplits\texcluded\taccuracy"; }

inline std::string format_report_row(const EvalReport& r) {
    std::ostringstream os;
    os << r.model_tag << '\t' << r.dataset << '\t' << r.k << '\t' << r.per_split.size() << '\t' << r.excluded
       << '\t' << format_mean_std(r.mean, r.std);
    return os.str();
}

/// Header plus one row per report.
inline std::string format_report(const std::vector<EvalReport>& reports) {
    std::string out = format_report_header() + "\n";
    for (const auto& r : reports) out += format_report_row(r) + "\n";
    return out;
}

inline std::string format_report(const EvalReport& report) { return format_report(std::vector{report}); }

inline nlohmann::ordered_json report_to_json(const EvalReport& r) {
    nlohmann::ordered_json j;
    j["model"] = r.model_tag;
    j["dataset"] = r.dataset;
    j["k"] = r.k;
    j["splits"] = nlohmann::ordered_json::array();
    for (const auto& s : r.per_split) {
        nlohmann::ordered_json sj;
        sj["id"] = s.id;
        sj["n"] = s.n;
        sj["acc"] = s.acc;
        j["splits"].push_back(sj);
    }
    j["mean"] = r.mean;
    j["std"] = r.std;
    j["excluded"] = r.excluded;
    return j;
}

inline EvalReport report_from_json(const nlohmann::json& j) {
    try {
        EvalReport r;
        r.model_tag = j.at("model").get<std::string>();
        r.dataset = j.at("dataset").get<std::string>();
        r.k = j.at("k").get<std::size_t>();
        for (const auto& s : j.at("splits"))
            r.per_split.push_back({s.at("id").get<std::int64_t>(), s.at("n").get<std::size_t>(),
                                   s.at("acc").get<double>()});
        r.mean = j.at("mean").get<double>();
        r.std = j.at("std").get<double>();
        r.excluded = j.at("excluded").get<std::size_t>();
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("invalid report JSON: ") + e.what());
    }
}

}  // namespace adenorm
