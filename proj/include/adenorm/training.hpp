#pragma once

// Contrastive (LORD) and STS training of the hashed n-gram encoder, and the
// multi-stage schedule runner.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "adenorm/encoder.hpp"
#include "adenorm/error.hpp"
#include "adenorm/losses.hpp"
#include "adenorm/ontology.hpp"
#include "adenorm/text.hpp"

namespace adenorm {

enum class StageKind { Sts, Lord };

inline std::string_view to_string(StageKind k) { return k == StageKind::Sts ? "STS" : "LORD"; }

struct STSExample {
    std::string text_a;
    std::string text_b;
    double gold_score = 0.0;  // in [0, 1]

    bool operator==(const STSExample&) const = default;
};

/// STS TSV: text_a<TAB>text_b<TAB>score with score in [0, 5], rescaled to [0, 1].
inline std::vector<STSExample> parse_sts(std::istream& in) {
    std::vector<STSExample> out;
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
        if (normalize_text(cols[0]).empty() || normalize_text(cols[1]).empty())
            throw ParseError("empty STS text", line_no);
        double score;
        try {
            std::size_t used = 0;
            score = std::stod(std::string(cols[2]), &used);
            if (used != cols[2].size()) throw std::invalid_argument("trailing characters");
        } catch (const std::exception&) {
            throw ParseError("invalid score '" + std::string(cols[2]) + "'", line_no);
        }
        if (!(score >= 0.0 && score <= 5.0)) throw ParseError("score outside [0, 5]", line_no);
        out.push_back({std::string(cols[0]), std::string(cols[1]), score / 5.0});
    }
    return out;
}

inline std::vector<STSExample> load_sts(const std::string& path) {
    auto in = detail::open_input(path);
    return parse_sts(in);
}

struct TrainConfig {
    std::size_t batch_size = 64;
    double temperature = 0.05;
    double learning_rate = 1e-2;
    std::size_t epochs = 1;
    std::uint64_t seed = 0;
    StageKind stage_kind = StageKind::Lord;

    void validate() const {
        if (batch_size == 0) throw ValidationError("batch_size must be positive");
        if (stage_kind == StageKind::Lord && batch_size < 2)
            throw ValidationError("LORD stages need batch_size >= 2");
        if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
            throw ValidationError("learning_rate must be finite and non-negative");
        if (epochs == 0) throw ValidationError("epochs must be positive");
    }
};

using StageData = std::variant<std::vector<TrainingPair>, std::vector<STSExample>>;

/// Called once per finished epoch with (1-based epoch, mean batch loss).
using EpochCallback = std::function<void(std::size_t, double)>;

namespace detail {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;

    explicit AdamMoments(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

/// Adam. The projection is updated densely; bucket rows are updated lazily,
/// only on steps where they receive a gradient.
class AdamOptimizer {
public:
    AdamOptimizer(std::size_t dim, double lr) : dim_(dim), lr_(lr), projection_(dim * dim) {}

    void step(TrainableEncoderState& state, const std::vector<double>& grad_projection,
              const std::map<std::uint32_t, std::vector<double>>& grad_rows) {
        ++t_;
        const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t_));
        update(state.projection.data(), grad_projection.data(), projection_, 0, dim_ * dim_, c1, c2);
        for (const auto& [row, grad] : grad_rows) {
            auto [it, fresh] = rows_.try_emplace(row, dim_);
            update(state.bucket_embeddings.data() + static_cast<std::size_t>(row) * dim_, grad.data(),
                   it->second, 0, dim_, c1, c2);
        }
    }

private:
    void update(float* params, const double* grad, AdamMoments& mom, std::size_t off, std::size_t n,
                double c1, double c2) const {
        for (std::size_t i = 0; i < n; ++i) {
            double g = grad[i];
            double& m = mom.m[off + i];
            double& v = mom.v[off + i];
            m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
            v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g * g;
            double step = (m / c1) / (std::sqrt(v / c2) + kAdamEps);
            params[i] = static_cast<float>(static_cast<double>(params[i]) - lr_ * step);
        }
    }

    std::size_t dim_;
    double lr_;
    std::uint64_t t_ = 0;
    AdamMoments projection_;
    std::unordered_map<std::uint32_t, AdamMoments> rows_;
};

/// Caches n-gram buckets per distinct text for the lifetime of a stage.
class GramCache {
public:
    explicit GramCache(const EncoderConfig& config) : config_(config) {}

    const std::vector<std::uint32_t>& get(const std::string& text) {
        auto it = cache_.find(text);
        if (it != cache_.end()) return it->second;
        auto grams = hash_ngrams(normalize_text(text), config_);
        return cache_.emplace(text, std::move(grams)).first->second;
    }

private:
    EncoderConfig config_;
    std::unordered_map<std::string, std::vector<std::uint32_t>> cache_;
};

struct Gradients {
    std::vector<double> projection;
    std::map<std::uint32_t, std::vector<double>> rows;
};

/// Accumulates d(loss)/d(params) given d(loss)/d(unit embedding).
inline void backprop(const TrainableEncoderState& state, const EncoderForward& f,
                     std::span<const double> grad_unit, Gradients& grads) {
    const std::size_t d = state.config.dim;
    // Through the L2 normalization.
    const double proj = dot(f.unit, grad_unit);
    std::vector<double> grad_raw(d);
    for (std::size_t i = 0; i < d; ++i) grad_raw[i] = (grad_unit[i] - f.unit[i] * proj) / f.norm;

    std::vector<double> grad_pooled(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const float* prow = state.projection.data() + i * d;
        double* gprow = grads.projection.data() + i * d;
        const double gi = grad_raw[i];
        for (std::size_t j = 0; j < d; ++j) {
            gprow[j] += gi * f.pooled[j];
            grad_pooled[j] += prow[j] * gi;
        }
    }
    const double inv = 1.0 / static_cast<double>(f.grams.size());
    for (std::uint32_t g : f.grams) {
        auto [it, fresh] = grads.rows.try_emplace(g);
        if (fresh) it->second.assign(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) it->second[j] += grad_pooled[j] * inv;
    }
}

struct BatchResult {
    double loss = 0.0;
    Gradients grads;
};

template <typename Item>
inline void batch_texts(const std::vector<Item>& data, std::span<const std::size_t> idx,
                        std::vector<const std::string*>& a, std::vector<const std::string*>& b) {
    a.clear();
    b.clear();
    for (std::size_t i : idx) {
        a.push_back(&data[i].text_a);
        b.push_back(&data[i].text_b);
    }
}

inline BatchResult run_batch(const TrainableEncoderState& state, GramCache& cache,
                             const StageData& data, std::span<const std::size_t> idx,
                             const TrainConfig& config, bool want_grads) {
    const std::size_t d = state.config.dim;
    const std::size_t n = idx.size();
    std::vector<const std::string*> ta, tb;
    std::visit([&](const auto& items) { batch_texts(items, idx, ta, tb); }, data);

    std::vector<EncoderForward> fa, fb;
    fa.reserve(n);
    fb.reserve(n);
    Matrix a(n, d), b(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        fa.push_back(encoder_forward(state, cache.get(*ta[i])));
        fb.push_back(encoder_forward(state, cache.get(*tb[i])));
        std::copy(fa.back().unit.begin(), fa.back().unit.end(), a.row(i).begin());
        std::copy(fb.back().unit.begin(), fb.back().unit.end(), b.row(i).begin());
    }

    BatchResult out;
    Matrix ga(n, d), gb(n, d);
    if (config.stage_kind == StageKind::Lord) {
        auto l = info_nce_loss(a, b, config.temperature);
        out.loss = l.loss;
        ga = std::move(l.grad_a);
        gb = std::move(l.grad_b);
    } else {
        const auto& items = std::get<std::vector<STSExample>>(data);
        std::vector<double> cos(n), gold(n);
        for (std::size_t i = 0; i < n; ++i) {
            cos[i] = dot(a.row(i), b.row(i));
            gold[i] = items[idx[i]].gold_score;
        }
        auto l = sts_loss(cos, gold);
        out.loss = l.loss;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < d; ++k) {
                ga(i, k) = l.grad[i] * b(i, k);
                gb(i, k) = l.grad[i] * a(i, k);
            }
    }
    if (!want_grads) return out;

    out.grads.projection.assign(d * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        backprop(state, fa[i], ga.row(i), out.grads);
        backprop(state, fb[i], gb.row(i), out.grads);
    }
    return out;
}

inline std::size_t data_size(const StageData& data) {
    return std::visit([](const auto& v) { return v.size(); }, data);
}

inline void check_stage_inputs(const TrainableEncoderState& state, const StageData& data,
                               const TrainConfig& config) {
    config.validate();
    state.validate();
    const bool is_pairs = std::holds_alternative<std::vector<TrainingPair>>(data);
    if (is_pairs != (config.stage_kind == StageKind::Lord))
        throw ValidationError("stage data does not match stage kind " +
                              std::string(to_string(config.stage_kind)));
    const std::size_t n = data_size(data);
    if (n == 0) throw ValidationError("stage data is empty");
    if (config.stage_kind == StageKind::Lord && n < 2)
        throw ValidationError("LORD stage needs at least 2 pairs");
}

/// Consecutive batches over `order`; LORD drops a trailing batch of one pair.
inline std::vector<std::span<const std::size_t>> make_batches(const std::vector<std::size_t>& order,
                                                              const TrainConfig& config) {
    std::vector<std::span<const std::size_t>> out;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        std::size_t len = std::min(config.batch_size, order.size() - start);
        if (config.stage_kind == StageKind::Lord && len < 2) break;
        out.emplace_back(order.data() + start, len);
    }
    return out;
}

}  // namespace detail

/// Mean batch loss over `data` in its stored order, without updating anything.
inline double evaluate_loss(const TrainableEncoderState& state, const StageData& data,
                            const TrainConfig& config) {
    detail::check_stage_inputs(state, data, config);
    detail::GramCache cache(state.config);
    std::vector<std::size_t> order(detail::data_size(data));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    auto batches = detail::make_batches(order, config);
    double total = 0.0;
    for (auto batch : batches)
        total += detail::run_batch(state, cache, data, batch, config, false).loss;
    return total / static_cast<double>(batches.size());
}

/// Mini-batch Adam over `config.epochs` passes, reshuffling every epoch with a
/// generator seeded by `config.seed`. Deterministic for fixed inputs.
inline TrainableEncoderState train_stage(TrainableEncoderState state, const StageData& data,
                                         const TrainConfig& config,
                                         const EpochCallback& on_epoch = {}) {
    detail::check_stage_inputs(state, data, config);
    detail::GramCache cache(state.config);
    detail::AdamOptimizer adam(state.config.dim, config.learning_rate);
    Rng rng(config.seed);

    std::vector<std::size_t> order(detail::data_size(data));
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
        rng.shuffle(order);
        auto batches = detail::make_batches(order, config);
        double total = 0.0;
        for (std::size_t bi = 0; bi < batches.size(); ++bi) {
            detail::BatchResult r;
            try {
                r = detail::run_batch(state, cache, data, batches[bi], config, true);
            } catch (const Error& e) {
                throw TrainingError("epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(bi) + ": " + e.what());
            }
            if (!std::isfinite(r.loss))
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(bi));
            total += r.loss;
            adam.step(state, r.grads.projection, r.grads.rows);
        }
        if (on_epoch) on_epoch(epoch, total / static_cast<double>(batches.size()));
    }
    return state;
}

struct ScheduleStage {
    StageData data;
    TrainConfig config;
};

struct Schedule {
    std::vector<ScheduleStage> stages;

    void validate() const {
        if (stages.empty()) throw ValidationError("empty schedule");
        for (const auto& s : stages) s.config.validate();
    }
};

struct ScheduleResult {
    TrainableEncoderState final_state;
    std::vector<std::string> checkpoints;
};

inline std::string stage_checkpoint_path(const std::string& prefix, std::size_t stage) {
    return prefix + ".stage" + std::to_string(stage) + ".ckpt";
}

/// Called with (1-based stage, 1-based epoch, epoch loss).
using StageEpochCallback = std::function<void(std::size_t, std::size_t, double)>;

/// Runs the stages in order, persisting `<prefix>.stage<k>.ckpt` after each.
/// A failing stage aborts; checkpoints already written stay on disk.
inline ScheduleResult run_schedule(TrainableEncoderState initial, const Schedule& schedule,
                                   const std::string& checkpoint_prefix,
                                   const StageEpochCallback& on_epoch = {}) {
    schedule.validate();
    ScheduleResult out;
    out.final_state = std::move(initial);
    for (std::size_t s = 0; s < schedule.stages.size(); ++s) {
        const auto& stage = schedule.stages[s];
        out.final_state = train_stage(std::move(out.final_state), stage.data, stage.config,
                                      [&](std::size_t epoch, double loss) {
                                          if (on_epoch) on_epoch(s + 1, epoch, loss);
                                      });
        auto path = stage_checkpoint_path(checkpoint_prefix, s + 1);
        save_checkpoint(out.final_state, path);
        out.checkpoints.push_back(std::move(path));
    }
    return out;
}

/// Training log line: {"stage": n, "epoch": e, "loss": f}.
inline std::string training_log_line(std::size_t stage, std::size_t epoch, double loss) {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["epoch"] = epoch;
    j["loss"] = loss;
    return j.dump();
}

}  // namespace adenorm
