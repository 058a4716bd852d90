#include "imsat/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "imsat/errors.hpp"
#include "imsat/objectives.hpp"

namespace imsat {

namespace {

constexpr std::size_t kInferChunk = 512;

Matrix gather_rows(const Matrix& m, const std::vector<std::size_t>& idx, std::size_t start,
                   std::size_t count) {
    Matrix out(count, m.cols);
    for (std::size_t i = 0; i < count; ++i)
        std::copy(m.row_ptr(idx[start + i]), m.row_ptr(idx[start + i]) + m.cols, out.row_ptr(i));
    return out;
}

std::vector<std::size_t> layer_dims(const Dataset& data, const TrainConfig& cfg) {
    std::vector<std::size_t> dims;
    dims.push_back(data.dim());
    std::vector<std::size_t> hidden = cfg.hidden;
    if (hidden.empty())
        hidden = cfg.task == TaskKind::Cluster ? std::vector<std::size_t>{1200, 1200}
                                               : std::vector<std::size_t>{200, 200};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(cfg.output_width);
    return dims;
}

std::vector<HeadSpec> make_heads(const TrainConfig& cfg) {
    if (cfg.task == TaskKind::Cluster) return {HeadSpec::softmax(cfg.output_width)};
    return std::vector<HeadSpec>(cfg.output_width, HeadSpec::sigmoid());
}

void validate_common(const Dataset& data, const TrainConfig& cfg) {
    if (data.size() == 0) throw InputError("train: empty dataset");
    if (!all_finite(data.features)) throw InputError("train: non-finite feature values");
    if (cfg.batch_size == 0 || cfg.batch_size > data.size())
        throw ConfigError("train: batch_size must be in [1, N]");
    if (cfg.epochs == 0) throw ConfigError("train: epochs must be >= 1");
    if (cfg.lambda < 0.0) throw ConfigError("train: lambda must be >= 0");
    if (cfg.step_size <= 0.0) throw ConfigError("train: step_size must be positive");
    if (cfg.weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    const bool needs_image = cfg.regularizer == Regularizer::Affine ||
                             cfg.regularizer == Regularizer::Composite;
    if (needs_image &&
        (cfg.image_h < 2 || cfg.image_w < 2 || cfg.image_h * cfg.image_w != data.dim()))
        throw ConfigError("train: affine augmentation needs image rows; declare a "
                          "height x width matching the feature width");
    if (cfg.regularizer == Regularizer::Composite &&
        (cfg.composite_weight_vat < 0.0 || cfg.composite_weight_vat > 1.0))
        throw ConfigError("train: composite weight must lie in [0,1]");
}

bool needs_radii(Regularizer r) {
    return r == Regularizer::Rpt || r == Regularizer::Vat || r == Regularizer::Composite;
}

std::vector<double> make_radii(const Dataset& data, const TrainConfig& cfg) {
    if (!needs_radii(cfg.regularizer)) return {};
    if (cfg.fixed_eps > 0.0) return std::vector<double>(data.size(), cfg.fixed_eps);
    RadiusTable table = radius_table(data.features, cfg.alpha, cfg.t_neighbor);
    return std::move(table.eps);
}

// One optimization step shared by both tasks. Returns the batch objective and
// its per-term breakdown. `eps_rows` is empty when no perturbation is used.
struct StepOutcome {
    double objective = 0.0;
    LossBreakdown terms;
};

StepOutcome train_step(MlpClassifier& model, AdamState& adam, const Matrix& xb,
                       const std::vector<double>& eps_rows, const TrainConfig& cfg,
                       const ClusterObjective& cobj, const HashObjective& hobj, Rng& rng) {
    ForwardResult live = forward(model, xb, RunMode::Train);
    const std::vector<Matrix> target = live.head_probs;  // detached snapshot

    // self-augmentation term: forward the perturbed batch, keep the caches so
    // the gradient can flow back through the live parameters
    double sat = 0.0;
    std::vector<ForwardResult> aug_passes;
    std::vector<double> aug_weights;
    const Regularizer reg = cfg.regularizer;
    if (reg == Regularizer::Rpt || reg == Regularizer::Vat || reg == Regularizer::Affine ||
        reg == Regularizer::Composite) {
        std::vector<std::pair<Matrix, double>> augmented;  // input, weight
        if (reg == Regularizer::Rpt) {
            augmented.emplace_back(rpt_batch(xb, eps_rows, rng), 1.0);
        } else if (reg == Regularizer::Vat) {
            Matrix x_adv = xb;
            add_inplace(x_adv, vat_direction(model, xb, eps_rows, cfg.xi, cfg.power_iters, rng));
            augmented.emplace_back(std::move(x_adv), 1.0);
        } else if (reg == Regularizer::Affine) {
            augmented.emplace_back(affine_batch(xb, cfg.image_h, cfg.image_w, AffineRanges{}, rng),
                                   1.0);
        } else {
            Matrix x_adv = xb;
            add_inplace(x_adv, vat_direction(model, xb, eps_rows, cfg.xi, cfg.power_iters, rng));
            augmented.emplace_back(std::move(x_adv), cfg.composite_weight_vat);
            augmented.emplace_back(affine_batch(xb, cfg.image_h, cfg.image_w, AffineRanges{}, rng),
                                   1.0 - cfg.composite_weight_vat);
        }
        for (auto& [x_aug, weight] : augmented) {
            ForwardResult fr = forward(model, x_aug, RunMode::TrainFrozenStats);
            sat += weight * sat_loss(target, fr.head_probs);
            aug_passes.push_back(std::move(fr));
            aug_weights.push_back(weight);
        }
    }

    StepOutcome outcome;
    Gradients total;

    if (cfg.task == TaskKind::Cluster) {
        const Matrix& probs = live.head_probs[0];
        const ClusterLossTerms terms = clustering_loss(probs, sat, cobj);
        outcome.objective = terms.total;
        outcome.terms.sat = terms.sat;
        outcome.terms.conditional_entropy = terms.conditional_entropy;
        outcome.terms.marginal_kl = terms.marginal_kl;
        outcome.terms.penalty = terms.penalty;
        total = backward(model, live, {clustering_loss_grad(probs, cobj)});
    } else {
        const std::size_t D = cfg.output_width;
        Matrix bits(xb.rows, D);
        for (std::size_t m = 0; m < D; ++m)
            for (std::size_t i = 0; i < xb.rows; ++i) bits(i, m) = live.head_probs[m](i, 1);
        const HashLossTerms terms = hash_loss(bits, sat, hobj);
        outcome.objective = terms.total;
        outcome.terms.sat = terms.sat;
        outcome.terms.per_bit_information = terms.per_bit_information;
        outcome.terms.pairwise_information = terms.pairwise_information;

        const Matrix gbits = hash_loss_grad(bits, hobj);
        std::vector<Matrix> head_grads(D, Matrix(xb.rows, 2, 0.0));
        for (std::size_t m = 0; m < D; ++m)
            for (std::size_t i = 0; i < xb.rows; ++i) head_grads[m](i, 1) = gbits(i, m);
        total = backward(model, live, head_grads);
    }

    for (std::size_t k = 0; k < aug_passes.size(); ++k) {
        std::vector<Matrix> g = sat_loss_grad(target, aug_passes[k].head_probs);
        for (Matrix& gm : g) scale_inplace(gm, aug_weights[k]);
        total.add(backward(model, aug_passes[k], g));
    }

    adam_step(adam, model, total);
    return outcome;
}

struct RunOutcome {
    std::vector<double> trace;
    LossBreakdown last_epoch;
};

RunOutcome run_epochs(MlpClassifier& model, AdamState& adam, const Dataset& data,
                      const std::vector<double>& radii, const TrainConfig& cfg,
                      const ClusterObjective& cobj, const HashObjective& hobj, Rng& rng) {
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    RunOutcome out;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.engine());
        double obj_sum = 0.0;
        LossBreakdown sums;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, n - start);
            const Matrix xb = gather_rows(data.features, order, start, count);
            std::vector<double> eps_rows;
            if (!radii.empty()) {
                eps_rows.resize(count);
                for (std::size_t i = 0; i < count; ++i) eps_rows[i] = radii[order[start + i]];
            }
            const StepOutcome step = train_step(model, adam, xb, eps_rows, cfg, cobj, hobj, rng);
            const double w = static_cast<double>(count);
            obj_sum += w * step.objective;
            sums.sat += w * step.terms.sat;
            sums.conditional_entropy += w * step.terms.conditional_entropy;
            sums.marginal_kl += w * step.terms.marginal_kl;
            sums.penalty += w * step.terms.penalty;
            sums.per_bit_information += w * step.terms.per_bit_information;
            sums.pairwise_information += w * step.terms.pairwise_information;
        }
        const double nd = static_cast<double>(n);
        out.trace.push_back(obj_sum / nd);
        if (epoch + 1 == cfg.epochs) {
            out.last_epoch.sat = sums.sat / nd;
            out.last_epoch.conditional_entropy = sums.conditional_entropy / nd;
            out.last_epoch.marginal_kl = sums.marginal_kl / nd;
            out.last_epoch.penalty = sums.penalty / nd;
            out.last_epoch.per_bit_information = sums.per_bit_information / nd;
            out.last_epoch.pairwise_information = sums.pairwise_information / nd;
        }
        if (!std::isfinite(out.trace.back()))
            throw StateError("train: objective diverged at epoch " + std::to_string(epoch));
    }
    return out;
}

}  // namespace

Matrix infer_soft(const MlpClassifier& model, const Matrix& features, TaskKind task) {
    if (features.cols != model.input_dim())
        throw ShapeError("infer_soft: feature width != model input width");
    const std::size_t width =
        task == TaskKind::Cluster ? model.heads.at(0).classes : model.num_heads();
    Matrix out(features.rows, width);
    for (std::size_t start = 0; start < features.rows; start += kInferChunk) {
        const std::size_t count = std::min(kInferChunk, features.rows - start);
        Matrix chunk(count, features.cols);
        std::copy(features.row_ptr(start), features.row_ptr(start) + count * features.cols,
                  chunk.data.begin());
        const ForwardResult fr = forward(model, chunk, RunMode::Infer);
        if (task == TaskKind::Cluster) {
            for (std::size_t i = 0; i < count; ++i)
                std::copy(fr.head_probs[0].row_ptr(i), fr.head_probs[0].row_ptr(i) + width,
                          out.row_ptr(start + i));
        } else {
            for (std::size_t m = 0; m < width; ++m)
                for (std::size_t i = 0; i < count; ++i)
                    out(start + i, m) = fr.head_probs[m](i, 1);
        }
    }
    return out;
}

CodeBook encode(const MlpClassifier& model, const Matrix& features, TaskKind task) {
    CodeBook book;
    book.soft_probs = infer_soft(model, features, task);
    book.width = book.soft_probs.cols;
    book.is_hash = task == TaskKind::Hash;
    book.assignments.resize(features.rows);
    for (std::size_t i = 0; i < features.rows; ++i) {
        if (task == TaskKind::Cluster) {
            std::size_t best = 0;
            double top = book.soft_probs(i, 0);
            for (std::size_t j = 1; j < book.width; ++j)
                if (book.soft_probs(i, j) > top) {  // strict: ties keep the smaller index
                    top = book.soft_probs(i, j);
                    best = j;
                }
            book.assignments[i] = best;
        } else {
            std::uint64_t code = 0;
            for (std::size_t d = 0; d < book.width; ++d)
                if (book.soft_probs(i, d) > 0.5) code |= std::uint64_t(1) << d;
            book.assignments[i] = code;
        }
    }
    return book;
}

TrainResult train_clustering(const Dataset& data, const TrainConfig& cfg) {
    if (cfg.task != TaskKind::Cluster) throw ConfigError("train_clustering: config task mismatch");
    if (cfg.output_width < 2)
        throw ConfigError("train_clustering: need at least 2 clusters; a single cluster has "
                          "no marginal entropy to maximize");
    validate_common(data, cfg);

    ClusterObjective cobj;
    cobj.lambda = cfg.lambda;
    cobj.prior_q = cfg.prior_q;
    if (cobj.prior_q.empty())
        cobj.prior_q.assign(cfg.output_width, 1.0 / static_cast<double>(cfg.output_width));
    if (cobj.prior_q.size() != cfg.output_width)
        throw ConfigError("train_clustering: prior length != cluster count");
    for (double v : cobj.prior_q)
        if (v <= 0.0) throw ConfigError("train_clustering: prior entries must be positive");
    cobj.delta = ClusterObjective::default_delta(cobj.prior_q, cfg.delta_frac);

    std::vector<double> multipliers = cfg.mu_multipliers;
    if (multipliers.empty()) multipliers = {1.0, 2.0, 4.0, 6.0, 8.0, 10.0};

    const std::vector<double> radii = make_radii(data, cfg);
    const std::vector<std::size_t> dims = layer_dims(data, cfg);
    const std::vector<HeadSpec> heads = make_heads(cfg);
    const std::vector<double> scales =
        cfg.init_scales.empty() ? default_scales(dims.size() - 1) : cfg.init_scales;
    const HashObjective hobj;  // unused by this task

    const auto t0 = std::chrono::steady_clock::now();
    Rng master(cfg.seed);

    MlpClassifier model;
    AdamState adam;
    TrainReport best_report;
    MlpClassifier best_model;
    double best_kl = std::numeric_limits<double>::infinity();
    bool have_model = false;

    for (std::size_t trial = 0; trial < multipliers.size(); ++trial) {
        cobj.mu = cfg.lambda * multipliers[trial];
        const std::uint64_t init_seed = master.fork_seed();
        const std::uint64_t stream_seed = master.fork_seed();
        if (!have_model || !cfg.warm_start) {
            model = init_params(dims, heads, scales, init_seed);
            adam = make_adam(model, cfg.step_size, cfg.weight_decay);
            have_model = true;
        }
        Rng stream(stream_seed);
        const RunOutcome run = run_epochs(model, adam, data, radii, cfg, cobj, hobj, stream);

        const Matrix soft = infer_soft(model, data.features, TaskKind::Cluster);
        const double kl = kl_divergence(column_mean(soft), cobj.prior_q);

        TrainReport report;
        report.task = TaskKind::Cluster;
        report.epochs = cfg.epochs;
        report.objective_trace = run.trace;
        report.final_kl = kl;
        report.mu_final = cobj.mu;
        report.loss_terms = run.last_epoch;

        if (kl < best_kl) {
            best_kl = kl;
            best_model = model;
            best_report = report;
        }
        if (kl <= cobj.delta) {
            report.seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return {std::move(model), std::move(report)};
        }
    }

    best_report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    throw ConstraintUnsatisfiedError(
        "train_clustering: no penalty weight met KL <= " + std::to_string(cobj.delta) +
            "; closest run reached " + std::to_string(best_kl),
        std::move(best_model), best_kl, std::move(best_report));
}

TrainResult train_hashing(const Dataset& data, const TrainConfig& cfg) {
    if (cfg.task != TaskKind::Hash) throw ConfigError("train_hashing: config task mismatch");
    if (cfg.output_width < 1 || cfg.output_width > 64)
        throw ConfigError("train_hashing: bit count must lie in [1, 64]");
    validate_common(data, cfg);

    const ClusterObjective cobj;  // unused by this task
    HashObjective hobj;
    hobj.lambda = cfg.lambda;
    hobj.bits = cfg.output_width;
    hobj.ordered_pairs = cfg.ordered_pairs;

    const std::vector<double> radii = make_radii(data, cfg);
    const std::vector<std::size_t> dims = layer_dims(data, cfg);
    const std::vector<HeadSpec> heads = make_heads(cfg);
    const std::vector<double> scales =
        cfg.init_scales.empty() ? default_scales(dims.size() - 1) : cfg.init_scales;

    const auto t0 = std::chrono::steady_clock::now();
    Rng master(cfg.seed);
    MlpClassifier model = init_params(dims, heads, scales, master.fork_seed());
    AdamState adam = make_adam(model, cfg.step_size, cfg.weight_decay);
    Rng stream(master.fork_seed());

    const RunOutcome run = run_epochs(model, adam, data, radii, cfg, cobj, hobj, stream);

    TrainReport report;
    report.task = TaskKind::Hash;
    report.epochs = cfg.epochs;
    report.objective_trace = run.trace;
    report.loss_terms = run.last_epoch;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(model), std::move(report)};
}

std::string report_to_json(const TrainReport& report) {
    nlohmann::json terms;
    terms["sat"] = report.loss_terms.sat;
    if (report.task == TaskKind::Cluster) {
        terms["conditional_entropy"] = report.loss_terms.conditional_entropy;
        terms["marginal_kl"] = report.loss_terms.marginal_kl;
        terms["penalty"] = report.loss_terms.penalty;
    } else {
        terms["per_bit_information"] = report.loss_terms.per_bit_information;
        terms["pairwise_information"] = report.loss_terms.pairwise_information;
    }
    nlohmann::json j;
    j["epochs"] = report.epochs;
    j["objective_trace"] = report.objective_trace;
    j["final_kl"] = report.final_kl;
    j["mu_final"] = report.mu_final;
    j["seconds"] = report.seconds;
    j["loss_terms"] = terms;
    return j.dump(2);
}

}  // namespace imsat
