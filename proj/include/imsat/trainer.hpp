#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "imsat/augment.hpp"
#include "imsat/data.hpp"
#include "imsat/eval.hpp"
#include "imsat/matrix.hpp"
#include "imsat/nn.hpp"

namespace imsat {

enum class TaskKind { Cluster, Hash };
enum class Regularizer { None, WeightDecay, Rpt, Vat, Affine, Composite };

struct TrainConfig {
    TaskKind task = TaskKind::Cluster;
    std::size_t output_width = 0;     // cluster count K, or hash bits D (<= 64)
    std::vector<std::size_t> hidden;  // empty -> 1200/1200 for cluster, 200/200 for hash

    double lambda = 0.1;              // information weight
    Regularizer regularizer = Regularizer::Vat;
    double weight_decay = 0.0;        // weight matrices only

    // perturbation radius: eps(x) = alpha * distance to t-th neighbor, unless
    // fixed_eps > 0 pins a constant radius
    double alpha = 0.25;
    std::size_t t_neighbor = 10;
    double fixed_eps = 0.0;
    double xi = 10.0;
    std::size_t power_iters = 1;

    // marginal constraint (clustering): KL[p(y)||q] <= delta_frac * h(q)
    double delta_frac = 0.01;
    std::vector<double> prior_q;        // empty -> uniform
    std::vector<double> mu_multipliers; // empty -> {1,2,4,6,8,10}; mu = lambda * m
    bool warm_start = false;            // reuse weights across mu trials

    bool ordered_pairs = true;          // hash redundancy counts ordered pairs

    std::size_t batch_size = 250;
    std::size_t epochs = 50;
    double step_size = 0.002;
    std::vector<double> init_scales;    // empty -> layer defaults
    std::uint64_t seed = 0;

    // image geometry, needed by affine/composite augmentation
    std::size_t image_h = 0;
    std::size_t image_w = 0;
    double composite_weight_vat = 0.5;  // affine gets the complement
};

struct LossBreakdown {
    double sat = 0.0;
    double conditional_entropy = 0.0;
    double marginal_kl = 0.0;
    double penalty = 0.0;
    double per_bit_information = 0.0;
    double pairwise_information = 0.0;
};

struct TrainReport {
    TaskKind task = TaskKind::Cluster;
    std::size_t epochs = 0;                // of the returned model's run
    std::vector<double> objective_trace;   // per-epoch mean objective
    double final_kl = 0.0;                 // full-dataset KL[p(y)||q], cluster only
    double mu_final = 0.0;
    double seconds = 0.0;                  // wall clock, all penalty trials included
    LossBreakdown loss_terms;              // last-epoch means
};

struct TrainResult {
    MlpClassifier model;
    TrainReport report;
};

// Raised when no penalty weight in the schedule meets the marginal
// constraint; carries the closest model so callers can still save it.
class ConstraintUnsatisfiedError : public std::runtime_error {
public:
    ConstraintUnsatisfiedError(const std::string& msg, MlpClassifier best, double kl,
                               TrainReport rep)
        : std::runtime_error(msg), best_model(std::move(best)), best_kl(kl),
          report(std::move(rep)) {}

    MlpClassifier best_model;
    double best_kl = 0.0;
    TrainReport report;
};

// Penalty-method training of the clustering objective: each mu in the
// schedule trains from scratch (unless warm_start) and the first model whose
// full-dataset marginal satisfies the constraint wins.
TrainResult train_clustering(const Dataset& data, const TrainConfig& cfg);

// Plain mini-batch training of the hashing objective.
TrainResult train_hashing(const Dataset& data, const TrainConfig& cfg);

// Inference-mode soft outputs, computed in row blocks: N x K class
// probabilities, or N x D per-bit on-probabilities.
Matrix infer_soft(const MlpClassifier& model, const Matrix& features, TaskKind task);

// Hard assignments: argmax per row (ties to the smallest index) for
// clustering; per-bit threshold at 1/2 (ties to 0) packed little-endian into
// an integer for hashing.
CodeBook encode(const MlpClassifier& model, const Matrix& features, TaskKind task);

std::string report_to_json(const TrainReport& report);

}  // namespace imsat
