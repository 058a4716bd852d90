#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "imsat/matrix.hpp"

namespace imsat {

// Clustering objective weights: loss = sat + lambda*H(Y|X)
//                                    + mu*max(KL[batch marginal || prior] - delta, 0).
struct ClusterObjective {
    double lambda = 0.1;
    double delta = 0.0;   // tolerance on the marginal constraint
    double mu = 0.0;      // current penalty weight
    std::vector<double> prior_q;  // sums to 1, entries > 0

    static double default_delta(const std::vector<double>& prior_q, double frac = 0.01);
};

// Hash objective weights: loss = sat - lambda*(sum_d I(X;Y_d) - sum_{d!=d'} I(Y_d;Y_d')).
struct HashObjective {
    double lambda = 0.1;
    std::size_t bits = 16;
    // The redundancy sum runs over ordered pairs by default (each unordered
    // pair counted twice); flip to count each pair once.
    bool ordered_pairs = true;
};

// h(p) = -sum p log p in nats, 0*log 0 := 0. Validates p.
double shannon_entropy(const std::vector<double>& p);

// Mean of per-row entropies; rows must be valid distributions.
double conditional_entropy(const Matrix& batch_probs);

// Column mean of a batch of distributions.
std::vector<double> marginal_estimate(const Matrix& batch_probs);

// sum p log(p/q); q entries must be positive.
double kl_divergence(const std::vector<double>& p, const std::vector<double>& q);

// Mean over the batch of sum_m sum_y -target log(augmented). The target list
// is a detached snapshot; gradients flow only through the augmented probs.
double sat_loss(const std::vector<Matrix>& target_probs,
                const std::vector<Matrix>& augmented_probs);
// d(sat_loss)/d(augmented probs), one matrix per head.
std::vector<Matrix> sat_loss_grad(const std::vector<Matrix>& target_probs,
                                  const std::vector<Matrix>& augmented_probs);

struct ClusterLossTerms {
    double total = 0.0;
    double sat = 0.0;
    double conditional_entropy = 0.0;
    double marginal_kl = 0.0;  // KL[batch marginal || q]
    double penalty = 0.0;      // mu * hinge
};
ClusterLossTerms clustering_loss(const Matrix& batch_probs, double sat,
                                 const ClusterObjective& cfg);
// d(total)/d(batch_probs); the sat term contributes through its own grads.
Matrix clustering_loss_grad(const Matrix& batch_probs, const ClusterObjective& cfg);

using Joint2x2 = std::array<std::array<double, 2>, 2>;

// joint[a][b] = mean_i P(y_d=a|x_i) * P(y_e=b|x_i) for two binary outputs.
Joint2x2 pairwise_joint(const std::vector<double>& probs_d, const std::vector<double>& probs_e);

// I = sum joint log(joint / (row marginal * col marginal)), >= 0.
double mutual_information_from_joint(const Joint2x2& joint);

struct HashLossTerms {
    double total = 0.0;
    double sat = 0.0;
    double per_bit_information = 0.0;  // sum_d (H(Y_d) - H(Y_d|X))
    double pairwise_information = 0.0; // sum over pairs I(Y_d;Y_d')
};
// per_bit_probs: rows = points, col d = P(bit d = 1).
HashLossTerms hash_loss(const Matrix& per_bit_probs, double sat, const HashObjective& cfg);
// d(total)/d(per_bit_probs).
Matrix hash_loss_grad(const Matrix& per_bit_probs, const HashObjective& cfg);

}  // namespace imsat
