#include "imsat/objectives.hpp"

#include <cmath>
#include <string>

#include "imsat/errors.hpp"
#include "imsat/nn.hpp"

namespace imsat {

namespace {

double safe_log(double p) { return std::log(std::max(p, kProbClamp)); }

// -p log p with the 0 log 0 := 0 convention
double nlogn(double p) { return p > 0.0 ? -p * std::log(p) : 0.0; }

void check_distribution(const std::vector<double>& p, const char* what) {
    if (p.empty()) throw DistributionError(std::string(what) + ": empty distribution");
    double sum = 0.0;
    for (double v : p) {
        if (v < 0.0) throw DistributionError(std::string(what) + ": negative entry");
        sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw DistributionError(std::string(what) + ": entries sum to " + std::to_string(sum));
}

void check_rows(const Matrix& probs, const char* what) {
    if (probs.rows == 0 || probs.cols == 0)
        throw InputError(std::string(what) + ": empty batch");
    for (std::size_t i = 0; i < probs.rows; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < probs.cols; ++j) {
            const double v = probs(i, j);
            if (v < 0.0) throw DistributionError(std::string(what) + ": negative entry in row " +
                                                 std::to_string(i));
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw DistributionError(std::string(what) + ": row " + std::to_string(i) +
                                    " sums to " + std::to_string(sum));
    }
}

// binary entropy and its derivative
double binary_entropy(double p) { return nlogn(p) + nlogn(1.0 - p); }
double binary_entropy_deriv(double p) {
    return std::log(std::max(1.0 - p, kProbClamp) / std::max(p, kProbClamp));
}

}  // namespace

double ClusterObjective::default_delta(const std::vector<double>& prior_q, double frac) {
    return frac * shannon_entropy(prior_q);
}

double shannon_entropy(const std::vector<double>& p) {
    check_distribution(p, "shannon_entropy");
    double h = 0.0;
    for (double v : p) h += nlogn(v);
    return h;
}

double conditional_entropy(const Matrix& batch_probs) {
    check_rows(batch_probs, "conditional_entropy");
    double h = 0.0;
    for (std::size_t i = 0; i < batch_probs.rows; ++i)
        for (std::size_t j = 0; j < batch_probs.cols; ++j) h += nlogn(batch_probs(i, j));
    return h / static_cast<double>(batch_probs.rows);
}

std::vector<double> marginal_estimate(const Matrix& batch_probs) {
    if (batch_probs.rows == 0 || batch_probs.cols == 0)
        throw InputError("marginal_estimate: empty batch");
    check_rows(batch_probs, "marginal_estimate");
    return column_mean(batch_probs);
}

double kl_divergence(const std::vector<double>& p, const std::vector<double>& q) {
    if (p.size() != q.size()) throw ShapeError("kl_divergence: length mismatch");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (q[i] <= 0.0) throw DistributionError("kl_divergence: q has a non-positive entry");
        if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
    }
    return kl;
}

double sat_loss(const std::vector<Matrix>& target_probs,
                const std::vector<Matrix>& augmented_probs) {
    if (target_probs.size() != augmented_probs.size())
        throw ShapeError("sat_loss: head count mismatch");
    if (target_probs.empty()) throw ShapeError("sat_loss: no heads");
    const std::size_t n = target_probs[0].rows;
    double loss = 0.0;
    for (std::size_t m = 0; m < target_probs.size(); ++m) {
        const Matrix& t = target_probs[m];
        const Matrix& p = augmented_probs[m];
        if (!t.same_shape(p) || t.rows != n)
            throw ShapeError("sat_loss: head " + std::to_string(m) + " shape mismatch");
        for (std::size_t i = 0; i < t.size(); ++i) loss -= t.data[i] * safe_log(p.data[i]);
    }
    return loss / static_cast<double>(n);
}

std::vector<Matrix> sat_loss_grad(const std::vector<Matrix>& target_probs,
                                  const std::vector<Matrix>& augmented_probs) {
    if (target_probs.size() != augmented_probs.size())
        throw ShapeError("sat_loss_grad: head count mismatch");
    std::vector<Matrix> grads;
    const double n = static_cast<double>(target_probs.at(0).rows);
    for (std::size_t m = 0; m < target_probs.size(); ++m) {
        const Matrix& t = target_probs[m];
        const Matrix& p = augmented_probs[m];
        if (!t.same_shape(p)) throw ShapeError("sat_loss_grad: shape mismatch");
        Matrix g(t.rows, t.cols);
        for (std::size_t i = 0; i < t.size(); ++i)
            g.data[i] = -t.data[i] / (n * std::max(p.data[i], kProbClamp));
        grads.push_back(std::move(g));
    }
    return grads;
}

ClusterLossTerms clustering_loss(const Matrix& batch_probs, double sat,
                                 const ClusterObjective& cfg) {
    check_rows(batch_probs, "clustering_loss");
    if (cfg.prior_q.size() != batch_probs.cols)
        throw ShapeError("clustering_loss: prior has wrong length");

    ClusterLossTerms terms;
    terms.sat = sat;
    terms.conditional_entropy = conditional_entropy(batch_probs);
    terms.marginal_kl = kl_divergence(marginal_estimate(batch_probs), cfg.prior_q);
    const double violation = terms.marginal_kl - cfg.delta;
    terms.penalty = violation > 0.0 ? cfg.mu * violation : 0.0;
    terms.total = sat + cfg.lambda * terms.conditional_entropy + terms.penalty;
    return terms;
}

Matrix clustering_loss_grad(const Matrix& batch_probs, const ClusterObjective& cfg) {
    check_rows(batch_probs, "clustering_loss_grad");
    if (cfg.prior_q.size() != batch_probs.cols)
        throw ShapeError("clustering_loss_grad: prior has wrong length");

    const double n = static_cast<double>(batch_probs.rows);
    const std::vector<double> marginal = column_mean(batch_probs);
    const double kl = kl_divergence(marginal, cfg.prior_q);
    // hinge subgradient is 0 at the kink, so the penalty only contributes
    // strictly past the tolerance
    const double mu_active = kl > cfg.delta ? cfg.mu : 0.0;

    Matrix grad(batch_probs.rows, batch_probs.cols);
    for (std::size_t j = 0; j < batch_probs.cols; ++j) {
        const double dkl =
            mu_active * (std::log(std::max(marginal[j], kProbClamp) / cfg.prior_q[j]) + 1.0) / n;
        for (std::size_t i = 0; i < batch_probs.rows; ++i) {
            const double dce = -cfg.lambda * (safe_log(batch_probs(i, j)) + 1.0) / n;
            grad(i, j) = dce + dkl;
        }
    }
    return grad;
}

Joint2x2 pairwise_joint(const std::vector<double>& probs_d,
                        const std::vector<double>& probs_e) {
    if (probs_d.size() != probs_e.size()) throw ShapeError("pairwise_joint: length mismatch");
    if (probs_d.empty()) throw InputError("pairwise_joint: empty input");
    Joint2x2 joint{{{0.0, 0.0}, {0.0, 0.0}}};
    for (std::size_t i = 0; i < probs_d.size(); ++i) {
        const double pd = probs_d[i];
        const double pe = probs_e[i];
        if (pd < 0.0 || pd > 1.0 || pe < 0.0 || pe > 1.0)
            throw DistributionError("pairwise_joint: probability outside [0,1]");
        joint[0][0] += (1.0 - pd) * (1.0 - pe);
        joint[0][1] += (1.0 - pd) * pe;
        joint[1][0] += pd * (1.0 - pe);
        joint[1][1] += pd * pe;
    }
    const double n = static_cast<double>(probs_d.size());
    for (auto& row : joint)
        for (double& v : row) v /= n;
    return joint;
}

double mutual_information_from_joint(const Joint2x2& joint) {
    double sum = 0.0;
    for (const auto& row : joint)
        for (double v : row) {
            if (v < -1e-12) throw DistributionError("mutual_information: negative joint entry");
            sum += v;
        }
    if (std::abs(sum - 1.0) > 1e-6)
        throw DistributionError("mutual_information: joint sums to " + std::to_string(sum));

    const double r0 = joint[0][0] + joint[0][1];
    const double r1 = joint[1][0] + joint[1][1];
    const double c0 = joint[0][0] + joint[1][0];
    const double c1 = joint[0][1] + joint[1][1];
    const double rm[2] = {r0, r1};
    const double cm[2] = {c0, c1};
    double mi = 0.0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) {
            const double j = joint[a][b];
            if (j > 0.0) mi += j * std::log(j / (rm[a] * cm[b]));
        }
    return mi;
}

namespace {

void check_bit_probs(const Matrix& p, const char* what) {
    if (p.rows == 0 || p.cols == 0) throw InputError(std::string(what) + ": empty batch");
    for (double v : p.data)
        if (v < 0.0 || v > 1.0)
            throw DistributionError(std::string(what) + ": bit probability outside [0,1]");
}

std::vector<double> bit_column(const Matrix& p, std::size_t d) {
    std::vector<double> col(p.rows);
    for (std::size_t i = 0; i < p.rows; ++i) col[i] = p(i, d);
    return col;
}

}  // namespace

HashLossTerms hash_loss(const Matrix& per_bit_probs, double sat, const HashObjective& cfg) {
    check_bit_probs(per_bit_probs, "hash_loss");
    if (per_bit_probs.cols != cfg.bits)
        throw ShapeError("hash_loss: expected " + std::to_string(cfg.bits) + " bit columns");
    if (cfg.bits < 1) throw ConfigError("hash_loss: bits must be >= 1");

    const std::size_t n = per_bit_probs.rows;
    const std::size_t D = cfg.bits;

    HashLossTerms terms;
    terms.sat = sat;
    for (std::size_t d = 0; d < D; ++d) {
        double marginal = 0.0, cond = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            marginal += per_bit_probs(i, d);
            cond += binary_entropy(per_bit_probs(i, d));
        }
        marginal /= static_cast<double>(n);
        cond /= static_cast<double>(n);
        terms.per_bit_information += binary_entropy(marginal) - cond;
    }

    const double pair_weight = cfg.ordered_pairs ? 2.0 : 1.0;
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t e = d + 1; e < D; ++e) {
            const Joint2x2 joint = pairwise_joint(bit_column(per_bit_probs, d),
                                                  bit_column(per_bit_probs, e));
            terms.pairwise_information += pair_weight * mutual_information_from_joint(joint);
        }

    terms.total = sat - cfg.lambda * (terms.per_bit_information - terms.pairwise_information);
    return terms;
}

Matrix hash_loss_grad(const Matrix& per_bit_probs, const HashObjective& cfg) {
    check_bit_probs(per_bit_probs, "hash_loss_grad");
    if (per_bit_probs.cols != cfg.bits)
        throw ShapeError("hash_loss_grad: expected " + std::to_string(cfg.bits) + " bit columns");

    const std::size_t n = per_bit_probs.rows;
    const std::size_t D = cfg.bits;
    const double nd = static_cast<double>(n);
    Matrix grad(n, D, 0.0);

    // marginal and conditional entropy terms, bit by bit
    for (std::size_t d = 0; d < D; ++d) {
        double marginal = 0.0;
        for (std::size_t i = 0; i < n; ++i) marginal += per_bit_probs(i, d);
        marginal /= nd;
        const double dmarg = binary_entropy_deriv(marginal) / nd;
        for (std::size_t i = 0; i < n; ++i) {
            const double dcond = binary_entropy_deriv(per_bit_probs(i, d)) / nd;
            grad(i, d) += -cfg.lambda * (dmarg - dcond);
        }
    }

    // pairwise redundancy terms
    const double pair_weight = cfg.ordered_pairs ? 2.0 : 1.0;
    for (std::size_t d = 0; d < D; ++d)
        for (std::size_t e = d + 1; e < D; ++e) {
            const std::vector<double> pd = bit_column(per_bit_probs, d);
            const std::vector<double> pe = bit_column(per_bit_probs, e);
            const Joint2x2 joint = pairwise_joint(pd, pe);
            const double rm[2] = {joint[0][0] + joint[0][1], joint[1][0] + joint[1][1]};
            const double cm[2] = {joint[0][0] + joint[1][0], joint[0][1] + joint[1][1]};
            double dj[2][2];
            for (int a = 0; a < 2; ++a)
                for (int b = 0; b < 2; ++b)
                    dj[a][b] = std::log(std::max(joint[a][b], kProbClamp) /
                                        std::max(rm[a] * cm[b], kProbClamp * kProbClamp)) -
                               1.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double ve[2] = {1.0 - pe[i], pe[i]};
                const double vd[2] = {1.0 - pd[i], pd[i]};
                double gi_d = 0.0, gi_e = 0.0;
                for (int b = 0; b < 2; ++b) gi_d += (dj[1][b] - dj[0][b]) * ve[b];
                for (int a = 0; a < 2; ++a) gi_e += (dj[a][1] - dj[a][0]) * vd[a];
                grad(i, d) += cfg.lambda * pair_weight * gi_d / nd;
                grad(i, e) += cfg.lambda * pair_weight * gi_e / nd;
            }
        }

    return grad;
}

}  // namespace imsat
