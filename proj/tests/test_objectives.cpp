#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "imsat/errors.hpp"
#include "imsat/objectives.hpp"

using imsat::ClusterObjective;
using imsat::HashObjective;
using imsat::Joint2x2;
using imsat::Matrix;

namespace {

Matrix prob_rows(std::initializer_list<std::initializer_list<double>> rows) {
    Matrix m(rows.size(), rows.begin()->size());
    std::size_t i = 0;
    for (const auto& r : rows) {
        std::size_t j = 0;
        for (double v : r) m(i, j++) = v;
        ++i;
    }
    return m;
}

// Random softmax-style rows bounded away from 0 so losses stay smooth for
// finite differencing.
Matrix random_prob_rows(std::size_t n, std::size_t k, unsigned seed) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> dist(0.05, 1.0);
    Matrix m(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            m(i, j) = dist(gen);
            sum += m(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) m(i, j) /= sum;
    }
    return m;
}

}  // namespace

TEST_CASE("shannon entropy") {
    CHECK(imsat::shannon_entropy({1.0, 0.0}) == doctest::Approx(0.0));
    CHECK(imsat::shannon_entropy({0.5, 0.5}) == doctest::Approx(std::log(2.0)));
    CHECK(imsat::shannon_entropy({0.25, 0.75}) == doctest::Approx(0.562335).epsilon(1e-5));
    CHECK(imsat::shannon_entropy({0.25, 0.25, 0.25, 0.25}) == doctest::Approx(std::log(4.0)));
    CHECK_THROWS_AS(imsat::shannon_entropy({0.5, 0.6}), imsat::DistributionError);
    CHECK_THROWS_AS(imsat::shannon_entropy({1.2, -0.2}), imsat::DistributionError);
}

TEST_CASE("conditional entropy averages row entropies") {
    CHECK(imsat::conditional_entropy(prob_rows({{1, 0}, {0, 1}})) == doctest::Approx(0.0));
    CHECK(imsat::conditional_entropy(prob_rows({{0.25, 0.25, 0.25, 0.25},
                                                {0.25, 0.25, 0.25, 0.25}})) ==
          doctest::Approx(std::log(4.0)));
    CHECK(imsat::conditional_entropy(prob_rows({{0.5, 0.5}, {1, 0}})) ==
          doctest::Approx(0.346574).epsilon(1e-5));
}

TEST_CASE("marginal estimate is the column mean") {
    auto m = imsat::marginal_estimate(prob_rows({{0.2, 0.8}, {0.6, 0.4}, {0.1, 0.9}}));
    REQUIRE(m.size() == 2);
    CHECK(m[0] == doctest::Approx(0.3));
    CHECK(m[1] == doctest::Approx(0.7));
    CHECK_THROWS_AS(imsat::marginal_estimate(Matrix()), imsat::InputError);
}

TEST_CASE("KL divergence") {
    CHECK(imsat::kl_divergence({0.3, 0.7}, {0.3, 0.7}) == doctest::Approx(0.0));
    CHECK(imsat::kl_divergence({1.0, 0.0}, {0.5, 0.5}) == doctest::Approx(std::log(2.0)));
    CHECK_THROWS_AS(imsat::kl_divergence({0.5, 0.5}, {1.0, 0.0}), imsat::DistributionError);
    CHECK_THROWS_AS(imsat::kl_divergence({0.5, 0.5}, {0.3, 0.3, 0.4}), imsat::ShapeError);
}

TEST_CASE("self-augmentation loss equals cross entropy to the frozen target") {
    std::vector<Matrix> same = {prob_rows({{0.5, 0.5}})};
    CHECK(imsat::sat_loss(same, same) == doctest::Approx(std::log(2.0)));

    std::vector<Matrix> target = {prob_rows({{1.0, 0.0}})};
    std::vector<Matrix> close = {prob_rows({{1.0 - 1e-8, 1e-8}})};
    CHECK(imsat::sat_loss(target, close) == doctest::Approx(0.0).epsilon(1e-6));

    std::vector<Matrix> t2 = {prob_rows({{0.5, 0.5}})};
    std::vector<Matrix> a2 = {prob_rows({{0.25, 0.75}})};
    CHECK(imsat::sat_loss(t2, a2) == doctest::Approx(0.836988).epsilon(1e-5));

    // equality invariant: sat(p, p) = mean entropy of p
    std::vector<Matrix> p = {random_prob_rows(7, 3, 1)};
    CHECK(imsat::sat_loss(p, p) == doctest::Approx(imsat::conditional_entropy(p[0])).epsilon(1e-9));

    std::vector<Matrix> wrong = {prob_rows({{0.5, 0.5}, {0.5, 0.5}})};
    CHECK_THROWS_AS(imsat::sat_loss(t2, wrong), imsat::ShapeError);
}

TEST_CASE("sat gradient matches finite differences and ignores the target side") {
    std::vector<Matrix> target = {random_prob_rows(4, 3, 2)};
    std::vector<Matrix> aug = {random_prob_rows(4, 3, 3)};
    auto grads = imsat::sat_loss_grad(target, aug);
    REQUIRE(grads.size() == 1);
    const double h = 1e-7;
    for (std::size_t i = 0; i < aug[0].size(); ++i) {
        std::vector<Matrix> hi = aug, lo = aug;
        hi[0].data[i] += h;
        lo[0].data[i] -= h;
        const double fd = (imsat::sat_loss(target, hi) - imsat::sat_loss(target, lo)) / (2 * h);
        CHECK(grads[0].data[i] == doctest::Approx(fd).epsilon(1e-5));
    }
}

TEST_CASE("clustering loss terms") {
    ClusterObjective cfg;
    cfg.lambda = 0.1;
    cfg.prior_q = {0.5, 0.5};
    cfg.delta = ClusterObjective::default_delta(cfg.prior_q);
    cfg.mu = 0.5;
    CHECK(cfg.delta == doctest::Approx(0.01 * std::log(2.0)));

    SUBCASE("all terms vanish on a deterministic balanced batch") {
        auto terms = imsat::clustering_loss(prob_rows({{1, 0}, {0, 1}}), 0.0, cfg);
        CHECK(terms.total == doctest::Approx(0.0));
        CHECK(terms.penalty == 0.0);
    }
    SUBCASE("uniform rows cost lambda*ln K with no penalty") {
        auto terms = imsat::clustering_loss(prob_rows({{0.5, 0.5}, {0.5, 0.5}}), 0.0, cfg);
        CHECK(terms.total == doctest::Approx(0.1 * std::log(2.0)));
        CHECK(terms.marginal_kl == doctest::Approx(0.0));
        CHECK(terms.penalty == 0.0);
    }
    SUBCASE("skewed marginal activates the hinge") {
        auto terms = imsat::clustering_loss(prob_rows({{1, 0}, {1, 0}}), 0.0, cfg);
        CHECK(terms.marginal_kl == doctest::Approx(std::log(2.0)));
        CHECK(terms.penalty == doctest::Approx(0.5 * (std::log(2.0) - cfg.delta)));
        CHECK(terms.total == doctest::Approx(terms.sat + 0.1 * terms.conditional_entropy +
                                             terms.penalty));
    }
    SUBCASE("sat passes through") {
        auto terms = imsat::clustering_loss(prob_rows({{1, 0}, {0, 1}}), 1.25, cfg);
        CHECK(terms.sat == 1.25);
        CHECK(terms.total == doctest::Approx(1.25));
    }
}

TEST_CASE("clustering gradient matches finite differences") {
    ClusterObjective cfg;
    cfg.lambda = 0.3;
    cfg.prior_q = {0.6, 0.4};
    cfg.delta = 1e-4;  // small so the hinge is active for a generic batch
    cfg.mu = 0.7;
    Matrix p = random_prob_rows(5, 2, 4);
    Matrix g = imsat::clustering_loss_grad(p, cfg);
    const double h = 1e-7;
    for (std::size_t i = 0; i < p.size(); ++i) {
        Matrix hi = p, lo = p;
        hi.data[i] += h;
        lo.data[i] -= h;
        const double fd = (imsat::clustering_loss(hi, 0.0, cfg).total -
                           imsat::clustering_loss(lo, 0.0, cfg).total) / (2 * h);
        CHECK(g.data[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("pairwise joint table") {
    SUBCASE("independent half-half bits") {
        Joint2x2 j = imsat::pairwise_joint({0.5, 0.5}, {0.5, 0.5});
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) CHECK(j[a][b] == doctest::Approx(0.25));
    }
    SUBCASE("perfectly correlated bits") {
        Joint2x2 j = imsat::pairwise_joint({1.0, 0.0}, {1.0, 0.0});
        CHECK(j[0][0] == doctest::Approx(0.5));
        CHECK(j[1][1] == doctest::Approx(0.5));
        CHECK(j[0][1] == doctest::Approx(0.0));
        CHECK(j[1][0] == doctest::Approx(0.0));
    }
    SUBCASE("direct averaging for two generic points") {
        // joint[a][b] = mean over points of P(bit_d = a) * P(bit_e = b)
        Joint2x2 j = imsat::pairwise_joint({0.8, 0.2}, {0.6, 0.4});
        CHECK(j[0][0] == doctest::Approx(0.5 * (0.2 * 0.4 + 0.8 * 0.6)));  // 0.28
        CHECK(j[0][1] == doctest::Approx(0.5 * (0.2 * 0.6 + 0.8 * 0.4)));  // 0.22
        CHECK(j[1][0] == doctest::Approx(0.5 * (0.8 * 0.4 + 0.2 * 0.6)));  // 0.22
        CHECK(j[1][1] == doctest::Approx(0.5 * (0.8 * 0.6 + 0.2 * 0.4)));  // 0.28
        // marginals must match the column means of the inputs
        CHECK(j[1][0] + j[1][1] == doctest::Approx(0.5));
        CHECK(j[0][1] + j[1][1] == doctest::Approx(0.5));
    }
    CHECK_THROWS_AS(imsat::pairwise_joint({0.5}, {0.5, 0.5}), imsat::ShapeError);
}

TEST_CASE("mutual information from a 2x2 joint") {
    Joint2x2 product = {{{0.25, 0.25}, {0.25, 0.25}}};
    CHECK(imsat::mutual_information_from_joint(product) == doctest::Approx(0.0));

    Joint2x2 corr = {{{0.5, 0.0}, {0.0, 0.5}}};
    CHECK(imsat::mutual_information_from_joint(corr) == doctest::Approx(std::log(2.0)));

    // symmetry under transpose
    Joint2x2 j = imsat::pairwise_joint({0.8, 0.2, 0.7}, {0.6, 0.4, 0.1});
    Joint2x2 jt = imsat::pairwise_joint({0.6, 0.4, 0.1}, {0.8, 0.2, 0.7});
    CHECK(imsat::mutual_information_from_joint(j) ==
          doctest::Approx(imsat::mutual_information_from_joint(jt)).epsilon(1e-12));
    CHECK(imsat::mutual_information_from_joint(j) >= -1e-12);

    Joint2x2 invalid = {{{0.5, 0.5}, {0.5, 0.5}}};
    CHECK_THROWS_AS(imsat::mutual_information_from_joint(invalid), imsat::DistributionError);
}

TEST_CASE("hash loss") {
    HashObjective cfg;
    cfg.lambda = 1.0;
    cfg.bits = 1;
    SUBCASE("one decisive bit yields about -ln 2") {
        Matrix p(2, 1);
        p(0, 0) = 1.0 - 1e-8;
        p(1, 0) = 1e-8;
        auto terms = imsat::hash_loss(p, 0.0, cfg);
        CHECK(terms.total == doctest::Approx(-std::log(2.0)).epsilon(1e-6));
        CHECK(terms.pairwise_information == 0.0);
    }
    SUBCASE("pure noise carries no information") {
        Matrix p(3, 2, 0.5);
        cfg.bits = 2;
        auto terms = imsat::hash_loss(p, 0.7, cfg);
        CHECK(terms.per_bit_information == doctest::Approx(0.0));
        CHECK(terms.pairwise_information == doctest::Approx(0.0));
        CHECK(terms.total == doctest::Approx(0.7));
    }
    SUBCASE("ordered pairs double the redundancy weight") {
        Matrix p = random_prob_rows(6, 3, 5);
        cfg.bits = 3;
        cfg.ordered_pairs = true;
        auto ordered = imsat::hash_loss(p, 0.0, cfg);
        cfg.ordered_pairs = false;
        auto unordered = imsat::hash_loss(p, 0.0, cfg);
        CHECK(ordered.pairwise_information ==
              doctest::Approx(2.0 * unordered.pairwise_information));
        CHECK(ordered.per_bit_information == doctest::Approx(unordered.per_bit_information));
    }
}

TEST_CASE("hash gradient matches finite differences") {
    HashObjective cfg;
    cfg.lambda = 0.4;
    cfg.bits = 3;
    Matrix p = random_prob_rows(5, 3, 6);
    // keep probabilities interior
    for (double& v : p.data) v = 0.2 + 0.6 * v;
    Matrix g = imsat::hash_loss_grad(p, cfg);
    const double h = 1e-7;
    for (std::size_t i = 0; i < p.size(); ++i) {
        Matrix hi = p, lo = p;
        hi.data[i] += h;
        lo.data[i] -= h;
        const double fd =
            (imsat::hash_loss(hi, 0.0, cfg).total - imsat::hash_loss(lo, 0.0, cfg).total) /
            (2 * h);
        CHECK(g.data[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("batch marginal KL upper-bounds the full-set KL on average") {
    // Convexity of KL in its first argument: splitting a dataset into batches
    // can only raise the average marginal penalty.
    Matrix p = random_prob_rows(12, 3, 7);
    const std::vector<double> q = {0.2, 0.3, 0.5};
    const double full = imsat::kl_divergence(imsat::marginal_estimate(p), q);

    double mean_batch = 0.0;
    for (std::size_t b = 0; b < 3; ++b) {
        Matrix batch(4, 3);
        for (std::size_t i = 0; i < 4; ++i)
            for (std::size_t j = 0; j < 3; ++j) batch(i, j) = p(b * 4 + i, j);
        mean_batch += imsat::kl_divergence(imsat::marginal_estimate(batch), q);
    }
    mean_batch /= 3.0;
    CHECK(mean_batch >= full - 1e-9);
}
