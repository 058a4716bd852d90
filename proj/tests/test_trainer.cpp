#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <map>
#include <vector>

#include <json.hpp>

#include "imsat/data.hpp"
#include "imsat/errors.hpp"
#include "imsat/eval.hpp"
#include "imsat/nn.hpp"
#include "imsat/objectives.hpp"
#include "imsat/trainer.hpp"

using imsat::Dataset;
using imsat::HeadSpec;
using imsat::Matrix;
using imsat::MlpClassifier;
using imsat::Regularizer;
using imsat::TaskKind;
using imsat::TrainConfig;
using imsat::TrainResult;

namespace {

// Small, easily separated corpus for end-to-end runs.
Dataset easy_blobs(std::size_t k, std::size_t per_blob, std::uint64_t seed) {
    return imsat::gen_blobs(k, per_blob, 2, 10.0, 0.5, seed);
}

TrainConfig quick_cluster_config(std::size_t k) {
    TrainConfig cfg;
    cfg.task = TaskKind::Cluster;
    cfg.output_width = k;
    cfg.hidden = {8};
    cfg.batch_size = 25;
    cfg.epochs = 40;
    return cfg;
}

}  // namespace

TEST_CASE("training rejects broken configuration up front") {
    const Dataset data = easy_blobs(2, 20, 1);
    const TrainConfig base = quick_cluster_config(2);

    SUBCASE("cluster count below two is vacuous") {
        TrainConfig cfg = base;
        cfg.output_width = 1;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
        cfg.output_width = 0;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
    }
    SUBCASE("hash bit count must fit a 64-bit code") {
        TrainConfig cfg = base;
        cfg.task = TaskKind::Hash;
        cfg.output_width = 0;
        CHECK_THROWS_AS(imsat::train_hashing(data, cfg), imsat::ConfigError);
        cfg.output_width = 65;
        CHECK_THROWS_AS(imsat::train_hashing(data, cfg), imsat::ConfigError);
    }
    SUBCASE("entry points check the task tag") {
        TrainConfig cfg = base;
        cfg.task = TaskKind::Hash;
        cfg.output_width = 4;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
        cfg.task = TaskKind::Cluster;
        CHECK_THROWS_AS(imsat::train_hashing(data, cfg), imsat::ConfigError);
    }
    SUBCASE("batch size must lie in [1, N]") {
        TrainConfig cfg = base;
        cfg.batch_size = 0;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
        cfg.batch_size = data.size() + 1;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
    }
    SUBCASE("epochs, step size, lambda, and decay are range-checked") {
        TrainConfig cfg = base;
        cfg.epochs = 0;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
        cfg = base;
        cfg.step_size = 0.0;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
        cfg = base;
        cfg.lambda = -0.1;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
        cfg = base;
        cfg.weight_decay = -1.0;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
    }
    SUBCASE("marginal prior must match the cluster count and be positive") {
        TrainConfig cfg = base;
        cfg.prior_q = {0.5, 0.3, 0.2};
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
        cfg.prior_q = {1.0, 0.0};
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
    }
    SUBCASE("affine-style augmentation needs image geometry") {
        TrainConfig cfg = base;
        cfg.regularizer = Regularizer::Affine;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
        cfg.regularizer = Regularizer::Composite;
        cfg.image_h = 4;  // 4x4 != feature width 2
        cfg.image_w = 4;
        CHECK_THROWS_AS(imsat::train_clustering(data, cfg), imsat::ConfigError);
    }
    SUBCASE("composite mixing weight lies in [0,1]") {
        Dataset img = easy_blobs(2, 20, 1);
        // widen rows to a 2x2 image so geometry checks pass
        Matrix wide(img.features.rows, 4, 0.0);
        for (std::size_t i = 0; i < img.features.rows; ++i) {
            wide(i, 0) = img.features(i, 0);
            wide(i, 1) = img.features(i, 1);
        }
        img.features = wide;
        TrainConfig cfg = base;
        cfg.regularizer = Regularizer::Composite;
        cfg.image_h = 2;
        cfg.image_w = 2;
        cfg.composite_weight_vat = 1.5;
        CHECK_THROWS_AS(imsat::train_clustering(img, cfg), imsat::ConfigError);
    }
    SUBCASE("empty or non-finite data is an input error") {
        Dataset empty;
        empty.features = Matrix(0, 2);
        CHECK_THROWS_AS(imsat::train_clustering(empty, base), imsat::InputError);

        Dataset poisoned = easy_blobs(2, 20, 1);
        poisoned.features(3, 1) = std::nan("");
        CHECK_THROWS_AS(imsat::train_clustering(poisoned, base), imsat::InputError);
    }
}

TEST_CASE("well-separated blobs cluster perfectly under the marginal constraint") {
    const Dataset data = easy_blobs(2, 50, 3);
    TrainConfig cfg = quick_cluster_config(2);
    cfg.epochs = 300;
    cfg.seed = 5;

    const TrainResult result = imsat::train_clustering(data, cfg);

    const double delta = imsat::ClusterObjective::default_delta({0.5, 0.5}, cfg.delta_frac);
    CHECK(result.report.final_kl <= delta);
    CHECK(result.report.epochs == cfg.epochs);
    CHECK(result.report.objective_trace.size() == cfg.epochs);
    for (double v : result.report.objective_trace) CHECK(std::isfinite(v));
    CHECK(result.report.mu_final >= cfg.lambda);
    CHECK(result.report.seconds > 0.0);

    const imsat::CodeBook codes = imsat::encode(result.model, data.features, TaskKind::Cluster);
    const double acc = imsat::clustering_accuracy(codes, data.labels).acc;
    CHECK(acc == doctest::Approx(1.0));
}

TEST_CASE("identical config and seed reproduce the identical run") {
    const Dataset data = easy_blobs(2, 30, 7);
    TrainConfig cfg = quick_cluster_config(2);
    cfg.epochs = 25;
    cfg.batch_size = 20;
    cfg.seed = 42;

    const TrainResult a = imsat::train_clustering(data, cfg);
    const TrainResult b = imsat::train_clustering(data, cfg);

    REQUIRE(a.report.objective_trace.size() == b.report.objective_trace.size());
    for (std::size_t i = 0; i < a.report.objective_trace.size(); ++i)
        CHECK(a.report.objective_trace[i] == b.report.objective_trace[i]);
    CHECK(a.report.final_kl == b.report.final_kl);
    CHECK(a.report.mu_final == b.report.mu_final);

    const imsat::CodeBook ca = imsat::encode(a.model, data.features, TaskKind::Cluster);
    const imsat::CodeBook cb = imsat::encode(b.model, data.features, TaskKind::Cluster);
    CHECK(ca.assignments == cb.assignments);

    // A different seed must at least produce a different numeric trace.
    cfg.seed = 43;
    const TrainResult c = imsat::train_clustering(data, cfg);
    CHECK(c.report.objective_trace.front() != a.report.objective_trace.front());
}

TEST_CASE("an unreachable marginal prior raises an error carrying the best run") {
    const Dataset data = easy_blobs(2, 20, 9);
    TrainConfig cfg = quick_cluster_config(2);
    cfg.epochs = 6;
    cfg.batch_size = 20;
    cfg.regularizer = Regularizer::None;
    // Nearly-degenerate target marginal with a penalty far too weak to pull
    // the entropy-maximizing solution toward it.
    cfg.prior_q = {0.999, 0.001};
    cfg.mu_multipliers = {1e-12, 1e-11};

    bool raised = false;
    try {
        imsat::train_clustering(data, cfg);
    } catch (const imsat::ConstraintUnsatisfiedError& e) {
        raised = true;
        const double delta =
            imsat::ClusterObjective::default_delta(cfg.prior_q, cfg.delta_frac);
        CHECK(e.best_kl > delta);
        CHECK(std::isfinite(e.best_kl));
        CHECK(e.report.objective_trace.size() == cfg.epochs);
        CHECK(e.report.seconds > 0.0);
        // The carried model must still be usable for inference.
        CHECK(e.best_model.input_dim() == 2);
        const Matrix soft = imsat::infer_soft(e.best_model, data.features, TaskKind::Cluster);
        CHECK(soft.rows == data.size());
        CHECK(imsat::all_finite(soft));
    }
    CHECK(raised);
}

TEST_CASE("hard assignments follow the stated argmax and threshold tie rules") {
    Matrix x(3, 2);
    x(0, 0) = 0.3;
    x(1, 1) = -2.0;
    x(2, 0) = 1.0;
    x(2, 1) = 1.0;

    SUBCASE("an all-zero network ties every class and picks cluster 0") {
        MlpClassifier model =
            imsat::init_params({2, 3}, {HeadSpec::softmax(3)}, {0.0}, 1);
        const imsat::CodeBook book = imsat::encode(model, x, TaskKind::Cluster);
        for (std::uint64_t a : book.assignments) CHECK(a == 0);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j)
                CHECK(book.soft_probs(i, j) == doctest::Approx(1.0 / 3.0));
        CHECK(book.width == 3);
        CHECK_FALSE(book.is_hash);
    }
    SUBCASE("cluster probabilities [0.1, 0.7, 0.2] pick cluster 1") {
        MlpClassifier model =
            imsat::init_params({2, 3}, {HeadSpec::softmax(3)}, {0.0}, 1);
        // With zero weights, softmax of the bias row realizes any target
        // distribution via logits log p.
        model.layers.back().b(0, 0) = std::log(0.1);
        model.layers.back().b(0, 1) = std::log(0.7);
        model.layers.back().b(0, 2) = std::log(0.2);
        const imsat::CodeBook book = imsat::encode(model, x, TaskKind::Cluster);
        for (std::uint64_t a : book.assignments) CHECK(a == 1);
        CHECK(book.soft_probs(0, 0) == doctest::Approx(0.1));
        CHECK(book.soft_probs(0, 1) == doctest::Approx(0.7));
        CHECK(book.soft_probs(0, 2) == doctest::Approx(0.2));
    }
    SUBCASE("bit probabilities [0.9, 0.4, 0.5] pack to code 0b001") {
        MlpClassifier model = imsat::init_params(
            {2, 3}, {HeadSpec::sigmoid(), HeadSpec::sigmoid(), HeadSpec::sigmoid()}, {0.0}, 1);
        auto logit = [](double p) { return std::log(p / (1.0 - p)); };
        model.layers.back().b(0, 0) = logit(0.9);
        model.layers.back().b(0, 1) = logit(0.4);
        model.layers.back().b(0, 2) = 0.0;  // sigmoid(0) = 0.5 exactly: tie -> 0
        const imsat::CodeBook book = imsat::encode(model, x, TaskKind::Hash);
        for (std::uint64_t code : book.assignments) CHECK(code == 0b001);
        CHECK(book.soft_probs(0, 0) == doctest::Approx(0.9));
        CHECK(book.soft_probs(0, 1) == doctest::Approx(0.4));
        CHECK(book.soft_probs(0, 2) == doctest::Approx(0.5));
        CHECK(book.is_hash);
    }
    SUBCASE("an all-zero hash network codes everything as 0") {
        MlpClassifier model = imsat::init_params(
            {2, 2}, {HeadSpec::sigmoid(), HeadSpec::sigmoid()}, {0.0}, 1);
        const imsat::CodeBook book = imsat::encode(model, x, TaskKind::Hash);
        for (std::uint64_t code : book.assignments) CHECK(code == 0);
    }
}

TEST_CASE("block-wise inference matches a row-by-row pass") {
    imsat::Rng rng(21);
    const std::size_t n = 1300;  // crosses several internal blocks
    Matrix x(n, 3);
    for (double& v : x.data) v = rng.uniform(-2.0, 2.0);

    SUBCASE("cluster probabilities") {
        MlpClassifier model =
            imsat::init_params({3, 6, 4}, {HeadSpec::softmax(4)}, {}, 77);
        const Matrix soft = imsat::infer_soft(model, x, TaskKind::Cluster);
        REQUIRE(soft.rows == n);
        REQUIRE(soft.cols == 4);
        for (std::size_t i = 0; i < n; i += 251) {
            Matrix row(1, 3);
            for (std::size_t j = 0; j < 3; ++j) row(0, j) = x(i, j);
            const Matrix one =
                imsat::forward(model, row, imsat::RunMode::Infer).head_probs[0];
            double sum = 0.0;
            for (std::size_t j = 0; j < 4; ++j) {
                CHECK(soft(i, j) == doctest::Approx(one(0, j)).epsilon(1e-12));
                sum += soft(i, j);
            }
            CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
        }
    }
    SUBCASE("per-bit on-probabilities") {
        MlpClassifier model = imsat::init_params(
            {3, 6, 5},
            {HeadSpec::sigmoid(), HeadSpec::sigmoid(), HeadSpec::sigmoid(),
             HeadSpec::sigmoid(), HeadSpec::sigmoid()},
            {}, 78);
        const Matrix soft = imsat::infer_soft(model, x, TaskKind::Hash);
        REQUIRE(soft.cols == 5);
        for (std::size_t i = 0; i < n; i += 307) {
            Matrix row(1, 3);
            for (std::size_t j = 0; j < 3; ++j) row(0, j) = x(i, j);
            const auto fr = imsat::forward(model, row, imsat::RunMode::Infer);
            for (std::size_t m = 0; m < 5; ++m)
                CHECK(soft(i, m) == doctest::Approx(fr.head_probs[m](0, 1)).epsilon(1e-12));
        }
    }
    SUBCASE("feature width mismatch is a shape error") {
        MlpClassifier model =
            imsat::init_params({3, 6, 4}, {HeadSpec::softmax(4)}, {}, 77);
        CHECK_THROWS_AS(imsat::infer_soft(model, Matrix(5, 2), TaskKind::Cluster),
                        imsat::ShapeError);
    }
}

TEST_CASE("training reports serialize to well-formed JSON") {
    const Dataset data = easy_blobs(2, 20, 11);

    SUBCASE("clustering report") {
        TrainConfig cfg = quick_cluster_config(2);
        cfg.epochs = 8;
        cfg.batch_size = 20;
        const TrainResult result = imsat::train_clustering(data, cfg);

        const nlohmann::json j = nlohmann::json::parse(imsat::report_to_json(result.report));
        CHECK(j.at("epochs").get<std::size_t>() == 8);
        CHECK(j.at("objective_trace").size() == 8);
        CHECK(j.at("objective_trace")[0].get<double>() ==
              doctest::Approx(result.report.objective_trace[0]));
        CHECK(j.at("final_kl").get<double>() == doctest::Approx(result.report.final_kl));
        CHECK(j.at("mu_final").get<double>() == doctest::Approx(result.report.mu_final));
        CHECK(j.at("seconds").get<double>() > 0.0);
        CHECK(j.at("loss_terms").contains("sat"));
        CHECK(j.at("loss_terms").contains("conditional_entropy"));
        CHECK(j.at("loss_terms").contains("marginal_kl"));
        CHECK(j.at("loss_terms").contains("penalty"));
        CHECK_FALSE(j.at("loss_terms").contains("per_bit_information"));
    }
    SUBCASE("hashing report") {
        TrainConfig cfg;
        cfg.task = TaskKind::Hash;
        cfg.output_width = 3;
        cfg.hidden = {8};
        cfg.batch_size = 20;
        cfg.epochs = 8;
        const TrainResult result = imsat::train_hashing(data, cfg);

        const nlohmann::json j = nlohmann::json::parse(imsat::report_to_json(result.report));
        CHECK(j.at("epochs").get<std::size_t>() == 8);
        CHECK(j.at("loss_terms").contains("per_bit_information"));
        CHECK(j.at("loss_terms").contains("pairwise_information"));
        CHECK_FALSE(j.at("loss_terms").contains("marginal_kl"));
    }
}

TEST_CASE("warm-started penalty trials still satisfy the marginal constraint") {
    const Dataset data = easy_blobs(2, 30, 13);
    TrainConfig cfg = quick_cluster_config(2);
    cfg.epochs = 60;
    cfg.batch_size = 30;
    cfg.warm_start = true;
    cfg.seed = 2;

    const TrainResult result = imsat::train_clustering(data, cfg);
    const double delta = imsat::ClusterObjective::default_delta({0.5, 0.5}, cfg.delta_frac);
    CHECK(result.report.final_kl <= delta);

    // Warm start must stay reproducible too.
    const TrainResult again = imsat::train_clustering(data, cfg);
    CHECK(result.report.objective_trace == again.report.objective_trace);
}

TEST_CASE("hash training maps separated blobs to distinct majority codes") {
    const Dataset data = easy_blobs(4, 30, 17);
    TrainConfig cfg;
    cfg.task = TaskKind::Hash;
    cfg.output_width = 4;
    cfg.hidden = {16};
    cfg.batch_size = 30;
    cfg.epochs = 200;
    cfg.seed = 4;

    const TrainResult result = imsat::train_hashing(data, cfg);
    const imsat::CodeBook book = imsat::encode(result.model, data.features, TaskKind::Hash);

    // Majority code within each blob; the four majorities must be distinct.
    std::vector<std::uint64_t> majority(4, 0);
    for (std::size_t blob = 0; blob < 4; ++blob) {
        std::map<std::uint64_t, int> votes;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (static_cast<std::size_t>(data.labels.ids[i]) == blob)
                ++votes[book.assignments[i]];
        int top = -1;
        for (const auto& [code, count] : votes)
            if (count > top) {
                top = count;
                majority[blob] = code;
            }
    }
    for (std::size_t a = 0; a < 4; ++a)
        for (std::size_t b = a + 1; b < 4; ++b) CHECK(majority[a] != majority[b]);

    CHECK(result.report.objective_trace.size() == cfg.epochs);
    CHECK(std::isfinite(result.report.loss_terms.per_bit_information));
}

TEST_CASE("a single bit learns to split two blobs") {
    const Dataset data = easy_blobs(2, 30, 19);
    TrainConfig cfg;
    cfg.task = TaskKind::Hash;
    cfg.output_width = 1;
    cfg.hidden = {8};
    cfg.batch_size = 30;
    cfg.epochs = 150;
    cfg.seed = 6;

    const TrainResult result = imsat::train_hashing(data, cfg);
    const imsat::CodeBook book = imsat::encode(result.model, data.features, TaskKind::Hash);

    // The bit should align with the blob labels up to polarity.
    std::size_t agree = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (book.assignments[i] == static_cast<std::uint64_t>(data.labels.ids[i])) ++agree;
    const std::size_t hits = std::max(agree, data.size() - agree);
    CHECK(hits == data.size());

    // An informative bit carries about ln 2 nats in the last-epoch estimate.
    CHECK(result.report.loss_terms.per_bit_information > 0.5 * std::log(2.0));
}
