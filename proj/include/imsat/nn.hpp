#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "imsat/matrix.hpp"
#include "imsat/rng.hpp"

namespace imsat {

// Forward-pass normalization behaviour.
//  Train            - batch statistics, running statistics updated
//  TrainFrozenStats - batch statistics, running statistics left untouched
//                     (used for perturbed passes so augmentation cannot skew
//                     inference statistics)
//  Infer            - running statistics, model untouched
enum class RunMode { Train, TrainFrozenStats, Infer };

struct HeadSpec {
    enum class Kind { Softmax, Sigmoid };
    Kind kind = Kind::Softmax;
    // Number of categories. Softmax heads emit `classes` logits; sigmoid heads
    // emit one logit and report both outcomes, so classes is always 2 there.
    std::size_t classes = 2;

    static HeadSpec softmax(std::size_t k) { return {Kind::Softmax, k}; }
    static HeadSpec sigmoid() { return {Kind::Sigmoid, 2}; }

    std::size_t logit_width() const { return kind == Kind::Softmax ? classes : 1; }
};

struct DenseLayer {
    Matrix W;  // fan_in x fan_out
    Matrix b;  // 1 x fan_out
    bool batch_norm = false;
    bool relu = false;
    Matrix bn_gamma, bn_beta;                  // 1 x fan_out
    Matrix bn_running_mean, bn_running_var;    // 1 x fan_out
    double bn_momentum = 0.9;

    std::size_t fan_in() const { return W.rows; }
    std::size_t fan_out() const { return W.cols; }
};

// Multi-output classifier: dense hidden layers (affine -> batchnorm -> relu)
// followed by one logit layer split into independent output heads. Zero
// hidden layers yields a plain linear classifier.
struct MlpClassifier {
    std::vector<DenseLayer> layers;  // last entry is the logit layer
    std::vector<HeadSpec> heads;

    std::size_t input_dim() const { return layers.front().W.rows; }
    std::size_t logit_dim() const { return layers.back().W.cols; }
    std::size_t num_heads() const { return heads.size(); }
    std::size_t num_params() const;
};

// Activations cached by forward() for the matching backward() call.
struct LayerCache {
    Matrix input;      // into the affine map
    Matrix affine;     // x*W + b
    Matrix bn_xhat;    // normalized activations (batch_norm layers)
    std::vector<double> bn_mean, bn_var;  // statistics used by this pass
    Matrix output;     // after batchnorm + relu
};

struct ForwardResult {
    RunMode mode = RunMode::Infer;
    std::size_t batch = 0;
    std::vector<LayerCache> layers;
    Matrix logits;
    std::vector<Matrix> head_probs;  // head m: batch x heads[m].classes
};

struct LayerGrads {
    Matrix dW, db, dgamma, dbeta;
};

struct Gradients {
    std::vector<LayerGrads> layers;
    Matrix input;  // d(loss)/d(input batch)

    void add(const Gradients& other);
};

// Builds a classifier. layer_dims runs input -> hidden... -> logit width and
// must satisfy layer_dims.back() == total logit width of `heads`.
// Weight elements are N(0, (scale * sqrt(2/fan_in))^2); one scale per weight
// matrix, defaulting to 0.1 on hidden layers and 0.0001 on the logit layer
// when `scales` is empty. Biases and bn_beta start at 0, bn_gamma at 1.
MlpClassifier init_params(const std::vector<std::size_t>& layer_dims,
                          const std::vector<HeadSpec>& heads,
                          const std::vector<double>& scales, std::uint64_t seed);

std::vector<double> default_scales(std::size_t num_weight_matrices);

ForwardResult forward(MlpClassifier& model, const Matrix& x, RunMode mode);
// Const overload; RunMode::Train needs a mutable model and is rejected here.
ForwardResult forward(const MlpClassifier& model, const Matrix& x, RunMode mode);

// Exact reverse-mode gradients of a scalar loss given d(loss)/d(head probs).
Gradients backward(const MlpClassifier& model, const ForwardResult& cache,
                   const std::vector<Matrix>& head_prob_grads);

struct AdamState {
    struct Slot {
        Matrix m, v;
    };
    std::vector<Slot> slots;  // one per parameter tensor, model order
    std::uint64_t step = 0;
    double step_size = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // applied to weight matrices only
};

AdamState make_adam(const MlpClassifier& model, double step_size = 0.002,
                    double weight_decay = 0.0);
void adam_step(AdamState& state, MlpClassifier& model, const Gradients& grads);

// Flat views over all trainable tensors, in a stable order.
struct ParamRef {
    Matrix* tensor;
    const Matrix* grad;
    bool is_weight_matrix;
    std::string name;
};
std::vector<ParamRef> param_refs(MlpClassifier& model, const Gradients* grads = nullptr);

// Binary checkpoint container: 16-byte magic+version header, then per tensor
// a little-endian u64 name length, UTF-8 name, u64 rank, u64 dims and raw
// little-endian doubles. Round-trips bit-exactly.
void save_model(const MlpClassifier& model, const std::string& path);
MlpClassifier load_model(const std::string& path);

constexpr double kProbClamp = 1e-8;
constexpr double kBnEps = 1e-5;

}  // namespace imsat
