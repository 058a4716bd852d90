#include "imsat/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

#include "imsat/container.hpp"
#include "imsat/errors.hpp"

namespace imsat {

namespace {

double clamp_prob(double p) {
    return std::min(std::max(p, kProbClamp), 1.0 - kProbClamp);
}

double stable_sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

void check_heads(const std::vector<HeadSpec>& heads, std::size_t logit_dim) {
    if (heads.empty()) throw ConfigError("model needs at least one output head");
    std::size_t total = 0;
    for (const HeadSpec& h : heads) {
        if (h.kind == HeadSpec::Kind::Softmax && h.classes < 2)
            throw ConfigError("softmax head needs at least 2 classes");
        if (h.kind == HeadSpec::Kind::Sigmoid && h.classes != 2)
            throw ConfigError("sigmoid head is binary (classes must be 2)");
        total += h.logit_width();
    }
    if (total != logit_dim)
        throw ConfigError("head logit widths sum to " + std::to_string(total) +
                          " but the logit layer emits " + std::to_string(logit_dim));
}

}  // namespace

std::size_t MlpClassifier::num_params() const {
    std::size_t n = 0;
    for (const DenseLayer& l : layers) {
        n += l.W.size() + l.b.size();
        if (l.batch_norm) n += l.bn_gamma.size() + l.bn_beta.size();
    }
    return n;
}

std::vector<double> default_scales(std::size_t num_weight_matrices) {
    std::vector<double> s(num_weight_matrices, 0.1);
    if (!s.empty()) s.back() = 0.0001;
    return s;
}

MlpClassifier init_params(const std::vector<std::size_t>& layer_dims,
                          const std::vector<HeadSpec>& heads,
                          const std::vector<double>& scales, std::uint64_t seed) {
    if (layer_dims.size() < 2)
        throw ConfigError("layer_dims needs an input and an output dimension");
    for (std::size_t d : layer_dims)
        if (d == 0) throw ConfigError("layer dimensions must be positive");

    const std::size_t num_weights = layer_dims.size() - 1;
    std::vector<double> sc = scales.empty() ? default_scales(num_weights) : scales;
    if (sc.size() != num_weights)
        throw ConfigError("expected " + std::to_string(num_weights) + " weight scales, got " +
                          std::to_string(sc.size()));

    check_heads(heads, layer_dims.back());

    MlpClassifier model;
    model.heads = heads;
    Rng rng(seed);
    for (std::size_t i = 0; i < num_weights; ++i) {
        DenseLayer layer;
        const std::size_t fan_in = layer_dims[i];
        const std::size_t fan_out = layer_dims[i + 1];
        const double stddev = sc[i] * std::sqrt(2.0 / static_cast<double>(fan_in));
        layer.W = Matrix(fan_in, fan_out);
        for (double& w : layer.W.data) w = rng.gaussian(0.0, stddev);
        layer.b = Matrix(1, fan_out, 0.0);
        const bool hidden = i + 1 < num_weights;
        if (hidden) {
            layer.batch_norm = true;
            layer.relu = true;
            layer.bn_gamma = Matrix(1, fan_out, 1.0);
            layer.bn_beta = Matrix(1, fan_out, 0.0);
            layer.bn_running_mean = Matrix(1, fan_out, 0.0);
            layer.bn_running_var = Matrix(1, fan_out, 1.0);
        }
        model.layers.push_back(std::move(layer));
    }
    return model;
}

namespace {

ForwardResult run_forward(const MlpClassifier& model, MlpClassifier* mutable_model,
                          const Matrix& x, RunMode mode) {
    if (x.rows == 0) throw ShapeError("forward: empty batch");
    if (x.cols != model.input_dim())
        throw ShapeError("forward: input has " + std::to_string(x.cols) +
                         " features, model expects " + std::to_string(model.input_dim()));

    ForwardResult res;
    res.mode = mode;
    res.batch = x.rows;
    res.layers.resize(model.layers.size());

    const double n = static_cast<double>(x.rows);
    Matrix cur = x;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        const DenseLayer& layer = model.layers[li];
        LayerCache& cache = res.layers[li];
        cache.input = cur;

        Matrix z = matmul(cur, layer.W);
        for (std::size_t i = 0; i < z.rows; ++i) {
            double* row = z.row_ptr(i);
            for (std::size_t j = 0; j < z.cols; ++j) row[j] += layer.b(0, j);
        }
        cache.affine = z;

        Matrix out = std::move(z);
        if (layer.batch_norm) {
            const std::size_t f = layer.fan_out();
            std::vector<double> mean(f, 0.0), var(f, 0.0);
            if (mode == RunMode::Infer) {
                for (std::size_t j = 0; j < f; ++j) {
                    mean[j] = layer.bn_running_mean(0, j);
                    var[j] = layer.bn_running_var(0, j);
                }
            } else {
                for (std::size_t i = 0; i < out.rows; ++i) {
                    const double* row = out.row_ptr(i);
                    for (std::size_t j = 0; j < f; ++j) mean[j] += row[j];
                }
                for (double& m : mean) m /= n;
                for (std::size_t i = 0; i < out.rows; ++i) {
                    const double* row = out.row_ptr(i);
                    for (std::size_t j = 0; j < f; ++j) {
                        const double d = row[j] - mean[j];
                        var[j] += d * d;
                    }
                }
                for (double& v : var) v /= n;  // biased batch variance
                if (mode == RunMode::Train) {
                    DenseLayer& ml = mutable_model->layers[li];
                    for (std::size_t j = 0; j < f; ++j) {
                        ml.bn_running_mean(0, j) =
                            layer.bn_momentum * ml.bn_running_mean(0, j) +
                            (1.0 - layer.bn_momentum) * mean[j];
                        ml.bn_running_var(0, j) =
                            layer.bn_momentum * ml.bn_running_var(0, j) +
                            (1.0 - layer.bn_momentum) * var[j];
                    }
                }
            }
            Matrix xhat(out.rows, out.cols);
            for (std::size_t i = 0; i < out.rows; ++i) {
                const double* zin = out.row_ptr(i);
                double* xh = xhat.row_ptr(i);
                double* o = out.row_ptr(i);
                for (std::size_t j = 0; j < f; ++j) {
                    xh[j] = (zin[j] - mean[j]) / std::sqrt(var[j] + kBnEps);
                    o[j] = layer.bn_gamma(0, j) * xh[j] + layer.bn_beta(0, j);
                }
            }
            cache.bn_xhat = std::move(xhat);
            cache.bn_mean = std::move(mean);
            cache.bn_var = std::move(var);
        }
        if (layer.relu)
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;

        cache.output = out;
        cur = std::move(out);
    }

    res.logits = std::move(cur);

    std::size_t off = 0;
    for (const HeadSpec& head : model.heads) {
        Matrix probs(res.batch, head.classes);
        if (head.kind == HeadSpec::Kind::Softmax) {
            for (std::size_t i = 0; i < res.batch; ++i) {
                const double* z = res.logits.row_ptr(i) + off;
                double zmax = z[0];
                for (std::size_t k = 1; k < head.classes; ++k) zmax = std::max(zmax, z[k]);
                double sum = 0.0;
                for (std::size_t k = 0; k < head.classes; ++k) {
                    const double e = std::exp(z[k] - zmax);
                    probs(i, k) = e;
                    sum += e;
                }
                for (std::size_t k = 0; k < head.classes; ++k)
                    probs(i, k) = clamp_prob(probs(i, k) / sum);
            }
        } else {
            for (std::size_t i = 0; i < res.batch; ++i) {
                const double p1 = clamp_prob(stable_sigmoid(res.logits(i, off)));
                probs(i, 0) = 1.0 - p1;
                probs(i, 1) = p1;
            }
        }
        res.head_probs.push_back(std::move(probs));
        off += head.logit_width();
    }
    return res;
}

}  // namespace

ForwardResult forward(MlpClassifier& model, const Matrix& x, RunMode mode) {
    return run_forward(model, &model, x, mode);
}

ForwardResult forward(const MlpClassifier& model, const Matrix& x, RunMode mode) {
    if (mode == RunMode::Train)
        throw StateError("RunMode::Train requires a mutable model");
    return run_forward(model, nullptr, x, mode);
}

void Gradients::add(const Gradients& other) {
    if (layers.size() != other.layers.size())
        throw ShapeError("Gradients::add: layer count mismatch");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        add_inplace(layers[i].dW, other.layers[i].dW);
        add_inplace(layers[i].db, other.layers[i].db);
        if (!layers[i].dgamma.empty()) {
            add_inplace(layers[i].dgamma, other.layers[i].dgamma);
            add_inplace(layers[i].dbeta, other.layers[i].dbeta);
        }
    }
    add_inplace(input, other.input);
}

Gradients backward(const MlpClassifier& model, const ForwardResult& cache,
                   const std::vector<Matrix>& head_prob_grads) {
    if (cache.layers.size() != model.layers.size())
        throw StateError("backward: cache does not match model layer count");
    if (head_prob_grads.size() != model.heads.size())
        throw ShapeError("backward: expected one gradient per head");
    for (std::size_t m = 0; m < model.heads.size(); ++m) {
        const Matrix& g = head_prob_grads[m];
        if (g.rows != cache.batch || g.cols != model.heads[m].classes)
            throw ShapeError("backward: head gradient shape mismatch");
    }
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        if (cache.layers[li].input.cols != model.layers[li].fan_in())
            throw StateError("backward: cache does not match model shapes");
    }

    const std::size_t batch = cache.batch;
    const double n = static_cast<double>(batch);

    // Head probabilities -> logit gradients.
    Matrix dlogits(batch, model.logit_dim(), 0.0);
    std::size_t off = 0;
    for (std::size_t m = 0; m < model.heads.size(); ++m) {
        const HeadSpec& head = model.heads[m];
        const Matrix& probs = cache.head_probs[m];
        const Matrix& g = head_prob_grads[m];
        if (head.kind == HeadSpec::Kind::Softmax) {
            for (std::size_t i = 0; i < batch; ++i) {
                double gp = 0.0;
                for (std::size_t k = 0; k < head.classes; ++k) gp += g(i, k) * probs(i, k);
                for (std::size_t k = 0; k < head.classes; ++k)
                    dlogits(i, off + k) = probs(i, k) * (g(i, k) - gp);
            }
        } else {
            for (std::size_t i = 0; i < batch; ++i) {
                const double p1 = probs(i, 1);
                dlogits(i, off) = (g(i, 1) - g(i, 0)) * p1 * (1.0 - p1);
            }
        }
        off += head.logit_width();
    }

    Gradients grads;
    grads.layers.resize(model.layers.size());

    Matrix dout = std::move(dlogits);
    for (std::size_t li = model.layers.size(); li-- > 0;) {
        const DenseLayer& layer = model.layers[li];
        const LayerCache& lc = cache.layers[li];
        LayerGrads& lg = grads.layers[li];

        if (layer.relu) {
            for (std::size_t i = 0; i < dout.size(); ++i)
                if (lc.output.data[i] <= 0.0) dout.data[i] = 0.0;
        }

        Matrix dz;
        if (layer.batch_norm) {
            const std::size_t f = layer.fan_out();
            lg.dgamma = Matrix(1, f, 0.0);
            lg.dbeta = Matrix(1, f, 0.0);
            for (std::size_t i = 0; i < batch; ++i) {
                const double* go = dout.row_ptr(i);
                const double* xh = lc.bn_xhat.row_ptr(i);
                for (std::size_t j = 0; j < f; ++j) {
                    lg.dgamma(0, j) += go[j] * xh[j];
                    lg.dbeta(0, j) += go[j];
                }
            }
            dz = Matrix(batch, f);
            if (cache.mode == RunMode::Infer) {
                for (std::size_t i = 0; i < batch; ++i)
                    for (std::size_t j = 0; j < f; ++j)
                        dz(i, j) = dout(i, j) * layer.bn_gamma(0, j) /
                                   std::sqrt(lc.bn_var[j] + kBnEps);
            } else {
                // batch-statistics normalization backward
                std::vector<double> sum_dxhat(f, 0.0), sum_dxhat_xhat(f, 0.0);
                for (std::size_t i = 0; i < batch; ++i) {
                    const double* go = dout.row_ptr(i);
                    const double* xh = lc.bn_xhat.row_ptr(i);
                    for (std::size_t j = 0; j < f; ++j) {
                        const double dxh = go[j] * layer.bn_gamma(0, j);
                        sum_dxhat[j] += dxh;
                        sum_dxhat_xhat[j] += dxh * xh[j];
                    }
                }
                for (std::size_t i = 0; i < batch; ++i) {
                    const double* go = dout.row_ptr(i);
                    const double* xh = lc.bn_xhat.row_ptr(i);
                    for (std::size_t j = 0; j < f; ++j) {
                        const double istd = 1.0 / std::sqrt(lc.bn_var[j] + kBnEps);
                        const double dxh = go[j] * layer.bn_gamma(0, j);
                        dz(i, j) = istd * (dxh - sum_dxhat[j] / n - xh[j] * sum_dxhat_xhat[j] / n);
                    }
                }
            }
        } else {
            dz = std::move(dout);
        }

        lg.dW = matmul_tn(lc.input, dz);
        lg.db = Matrix(1, layer.fan_out());
        {
            std::vector<double> cs = column_sum(dz);
            for (std::size_t j = 0; j < cs.size(); ++j) lg.db(0, j) = cs[j];
        }
        dout = matmul_nt(dz, layer.W);
    }
    grads.input = std::move(dout);
    return grads;
}

std::vector<ParamRef> param_refs(MlpClassifier& model, const Gradients* grads) {
    std::vector<ParamRef> refs;
    for (std::size_t li = 0; li < model.layers.size(); ++li) {
        DenseLayer& l = model.layers[li];
        const LayerGrads* lg = grads ? &grads->layers[li] : nullptr;
        const std::string prefix = "layer" + std::to_string(li) + "/";
        refs.push_back({&l.W, lg ? &lg->dW : nullptr, true, prefix + "W"});
        refs.push_back({&l.b, lg ? &lg->db : nullptr, false, prefix + "b"});
        if (l.batch_norm) {
            refs.push_back({&l.bn_gamma, lg ? &lg->dgamma : nullptr, false, prefix + "bn_gamma"});
            refs.push_back({&l.bn_beta, lg ? &lg->dbeta : nullptr, false, prefix + "bn_beta"});
        }
    }
    return refs;
}

AdamState make_adam(const MlpClassifier& model, double step_size, double weight_decay) {
    AdamState state;
    state.step_size = step_size;
    state.weight_decay = weight_decay;
    auto refs = param_refs(const_cast<MlpClassifier&>(model));
    for (const ParamRef& r : refs)
        state.slots.push_back({Matrix(r.tensor->rows, r.tensor->cols, 0.0),
                               Matrix(r.tensor->rows, r.tensor->cols, 0.0)});
    return state;
}

void adam_step(AdamState& state, MlpClassifier& model, const Gradients& grads) {
    auto refs = param_refs(model, &grads);
    if (refs.size() != state.slots.size())
        throw ShapeError("adam_step: state does not match model parameters");

    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (std::size_t r = 0; r < refs.size(); ++r) {
        Matrix& p = *refs[r].tensor;
        const Matrix& g = *refs[r].grad;
        AdamState::Slot& slot = state.slots[r];
        if (!p.same_shape(g) || !p.same_shape(slot.m))
            throw ShapeError("adam_step: shape mismatch on " + refs[r].name);
        const bool decay = refs[r].is_weight_matrix && state.weight_decay > 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            double gi = g.data[i];
            if (decay) gi += state.weight_decay * p.data[i];
            slot.m.data[i] = state.beta1 * slot.m.data[i] + (1.0 - state.beta1) * gi;
            slot.v.data[i] = state.beta2 * slot.v.data[i] + (1.0 - state.beta2) * gi * gi;
            const double mhat = slot.m.data[i] / bc1;
            const double vhat = slot.v.data[i] / bc2;
            p.data[i] -= state.step_size * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// Checkpoint container
// ---------------------------------------------------------------------------

namespace {

constexpr char kModelMagic[12] = {'I', 'M', 'S', 'A', 'T', '-', 'C', 'K', 'P', 'T', 0, 0};
constexpr std::uint32_t kModelVersion = 1;

NamedTensor tensor_of(const std::string& name, const Matrix& m) {
    return {name, {m.rows, m.cols}, m.data};
}

Matrix matrix_of(const NamedTensor& t) {
    if (t.dims.size() != 2)
        throw FormatError("tensor '" + t.name + "' is not 2-D");
    Matrix m(t.dims[0], t.dims[1]);
    m.data = t.values;
    return m;
}

const NamedTensor& find_tensor(const std::vector<NamedTensor>& ts, const std::string& name) {
    for (const NamedTensor& t : ts)
        if (t.name == name) return t;
    throw FormatError("checkpoint is missing tensor '" + name + "'");
}

}  // namespace

void save_model(const MlpClassifier& model, const std::string& path) {
    std::vector<NamedTensor> tensors;
    const std::size_t L = model.layers.size();
    tensors.push_back({"meta/num_layers", {1}, {static_cast<double>(L)}});

    std::vector<double> head_meta;
    for (const HeadSpec& h : model.heads) {
        head_meta.push_back(h.kind == HeadSpec::Kind::Softmax ? 0.0 : 1.0);
        head_meta.push_back(static_cast<double>(h.classes));
    }
    tensors.push_back({"meta/heads", {model.heads.size(), 2}, head_meta});

    for (std::size_t li = 0; li < L; ++li) {
        const DenseLayer& l = model.layers[li];
        const std::string prefix = "layer" + std::to_string(li) + "/";
        tensors.push_back({prefix + "flags",
                           {3},
                           {l.batch_norm ? 1.0 : 0.0, l.relu ? 1.0 : 0.0, l.bn_momentum}});
        tensors.push_back(tensor_of(prefix + "W", l.W));
        tensors.push_back(tensor_of(prefix + "b", l.b));
        if (l.batch_norm) {
            tensors.push_back(tensor_of(prefix + "bn_gamma", l.bn_gamma));
            tensors.push_back(tensor_of(prefix + "bn_beta", l.bn_beta));
            tensors.push_back(tensor_of(prefix + "bn_running_mean", l.bn_running_mean));
            tensors.push_back(tensor_of(prefix + "bn_running_var", l.bn_running_var));
        }
    }
    write_container(path, kModelMagic, kModelVersion, tensors);
}

MlpClassifier load_model(const std::string& path) {
    std::vector<NamedTensor> tensors = read_container(path, kModelMagic, kModelVersion);

    MlpClassifier model;
    const NamedTensor& heads = find_tensor(tensors, "meta/heads");
    if (heads.dims.size() != 2 || heads.dims[1] != 2)
        throw FormatError("checkpoint head table is malformed");
    for (std::size_t m = 0; m < heads.dims[0]; ++m) {
        HeadSpec h;
        h.kind = heads.values[2 * m] == 0.0 ? HeadSpec::Kind::Softmax : HeadSpec::Kind::Sigmoid;
        h.classes = static_cast<std::size_t>(heads.values[2 * m + 1]);
        model.heads.push_back(h);
    }

    const std::size_t L =
        static_cast<std::size_t>(find_tensor(tensors, "meta/num_layers").values.at(0));
    for (std::size_t li = 0; li < L; ++li) {
        const std::string prefix = "layer" + std::to_string(li) + "/";
        DenseLayer l;
        const NamedTensor& flags = find_tensor(tensors, prefix + "flags");
        if (flags.values.size() != 3) throw FormatError("checkpoint layer flags malformed");
        l.batch_norm = flags.values[0] != 0.0;
        l.relu = flags.values[1] != 0.0;
        l.bn_momentum = flags.values[2];
        l.W = matrix_of(find_tensor(tensors, prefix + "W"));
        l.b = matrix_of(find_tensor(tensors, prefix + "b"));
        if (l.batch_norm) {
            l.bn_gamma = matrix_of(find_tensor(tensors, prefix + "bn_gamma"));
            l.bn_beta = matrix_of(find_tensor(tensors, prefix + "bn_beta"));
            l.bn_running_mean = matrix_of(find_tensor(tensors, prefix + "bn_running_mean"));
            l.bn_running_var = matrix_of(find_tensor(tensors, prefix + "bn_running_var"));
        }
        model.layers.push_back(std::move(l));
    }
    check_heads(model.heads, model.logit_dim());
    return model;
}

}  // namespace imsat
