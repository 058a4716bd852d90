#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "imsat/config.hpp"
#include "imsat/data.hpp"
#include "imsat/errors.hpp"
#include "imsat/eval.hpp"
#include "imsat/rng.hpp"
#include "imsat/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

// exit codes: 0 ok, 1 configuration, 2 data, 3 constraint unsatisfied
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitConstraint = 3;

int classify_error(const std::exception& e) {
    if (dynamic_cast<const imsat::ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const imsat::FormatError*>(&e)) return kExitData;
    if (dynamic_cast<const imsat::InputError*>(&e)) return kExitData;
    if (dynamic_cast<const imsat::ShapeError*>(&e)) return kExitData;
    if (dynamic_cast<const imsat::DistributionError*>(&e)) return kExitData;
    return kExitConfig;
}

// precedence: --seed flag, then IMSAT_SEED, then the config file, then 0
std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const imsat::Config& cfg) {
    if (flag) return *flag;
    if (const char* env = std::getenv("IMSAT_SEED")) {
        char* end = nullptr;
        const unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw imsat::ConfigError(std::string("IMSAT_SEED is not an unsigned integer: ") + env);
        return v;
    }
    return cfg.get_uint("train.seed", 0);
}

imsat::Dataset load_configured_dataset(const imsat::Config& cfg) {
    const std::string path = cfg.get_string("data.path");
    if (!fs::exists(path)) throw imsat::InputError("dataset not found: " + path);

    std::string format = cfg.get_string("data.format", "");
    if (format.empty()) {
        const std::string ext = fs::path(path).extension().string();
        format = ext == ".csv" ? "csv" : ext == ".idx" ? "idx" : "native";
    }

    imsat::Dataset ds;
    if (format == "csv")
        ds = imsat::load_csv(path, cfg.get_int("data.label_column", -1));
    else if (format == "idx")
        ds = imsat::load_idx(path, cfg.get_string("data.labels_path", ""));
    else if (format == "native")
        ds = imsat::load_dataset(path);
    else
        throw imsat::ConfigError("data.format must be csv, idx or native, got '" + format + "'");

    if (cfg.has("data.image_h") || cfg.has("data.image_w")) {
        ds.image_h = cfg.get_uint("data.image_h");
        ds.image_w = cfg.get_uint("data.image_w");
        if (ds.image_h * ds.image_w != ds.dim())
            throw imsat::ConfigError("data.image_h x data.image_w must equal the feature width");
    }
    return ds;
}

imsat::Regularizer parse_regularizer(const std::string& name) {
    if (name == "none") return imsat::Regularizer::None;
    if (name == "weight_decay") return imsat::Regularizer::WeightDecay;
    if (name == "rpt") return imsat::Regularizer::Rpt;
    if (name == "vat") return imsat::Regularizer::Vat;
    if (name == "affine") return imsat::Regularizer::Affine;
    if (name == "composite") return imsat::Regularizer::Composite;
    throw imsat::ConfigError("unknown regularizer '" + name + "'");
}

imsat::TrainConfig build_train_config(const imsat::Config& cfg, imsat::TaskKind task,
                                      std::uint64_t seed, const imsat::Dataset& ds) {
    imsat::TrainConfig tc;
    tc.task = task;
    tc.seed = seed;

    // named variants pre-set the regularizer; explicit keys still override
    const std::string variant = cfg.get_string("train.variant", "");
    if (variant == "deep_rim") {
        tc.regularizer = imsat::Regularizer::WeightDecay;
        tc.weight_decay = 0.005;
    } else if (variant == "imsat_rpt") {
        tc.regularizer = imsat::Regularizer::Rpt;
    } else if (variant == "imsat_vat" || variant.empty()) {
        tc.regularizer = imsat::Regularizer::Vat;
    } else if (variant == "imsat_affine") {
        tc.regularizer = imsat::Regularizer::Affine;
    } else if (variant == "imsat_vat_affine") {
        tc.regularizer = imsat::Regularizer::Composite;
    } else {
        throw imsat::ConfigError("unknown train.variant '" + variant + "'");
    }

    if (task == imsat::TaskKind::Cluster) {
        tc.output_width = cfg.get_uint("train.k");
    } else {
        tc.output_width = cfg.get_uint("train.bits");
    }

    if (cfg.has("train.hidden")) {
        tc.hidden.clear();
        for (double v : cfg.get_real_list("train.hidden")) {
            if (v < 1.0 || v != std::floor(v))
                throw imsat::ConfigError("train.hidden entries must be positive integers");
            tc.hidden.push_back(static_cast<std::size_t>(v));
        }
    }

    if (cfg.has("train.regularizer"))
        tc.regularizer = parse_regularizer(cfg.get_string("train.regularizer"));
    tc.lambda = cfg.get_real("train.lambda", tc.lambda);
    tc.weight_decay = cfg.get_real("train.weight_decay", tc.weight_decay);
    tc.alpha = cfg.get_real("train.alpha", tc.alpha);
    tc.t_neighbor = cfg.get_uint("train.t_neighbor", tc.t_neighbor);
    tc.fixed_eps = cfg.get_real("train.fixed_eps", tc.fixed_eps);
    tc.xi = cfg.get_real("train.xi", tc.xi);
    tc.power_iters = cfg.get_uint("train.power_iters", tc.power_iters);
    tc.delta_frac = cfg.get_real("train.delta_frac", tc.delta_frac);
    tc.batch_size = cfg.get_uint("train.batch_size", tc.batch_size);
    if (tc.batch_size > ds.size()) tc.batch_size = ds.size();
    tc.epochs = cfg.get_uint("train.epochs", tc.epochs);
    tc.step_size = cfg.get_real("train.step_size", tc.step_size);
    tc.warm_start = cfg.get_bool("train.warm_start", tc.warm_start);
    tc.ordered_pairs = cfg.get_bool("train.ordered_pairs", tc.ordered_pairs);
    tc.composite_weight_vat = cfg.get_real("train.composite_weight_vat", tc.composite_weight_vat);
    if (cfg.has("train.prior")) tc.prior_q = cfg.get_real_list("train.prior");
    if (cfg.has("train.mu_multipliers")) tc.mu_multipliers = cfg.get_real_list("train.mu_multipliers");
    if (cfg.has("train.init_scales")) tc.init_scales = cfg.get_real_list("train.init_scales");
    tc.image_h = ds.image_h;
    tc.image_w = ds.image_w;
    return tc;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw imsat::InputError("cannot write " + path.string());
    out << text;
    if (!out) throw imsat::InputError("write failed for " + path.string());
}

std::string fingerprint_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

void write_manifest(const fs::path& out_dir, const imsat::Config& cfg, std::uint64_t seed,
                    const imsat::Dataset& ds, const std::vector<std::string>& outputs) {
    json j;
    j["tool_version"] = kToolVersion;
    j["seed"] = seed;
    j["dataset_fingerprint"] = fingerprint_hex(imsat::dataset_fingerprint(ds));
    json snapshot = json::object();
    for (const auto& [key, value] : cfg.entries()) snapshot[key] = value;
    j["config"] = snapshot;
    j["outputs"] = outputs;
    write_text(out_dir / "manifest.json", j.dump(2) + "\n");
}

std::string code_to_hex(std::uint64_t code, std::size_t bits) {
    const int digits = static_cast<int>((bits + 3) / 4);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%0*llx", digits, static_cast<unsigned long long>(code));
    return buf;
}

// stratified query/gallery split: per_class indices drawn per label without
// replacement, remainder forms the gallery
void stratified_split(const imsat::LabelSet& labels, std::size_t per_class, imsat::Rng& rng,
                      std::vector<std::size_t>& query_idx, std::vector<std::size_t>& gallery_idx) {
    query_idx.clear();
    gallery_idx.clear();
    for (std::size_t c = 0; c < labels.classes; ++c) {
        std::vector<std::size_t> members;
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels.ids[i] == static_cast<int>(c)) members.push_back(i);
        if (members.size() <= per_class)
            throw imsat::InputError("class " + std::to_string(c) + " has " +
                                    std::to_string(members.size()) +
                                    " points; need more than the " + std::to_string(per_class) +
                                    " queries per class");
        std::shuffle(members.begin(), members.end(), rng.engine());
        query_idx.insert(query_idx.end(), members.begin(), members.begin() + per_class);
        gallery_idx.insert(gallery_idx.end(), members.begin() + per_class, members.end());
    }
    std::sort(query_idx.begin(), query_idx.end());
    std::sort(gallery_idx.begin(), gallery_idx.end());
}

json hash_metrics(const std::vector<std::uint64_t>& codes, const imsat::LabelSet& labels,
                  std::size_t queries_per_class, std::size_t n, unsigned radius,
                  imsat::Rng& rng) {
    std::vector<std::size_t> qi, gi;
    stratified_split(labels, queries_per_class, rng, qi, gi);
    std::vector<std::uint64_t> qc, gc;
    std::vector<int> ql, gl;
    for (std::size_t i : qi) {
        qc.push_back(codes[i]);
        ql.push_back(labels.ids[i]);
    }
    for (std::size_t i : gi) {
        gc.push_back(codes[i]);
        gl.push_back(labels.ids[i]);
    }

    std::size_t empty = 0;
    json j;
    j["map"] = imsat::mean_average_precision(qc, ql, gc, gl);
    j["p_at_n"] = imsat::precision_at_n(qc, ql, gc, gl, n);
    j["p_at_r"] = imsat::precision_at_radius(qc, ql, gc, gl, radius, &empty);
    j["empty_retrievals"] = empty;
    return j;
}

struct TrainArgs {
    std::string config_path;
    std::string out_dir = ".";
    std::optional<std::uint64_t> seed;
};

int run_cluster(const TrainArgs& args) {
    const imsat::Config cfg = imsat::Config::parse_file(args.config_path);
    const std::uint64_t seed = resolve_seed(args.seed, cfg);
    const imsat::Dataset ds = load_configured_dataset(cfg);
    const imsat::TrainConfig tc = build_train_config(cfg, imsat::TaskKind::Cluster, seed, ds);

    const fs::path out_dir(args.out_dir);
    fs::create_directories(out_dir);

    imsat::MlpClassifier model;
    imsat::TrainReport report;
    int exit_code = kExitOk;
    try {
        imsat::TrainResult result = imsat::train_clustering(ds, tc);
        model = std::move(result.model);
        report = std::move(result.report);
    } catch (const imsat::ConstraintUnsatisfiedError& e) {
        std::cerr << "warning: " << e.what() << "; writing the closest model\n";
        model = e.best_model;
        report = e.report;
        exit_code = kExitConstraint;
    }

    imsat::save_model(model, (out_dir / "model.ckpt").string());
    const imsat::CodeBook book = imsat::encode(model, ds.features, imsat::TaskKind::Cluster);
    std::string lines;
    for (std::uint64_t a : book.assignments) {
        lines += std::to_string(a);
        lines += '\n';
    }
    write_text(out_dir / "assignments.txt", lines);
    write_text(out_dir / "report.json", imsat::report_to_json(report) + "\n");

    std::vector<std::string> outputs = {"model.ckpt", "assignments.txt", "report.json"};
    if (ds.has_labels) {
        const imsat::AccuracyResult acc = imsat::clustering_accuracy(book, ds.labels);
        json m;
        m["acc"] = acc.acc;
        m["mapping"] = acc.mapping;
        write_text(out_dir / "metrics.json", m.dump(2) + "\n");
        outputs.push_back("metrics.json");
        std::cout << "acc " << acc.acc << " final_kl " << report.final_kl << "\n";
    } else {
        std::cout << "final_kl " << report.final_kl << "\n";
    }
    outputs.push_back("manifest.json");
    write_manifest(out_dir, cfg, seed, ds, outputs);
    return exit_code;
}

int run_hash(const TrainArgs& args) {
    const imsat::Config cfg = imsat::Config::parse_file(args.config_path);
    const std::uint64_t seed = resolve_seed(args.seed, cfg);
    const imsat::Dataset ds = load_configured_dataset(cfg);
    const imsat::TrainConfig tc = build_train_config(cfg, imsat::TaskKind::Hash, seed, ds);

    const fs::path out_dir(args.out_dir);
    fs::create_directories(out_dir);

    imsat::TrainResult result = imsat::train_hashing(ds, tc);
    imsat::save_model(result.model, (out_dir / "model.ckpt").string());
    const imsat::CodeBook book = imsat::encode(result.model, ds.features, imsat::TaskKind::Hash);
    std::string lines;
    for (std::uint64_t code : book.assignments) {
        lines += code_to_hex(code, tc.output_width);
        lines += '\n';
    }
    write_text(out_dir / "codes.txt", lines);
    write_text(out_dir / "report.json", imsat::report_to_json(result.report) + "\n");

    std::vector<std::string> outputs = {"model.ckpt", "codes.txt", "report.json"};
    if (ds.has_labels) {
        imsat::Rng rng(seed);
        const json m = hash_metrics(book.assignments, ds.labels,
                                    cfg.get_uint("eval.queries_per_class", 100),
                                    cfg.get_uint("eval.p_at_n", 500),
                                    static_cast<unsigned>(cfg.get_uint("eval.radius", 2)), rng);
        write_text(out_dir / "metrics.json", m.dump(2) + "\n");
        outputs.push_back("metrics.json");
        std::cout << "map " << m["map"] << " p_at_r " << m["p_at_r"] << "\n";
    }
    outputs.push_back("manifest.json");
    write_manifest(out_dir, cfg, seed, ds, outputs);
    return kExitOk;
}

std::vector<std::string> read_lines(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw imsat::InputError("cannot open " + path);
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

std::vector<int> read_int_lines(const std::string& path) {
    std::vector<int> out;
    long line_no = 0;
    for (const std::string& line : read_lines(path)) {
        ++line_no;
        char* end = nullptr;
        const long v = std::strtol(line.c_str(), &end, 10);
        if (end == line.c_str() || *end != '\0')
            throw imsat::FormatError(path + ": not an integer: '" + line + "'", line_no);
        out.push_back(static_cast<int>(v));
    }
    if (out.empty()) throw imsat::FormatError(path + ": empty file", 0);
    return out;
}

struct EvalArgs {
    std::string task = "cluster";
    std::string codes_path;
    std::string labels_path;
    std::string out_dir = ".";
    std::size_t bits = 0;
    std::size_t queries_per_class = 100;
    std::size_t p_at_n = 500;
    unsigned radius = 2;
    std::optional<std::uint64_t> seed;
};

int run_eval(const EvalArgs& args) {
    const std::vector<int> label_ids = read_int_lines(args.labels_path);
    imsat::LabelSet labels;
    labels.ids = label_ids;
    int top = 0;
    for (int v : labels.ids) {
        if (v < 0) throw imsat::InputError(args.labels_path + ": negative label");
        top = std::max(top, v);
    }
    labels.classes = static_cast<std::size_t>(top) + 1;

    const fs::path out_dir(args.out_dir);
    fs::create_directories(out_dir);
    json m;

    if (args.task == "cluster") {
        const std::vector<int> ids = read_int_lines(args.codes_path);
        if (ids.size() != labels.size())
            throw imsat::ShapeError("eval: " + std::to_string(ids.size()) + " assignments vs " +
                                    std::to_string(labels.size()) + " labels");
        imsat::CodeBook book;
        for (int v : ids) {
            if (v < 0) throw imsat::InputError(args.codes_path + ": negative cluster id");
            book.assignments.push_back(static_cast<std::uint64_t>(v));
            book.width = std::max<std::size_t>(book.width, static_cast<std::size_t>(v) + 1);
        }
        book.width = std::max(book.width, labels.classes);
        labels.classes = book.width;
        const imsat::AccuracyResult acc = imsat::clustering_accuracy(book, labels);
        m["acc"] = acc.acc;
        m["mapping"] = acc.mapping;
    } else if (args.task == "hash") {
        if (args.bits == 0 || args.bits > 64)
            throw imsat::ConfigError("eval: --bits must lie in [1, 64] for hash codes");
        std::vector<std::uint64_t> codes;
        long line_no = 0;
        for (const std::string& line : read_lines(args.codes_path)) {
            ++line_no;
            char* end = nullptr;
            const unsigned long long v = std::strtoull(line.c_str(), &end, 16);
            if (end == line.c_str() || *end != '\0')
                throw imsat::FormatError(args.codes_path + ": not a hex code: '" + line + "'",
                                         line_no);
            codes.push_back(v);
        }
        if (codes.size() != labels.size())
            throw imsat::ShapeError("eval: " + std::to_string(codes.size()) + " codes vs " +
                                    std::to_string(labels.size()) + " labels");
        imsat::Rng rng(args.seed.value_or(0));
        m = hash_metrics(codes, labels, args.queries_per_class, args.p_at_n, args.radius, rng);
    } else {
        throw imsat::ConfigError("eval: --task must be cluster or hash");
    }

    const std::string text = m.dump(2) + "\n";
    write_text(out_dir / "metrics.json", text);
    std::cout << text;
    return kExitOk;
}

struct GenArgs {
    std::string kind;
    std::string out_path;
    std::uint64_t seed = 0;
    std::size_t arcs = 3;
    std::size_t per_arc = 300;
    double spiral_noise = 0.05;
    std::size_t k = 4;
    std::size_t per_blob = 200;
    std::size_t dim = 2;
    double separation = 10.0;
    double blob_noise = 0.5;
    bool csv = false;
};

int run_gen(const GenArgs& args) {
    imsat::Dataset ds;
    if (args.kind == "spiral")
        ds = imsat::gen_spiral(args.arcs, args.per_arc, args.spiral_noise, args.seed);
    else if (args.kind == "blobs")
        ds = imsat::gen_blobs(args.k, args.per_blob, args.dim, args.separation, args.blob_noise,
                              args.seed);
    else
        throw imsat::ConfigError("gen-data: --kind must be spiral or blobs");

    if (args.csv)
        imsat::save_csv(args.out_path, ds);
    else
        imsat::save_dataset(args.out_path, ds);
    std::cout << "wrote " << ds.size() << " points to " << args.out_path << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"information-maximizing clustering and binary hashing"};
    app.require_subcommand(1);

    TrainArgs cluster_args;
    CLI::App* cluster = app.add_subcommand("cluster", "train a clustering model");
    cluster->add_option("--config", cluster_args.config_path, "config file")->required();
    cluster->add_option("--out", cluster_args.out_dir, "output directory");
    cluster->add_option("--seed", cluster_args.seed, "seed override");

    TrainArgs hash_args;
    CLI::App* hash = app.add_subcommand("hash", "train a binary hash model");
    hash->add_option("--config", hash_args.config_path, "config file")->required();
    hash->add_option("--out", hash_args.out_dir, "output directory");
    hash->add_option("--seed", hash_args.seed, "seed override");

    EvalArgs eval_args;
    CLI::App* eval = app.add_subcommand("eval", "score assignments or hash codes against labels");
    eval->add_option("--task", eval_args.task, "cluster or hash");
    eval->add_option("--codes", eval_args.codes_path, "assignments/codes file")->required();
    eval->add_option("--labels", eval_args.labels_path, "label file, one id per line")->required();
    eval->add_option("--out", eval_args.out_dir, "output directory");
    eval->add_option("--bits", eval_args.bits, "hash code width");
    eval->add_option("--queries-per-class", eval_args.queries_per_class,
                     "stratified query count per class");
    eval->add_option("--p-at-n", eval_args.p_at_n, "precision@N cutoff");
    eval->add_option("--radius", eval_args.radius, "hamming radius");
    eval->add_option("--seed", eval_args.seed, "query sampling seed");

    GenArgs gen_args;
    CLI::App* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
    gen->add_option("--kind", gen_args.kind, "spiral or blobs")->required();
    gen->add_option("--out", gen_args.out_path, "output file")->required();
    gen->add_option("--seed", gen_args.seed, "generator seed");
    gen->add_option("--arcs", gen_args.arcs, "spiral arc count");
    gen->add_option("--per-arc", gen_args.per_arc, "points per arc");
    gen->add_option("--spiral-noise", gen_args.spiral_noise, "spiral noise stddev");
    gen->add_option("--k", gen_args.k, "blob count");
    gen->add_option("--per-blob", gen_args.per_blob, "points per blob");
    gen->add_option("--dim", gen_args.dim, "blob dimensionality");
    gen->add_option("--separation", gen_args.separation, "minimum center distance");
    gen->add_option("--blob-noise", gen_args.blob_noise, "blob noise stddev");
    gen->add_flag("--csv", gen_args.csv, "write CSV instead of the native format");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (cluster->parsed()) return run_cluster(cluster_args);
        if (hash->parsed()) return run_hash(hash_args);
        if (eval->parsed()) return run_eval(eval_args);
        return run_gen(gen_args);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return classify_error(e);
    }
}
