#include "imsat/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "imsat/container.hpp"
#include "imsat/errors.hpp"
#include "imsat/rng.hpp"

namespace imsat {

namespace {

constexpr char kDataMagic[12] = {'I', 'M', 'S', 'A', 'T', '-', 'D', 'A', 'T', 'A', 0, 0};
constexpr std::uint32_t kDataVersion = 1;

std::uint32_t read_be_u32(std::ifstream& in, const std::string& path, std::streamoff at) {
    unsigned char buf[4];
    if (!in.read(reinterpret_cast<char*>(buf), 4))
        throw FormatError(path + ": truncated", static_cast<long>(at));
    return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
           (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

std::string file_stem(const std::string& path) {
    const std::size_t slash = path.find_last_of("/\\");
    const std::size_t start = slash == std::string::npos ? 0 : slash + 1;
    const std::size_t dot = path.find_last_of('.');
    const std::size_t end = (dot == std::string::npos || dot <= start) ? path.size() : dot;
    return path.substr(start, end - start);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
    std::ifstream in(images_path, std::ios::binary);
    if (!in) throw InputError("load_idx: cannot open " + images_path);

    const std::uint32_t magic = read_be_u32(in, images_path, 0);
    if (magic != 0x00000803u)
        throw FormatError(images_path + ": bad image magic " + std::to_string(magic), 0);
    const std::uint32_t n = read_be_u32(in, images_path, 4);
    const std::uint32_t h = read_be_u32(in, images_path, 8);
    const std::uint32_t w = read_be_u32(in, images_path, 12);

    const std::size_t pixels = std::size_t(n) * h * w;
    std::vector<unsigned char> raw(pixels);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(pixels)))
        throw FormatError(images_path + ": truncated pixel data",
                          static_cast<long>(16 + in.gcount()));

    Dataset ds;
    ds.name = file_stem(images_path);
    ds.image_h = h;
    ds.image_w = w;
    ds.features = Matrix(n, std::size_t(h) * w);
    for (std::size_t i = 0; i < pixels; ++i)
        ds.features.data[i] = 2.0 * raw[i] / 255.0 - 1.0;

    if (!labels_path.empty()) {
        std::ifstream lin(labels_path, std::ios::binary);
        if (!lin) throw InputError("load_idx: cannot open " + labels_path);
        const std::uint32_t lmagic = read_be_u32(lin, labels_path, 0);
        if (lmagic != 0x00000801u)
            throw FormatError(labels_path + ": bad label magic " + std::to_string(lmagic), 0);
        const std::uint32_t ln = read_be_u32(lin, labels_path, 4);
        if (ln != n)
            throw InputError("load_idx: " + std::to_string(ln) + " labels for " +
                             std::to_string(n) + " images");
        std::vector<unsigned char> lraw(ln);
        if (!lin.read(reinterpret_cast<char*>(lraw.data()), static_cast<std::streamsize>(ln)))
            throw FormatError(labels_path + ": truncated label data",
                              static_cast<long>(8 + lin.gcount()));
        ds.has_labels = true;
        ds.labels.ids.assign(lraw.begin(), lraw.end());
        int top = 0;
        for (int v : ds.labels.ids) top = std::max(top, v);
        ds.labels.classes = static_cast<std::size_t>(top) + 1;
    }
    return ds;
}

Dataset load_csv(const std::string& path, long label_column) {
    std::ifstream in(path);
    if (!in) throw InputError("load_csv: cannot open " + path);

    std::vector<std::vector<double>> rows;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<double> row;
        const char* p = line.c_str();
        const char* end = p + line.size();
        while (true) {
            const char* comma = std::strchr(p, ',');
            const char* field_end = comma ? comma : end;
            double value = 0.0;
            const auto [ptr, ec] = std::from_chars(p, field_end, value);
            if (ec != std::errc() || ptr != field_end)
                throw FormatError(path + ": non-numeric cell", line_no);
            row.push_back(value);
            if (!comma) break;
            p = comma + 1;
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw FormatError(path + ": ragged row", line_no);
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw FormatError(path + ": empty file", 0);

    const std::size_t total_cols = rows.front().size();
    std::size_t lcol = 0;
    bool labeled = label_column >= 0;
    if (labeled) {
        lcol = static_cast<std::size_t>(label_column);
        if (lcol >= total_cols)
            throw ConfigError("load_csv: label column " + std::to_string(label_column) +
                              " out of range for " + std::to_string(total_cols) + " columns");
        if (total_cols < 2) throw ConfigError("load_csv: no feature columns left");
    }

    Dataset ds;
    ds.name = file_stem(path);
    ds.features = Matrix(rows.size(), labeled ? total_cols - 1 : total_cols);
    if (labeled) ds.labels.ids.resize(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        std::size_t out = 0;
        for (std::size_t j = 0; j < total_cols; ++j) {
            if (labeled && j == lcol) {
                const double v = rows[i][j];
                if (v != std::floor(v) || v < 0.0 || v > 1e9)
                    throw FormatError(path + ": label column holds a non-integer",
                                      static_cast<long>(i + 1));
                ds.labels.ids[i] = static_cast<int>(v);
            } else {
                ds.features(i, out++) = rows[i][j];
            }
        }
    }
    if (labeled) {
        ds.has_labels = true;
        int top = 0;
        for (int v : ds.labels.ids) top = std::max(top, v);
        ds.labels.classes = static_cast<std::size_t>(top) + 1;
    }
    return ds;
}

void save_csv(const std::string& path, const Dataset& dataset) {
    std::ofstream out(path);
    if (!out) throw InputError("save_csv: cannot open " + path);
    char buf[36];
    for (std::size_t i = 0; i < dataset.features.rows; ++i) {
        for (std::size_t j = 0; j < dataset.features.cols; ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", dataset.features(i, j));
            if (j) out << ',';
            out << buf;
        }
        if (dataset.has_labels) out << ',' << dataset.labels.ids[i];
        out << '\n';
    }
    if (!out) throw InputError("save_csv: write failed for " + path);
}

void save_dataset(const std::string& path, const Dataset& dataset) {
    std::vector<NamedTensor> tensors;
    tensors.push_back({"features",
                       {dataset.features.rows, dataset.features.cols},
                       dataset.features.data});
    if (dataset.has_labels) {
        NamedTensor labels{"labels", {dataset.labels.ids.size()}, {}};
        labels.values.assign(dataset.labels.ids.begin(), dataset.labels.ids.end());
        tensors.push_back(std::move(labels));
        tensors.push_back({"label_classes", {1}, {static_cast<double>(dataset.labels.classes)}});
    }
    if (dataset.image_h && dataset.image_w)
        tensors.push_back({"image_shape",
                           {2},
                           {static_cast<double>(dataset.image_h),
                            static_cast<double>(dataset.image_w)}});
    write_container(path, kDataMagic, kDataVersion, tensors);
}

Dataset load_dataset(const std::string& path) {
    const std::vector<NamedTensor> tensors = read_container(path, kDataMagic, kDataVersion);
    Dataset ds;
    ds.name = file_stem(path);
    bool have_features = false;
    for (const NamedTensor& t : tensors) {
        if (t.name == "features") {
            if (t.dims.size() != 2) throw FormatError(path + ": features must be rank 2", 0);
            ds.features = Matrix(t.dims[0], t.dims[1]);
            ds.features.data = t.values;
            have_features = true;
        } else if (t.name == "labels") {
            ds.has_labels = true;
            ds.labels.ids.resize(t.values.size());
            for (std::size_t i = 0; i < t.values.size(); ++i)
                ds.labels.ids[i] = static_cast<int>(t.values[i]);
        } else if (t.name == "label_classes") {
            ds.labels.classes = static_cast<std::size_t>(t.values.at(0));
        } else if (t.name == "image_shape") {
            if (t.values.size() != 2) throw FormatError(path + ": bad image_shape", 0);
            ds.image_h = static_cast<std::size_t>(t.values[0]);
            ds.image_w = static_cast<std::size_t>(t.values[1]);
        }
    }
    if (!have_features) throw FormatError(path + ": no features tensor", 0);
    if (ds.has_labels) {
        if (ds.labels.ids.size() != ds.features.rows)
            throw FormatError(path + ": label count != row count", 0);
        if (ds.labels.classes == 0) {
            int top = 0;
            for (int v : ds.labels.ids) top = std::max(top, v);
            ds.labels.classes = static_cast<std::size_t>(top) + 1;
        }
    }
    if ((ds.image_h != 0) != (ds.image_w != 0) ||
        (ds.image_h && ds.image_h * ds.image_w != ds.features.cols))
        throw FormatError(path + ": image shape does not match feature width", 0);
    return ds;
}

Dataset gen_spiral(std::size_t arcs, std::size_t per_arc, double noise_std, std::uint64_t seed) {
    if (arcs < 2) throw ConfigError("gen_spiral: need at least 2 arcs");
    if (per_arc == 0) throw ConfigError("gen_spiral: per_arc must be >= 1");
    if (noise_std < 0.0) throw ConfigError("gen_spiral: negative noise");

    constexpr double kTurn = 2.5 * M_PI;  // angular sweep of each arc
    Rng rng(seed);
    Dataset ds;
    ds.name = "spiral";
    ds.features = Matrix(arcs * per_arc, 2);
    ds.has_labels = true;
    ds.labels.classes = arcs;
    ds.labels.ids.resize(arcs * per_arc);

    std::size_t row = 0;
    for (std::size_t a = 0; a < arcs; ++a) {
        const double rot = 2.0 * M_PI * static_cast<double>(a) / static_cast<double>(arcs);
        for (std::size_t k = 0; k < per_arc; ++k, ++row) {
            const double phi = kTurn * static_cast<double>(k) / static_cast<double>(per_arc);
            const double rho = phi / kTurn;
            double x = rho * std::cos(phi + rot);
            double y = rho * std::sin(phi + rot);
            if (noise_std > 0.0) {
                x += rng.gaussian(0.0, noise_std);
                y += rng.gaussian(0.0, noise_std);
            }
            ds.features(row, 0) = x;
            ds.features(row, 1) = y;
            ds.labels.ids[row] = static_cast<int>(a);
        }
    }
    return ds;
}

Dataset gen_blobs(std::size_t k, std::size_t per_blob, std::size_t dim, double separation,
                  double noise_std, std::uint64_t seed) {
    if (k == 0 || per_blob == 0 || dim == 0)
        throw ConfigError("gen_blobs: k, per_blob and dim must be >= 1");
    if (separation <= 0.0) throw ConfigError("gen_blobs: separation must be positive");
    if (noise_std < 0.0) throw ConfigError("gen_blobs: negative noise");

    Rng rng(seed);
    const double side = separation * static_cast<double>(k) * 2.0;
    Matrix centers(k, dim);
    for (std::size_t b = 0; b < k; ++b) {
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            for (std::size_t j = 0; j < dim; ++j) centers(b, j) = rng.uniform(0.0, side);
            placed = true;
            for (std::size_t prev = 0; prev < b && placed; ++prev) {
                double d2 = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    const double diff = centers(b, j) - centers(prev, j);
                    d2 += diff * diff;
                }
                if (d2 < separation * separation) placed = false;
            }
        }
        if (!placed)
            throw ConfigError("gen_blobs: could not place " + std::to_string(k) +
                              " centers at separation " + std::to_string(separation));
    }

    Dataset ds;
    ds.name = "blobs";
    ds.features = Matrix(k * per_blob, dim);
    ds.has_labels = true;
    ds.labels.classes = k;
    ds.labels.ids.resize(k * per_blob);
    std::size_t row = 0;
    for (std::size_t b = 0; b < k; ++b)
        for (std::size_t p = 0; p < per_blob; ++p, ++row) {
            for (std::size_t j = 0; j < dim; ++j) {
                double v = centers(b, j);
                if (noise_std > 0.0) v += rng.gaussian(0.0, noise_std);
                ds.features(row, j) = v;
            }
            ds.labels.ids[row] = static_cast<int>(b);
        }
    return ds;
}

std::uint64_t dataset_fingerprint(const Dataset& dataset) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix_bytes = [&h](const void* p, std::size_t n) {
        const unsigned char* bytes = static_cast<const unsigned char*>(p);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    auto mix_u64 = [&](std::uint64_t v) { mix_bytes(&v, sizeof v); };

    mix_u64(dataset.features.rows);
    mix_u64(dataset.features.cols);
    mix_bytes(dataset.features.data.data(), dataset.features.data.size() * sizeof(double));
    mix_u64(dataset.has_labels ? 1 : 0);
    if (dataset.has_labels) {
        mix_u64(dataset.labels.classes);
        mix_bytes(dataset.labels.ids.data(), dataset.labels.ids.size() * sizeof(int));
    }
    mix_u64(dataset.image_h);
    mix_u64(dataset.image_w);
    return h;
}

}  // namespace imsat
