#include "imsat/augment.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "imsat/errors.hpp"
#include "imsat/objectives.hpp"

namespace imsat {

RadiusTable radius_table(const Matrix& data, double alpha, std::size_t t) {
    if (alpha <= 0.0) throw ConfigError("radius_table: alpha must be positive");
    if (t == 0) throw ConfigError("radius_table: t must be >= 1");
    if (data.rows <= t)
        throw ConfigError("radius_table: need more than " + std::to_string(t) + " points, got " +
                          std::to_string(data.rows));

    const std::size_t n = data.rows;
    const std::size_t d = data.cols;
    RadiusTable table;
    table.eps.resize(n);

    std::vector<double> dist2(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = data.row_ptr(i);
        for (std::size_t j = 0; j < n; ++j) {
            const double* xj = data.row_ptr(j);
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = xi[k] - xj[k];
                s += diff * diff;
            }
            dist2[j] = s;
        }
        dist2[i] = -1.0;  // sorts first, stands in for the excluded self
        // t-th neighbor lands at index t once the self entry occupies index 0
        std::nth_element(dist2.begin(), dist2.begin() + t, dist2.end());
        table.eps[i] = alpha * std::sqrt(dist2[t]);
        if (table.eps[i] == 0.0) ++table.zero_entries;
    }
    return table;
}

namespace {

// Scales `dir` so its L2 norm is exactly eps; a zero vector gets a canonical
// axis direction first so the result is always on the sphere.
void to_sphere(std::vector<double>& dir, double eps) {
    double norm2 = 0.0;
    for (double v : dir) norm2 += v * v;
    if (norm2 == 0.0) {
        dir[0] = 1.0;
        norm2 = 1.0;
    }
    const double s = eps / std::sqrt(norm2);
    for (double& v : dir) v *= s;
}

}  // namespace

std::vector<double> rpt_sample(const std::vector<double>& x_row, double eps, Rng& rng) {
    if (eps < 0.0) throw ConfigError("rpt_sample: negative radius");
    std::vector<double> r(x_row.size());
    for (double& v : r) v = rng.gaussian();
    to_sphere(r, eps);
    std::vector<double> out(x_row.size());
    for (std::size_t k = 0; k < x_row.size(); ++k) out[k] = x_row[k] + r[k];
    return out;
}

Matrix rpt_batch(const Matrix& x, const std::vector<double>& eps, Rng& rng) {
    if (eps.size() != x.rows) throw ShapeError("rpt_batch: eps length != batch rows");
    Matrix out(x.rows, x.cols);
    std::vector<double> r(x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (double& v : r) v = rng.gaussian();
        to_sphere(r, eps[i]);
        const double* xi = x.row_ptr(i);
        double* oi = out.row_ptr(i);
        for (std::size_t k = 0; k < x.cols; ++k) oi[k] = xi[k] + r[k];
    }
    return out;
}

Matrix vat_direction(const MlpClassifier& model, const Matrix& x,
                     const std::vector<double>& eps, double xi, std::size_t power_iters,
                     Rng& rng, RunMode mode) {
    if (eps.size() != x.rows) throw ShapeError("vat_direction: eps length != batch rows");
    if (mode == RunMode::Train)
        throw StateError("vat_direction: direction search must not update the model");

    // random unit start, one direction per row
    Matrix dir(x.rows, x.cols);
    std::vector<double> tmp(x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
        for (double& v : tmp) v = rng.gaussian();
        to_sphere(tmp, 1.0);
        std::copy(tmp.begin(), tmp.end(), dir.row_ptr(i));
    }

    const ForwardResult base = forward(model, x, mode);
    const std::vector<Matrix>& target = base.head_probs;

    Matrix probe(x.rows, x.cols);
    for (std::size_t it = 0; it < power_iters; ++it) {
        for (std::size_t i = 0; i < probe.size(); ++i)
            probe.data[i] = x.data[i] + xi * dir.data[i];
        const ForwardResult fr = forward(model, probe, mode);
        const Gradients grads = backward(model, fr, sat_loss_grad(target, fr.head_probs));
        for (std::size_t i = 0; i < x.rows; ++i) {
            const double n = row_norm(grads.input, i);
            if (n > 0.0) {
                const double* g = grads.input.row_ptr(i);
                double* di = dir.row_ptr(i);
                for (std::size_t k = 0; k < x.cols; ++k) di[k] = g[k] / n;
            }
            // zero gradient: keep the current direction
        }
    }

    for (std::size_t i = 0; i < x.rows; ++i) {
        std::copy(dir.row_ptr(i), dir.row_ptr(i) + x.cols, tmp.begin());
        to_sphere(tmp, eps[i]);
        std::copy(tmp.begin(), tmp.end(), dir.row_ptr(i));
    }
    return dir;
}

AffineParams sample_affine(const AffineRanges& ranges, Rng& rng) {
    AffineParams p;
    p.scale_x = rng.uniform(ranges.scale_lo, ranges.scale_hi);
    p.scale_y = rng.uniform(ranges.scale_lo, ranges.scale_hi);
    p.translate_x = rng.uniform(-ranges.translate, ranges.translate);
    p.translate_y = rng.uniform(-ranges.translate, ranges.translate);
    p.rotate_rad = rng.uniform(-ranges.rotate_deg, ranges.rotate_deg) * M_PI / 180.0;
    p.shear_x = rng.uniform(-ranges.shear, ranges.shear);
    p.shear_y = rng.uniform(-ranges.shear, ranges.shear);
    return p;
}

Matrix affine_distort_image(const Matrix& image, const AffineParams& params) {
    const std::size_t h = image.rows, w = image.cols;
    if (h < 2 || w < 2) throw ConfigError("affine_distort: image must be at least 2x2");

    // forward map about the centre: dst = S * R * Sh * src + t
    const double c = std::cos(params.rotate_rad), s = std::sin(params.rotate_rad);
    const double m00 = params.scale_x * (c - s * params.shear_y);
    const double m01 = params.scale_x * (c * params.shear_x - s);
    const double m10 = params.scale_y * (s + c * params.shear_y);
    const double m11 = params.scale_y * (s * params.shear_x + c);
    const double det = m00 * m11 - m01 * m10;
    if (std::abs(det) < 1e-12) throw ConfigError("affine_distort: singular transform");
    const double i00 = m11 / det, i01 = -m01 / det;
    const double i10 = -m10 / det, i11 = m00 / det;

    const double cx = (static_cast<double>(w) - 1.0) / 2.0;
    const double cy = (static_cast<double>(h) - 1.0) / 2.0;

    Matrix out(h, w, 0.0);
    for (std::size_t r = 0; r < h; ++r) {
        const double dy = static_cast<double>(r) - cy - params.translate_y;
        for (std::size_t col = 0; col < w; ++col) {
            const double dx = static_cast<double>(col) - cx - params.translate_x;
            const double sx = i00 * dx + i01 * dy + cx;
            const double sy = i10 * dx + i11 * dy + cy;

            const double fx0 = std::floor(sx), fy0 = std::floor(sy);
            const long x0 = static_cast<long>(fx0), y0 = static_cast<long>(fy0);
            const double ax = sx - fx0, ay = sy - fy0;

            auto pixel = [&](long yy, long xx) -> double {
                if (yy < 0 || xx < 0 || yy >= static_cast<long>(h) || xx >= static_cast<long>(w))
                    return 0.0;
                return image(static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            };
            out(r, col) = (1.0 - ay) * ((1.0 - ax) * pixel(y0, x0) + ax * pixel(y0, x0 + 1)) +
                          ay * ((1.0 - ax) * pixel(y0 + 1, x0) + ax * pixel(y0 + 1, x0 + 1));
        }
    }
    return out;
}

Matrix affine_distort(const Matrix& image, const AffineRanges& ranges, Rng& rng) {
    return affine_distort_image(image, sample_affine(ranges, rng));
}

Matrix affine_batch(const Matrix& flat_rows, std::size_t image_h, std::size_t image_w,
                    const AffineRanges& ranges, Rng& rng) {
    if (image_h < 2 || image_w < 2 || image_h * image_w != flat_rows.cols)
        throw ConfigError("affine_batch: rows are not " + std::to_string(image_h) + "x" +
                          std::to_string(image_w) + " images");
    Matrix out(flat_rows.rows, flat_rows.cols);
    Matrix img(image_h, image_w);
    for (std::size_t i = 0; i < flat_rows.rows; ++i) {
        std::copy(flat_rows.row_ptr(i), flat_rows.row_ptr(i) + flat_rows.cols, img.data.begin());
        const Matrix distorted = affine_distort(img, ranges, rng);
        std::copy(distorted.data.begin(), distorted.data.end(), out.row_ptr(i));
    }
    return out;
}

double composite_sat(const MlpClassifier& model, const Matrix& x,
                     const std::vector<PerturbSpec>& specs, const std::vector<double>& weights,
                     const std::vector<double>& eps, Rng& rng, RunMode mode) {
    if (specs.empty() || specs.size() != weights.size())
        throw ConfigError("composite_sat: one weight per spec required");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0.0) throw ConfigError("composite_sat: negative weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9) throw ConfigError("composite_sat: weights must sum to 1");
    if (mode == RunMode::Train)
        throw StateError("composite_sat: evaluation must not update the model");

    const ForwardResult base = forward(model, x, mode);
    double total = 0.0;
    for (std::size_t k = 0; k < specs.size(); ++k) {
        const PerturbSpec& spec = specs[k];
        Matrix augmented;
        switch (spec.kind) {
            case PerturbKind::Rpt:
                augmented = rpt_batch(x, eps, rng);
                break;
            case PerturbKind::Vat: {
                const Matrix r =
                    vat_direction(model, x, eps, spec.xi, spec.power_iters, rng, mode);
                augmented = x;
                add_inplace(augmented, r);
                break;
            }
            case PerturbKind::Affine:
                augmented = affine_batch(x, spec.image_h, spec.image_w, spec.affine, rng);
                break;
            case PerturbKind::Composite:
                throw ConfigError("composite_sat: nested composite spec");
        }
        const ForwardResult fr = forward(model, augmented, mode);
        total += weights[k] * sat_loss(base.head_probs, fr.head_probs);
    }
    return total;
}

}  // namespace imsat
