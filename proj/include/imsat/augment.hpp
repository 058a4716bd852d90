#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "imsat/matrix.hpp"
#include "imsat/nn.hpp"
#include "imsat/rng.hpp"

namespace imsat {

enum class PerturbKind { Rpt, Vat, Affine, Composite };

// Parameter ranges for the stochastic affine distortion. Translation is in
// pixels, rotation in degrees; every parameter is drawn uniformly.
struct AffineRanges {
    double scale_lo = 0.8;
    double scale_hi = 1.2;
    double translate = 0.4;
    double rotate_deg = 10.0;
    double shear = 0.3;
};

struct PerturbSpec {
    PerturbKind kind = PerturbKind::Vat;
    double alpha = 0.25;           // radius scale: eps(x) = alpha * sigma_t(x)
    std::size_t t_neighbor = 10;
    double xi = 10.0;              // finite-difference probe scale
    std::size_t power_iters = 1;
    double weight_vat = 0.5;       // composite mixture weights
    double weight_affine = 0.5;
    AffineRanges affine;
    std::size_t image_h = 0;       // required for affine/composite on flat rows
    std::size_t image_w = 0;
};

// Per-point perturbation radii eps_i = alpha * (distance to t-th neighbor).
struct RadiusTable {
    std::vector<double> eps;
    std::size_t zero_entries = 0;  // duplicates collapse the radius to 0
};

// Exact brute-force k-NN radii (Euclidean, self excluded). Requires N > t.
RadiusTable radius_table(const Matrix& data, double alpha, std::size_t t);

// x + r with r drawn uniformly from the sphere ||r|| = eps.
std::vector<double> rpt_sample(const std::vector<double>& x_row, double eps, Rng& rng);
// One sphere sample per row.
Matrix rpt_batch(const Matrix& x, const std::vector<double>& eps, Rng& rng);

// Adversarial perturbation rows r_i with ||r_i|| = eps_i, found by power
// iteration on the self-augmentation loss around each point. The model is
// only read; no gradient flows out of the search. Rows whose loss gradient
// vanishes keep their initial random unit direction.
Matrix vat_direction(const MlpClassifier& model, const Matrix& x,
                     const std::vector<double>& eps, double xi, std::size_t power_iters,
                     Rng& rng, RunMode mode = RunMode::TrainFrozenStats);

struct AffineParams {
    double scale_x = 1.0, scale_y = 1.0;
    double translate_x = 0.0, translate_y = 0.0;  // pixels
    double rotate_rad = 0.0;
    double shear_x = 0.0, shear_y = 0.0;
};

AffineParams sample_affine(const AffineRanges& ranges, Rng& rng);

// Resamples an H x W grid under scale*rotate*shear about the image centre
// plus translation, bilinear interpolation, zero padding. Identity parameters
// reproduce the input bit-exactly.
Matrix affine_distort_image(const Matrix& image, const AffineParams& params);
// Random-parameter convenience form of the above.
Matrix affine_distort(const Matrix& image, const AffineRanges& ranges, Rng& rng);
// Batch of flattened rows; each row gets its own parameter draw.
Matrix affine_batch(const Matrix& flat_rows, std::size_t image_h, std::size_t image_w,
                    const AffineRanges& ranges, Rng& rng);

// Weighted self-augmentation loss over several augmentations of the same
// batch: sum_k weight_k * sat_loss(p(x), p(T_k(x))). Weights must sum to 1.
// eps supplies per-row radii for RPT/VAT entries (ignored by affine).
double composite_sat(const MlpClassifier& model, const Matrix& x,
                     const std::vector<PerturbSpec>& specs, const std::vector<double>& weights,
                     const std::vector<double>& eps, Rng& rng,
                     RunMode mode = RunMode::TrainFrozenStats);

}  // namespace imsat
