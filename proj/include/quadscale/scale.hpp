#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>
#include <vector>

#include "quadscale/core.hpp"
#include "quadscale/priors.hpp"

namespace quadscale {

struct InvalidDims : Error { using Error::Error; };
struct NoDetections : Error { using Error::Error; };
struct NoSamples : Error { using Error::Error; };
struct DegenerateProblem : Error { using Error::Error; };
struct NoUsableObjects : Error { using Error::Error; };
struct NonPositiveScale : Error { using Error::Error; };

/// A reconstructed object's sorted dimensions plus confidence telemetry.
struct ObjectEstimate {
    int id = 0;
    std::string class_name;
    Vec3 dims = Vec3::Ones();               // map units, sorted descending
    std::vector<double> detection_probs;    // per-view detector probabilities
    int num_points = 0;                     // map points associated (N_p)
    int num_detections = 0;                 // 2-D detections (N_o)
};

/// Normalized shape features of sorted dimensions; they sum to one.
struct ShapeFeatures {
    double linearity = 0.0;
    double planarity = 0.0;
    double scattering = 0.0;
};

enum class ShapeClass { PoleLike, DiskLike, General };

/// One (dimension, prior) pairing entering the scale solve.
struct DimensionSample {
    int object_id = 0;
    double dim = 1.0;          // reconstructed length, map units
    DimensionPrior prior;      // matching physical-size distribution
    double confidence = 1.0;   // in [0,1]
};

/// Weights of the three confidence terms and the log bases of the
/// point-count and visibility terms.
struct ConfidenceWeights {
    double w1 = 1.0;
    double w2 = 1.0;
    double w3 = 1.0;
    double a = 10.0;  // log base for the point-count term
    double b = 15.0;  // log base for the visibility term
};

struct ScaleSolution {
    double scale = 0.0;
    double weighted_residual = 0.0;
    int num_inliers = 0;
    std::vector<int> inlier_ids;  // object id per inlier sample
};

inline ShapeFeatures shape_features(const Vec3& dims) {
    const double d1 = dims(0), d2 = dims(1), d3 = dims(2);
    if (!(d1 >= d2 && d2 >= d3 && d3 > 0.0)) {
        throw InvalidDims("dims must satisfy d1 >= d2 >= d3 > 0");
    }
    ShapeFeatures f;
    f.linearity = (d1 - d2) / d1;
    f.planarity = (d2 - d3) / d1;
    f.scattering = d3 / d1;
    return f;
}

inline ShapeClass classify_shape(const ShapeFeatures& f) {
    if (f.scattering < 0.3) {
        if (f.linearity > 0.5) return ShapeClass::PoleLike;
        if (f.planarity > 0.5) return ShapeClass::DiskLike;
    }
    return ShapeClass::General;
}

/// Pairs an object's stable dimensions with the prior, positionally on the
/// descending-sorted order. Pole-like objects contribute only the longest
/// dimension; disk-like objects drop the shortest.
inline std::vector<DimensionSample> select_dimensions(const ObjectEstimate& obj,
                                                      const SizePrior& prior,
                                                      double confidence) {
    int count = 3;
    switch (classify_shape(shape_features(obj.dims))) {
        case ShapeClass::PoleLike: count = 1; break;
        case ShapeClass::DiskLike: count = 2; break;
        case ShapeClass::General: count = 3; break;
    }
    std::vector<DimensionSample> samples;
    samples.reserve(count);
    for (int i = 0; i < count; ++i) {
        samples.push_back({obj.id, obj.dims(i), prior.dims[i], confidence});
    }
    return samples;
}

namespace detail {

inline double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

}  // namespace detail

/// Reconstruction-quality confidence: weighted mean of detection confidence,
/// point-count confidence log_a(N_p), and visibility confidence log_b(N_o).
inline double confidence(const ObjectEstimate& obj, const ConfidenceWeights& w = {}) {
    if (obj.num_detections < 1) {
        throw NoDetections("object " + std::to_string(obj.id) + " has no detections");
    }
    const double c_det =
        std::accumulate(obj.detection_probs.begin(), obj.detection_probs.end(), 0.0) /
        static_cast<double>(obj.detection_probs.size());
    const double c_pt =
        obj.num_points < 1 ? 0.0
                           : detail::clamp01(std::log(obj.num_points) / std::log(w.a));
    const double c_vis = detail::clamp01(std::log(obj.num_detections) / std::log(w.b));
    return (w.w1 * c_det + w.w2 * c_pt + w.w3 * c_vis) / (w.w1 + w.w2 + w.w3);
}

/// Per-sample local scale factor: prior mean / reconstructed dimension.
inline std::vector<double> local_scales(const std::vector<DimensionSample>& samples) {
    std::vector<double> scales;
    scales.reserve(samples.size());
    for (const auto& s : samples) scales.push_back(s.prior.mean / s.dim);
    return scales;
}

namespace detail {

/// Linear-interpolation ("type 7") quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

}  // namespace detail

struct OutlierSplit {
    std::vector<DimensionSample> inliers;
    std::vector<DimensionSample> outliers;
};

/// Boxplot fence on local scales: samples outside [Q1 - 1.5 IQR, Q3 + 1.5 IQR]
/// are rejected. Fewer than `min_samples` samples pass through unchanged.
/// One IQR fence pass. Not idempotent on its own: removing points moves the
/// quartiles, so the public entry point below repeats until a fixed point.
inline OutlierSplit boxplot_pass(const std::vector<DimensionSample>& samples,
                                 std::size_t min_samples) {
    OutlierSplit split;
    if (samples.size() < min_samples) {
        split.inliers = samples;
        return split;
    }
    std::vector<double> scales = local_scales(samples);
    std::vector<double> sorted = scales;
    std::sort(sorted.begin(), sorted.end());
    const double q1 = detail::quantile_sorted(sorted, 0.25);
    const double q3 = detail::quantile_sorted(sorted, 0.75);
    const double iqr = q3 - q1;
    const double lo = q1 - 1.5 * iqr;
    const double hi = q3 + 1.5 * iqr;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        if (scales[i] < lo || scales[i] > hi) {
            split.outliers.push_back(samples[i]);
        } else {
            split.inliers.push_back(samples[i]);
        }
    }
    return split;
}

inline OutlierSplit eliminate_outliers(const std::vector<DimensionSample>& samples,
                                       std::size_t min_samples = 4) {
    OutlierSplit split = boxplot_pass(samples, min_samples);
    while (!split.outliers.empty()) {
        OutlierSplit next = boxplot_pass(split.inliers, min_samples);
        if (next.outliers.empty()) break;
        split.inliers = std::move(next.inliers);
        split.outliers.insert(split.outliers.end(), next.outliers.begin(),
                              next.outliers.end());
    }
    return split;
}

/// Closed-form minimizer of sum_i || c_i (mu_i - s d_i) / sigma_i ||^2.
inline ScaleSolution estimate_scale(const std::vector<DimensionSample>& samples) {
    if (samples.empty()) {
        throw NoSamples("estimate_scale needs at least one sample");
    }
    double num = 0.0;
    double den = 0.0;
    for (const auto& s : samples) {
        const double w = (s.confidence * s.confidence) / (s.prior.std * s.prior.std);
        num += w * s.prior.mean * s.dim;
        den += w * s.dim * s.dim;
    }
    if (den <= 1e-15) {
        throw DegenerateProblem("all samples carry zero effective weight");
    }
    ScaleSolution sol;
    sol.scale = num / den;
    sol.num_inliers = static_cast<int>(samples.size());
    for (const auto& s : samples) {
        const double e = s.confidence * (s.prior.mean - sol.scale * s.dim) / s.prior.std;
        sol.weighted_residual += e * e;
        sol.inlier_ids.push_back(s.object_id);
    }
    return sol;
}

/// Stage toggles for the full pipeline; the three flags mirror the optional
/// outlier-elimination / dimension-selection / uncertainty schemes.
struct PipelineOptions {
    ConfidenceWeights weights;
    bool outlier_elimination = true;
    bool dimension_selection = true;
    bool uncertainty_model = true;
    double confidence_floor = 0.0;  // 0 disables the gate
    std::size_t min_samples_for_fences = 4;
};

struct PipelineResult {
    ScaleSolution solution;
    std::vector<DimensionSample> inliers;
    std::vector<DimensionSample> outliers;
    std::vector<double> all_local_scales;  // before outlier elimination
    int skipped_unknown_class = 0;
    int skipped_no_detections = 0;
    int skipped_low_confidence = 0;
};

/// Full scale-estimation pipeline: prior lookup, confidence weighting, shape
/// classification, dimension selection, local-scale outlier elimination, and
/// the weighted least-squares solve.
inline PipelineResult run_pipeline(const std::vector<ObjectEstimate>& objects,
                                   const PriorRepository& repo,
                                   const PipelineOptions& opts = {}) {
    PipelineResult result;
    std::vector<DimensionSample> samples;
    for (const auto& obj : objects) {
        const auto prior = repo.lookup(obj.class_name);
        if (!prior) {
            ++result.skipped_unknown_class;
            continue;
        }
        if (obj.num_detections < 1) {
            ++result.skipped_no_detections;
            continue;
        }
        const double c = opts.uncertainty_model ? confidence(obj, opts.weights) : 1.0;
        if (c < opts.confidence_floor) {
            ++result.skipped_low_confidence;
            continue;
        }
        std::vector<DimensionSample> obj_samples;
        if (opts.dimension_selection) {
            obj_samples = select_dimensions(obj, *prior, c);
        } else {
            for (int i = 0; i < 3; ++i) {
                obj_samples.push_back({obj.id, obj.dims(i), prior->dims[i], c});
            }
        }
        samples.insert(samples.end(), obj_samples.begin(), obj_samples.end());
    }
    if (samples.empty()) {
        throw NoUsableObjects("no object contributed a usable dimension sample");
    }
    result.all_local_scales = local_scales(samples);
    OutlierSplit split;
    if (opts.outlier_elimination) {
        split = eliminate_outliers(samples, opts.min_samples_for_fences);
    } else {
        split.inliers = samples;
    }
    if (split.inliers.empty()) {
        throw NoUsableObjects("all dimension samples rejected as outliers");
    }
    result.inliers = split.inliers;
    result.outliers = split.outliers;
    result.solution = estimate_scale(split.inliers);
    return result;
}

}  // namespace quadscale
