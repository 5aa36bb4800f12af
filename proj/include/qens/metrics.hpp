#pragma once

#include <string>
#include <vector>

namespace qens::metrics {

/// Label rule used everywhere: class 1 iff p >= 0.5.
inline int threshold_label(double p) { return p >= 0.5 ? 1 : 0; }

/// (TP + TN) / all.
double accuracy(const std::vector<int>& pred, const std::vector<int>& truth);

/// Support-weighted mean of per-class F1; a class with P + R = 0 scores 0.
double weighted_f1(const std::vector<int>& pred, const std::vector<int>& truth);

/// Mean squared difference between class-1 probability and the 0/1 label.
double brier(const std::vector<double>& probs, const std::vector<int>& truth);

struct TTestResult {
    double t = 0.0;
    double p = 1.0;
    double dof = 0.0;
};

/// Unequal-variance two-sample t with Welch-Satterthwaite degrees of freedom;
/// two-sided p. Zero variance in both groups: p = 1 at equal means, p = 0
/// otherwise.
TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// Paired two-sided t-test on per-index differences.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

/// P(T <= t) for Student's t, via the regularized incomplete beta function
/// (Lentz continued fraction).
double student_t_cdf(double t, double nu);

/// I_x(a, b).
double reg_incomplete_beta(double a, double b, double x);

/// One evaluated (model, config, split) result row.
struct MetricsRecord {
    std::string model_id;
    std::string config_id;
    int split_id = 0;
    double accuracy = 0.0;
    double f1_weighted = 0.0;
    double brier = 0.0;
    bool single_class_flag = false;
};

}  // namespace qens::metrics
