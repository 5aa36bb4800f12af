#include "qens/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace qens::metrics {

namespace {

void check_paired_input(std::size_t a, std::size_t b) {
    if (a == 0 || b == 0) throw std::invalid_argument("metrics: empty input");
    if (a != b) throw std::invalid_argument("metrics: length mismatch");
}

/// Continued-fraction kernel for the incomplete beta function (Lentz).
double betacf(double a, double b, double x) {
    constexpr double eps = 1e-15;
    constexpr double fpmin = 1e-300;
    const double qab = a + b;
    const double qap = a + 1.0;
    const double qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

/// variance with n-1 denominator; 0 for n < 2.
double sample_variance(const std::vector<double>& v, double mean) {
    if (v.size() < 2) return 0.0;
    double acc = 0.0;
    for (const double x : v) acc += (x - mean) * (x - mean);
    return acc / (static_cast<double>(v.size()) - 1.0);
}

double mean_of(const std::vector<double>& v) {
    double acc = 0.0;
    for (const double x : v) acc += x;
    return acc / static_cast<double>(v.size());
}

TTestResult finish_t_test(double diff, double se, double dof) {
    TTestResult r;
    r.dof = dof;
    if (se == 0.0) {
        if (diff == 0.0) {
            r.t = 0.0;
            r.p = 1.0;
        } else {
            r.t = diff > 0 ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
            r.p = 0.0;
        }
        return r;
    }
    r.t = diff / se;
    r.p = 2.0 * (1.0 - student_t_cdf(std::abs(r.t), dof));
    if (r.p > 1.0) r.p = 1.0;
    if (r.p < 0.0) r.p = 0.0;
    return r;
}

}  // namespace

double reg_incomplete_beta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

double student_t_cdf(double t, double nu) {
    if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
    const double x = nu / (nu + t * t);
    const double tail = 0.5 * reg_incomplete_beta(nu / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - tail : tail;
}

double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
    check_paired_input(pred.size(), truth.size());
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i)
        if (pred[i] == truth[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

double weighted_f1(const std::vector<int>& pred, const std::vector<int>& truth) {
    check_paired_input(pred.size(), truth.size());
    double out = 0.0;
    for (const int cls : {0, 1}) {
        double tp = 0, fp = 0, fn = 0, support = 0;
        for (std::size_t i = 0; i < pred.size(); ++i) {
            if (truth[i] == cls) ++support;
            if (pred[i] == cls && truth[i] == cls) ++tp;
            if (pred[i] == cls && truth[i] != cls) ++fp;
            if (pred[i] != cls && truth[i] == cls) ++fn;
        }
        const double precision = tp + fp > 0 ? tp / (tp + fp) : 0.0;
        const double recall = tp + fn > 0 ? tp / (tp + fn) : 0.0;
        const double f1 =
            precision + recall > 0 ? 2.0 * precision * recall / (precision + recall) : 0.0;
        out += f1 * support / static_cast<double>(pred.size());
    }
    return out;
}

double brier(const std::vector<double>& probs, const std::vector<int>& truth) {
    check_paired_input(probs.size(), truth.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (!(probs[i] >= 0.0 && probs[i] <= 1.0))
            throw std::invalid_argument("brier: probability outside [0,1]");
        const double d = probs[i] - static_cast<double>(truth[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(probs.size());
}

TTestResult welch_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() < 2 || b.size() < 2)
        throw std::invalid_argument("welch_t_test: need at least 2 values per group");
    const double ma = mean_of(a);
    const double mb = mean_of(b);
    const double va = sample_variance(a, ma);
    const double vb = sample_variance(b, mb);
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    const double sa = va / na;
    const double sb = vb / nb;
    double dof;
    if (sa + sb == 0.0) {
        dof = na + nb - 2.0;
    } else {
        dof = (sa + sb) * (sa + sb) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    }
    return finish_t_test(ma - mb, std::sqrt(sa + sb), dof);
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
    check_paired_input(a.size(), b.size());
    if (a.size() < 2) throw std::invalid_argument("paired_t_test: need at least 2 pairs");
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    const double md = mean_of(d);
    const double vd = sample_variance(d, md);
    const double n = static_cast<double>(d.size());
    return finish_t_test(md, std::sqrt(vd / n), n - 1.0);
}

}  // namespace qens::metrics
