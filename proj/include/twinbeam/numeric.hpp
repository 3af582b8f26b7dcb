#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace twinbeam {

/// Pairwise (cascade) summation in a fixed order: results do not depend on
/// thread count or evaluation order, and rounding error grows as O(log n).
template <class T>
double pairwise_sum(std::span<const T> values)
{
    const std::size_t n = values.size();
    if (n == 0)
        return 0.0;
    if (n <= 16) {
        double s = 0.0;
        for (const T& v : values)
            s += static_cast<double>(v);
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

template <class T>
double pairwise_sum(const std::vector<T>& values)
{
    return pairwise_sum(std::span<const T>(values));
}

template <class T>
double mean_of(std::span<const T> values)
{
    return values.empty() ? 0.0 : pairwise_sum(values) / static_cast<double>(values.size());
}

template <class T>
double mean_of(const std::vector<T>& values)
{
    return mean_of(std::span<const T>(values));
}

/// Unbiased (n-1) sample variance, two-pass.
template <class T>
double variance_of(std::span<const T> values)
{
    const std::size_t n = values.size();
    if (n < 2)
        return 0.0;
    const double m = mean_of(values);
    std::vector<double> sq(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(values[i]) - m;
        sq[i] = d * d;
    }
    return pairwise_sum(sq) / static_cast<double>(n - 1);
}

template <class T>
double variance_of(const std::vector<T>& values)
{
    return variance_of(std::span<const T>(values));
}

struct MeanAndError {
    double mean = 0.0;
    double standardError = 0.0;
};

/// Sample mean with its standard error sd/sqrt(n); the error is 0 for n < 2.
inline MeanAndError mean_and_error(std::span<const double> values)
{
    MeanAndError out;
    out.mean = mean_of(values);
    if (values.size() > 1)
        out.standardError = std::sqrt(variance_of(values) / static_cast<double>(values.size()));
    return out;
}

inline MeanAndError mean_and_error(const std::vector<double>& values)
{
    return mean_and_error(std::span<const double>(values));
}

} // namespace twinbeam
