#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "twinbeam/error.hpp"

namespace twinbeam {

/// TBF1 payload type codes.
enum class Dtype : std::uint8_t { Counts = 0, Real = 1 };

template <class T>
struct DtypeOf;
template <>
struct DtypeOf<std::uint32_t> {
    static constexpr Dtype value = Dtype::Counts;
};
template <>
struct DtypeOf<double> {
    static constexpr Dtype value = Dtype::Real;
};

template <class T>
concept FrameValue = std::is_same_v<T, std::uint32_t> || std::is_same_v<T, double>;

/// Row-major 2D image with a pixel pitch in micrometres (detection plane).
/// Raw photon counts use Frame<uint32_t>; processed maps use Frame<double>.
template <FrameValue T>
class Frame {
public:
    using value_type = T;
    static constexpr Dtype dtype = DtypeOf<T>::value;

    Frame() = default;

    Frame(std::size_t width, std::size_t height, double pitch, std::vector<T> data)
        : width_(width), height_(height), pitch_(pitch), data_(std::move(data))
    {
        if (data_.size() != width_ * height_)
            throw DataError("frame data length " + std::to_string(data_.size()) + " does not match " +
                            std::to_string(width_) + "x" + std::to_string(height_));
        if (!(pitch_ > 0.0) || !std::isfinite(pitch_))
            throw DataError("frame pitch must be positive and finite");
    }

    Frame(std::size_t width, std::size_t height, double pitch, T fill = T{})
        : Frame(width, height, pitch, std::vector<T>(width * height, fill))
    {
    }

    std::size_t width() const noexcept { return width_; }
    std::size_t height() const noexcept { return height_; }
    double pitch() const noexcept { return pitch_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<const T> data() const noexcept { return data_; }
    const std::vector<T>& values() const noexcept { return data_; }

    const T& operator()(std::size_t x, std::size_t y) const noexcept { return data_[y * width_ + x]; }

    const T& at(std::size_t x, std::size_t y) const
    {
        if (x >= width_ || y >= height_)
            throw DataError("pixel (" + std::to_string(x) + ", " + std::to_string(y) + ") outside frame");
        return (*this)(x, y);
    }

    bool same_geometry(const Frame& other) const noexcept
    {
        return width_ == other.width_ && height_ == other.height_ && pitch_ == other.pitch_;
    }

    template <FrameValue U>
    bool same_geometry(const Frame<U>& other) const noexcept
    {
        return width_ == other.width() && height_ == other.height() && pitch_ == other.pitch();
    }

    /// Exact on integers, bitwise on reals.
    friend bool operator==(const Frame& a, const Frame& b) noexcept
    {
        if (a.width_ != b.width_ || a.height_ != b.height_)
            return false;
        if (std::memcmp(&a.pitch_, &b.pitch_, sizeof(double)) != 0)
            return false;
        return a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(T)) == 0;
    }

private:
    std::size_t width_ = 0;
    std::size_t height_ = 0;
    double pitch_ = 1.0;
    std::vector<T> data_;
};

using CountFrame = Frame<std::uint32_t>;
using RealFrame = Frame<double>;

template <FrameValue T>
RealFrame to_real(const Frame<T>& f)
{
    if constexpr (std::is_same_v<T, double>) {
        return f;
    } else {
        std::vector<double> out(f.data().begin(), f.data().end());
        return RealFrame(f.width(), f.height(), f.pitch(), std::move(out));
    }
}

struct PixelCoord {
    long x = 0;
    long y = 0;
    friend bool operator==(const PixelCoord&, const PixelCoord&) = default;
};

struct Point2 {
    double x = 0.0;
    double y = 0.0;
};

/// Axis-aligned pixel rectangle.
struct Rect {
    long x = 0;
    long y = 0;
    std::size_t width = 0;
    std::size_t height = 0;

    bool inside(std::size_t frameWidth, std::size_t frameHeight) const noexcept
    {
        return x >= 0 && y >= 0 && static_cast<std::size_t>(x) + width <= frameWidth &&
               static_cast<std::size_t>(y) + height <= frameHeight;
    }
};

/// Square pixel region.
struct Region {
    PixelCoord origin;
    std::size_t size = 0;

    Rect rect() const noexcept { return {origin.x, origin.y, size, size}; }
};

/// Two equal square regions, A in beam 1 and B in beam 2, registered by point
/// reflection through a common centre. Pixel (i, j) of A pairs with pixel
/// (size-1-i, size-1-j) of B. Coordinates are pixel edges: pixel k spans [k, k+1).
class RegionPair {
public:
    RegionPair() = default;

    RegionPair(PixelCoord originA, PixelCoord originB, std::size_t size)
        : originA_(originA), originB_(originB), size_(size)
    {
        if (size_ == 0)
            throw DataError("region size must be positive");
    }

    /// B is the reflection of A through `center`, rounded to the nearest pixel.
    static RegionPair mirrored(PixelCoord originA, std::size_t size, Point2 center)
    {
        const double s = static_cast<double>(size);
        PixelCoord b{static_cast<long>(std::lround(2.0 * center.x - static_cast<double>(originA.x) - s)),
                     static_cast<long>(std::lround(2.0 * center.y - static_cast<double>(originA.y) - s))};
        return RegionPair(originA, b, size);
    }

    PixelCoord originA() const noexcept { return originA_; }
    PixelCoord originB() const noexcept { return originB_; }
    std::size_t size() const noexcept { return size_; }
    Region regionA() const noexcept { return {originA_, size_}; }
    Region regionB() const noexcept { return {originB_, size_}; }

    Point2 symmetryCenter() const noexcept
    {
        const double s = static_cast<double>(size_);
        return {(static_cast<double>(originA_.x + originB_.x) + s) / 2.0,
                (static_cast<double>(originA_.y + originB_.y) + s) / 2.0};
    }

    RegionPair swapped() const { return RegionPair(originB_, originA_, size_); }

    void validate(std::size_t width, std::size_t height) const
    {
        if (!regionA().rect().inside(width, height))
            throw DataError("region A does not fit inside the frame");
        if (!regionB().rect().inside(width, height))
            throw DataError("region B does not fit inside the frame");
    }

private:
    PixelCoord originA_;
    PixelCoord originB_;
    std::size_t size_ = 1;
};

/// Physical constants of the imaging chain. Lengths in micrometres,
/// wavelengths in nanometres.
struct OpticsConstants {
    double magnification = 7.8;
    double pumpWavelengthNm = 405.0;
    double degenerateWavelengthNm = 810.0;
    double focalLengthUm = 10000.0;
    /// Chosen so that the coherence radius in the object plane is 2.64 um.
    double pumpWaistUm = 488.2749;

    void validate() const
    {
        if (!(magnification > 0 && pumpWavelengthNm > 0 && degenerateWavelengthNm > 0 && focalLengthUm > 0 &&
              pumpWaistUm > 0))
            throw ConfigError("optics constants must all be positive");
    }

    double to_object_plane(double detectionUm) const noexcept { return detectionUm / magnification; }
    double to_detection_plane(double objectUm) const noexcept { return objectUm * magnification; }
};

enum class ShotLabel : std::uint8_t { WithoutSample = 0, WithSample = 1 };

template <FrameValue T>
struct FramePair {
    Frame<T> beam1;
    Frame<T> beam2;

    const Frame<T>& beam(int index) const
    {
        if (index == 1)
            return beam1;
        if (index == 2)
            return beam2;
        throw ConfigError("beam index must be 1 or 2");
    }
};

/// Ordered shots of registered (beam 1, beam 2) frames sharing one geometry.
template <FrameValue T>
class BasicFramePairStack {
public:
    using Pair = FramePair<T>;

    BasicFramePairStack(std::vector<Pair> shots, double exposure, std::vector<ShotLabel> labels)
        : shots_(std::move(shots)), exposure_(exposure), labels_(std::move(labels))
    {
        if (shots_.empty())
            throw DataError("a frame stack needs at least one shot");
        if (labels_.size() != shots_.size())
            throw DataError("one label per shot is required");
        const auto& ref = shots_.front().beam1;
        for (const auto& s : shots_)
            if (!s.beam1.same_geometry(ref) || !s.beam2.same_geometry(ref))
                throw DataError("all frames of a stack must share width, height and pitch");
    }

    std::size_t size() const noexcept { return shots_.size(); }
    const Pair& operator[](std::size_t i) const noexcept { return shots_[i]; }
    const std::vector<Pair>& shots() const noexcept { return shots_; }
    const std::vector<ShotLabel>& labels() const noexcept { return labels_; }
    double exposure() const noexcept { return exposure_; }
    std::size_t width() const noexcept { return shots_.front().beam1.width(); }
    std::size_t height() const noexcept { return shots_.front().beam1.height(); }
    double pitch() const noexcept { return shots_.front().beam1.pitch(); }

    friend bool operator==(const BasicFramePairStack& a, const BasicFramePairStack& b)
    {
        if (a.size() != b.size() || a.labels_ != b.labels_ || a.exposure_ != b.exposure_)
            return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (!(a.shots_[i].beam1 == b.shots_[i].beam1) || !(a.shots_[i].beam2 == b.shots_[i].beam2))
                return false;
        return true;
    }

private:
    std::vector<Pair> shots_;
    double exposure_ = 0.0;
    std::vector<ShotLabel> labels_;
};

using FramePairStack = BasicFramePairStack<std::uint32_t>;
using RealFramePairStack = BasicFramePairStack<double>;

template <FrameValue T>
BasicFramePairStack<T> make_stack(std::vector<FramePair<T>> shots, double exposure, ShotLabel label)
{
    std::vector<ShotLabel> labels(shots.size(), label);
    return BasicFramePairStack<T>(std::move(shots), exposure, std::move(labels));
}

/// Copies a rectangle out of a frame. An empty rectangle yields an empty frame.
template <FrameValue T>
Frame<T> crop(const Frame<T>& f, const Rect& r)
{
    if (!r.inside(f.width(), f.height()))
        throw DataError("crop rectangle outside frame");
    std::vector<T> out;
    out.reserve(r.width * r.height);
    for (std::size_t y = 0; y < r.height; ++y)
        for (std::size_t x = 0; x < r.width; ++x)
            out.push_back(f(static_cast<std::size_t>(r.x) + x, static_cast<std::size_t>(r.y) + y));
    return Frame<T>(r.width, r.height, f.pitch(), std::move(out));
}

/// Point reflection (180 degree rotation) of a whole frame.
template <FrameValue T>
Frame<T> point_reflect(const Frame<T>& f)
{
    std::vector<T> out(f.data().rbegin(), f.data().rend());
    return Frame<T>(f.width(), f.height(), f.pitch(), std::move(out));
}

/// Sums non-overlapping d x d blocks (hardware-style binning). The pitch grows by d.
template <FrameValue T>
RealFrame bin_sum(const Frame<T>& f, std::size_t d)
{
    if (d == 0)
        throw ConfigError("binning factor must be at least 1");
    if (f.width() % d != 0 || f.height() % d != 0)
        throw ConfigError("binning factor " + std::to_string(d) + " does not divide " + std::to_string(f.width()) +
                          "x" + std::to_string(f.height()));
    const std::size_t bw = f.width() / d;
    const std::size_t bh = f.height() / d;
    std::vector<double> out(bw * bh, 0.0);
    for (std::size_t y = 0; y < f.height(); ++y)
        for (std::size_t x = 0; x < f.width(); ++x)
            out[(y / d) * bw + x / d] += static_cast<double>(f(x, y));
    return RealFrame(bw, bh, f.pitch() * static_cast<double>(d), std::move(out));
}

} // namespace twinbeam
