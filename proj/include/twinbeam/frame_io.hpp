#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "twinbeam/error.hpp"
#include "twinbeam/frame.hpp"

namespace twinbeam {

// TBF1 layout (all little-endian):
//   0..3   magic "TBF1"
//   4      dtype (0 = uint32 counts, 1 = float64)
//   5..8   width  (uint32)
//   9..12  height (uint32)
//   13..20 pitch in um (float64)
//   21..   row-major payload
inline constexpr std::array<char, 4> kTbfMagic{'T', 'B', 'F', '1'};
inline constexpr std::size_t kTbfHeaderBytes = 21;

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v)
{
    for (int i = 0; i < 4; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline void put_u64(std::string& buf, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i)
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const unsigned char* p)
{
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline std::uint64_t get_u64(const unsigned char* p)
{
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i)
        v = (v << 8) | p[i];
    return v;
}

inline bool read_exact(std::istream& in, unsigned char* dst, std::size_t n)
{
    in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(n));
    return static_cast<std::size_t>(in.gcount()) == n;
}

template <class T>
std::string format_value(T v)
{
    if constexpr (std::is_same_v<T, double>) {
        std::array<char, 64> buf{};
        auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
        (void)ec;
        return std::string(buf.data(), end);
    } else {
        return std::to_string(v);
    }
}

} // namespace detail

/// Serialises a frame as TBF1 and returns the number of bytes written.
template <FrameValue T>
std::size_t write_frame(const Frame<T>& frame, std::ostream& out)
{
    constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
    if (frame.width() > kMax || frame.height() > kMax)
        throw DataError("frame dimensions exceed the TBF1 32-bit limit");
    if (frame.size() != frame.width() * frame.height())
        throw DataError("frame data length does not match its dimensions");

    std::string buf;
    buf.reserve(kTbfHeaderBytes + frame.size() * sizeof(T));
    buf.append(kTbfMagic.data(), kTbfMagic.size());
    buf.push_back(static_cast<char>(Frame<T>::dtype));
    detail::put_u32(buf, static_cast<std::uint32_t>(frame.width()));
    detail::put_u32(buf, static_cast<std::uint32_t>(frame.height()));
    detail::put_u64(buf, std::bit_cast<std::uint64_t>(frame.pitch()));
    for (T v : frame.data()) {
        if constexpr (std::is_same_v<T, double>)
            detail::put_u64(buf, std::bit_cast<std::uint64_t>(v));
        else
            detail::put_u32(buf, v);
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out)
        throw DataError("failed to write TBF1 frame to sink");
    return buf.size();
}

using AnyFrame = std::variant<CountFrame, RealFrame>;

/// Decodes one TBF1 frame from the stream.
inline AnyFrame read_frame(std::istream& in)
{
    std::array<unsigned char, kTbfHeaderBytes> header{};
    if (!detail::read_exact(in, header.data(), 4))
        throw FormatError("truncated TBF1 header");
    if (!std::equal(kTbfMagic.begin(), kTbfMagic.end(), header.begin(),
                    [](char a, unsigned char b) { return static_cast<unsigned char>(a) == b; }))
        throw FormatError("bad magic: not a TBF1 frame");
    if (!detail::read_exact(in, header.data() + 4, kTbfHeaderBytes - 4))
        throw FormatError("truncated TBF1 header");

    const auto code = header[4];
    if (code > 1)
        throw FormatError("unknown TBF1 dtype code " + std::to_string(code));
    const std::size_t width = detail::get_u32(header.data() + 5);
    const std::size_t height = detail::get_u32(header.data() + 9);
    const double pitch = std::bit_cast<double>(detail::get_u64(header.data() + 13));
    const std::size_t count = width * height;

    auto read_payload = [&](auto tag) {
        using V = decltype(tag);
        std::vector<unsigned char> raw(count * sizeof(V));
        if (!detail::read_exact(in, raw.data(), raw.size()))
            throw FormatError("truncated TBF1 payload: header declares " + std::to_string(width) + "x" +
                              std::to_string(height) + " values");
        std::vector<V> values(count);
        for (std::size_t i = 0; i < count; ++i) {
            if constexpr (std::is_same_v<V, double>)
                values[i] = std::bit_cast<double>(detail::get_u64(raw.data() + 8 * i));
            else
                values[i] = detail::get_u32(raw.data() + 4 * i);
        }
        return Frame<V>(width, height, pitch, std::move(values));
    };

    if (code == 0)
        return read_payload(std::uint32_t{});
    return read_payload(double{});
}

template <FrameValue T>
Frame<T> read_frame_as(std::istream& in)
{
    AnyFrame any = read_frame(in);
    if (auto* f = std::get_if<Frame<T>>(&any))
        return std::move(*f);
    throw FormatError("TBF1 frame has unexpected dtype");
}

template <FrameValue T>
void save_frame(const Frame<T>& frame, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot open " + path.string() + " for writing");
    write_frame(frame, out);
}

inline AnyFrame load_frame(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw DataError("cannot open frame file " + path.string());
    try {
        return read_frame(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

template <FrameValue T>
Frame<T> load_frame_as(const std::filesystem::path& path)
{
    AnyFrame any = load_frame(path);
    if (auto* f = std::get_if<Frame<T>>(&any))
        return std::move(*f);
    throw FormatError(path.string() + ": unexpected TBF1 dtype");
}

/// One text row per image row, comma separated, shortest round-trip formatting.
template <FrameValue T>
std::string to_csv(const Frame<T>& frame)
{
    std::string out;
    for (std::size_t y = 0; y < frame.height(); ++y) {
        for (std::size_t x = 0; x < frame.width(); ++x) {
            if (x)
                out.push_back(',');
            out += detail::format_value(frame(x, y));
        }
        if (frame.width())
            out.push_back('\n');
    }
    return out;
}

/// Linear grey-level mapping recorded next to every PGM render.
struct GrayMapping {
    double low = 0.0;
    double high = 1.0;
};

/// Writes an 8-bit binary PGM (P5), mapping [low, high] linearly onto [0, 255]
/// with clamping, plus a `<path>.txt` sidecar describing the mapping.
template <FrameValue T>
void write_pgm(const Frame<T>& frame, const std::filesystem::path& path, GrayMapping mapping)
{
    if (!(mapping.high > mapping.low))
        throw ConfigError("PGM mapping needs high > low");
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw DataError("cannot open " + path.string() + " for writing");
    out << "P5\n" << frame.width() << ' ' << frame.height() << "\n255\n";
    std::string row;
    for (std::size_t y = 0; y < frame.height(); ++y) {
        row.clear();
        for (std::size_t x = 0; x < frame.width(); ++x) {
            const double v = (static_cast<double>(frame(x, y)) - mapping.low) / (mapping.high - mapping.low);
            const double g = std::isfinite(v) ? std::clamp(std::round(255.0 * v), 0.0, 255.0) : 0.0;
            row.push_back(static_cast<char>(static_cast<unsigned char>(g)));
        }
        out.write(row.data(), static_cast<std::streamsize>(row.size()));
    }
    if (!out)
        throw DataError("failed writing " + path.string());

    std::ofstream side(path.string() + ".txt");
    side << "# linear grey mapping for " << path.filename().string() << "\n";
    side << "value_low = " << detail::format_value(mapping.low) << "\n";
    side << "value_high = " << detail::format_value(mapping.high) << "\n";
    side << "grey = round(255 * (value - value_low) / (value_high - value_low)), clamped to [0, 255]\n";
}

/// Symmetric mapping [-m, m] covering the largest absolute value (or [0,1] for an all-zero map).
template <FrameValue T>
GrayMapping symmetric_mapping(const Frame<T>& frame)
{
    double m = 0.0;
    for (T v : frame.data())
        if (std::isfinite(static_cast<double>(v)))
            m = std::max(m, std::abs(static_cast<double>(v)));
    if (m == 0.0)
        return {0.0, 1.0};
    return {-m, m};
}

template <FrameValue T>
GrayMapping range_mapping(const Frame<T>& frame)
{
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    for (T v : frame.data()) {
        const double d = static_cast<double>(v);
        if (!std::isfinite(d))
            continue;
        lo = std::min(lo, d);
        hi = std::max(hi, d);
    }
    if (!(hi > lo))
        return {std::isfinite(lo) ? lo : 0.0, (std::isfinite(lo) ? lo : 0.0) + 1.0};
    return {lo, hi};
}

// Stack manifest: a plain text file next to the per-frame TBF1 files.
//
//   TBF1-STACK 1
//   width 120
//   height 120
//   pitch_um 39
//   exposure_s 0.1
//   shots 2
//   shot 0 without_sample shot0000_beam1.tbf shot0000_beam2.tbf
//   shot 1 without_sample shot0001_beam1.tbf shot0001_beam2.tbf

inline std::string label_name(ShotLabel l)
{
    return l == ShotLabel::WithSample ? "with_sample" : "without_sample";
}

/// Writes every frame plus `manifest.txt` into `dir` (created if needed).
/// Returns the manifest path.
inline std::filesystem::path write_stack(const FramePairStack& stack, const std::filesystem::path& dir)
{
    std::filesystem::create_directories(dir);
    std::ostringstream manifest;
    manifest << "TBF1-STACK 1\n";
    manifest << "width " << stack.width() << "\n";
    manifest << "height " << stack.height() << "\n";
    manifest << "pitch_um " << detail::format_value(stack.pitch()) << "\n";
    manifest << "exposure_s " << detail::format_value(stack.exposure()) << "\n";
    manifest << "shots " << stack.size() << "\n";
    for (std::size_t i = 0; i < stack.size(); ++i) {
        std::ostringstream stem;
        stem << "shot" << std::setw(4) << std::setfill('0') << i;
        const std::string f1 = stem.str() + "_beam1.tbf";
        const std::string f2 = stem.str() + "_beam2.tbf";
        save_frame(stack[i].beam1, dir / f1);
        save_frame(stack[i].beam2, dir / f2);
        manifest << "shot " << i << ' ' << label_name(stack.labels()[i]) << ' ' << f1 << ' ' << f2 << "\n";
    }
    const auto path = dir / "manifest.txt";
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write " + path.string());
    out << manifest.str();
    return path;
}

inline FramePairStack read_stack(const std::filesystem::path& manifestPath)
{
    std::ifstream in(manifestPath);
    if (!in)
        throw DataError("cannot open stack manifest " + manifestPath.string());
    const auto dir = manifestPath.parent_path();
    auto fail = [&](std::size_t line, const std::string& what) {
        throw FormatError(manifestPath.string() + ":" + std::to_string(line) + ": " + what);
    };

    std::string line;
    std::size_t lineNo = 0;
    std::size_t width = 0, height = 0, shots = 0;
    double pitch = 0.0, exposure = 0.0;
    bool sawHeader = false;
    std::vector<FramePair<std::uint32_t>> pairs;
    std::vector<ShotLabel> labels;

    while (std::getline(in, line)) {
        ++lineNo;
        if (line.empty() || line[0] == '#')
            continue;
        std::istringstream ls(line);
        std::string key;
        ls >> key;
        if (!sawHeader) {
            int version = 0;
            if (key != "TBF1-STACK" || !(ls >> version) || version != 1)
                fail(lineNo, "not a TBF1 stack manifest");
            sawHeader = true;
            continue;
        }
        if (key == "width") {
            if (!(ls >> width))
                fail(lineNo, "bad width");
        } else if (key == "height") {
            if (!(ls >> height))
                fail(lineNo, "bad height");
        } else if (key == "pitch_um") {
            if (!(ls >> pitch))
                fail(lineNo, "bad pitch");
        } else if (key == "exposure_s") {
            if (!(ls >> exposure))
                fail(lineNo, "bad exposure");
        } else if (key == "shots") {
            if (!(ls >> shots))
                fail(lineNo, "bad shot count");
        } else if (key == "shot") {
            std::size_t index = 0;
            std::string label, f1, f2;
            if (!(ls >> index >> label >> f1 >> f2))
                fail(lineNo, "malformed shot line");
            if (index != pairs.size())
                fail(lineNo, "shots must be listed in order");
            if (label != "with_sample" && label != "without_sample")
                fail(lineNo, "unknown shot label '" + label + "'");
            auto b1 = load_frame_as<std::uint32_t>(dir / f1);
            auto b2 = load_frame_as<std::uint32_t>(dir / f2);
            if (b1.width() != width || b1.height() != height || b2.width() != width || b2.height() != height ||
                b1.pitch() != pitch || b2.pitch() != pitch)
                fail(lineNo, "frame geometry does not match the manifest");
            pairs.push_back({std::move(b1), std::move(b2)});
            labels.push_back(label == "with_sample" ? ShotLabel::WithSample : ShotLabel::WithoutSample);
        } else {
            fail(lineNo, "unknown manifest key '" + key + "'");
        }
    }
    if (!sawHeader)
        fail(lineNo, "empty manifest");
    if (pairs.size() != shots)
        fail(lineNo, "manifest declares " + std::to_string(shots) + " shots but lists " +
                         std::to_string(pairs.size()));
    return FramePairStack(std::move(pairs), exposure, std::move(labels));
}

} // namespace twinbeam
