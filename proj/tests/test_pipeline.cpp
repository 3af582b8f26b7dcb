#include <gtest/gtest.h>

#include <string>

#include "twinbeam/diag.hpp"
#include "twinbeam/pipeline.hpp"
#include "twinbeam/sim.hpp"

using namespace twinbeam;

namespace {

FramePairStack constant_stack(std::size_t w, std::size_t h, std::uint32_t v1, std::uint32_t v2, std::size_t shots = 3)
{
    std::vector<FramePair<std::uint32_t>> s(shots, {CountFrame(w, h, 39.0, v1), CountFrame(w, h, 39.0, v2)});
    return make_stack(s, 0.1, ShotLabel::WithoutSample);
}

double pooled_variance(const std::vector<RealFrame>& maps)
{
    std::vector<double> v;
    for (const auto& m : maps)
        v.insert(v.end(), m.data().begin(), m.data().end());
    return variance_of(v);
}

} // namespace

TEST(FlatField, GainsAndGlobalMean)
{
    std::vector<FramePair<std::uint32_t>> s;
    for (std::uint32_t k : {90u, 110u}) {
        CountFrame b1(2, 1, 39.0, std::vector<std::uint32_t>{k, 2 * k});
        s.push_back({b1, CountFrame(2, 1, 39.0, 50u)});
    }
    const FlatField f = build_flat_field(make_stack(s, 0.1, ShotLabel::WithoutSample));
    EXPECT_DOUBLE_EQ(f.meanN1, 150.0);
    EXPECT_DOUBLE_EQ(f.gain1(0, 0), 100.0 / 150.0);
    EXPECT_DOUBLE_EQ(f.gain1(1, 0), 200.0 / 150.0);
    EXPECT_DOUBLE_EQ(f.meanN2, 50.0);
    EXPECT_DOUBLE_EQ(f.gain(2)(1, 0), 1.0);
    const RealFrame c = flat_correct(s[0].beam1, f, 1);
    EXPECT_DOUBLE_EQ(c(0, 0), 135.0);
    EXPECT_DOUBLE_EQ(c(1, 0), 135.0);
    EXPECT_THROW(flat_correct(CountFrame(3, 1, 39.0), f, 1), DataError);
    EXPECT_THROW(flat_correct(s[0].beam1, f, 0), ConfigError);
}

TEST(FlatField, ZeroMeanPixelIsReported)
{
    std::vector<FramePair<std::uint32_t>> s(2, {CountFrame(3, 2, 39.0, 5u), CountFrame(3, 2, 39.0, std::vector<std::uint32_t>{1, 1, 1, 1, 0, 1})});
    try {
        build_flat_field(make_stack(s, 0.1, ShotLabel::WithoutSample));
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("(1, 1) in beam 2"), std::string::npos) << e.what();
    }
    EXPECT_THROW(build_flat_field(constant_stack(2, 2, 1, 1, 1)), DataError);
}

TEST(QeFilter, BlockMean)
{
    const RealFrame m(4, 2, 10.0, std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
    const RealFrame b = qe_filter(m, 2, FilterMode::Block);
    ASSERT_EQ(b.width(), 2u);
    ASSERT_EQ(b.height(), 1u);
    EXPECT_DOUBLE_EQ(b(0, 0), 3.5);
    EXPECT_DOUBLE_EQ(b(1, 0), 5.5);
    EXPECT_DOUBLE_EQ(b.pitch(), 20.0);
    EXPECT_THROW(qe_filter(m, 3, FilterMode::Block), ConfigError);
    EXPECT_THROW(qe_filter(m, 0, FilterMode::Sliding), ConfigError);
    EXPECT_TRUE(qe_filter(m, 1, FilterMode::Block) == m);
}

TEST(QeFilter, SlidingWindowTruncatesAtBorders)
{
    const RealFrame m(5, 1, 1.0, std::vector<double>{1, 2, 3, 4, 5});
    const RealFrame s3 = qe_filter(m, 3, FilterMode::Sliding);
    ASSERT_EQ(s3.width(), 5u);
    EXPECT_DOUBLE_EQ(s3(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(s3(2, 0), 3.0);
    EXPECT_DOUBLE_EQ(s3(4, 0), 4.5);
    // Even windows extend one pixel further back: [x - 1, x].
    const RealFrame s2 = qe_filter(m, 2, FilterMode::Sliding);
    EXPECT_DOUBLE_EQ(s2(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(s2(3, 0), 3.5);
}

TEST(AlphaMaps, NoiselessSchemesRecoverAbsorption)
{
    const FlatField flat = build_flat_field(constant_stack(8, 4, 1000, 800));
    const RegionPair rp = RegionPair::mirrored({0, 0}, 4, {4.0, 2.0});
    FramePair<std::uint32_t> shot{CountFrame(8, 4, 39.0, 900u), CountFrame(8, 4, 39.0, 800u)};

    const AlphaMap dr = alpha_direct(shot, flat, rp, 1);
    EXPECT_EQ(dr.scheme, Scheme::DR);
    EXPECT_NEAR(dr.alpha(1, 1), 0.1, 1e-12);
    const AlphaMap ssn = alpha_ssn(shot, flat, rp, 1, 2);
    EXPECT_EQ(ssn.alpha.width(), 2u);
    EXPECT_NEAR(ssn.alpha(0, 0), 0.1, 1e-12);
    const AlphaMap full = alpha_direct(shot.beam1, flat, 1);
    EXPECT_EQ(full.alpha.width(), 8u);
    EXPECT_NEAR(full.alpha(7, 3), 0.1, 1e-12);

    const FlatField wide = build_flat_field(constant_stack(16, 4, 1000, 800));
    FramePair<std::uint32_t> wshot{CountFrame(16, 4, 39.0, 1000u), CountFrame(16, 4, 39.0, 720u)};
    const RegionPair wrp = RegionPair::mirrored({0, 0}, 4, {8.0, 2.0});
    const AlphaMap dc = alpha_dc(wshot, wide, wrp, 2, {5, 0}, 3.0);
    EXPECT_EQ(dc.scheme, Scheme::DC);
    EXPECT_NEAR(dc.alpha(0, 0), 0.1, 1e-12);
    EXPECT_STREQ(scheme_name(dc.scheme), "dc");
}

TEST(AlphaMaps, DcShiftValidation)
{
    const FlatField flat = build_flat_field(constant_stack(16, 4, 100, 100));
    FramePair<std::uint32_t> shot{CountFrame(16, 4, 39.0, 100u), CountFrame(16, 4, 39.0, 100u)};
    const RegionPair rp = RegionPair::mirrored({0, 0}, 4, {8.0, 2.0});
    EXPECT_THROW(alpha_dc(shot, flat, rp, 1, {0, 0}, 1.0), ConfigError);
    EXPECT_THROW(alpha_dc(shot, flat, rp, 1, {2, 0}, 2.0), ConfigError);
    EXPECT_THROW(alpha_dc(shot, flat, rp, 1, {8, 0}, 2.0), DataError);
    EXPECT_NO_THROW(alpha_dc(shot, flat, rp, 1, {-3, 0}, 2.0));
}

TEST(AlphaMaps, CorrelatedReferenceReducesNoise)
{
    // Narrow correlations: sigma = 1 - eta, so V[ssn] ~ 2 sigma / N against V[dr] ~ 1 / N.
    TwinBeamParams p;
    p.meanPhotonsPerPixel = 1000.0;
    p.coherenceRadius = 0.039;
    p.eta1 = p.eta2 = 0.8;
    const FrameGeometry g{40, 40, 39.0, 0.1, std::nullopt};
    p.seed = 1;
    const FlatField flat = build_flat_field(generate_pair_poisson(p, g, 100));
    p.seed = 2;
    const auto shots = generate_pair_poisson(p, g, 30);
    const RegionPair rp = RegionPair::mirrored({0, 0}, 20, g.center());
    std::vector<RealFrame> dr, ssn, dc;
    for (std::size_t i = 0; i < shots.size(); ++i) {
        dr.push_back(alpha_direct(shots[i], flat, rp, 1).alpha);
        ssn.push_back(alpha_ssn(shots[i], flat, rp, 1).alpha);
        dc.push_back(alpha_dc(shots[i], flat, rp, 1, {0, -20}, 1.0).alpha);
    }
    EXPECT_NEAR(pooled_variance(dr), 1e-3, 0.1e-3);
    EXPECT_NEAR(pooled_variance(ssn), 0.4e-3, 0.04e-3);
    EXPECT_NEAR(pooled_variance(dc), 2e-3, 0.2e-3);
}

TEST(StripeSnr, MeanOfPerPixelSnr)
{
    std::vector<RealFrame> maps{RealFrame(2, 1, 1.0, std::vector<double>{1.0, 7.0}),
                                RealFrame(2, 1, 1.0, std::vector<double>{3.0, 7.0})};
    std::vector<std::string> warnings;
    ScopedWarningHandler h([&](const std::string& m) { warnings.push_back(m); });
    const StripeSnr s = snr_stripe(maps, Rect{0, 0, 2, 1});
    // pixel 0: mean 2, sd sqrt(2); pixel 1 has no variance
    EXPECT_DOUBLE_EQ(s.snr, 2.0 / std::sqrt(2.0));
    EXPECT_EQ(s.pixels, 1u);
    EXPECT_EQ(s.excluded, 1u);
    EXPECT_EQ(warnings.size(), 1u);
    EXPECT_THROW(snr_stripe(maps, Rect{1, 0, 1, 1}), NumericalError);
    EXPECT_THROW(snr_stripe(maps, Rect{0, 0, 3, 1}), DataError);
    EXPECT_THROW(snr_stripe(std::vector<RealFrame>{maps[0]}, Rect{0, 0, 1, 1}), DataError);
}
