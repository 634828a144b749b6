#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "iontrap/waveform.hpp"

using namespace iontrap;

namespace {

VoltageTable table() { return VoltageTable::load(std::string(IONTRAP_DATA_DIR) + "/control_voltages.csv"); }

std::size_t ch(const std::string& name) {
    const auto n = control_channel_names();
    return static_cast<std::size_t>(std::find(n.begin(), n.end(), name) - n.begin());
}

}  // namespace

TEST(Waveform, RampHtoOneChangesOnlyTwoChannels) {
    const auto t = table();
    const auto w = compile_ramp(t.get("phi_H"), t.get("phi_1"), 0.1e-3);
    ASSERT_EQ(w.n_samples(), 101u);
    for (std::size_t k = 0; k < kControlChannels; ++k) {
        const double d = w.samples(100, static_cast<Eigen::Index>(k)) - w.samples(0, static_cast<Eigen::Index>(k));
        if (k == ch("el5"))
            EXPECT_NEAR(d, -0.1, 1e-12);
        else if (k == ch("el14"))
            EXPECT_NEAR(d, -0.2, 1e-12);
        else
            EXPECT_EQ(d, 0.0);
    }
    EXPECT_NEAR(w.samples(50, static_cast<Eigen::Index>(ch("el14"))), -0.2239, 1e-12);
}

TEST(Waveform, RampIsLinear) {
    const auto t = table();
    const auto& a = t.get("phi_H");
    const auto& b = t.get("phi_0");
    const auto w = compile_ramp(a, b, 0.1e-3);
    for (std::size_t i = 0; i < w.n_samples(); ++i)
        for (std::size_t k = 0; k < kControlChannels; ++k)
            EXPECT_NEAR(w.samples(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)),
                        a.voltages[k] + (b.voltages[k] - a.voltages[k]) * (i / 100.0), 1e-15);
}

TEST(Waveform, IdenticalEndpointsGiveZeroSlew) {
    const auto t = table();
    const auto w = compile_ramp(t.get("phi_H"), t.get("phi_H"), 0.1e-3);
    EXPECT_EQ(max_slew_rate(w).overall, 0.0);
}

TEST(Waveform, RampRejectsOutOfRangeEndpoint) {
    auto a = ControlConfig::zeros("a");
    auto b = ControlConfig::zeros("b");
    b.voltages[6] = 12.0;
    try {
        compile_ramp(a, b, 1e-4);
        FAIL() << "expected RangeError";
    } catch (const RangeError& e) {
        EXPECT_EQ(e.channel(), "el7");
    }
}

TEST(Waveform, SlewRatesOfTableConfigurations) {
    const auto t = table();
    const auto s1 = max_slew_rate(compile_ramp(t.get("phi_H"), t.get("phi_1"), 0.1e-3));
    EXPECT_NEAR(s1.overall, 2000.0, 1e-9);
    EXPECT_EQ(s1.channel, ch("el14"));
    const auto s0 = max_slew_rate(compile_ramp(t.get("phi_H"), t.get("phi_0"), 0.1e-3));
    EXPECT_NEAR(s0.overall, 3000.0, 1e-9);
    EXPECT_EQ(s0.channel, ch("el21"));
    const auto s2 = max_slew_rate(compile_ramp(t.get("phi_H"), t.get("phi_2"), 0.1e-3));
    EXPECT_NEAR(s2.overall, 3000.0, 1e-9);
    EXPECT_EQ(s2.channel, ch("el23"));
}

TEST(Quantize, NearestMultiple) {
    AwgSpec awg;
    EXPECT_NEAR(quantize_value(0.0959, awg), 0.0960, 1e-15);
    EXPECT_NEAR(quantize_value(0.0959, awg) / awg.v_step, 320.0, 1e-9);
    EXPECT_NEAR(quantize_value(0.15, awg), 0.15, 1e-15);
}

TEST(Quantize, TiesGoToEven) {
    AwgSpec awg;
    awg.v_step = 0.5;  // exact binary step so the tie is exact
    EXPECT_EQ(quantize_value(0.25, awg), 0.0);
    EXPECT_EQ(quantize_value(0.75, awg), 1.0);
    EXPECT_EQ(quantize_value(-0.25, awg), 0.0);
}

TEST(Quantize, ClampsAndCounts) {
    Waveform w;
    w.samples = Eigen::MatrixXd::Constant(3, kControlChannels, 0.0);
    w.samples(1, 2) = 11.0;
    w.samples(2, 3) = -10.5;
    QuantizeReport rep;
    const auto q = quantize(w, AwgSpec{}, &rep);
    EXPECT_EQ(rep.clamped, 2u);
    EXPECT_LE(q.samples(1, 2), 10.0);
    EXPECT_GE(q.samples(2, 3), -10.0);
}

TEST(Quantize, PropertiesOnRandomWaveforms) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-10.0, 10.0);
    AwgSpec awg;
    for (int n = 0; n < 2000; ++n) {
        Waveform w;
        w.samples.resize(4, kControlChannels);
        for (Eigen::Index i = 0; i < w.samples.size(); ++i) w.samples.data()[i] = u(rng);
        const auto q = quantize(w, awg);
        const auto qq = quantize(q, awg);
        ASSERT_TRUE((q.samples.array() == qq.samples.array()).all());
        for (Eigen::Index i = 0; i < w.samples.size(); ++i) {
            ASSERT_LE(std::abs(q.samples.data()[i] - w.samples.data()[i]), awg.v_step / 2 + 1e-15);
            const double k = q.samples.data()[i] / awg.v_step;
            ASSERT_NEAR(k, std::round(k), 1e-9);
        }
    }
}

TEST(Filter, DcInputStaysConstant) {
    Waveform w;
    w.samples = Eigen::MatrixXd::Constant(11, kControlChannels, 0.37);
    for (int order : {1, 2, 3}) {
        const FilteredWaveform f(w, FilterModel{kTwoPi * 7e3, order});
        for (double t : {0.0, 3e-6, 9.5e-6, 1e-4}) EXPECT_NEAR(f.value(4, t), 0.37, 1e-15);
    }
}

TEST(Filter, FirstOrderStepResponse) {
    Waveform w;
    w.sample_period = 1e-8;
    w.samples = Eigen::MatrixXd::Ones(2, 1);
    w.samples(0, 0) = 0.0;
    w.channel_names = {"x"};
    const double wc = kTwoPi * 7e3;
    const FilteredWaveform f(w, FilterModel{wc, 1});
    // The 10 ns edge shifts the response by half a sample.
    const double t = 1.0 / wc;
    const double expect = 1.0 - std::exp(-wc * (t - 0.5e-8));
    EXPECT_NEAR(f.value(0, t), expect, 1e-6);
    EXPECT_NEAR(f.value(0, t), 0.63212, 1e-4);
}

TEST(Filter, RampLagsByOrderOverCutoff) {
    const double wc = kTwoPi * 7e3;
    for (int order : {1, 2, 3}) {
        Waveform w;
        w.channel_names = {"x"};
        w.sample_period = 1e-6;
        const std::size_t n = 5001;
        w.samples.resize(static_cast<Eigen::Index>(n), 1);
        for (std::size_t i = 0; i < n; ++i) w.samples(static_cast<Eigen::Index>(i), 0) = 0.001 * static_cast<double>(i);
        const FilteredWaveform f(w, FilterModel{wc, order});
        const double t = 4e-3, slope = 1000.0;  // V/s
        const double lag = (t * slope - f.value(0, t)) / slope;
        EXPECT_NEAR(lag, order / wc, 1e-9);
    }
}

TEST(Filter, PrecompensationRemovesRampLag) {
    for (int order : {1, 2}) {
        const FilterModel fm{kTwoPi * 7e3, order};
        Waveform w;
        w.channel_names = {"x"};
        w.sample_period = 0.1e-6;
        const std::size_t n = 201;  // 20 us ramp of 1 V, then hold
        w.samples.resize(static_cast<Eigen::Index>(n), 1);
        for (std::size_t i = 0; i < n; ++i) w.samples(static_cast<Eigen::Index>(i), 0) = static_cast<double>(i) / (n - 1);
        const FilteredWaveform plain(w, fm), comp(precompensate(w, fm), fm);
        double err_plain = 0.0, err_comp = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double t = w.time(i), want = w.samples(static_cast<Eigen::Index>(i), 0);
            err_plain = std::max(err_plain, std::abs(plain.value(0, t) - want));
            err_comp = std::max(err_comp, std::abs(comp.value(0, t) - want));
        }
        EXPECT_GT(err_plain, 0.3);
        EXPECT_LT(err_comp, 0.02 * order);
        EXPECT_NEAR(comp.value(0, w.duration() + 1e-3), 1.0, 1e-6);
    }
}

TEST(Filter, OutputStaysWithinInputBounds) {
    const auto t = table();
    Route r{{{"phi_H", 0, 0}, {"phi_1", 0.1e-3, 0.02e-3}, {"phi_H", 0.1e-3, 0}}};
    const auto c = compile_route(r, t);
    for (int order : {1, 3}) {
        const FilteredWaveform f(c.waveform, FilterModel{kTwoPi * 7e3, order});
        const auto k = static_cast<Eigen::Index>(ch("el14"));
        const double lo = c.waveform.samples.col(k).minCoeff(), hi = c.waveform.samples.col(k).maxCoeff();
        for (double s = 0; s < c.waveform.duration() + 5 / (kTwoPi * 7e3); s += 0.7e-6) {
            const double v = f.value(static_cast<std::size_t>(k), s);
            EXPECT_GE(v, lo - 1e-12);
            EXPECT_LE(v, hi + 1e-12);
        }
    }
}

TEST(Route, RoundTripDuration) {
    const auto t = table();
    Route r{{{"phi_H", 0, 0}, {"phi_1", 0.1e-3, 0.05e-3}, {"phi_H", 0.1e-3, 0.0}}};
    const auto c = compile_route(r, t);
    EXPECT_NEAR(c.waveform.duration(), 0.25e-3, 1e-15);
    EXPECT_TRUE(c.warnings.empty());
    EXPECT_EQ(c.leg_end_sample.size(), 3u);
}

TEST(Route, ScenarioThreeSpansPointSixMs) {
    const auto t = table();
    Route r{{{"phi_H", 0, 0},
             {"phi_0", 0.1e-3, 0},
             {"phi_H", 0.1e-3, 0},
             {"phi_1", 0.1e-3, 0},
             {"phi_H", 0.1e-3, 0},
             {"phi_2", 0.1e-3, 0},
             {"phi_H", 0.1e-3, 0}}};
    EXPECT_NEAR(compile_route(r, t).waveform.duration(), 0.6e-3, 1e-15);
}

TEST(Route, JoinsAreContinuous) {
    const auto t = table();
    Route r{{{"phi_H", 0, 0.01e-3}, {"phi_1", 0.1e-3, 0}, {"phi_0", 0.1e-3, 0.003e-3}}};
    const auto c = compile_route(r, t);
    const auto& s = c.waveform.samples;
    for (std::size_t leg = 0; leg < c.leg_end_sample.size(); ++leg) {
        const auto& cfg = t.get(r.legs[leg].config_name);
        for (std::size_t k = 0; k < kControlChannels; ++k)
            EXPECT_EQ(s(static_cast<Eigen::Index>(c.leg_end_sample[leg]), static_cast<Eigen::Index>(k)), cfg.voltages[k]);
    }
}

TEST(Route, OffGridDurationIsRoundedUpWithWarning) {
    const auto t = table();
    Route r{{{"phi_H", 0, 0}, {"phi_1", 0.1005e-3, 0}}};
    const auto c = compile_route(r, t);
    EXPECT_EQ(c.waveform.n_samples(), 102u);
    EXPECT_FALSE(c.warnings.empty());
}

TEST(Route, ReversalIsTimeReversal) {
    const auto t = table();
    Route r{{{"phi_H", 0, 0.004e-3}, {"phi_1", 0.1e-3, 0.05e-3}, {"phi_0", 0.037e-3, 0}, {"phi_H", 0.1e-3, 0.01e-3}}};
    const auto fwd = compile_route(r, t).waveform;
    const auto back = compile_route(r.reversed(), t).waveform;
    ASSERT_EQ(fwd.n_samples(), back.n_samples());
    EXPECT_TRUE((fwd.time_reversed().samples.array() == back.samples.array()).all());
}

TEST(Route, VoltageWeightedLegs) {
    const auto t = table();
    const auto r = voltage_weighted_route({"phi_H", "phi_1", "phi_H", "phi_H"}, t, 0.3e-3);
    ASSERT_EQ(r.legs.size(), 4u);
    EXPECT_NEAR(r.legs[1].t_playback, 0.15e-3, 1e-15);
    EXPECT_NEAR(r.legs[2].t_playback, 0.15e-3, 1e-15);
    EXPECT_NEAR(r.legs[3].t_playback, 10e-9, 1e-18);  // no change still gets one time step
    EXPECT_THROW(voltage_weighted_route({"phi_H"}, t, 1e-3), ConfigError);
}

TEST(Route, Errors) {
    const auto t = table();
    EXPECT_THROW(compile_route(Route{}, t), ConfigError);
    Route bad{{{"phi_H", 0, 0}, {"phi_7", 0.1e-3, 0}}};
    EXPECT_THROW(compile_route(bad, t), ConfigError);
}

TEST(Route, ParsesRouteFiles) {
    std::istringstream in("# round trip\nleg = phi_H, 0, 0\nleg = phi_1, 0.1, 0.05  # out\nleg = phi_H, 0.1, 0\n");
    const auto r = parse_route(in);
    ASSERT_EQ(r.legs.size(), 3u);
    EXPECT_EQ(r.legs[1].config_name, "phi_1");
    EXPECT_NEAR(r.legs[1].t_playback, 1e-4, 1e-18);
    EXPECT_NEAR(r.legs[1].dwell, 5e-5, 1e-18);
    std::istringstream bad("step = phi_H\n");
    EXPECT_THROW(parse_route(bad), ConfigError);
}
