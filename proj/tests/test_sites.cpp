#include <gtest/gtest.h>

#include <sstream>

#include "iontrap/sites.hpp"
#include "iontrap/trap.hpp"

using namespace iontrap;

namespace {

// Quartic double well along x, harmonic across.
struct DoubleWell {
    double A = 1.0 * 1.602176634e-22;  // 1 meV
    double a = 20e-6;
    double ky = 4e-12, kz = 9e-12;  // J/m^2
    double z0 = 40e-6;
    double m = mg24().mass;

    double value(const Vec3& r) const {
        const double s = r.x() * r.x() / (a * a) - 1.0;
        const double dz = r.z() - z0;
        return A * s * s + 0.5 * ky * r.y() * r.y() + 0.5 * kz * dz * dz;
    }
    Vec3 gradient(const Vec3& r) const {
        const double s = r.x() * r.x() / (a * a) - 1.0;
        return {4.0 * A * s * r.x() / (a * a), ky * r.y(), kz * (r.z() - z0)};
    }
    Mat3 hessian(const Vec3& r) const {
        Mat3 H = Mat3::Zero();
        H(0, 0) = 4.0 * A * (3.0 * r.x() * r.x() / (a * a) - 1.0) / (a * a);
        H(1, 1) = ky;
        H(2, 2) = kz;
        return H;
    }
    double mass() const { return m; }
};

static_assert(PotentialField<DoubleWell>);

// Rotated anisotropic harmonic well with known axes.
struct Tilted {
    Mat3 K;
    Vec3 c{3e-6, -2e-6, 50e-6};
    Tilted() {
        const Mat3 R = Eigen::AngleAxisd(0.4, Vec3(1, 2, 3).normalized()).toRotationMatrix();
        K = R * Vec3(1e-12, 4e-12, 9e-12).asDiagonal() * R.transpose();
    }
    double value(const Vec3& r) const { return 0.5 * (r - c).dot(K * (r - c)); }
    Vec3 gradient(const Vec3& r) const { return K * (r - c); }
    Mat3 hessian(const Vec3&) const { return K; }
    double mass() const { return mg24().mass; }
};

TrapSite site(const std::string& label, Vec3 p) {
    TrapSite s;
    s.label = label;
    s.position = p;
    return s;
}

}  // namespace

TEST(Sites, ModeAnalysisMatchesAnalyticFrequencies) {
    const Tilted f;
    const auto m = mode_analysis(f, f.c);
    const double mass = f.mass();
    EXPECT_NEAR(m.frequencies[0], std::sqrt(1e-12 / mass), 1e-9 * m.frequencies[0]);
    EXPECT_NEAR(m.frequencies[1], std::sqrt(4e-12 / mass), 1e-9 * m.frequencies[1]);
    EXPECT_NEAR(m.frequencies[2], std::sqrt(9e-12 / mass), 1e-9 * m.frequencies[2]);
    for (int i = 0; i < 3; ++i) {
        const Vec3 v = m.vectors.col(i);
        EXPECT_NEAR((f.K * v - m.eigenvalues[i] * v).norm(), 0.0, 1e-9 * 9e-12);
        EXPECT_NEAR(v.norm(), 1.0, 1e-12);
    }
}

TEST(Sites, SaddleIsNotAMinimum) {
    const DoubleWell f;
    try {
        mode_analysis(f, Vec3(0, 0, f.z0));
        FAIL();
    } catch (const NotAMinimumError& e) {
        EXPECT_LT(e.eigenvalues()[0], 0.0);
    }
}

TEST(Sites, RefineFindsTiltedMinimum) {
    const Tilted f;
    const auto r = refine_minimum(f, Vec3(8e-6, 6e-6, 44e-6), MinimizerOptions{});
    ASSERT_TRUE(r);
    EXPECT_NEAR((*r - f.c).norm(), 0.0, 1e-10);
}

TEST(Sites, FindSitesInDoubleWell) {
    const DoubleWell f;
    const SearchBox box{Vec3(-40e-6, -10e-6, 30e-6), Vec3(40e-6, 10e-6, 50e-6)};
    MinimizerOptions opt;
    opt.workers = 2;
    const auto set = find_sites(f, box, 5e-6, opt);
    ASSERT_EQ(set.sites.size(), 2u);
    EXPECT_NEAR(set.sites[0].position.x(), -f.a, 1e-10);
    EXPECT_NEAR(set.sites[1].position.x(), f.a, 1e-10);
    EXPECT_NEAR(set.sites[1].position.z(), f.z0, 1e-10);
    const double wx = std::sqrt(8.0 * f.A / (f.a * f.a) / f.m);
    const double wy = std::sqrt(f.ky / f.m), wz = std::sqrt(f.kz / f.m);
    std::vector<double> w{wx, wy, wz};
    std::sort(w.begin(), w.end());
    for (int i = 0; i < 3; ++i) EXPECT_NEAR(set.sites[0].mode_frequencies[i], w[i], 1e-6 * w[i]);
    EXPECT_EQ(set.seeds_total, 17u * 5u * 5u);
}

TEST(Sites, FindSitesIsIndependentOfWorkerCount) {
    const DoubleWell f;
    const SearchBox box{Vec3(-40e-6, -10e-6, 30e-6), Vec3(40e-6, 10e-6, 50e-6)};
    MinimizerOptions one, four;
    four.workers = 4;
    const auto a = find_sites(f, box, 7e-6, one), b = find_sites(f, box, 7e-6, four);
    ASSERT_EQ(a.sites.size(), b.sites.size());
    for (std::size_t i = 0; i < a.sites.size(); ++i) {
        EXPECT_EQ(a.sites[i].label, b.sites[i].label);
        EXPECT_EQ(a.sites[i].position, b.sites[i].position);
    }
}

TEST(Sites, SeedGridValidation) {
    EXPECT_THROW(seed_grid(SearchBox{Vec3(0, 0, -1e-6), Vec3(1e-6, 1e-6, 1e-6)}, 1e-6), DomainError);
    EXPECT_THROW(seed_grid(SearchBox{Vec3(0, 0, 1e-6), Vec3(1e-6, 1e-6, 2e-6)}, 0.0), ConfigError);
    EXPECT_EQ(seed_grid(SearchBox{Vec3(0, 0, 1e-6), Vec3(2e-6, 0, 1e-6)}, 1e-6).size(), 3u);
}

TEST(Sites, UnitCellLabels) {
    const Vec3 h(0, 0, 60e-6);
    auto at = [&](double deg, double r, double z) {
        const double a = deg * kPi / 180.0;
        return Vec3(r * std::cos(a), r * std::sin(a), z);
    };
    std::vector<TrapSite> s{site("", at(150, 30e-6, 40e-6)), site("", at(-90, 30e-6, 40e-6)),
                            site("", h), site("", at(30, 30e-6, 40e-6)), site("", at(-90, 12e-6, 40e-6))};
    label_unit_cell(s);
    EXPECT_EQ(s[2].label, "T_H");
    EXPECT_EQ(s[1].label, "T_0");
    EXPECT_EQ(s[3].label, "T_1");
    EXPECT_EQ(s[0].label, "T_2");
    EXPECT_EQ(s[4].label, "S_0");
}

TEST(Barrier, DoubleWellSaddleHeight) {
    const DoubleWell f;
    const auto a = site("L", Vec3(-f.a, 0, f.z0)), b = site("R", Vec3(f.a, 0, f.z0));
    const auto bar = barrier_between(f, a, b);
    EXPECT_NEAR(bar.height_a / f.A, 1.0, 1e-3);
    EXPECT_NEAR(bar.height_b / f.A, 1.0, 1e-3);
    EXPECT_NEAR(bar.saddle_position.x(), 0.0, 2e-6);
    EXPECT_EQ(bar.site_a, "L");
}

TEST(Barrier, CurvedPathFindsLowerSaddle) {
    // The straight line between the wells crosses a bump; the relaxed path bends around it.
    struct Bumped : DoubleWell {
        double B = 3.0 * 1.602176634e-22, w = 6e-6;
        double yc = 2e-6;  // off-axis so the string can pick a side
        double bump(const Vec3& r) const {
            const double d2 = r.x() * r.x() + (r.y() - yc) * (r.y() - yc);
            return B * std::exp(-d2 / (2 * w * w));
        }
        double value(const Vec3& r) const { return DoubleWell::value(r) + bump(r); }
        Vec3 gradient(const Vec3& r) const {
            const double e = bump(r) / (w * w);
            return DoubleWell::gradient(r) - e * Vec3(r.x(), r.y() - yc, 0.0);
        }
        Mat3 hessian(const Vec3& r) const {
            const double e = bump(r) / (w * w);
            Mat3 H = DoubleWell::hessian(r);
            const Eigen::Vector2d p(r.x(), r.y() - yc);
            H.topLeftCorner<2, 2>() += e * (p * p.transpose() / (w * w) - Eigen::Matrix2d::Identity());
            return H;
        }
    } f;
    f.ky = 0.2e-12;
    const auto a = site("L", Vec3(-f.a, 0, f.z0)), b = site("R", Vec3(f.a, 0, f.z0));
    // Straight-line maximum, for comparison.
    double straight = 0.0;
    for (int i = 0; i <= 200; ++i) straight = std::max(straight, f.value(Vec3(-f.a + 2 * f.a * i / 200.0, 0, f.z0)));
    PathOptions po;
    po.nodes = 41;
    const auto bar = barrier_between(f, a, b, po);
    EXPECT_LT(bar.height_a + f.value(a.position), straight);
    // Stationarity of the saddle estimate: gradient small compared with the bump scale.
    EXPECT_LT(f.gradient(bar.saddle_position).norm(), 0.05 * f.B / f.w);
}

TEST(Barrier, IdenticalSitesGiveZero) {
    const DoubleWell f;
    const auto a = site("L", Vec3(-f.a, 0, f.z0));
    const auto bar = barrier_between(f, a, a);
    EXPECT_EQ(bar.height_a, 0.0);
}

TEST(Sites, CsvHasOneRowPerSite) {
    SiteSet set;
    set.sites.push_back(site("T_H", Vec3(0, 0, 50e-6)));
    set.provenance = "unit test";
    std::ostringstream s;
    write_sites_csv(s, set);
    const auto out = s.str();
    EXPECT_NE(out.find("label,x_um"), std::string::npos);
    EXPECT_NE(out.find("T_H,0.000000,0.000000,50.000000"), std::string::npos);
}
