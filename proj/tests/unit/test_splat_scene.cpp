// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/errors.hpp"
#include "hallucam/splat_scene.hpp"
#include "oracles/ply_fixture.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>

#include <Eigen/Eigenvalues>

using namespace hallucam;

namespace {

fixture::RawSplat randomRaw(std::mt19937 &rng) {
    std::normal_distribution<float> n(0.0f, 1.0f);
    fixture::RawSplat r;
    for (auto &v : r.xyz) {
        v = n(rng);
    }
    for (auto &v : r.dc) {
        v = n(rng);
    }
    for (auto &v : r.rest) {
        v = 0.1f * n(rng);
    }
    r.opacity = n(rng);
    for (auto &v : r.scale) {
        v = -3.0f + 0.5f * n(rng);
    }
    for (auto &v : r.rot) {
        v = n(rng);
    }
    return r;
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

} // namespace

TEST(SplatScene, ActivationsOfZeroRecord) {
    fixture::RawSplat r;
    const SplatScene s = parseScene(fixture::makePly({r}));
    ASSERT_EQ(s.size(), 1u);
    const auto &g = s.gaussians()[0];
    EXPECT_EQ(g.scale, Eigen::Vector3f::Ones());
    EXPECT_FLOAT_EQ(g.opacity, 0.5f);
    EXPECT_FLOAT_EQ(g.rotation.w(), 1.0f);
}

TEST(SplatScene, TruncatedPayloadReportsOffset) {
    std::mt19937 rng(1);
    std::vector<fixture::RawSplat> recs;
    for (int i = 0; i < 99; ++i) {
        recs.push_back(randomRaw(rng));
    }
    fixture::PlyOptions opt;
    opt.declaredCount = 100;
    const auto bytes = fixture::makePly(recs, opt);
    try {
        parseScene(bytes);
        FAIL() << "expected truncation";
    } catch (const TruncationError &e) {
        EXPECT_EQ(e.offset(), bytes.size());
    }
}

TEST(SplatScene, PartialRecordOffsetPointsAtRecordStart) {
    std::mt19937 rng(2);
    auto bytes = fixture::makePly({randomRaw(rng), randomRaw(rng)});
    bytes.resize(bytes.size() - 10);
    try {
        parseScene(bytes);
        FAIL() << "expected truncation";
    } catch (const TruncationError &e) {
        EXPECT_EQ(e.offset(), bytes.size() + 10 - kSplatRecordFloats * 4);
    }
}

TEST(SplatScene, MissingPropertyIsNamed) {
    fixture::PlyOptions opt;
    opt.omit = "scale_1";
    try {
        parseScene(fixture::makePly({fixture::RawSplat{}}, opt));
        FAIL() << "expected format error";
    } catch (const FormatError &e) {
        EXPECT_NE(std::string(e.what()).find("scale_1"), std::string::npos);
    }
}

TEST(SplatScene, AsciiFormatRejected) {
    fixture::PlyOptions opt;
    opt.format = "ascii";
    EXPECT_THROW(parseScene(fixture::makePly({fixture::RawSplat{}}, opt)), FormatError);
}

TEST(SplatScene, NonFiniteValueNamesRecord) {
    std::mt19937 rng(3);
    std::vector<fixture::RawSplat> recs = {randomRaw(rng), randomRaw(rng), randomRaw(rng)};
    recs[2].xyz[1] = std::numeric_limits<float>::quiet_NaN();
    try {
        parseScene(fixture::makePly(recs));
        FAIL() << "expected data error";
    } catch (const DataError &e) {
        EXPECT_EQ(e.index(), 2u);
    }
}

TEST(SplatScene, ThreeRecordsMatchActivationFormulas) {
    std::mt19937 rng(4);
    std::vector<fixture::RawSplat> recs = {randomRaw(rng), randomRaw(rng), randomRaw(rng)};
    const SplatScene s = parseScene(fixture::makePly(recs));
    ASSERT_EQ(s.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto &g = s.gaussians()[i];
        const auto &r = recs[i];
        for (int k = 0; k < 3; ++k) {
            EXPECT_NEAR(g.mean[k], r.xyz[k], 1e-6);
            EXPECT_NEAR(g.scale[k], std::exp(r.scale[k]), 1e-6);
            EXPECT_NEAR(g.sh(0, k), r.dc[k], 1e-6);
            for (int j = 0; j < 15; ++j) {
                EXPECT_NEAR(g.sh(j + 1, k), r.rest[k * 15 + j], 1e-6);
            }
        }
        EXPECT_NEAR(g.opacity, sigmoid(r.opacity), 1e-6);
        const float n = std::sqrt(r.rot[0] * r.rot[0] + r.rot[1] * r.rot[1] + r.rot[2] * r.rot[2] + r.rot[3] * r.rot[3]);
        EXPECT_NEAR(g.rotation.w(), r.rot[0] / n, 1e-6);
        EXPECT_NEAR(g.rotation.x(), r.rot[1] / n, 1e-6);
        EXPECT_NEAR(g.rotation.y(), r.rot[2] / n, 1e-6);
        EXPECT_NEAR(g.rotation.z(), r.rot[3] / n, 1e-6);
        EXPECT_TRUE(s.aabb().contains(g.mean.cast<double>()));
    }
}

TEST(SplatScene, WriteReadRoundTrip) {
    std::mt19937 rng(5);
    std::vector<fixture::RawSplat> recs;
    for (int i = 0; i < 200; ++i) {
        recs.push_back(randomRaw(rng));
    }
    const SplatScene a = parseScene(fixture::makePly(recs));
    const auto path = std::filesystem::temp_directory_path() / "hallucam_roundtrip.ply";
    writeScene(path, a);
    const SplatScene b = loadScene(path);
    std::filesystem::remove(path);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const auto &x = a.gaussians()[i];
        const auto &y = b.gaussians()[i];
        EXPECT_LE((x.mean - y.mean).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LE((x.scale - y.scale).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LE(std::abs(x.opacity - y.opacity), 1e-6);
        EXPECT_LE((x.rotation.coeffs() - y.rotation.coeffs()).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_LE((x.sh - y.sh).cwiseAbs().maxCoeff(), 1e-6);
    }
}

TEST(SplatScene, MissingFileIsIoError) {
    EXPECT_THROW(loadScene("/nonexistent/scene.ply"), IoError);
}

TEST(SplatScene, ExportPointcloudFilters) {
    Gaussian3D a, b;
    a.opacity = 0.3f;
    a.mean = Eigen::Vector3f(1, 0, 0);
    b.opacity = 0.7f;
    b.mean = Eigen::Vector3f(0, 2, 0);
    const SplatScene s({a, b});
    EXPECT_EQ(exportPointcloud(s, 0.0).size(), 2u);
    const auto one = exportPointcloud(s, 0.5);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0], Eigen::Vector3d(0, 2, 0));
    EXPECT_THROW(exportPointcloud(s, 1.0), std::invalid_argument);
}

TEST(SplatScene, ExportPointcloudMatchesLinearScan) {
    SyntheticSceneOptions o;
    o.count = 1000;
    o.seed = 9;
    SplatScene base = makeSyntheticScene(o);
    std::vector<Gaussian3D> gs = base.gaussians();
    std::mt19937 rng(9);
    std::uniform_real_distribution<float> u(0.01f, 0.99f);
    for (auto &g : gs) {
        g.opacity = u(rng);
    }
    const SplatScene s(gs);
    std::size_t prev = gs.size() + 1;
    for (double th : {0.0, 0.25, 0.5, 0.75, 0.95}) {
        std::vector<Eigen::Vector3d> expect;
        for (const auto &g : gs) {
            if (g.opacity >= th) {
                expect.push_back(g.mean.cast<double>());
            }
        }
        const auto got = exportPointcloud(s, th);
        EXPECT_EQ(got, expect);
        EXPECT_LE(got.size(), prev);
        prev = got.size();
    }
}

TEST(SplatScene, CovarianceExamples) {
    Gaussian3D g;
    g.scale = Eigen::Vector3f(1, 2, 3);
    EXPECT_LE((covarianceOf(g) - Eigen::Vector3d(1, 4, 9).asDiagonal().toDenseMatrix()).norm(), 1e-9);
    g.scale = Eigen::Vector3f(1, 2, 1);
    g.rotation = Eigen::Quaternionf(Eigen::AngleAxisf(static_cast<float>(M_PI / 2), Eigen::Vector3f::UnitZ()));
    EXPECT_LE((covarianceOf(g) - Eigen::Vector3d(4, 1, 1).asDiagonal().toDenseMatrix()).norm(), 1e-6);
}

TEST(SplatScene, CovarianceSymmetricPsdAndMatchesProduct) {
    std::mt19937 rng(6);
    std::normal_distribution<double> n(0.0, 1.0);
    std::uniform_real_distribution<double> u(0.001, 2.0);
    for (int i = 0; i < 10000; ++i) {
        Gaussian3D g;
        g.scale = Eigen::Vector3f(u(rng), u(rng), u(rng));
        g.rotation = Eigen::Quaternionf(Eigen::Vector4f(n(rng), n(rng), n(rng), n(rng)).normalized());
        const Eigen::Matrix3d S = covarianceOf(g);
        EXPECT_LE((S - S.transpose()).cwiseAbs().maxCoeff(), 1e-9);
        EXPECT_GE(Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d>(S).eigenvalues().minCoeff(), -1e-12);
        if (i < 100) {
            const Eigen::Matrix3d R = g.rotation.cast<double>().normalized().toRotationMatrix();
            Eigen::Matrix3d D = Eigen::Matrix3d::Zero();
            for (int k = 0; k < 3; ++k) {
                D(k, k) = static_cast<double>(g.scale[k]) * g.scale[k];
            }
            const Eigen::Matrix3d ref = R * D * R.transpose();
            EXPECT_LE((S - ref).cwiseAbs().maxCoeff(), 1e-9);
        }
    }
}

TEST(SplatScene, SyntheticSceneIsDeterministicAndValid) {
    SyntheticSceneOptions o;
    o.count = 500;
    const SplatScene a = makeSyntheticScene(o);
    const SplatScene b = makeSyntheticScene(o);
    ASSERT_EQ(a.size(), 500u);
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.gaussians()[i].mean, b.gaussians()[i].mean);
        EXPECT_NO_THROW(a.gaussians()[i].validate());
    }
}
