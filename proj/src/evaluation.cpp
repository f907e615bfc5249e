// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/evaluation.hpp"

#include "hallucam/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/SVD>
#include <nlohmann/json.hpp>

namespace hallucam {

Trajectory::Trajectory(std::vector<TrajectorySample> samples) : mSamples(std::move(samples)) {
    if (mSamples.size() < 2) {
        throw InsufficientDataError("trajectory needs at least 2 samples, got " + std::to_string(mSamples.size()));
    }
    for (std::size_t i = 0; i < mSamples.size(); ++i) {
        const auto &s = mSamples[i];
        if (!s.position.allFinite() || !s.orientation.coeffs().allFinite()) {
            throw DataError("trajectory sample " + std::to_string(i) + " is not finite", i);
        }
        if (i > 0 && s.tNs <= mSamples[i - 1].tNs) {
            throw DataError("trajectory timestamps must be strictly increasing at sample " + std::to_string(i), i);
        }
    }
}

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
        s.remove_prefix(1);
    }
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

template <typename T> bool parseNumber(std::string_view field, T &out) {
    field = trim(field);
    if (field.empty()) {
        return false;
    }
    const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), out);
    return ec == std::errc() && ptr == field.data() + field.size();
}

} // namespace

Trajectory parseTrajectoryCsv(const std::string &text) {
    std::vector<TrajectorySample> samples;
    std::istringstream in(text);
    std::string line;
    std::size_t lineNo = 0;
    while (std::getline(in, line)) {
        ++lineNo;
        const std::string_view view = trim(line);
        if (view.empty()) {
            continue;
        }
        if (lineNo == 1 && view.starts_with("t_ns")) {
            continue;
        }
        std::vector<std::string_view> fields;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = view.find(',', start);
            fields.push_back(view.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                                : comma - start));
            if (comma == std::string_view::npos) {
                break;
            }
            start = comma + 1;
        }
        const auto fail = [&](const std::string &why) {
            throw DataError("line " + std::to_string(lineNo) + ": " + why, lineNo);
        };
        if (fields.size() != 8) {
            fail("expected 8 fields, got " + std::to_string(fields.size()));
        }
        TrajectorySample s;
        if (!parseNumber(fields[0], s.tNs)) {
            fail("bad t_ns '" + std::string(trim(fields[0])) + "'");
        }
        double v[7];
        for (int k = 0; k < 7; ++k) {
            if (!parseNumber(fields[k + 1], v[k]) || !std::isfinite(v[k])) {
                fail("bad number '" + std::string(trim(fields[k + 1])) + "'");
            }
        }
        s.position = Eigen::Vector3d(v[0], v[1], v[2]);
        Eigen::Quaterniond q(v[3], v[4], v[5], v[6]);
        if (q.norm() < 1e-12) {
            fail("zero quaternion");
        }
        s.orientation = q.normalized();
        if (!samples.empty() && s.tNs <= samples.back().tNs) {
            fail("timestamps must be strictly increasing");
        }
        samples.push_back(s);
    }
    if (samples.empty()) {
        throw DataError("trajectory has no samples", 0);
    }
    return Trajectory(std::move(samples));
}

Trajectory readTrajectoryCsv(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open trajectory '" + path.string() + "'");
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return parseTrajectoryCsv(ss.str());
}

std::string formatTrajectoryCsv(const Trajectory &traj) {
    std::string out = kTrajectoryCsvHeader;
    out += '\n';
    char buf[512];
    for (const auto &s : traj.samples()) {
        std::snprintf(buf, sizeof(buf), "%llu,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                      static_cast<unsigned long long>(s.tNs), s.position.x(), s.position.y(), s.position.z(),
                      s.orientation.w(), s.orientation.x(), s.orientation.y(), s.orientation.z());
        out += buf;
    }
    return out;
}

void writeTrajectoryCsv(const std::filesystem::path &path, const Trajectory &traj) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << formatTrajectoryCsv(traj);
    if (!out) {
        throw IoError("write failed for '" + path.string() + "'");
    }
}

std::vector<IndexPair> associate(const Trajectory &est, const Trajectory &gt, double maxDtS) {
    if (!(maxDtS > 0.0)) {
        throw std::invalid_argument("associate: max_dt must be positive");
    }
    const auto maxDt = static_cast<std::uint64_t>(std::llround(maxDtS * 1e9));
    struct Candidate {
        std::uint64_t dt;
        std::size_t i;
        std::size_t j;
    };
    std::vector<Candidate> candidates;
    std::size_t lo = 0;
    for (std::size_t i = 0; i < est.size(); ++i) {
        const std::uint64_t t = est[i].tNs;
        while (lo < gt.size() && gt[lo].tNs + maxDt < t) {
            ++lo;
        }
        for (std::size_t j = lo; j < gt.size() && gt[j].tNs <= t + maxDt; ++j) {
            const std::uint64_t dt = gt[j].tNs > t ? gt[j].tNs - t : t - gt[j].tNs;
            candidates.push_back({dt, i, j});
        }
    }
    std::sort(candidates.begin(), candidates.end(), [](const Candidate &a, const Candidate &b) {
        return std::tie(a.dt, a.i, a.j) < std::tie(b.dt, b.i, b.j);
    });
    std::vector<char> usedEst(est.size(), 0), usedGt(gt.size(), 0);
    std::vector<IndexPair> pairs;
    for (const auto &c : candidates) {
        if (usedEst[c.i] || usedGt[c.j]) {
            continue;
        }
        usedEst[c.i] = usedGt[c.j] = 1;
        pairs.emplace_back(c.i, c.j);
    }
    std::sort(pairs.begin(), pairs.end());
    if (pairs.size() < 3) {
        throw InsufficientDataError("insufficient overlap: " + std::to_string(pairs.size()) +
                                    " associated pairs (need 3)");
    }
    return pairs;
}

Similarity3 umeyamaAlign(std::span<const Eigen::Vector3d> src, std::span<const Eigen::Vector3d> dst, bool withScale) {
    if (src.size() != dst.size()) {
        throw DegeneracyError("umeyama: point sets differ in size");
    }
    const std::size_t n = src.size();
    if (n < 3) {
        throw DegeneracyError("umeyama: need at least 3 point pairs");
    }
    Eigen::Vector3d muS = Eigen::Vector3d::Zero(), muD = Eigen::Vector3d::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        muS += src[i];
        muD += dst[i];
    }
    muS /= static_cast<double>(n);
    muD /= static_cast<double>(n);

    Eigen::Matrix3d sigma = Eigen::Matrix3d::Zero();
    Eigen::Matrix3d srcScatter = Eigen::Matrix3d::Zero();
    double varS = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const Eigen::Vector3d ds = src[i] - muS;
        sigma += (dst[i] - muD) * ds.transpose();
        srcScatter += ds * ds.transpose();
        varS += ds.squaredNorm();
    }
    sigma /= static_cast<double>(n);
    srcScatter /= static_cast<double>(n);
    varS /= static_cast<double>(n);

    const Eigen::Vector3d spread = Eigen::JacobiSVD<Eigen::Matrix3d>(srcScatter).singularValues();
    if (!(spread(0) > 1e-18) || spread(1) <= 1e-10 * spread(0)) {
        throw DegeneracyError("umeyama: source points are collinear or coincident");
    }
    Eigen::JacobiSVD<Eigen::Matrix3d> svd(sigma, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::Vector3d d = svd.singularValues();
    if (!(d(0) > 0.0) || d(1) <= 1e-10 * d(0)) {
        throw DegeneracyError("umeyama: cross-covariance has rank < 2");
    }
    Eigen::Vector3d signs = Eigen::Vector3d::Ones();
    if (svd.matrixU().determinant() * svd.matrixV().determinant() < 0.0) {
        signs(2) = -1.0;
    }
    Similarity3 out;
    out.rotation = svd.matrixU() * signs.asDiagonal() * svd.matrixV().transpose();
    out.scale = withScale ? d.dot(signs) / varS : 1.0;
    out.translation = muD - out.scale * out.rotation * muS;
    return out;
}

std::string AteReport::toJson() const {
    nlohmann::json j;
    j["rmse_m"] = rmseM;
    j["max_m"] = maxM;
    j["mean_m"] = meanM;
    j["n_pairs"] = nPairs;
    nlohmann::json r = nlohmann::json::array();
    for (int a = 0; a < 3; ++a) {
        r.push_back({alignment.rotation(a, 0), alignment.rotation(a, 1), alignment.rotation(a, 2)});
    }
    j["alignment"] = {{"rotation", r},
                      {"translation", {alignment.translation.x(), alignment.translation.y(), alignment.translation.z()}},
                      {"scale", alignment.scale}};
    return j.dump(2);
}

AteReport computeAte(const Trajectory &est, const Trajectory &gt, double maxDtS, bool withScale) {
    const auto pairs = associate(est, gt, maxDtS);
    std::vector<Eigen::Vector3d> src, dst;
    src.reserve(pairs.size());
    dst.reserve(pairs.size());
    for (const auto &[i, j] : pairs) {
        src.push_back(est[i].position);
        dst.push_back(gt[j].position);
    }
    AteReport report;
    report.alignment = umeyamaAlign(src, dst, withScale);
    report.nPairs = pairs.size();
    double sumSq = 0.0, sum = 0.0;
    for (std::size_t k = 0; k < src.size(); ++k) {
        const double e = (dst[k] - report.alignment.apply(src[k])).norm();
        sumSq += e * e;
        sum += e;
        report.maxM = std::max(report.maxM, e);
    }
    const double n = static_cast<double>(src.size());
    report.rmseM = std::sqrt(sumSq / n);
    report.meanM = sum / n;
    return report;
}

} // namespace hallucam
