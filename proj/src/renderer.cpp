// Copyright Contributors to the hallucam Project
// SPDX-License-Identifier: Apache-2.0
//
#include "hallucam/renderer.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <numeric>
#include <set>
#include <stdexcept>
#include <thread>

namespace hallucam {

namespace {

constexpr int kTileSize = 16;

constexpr float kShC0 = 0.28209479177387814f;
constexpr float kShC1 = 0.4886025119029199f;
constexpr float kShC2[] = {1.0925484305920792f, -1.0925484305920792f, 0.31539156525252005f, -1.0925484305920792f,
                           0.5462742152960396f};
constexpr float kShC3[] = {-0.5900435899266435f, 2.890611442640554f, -0.4570457994644658f, 0.3731763325901154f,
                           -0.4570457994644658f, 1.445305721320277f, -0.5900435899266435f};

/// exp for x <= 0 (Cody-Waite reduction, degree-6 polynomial, ~1 ulp);
/// branch-free so the compositing loop vectorises.
inline float expNonPositive(float x) {
    x = std::max(x, -87.0f);
    const int n = static_cast<int>(x * 1.44269504088896341f - 0.5f);
    const float fn = static_cast<float>(n);
    float r = x - fn * 0.693359375f;
    r = r + fn * 2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    const float e = p * r * r + r + 1.0f;
    return e * std::bit_cast<float>(static_cast<std::uint32_t>(n + 127) << 23);
}

/// Screen-space splat prepared for compositing.
struct Splat {
    double u, v;          // centre, pixels
    float ca, cb, cc;     // inverse 2D covariance (conic)
    float logThreshold;   // power below which alpha < alphaMin
    float opacity;
    float r, g, b;
    float z;
};

struct Projection {
    double u, v, z;
    double sxx, sxy, syy; // 2D covariance
    double ex, ey;        // culling half-extents
};

/// Shared by projectGaussian and the rasteriser so both cull identically.
bool projectMean(const Eigen::Vector3d &mean, const std::array<double, 6> &cw, const Eigen::Matrix3d &W,
                 const Eigen::Vector3d &t, const CameraIntrinsics &K, double opacity, const RenderSettings &s,
                 Projection &out) {
    const double z = W.row(2).dot(mean) + t.z();
    if (!(z >= K.near && z <= K.far)) {
        return false;
    }
    const double x = W.row(0).dot(mean) + t.x();
    const double y = W.row(1).dot(mean) + t.y();
    if (!(opacity >= s.alphaMin)) {
        return false;
    }
    const double invZ = 1.0 / z;
    const double u = K.cx + K.fx * x * invZ;
    const double v = K.cy + K.fy * y * invZ;

    // J = [[fx/z, 0, -fx x/z^2], [0, fy/z, -fy y/z^2]]; M = J * W (2x3).
    const double j00 = K.fx * invZ, j02 = -K.fx * x * invZ * invZ;
    const double j11 = K.fy * invZ, j12 = -K.fy * y * invZ * invZ;
    Eigen::Matrix<double, 2, 3> M;
    M.row(0) = j00 * W.row(0) + j02 * W.row(2);
    M.row(1) = j11 * W.row(1) + j12 * W.row(2);
    Eigen::Matrix3d S;
    S << cw[0], cw[1], cw[2], //
        cw[1], cw[3], cw[4],  //
        cw[2], cw[4], cw[5];
    const Eigen::Matrix2d C = M * S * M.transpose();
    const double sxx = C(0, 0) + s.dilation;
    const double syy = C(1, 1) + s.dilation;
    const double sxy = 0.5 * (C(0, 1) + C(1, 0));

    const double qCut = 2.0 * std::log(opacity / static_cast<double>(s.alphaMin));
    const double ex = std::sqrt(std::max(0.0, qCut * sxx));
    const double ey = std::sqrt(std::max(0.0, qCut * syy));
    if (u + ex < 0.0 || u - ex > K.width - 1 || v + ey < 0.0 || v - ey > K.height - 1) {
        return false;
    }
    out = Projection{u, v, z, sxx, sxy, syy, ex, ey};
    return true;
}

constexpr int kTilePixels = kTileSize * kTileSize;

struct TileAccum {
    alignas(64) std::array<float, kTilePixels> T;
    alignas(64) std::array<float, kTilePixels> cr, cg, cb, num, den;
};

struct CompositeParams {
    float alphaMax, alphaMin, tMin;
};

#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__)
#define HALLUCAM_MULTIVERSION __attribute__((target_clones("avx2", "default")))
#else
#define HALLUCAM_MULTIVERSION
#endif

/// Front-to-back compositing of one tile's depth-sorted splat list.
/// Splat-outer traversal over the rows each splat's box covers, always full
/// 16-wide rows so the inner loop has a fixed trip count; per pixel the
/// sequence of operations matches a loop over the list. Lanes outside the
/// image start with T = 0 and so never contribute. Only element-wise float
/// operations are used, so every dispatch target gives identical bits.
HALLUCAM_MULTIVERSION
void compositeTile(const Splat *splats, const Projection *projs, const std::uint32_t *entries, std::uint32_t count,
                   int x0, int y0, int tw, int th, CompositeParams cp, TileAccum &acc) {
    constexpr int S = kTileSize;
    const float alphaMax = cp.alphaMax, alphaMin = cp.alphaMin, tMin = cp.tMin;
    alignas(64) float T[kTilePixels];
    alignas(64) float cr[kTilePixels] = {}, cg[kTilePixels] = {}, cb[kTilePixels] = {};
    alignas(64) float num[kTilePixels] = {}, den[kTilePixels] = {};
    for (int ly = 0; ly < S; ++ly) {
        for (int lx = 0; lx < S; ++lx) {
            T[ly * S + lx] = (lx < tw && ly < th) ? 1.0f : 0.0f;
        }
    }
    const int tilePixels = tw * th;
    int finished = 0;
    for (std::uint32_t e = 0; e < count && finished < tilePixels; ++e) {
        const Splat &sp = splats[entries[e]];
        const Projection &pr = projs[entries[e]];
        const int ya = std::max(0, static_cast<int>(std::floor(pr.v - pr.ey)) - 1 - y0);
        const int yb = std::min(th - 1, static_cast<int>(std::ceil(pr.v + pr.ey)) + 1 - y0);
        const float ul = static_cast<float>(sp.u - x0);
        const float vl = static_cast<float>(sp.v - y0);
        const float ha = -0.5f * sp.ca;
        const float lthr = sp.logThreshold;
        const float op = sp.opacity;
        const float sr = sp.r, sg = sp.g, sb = sp.b, sz = sp.z;
        for (int ly = ya; ly <= yb; ++ly) {
            const float dy = static_cast<float>(ly) - vl;
            const float qa = -0.5f * sp.cc * dy * dy;
            const float qb = -sp.cb * dy;
            const std::size_t row = static_cast<std::size_t>(ly * S);
            float *rT = T + row;
            float *rR = cr + row;
            float *rG = cg + row;
            float *rB = cb + row;
            float *rN = num + row;
            float *rD = den + row;
            int done = 0;
            for (int lx = 0; lx < S; ++lx) {
                const float dx = static_cast<float>(lx) - ul;
                const float power = ha * dx * dx + qb * dx + qa;
                const float ex = op * expNonPositive(power);
                const float alpha = ex < alphaMax ? ex : alphaMax;
                const float t = rT[lx];
                const float live = static_cast<float>((t >= tMin) & (power >= lthr) & (alpha >= alphaMin));
                const float w = alpha * t * live;
                rR[lx] += w * sr;
                rG[lx] += w * sg;
                rB[lx] += w * sb;
                rN[lx] += w * sz;
                rD[lx] += w;
                const float tn = t * (1.0f - alpha * live);
                rT[lx] = tn;
                done += static_cast<int>(tn < tMin) & static_cast<int>(live > 0.0f);
            }
            finished += done;
        }
    }
    std::copy_n(T, kTilePixels, acc.T.data());
    std::copy_n(cr, kTilePixels, acc.cr.data());
    std::copy_n(cg, kTilePixels, acc.cg.data());
    std::copy_n(cb, kTilePixels, acc.cb.data());
    std::copy_n(num, kTilePixels, acc.num.data());
    std::copy_n(den, kTilePixels, acc.den.data());
}

std::array<double, 6> packCovariance(const Gaussian3D &g) {
    const Eigen::Matrix3d S = covarianceOf(g);
    return {S(0, 0), S(0, 1), S(0, 2), S(1, 1), S(1, 2), S(2, 2)};
}

template <typename Fn> void parallelFor(int count, unsigned threads, Fn &&fn) {
    if (threads <= 1 || count <= 1) {
        for (int i = 0; i < count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < count; i = next++) {
            fn(i);
        }
    };
    std::vector<std::jthread> pool;
    const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(count));
    pool.reserve(n - 1);
    for (unsigned k = 1; k < n; ++k) {
        pool.emplace_back(worker);
    }
    worker();
}

} // namespace

void CameraIntrinsics::validate() const {
    if (!(fx > 0.0) || !std::isfinite(fx)) {
        throw std::invalid_argument("intrinsics: fx must be positive");
    }
    if (!(fy > 0.0) || !std::isfinite(fy)) {
        throw std::invalid_argument("intrinsics: fy must be positive");
    }
    if (!std::isfinite(cx) || !std::isfinite(cy)) {
        throw std::invalid_argument("intrinsics: principal point must be finite");
    }
    if (width < 8 || height < 8) {
        throw std::invalid_argument("intrinsics: width and height must be at least 8");
    }
    if (!(near > 0.0 && near < far) || !std::isfinite(far)) {
        throw std::invalid_argument("intrinsics: require 0 < near < far");
    }
}

void SensorRig::validate() const {
    if (sensors.empty()) {
        throw std::invalid_argument("sensor rig is empty");
    }
    std::set<std::string> ids;
    for (const auto &s : sensors) {
        if (!ids.insert(s.id).second) {
            throw std::invalid_argument("sensor rig: duplicate id '" + s.id + "'");
        }
        s.intrinsics.validate();
        if (!isOrthonormal(s.bodyToCamera.linear())) {
            throw std::invalid_argument("sensor rig: extrinsic rotation of '" + s.id + "' is not orthonormal");
        }
    }
}

Eigen::Vector3f evalShColor(const ShCoeffs &sh, const Eigen::Vector3f &dir) {
    const float x = dir.x(), y = dir.y(), z = dir.z();
    const float xx = x * x, yy = y * y, zz = z * z;
    const float xy = x * y, yz = y * z, xz = x * z;
    Eigen::Vector3f c = kShC0 * sh.row(0).transpose();
    c += -kShC1 * y * sh.row(1).transpose() + kShC1 * z * sh.row(2).transpose() - kShC1 * x * sh.row(3).transpose();
    c += kShC2[0] * xy * sh.row(4).transpose() + kShC2[1] * yz * sh.row(5).transpose() +
         kShC2[2] * (2.0f * zz - xx - yy) * sh.row(6).transpose() + kShC2[3] * xz * sh.row(7).transpose() +
         kShC2[4] * (xx - yy) * sh.row(8).transpose();
    c += kShC3[0] * y * (3.0f * xx - yy) * sh.row(9).transpose() + kShC3[1] * xy * z * sh.row(10).transpose() +
         kShC3[2] * y * (4.0f * zz - xx - yy) * sh.row(11).transpose() +
         kShC3[3] * z * (2.0f * zz - 3.0f * xx - 3.0f * yy) * sh.row(12).transpose() +
         kShC3[4] * x * (4.0f * zz - xx - yy) * sh.row(13).transpose() +
         kShC3[5] * z * (xx - yy) * sh.row(14).transpose() + kShC3[6] * x * (xx - 3.0f * yy) * sh.row(15).transpose();
    return (c.array() + 0.5f).cwiseMax(0.0f).cwiseMin(1.0f);
}

std::optional<ProjectedGaussian> projectGaussian(const Gaussian3D &g, const Eigen::Isometry3d &worldToCamera,
                                                 const CameraIntrinsics &K, const RenderSettings &settings) {
    Projection p{};
    if (!projectMean(g.mean.cast<double>(), packCovariance(g), worldToCamera.linear(), worldToCamera.translation(),
                     K, g.opacity, settings, p)) {
        return std::nullopt;
    }
    ProjectedGaussian out;
    out.center = Eigen::Vector2d(p.u, p.v);
    out.cov << p.sxx, p.sxy, p.sxy, p.syy;
    out.depth = p.z;
    out.extent = Eigen::Vector2d(p.ex, p.ey);
    return out;
}

std::uint8_t quantizeChannel(float c) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(c, 0.0f, 1.0f) * 255.0f));
}

FrameRGBD toFrame(const RenderImage &image, const Pose6D &poseUsed) {
    FrameRGBD f;
    f.width = image.width;
    f.height = image.height;
    f.rgb.resize(image.color.size());
    std::transform(image.color.begin(), image.color.end(), f.rgb.begin(), quantizeChannel);
    f.depth = image.depth;
    f.poseUsed = poseUsed;
    return f;
}

SplatRenderer::SplatRenderer(const SplatScene &scene) : mScene(&scene) {
    mCovWorld.reserve(scene.size());
    for (const auto &g : scene.gaussians()) {
        mCovWorld.push_back(packCovariance(g));
    }
}

RenderImage SplatRenderer::renderLinear(const Pose6D &cameraPose, const CameraIntrinsics &K,
                                        const RenderSettings &s) const {
    K.validate();
    if (!cameraPose.position.allFinite() || !cameraPose.orientation.coeffs().allFinite() ||
        !(cameraPose.orientation.norm() > 0.0)) {
        throw std::invalid_argument("camera pose must be finite with a non-zero quaternion");
    }
    const int W = K.width;
    const int H = K.height;
    const std::size_t npix = K.pixelCount();

    RenderImage img;
    img.width = W;
    img.height = H;
    img.color.resize(npix * 3);
    img.depth.assign(npix, 0.0f);
    img.alpha.assign(npix, 0.0f);

    const Eigen::Isometry3d worldToCam = cameraPose.toIsometry().inverse();
    const Eigen::Matrix3d Wr = worldToCam.linear();
    const Eigen::Vector3d tr = worldToCam.translation();
    const Eigen::Vector3d camCenter = cameraPose.position;

    // Project and collect visible splats.
    const auto &gs = mScene->gaussians();
    std::vector<Splat> splats;
    std::vector<std::pair<double, std::uint32_t>> order;
    std::vector<Projection> projs;
    for (std::size_t i = 0; i < gs.size(); ++i) {
        const Gaussian3D &g = gs[i];
        Projection p{};
        if (!projectMean(g.mean.cast<double>(), mCovWorld[i], Wr, tr, K, g.opacity, s, p)) {
            continue;
        }
        const double det = p.sxx * p.syy - p.sxy * p.sxy;
        if (!(det > 0.0)) {
            continue; // unreachable with positive dilation
        }
        const Eigen::Vector3f dir = (g.mean.cast<double>() - camCenter).normalized().cast<float>();
        const Eigen::Vector3f rgb = evalShColor(g.sh, dir);
        Splat sp;
        sp.u = p.u;
        sp.v = p.v;
        sp.ca = static_cast<float>(p.syy / det);
        sp.cb = static_cast<float>(-p.sxy / det);
        sp.cc = static_cast<float>(p.sxx / det);
        sp.logThreshold = static_cast<float>(std::log(static_cast<double>(s.alphaMin) / g.opacity));
        sp.opacity = g.opacity;
        sp.r = rgb.x();
        sp.g = rgb.y();
        sp.b = rgb.z();
        sp.z = static_cast<float>(p.z);
        order.emplace_back(p.z, static_cast<std::uint32_t>(splats.size()));
        splats.push_back(sp);
        projs.push_back(p);
    }
    std::sort(order.begin(), order.end());

    // Bin into tiles; iterating in depth order keeps every tile list sorted.
    const int tilesX = (W + kTileSize - 1) / kTileSize;
    const int tilesY = (H + kTileSize - 1) / kTileSize;
    const int nTiles = tilesX * tilesY;
    struct TileRange {
        int x0, x1, y0, y1;
    };
    std::vector<TileRange> ranges(order.size());
    std::vector<std::uint32_t> tileCount(static_cast<std::size_t>(nTiles) + 1, 0);
    for (std::size_t k = 0; k < order.size(); ++k) {
        const Projection &p = projs[order[k].second];
        TileRange r;
        r.x0 = static_cast<int>(std::floor(std::max(0.0, p.u - p.ex))) / kTileSize;
        r.x1 = static_cast<int>(std::floor(std::min<double>(W - 1, p.u + p.ex))) / kTileSize;
        r.y0 = static_cast<int>(std::floor(std::max(0.0, p.v - p.ey))) / kTileSize;
        r.y1 = static_cast<int>(std::floor(std::min<double>(H - 1, p.v + p.ey))) / kTileSize;
        ranges[k] = r;
        for (int ty = r.y0; ty <= r.y1; ++ty) {
            for (int tx = r.x0; tx <= r.x1; ++tx) {
                ++tileCount[static_cast<std::size_t>(ty * tilesX + tx) + 1];
            }
        }
    }
    std::partial_sum(tileCount.begin(), tileCount.end(), tileCount.begin());
    std::vector<std::uint32_t> tileEntries(tileCount.back());
    {
        std::vector<std::uint32_t> cursor(tileCount.begin(), tileCount.end() - 1);
        for (std::size_t k = 0; k < order.size(); ++k) {
            const TileRange &r = ranges[k];
            for (int ty = r.y0; ty <= r.y1; ++ty) {
                for (int tx = r.x0; tx <= r.x1; ++tx) {
                    tileEntries[cursor[static_cast<std::size_t>(ty * tilesX + tx)]++] = order[k].second;
                }
            }
        }
    }

    const float bgR = s.background.x(), bgG = s.background.y(), bgB = s.background.z();
    const float alphaMax = s.alphaMax;
    const float alphaMin = s.alphaMin;
    const float tMin = s.transmittanceMin;
    const float depthAlphaMin = s.depthAlphaMin;
    const float nearF = static_cast<float>(K.near);
    const float farF = static_cast<float>(K.far);

    auto rasterTile = [&](int tile) {
        const int tx = tile % tilesX;
        const int ty = tile / tilesX;
        const std::uint32_t begin = tileCount[static_cast<std::size_t>(tile)];
        const std::uint32_t end = tileCount[static_cast<std::size_t>(tile) + 1];
        const int x0 = tx * kTileSize, x1 = std::min(W, x0 + kTileSize);
        const int y0 = ty * kTileSize, y1 = std::min(H, y0 + kTileSize);
        const int tw = x1 - x0;

        constexpr int S = kTileSize;
        TileAccum acc;
        compositeTile(splats.data(), projs.data(), tileEntries.data() + begin, end - begin, x0, y0, tw, y1 - y0,
                      CompositeParams{alphaMax, alphaMin, tMin}, acc);
        const auto &T = acc.T;
        const auto &cr = acc.cr;
        const auto &cg = acc.cg;
        const auto &cbl = acc.cb;
        const auto &num = acc.num;
        const auto &den = acc.den;
        for (int py = y0; py < y1; ++py) {
            for (int px = x0; px < x1; ++px) {
                const std::size_t k = static_cast<std::size_t>((py - y0) * S + (px - x0));
                const std::size_t idx = static_cast<std::size_t>(py) * static_cast<std::size_t>(W) +
                                        static_cast<std::size_t>(px);
                img.color[idx * 3 + 0] = cr[k] + T[k] * bgR;
                img.color[idx * 3 + 1] = cg[k] + T[k] * bgG;
                img.color[idx * 3 + 2] = cbl[k] + T[k] * bgB;
                img.alpha[idx] = 1.0f - T[k];
                img.depth[idx] = den[k] >= depthAlphaMin ? std::clamp(num[k] / den[k], nearF, farF) : 0.0f;
            }
        }
    };

    const unsigned threads = s.threads != 0 ? s.threads : std::max(1u, std::thread::hardware_concurrency());
    parallelFor(nTiles, threads, rasterTile);
    return img;
}

FrameRGBD SplatRenderer::render(const Pose6D &cameraPose, const CameraIntrinsics &K,
                                const RenderSettings &settings) const {
    return toFrame(renderLinear(cameraPose, K, settings), cameraPose);
}

std::vector<FrameRGBD> SplatRenderer::renderRig(const Pose6D &bodyPose, const SensorRig &rig,
                                                const RenderSettings &settings, std::uint32_t seq,
                                                std::uint64_t timestampNs) const {
    rig.validate();
    std::vector<FrameRGBD> frames;
    frames.reserve(rig.sensors.size());
    for (const auto &sensor : rig.sensors) {
        FrameRGBD f = render(composeCameraPose(bodyPose, sensor.bodyToCamera), sensor.intrinsics, settings);
        f.seq = seq;
        f.timestampNs = timestampNs;
        frames.push_back(std::move(f));
    }
    return frames;
}

RenderImage renderLinear(const SplatScene &scene, const Pose6D &cameraPose, const CameraIntrinsics &K,
                         const RenderSettings &settings) {
    return SplatRenderer(scene).renderLinear(cameraPose, K, settings);
}

FrameRGBD render(const SplatScene &scene, const Pose6D &cameraPose, const CameraIntrinsics &K,
                 const RenderSettings &settings) {
    return SplatRenderer(scene).render(cameraPose, K, settings);
}

std::vector<FrameRGBD> renderRig(const SplatScene &scene, const Pose6D &bodyPose, const SensorRig &rig,
                                 const RenderSettings &settings, std::uint32_t seq, std::uint64_t timestampNs) {
    return SplatRenderer(scene).renderRig(bodyPose, rig, settings, seq, timestampNs);
}

} // namespace hallucam
