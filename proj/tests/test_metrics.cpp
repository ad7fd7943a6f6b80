#include <catch2/catch_amalgamated.hpp>
#include <algorithm>
#include <cmath>

#include "kpose/metrics.hpp"
#include "support/oracles.hpp"
#include "support/raster_oracles.hpp"

using namespace kpose;

namespace {

Mask random_mask(Rng& g, int w, int h, double fill) {
    Mask m(w, h);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (uniform01(g) < fill) m.at(i, j) = 1;
    return m;
}

ColorImage random_image(Rng& g, int w, int h) {
    ColorImage img(w, h);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            img.at(i, j) = Rgb{uniform01(g), uniform01(g), uniform01(g)};
    return img;
}

// Naive restatement of the silhouette loss, one explicit pass per term.
double mask_loss_oracle(const Mask& gt, const Mask& rendered) {
    const DistanceField dt = oracle::brute_distance_field(gt);
    const double n = double(gt.width) * double(gt.height);
    double sq = 0.0;
    for (int i = 0; i < gt.height; ++i)
        for (int j = 0; j < gt.width; ++j) {
            const double d = (gt.at(i, j) ? 1.0 : 0.0) - (rendered.at(i, j) ? 1.0 : 0.0);
            sq += d * d;
        }
    double spill = 0.0;
    for (int i = 0; i < gt.height; ++i)
        for (int j = 0; j < gt.width; ++j)
            if (rendered.at(i, j)) spill += dt.at(i, j);
    return sq / n + spill / n;
}

}  // namespace

TEST_CASE("mask loss hand cases") {
    Rng g(601);
    const Mask gt = random_mask(g, 24, 16, 0.4);
    CHECK(mask_loss(gt, gt) == 0.0);

    // Strictly-inside rendering: loss is exactly the pixel deficit over area.
    Mask disc(32, 32), inner(32, 32);
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j) {
            const double r = std::hypot(i - 15.5, j - 15.5);
            if (r < 12.0) disc.at(i, j) = 1;
            if (r < 8.0) inner.at(i, j) = 1;
        }
    const long deficit = disc.count() - inner.count();
    CHECK(mask_loss(disc, inner) == Catch::Approx(double(deficit) / (32.0 * 32.0)).margin(1e-15));

    // One rendered pixel at distance d outside gt: (|gt|+1)/(wh) + d/(wh).
    Mask spot(32, 32);
    spot.at(2, 29) = 1;
    double d = 1e30;
    for (int i = 0; i < 32; ++i)
        for (int j = 0; j < 32; ++j)
            if (disc.at(i, j)) d = std::min(d, std::hypot(i - 2.0, j - 29.0));
    const double expect = (double(disc.count()) + 1.0 + d) / (32.0 * 32.0);
    CHECK(mask_loss(disc, spot) == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("mask loss matches the naive oracle on random masks") {
    Rng g(607);
    for (int trial = 0; trial < 25; ++trial) {
        const Mask gt = random_mask(g, 20, 14, 0.35);
        const Mask rend = random_mask(g, 20, 14, 0.35);
        if (gt.count() == 0) continue;
        CHECK(mask_loss(gt, rend) == Catch::Approx(mask_loss_oracle(gt, rend)).margin(1e-12));
    }
    const Mask a = random_mask(g, 8, 8, 0.5);
    const Mask b = random_mask(g, 9, 8, 0.5);
    CHECK_THROWS_AS(mask_loss(a, b), ShapeMismatch);
}

TEST_CASE("pixel loss over the foreground") {
    Rng g(613);
    const int w = 18, h = 12;
    const ColorImage image = random_image(g, w, h);
    const Mask fg = random_mask(g, w, h, 0.5);
    REQUIRE(fg.count() > 0);

    CHECK(pixel_loss(image, image, fg) == 0.0);

    // A single half-unit error in one channel of one foreground pixel.
    ColorImage bumped = image;
    int fi = -1, fj = -1;
    for (int i = 0; i < h && fi < 0; ++i)
        for (int j = 0; j < w; ++j)
            if (fg.at(i, j)) { fi = i; fj = j; break; }
    bumped.at(fi, fj)[1] = image.at(fi, fj)[1] + 0.5;
    CHECK(pixel_loss(image, bumped, fg) ==
          Catch::Approx(0.5 / (3.0 * double(fg.count()))).margin(1e-15));

    // Background-only differences are invisible to the loss.
    ColorImage bg_noise = image;
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j)
            if (!fg.at(i, j)) bg_noise.at(i, j) = Rgb{0.123, 0.456, 0.789};
    CHECK(pixel_loss(image, bg_noise, fg) == 0.0);

    for (int trial = 0; trial < 25; ++trial) {
        const ColorImage a = random_image(g, w, h);
        const ColorImage b = random_image(g, w, h);
        double sum = 0.0;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j)
                if (fg.at(i, j))
                    for (int ch = 0; ch < 3; ++ch)
                        sum += std::abs(a.at(i, j)[ch] - b.at(i, j)[ch]);
        CHECK(pixel_loss(a, b, fg) ==
              Catch::Approx(sum / (3.0 * double(fg.count()))).margin(1e-12));
    }

    CHECK_THROWS_AS(pixel_loss(image, image, Mask(w, h)), EmptyForeground);
    CHECK_THROWS_AS(pixel_loss(image, random_image(g, w + 1, h), fg), ShapeMismatch);
}

TEST_CASE("total loss recomposes the weighted objective") {
    Rng g(617);

    const std::vector<CameraLosses> one{{0.3, 0.2}};
    const LossBreakdown single = total_loss(one, {1.0}, 0.05, 0.07);
    CHECK(single.total == Catch::Approx(0.3 + 0.2 + 0.05 + 0.07).margin(1e-15));

    // Equal losses under any convex weights collapse to the single-camera value.
    const std::vector<CameraLosses> twins{{0.3, 0.2}, {0.3, 0.2}};
    const LossBreakdown half = total_loss(twins, {0.5, 0.5}, 0.05, 0.07);
    CHECK(half.total == Catch::Approx(single.total).margin(1e-15));

    for (int trial = 0; trial < 50; ++trial) {
        const size_t k = 1 + uniform_index(g, 6);
        std::vector<CameraLosses> cams(k);
        std::vector<double> p(k);
        double psum = 0.0;
        for (size_t i = 0; i < k; ++i) {
            cams[i] = {uniform01(g), uniform01(g)};
            p[i] = 0.05 + uniform01(g);
            psum += p[i];
        }
        for (double& w : p) w /= psum;
        const double def = uniform01(g), lap = uniform01(g);
        const LossBreakdown got = total_loss(cams, p, def, lap);

        double oracle = def + lap;
        for (size_t i = 0; i < k; ++i) oracle += p[i] * (cams[i].mask + cams[i].pixel);
        CHECK(got.total == Catch::Approx(oracle).margin(1e-12));
        CHECK(got.total ==
              Catch::Approx(got.mask + got.pixel + got.def + got.lap).margin(1e-12));

        // Affine in each camera's loss with slope p_i.
        const size_t i = uniform_index(g, k);
        std::vector<CameraLosses> bumped = cams;
        bumped[i].mask += 1.0;
        CHECK(total_loss(bumped, p, def, lap).total - got.total ==
              Catch::Approx(p[i]).margin(1e-9));
    }

    CHECK_THROWS_AS(total_loss(one, {0.9}, 0, 0), WeightMismatch);
    CHECK_THROWS_AS(total_loss(twins, {1.0}, 0, 0), WeightMismatch);
    CHECK_THROWS_AS(total_loss({}, {}, 0, 0), WeightMismatch);
}

TEST_CASE("angular error in degrees") {
    CHECK(angular_error_deg(Mat3::identity(), Mat3::identity()) == 0.0);
    CHECK(angular_error_deg(rot_x(deg_to_rad(45.0)), Mat3::identity()) ==
          Catch::Approx(45.0).margin(1e-12));
    Rng g(619);
    for (int trial = 0; trial < 100; ++trial) {
        const Mat3 a = oracle::random_rotation(g);
        const Mat3 b = oracle::random_rotation(g);
        const double deg = angular_error_deg(a, b);
        CHECK(deg >= 0.0);
        CHECK(deg <= 180.0);
        CHECK(deg == Catch::Approx(geodesic_angle(a, b) * 180.0 / kPi).margin(1e-9));
    }
}

TEST_CASE("jaccard statistics") {
    const JaccardReport flat = jaccard_stats({0.7, 0.7, 0.7, 0.7});
    CHECK(flat.mean == Catch::Approx(0.7).margin(1e-15));
    CHECK(flat.recall == 1.0);
    CHECK(flat.decay == 0.0);

    const JaccardReport low = jaccard_stats({0.3, 0.3, 0.3, 0.3});
    CHECK(low.recall == 0.0);
    CHECK(low.decay == 0.0);

    CHECK(jaccard_stats({0.6, 0.4}).recall == 0.5);
    CHECK(jaccard_stats({0.6, 0.4}).decay == Catch::Approx(0.2).margin(1e-15));

    // Threshold comparison is strict: a value exactly at threshold is a miss.
    CHECK(jaccard_stats({0.5, 0.5}).recall == 0.0);

    // The frozen 8-frame ramp: decay averages the 2-frame head and tail.
    const std::vector<double> ramp{13.0 / 14, 12.0 / 14, 10.0 / 14, 8.0 / 14,
                                   6.0 / 14,  4.0 / 14,  2.0 / 14,  0.0};
    const JaccardReport r = jaccard_stats(ramp);
    CHECK(r.decay == Catch::Approx(23.0 / 28.0).margin(1e-12));
    CHECK(std::abs(r.decay - 0.8214) < 1e-4);
    CHECK(r.recall == Catch::Approx(4.0 / 8.0).margin(1e-15));

    // Uniform 1 -> 0 ramp over 8 frames for contrast.
    std::vector<double> lin(8);
    for (int i = 0; i < 8; ++i) lin[i] = 1.0 - i / 7.0;
    CHECK(jaccard_stats(lin).decay == Catch::Approx(6.0 / 7.0).margin(1e-12));

    // Short sequences compare first to last frame.
    CHECK(jaccard_stats({0.9, 0.5, 0.1}).decay == Catch::Approx(0.8).margin(1e-15));

    // Any non-increasing sequence has non-negative decay.
    Rng g(631);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> seq(2 + uniform_index(g, 40));
        for (double& v : seq) v = uniform01(g);
        std::sort(seq.rbegin(), seq.rend());
        CHECK(jaccard_stats(seq).decay >= 0.0);
    }

    CHECK_THROWS_AS(jaccard_stats({}), EmptySequence);
    CHECK_THROWS_AS(jaccard_stats({0.5}, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(jaccard_stats({0.5}, 1.0), std::invalid_argument);
}
