#include <doctest.h>

#include <cmath>
#include <sstream>

#include "helpers.hpp"
#include "scoreperf/errors.hpp"
#include "scoreperf/probe.hpp"
#include "scoreperf/rng.hpp"

using namespace scoreperf;
using namespace scoreperf::test;

namespace {

// Two tight clusters at +/- `sep` along every axis, non-contiguous labels.
void two_clusters(Tensor& x, std::vector<int>& y, size_t per_class, size_t dim, double sep,
                  std::uint64_t seed) {
    x = Tensor(2 * per_class, dim);
    y.assign(2 * per_class, 0);
    Rng rng(seed);
    for (size_t i = 0; i < 2 * per_class; ++i) {
        bool second = i >= per_class;
        y[i] = second ? 7 : 3;
        for (size_t d = 0; d < dim; ++d)
            x.at(i, d) = (second ? -sep : sep) + 0.1 * rng.normal();
    }
}

} // namespace

TEST_CASE("active units counts dimensions with real variance") {
    Rng rng(5);
    size_t n = 2000, d = 16;
    Tensor x(n, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j)
            x.at(i, j) = rng.normal() * (j < 8 ? 1.0 : 0.05); // last 8 dims collapsed

    auto m = latent_metrics(x);
    CHECK(m.active_units == 8);
    CHECK_FALSE(m.has_probe);

    Tensor unit(n, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) unit.at(i, j) = rng.normal();
    auto mu = latent_metrics(unit);
    CHECK(mu.active_units == 16);
    CHECK(mu.kl_to_prior < 0.05);

    auto constant = latent_metrics(Tensor::full(50, d, 1.25));
    CHECK(constant.active_units == 0);
    CHECK(constant.kl_to_prior > 1.0); // collapsed posterior is far from the prior

    Tensor shifted(n, d);
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j < d; ++j) shifted.at(i, j) = 3.0 + rng.normal();
    CHECK(latent_metrics(shifted).kl_to_prior > 1.0);

    CHECK_THROWS_AS(latent_metrics(Tensor(1, 4)), DegenerateStatistics);
}

TEST_CASE("probe separates two clusters perfectly") {
    Tensor x;
    std::vector<int> y;
    two_clusters(x, y, 20, 4, 2.0, 11);

    Probe probe;
    auto res = probe.fit(x, y);
    CHECK(probe.trained());
    CHECK(res.accuracy == doctest::Approx(100.0));
    CHECK(res.train_accuracy == doctest::Approx(100.0));
    CHECK(res.precision == doctest::Approx(100.0));
    CHECK(res.recall == doctest::Approx(100.0));
    CHECK(res.f1 == doctest::Approx(100.0));

    // Predictions come back in the caller's label vocabulary.
    auto pred = probe.predict(x);
    CHECK(pred == y);

    auto via_metrics = latent_metrics(x, &y);
    CHECK(via_metrics.has_probe);
    CHECK(via_metrics.probe.accuracy == doctest::Approx(100.0));
}

TEST_CASE("probe is deterministic for a fixed seed") {
    Tensor x;
    std::vector<int> y;
    two_clusters(x, y, 15, 6, 1.5, 3);

    Probe a(0, 7), b(0, 7);
    auto ra = a.fit(x, y);
    auto rb = b.fit(x, y);
    CHECK(ra.accuracy == rb.accuracy);
    CHECK(ra.f1 == rb.f1);
    CHECK(a.predict(x) == b.predict(x));
    CHECK(max_abs_diff(a.params().at("probe.w"), b.params().at("probe.w")) == 0.0);
}

TEST_CASE("probe handles three classes with macro averaging") {
    Rng rng(9);
    size_t per = 15, dim = 3;
    Tensor x(3 * per, dim);
    std::vector<int> y(3 * per);
    for (size_t c = 0; c < 3; ++c)
        for (size_t i = 0; i < per; ++i) {
            size_t r = c * per + i;
            y[r] = int(c);
            for (size_t d = 0; d < dim; ++d)
                x.at(r, d) = (d == c ? 4.0 : 0.0) + 0.1 * rng.normal();
        }
    Probe probe;
    auto res = probe.fit(x, y);
    CHECK(res.accuracy == doctest::Approx(100.0));
    CHECK(res.f1 == doctest::Approx(100.0));
}

TEST_CASE("probe input validation") {
    Tensor x;
    std::vector<int> y;
    two_clusters(x, y, 10, 4, 2.0, 1);

    Probe probe;
    CHECK_THROWS_AS(probe.predict(x), StateError); // untrained

    std::vector<int> short_labels(y.begin(), y.end() - 1);
    CHECK_THROWS_AS(probe.fit(x, short_labels), ShapeError);

    std::vector<int> one_class(y.size(), 4);
    CHECK_THROWS_AS(probe.fit(x, one_class), DegenerateLabels);

    CHECK_THROWS_AS(Probe(-1), ConfigError);

    probe.fit(x, y);
    CHECK_THROWS_AS(probe.bottleneck_coords(x), StateError); // no bottleneck layer
}

TEST_CASE("two dimensional bottleneck supports plotting") {
    Tensor x;
    std::vector<int> y;
    two_clusters(x, y, 20, 8, 2.0, 17);

    Probe probe(2);
    auto res = probe.fit(x, y);
    CHECK(res.accuracy == doctest::Approx(100.0));

    Tensor coords = probe.bottleneck_coords(x);
    CHECK(coords.rows == x.rows);
    CHECK(coords.cols == 2);

    auto proj = project_2d(probe, x, y);
    REQUIRE(proj.centroids.size() == 2);
    auto [x3, y3] = proj.centroids.at(3);
    auto [x7, y7] = proj.centroids.at(7);
    double between = std::hypot(x3 - x7, y3 - y7);
    CHECK(between > 0.1); // the probe had to separate them to classify

    auto csv = projection_csv(proj);
    std::istringstream is(csv);
    std::string line;
    std::getline(is, line);
    CHECK(line == "id,x,y,label");
    size_t rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        CHECK(line.find(',') != std::string::npos);
    }
    CHECK(rows == x.rows);
    CHECK(csv.find(",3\n") != std::string::npos);
    CHECK(csv.find(",7\n") != std::string::npos);

    Probe flat;
    flat.fit(x, y);
    CHECK_THROWS_AS(project_2d(flat, x, y), StateError);
    std::vector<int> bad(y.begin(), y.end() - 2);
    CHECK_THROWS_AS(project_2d(probe, x, bad), ShapeError);
}
