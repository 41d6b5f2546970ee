#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "mena/device_sim.hpp"
#include "mena/errors.hpp"

using namespace mena;

namespace {

bool grids_identical(const CrossbarModel& a, const CrossbarModel& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
    for (int i = 0; i < a.rows(); ++i) {
        for (int j = 0; j < a.cols(); ++j) {
            if (a.cell(i, j).weight != b.cell(i, j).weight) return false;
        }
    }
    return true;
}

}  // namespace

TEST_SUITE_BEGIN("device_sim");

TEST_CASE("same seed gives bit-identical models") {
    VariabilitySpec var;
    CrossbarModel a(8, 8, var, 1);
    CrossbarModel b(8, 8, var, 1);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            CHECK(a.cell(i, j).weight == b.cell(i, j).weight);
            CHECK(a.cell(i, j).v_th == b.cell(i, j).v_th);
            CHECK(a.cell(i, j).k_update == b.cell(i, j).k_update);
        }
    }
}

TEST_CASE("zero threshold spread collapses to the mean") {
    VariabilitySpec var;
    var.v_th_sd = 0.0;
    CrossbarModel m(8, 8, var, 3);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            CHECK(m.cell(i, j).v_th == doctest::Approx(var.v_th_mean));
        }
    }
}

TEST_CASE("threshold draws respect the clip window") {
    VariabilitySpec var;
    var.v_th_clip_lo = 0.06;
    var.v_th_clip_hi = 0.40;
    CrossbarModel m(8, 8, var, 7);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            CHECK(m.cell(i, j).v_th >= 0.06);
            CHECK(m.cell(i, j).v_th <= 0.40);
        }
    }
}

TEST_CASE("fresh weights start in the low-conductance band") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 11);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            CHECK(m.cell(i, j).weight >= 0.05);
            CHECK(m.cell(i, j).weight <= 0.15);
        }
    }
}

TEST_CASE("construction rejects bad parameters") {
    VariabilitySpec var;
    CHECK_THROWS_AS(CrossbarModel(0, 8, var, 1), ConfigError);
    VariabilitySpec low_clip = var;
    low_clip.v_th_clip_lo = 0.05;  // would allow read disturb
    CHECK_THROWS_AS(CrossbarModel(8, 8, low_clip, 1), ConfigError);
    VariabilitySpec bad_adc = var;
    bad_adc.adc_bits = 0;
    CHECK_THROWS_AS(CrossbarModel(8, 8, bad_adc, 1), ConfigError);
    VariabilitySpec neg_sd = var;
    neg_sd.read_noise_sd = -0.1;
    CHECK_THROWS_AS(CrossbarModel(8, 8, neg_sd, 1), ConfigError);
}

TEST_CASE("subthreshold pulse leaves the cell untouched") {
    MemristorCell cell{0.3, 0.05, 0.5, 0.0, 1.0};
    const MemristorCell after = apply_pulse(cell, 0.03, 1.0);
    CHECK(after.weight == cell.weight);
}

TEST_CASE("overdrive update law, scalar check") {
    // 0.20 + 0.5 * (0.20 - 0.05) * 0.2 = 0.215
    MemristorCell cell{0.20, 0.05, 0.5, 0.0, 1.0};
    const MemristorCell after = apply_pulse(cell, 0.20, 0.2);
    CHECK(after.weight == doctest::Approx(0.215).epsilon(1e-12));
}

TEST_CASE("negative polarity depresses") {
    MemristorCell cell{0.50, 0.05, 0.5, 0.0, 1.0};
    const MemristorCell after = apply_pulse(cell, -0.20, 0.2);
    CHECK(after.weight == doctest::Approx(0.485).epsilon(1e-12));
}

TEST_CASE("update clips at the bounds") {
    MemristorCell cell{0.99, 0.05, 0.5, 0.0, 1.0};
    CHECK(apply_pulse(cell, 1.0, 10.0).weight == 1.0);
    cell.weight = 0.01;
    CHECK(apply_pulse(cell, -1.0, 10.0).weight == 0.0);
}

TEST_CASE("half-select write touches only the target at low amplitude") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 5);
    const CrossbarModel before = m;
    // v_delta/2 = 0.04 < 0.06 <= every v_th
    m.write_pulse({3, 4, 2.0, 0.08});
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            if (i == 3 && j == 4) continue;
            CHECK(m.cell(i, j).weight == before.cell(i, j).weight);
        }
    }
}

TEST_CASE("zero-length command clamps to the minimum pulse") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 5);
    // target threshold above amplitude: nothing anywhere may change
    const double v_th = m.cell(2, 2).v_th;
    const CrossbarModel before = m;
    m.write_pulse({2, 2, 0.0, std::min(v_th, 0.08)});
    CHECK(grids_identical(m, before));
}

TEST_CASE("soft neighbor is disturbed when the half voltage crosses it") {
    VariabilitySpec var;
    var.v_th_sd = 0.0;
    var.read_noise_sd = 0.0;
    CrossbarModel m(8, 8, var, 9);
    m.cell(0, 1).v_th = 0.055;  // below the admissible floor, by hand
    m.cell(0, 1).k_update = 0.5;
    const double w0 = m.cell(0, 1).weight;
    m.write_pulse({0, 0, 2.0, 0.12});  // neighbor sees 0.06 V
    const double expected = w0 + 0.5 * (0.06 - 0.055) * 2.0;
    CHECK(m.cell(0, 1).weight == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("write rejects out-of-range coordinates") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 5);
    CHECK_THROWS_AS(m.write_pulse({8, 0, 1.0, 0.1}), ProtocolError);
    CHECK_THROWS_AS(m.write_pulse({0, -1, 1.0, 0.1}), ProtocolError);
}

TEST_CASE("one-hot read returns the stored weight under ideal settings") {
    CrossbarModel m(8, 8, ideal_variability(), 13);
    std::vector<double> one_hot(8, 0.0);
    one_hot[2] = 1.0;
    const auto out = m.read_mac(one_hot);
    for (int y = 0; y < 8; ++y) {
        CHECK(out[static_cast<std::size_t>(y)] ==
              doctest::Approx(m.cell(2, y).weight).epsilon(1e-9));
    }
}

TEST_CASE("saturated grid under all-ones input reads the row count") {
    CrossbarModel m(8, 8, ideal_variability(), 13);
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) m.cell(i, j).weight = 1.0;
    }
    const std::vector<double> ones(8, 1.0);
    for (double v : m.read_mac(ones)) {
        CHECK(v == doctest::Approx(8.0).epsilon(1e-12));
    }
}

TEST_CASE("read validates shape and range") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 5);
    std::vector<double> short_in(7, 0.0);
    CHECK_THROWS_AS(m.read_mac(short_in), DimensionError);
    std::vector<double> bad(8, 0.0);
    bad[0] = 1.5;
    CHECK_THROWS_AS(m.read_mac(bad), RangeError);
    bad[0] = -0.1;
    CHECK_THROWS_AS(m.read_mac(bad), RangeError);
}

TEST_CASE("noisy reads stay within 4 sigma of the exact MAC") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 21);
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    std::vector<double> x(8);
    long long ok = 0, total = 0;
    for (int rep = 0; rep < 10000; ++rep) {
        for (auto& v : x) v = unif(rng);
        std::vector<double> ideal(8, 0.0);
        for (int j = 0; j < 8; ++j) {
            for (int i = 0; i < 8; ++i) {
                ideal[static_cast<std::size_t>(j)] +=
                    m.cell(i, j).weight * x[static_cast<std::size_t>(i)];
            }
        }
        const auto out = m.read_mac(x);
        for (int j = 0; j < 8; ++j) {
            ++total;
            if (std::fabs(out[static_cast<std::size_t>(j)] -
                          ideal[static_cast<std::size_t>(j)]) <=
                4.0 * m.variability().read_noise_sd) {
                ++ok;
            }
        }
    }
    CHECK(static_cast<double>(ok) / static_cast<double>(total) >= 0.999);
}

TEST_CASE("reads never move weights") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 31);
    const CrossbarModel before = m;
    std::vector<double> x(8, 0.7);
    for (int rep = 0; rep < 50; ++rep) m.read_mac(x);
    CHECK(grids_identical(m, before));
}

TEST_CASE("reset restores the fresh seeded state") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 17);
    const CrossbarModel fresh = m;
    m.write_pulse({1, 1, 5.0, 0.4});
    std::vector<double> x(8, 0.5);
    m.read_mac(x);
    CHECK_FALSE(grids_identical(m, fresh));
    m.reset();
    CHECK(grids_identical(m, fresh));
    // the noise stream restarts too
    CrossbarModel twin(8, 8, VariabilitySpec{}, 17);
    CHECK(m.read_mac(x) == twin.read_mac(x));
}

TEST_CASE("seed and command sequence fully determine the trajectory") {
    VariabilitySpec var;
    CrossbarModel a(8, 8, var, 42);
    CrossbarModel b(8, 8, var, 42);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> coord(0, 7);
    for (int step = 0; step < 500; ++step) {
        if (unif(rng) < 0.5) {
            PulseCommand cmd{coord(rng), coord(rng), unif(rng) * 4.0 - 2.0,
                             unif(rng) * 0.4};
            a.write_pulse(cmd);
            b.write_pulse(cmd);
        } else {
            std::vector<double> x(8);
            for (auto& v : x) v = unif(rng);
            CHECK(a.read_mac(x) == b.read_mac(x));
        }
    }
    CHECK(grids_identical(a, b));
}

TEST_CASE("randomized command fuzz preserves the device invariants") {
    CrossbarModel m(8, 8, VariabilitySpec{}, 77);
    std::mt19937_64 rng(123);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::uniform_int_distribution<int> coord(0, 7);

    double min_v_th = 1e9;
    for (int i = 0; i < 8; ++i) {
        for (int j = 0; j < 8; ++j) {
            min_v_th = std::min(min_v_th, m.cell(i, j).v_th);
        }
    }

    for (int step = 0; step < 10000; ++step) {
        const auto before = m.weight_grid();
        const int x = coord(rng), y = coord(rng);
        const double c = unif(rng) * 6.0 - 3.0;
        const double v = unif(rng) * 0.45;
        m.write_pulse({x, y, c, v});
        const auto after = m.weight_grid();

        for (double w : after) {
            REQUIRE(w >= 0.0);
            REQUIRE(w <= 1.0);
        }
        if (v <= min_v_th) {
            REQUIRE(before == after);  // globally subthreshold
        } else if (0.5 * v < min_v_th) {
            // half-select isolation: only the target may move
            for (int i = 0; i < 8; ++i) {
                for (int j = 0; j < 8; ++j) {
                    if (i == x && j == y) continue;
                    REQUIRE(before[static_cast<std::size_t>(i) * 8 + j] ==
                            after[static_cast<std::size_t>(i) * 8 + j]);
                }
            }
        }
    }
}

TEST_CASE("weight gain is monotone in pulse duration") {
    MemristorCell cell{0.2, 0.08, 0.4, 0.0, 1.0};
    double prev = cell.weight;
    for (double tau = 0.1; tau <= 5.0; tau += 0.1) {
        const double w = apply_pulse(cell, 0.2, tau).weight;
        CHECK(w >= prev);
        prev = w;
    }
}

TEST_CASE("weight map export carries 9 significant digits and metadata") {
    CrossbarModel m(4, 3, VariabilitySpec{}, 2);
    const std::string csv = weight_map_csv(m);
    std::istringstream is(csv);
    std::string line;
    int rows = 0;
    while (std::getline(is, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 2);
    }
    CHECK(rows == 4);

    const std::string meta = model_metadata_kv(m);
    CHECK(meta.find("seed=2") != std::string::npos);
    CHECK(meta.find("rows=4") != std::string::npos);
    CHECK(meta.find("v_th_mean=0.12") != std::string::npos);
}

TEST_SUITE_END();
