// SPDX-License-Identifier: Apache-2.0
#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "qforge/hwmodel.hpp"

using namespace qforge;

namespace {

ModelConfig cfg(std::size_t n, std::size_t m, std::size_t k, std::size_t d, int bits) {
    ModelConfig c;
    c.window = n;
    c.features = m;
    c.outputs = k;
    c.d_model = d;
    c.bits = bits;
    return c;
}

IntModel config_only(const ModelConfig& c) {
    IntModel im;
    im.config = c;
    return im;
}

struct TableRow {
    const char* name;
    double power_mw, latency_ms, energy_mj;
    double luts, dsps, brams;
};

// Published Spartan-7 reference rows: power (mW), latency (ms), energy
// (mJ), and absolute resource usage recovered from the percentages.
const TableRow kTable[] = {
    {"PeMS", 65.0, 1.203, 0.078, 3728.0, 18, 10.0},
    {"AirU", 64.0, 0.570, 0.036, 4278.4, 20, 9.5},
    {"UCIHAR", 65.0, 1.034, 0.067, 4291.2, 18, 10.0},
    {"WISDM", 71.0, 12.04, 0.855, 7755.2, 20, 10.0},
    {"ALFA", 62.0, 0.527, 0.033, 2844.0, 13, 10.0},
    {"SKAB", 68.0, 2.261, 0.154, 4716.0, 19, 10.0},
};

}  // namespace

TEST_CASE("energy identity reproduces the published table") {
    for (const TableRow& row : kTable) {
        const double e = energy_mj(row.power_mw, row.latency_ms);
        CHECK(std::fabs(e - row.energy_mj) <= 0.0005);
    }
    CHECK(energy_mj(65.0, 1.203) == Catch::Approx(0.0782).margin(0.0001));
    CHECK(energy_mj(71.0, 12.04) == Catch::Approx(0.855).margin(0.0005));
    CHECK(energy_mj(100.0, 0.0) == 0.0);
    CHECK(energy_mj(2 * 65.0, 1.203) == Catch::Approx(2 * energy_mj(65.0, 1.203)));
}

TEST_CASE("power model") {
    const PlatformSpec p = platform_xc7s15();
    SECTION("zero dynamic usage is the static floor") {
        CHECK(estimate_power_mw({0, 0, 0, 0}, p) == 31.0);
    }
    SECTION("monotone nondecreasing in every resource") {
        const ResourceEstimate base{1000, 5, 3, 0};
        const double p0 = estimate_power_mw(base, p);
        CHECK(estimate_power_mw({2000, 5, 3, 0}, p) >= p0);
        CHECK(estimate_power_mw({1000, 9, 3, 0}, p) >= p0);
        CHECK(estimate_power_mw({1000, 5, 7, 0}, p) >= p0);
    }
    SECTION("fit reproduces its calibration rows within the published residual") {
        for (const TableRow& row : kTable) {
            ResourceEstimate r;
            r.luts = static_cast<std::size_t>(row.luts);
            r.dsps = static_cast<std::size_t>(row.dsps);
            r.brams = static_cast<std::size_t>(row.brams);
            CHECK(std::fabs(estimate_power_mw(r, p) - row.power_mw) <= kPowerFitResidualMw);
        }
    }
}

TEST_CASE("block-memory model") {
    const PlatformSpec p = platform_xc7s15();
    SECTION("published parameter-bits example lands on 2 blocks") {
        const ModelConfig pems = cfg(24, 1, 1, 16, 6);
        CHECK(count_parameters(pems) * 6 == 19974);
        CHECK(estimate_resources(config_only(pems), p).brams == 2);
    }
    SECTION("zero bits need zero blocks") { CHECK(bram_blocks_for_bits(0, p) == 0); }
    SECTION("ceiling arithmetic") {
        CHECK(bram_blocks_for_bits(1, p) == 1);
        CHECK(bram_blocks_for_bits(18432, p) == 1);
        CHECK(bram_blocks_for_bits(18433, p) == 2);
    }
}

TEST_CASE("resource monotonicity in d_model") {
    const PlatformSpec p = platform_xc7s15();
    for (std::size_t d : {8u, 16u, 24u, 32u}) {
        const auto small = estimate_resources(config_only(cfg(24, 1, 1, d, 6)), p);
        const auto big = estimate_resources(config_only(cfg(24, 1, 1, 2 * d, 6)), p);
        CHECK(big.luts >= small.luts);
        CHECK(big.dsps >= small.dsps);
        CHECK(big.brams >= small.brams);
    }
}

TEST_CASE("cycle model") {
    SECTION("single linear stage formula: 1*2*3 + 4 = 10") {
        const ModelConfig c = cfg(4, 1, 3, 2, 8);
        const auto stages = stage_op_counts(c);
        // out_proj runs one row over d_model=2 inputs and 3 outputs
        const auto& out_stage = stages.back();
        CHECK(out_stage.first == "out_proj");
        CHECK(out_stage.second + kStageOverheadCycles == 1 * 2 * 3 + 4);
    }
    SECTION("cycles increase with n and d_model") {
        const std::uint64_t base = estimate_cycles(cfg(24, 1, 1, 16, 6));
        CHECK(estimate_cycles(cfg(32, 1, 1, 16, 6)) > base);
        CHECK(estimate_cycles(cfg(24, 1, 1, 24, 6)) > base);
    }
    SECTION("latency unit conversion anchor") {
        CHECK(latency_ms_from_cycles(120300, platform_xc7s15()) == Catch::Approx(1.203));
    }
}

TEST_CASE("deployability filter") {
    const PlatformSpec p = platform_xc7s15();
    SECTION("usage exactly at budget deploys") {
        HwEstimate est;
        est.res = {p.lut_budget, p.dsp_budget, p.bram_blocks, 0};
        check_deployable(est, p);
        CHECK(est.deployable);
        CHECK(est.reasons.empty());
    }
    SECTION("16% LUT overshoot is reported as LUT +16%") {
        HwEstimate est;
        est.res = {static_cast<std::size_t>(p.lut_budget * 1.16), 1, 1, 0};
        check_deployable(est, p);
        CHECK_FALSE(est.deployable);
        REQUIRE(est.reasons.size() == 1);
        CHECK(est.reasons[0] == "LUT +16%");
    }
    SECTION("zero usage deploys") {
        HwEstimate est;
        check_deployable(est, p);
        CHECK(est.deployable);
    }
}

TEST_CASE("the most compact config exceeds the small-fabric LUT budget by ~16%") {
    const PlatformSpec ice = platform_ice40up5k();
    const auto r = estimate_resources(config_only(cfg(24, 1, 1, 8, 4)), ice);
    CHECK(r.luts > ice.lut_budget);
    const double over = 100.0 * (static_cast<double>(r.luts) - ice.lut_budget) / ice.lut_budget;
    CHECK(over >= 12.0);
    CHECK(over <= 20.0);
    CHECK(r.dsps == ice.dsp_budget);  // capped: "exhausted"
}

TEST_CASE("a d_model=64, 8-bit design is rejected on the small fabric") {
    const PlatformSpec ice = platform_ice40up5k();
    HwEstimate est = estimate_hw(config_only(cfg(24, 1, 1, 64, 8)), ice);
    CHECK_FALSE(est.deployable);
    CHECK(est.reasons.size() >= 1);
}

TEST_CASE("platform profiles") {
    SECTION("builtins resolve") {
        CHECK(find_platform("xc7s15").lut_budget == 8000);
        CHECK(find_platform("ice40up5k").bram_blocks == 30);
        CHECK_THROWS_AS(find_platform("zynq9999"), DataError);
    }
    SECTION("json round trip and env dir lookup") {
        const auto dir = std::filesystem::temp_directory_path() / "qforge_platforms";
        std::filesystem::create_directories(dir);
        {
            std::ofstream out(dir / "toy.json");
            out << R"({"name":"toy","clock_hz":50e6,"lut_budget":1234,"dsp_budget":4,
                       "bram_blocks":6,"bram_bits_per_block":9216,"static_mw":12.5})";
        }
        ::setenv("QFORGE_PLATFORM_DIR", dir.string().c_str(), 1);
        const PlatformSpec p = find_platform("toy");
        CHECK(p.lut_budget == 1234);
        CHECK(p.clock_hz == 50e6);
        CHECK(p.lut_scale == 1.0);  // defaulted
        ::unsetenv("QFORGE_PLATFORM_DIR");
    }
}
