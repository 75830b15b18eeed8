#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "cqedfb/mc.hpp"
#include "cqedfb/oracle.hpp"
#include "cqedfb/rng.hpp"
#include "testref.hpp"

using namespace cqedfb;

namespace {

SystemParams two_atom_set(double lambda) {
    SystemParams p;
    p.g_mhz = 5.1;
    p.kappa_mhz = 3.7;
    p.gamma_mhz = 6.0;
    p.gamma_prime_mhz = 9.1;
    p.n_atoms = 2.0;
    const double c1n = 2.0 * p.g_mhz * p.g_mhz * p.n_atoms / (p.kappa_mhz * p.gamma_prime_mhz);
    p.epsilon_mhz = lambda * p.kappa_mhz * (1.0 + c1n);
    return p;
}

// Unit amplitude on |1 photon, 0 excited>, everything else empty.
Eigen::VectorXd one_photon_state(const SystemParams& p, int cutoff) {
    const ExcitationBasis basis(p.n_atoms, cutoff);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(basis.size());
    v(basis.index_of(1, 0)) = 1.0;
    return v;
}

}  // namespace

TEST_CASE("random streams are reproducible and decorrelated") {
    rng::Stream a(123, 7), b(123, 7), c(123, 8), d(124, 7);
    bool differ_c = false, differ_d = false;
    for (int i = 0; i < 64; ++i) {
        const auto va = a.next_u64();
        CHECK(va == b.next_u64());
        differ_c |= (va != c.next_u64());
        differ_d |= (va != d.next_u64());
    }
    CHECK(differ_c);
    CHECK(differ_d);

    rng::Stream u(5, 0);
    for (int i = 0; i < 1000; ++i) {
        const double x = u.uniform();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        const double t = u.threshold();
        CHECK(t > 0.0);
        CHECK(t <= 1.0);
    }
}

TEST_CASE("configuration validation") {
    const SystemParams p = two_atom_set(0.1);
    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 10;
    cfg.duration_ns = 600.0;

    CHECK_NOTHROW(mc::validate(p, cfg));

    auto broken = [&](auto&& tweak) {
        mc::TrajectoryConfig c = cfg;
        tweak(c);
        CHECK_THROWS_AS(mc::validate(p, c), std::invalid_argument);
    };
    broken([](auto& c) { c.n_trajectories = 0; });
    broken([](auto& c) { c.duration_ns = 0.0; });
    broken([](auto& c) { c.duration_ns = 100.0; });  // shorter than ten damping times
    broken([](auto& c) { c.excitation_cutoff = 1; });
    broken([](auto& c) { c.splitter_ratio = 1.2; });
    broken([](auto& c) { c.efficiency_start = -0.1; });
    broken([](auto& c) { c.efficiency_stop = 2.0; });
    broken([](auto& c) { c.step_ns = 0.0; });
    broken([](auto& c) { c.burn_in_ns = -1.0; });
    broken([](auto& c) {
        mc::FeedbackConfig fb;
        fb.pulse.duration_ns = 120.0;
        fb.pulse.risetime_ns = 70.0;  // ramps don't fit
        c.feedback = fb;
    });
    broken([](auto& c) {
        mc::FeedbackConfig fb;
        fb.loop_delay_ns = -1.0;
        c.feedback = fb;
    });
    broken([](auto& c) {
        // duration must also cover the feedback span
        mc::FeedbackConfig fb;
        fb.pulse.duration_ns = 150.0;
        fb.loop_delay_ns = 100.0;
        c.feedback = fb;
        c.duration_ns = 400.0;
    });

    mc::TrajectoryConfig wrong = cfg;
    wrong.initial_amplitudes = Eigen::VectorXd::Zero(3);
    CHECK_THROWS_AS(mc::run(p, wrong), std::invalid_argument);
}

TEST_CASE("empty cavity decay reproduces the exponential law") {
    // One photon, no coupling, no drive: a single cavity jump per trajectory
    // whose time is exponential with rate 2 kappa.
    SystemParams p;
    p.g_mhz = 0.0;
    p.kappa_mhz = 3.7;
    p.gamma_mhz = 6.0;
    p.gamma_prime_mhz = 9.1;
    p.n_atoms = 1.0;
    p.epsilon_mhz = 0.0;

    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 2000;
    cfg.duration_ns = 600.0;
    cfg.seed = 20240817;
    cfg.excitation_cutoff = 2;
    cfg.n_threads = 1;
    cfg.initial_amplitudes = one_photon_state(p, cfg.excitation_cutoff);

    const auto res = mc::run(p, cfg);
    REQUIRE(res.clicks.size() == cfg.n_trajectories);
    CHECK(res.n_cavity_jumps == cfg.n_trajectories);
    CHECK(res.n_atomic_jumps == 0);

    const double rate = 2.0 * angular_per_ns(p.kappa_mhz);
    std::vector<double> cdf;
    cdf.reserve(res.clicks.size());
    for (const auto& c : res.clicks) cdf.push_back(1.0 - std::exp(-rate * c.time_ns));
    std::sort(cdf.begin(), cdf.end());
    const double d = testref::ks_statistic(cdf);
    CHECK(d < 1.628 / std::sqrt(double(cdf.size())));  // 1% Kolmogorov point
}

TEST_CASE("single excitation branches between cavity and atomic decay") {
    // One photon coupled to two ground atoms with no drive.  The excitation
    // leaves through the mirror or through spontaneous emission, once.
    SystemParams p = two_atom_set(0.1);
    p.epsilon_mhz = 0.0;

    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 2000;
    cfg.duration_ns = 600.0;
    cfg.seed = 99;
    cfg.excitation_cutoff = 2;
    cfg.n_threads = 1;
    cfg.initial_amplitudes = one_photon_state(p, cfg.excitation_cutoff);

    const auto res = mc::run(p, cfg);
    CHECK(res.n_cavity_jumps + res.n_atomic_jumps == cfg.n_trajectories);

    // Escape probability from integrating the two-mode decay exactly.
    const double p_cav = 0.583329923;
    const double sigma = std::sqrt(p_cav * (1.0 - p_cav) / double(cfg.n_trajectories));
    const double observed = double(res.n_cavity_jumps) / double(cfg.n_trajectories);
    CHECK(std::fabs(observed - p_cav) <= 3.0 * sigma);

    // Every detected click is a cavity jump at full efficiency.
    CHECK(res.clicks.size() == res.n_cavity_jumps);
    CHECK(res.n_start_clicks + res.n_stop_clicks == res.clicks.size());
}

TEST_CASE("driven steady state clicks at the master-equation rate") {
    const SystemParams p = two_atom_set(0.1);

    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 3000;
    cfg.duration_ns = 600.0;
    cfg.seed = 7;
    cfg.excitation_cutoff = 3;
    cfg.n_threads = 1;

    const auto res = mc::run(p, cfg);

    const double n_mean = oracle::mean_photon_number(oracle::steady_density(p, 4));
    const double expected =
        2.0 * angular_per_ns(p.kappa_mhz) * n_mean * cfg.duration_ns * double(cfg.n_trajectories);
    const double total = double(res.clicks.size());
    // Antibunched counts fluctuate less than Poisson, so 3.5 sqrt(mean) is generous.
    CHECK(std::fabs(total - expected) <= 3.5 * std::sqrt(expected));

    SECTION("clicks arrive grouped by trajectory with ascending times") {
        for (std::size_t i = 1; i < res.clicks.size(); ++i) {
            const auto& a = res.clicks[i - 1];
            const auto& b = res.clicks[i];
            CHECK(a.trajectory_id <= b.trajectory_id);
            if (a.trajectory_id == b.trajectory_id) CHECK(a.time_ns <= b.time_ns);
        }
        for (const auto& c : res.clicks) {
            CHECK(c.time_ns >= 0.0);
            CHECK(c.time_ns <= cfg.duration_ns);
        }
    }
    SECTION("balanced splitter routes symmetrically") {
        const double n = double(res.n_start_clicks + res.n_stop_clicks);
        const double half = 0.5 * n;
        CHECK(std::fabs(double(res.n_start_clicks) - half) <= 3.0 * std::sqrt(n * 0.25));
    }
}

TEST_CASE("splitter extremes route every click to one detector") {
    const SystemParams p = two_atom_set(0.15);
    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 200;
    cfg.duration_ns = 600.0;
    cfg.seed = 3;
    cfg.n_threads = 1;

    cfg.splitter_ratio = 1.0;
    const auto all_start = mc::run(p, cfg);
    CHECK(all_start.n_stop_clicks == 0);
    CHECK(all_start.n_start_clicks == all_start.clicks.size());

    cfg.splitter_ratio = 0.0;
    const auto all_stop = mc::run(p, cfg);
    CHECK(all_stop.n_start_clicks == 0);
    CHECK(all_stop.n_stop_clicks == all_stop.clicks.size());
}

TEST_CASE("detector efficiency thins clicks without touching the dynamics") {
    const SystemParams p = two_atom_set(0.15);
    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 2000;
    cfg.duration_ns = 600.0;
    cfg.seed = 31;
    cfg.n_threads = 1;

    const auto full = mc::run(p, cfg);

    mc::TrajectoryConfig thin = cfg;
    thin.efficiency_start = 0.25;
    const auto part = mc::run(p, thin);

    // Same trajectories, same jumps; only the detection draw changes outcomes.
    CHECK(part.n_cavity_jumps == full.n_cavity_jumps);
    CHECK(part.n_atomic_jumps == full.n_atomic_jumps);

    const double n = double(full.n_start_clicks);
    const double kept = double(part.n_start_clicks);
    const double sigma = std::sqrt(n * 0.25 * 0.75);
    CHECK(std::fabs(kept - 0.25 * n) <= 4.0 * sigma);
}

TEST_CASE("results are identical for any thread count") {
    const SystemParams p = two_atom_set(0.12);
    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 40;
    cfg.duration_ns = 600.0;
    cfg.seed = 2024;
    cfg.n_threads = 1;

    const auto serial = mc::run(p, cfg);
    cfg.n_threads = 3;
    const auto threaded = mc::run(p, cfg);

    REQUIRE(serial.clicks.size() == threaded.clicks.size());
    for (std::size_t i = 0; i < serial.clicks.size(); ++i) {
        CHECK(serial.clicks[i].trajectory_id == threaded.clicks[i].trajectory_id);
        CHECK(serial.clicks[i].detector == threaded.clicks[i].detector);
        CHECK(serial.clicks[i].time_ns == threaded.clicks[i].time_ns);
    }
    CHECK(serial.n_cavity_jumps == threaded.n_cavity_jumps);
    CHECK(serial.n_atomic_jumps == threaded.n_atomic_jumps);
}

TEST_CASE("ground start burns in before recording") {
    const SystemParams p = two_atom_set(0.15);
    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 300;
    cfg.duration_ns = 600.0;
    cfg.seed = 5;
    cfg.n_threads = 1;
    cfg.ground_start = true;

    const auto res = mc::run(p, cfg);
    CHECK(res.clicks.size() > 0);
    for (const auto& c : res.clicks) {
        CHECK(c.time_ns >= 0.0);
        CHECK(c.time_ns <= cfg.duration_ns);
    }
}

TEST_CASE("feedback loop schedules pulses without disturbing bookkeeping") {
    const SystemParams p = two_atom_set(0.15);
    mc::TrajectoryConfig cfg;
    cfg.n_trajectories = 300;
    cfg.duration_ns = 600.0;
    cfg.seed = 12;
    cfg.n_threads = 1;

    mc::FeedbackConfig fb;
    fb.pulse.duration_ns = 120.0;
    fb.pulse.risetime_ns = 0.0;
    fb.pulse.intensity_step = -0.1;
    fb.loop_delay_ns = 45.0;
    fb.trigger = mc::Detector::start;
    cfg.feedback = fb;

    const auto res = mc::run(p, cfg);
    CHECK(res.clicks.size() > 0);
    for (std::size_t i = 1; i < res.clicks.size(); ++i) {
        const auto& a = res.clicks[i - 1];
        const auto& b = res.clicks[i];
        CHECK(a.trajectory_id <= b.trajectory_id);
        if (a.trajectory_id == b.trajectory_id) CHECK(a.time_ns <= b.time_ns);
    }

    // Rerunning reproduces the record bit for bit.
    const auto again = mc::run(p, cfg);
    REQUIRE(again.clicks.size() == res.clicks.size());
    for (std::size_t i = 0; i < res.clicks.size(); ++i)
        CHECK(again.clicks[i].time_ns == res.clicks[i].time_ns);
}
