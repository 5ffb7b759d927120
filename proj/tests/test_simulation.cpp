// Implicit-Euler stepping in reduced coordinates: the chain-rule gradient
// against finite differences, Gauss-Newton PSD projection, exact one-step
// convergence on quadratic potentials, analytic free fall, dissipativity,
// handle relabeling invariance, and the penalty-energy penetration bound.

#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "anisim/deformation/handles.hpp"
#include "anisim/geometry/chamfer.hpp"
#include "anisim/simulation/simulator.hpp"

namespace ad = anisim::ad;
namespace geom = anisim::geom;
namespace deform = anisim::deform;
namespace sim = anisim::sim;
using anisim::ConfigError;
using anisim::ParseError;
using anisim::Rng;

namespace {

// Random rest cloud with a smooth softmax weight field and least-squares
// weight gradients, the same shape of data a trained checkpoint provides.
sim::FrozenFields random_fields(std::int64_t n, std::int64_t j, std::uint64_t seed,
                                double e_lo, double e_hi, bool corrected = false) {
    Rng rng(seed);
    ad::Tensor rest({n, 3});
    for (std::int64_t i = 0; i < 3 * n; ++i) rest.data()[i] = rng.uniform(-1.0, 1.0);
    ad::Tensor w({n, j});
    for (std::int64_t i = 0; i < n; ++i) {
        double norm = 0.0;
        for (std::int64_t h = 0; h < j; ++h) {
            // smooth spatial logits so the field has real structure
            const double logit = rest.at2(i, 0) * (h + 1.0) - rest.at2(i, 1) * h;
            w.data()[i * j + h] = std::exp(logit);
            norm += w.at2(i, h);
        }
        for (std::int64_t h = 0; h < j; ++h) w.data()[i * j + h] /= norm;
    }
    deform::ReducedKinematics kin = deform::build_kinematics(rest, 6);
    ad::Tensor g = deform::weight_gradients(w, kin);
    ad::Tensor e({n, 4});
    for (std::int64_t i = 0; i < 4 * n; ++i) e.data()[i] = rng.uniform(e_lo, e_hi);
    std::vector<double> volume(static_cast<std::size_t>(n), 8.0 / static_cast<double>(n));
    return sim::freeze_fields(rest, w, g, e, volume, 0.45, corrected);
}

// Single rigid handle: unit weights, no spatial variation, isotropic stiffness.
// Point pairs (p, -p) put the mass centroid exactly at the origin.
sim::FrozenFields rigid_fields(std::int64_t pairs, std::uint64_t seed, double e_iso,
                               double half_extent = 0.2, bool corrected = false) {
    Rng rng(seed);
    const std::int64_t n = 2 * pairs;
    ad::Tensor rest({n, 3});
    for (std::int64_t i = 0; i < pairs; ++i)
        for (int a = 0; a < 3; ++a) {
            const double c = rng.uniform(-half_extent, half_extent);
            rest.data()[3 * (2 * i) + a] = c;
            rest.data()[3 * (2 * i + 1) + a] = -c;
        }
    ad::Tensor w = ad::Tensor::full({n, 1}, 1.0);
    ad::Tensor g({n, 1, 3});
    ad::Tensor e({n, 4});
    for (std::int64_t i = 0; i < n; ++i) e.data()[4 * i] = e_iso;
    const double side = 2.0 * half_extent;
    std::vector<double> volume(static_cast<std::size_t>(n),
                               side * side * side / static_cast<double>(n));
    return sim::freeze_fields(rest, w, g, e, volume, 0.45, corrected);
}

ad::Tensor small_pose(std::int64_t j, std::uint64_t seed, double quat_noise, double trans_noise) {
    Rng rng(seed);
    ad::Tensor z = sim::identity_coordinates(j);
    for (std::int64_t r = 0; r < j; ++r)
        for (int c = 0; c < 7; ++c)
            z.data()[7 * r + c] += (c < 4 ? quat_noise : trans_noise) * rng.normal();
    return z;
}

}  // namespace

TEST_CASE("reduced positions agree with the taped handle blend") {
    sim::FrozenFields f = random_fields(25, 3, 31, 500.0, 2000.0);
    ad::Tensor z = small_pose(3, 32, 0.3, 0.5);

    ad::Tensor direct = sim::reduced_positions(f, z);
    ad::Tensor frames = ad::reshape(z, {1, 3, 7});
    auto [rot, trans] = deform::frame_transforms(frames, 0);
    ad::Tensor taped = ad::blend_apply(f.w, rot, trans, f.rest);
    REQUIRE(direct.same_shape(taped));
    for (std::int64_t i = 0; i < direct.numel(); ++i)
        CHECK(direct[i] == Catch::Approx(taped[i]).margin(1e-13));
}

TEST_CASE("reduced gradient matches finite differences of the potential") {
    sim::FrozenFields f = random_fields(40, 2, 33, 500.0, 3000.0);
    sim::SimConfig cfg;
    cfg.dt = 1.0 / 60.0;
    cfg.gravity = {0.0, 0.0, -9.8};
    sim::ForceSpec push;
    push.points = {0, 3, 7};
    push.force = {2.0, 0.0, 1.0};
    cfg.forces.push_back(push);
    sim::BoundarySpec pin;
    pin.points = {1, 5};
    pin.stiffness = 50.0;
    pin.targets = ad::Tensor({2, 3});
    for (std::int64_t i = 0; i < 6; ++i) pin.targets.data()[i] = 0.1 * (double)(i + 1);
    cfg.boundaries.push_back(pin);
    cfg.floor.enabled = true;
    cfg.floor.height = -0.2;  // some points start below: active penalty
    cfg.floor.stiffness = 200.0;

    sim::SimState state = sim::init_state(f);
    Rng vr(34);
    for (std::int64_t i = 0; i < state.v.numel(); ++i) state.v.data()[i] = 0.3 * vr.normal();
    ad::Tensor z = small_pose(2, 35, 0.1, 0.1);

    sim::ReducedSystem sys = sim::reduced_system(f, cfg, state, z, cfg.dt);
    CHECK(sys.value.total() ==
          Catch::Approx(sim::incremental_potential(f, cfg, state, z, cfg.dt).total())
              .epsilon(1e-14));

    for (std::int64_t d = 0; d < 14; ++d) {
        auto probe = [&](double delta) {
            ad::Tensor zp(z.shape(), z.vec());
            zp.data()[d] += delta;
            return sim::incremental_potential(f, cfg, state, zp, cfg.dt).total();
        };
        const double h = 1e-6 * std::max(1.0, std::abs(z[d]));
        const double fd = (probe(h) - probe(-h)) / (2.0 * h);
        INFO("dof " << d << " analytic " << sys.grad[d] << " fd " << fd);
        CHECK(std::abs(sys.grad[d] - fd) <=
              1e-4 * std::max({std::abs(fd), std::abs(sys.grad[d]), 1e-4}));
    }
}

TEST_CASE("projected reduced Hessian is positive semidefinite") {
    sim::FrozenFields f = random_fields(30, 2, 36, 1000.0, 8000.0);
    sim::SimConfig cfg;
    cfg.gravity = {0.0, 0.0, -9.8};
    sim::SimState state = sim::init_state(f);
    // a strongly deformed pose drives the raw stress Hessian indefinite
    ad::Tensor z = small_pose(2, 37, 0.6, 0.8);

    sim::ReducedSystem sys = sim::reduced_system(f, cfg, state, z, cfg.dt);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sys.hess);
    const double scale = std::max(1.0, sys.hess.diagonal().cwiseAbs().maxCoeff());
    CHECK(es.eigenvalues().minCoeff() >= -1e-10 * scale);
}

TEST_CASE("quadratic potential converges in exactly one Newton iteration") {
    // all stiffness zero, inertia and gravity only, centroid at the origin:
    // the first step is a pure translation, on which the potential really is
    // quadratic, so Newton lands on the minimizer immediately
    sim::FrozenFields f = rigid_fields(20, 38, 0.0);
    sim::SimConfig cfg;
    cfg.dt = 1.0 / 60.0;
    cfg.gravity = {0.0, 0.0, -9.8};

    sim::SimState state = sim::init_state(f);
    sim::StepDiag diag = sim::newton_step(f, cfg, state, cfg.dt);
    CHECK(diag.iters == 1);
    CHECK(diag.residual <= cfg.newton.tol);
    CHECK(!diag.stalled);
    // and the accepted state is the ballistic update
    const double dz = cfg.dt * cfg.dt * -9.8;
    for (std::int64_t i = 0; i < f.num_points(); ++i)
        CHECK(state.x.at2(i, 2) == Catch::Approx(f.rest.at2(i, 2) + dz).margin(1e-12));
}

TEST_CASE("free fall tracks the analytic arc") {
    sim::FrozenFields f = rigid_fields(30, 39, 1e4);
    sim::SimConfig cfg;
    cfg.dt = 1.0 / 30.0;
    cfg.num_frames = 30;
    cfg.substeps = 8;
    cfg.gravity = {0.0, 0.0, -9.8};

    sim::SimResult result = sim::simulate(f, cfg);
    REQUIRE(!result.aborted);
    REQUIRE(result.trajectory.size() == 30);

    const std::int64_t n = f.num_points();
    auto centroid_z = [&](const ad::Tensor& x) {
        double c = 0.0;
        for (std::int64_t i = 0; i < n; ++i) c += x.at2(i, 2);
        return c / static_cast<double>(n);
    };
    const double t_end = static_cast<double>(cfg.num_frames) * cfg.dt;
    const double expected = -0.5 * 9.8 * t_end * t_end;
    const double got = centroid_z(result.trajectory.back());
    CHECK(std::abs(got - expected) <= 0.01 * std::abs(expected));
}

TEST_CASE("corrected form holds rest exactly with no forcing") {
    sim::FrozenFields f = random_fields(40, 2, 40, 2000.0, 2000.0, true);
    sim::SimConfig cfg;
    cfg.num_frames = 5;

    sim::SimState init = sim::init_state(f);
    sim::SimResult result = sim::simulate(f, cfg);
    REQUIRE(!result.aborted);
    for (const auto& frame : result.trajectory)
        for (std::int64_t i = 0; i < frame.numel(); ++i) CHECK(frame[i] == init.x[i]);
    for (const auto& rec : result.diagnostics) CHECK(rec.iters == 0);
}

TEST_CASE("rest-stress drift of the uncorrected form stays small on a split field") {
    // two separated clusters, one handle each: hard weight split, gradients
    // confined to the gap, so the uniform rest stress has almost nothing to
    // pull on
    const std::int64_t half = 60, n = 2 * half;
    Rng rng(41);
    ad::Tensor rest({n, 3});
    for (std::int64_t i = 0; i < n; ++i) {
        const double ox = i < half ? -1.0 : 0.25;
        rest.data()[3 * i] = ox + rng.uniform(0.0, 0.75);
        rest.data()[3 * i + 1] = rng.uniform(0.0, 0.75);
        rest.data()[3 * i + 2] = rng.uniform(0.0, 0.75);
    }
    ad::Tensor w({n, 2});
    for (std::int64_t i = 0; i < n; ++i) {
        w.data()[2 * i] = i < half ? 1.0 : 0.0;
        w.data()[2 * i + 1] = i < half ? 0.0 : 1.0;
    }
    deform::ReducedKinematics kin = deform::build_kinematics(rest, 6);
    ad::Tensor g = deform::weight_gradients(w, kin);
    ad::Tensor e({n, 4});
    for (std::int64_t i = 0; i < n; ++i) e.data()[4 * i] = 1e4;
    std::vector<double> volume(static_cast<std::size_t>(n), 2.0 * 0.422 / n);
    sim::FrozenFields f =
        sim::freeze_fields(rest, w, g, e, volume, 0.45, false);

    sim::SimConfig cfg;
    cfg.num_frames = 50;
    sim::SimState init = sim::init_state(f);
    sim::SimResult result = sim::simulate(f, cfg);
    REQUIRE(!result.aborted);

    const double diag_len = std::sqrt(geom::bbox_diag_sq(rest));
    double drift = 0.0;
    for (std::int64_t i = 0; i < init.x.numel(); ++i)
        drift = std::max(drift, std::abs(result.trajectory.back()[i] - init.x[i]));
    CHECK(drift <= 1e-3 * diag_len);
}

TEST_CASE("huge dt reduces the step to elastic equilibrium") {
    sim::FrozenFields f = random_fields(30, 2, 42, 1000.0, 1000.0, true);
    sim::SimConfig cfg;
    cfg.dt = 1e9;
    cfg.newton.max_iters = 80;

    sim::SimState state = sim::init_state(f);
    state.z.data()[7 + 3] = 0.15;  // twist the second handle off rest
    state.z.data()[7] = std::sqrt(1.0 - 0.15 * 0.15);
    state.x = sim::reduced_positions(f, state.z);
    const double before =
        sim::incremental_potential(f, cfg, state, state.z, cfg.dt).elastic;

    sim::StepDiag diag = sim::newton_step(f, cfg, state, cfg.dt);
    CHECK(diag.residual <= cfg.newton.tol);
    CHECK(diag.energy.inertia <= 1e-10);
    CHECK(diag.energy.elastic < before);
}

TEST_CASE("floor penalty only fires when enabled and penetrating") {
    sim::FrozenFields f = rigid_fields(10, 43, 0.0);
    sim::SimConfig cfg;
    cfg.floor.enabled = false;
    cfg.floor.height = 10.0;  // everything is far below this
    cfg.floor.stiffness = 1e4;
    sim::SimState state = sim::init_state(f);
    CHECK(sim::incremental_potential(f, cfg, state, state.z, cfg.dt).floor == 0.0);

    cfg.floor.enabled = true;
    CHECK(sim::incremental_potential(f, cfg, state, state.z, cfg.dt).floor > 0.0);

    cfg.floor.height = -10.0;  // nothing reaches down here
    CHECK(sim::incremental_potential(f, cfg, state, state.z, cfg.dt).floor == 0.0);
}

TEST_CASE("free spin never gains energy") {
    sim::FrozenFields f = rigid_fields(25, 44, 1e3);
    sim::SimConfig cfg;
    cfg.dt = 1.0 / 60.0;
    cfg.num_frames = 12;

    sim::SimState state = sim::init_state(f);
    const Eigen::Vector3d omega(0.0, 0.0, 6.0);
    for (std::int64_t i = 0; i < f.num_points(); ++i) {
        const Eigen::Vector3d r(f.rest.at2(i, 0), f.rest.at2(i, 1), f.rest.at2(i, 2));
        const Eigen::Vector3d v = omega.cross(r);
        for (int a = 0; a < 3; ++a) state.v.data()[3 * i + a] = v[a];
    }

    sim::SimResult result = sim::simulate(f, cfg, &state);
    REQUIRE(!result.aborted);
    CHECK(result.diagnostics.front().kinetic > 0.0);
    for (std::size_t k = 1; k < result.diagnostics.size(); ++k) {
        const double before =
            result.diagnostics[k - 1].kinetic + result.diagnostics[k - 1].energy.elastic;
        const double after =
            result.diagnostics[k].kinetic + result.diagnostics[k].energy.elastic;
        CHECK(after <= before * (1.0 + 1e-8));
    }
}

TEST_CASE("relabeling handles leaves the trajectory unchanged") {
    sim::FrozenFields f = random_fields(30, 2, 45, 1000.0, 4000.0, true);
    sim::SimConfig cfg;
    cfg.num_frames = 3;
    cfg.gravity = {0.0, 0.0, -9.8};
    cfg.newton.tol = 1e-10;
    cfg.floor.enabled = true;
    cfg.floor.height = -1.5;
    cfg.floor.stiffness = 1e4;

    sim::SimResult base = sim::simulate(f, cfg);
    REQUIRE(!base.aborted);

    // swap the two handles everywhere they appear
    const std::int64_t n = f.num_points();
    sim::FrozenFields swapped = f;
    for (std::int64_t i = 0; i < n; ++i) {
        std::swap(swapped.w.data()[2 * i], swapped.w.data()[2 * i + 1]);
        for (int a = 0; a < 3; ++a)
            std::swap(swapped.g.data()[6 * i + a], swapped.g.data()[6 * i + 3 + a]);
    }
    sim::SimResult relabeled = sim::simulate(swapped, cfg);
    REQUIRE(!relabeled.aborted);

    REQUIRE(base.trajectory.size() == relabeled.trajectory.size());
    for (std::size_t t = 0; t < base.trajectory.size(); ++t)
        for (std::int64_t i = 0; i < base.trajectory[t].numel(); ++i)
            CHECK(base.trajectory[t][i] ==
                  Catch::Approx(relabeled.trajectory[t][i]).margin(1e-6));
}

TEST_CASE("newton residual decreases across accepted iterations on a stiff pull") {
    sim::FrozenFields f = random_fields(40, 2, 46, 5000.0, 10000.0, true);
    sim::SimConfig cfg;
    cfg.dt = 1.0 / 60.0;
    sim::BoundarySpec pin;
    for (std::int64_t i = 0; i < 8; ++i) pin.points.push_back(i);
    pin.stiffness = 1e4;
    pin.targets = ad::Tensor({8, 3});
    for (std::int64_t i = 0; i < 8; ++i)
        for (int a = 0; a < 3; ++a) pin.targets.data()[3 * i + a] = f.rest.at2(i, a);
    cfg.boundaries.push_back(pin);
    sim::ForceSpec pull;
    for (std::int64_t i = 30; i < 40; ++i) pull.points.push_back(i);
    pull.force = {8.0, 0.0, 4.0};
    cfg.forces.push_back(pull);

    sim::SimState state = sim::init_state(f);
    sim::StepDiag diag = sim::newton_step(f, cfg, state, cfg.dt);
    REQUIRE(diag.iters >= 2);  // the setup is supposed to need real work
    CHECK(!diag.stalled);
    for (std::size_t k = 1; k < diag.residual_history.size(); ++k)
        CHECK(diag.residual_history[k] < diag.residual_history[k - 1]);
}

TEST_CASE("drop penetration respects the penalty energy bound") {
    const double drop = 0.5, kappa = 1e5, grav = 9.8;
    sim::FrozenFields f = rigid_fields(30, 47, 1e4);
    // lift the rest cloud so it falls onto the floor at z=0
    for (std::int64_t i = 0; i < f.num_points(); ++i)
        f.rest.data()[3 * i + 2] += drop + 0.2;

    sim::SimConfig cfg;
    cfg.dt = 1.0 / 60.0;
    cfg.num_frames = 45;
    cfg.substeps = 2;
    cfg.gravity = {0.0, 0.0, -grav};
    cfg.floor.enabled = true;
    cfg.floor.height = 0.0;
    cfg.floor.stiffness = kappa;

    sim::SimResult result = sim::simulate(f, cfg);
    REQUIRE(!result.aborted);
    REQUIRE(result.trajectory.size() == 45);

    double mass = 0.0;
    for (double v : f.volume) mass += cfg.density * v;
    // the cloud extends 0.2 below its centroid, so the lowest point starts
    // about drop+0.2 above the floor; use the generous height for the bound
    const double bound = std::sqrt(2.0 * mass * grav * (drop + 0.4) / kappa);

    double max_pen = 0.0;
    bool touched = false;
    for (const auto& frame : result.trajectory)
        for (std::int64_t i = 0; i < f.num_points(); ++i) {
            const double pen = -frame.at2(i, 2);
            if (pen > 0.0) touched = true;
            max_pen = std::max(max_pen, pen);
        }
    CHECK(touched);
    CHECK(max_pen <= bound * 1.05);
}

TEST_CASE("sim config parsing resolves masks and rejects bad input") {
    ad::Tensor rest({4, 3});
    for (std::int64_t i = 0; i < 4; ++i) rest.data()[3 * i] = static_cast<double>(i);

    geom::json j = {
        {"dt", 0.01},
        {"num_frames", 10},
        {"gravity", {0.0, 0.0, -9.8}},
        {"floor", {{"height", -1.0}, {"stiffness", 100.0}, {"normal", {0.0, 0.0, 2.0}}}},
        {"forces",
         {{{"box", {{"min", {1.5, -1.0, -1.0}}, {"max", {3.5, 1.0, 1.0}}}},
           {"force", {1.0, 0.0, 0.0}},
           {"frames", {2, 5}}}}},
        {"boundaries", {{{"points", {0, 1}}, {"stiffness", 50.0}}}},
    };
    sim::SimConfig cfg = sim::parse_sim_config(j, rest);
    CHECK(cfg.dt == 0.01);
    CHECK(cfg.floor.enabled);
    CHECK(cfg.floor.normal[2] == 1.0);  // normalized
    REQUIRE(cfg.forces.size() == 1);
    CHECK(cfg.forces[0].points == std::vector<std::int64_t>{2, 3});
    CHECK(cfg.forces[0].active(2));
    CHECK(!cfg.forces[0].active(5));
    REQUIRE(cfg.boundaries.size() == 1);
    // pin targets default to rest positions
    CHECK(cfg.boundaries[0].targets.at2(1, 0) == 1.0);
    // untouched fields keep their defaults
    CHECK(cfg.newton.max_iters == 25);
    CHECK(cfg.newton.tol == 1e-6);

    CHECK_THROWS_AS(sim::parse_sim_config({{"dt", 0.0}}, rest), ConfigError);
    CHECK_THROWS_AS(sim::parse_sim_config({{"substeps", 0}}, rest), ConfigError);
    CHECK_THROWS_AS(
        sim::parse_sim_config({{"forces", {{{"force", {1.0, 0.0, 0.0}}}}}}, rest),
        ConfigError);  // no mask
    CHECK_THROWS_AS(
        sim::parse_sim_config({{"forces",
                                {{{"points", {9}}, {"force", {1.0, 0.0, 0.0}}}}}},
                              rest),
        ConfigError);  // out of range
    CHECK_THROWS_AS(
        sim::parse_sim_config(
            {{"boundaries",
              {{{"points", {0, 1}}, {"stiffness", 1.0}, {"targets", {{0.0, 0.0, 0.0}}}}}}},
            rest),
        ConfigError);  // target count mismatch
    CHECK_THROWS_AS(sim::parse_sim_config({{"newton", {{"backtrack", 1.0}}}}, rest),
                    ConfigError);
}

TEST_CASE("frozen fields rebuild from a checkpoint store") {
    const std::int64_t n = 30;
    Rng rng(48);
    ad::Tensor rest({n, 3});
    for (std::int64_t i = 0; i < 3 * n; ++i) rest.data()[i] = rng.uniform(-1.0, 1.0);

    ad::ParamStore params;
    deform::WeightFieldConfig wcfg;
    wcfg.num_handles = 2;
    wcfg.hidden_width = 8;
    deform::init_weight_field(params, wcfg, rng);
    ad::Tensor e({n, 4});
    for (std::int64_t i = 0; i < 4 * n; ++i) e.data()[i] = rng.uniform(100.0, 500.0);
    params.add("E", ad::Tensor(e.shape(), e.vec()));

    geom::json meta = {{"K", 6}, {"nu", 0.4}, {"corrected_neohookean", true}};
    sim::FrozenFields f = sim::freeze_from_checkpoint(params, meta, rest, 3.0);
    CHECK(f.num_points() == n);
    CHECK(f.num_handles() == 2);
    CHECK(f.nu == 0.4);
    CHECK(f.corrected);
    CHECK(f.volume[0] == Catch::Approx(0.1).epsilon(1e-15));

    ad::Tensor w = deform::weight_field(params.all(), rest);
    for (std::int64_t i = 0; i < w.numel(); ++i) CHECK(f.w[i] == w[i]);
    for (std::int64_t i = 0; i < e.numel(); ++i) CHECK(f.e[i] == e[i]);

    geom::json missing = {{"nu", 0.4}, {"corrected_neohookean", true}};
    CHECK_THROWS_AS(sim::freeze_from_checkpoint(params, missing, rest, 3.0), ParseError);
    ad::ParamStore no_e;
    deform::init_weight_field(no_e, wcfg, rng);
    CHECK_THROWS_AS(sim::freeze_from_checkpoint(no_e, meta, rest, 3.0), ParseError);
}

TEST_CASE("repeated runs are bit-identical") {
    sim::FrozenFields f = random_fields(25, 2, 49, 1000.0, 3000.0, true);
    sim::SimConfig cfg;
    cfg.num_frames = 4;
    cfg.gravity = {0.0, 0.2, -9.8};
    cfg.floor.enabled = true;
    cfg.floor.height = -1.2;
    cfg.floor.stiffness = 5e3;

    sim::SimResult a = sim::simulate(f, cfg);
    sim::SimResult b = sim::simulate(f, cfg);
    REQUIRE(a.trajectory.size() == b.trajectory.size());
    for (std::size_t t = 0; t < a.trajectory.size(); ++t)
        for (std::int64_t i = 0; i < a.trajectory[t].numel(); ++i)
            REQUIRE(a.trajectory[t][i] == b.trajectory[t][i]);
}
