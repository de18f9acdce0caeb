use rbslip::checkpoint::Checkpoint;
use rbslip::diagnostics::{self, SampleOptions};
use rbslip::geometry::{FourierSeries, HeightProfile, Side};
use rbslip::solver::{InitialCondition, Model, PhysicalParams, Simulation, SolverOptions, StreamMode};
use rbslip::verify::energy_decay;

fn model(profile: &HeightProfile, n1: usize, n2: usize, alpha: f64, ra: f64, pr: f64) -> Model {
    let a = FourierSeries::constant(alpha);
    Model::new(profile, n1, n2, &a, &a, PhysicalParams::new(ra, pr).unwrap(), SolverOptions::default()).unwrap()
}

fn l2(u1: &[f64], u2: &[f64], m: &Model) -> f64 {
    (m.grid.integrate_product(u1, u1) + m.grid.integrate_product(u2, u2)).sqrt()
}

#[test]
fn conduction_is_steady() {
    let m = model(&HeightProfile::flat(2.0), 32, 33, 1.0, 100.0, 10.0);
    let ic = InitialCondition { temp_amplitude: 0.0, ..Default::default() };
    let mut sim = Simulation::new(m, &ic).unwrap();
    for _ in 0..1000 {
        sim.step(1e-3).unwrap();
    }
    let (m, s) = (&sim.model, &sim.state);
    let nu = [diagnostics::nusselt_flux(m, s), diagnostics::nusselt_gradsq(m, s), diagnostics::nusselt_strip(m, s, 0.5).unwrap()];
    for v in nu {
        assert!((v - 1.0).abs() <= 1e-6, "{nu:?}");
    }
    assert!(l2(&s.u1, &s.u2, m) <= 1e-8);
}

#[test]
fn decay_rate_exceeds_bound() {
    let d = energy_decay(32, 33).unwrap();
    println!("fitted {} bound {}", d.fitted_rate, d.bound_rate);
    assert!(d.monotone);
    assert!(d.fitted_rate >= 0.95 * d.bound_rate);
}

#[test]
fn large_friction_suppresses_slip() {
    let mut slips = Vec::new();
    for alpha in [10.0, 100.0, 1000.0] {
        let m = model(&HeightProfile::flat(2.0), 32, 33, alpha, 0.0, 1.0);
        let ic = InitialCondition {
            temp_amplitude: 0.0,
            stream_modes: vec![StreamMode { k: 1, m: 1, amp_cos: 0.0, amp_sin: 0.1 }],
            ..Default::default()
        };
        let mut sim = Simulation::new(m, &ic).unwrap();
        for _ in 0..20 {
            let dt = sim.auto_dt(0.4, 1e-3);
            sim.step(dt).unwrap();
        }
        let ut = sim.model.u_tau(&sim.state.psi.values, Side::Bottom);
        let u = sim.state.u1.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        slips.push(ut.iter().fold(0.0f64, |a, v| a.max(v.abs())) / u);
    }
    println!("relative slip {slips:?}");
    assert!(slips[0] > slips[1] && slips[1] > slips[2]);
}

fn rough_sim(seed: u64) -> Simulation {
    let m = model(&HeightProfile::sine(2.0, 1, 0.1), 32, 33, 1.0, 5e3, 1.0);
    Simulation::new(m, &InitialCondition { temp_amplitude: 0.1, seed, ..Default::default() }).unwrap()
}

#[test]
fn rough_run_invariants() {
    let mut sim = rough_sim(3);
    for _ in 0..200 {
        let dt = sim.auto_dt(0.4, 1e-3);
        sim.step(dt).unwrap();
    }
    let (m, s) = (&sim.model, &sim.state);
    // maximum principle up to discretization overshoot
    let (lo, hi) = s.temp.values.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    assert!(lo >= -1e-2 && hi <= 1.0 + 1e-2, "{lo} {hi}");
    let g = &m.grid;
    let top = g.row(&s.psi.values, g.top());
    assert!(top.iter().all(|v| (v - s.psi_top).abs() < 1e-12));
    assert!(g.row(&s.psi.values, 0).iter().all(|v| v.abs() < 1e-12));
    let (d11, _) = g.grad_physical(&s.u1);
    let (_, d22) = g.grad_physical(&s.u2);
    let umax = s.u1.iter().chain(&s.u2).fold(0.0f64, |a, v| a.max(v.abs()));
    let div = (g.n1..g.len() - g.n1).map(|k| (d11[k] + d22[k]).abs()).fold(0.0, f64::max);
    println!("div {div} umax {umax}");
    assert!(div <= 1e-8 * umax.max(1.0));
    let r = diagnostics::sample(m, s, &SampleOptions::default()).unwrap();
    assert!(r.energy.is_finite() && r.energy > 0.0);
}

#[test]
fn restart_is_bit_exact() {
    let mut a = rough_sim(7);
    for _ in 0..30 {
        a.step(5e-4).unwrap();
    }
    let bytes = Checkpoint::from_simulation(&a).to_bytes();
    let mut b = Checkpoint::from_bytes(&bytes).unwrap().into_simulation(SolverOptions::default()).unwrap();
    for _ in 0..30 {
        a.step(5e-4).unwrap();
        b.step(5e-4).unwrap();
    }
    assert_eq!(a.state.omega.values, b.state.omega.values);
    assert_eq!(a.state.temp.values, b.state.temp.values);
    assert_eq!(a.state.psi.values, b.state.psi.values);
    assert_eq!(a.state.time.to_bits(), b.state.time.to_bits());
}

#[test]
fn stiff_coupling_converges_on_rough_walls() {
    let mut slips = Vec::new();
    for alpha in [100.0, 1000.0] {
        let m = model(&HeightProfile::sine(2.0, 1, 0.2), 32, 33, alpha, 0.0, 1.0);
        assert!(1e-3 > m.coupling_limit());
        let ic = InitialCondition {
            temp_amplitude: 0.0,
            stream_modes: vec![StreamMode { k: 1, m: 1, amp_cos: 0.0, amp_sin: 0.1 }],
            ..Default::default()
        };
        let mut sim = Simulation::new(m, &ic).unwrap();
        for _ in 0..20 {
            let info = sim.step(1e-3).unwrap();
            assert!(info.wall_change <= 1e-8, "{info:?}");
        }
        let ut = sim.model.u_tau(&sim.state.psi.values, Side::Bottom);
        slips.push(ut.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    }
    assert!(slips[1] < 0.2 * slips[0], "{slips:?}");
}
