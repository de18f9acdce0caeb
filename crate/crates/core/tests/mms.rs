//! Manufactured-solution convergence in x2 on the rough fixture.

use rbslip::elliptic::{solve_poisson_dirichlet, solve_poisson_neumann};
use rbslip::geometry::HeightProfile;
use rbslip::grid::MappedGrid;
use std::f64::consts::PI;

const N2: [usize; 3] = [32, 64, 128];

/// F(x1, x2) = sin(2 pi x1) cos(1.3 x2 + 0.2) + x2^2 and its derivatives.
fn f(x: f64, y: f64) -> [f64; 6] {
    let (s, c) = (2.0 * PI * x).sin_cos();
    let w = 2.0 * PI;
    let (a, b) = ((1.3 * y + 0.2).cos(), (1.3 * y + 0.2).sin());
    [
        s * a + y * y,          // F
        w * c * a,              // F1
        -1.3 * s * b + 2.0 * y, // F2
        -w * w * s * a,         // F11
        -1.3 * w * c * b,       // F12
        -1.69 * s * a + 2.0,    // F22
    ]
}

fn grid(n2: usize) -> MappedGrid {
    MappedGrid::new(&HeightProfile::sine(1.0, 1, 0.1), 32, n2).unwrap()
}

fn exact_l(g: &MappedGrid) -> Vec<f64> {
    let mut v = Vec::new();
    for j in 0..g.n2 {
        for i in 0..g.n1 {
            let d = f(g.x1[i], g.x2[j]);
            v.push(d[3] - 2.0 * g.hp[i] * d[4] - g.hpp[i] * d[2] + g.a22[i] * d[5]);
        }
    }
    v
}

fn maxerr(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn orders(e: &[f64]) -> Vec<f64> {
    (1..e.len())
        .map(|k| {
            let r = (N2[k] - 1) as f64 / (N2[k - 1] - 1) as f64;
            (e[k - 1] / e[k]).ln() / r.ln()
        })
        .collect()
}

fn check(name: &str, errs: Vec<f64>) {
    let o = orders(&errs);
    println!("{name}: errors {errs:?} orders {o:?}");
    assert!(o.iter().all(|&v| v >= 1.9), "{name}: observed orders {o:?}");
}

#[test]
fn grad_physical_order() {
    let errs = N2
        .iter()
        .map(|&n| {
            let g = grid(n);
            let u = g.sample(|x, y| f(x, y)[0]);
            let (g1, g2) = g.grad_physical(&u);
            let e1 = g.sample(|x, y| f(x, y)[1]);
            let e2 = g.sample(|x, y| f(x, y)[2]);
            let e1: Vec<f64> = e1.iter().enumerate().map(|(k, v)| v - g.hp[k % g.n1] * e2[k]).collect();
            maxerr(&g1, &e1).max(maxerr(&g2, &e2))
        })
        .collect();
    check("grad_physical", errs);
}

#[test]
fn apply_l_tilde_order() {
    let errs = N2
        .iter()
        .map(|&n| {
            let g = grid(n);
            let u = g.sample(|x, y| f(x, y)[0]);
            maxerr(&g.apply_l_tilde(&u), &exact_l(&g))
        })
        .collect();
    check("apply_L_tilde", errs);
}

#[test]
fn dirichlet_order() {
    let errs = N2
        .iter()
        .map(|&n| {
            let g = grid(n);
            let u = g.sample(|x, y| f(x, y)[0]);
            let t = g.top() * g.n1;
            let (phi, _) = solve_poisson_dirichlet(&g, &exact_l(&g), &u[..g.n1], &u[t..t + g.n1]).unwrap();
            maxerr(&phi, &u)
        })
        .collect();
    check("solve_poisson_dirichlet", errs);
}

#[test]
fn neumann_order() {
    let errs = N2
        .iter()
        .map(|&n| {
            let g = grid(n);
            let mut u = g.sample(|x, y| f(x, y)[0]);
            let mean = g.integrate(&u) / g.area();
            u.iter_mut().for_each(|v| *v -= mean);
            // outward conormal flux -+ (a21 F1 + a22 F2)
            let flux = |y: f64, sign: f64| -> Vec<f64> {
                (0..g.n1)
                    .map(|i| {
                        let d = f(g.x1[i], y);
                        sign * (-g.hp[i] * d[1] + g.a22[i] * d[2])
                    })
                    .collect()
            };
            let (p, info) = solve_poisson_neumann(&g, &exact_l(&g), &flux(0.0, -1.0), &flux(1.0, 1.0)).unwrap();
            assert!(info.compat_defect_after.abs() <= 1e-8);
            maxerr(&p, &u)
        })
        .collect();
    check("solve_poisson_neumann", errs);
}
