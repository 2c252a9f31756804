use std::sync::Arc;

use num_complex::Complex;
use proptest::prelude::*;

use nlkg::config::parse_config;
use nlkg::diagnostics::{read_csv, write_csv, DiagnosticsRecord};
use nlkg::functionals::{build_cutoffs, charge, energy, momentum, nehari_project, nehari_value, ActionParams};
use nlkg::integrator::{run, IntegratorConfig};
use nlkg::io::{read_field, write_field};
use nlkg::modulation::{fit_modulation, FitOptions, Modulated};
use nlkg::profiles::{boosted_soliton, sample_sum};
use nlkg::{Field64, Grid, ModelParams, SolitonParams};

fn cubic() -> ModelParams {
    ModelParams::new(1.0, 3.0, 1).unwrap()
}

fn random_field(grid: &Arc<Grid<f64>>, coeffs: &[f64]) -> Field64 {
    let c = coeffs.to_vec();
    let d = coeffs.to_vec();
    Field64::from_fn(
        grid.clone(),
        move |x| Complex::new(c[0] * (-(x - c[1]).powi(2)).exp(), c[2] * (-(x + c[3]).powi(2) / 2.0).exp()),
        move |x| Complex::new(d[3] * (-(x * x)).exp(), d[0] * (-(x - d[2]).powi(2)).exp()),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dumps_round_trip_bitwise(coeffs in proptest::collection::vec(-2.0f64..2.0, 4), t in -1e3f64..1e3) {
        let grid = Grid::new(17.3, 32).unwrap();
        let w = random_field(&grid, &coeffs);
        let mut buf = Vec::new();
        write_field(&mut buf, &w, t).unwrap();
        let (r, rt) = read_field(&mut buf.as_slice()).unwrap();
        prop_assert_eq!(rt.to_bits(), t.to_bits());
        prop_assert!(r.u1.iter().chain(&r.u2).zip(w.u1.iter().chain(&w.u2))
            .all(|(a, b)| a.re.to_bits() == b.re.to_bits() && a.im.to_bits() == b.im.to_bits()));
    }

    #[test]
    fn diagnostics_round_trip_exactly(vals in proptest::collection::vec(-1e6f64..1e6, 12)) {
        let rec = DiagnosticsRecord {
            time: vals[0],
            energy: vals[1] / 7.0,
            charge: vals[2] * 1e-9,
            momentum: vals[3],
            local_energy: vec![vals[4], vals[5]],
            local_charge: vec![vals[6], vals[7]],
            local_momentum: vec![vals[8], vals[9]],
            localized_action: vals[10] / 3.0,
            error: vals[11].abs() * 1e-12,
        };
        let mut buf = Vec::new();
        write_csv(&mut buf, std::slice::from_ref(&rec)).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back, vec![rec]);
    }

    #[test]
    fn configs_round_trip(omega in 0.72f64..0.95, v in 0.05f64..0.5, theta in -3.0f64..3.0, seed in 0u64..1000) {
        let text = format!(
            "seed = {seed}\n[model]\nm = 1\np = 3\n[grid]\nlength = 400\npoints = 2048\n[integrator]\ndt = 0.01\n\
             [soliton]\nomega = {omega}\nv = {}\ntheta = {theta}\n[soliton]\nomega = {omega}\nv = {v}\n\
             [experiment]\nTn = 20\nT0 = 5\n",
            -v
        );
        let cfg = parse_config(&text).unwrap();
        prop_assert_eq!(parse_config(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn conserved_quantities_are_gauge_invariant(coeffs in proptest::collection::vec(-1.0f64..1.0, 4),
                                               alpha in -3.2f64..3.2, cells in -40isize..40) {
        let grid = Grid::new(30.0, 128).unwrap();
        let w = random_field(&grid, &coeffs);
        let moved = w.rotate_phase(alpha).roll(cells);
        let scale = 1.0 + w.h1l2_norm_sq();
        prop_assert!((energy(&moved, cubic()) - energy(&w, cubic())).abs() < 1e-12 * scale);
        prop_assert!((charge(&moved) - charge(&w)).abs() < 1e-12 * scale);
        prop_assert!((momentum(&moved) - momentum(&w)).abs() < 1e-12 * scale);
    }

    #[test]
    fn splitting_conserves_charge(coeffs in proptest::collection::vec(-0.5f64..0.5, 4)) {
        // Both sub-flows commute with the phase rotation, so the charge is exact up to rounding.
        let grid = Grid::new(40.0, 256).unwrap();
        let w = random_field(&grid, &coeffs);
        let out = run(&w, &IntegratorConfig::new(0.02, 200).unwrap(), cubic()).unwrap();
        prop_assert!((charge(&out) - charge(&w)).abs() < 1e-12 * (1.0 + w.h1l2_norm_sq()));
    }

    #[test]
    fn nehari_ray_structure(omega in 0.3f64..0.95, v in -0.6f64..0.6, s in 0.2f64..3.0) {
        let grid = Grid::new(160.0, 2048).unwrap();
        let phi = boosted_soliton(cubic(), omega, v, 0.0, 0.0, &grid).unwrap();
        let ap = ActionParams::for_soliton(cubic(), omega, v);
        let (star, projected) = nehari_project(&(&phi * s), &ap).unwrap();
        // I(sΦ) = s²A - s^{p+1}B with A = B at Φ, so the ray returns to Φ at 1/s.
        prop_assert!((star * s - 1.0).abs() < 1e-8);
        prop_assert!(nehari_value(&projected, &ap).abs() < 1e-8);
        prop_assert!(nehari_value(&(&phi * 2.0), &ap) < 0.0);
    }

    #[test]
    fn cutoffs_partition_unity(v1 in -0.9f64..-0.1, gap in 0.1f64..0.8, t in 0.5f64..60.0) {
        let grid = Grid::new(100.0, 256).unwrap();
        let cp = build_cutoffs(&[v1, v1 + gap, v1 + 2.0 * gap], t, &grid).unwrap();
        for i in 0..grid.points() {
            let total: f64 = cp.weights.iter().map(|w| w[i]).sum();
            prop_assert!((total - 1.0).abs() < 1e-14);
            prop_assert!(cp.weights.iter().all(|w| (0.0..=1.0).contains(&w[i])));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn modulation_is_gauge_equivariant(alpha in -1.0f64..1.0, cells in -20isize..20) {
        let grid = Grid::new(120.0, 1024).unwrap();
        let sols = [
            SolitonParams::new(cubic(), 0.8, 0.2, -0.3, -14.0).unwrap(),
            SolitonParams::new(cubic(), 0.9, 1.0, 0.5, 14.0).unwrap(),
        ];
        let u = sample_sum(&sols, 0.0, &grid).unwrap();
        let seed: Vec<Modulated> = sols.iter().map(|s| Modulated::from_soliton(s, 0.0)).collect();
        let opts = FitOptions::default();
        let base = fit_modulation(&u, cubic(), &seed, &opts).unwrap();
        let shift = cells as f64 * grid.spacing();
        let moved_seed: Vec<Modulated> =
            seed.iter().map(|m| Modulated { theta: m.theta + alpha, x: m.x + shift, ..*m }).collect();
        let moved = fit_modulation(&u.rotate_phase(alpha).roll(cells), cubic(), &moved_seed, &opts).unwrap();
        for (a, b) in moved.solitons.iter().zip(&base.solitons) {
            prop_assert!((a.theta - b.theta - alpha).abs() < 1e-12);
            prop_assert!((a.omega - b.omega).abs() < 1e-12);
            prop_assert!((a.x - b.x - shift).abs() < 1e-12);
        }
    }
}
