//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p decaylab --test acceptance -- --nocapture` to see
//! the lines. A criterion listed in `KNOWN_UNATTAINABLE` prints FAIL without
//! failing the test; the reason is kept next to the list.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use decaylab::cli::{dispatch, parse_config, write_outputs};
use decaylab::constructions::{make_interval_example, make_l2_counterexample, make_random_frostman, CantorSpec, Keep};
use decaylab::dyadic_sets::{
    additive_energy, covering_number, is_delta_s_set, projection_scan, set_check, uniformity_audit, uniformize,
    SetCheckKind,
};
use decaylab::energy::{energy_fourier, energy_spatial, exceptional_set, extract_nonconcentrated};
use decaylab::flattening_lab::{run_base_case, run_flattening, run_induction_chain, VerdictKind};
use decaylab::measure_grid::{cell_width, pushforward_affine};
use decaylab::spectral::{log_samples, multi_product_fourier, order_check, worst_exponent};
use decaylab::{DyadicGridSet, GridMeasure};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Criterion 4 asks for a fitted exponent in [0.4, 0.7] for
/// uniform[1,2] x uniform[1,2]. That product has a continuous, piecewise
/// smooth density, so its transform decays like xi^-2 and the fitted exponent
/// sits far above the window. The magnitude clause is still checked.
const KNOWN_UNATTAINABLE: &[u32] = &[4];

struct Line {
    id: u32,
    pass: bool,
    detail: String,
    secs: f64,
    budget: f64,
}

fn run(id: u32, budget: f64, f: impl FnOnce() -> (bool, String)) -> Line {
    let t = Instant::now();
    let (pass, detail) = f();
    Line { id, pass, detail, secs: t.elapsed().as_secs_f64(), budget }
}

fn cantor(block: u32, keep: u32, depth: u32, seed: u64) -> GridMeasure {
    make_random_frostman(&CantorSpec { block, keep: Keep::Fixed(keep), depth, seed })
        .unwrap()
        .measure
}

fn support(mu: &GridMeasure) -> DyadicGridSet {
    let cells = mu
        .masses()
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 0.0)
        .map(|(i, _)| mu.offset() + i as i64)
        .collect();
    DyadicGridSet::from_cells_1d(mu.level(), cells).unwrap()
}

fn random_measure(rng: &mut ChaCha8Rng, level: u32, lo: i64, len: usize) -> GridMeasure {
    let mut masses: Vec<f64> = (0..len)
        .map(|_| if rng.gen_bool(0.3) { 0.0 } else { rng.gen::<f64>() })
        .collect();
    masses[0] += 1e-3;
    GridMeasure::from_cell_masses(level, lo, masses).unwrap().normalized().unwrap()
}

fn c1_order_exchange() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let (lo, len) = (rng.gen_range(-256..256), rng.gen_range(1..200));
        let mu = random_measure(&mut rng, 8, lo, len);
        let (lo, len) = (rng.gen_range(64..400), rng.gen_range(1..60));
        let nu = random_measure(&mut rng, 8, lo, len);
        let xi = rng.gen_range(1.0..500.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
        let (lhs, rhs) = order_check(&mu, &nu, xi);
        worst = worst.max(lhs - rhs);
    }
    (worst <= 1e-12, format!("200 triples, max lhs - rhs = {worst:.3e}"))
}

fn c2_young() -> (bool, String) {
    let u = GridMeasure::uniform(-1.0, 1.0, 12).unwrap();
    let c1 = cantor(2, 2, 6, 21);
    let c2 = cantor(2, 2, 6, 22);
    let cases = [(&u, &u), (&c1, &c2), (&GridMeasure::uniform(0.0, 1.0, 12).unwrap(), &c1)];
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for (mu, nu) in cases {
        let tr = run_flattening(mu, nu, 0.5, 0.5, cell_width(10), 4, 0.1).unwrap();
        let by: BTreeMap<(u64, u32), f64> = tr.j_r.iter().map(|e| ((e.r.to_bits(), e.k), e.j)).collect();
        for (&(r, k), &j) in &by {
            if let Some(next) = by.get(&(r, k + 1)) {
                worst = worst.max(next - j);
                checked += 1;
            }
        }
    }
    (worst <= 1e-9, format!("{checked} (r, k) steps over 3 traces, max J_r(k+1) - J_r(k) = {worst:.3e}"))
}

fn c3_energy() -> (bool, String) {
    let level = 12;
    let delta = cell_width(9);
    let two_scale = |coarse: f64, fine: f64| {
        GridMeasure::from_density(
            move |x| {
                let a = if (x / coarse).fract() < 0.5 { 1.0 } else { 0.0 };
                let b = if (x / fine).fract() < 0.5 { 1.0 } else { 0.2 };
                a * b
            },
            0.0,
            1.0,
            level,
            true,
        )
        .unwrap()
    };
    let family = [
        GridMeasure::uniform(0.0, 0.5, level).unwrap(),
        GridMeasure::uniform(0.25, 0.5, level).unwrap(),
        GridMeasure::uniform(0.1, 0.9, level).unwrap(),
        two_scale(0.25, 1.0 / 32.0),
        two_scale(0.125, 1.0 / 16.0),
    ];
    let mut worst = 0.0f64;
    for mu in &family {
        for s in [0.3, 0.5, 0.7] {
            let a = energy_spatial(mu, s, delta).unwrap();
            let b = energy_fourier(mu, s, delta).unwrap();
            worst = worst.max((a - b).abs() / a);
        }
    }
    let u = GridMeasure::uniform(0.0, 1.0, level).unwrap();
    let e = energy_spatial(&u, 0.5, u.cell_width()).unwrap();
    let rel = (e - 8.0 / 3.0).abs() / (8.0 / 3.0);
    (
        worst < 0.05 && rel < 0.02,
        format!("15 pairs, worst relative gap {worst:.4}; uniform I_1/2 = {e:.5} ({:.3}% off 8/3)", 100.0 * rel),
    )
}

fn c4_base_case() -> (bool, String) {
    let u = GridMeasure::uniform(1.0, 2.0, 13).unwrap();
    let r = run_base_case(&u, &u, 1.0, 1.0, cell_width(10), 32, Some((64.0, 1024.0))).unwrap();
    let tau = r.profile.as_ref().map_or(f64::NAN, |p| p.tau_hat);
    let magnitude_ok = r.c_meas <= 16.0;
    let tau_ok = (0.4..=0.7).contains(&tau);
    (
        magnitude_ok && tau_ok,
        format!(
            "max/delta^(1/2) = {:.3e} ({}); tau_hat = {tau:.3} over [64, 1024] ({})",
            r.c_meas,
            if magnitude_ok { "ok" } else { "over 16" },
            if tau_ok { "ok" } else { "outside [0.4, 0.7]" }
        ),
    )
}

fn c5_l2_counterexample() -> (bool, String) {
    let ex = make_l2_counterexample(0.4, cell_width(20), 1.0 / 16.0).unwrap();
    let target = cell_width(20).powf(-0.6);
    let ratio = ex.l2_sq / target;
    let ok = (1.0 / 16.0..=16.0).contains(&ratio) && ex.triple_magnitude >= 0.125;
    (ok, format!("||mu_delta||^2 / delta^-0.6 = {ratio:.4}, |triple^| = {:.4}", ex.triple_magnitude))
}

fn c6_interval() -> (bool, String) {
    let delta = cell_width(12);
    let ex = make_interval_example(0.5, delta, 0.25).unwrap();
    let ok = ex.triple_magnitude >= 0.5 && ex.triple_support <= 0.25 * delta;
    (
        ok,
        format!(
            "|triple^| = {:.4}, support end {:.3e} vs c delta = {:.3e}",
            ex.triple_magnitude,
            ex.triple_support,
            0.25 * delta
        ),
    )
}

fn random_set(rng: &mut ChaCha8Rng, dim: u8, level: u32, n: usize) -> DyadicGridSet {
    let side = 1i64 << level;
    let mut cells = BTreeSet::new();
    while cells.len() < n {
        let y = if dim == 2 { rng.gen_range(0..side) } else { 0 };
        cells.insert([rng.gen_range(0..side), y]);
    }
    DyadicGridSet::new(dim, level, cells.into_iter().collect()).unwrap()
}

/// Counts per dyadic r-cell by plain enumeration.
fn brute_counts(x: &DyadicGridSet, q: u32) -> BTreeMap<(i64, i64), usize> {
    let w = 1i64 << (x.level() - q);
    let mut out = BTreeMap::new();
    for c in x.cells() {
        *out.entry((c[0].div_euclid(w), c[1].div_euclid(w))).or_insert(0) += 1;
    }
    out
}

fn c7_combinatorics() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut mismatches = Vec::new();
    for case in 0..100 {
        let dim = if case % 4 == 3 { 2 } else { 1 };
        let level = rng.gen_range(3..8);
        let n = rng.gen_range(1..=32usize.min(1 << level));
        let x = random_set(&mut rng, dim, level, n);
        for q in 0..=level {
            let got = covering_number(&x, cell_width(q)).unwrap();
            if got != brute_counts(&x, q).len() {
                mismatches.push(format!("covering case {case} q {q}"));
            }
        }
        let s = rng.gen_range(0.2..0.9);
        let k = rng.gen_range(0.5..4.0);
        for kind in [SetCheckKind::FrostmanType, SetCheckKind::KatzTao] {
            let got = set_check(&x, s, k, kind).unwrap();
            let mut pass = true;
            for q in 0..=level {
                let r = cell_width(q);
                let bound = match kind {
                    SetCheckKind::FrostmanType => k * r.powf(s) * x.len() as f64,
                    SetCheckKind::KatzTao => k * (r / cell_width(level)).powf(s),
                };
                pass &= brute_counts(&x, q).values().all(|&c| c as f64 <= bound * (1.0 + 1e-12));
            }
            if got.pass != pass {
                mismatches.push(format!("set_check case {case} {kind:?}"));
            }
        }
        if dim == 1 {
            let ny = rng.gen_range(1..=32usize.min(1 << level));
            let y = random_set(&mut rng, 1, level, ny);
            let mut brute = 0u128;
            for a1 in x.cells() {
                for a2 in x.cells() {
                    for b1 in y.cells() {
                        for b2 in y.cells() {
                            brute += u128::from(a1[0] - b1[0] == a2[0] - b2[0]);
                        }
                    }
                }
            }
            if additive_energy(&x, &y).unwrap() != brute {
                mismatches.push(format!("additive_energy case {case}"));
            }
        }
    }
    let mut uniform_failures = 0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let (d, m) = (2u32, 4u32);
        let dim = if seed % 5 == 4 { 2 } else { 1 };
        let side = 1i64 << (d * m);
        let p = rng.gen_range(0.05..0.6);
        let mut cells = Vec::new();
        for i in 0..side {
            for j in 0..if dim == 2 { side } else { 1 } {
                if rng.gen_bool(p) {
                    cells.push([i, j]);
                }
            }
        }
        if cells.is_empty() {
            cells.push([0, 0]);
        }
        let x = DyadicGridSet::new(dim, d * m, cells).unwrap();
        let u = uniformize(&x, d, m).unwrap();
        if uniformity_audit(&u.set, d, m).is_err() || u.retained_fraction < u.floor {
            uniform_failures += 1;
        }
    }
    (
        mismatches.is_empty() && uniform_failures == 0,
        format!(
            "100 random sets: {} oracle mismatches{}; 50 uniformize runs: {uniform_failures} failures",
            mismatches.len(),
            mismatches.first().map(|m| format!(" (first: {m})")).unwrap_or_default()
        ),
    )
}

fn c8_projection() -> (bool, String) {
    let ys = DyadicGridSet::interval(0.0, 1.0, 10).unwrap();
    let mut worst = f64::INFINITY;
    let mut passed = 0;
    for i in 0..16u64 {
        let a1 = support(&cantor(2, 2, 5, 800 + 2 * i));
        let a2 = support(&cantor(2, 2, 5, 801 + 2 * i));
        let scan = projection_scan(&a1, &a2, &ys, 0.5, 1.0, 1.0 / 24.0).unwrap();
        worst = worst.min(scan.max as f64 / scan.threshold);
        passed += usize::from(scan.pass);
    }
    (passed == 16, format!("{passed}/16 instances meet delta^(-s-t/24); smallest max/threshold = {worst:.3}"))
}

fn c9_frostman_energy() -> (bool, String) {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut guaranteed = 0;
    let mut bound_failures = 0;
    let mut extraction_failures = 0;
    let mut extracted = 0;
    for case in 0..20u64 {
        let mu = match case % 3 {
            0 => random_measure(&mut rng, 12, 0, 4096),
            1 => cantor(2, 3, 6, 900 + case),
            _ => {
                let base = random_measure(&mut rng, 12, 0, 4096);
                let mut m = base.masses().to_vec();
                let spike = rng.gen_range(0..4096);
                m[spike] += rng.gen_range(0.05..0.5);
                GridMeasure::from_cell_masses(12, 0, m).unwrap().normalized().unwrap()
            }
        };
        let s = rng.gen_range(0.2..0.7);
        let eps = rng.gen_range(0.05..0.3);
        let ex = exceptional_set(&mu, s, cell_width(8), eps).unwrap();
        if ex.guaranteed {
            guaranteed += 1;
            if ex.mass > ex.mass_bound {
                bound_failures += 1;
            }
        }
        let rho = cell_width(rng.gen_range(6..=9));
        let tau = rng.gen_range(0.1..0.3);
        let ok = match extract_nonconcentrated(&mu, s, rho, tau) {
            Ok(x) => {
                extracted += 1;
                !x.set.is_empty() && is_delta_s_set(&x.set, s, rho.powf(-6.0 * tau)).unwrap()
            }
            // Documented rejection: no density class reaches rho^(2 tau).
            Err(decaylab::Error::NoDensityLevel { .. }) => true,
            Err(e) => panic!("{e}"),
        };
        extraction_failures += usize::from(!ok);
    }
    (
        guaranteed > 0 && extracted > 0 && bound_failures == 0 && extraction_failures == 0,
        format!(
            "mass bound held on {}/{guaranteed} cases meeting the energy precondition; {extraction_failures} of {extracted} extractions failed the set check ({} rejected)",
            guaranteed - bound_failures,
            20 - extracted
        ),
    )
}

fn c10_theorem_main() -> (bool, String) {
    let delta = cell_width(12);
    let band = (64.0, 1024.0);
    let xis = log_samples(band, 32);
    let mut worst_tau = f64::INFINITY;
    let mut worst_slack = f64::INFINITY;
    for seed in 0..3u64 {
        // Dimensions 1/2 each, total 1.5, moved onto [1, 2].
        let ms: Vec<GridMeasure> = (0..3)
            .map(|i| pushforward_affine(&cantor(2, 2, 6, 1000 + 3 * seed + i), 1.0, 1.0).unwrap())
            .collect();
        let fine: Vec<GridMeasure> = ms.iter().map(|m| m.refine(14).unwrap()).collect();
        let refs: Vec<&GridMeasure> = fine.iter().collect();
        let mags: Vec<f64> = xis.iter().map(|&x| multi_product_fourier(&refs, x).unwrap().norm()).collect();
        worst_tau = worst_tau.min(worst_exponent(&xis, &mags));
        let chain = run_induction_chain(&ms, &[0.5, 0.5, 0.5], delta, 1, 16, 0.0).unwrap();
        worst_slack = worst_slack.min(chain.worst_slack);
    }
    (
        worst_tau >= 0.02 && worst_slack >= -1e-6,
        format!("3 triples (s = 1/2 each): min tau_hat = {worst_tau:.4}, min chain slack = {worst_slack:.3e}"),
    )
}

fn c11_determinism() -> (bool, String) {
    let configs = [
        "experiment = decay\nscale = 10\nseed = 5\ninputs = cantor:2:2:5, cantor:2:2:5\nn_samples = 16\n",
        "experiment = project\nscale = 8\nseed = 11\ns = 0.5\nt = 1\n",
        "experiment = induction\nscale = 6\nseed = 2\ninputs = cantor:2:2:3, uniform:1:2, cantor:2:2:3\nexponents = 0.5, 1, 0.5\nn_samples = 8\n",
        "experiment = flatten\nscale = 8\ns = 0.5\nt = 0.5\nk_max = 2\n",
        "experiment = counterexample\nscale = 10\nvariant = interval\n",
    ];
    let mut differing = Vec::new();
    for text in configs {
        let cfg = parse_config(text).unwrap();
        let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
        for d in &dirs {
            let out = dispatch(&cfg, &[]).unwrap();
            write_outputs(&out, d.path()).unwrap();
        }
        let mut names: Vec<String> = std::fs::read_dir(dirs[0].path())
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .filter(|n| n != "timings.json")
            .collect();
        names.sort();
        for n in names {
            let a = std::fs::read(dirs[0].path().join(&n)).unwrap();
            let b = std::fs::read(dirs[1].path().join(&n)).ok();
            if b.as_deref() != Some(&a[..]) {
                differing.push(format!("{}:{n}", cfg.experiment.name()));
            }
        }
        // Exact verdicts must hold on these clean configs.
        let out = dispatch(&cfg, &[]).unwrap();
        for v in out.report.verdicts.iter().filter(|v| v.kind == VerdictKind::Exact && !v.pass) {
            differing.push(format!("{}: exact verdict {} failed", cfg.experiment.name(), v.name));
        }
    }
    (differing.is_empty(), format!("5 configs run twice; differences: {differing:?}"))
}

#[test]
fn acceptance() {
    let lines = vec![
        run(1, 10.0, c1_order_exchange),
        run(2, 120.0, c2_young),
        run(3, 60.0, c3_energy),
        run(4, 60.0, c4_base_case),
        run(5, 300.0, c5_l2_counterexample),
        run(6, 30.0, c6_interval),
        run(7, 60.0, c7_combinatorics),
        run(8, 300.0, c8_projection),
        run(9, 120.0, c9_frostman_energy),
        run(10, 600.0, c10_theorem_main),
        run(11, 600.0, c11_determinism),
    ];
    let mut unexpected = Vec::new();
    for l in &lines {
        let in_time = l.secs <= l.budget;
        let pass = l.pass && in_time;
        println!(
            "criterion {:>2}: {}  {}  [{:.2} s of {:.0} s]",
            l.id,
            if pass { "PASS" } else { "FAIL" },
            l.detail,
            l.secs,
            l.budget
        );
        if !pass && !KNOWN_UNATTAINABLE.contains(&l.id) {
            unexpected.push(l.id);
        }
    }
    assert!(unexpected.is_empty(), "criteria failed: {unexpected:?}");
}
