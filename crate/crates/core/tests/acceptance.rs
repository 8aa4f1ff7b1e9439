//! Acceptance criteria 1 to 10. Runs as a plain binary so every criterion
//! prints one PASS/FAIL line; exits nonzero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use blr::bench::{run_bench, BenchData, BenchOptions, LightingGridSpec, Variant};
use blr::blr::input::{apply_map, fit_input_map, LinearMap};
use blr::blr::training::{
    recompose_pna, solve_background_map, summarize_pna, MomentSummary, SolveMode,
};
use blr::blr::BlrModel;
use blr::corpus::{canonical_landmarks, generate, CorpusSpec};
use blr::image::{
    image_stats, masked_stats, pna_images, pooled_image_stats, AlphaMatte, LayeredPhoto,
    LuminanceImage, PnaImages, RegionMask, ScalarStats,
};
use blr::landmarks::LandmarkSet;
use blr::pose::{build_template, fit_warp, warp_image, WarpDirection};
use blr::relight::{gamma_correct, ncc, symmetric_match, ShadowCorrespondence};

const STEP1_TOL: f64 = 1e-9;
const STEP1_BUDGET: Duration = Duration::from_secs(1);
const EXACT_TOL: f64 = 1e-9;
const APPROX_SLACK: f64 = 1e-6;
const STEP2_BUDGET: Duration = Duration::from_secs(5);
const RECOVERY_TOL: f64 = 1e-8;
const IDENTITY_TOL: f64 = 1e-12;
const EXPANSION_TOL: f64 = 1e-9;
const BENCH_BUDGET: Duration = Duration::from_secs(600);
const AT_EXTREME_FACTOR: f64 = 2.0;
const NCC_TOL: f64 = 1e-9;
const GAMMA_SPOT_TOL: f64 = 1e-12;
const ROUND_TRIP_TOL: f64 = 0.02;
const VERTEX_TOL: f64 = 1e-9;
const REMAP_BUDGET: Duration = Duration::from_secs(1);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn check(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// Studio lighting shared by the photos of one set.
#[derive(Clone, Copy)]
struct Studio {
    fg: f64,
    bg: f64,
}

impl Studio {
    /// Backdrop brighter than the subject.
    fn random(r: &mut ChaCha8Rng) -> Self {
        Studio {
            fg: r.random_range(0.3..0.5),
            bg: r.random_range(0.6..0.8),
        }
    }
}

/// Soft elliptic matte and random texture in both layers.
fn random_layered(r: &mut ChaCha8Rng, studio: Studio, w: usize, h: usize) -> LayeredPhoto<f64> {
    let (cx, cy) = (
        w as f64 / 2.0 + r.random_range(-1.0..1.0),
        h as f64 / 2.0 + r.random_range(-1.0..1.0),
    );
    let (rx, ry) = (
        w as f64 * r.random_range(0.25..0.35),
        h as f64 * r.random_range(0.3..0.4),
    );
    let alpha = AlphaMatte::new(LuminanceImage::from_fn(w, h, |x, y| {
        let d = (((x as f64 - cx) / rx).powi(2) + ((y as f64 - cy) / ry).powi(2)).sqrt();
        ((1.0 - d) * 6.0).clamp(0.0, 1.0)
    }))
    .unwrap();
    let fg = studio.fg + r.random_range(-0.03..0.03);
    let bg = studio.bg + r.random_range(-0.03..0.03);
    let yp = LuminanceImage::from_fn(w, h, |_, _| fg + 0.2 * r.random::<f64>());
    let yn = LuminanceImage::from_fn(w, h, |x, y| {
        bg + 0.1 * (x + y) as f64 / (w + h) as f64 + 0.1 * r.random::<f64>()
    });
    let lm = LandmarkSet::new(vec![
        [cx - rx / 2.0, cy - ry / 2.0],
        [cx + rx / 2.0, cy - ry / 2.0],
        [cx + rx / 2.0, cy + ry / 2.0],
        [cx - rx / 2.0, cy + ry / 2.0],
    ]);
    LayeredPhoto::from_layers(yp, yn, alpha, lm).unwrap()
}

fn random_pna_set(r: &mut ChaCha8Rng) -> Vec<PnaImages<f64>> {
    let n = r.random_range(2..5);
    let studio = Studio::random(r);
    (0..n)
        .map(|_| pna_images(&random_layered(r, studio, 20, 24)).unwrap())
        .collect()
}

/// Pooled mean and variance of `P + a·N + b·A`, straight from the pixels.
fn composed_pixels(pna: &[PnaImages<f64>], map: &LinearMap<f64>) -> ScalarStats<f64> {
    let imgs: Vec<_> = pna.iter().map(|p| recompose_pna(p, map).unwrap()).collect();
    pooled_image_stats(&imgs).unwrap()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let (w, h) = (32, 40);
        let gain = r.random_range(0.3..2.0);
        let offset = r.random_range(-0.3..0.3);
        let input = LuminanceImage::from_fn(w, h, |_, _| offset + gain * r.random::<f64>());
        let mask = RegionMask::from_fn(w, h, |x, y| (8..24).contains(&x) && (6..34).contains(&y));
        let target = ScalarStats {
            mean: r.random_range(0.2..0.8),
            variance: r.random_range(0.001..0.05),
            count: 1,
        };
        let map = fit_input_map(&masked_stats(&input, &mask).unwrap(), &target).unwrap();
        let got = masked_stats(&apply_map(&input, &map), &mask).unwrap();
        worst = worst
            .max((got.mean - target.mean).abs())
            .max((got.std_dev() - target.std_dev()).abs());
    }
    let elapsed = start.elapsed();
    check(
        worst <= STEP1_TOL,
        format!("worst mean/std error {worst:e}"),
    )?;
    check(elapsed < STEP1_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "worst error {worst:.1e} over 100 pairs in {elapsed:.0?}"
    ))
}

/// Minimum pooled variance reachable by any positive gain on the mean line,
/// or `None` when the exact system has a positive root.
fn exact_infeasibility(m: &MomentSummary<f64>, target: &ScalarStats<f64>) -> Option<f64> {
    if !exact_roots(m, target).is_empty() {
        return None;
    }
    let c0 = (target.mean - m.mu_p) / m.mu_a;
    let c1 = m.mu_n / m.mu_a;
    let var = |a: f64| m.composed_variance(&LinearMap::new(a, c0 - c1 * a));
    let qa = m.var_n + c1 * c1 * m.var_a - 2.0 * c1 * m.cov_na;
    let qb = 2.0 * (m.cov_pn - c0 * c1 * m.var_a - c1 * m.cov_pa + c0 * m.cov_na);
    let vertex = (-qb / (2.0 * qa)).max(0.0);
    Some(var(vertex))
}

fn criterion_2() -> Outcome {
    let start = Instant::now();
    let mut r = rng(102);
    let mut worst_exact = 0.0f64;
    let (mut worst_mean_excess, mut worst_var_excess, mut worst_var_model) =
        (f64::NEG_INFINITY, f64::NEG_INFINITY, 0.0f64);
    let mut var_over = 0;
    let (mut accepted, mut rejected) = (0, 0);
    while accepted < 50 {
        check(rejected < 1000, "too many infeasible draws")?;
        let studio = Studio::random(&mut r);
        let training: Vec<_> = (0..r.random_range(2..5))
            .map(|_| random_layered(&mut r, studio, 20, 24))
            .collect();
        let held_out = random_layered(&mut r, studio, 20, 24);
        let l = held_out.layers().unwrap();
        let (sf, sb) = (r.random_range(0.5..1.5), r.random_range(0.5..1.5));
        let input = blr::image::compose(
            &l.portrait.map(|v| sf * v),
            &l.background.map(|v| sb * v),
            &l.alpha,
        )
        .unwrap();
        let model = BlrModel::from_training(&training).unwrap();
        let mean_alpha = 1.0 - model.moments.mu_a;

        let exact = model
            .remap(&input, &held_out.landmarks, SolveMode::Exact)
            .unwrap();
        let approx = model
            .remap(&input, &held_out.landmarks, SolveMode::Approximate)
            .unwrap();
        if !exact.report.background.flags.feasible() || !approx.report.background.flags.feasible() {
            // Only targets with no solution may be skipped.
            let t = exact.report.target;
            let floor = exact_infeasibility(&model.moments, &t);
            check(
                floor.is_some_and(|v| v > t.variance)
                    || approx.report.background.flags.variance_infeasible,
                "solver flagged a target the oracle can reach",
            )?;
            rejected += 1;
            continue;
        }
        accepted += 1;

        let t = image_stats(&exact.adapted_input);
        let got = pooled_image_stats(&exact.adapted_training).unwrap();
        worst_exact = worst_exact
            .max((got.mean - t.mean).abs())
            .max((got.variance - t.variance).abs());

        let t = image_stats(&approx.adapted_input);
        let got = pooled_image_stats(&approx.adapted_training).unwrap();
        let map = approx.report.background.map;
        let bound = map.offset.abs() * mean_alpha + APPROX_SLACK;
        worst_mean_excess = worst_mean_excess.max((got.mean - t.mean).abs() - bound);
        let var_err = (got.variance - t.variance).abs();
        worst_var_excess = worst_var_excess.max(var_err - bound);
        var_over += usize::from(var_err > bound);
        // The variance residual is the dropped offset terms of the expansion.
        let m = &model.moments;
        let (a, b) = (map.gain, map.offset);
        let dropped = b * b * m.var_a + 2.0 * b * m.cov_pa + 2.0 * a * b * m.cov_na;
        worst_var_model = worst_var_model.max(((got.variance - t.variance) - dropped).abs());
    }
    let elapsed = start.elapsed();
    let summary = format!(
        "exact residual {worst_exact:.1e}; approximate mean excess {worst_mean_excess:.1e}, variance over bound in {var_over}/50 sets \
         (worst excess {worst_var_excess:.1e}, equals dropped offset terms to {worst_var_model:.1e}); \
         {rejected} unreachable targets skipped; {elapsed:.0?}"
    );
    check(
        worst_exact <= EXACT_TOL,
        format!("exact residual {worst_exact:e}"),
    )?;
    check(
        worst_var_model <= EXACT_TOL,
        format!("variance residual model off by {worst_var_model:e}"),
    )?;
    check(
        worst_mean_excess <= 0.0 && worst_var_excess <= 0.0,
        summary.clone(),
    )?;
    check(elapsed < STEP2_BUDGET, format!("took {elapsed:?}"))?;
    Ok(summary)
}

/// Positive roots of the exact system with their offsets, solved independently.
fn exact_roots(m: &MomentSummary<f64>, target: &ScalarStats<f64>) -> Vec<(f64, f64)> {
    let c0 = (target.mean - m.mu_p) / m.mu_a;
    let c1 = m.mu_n / m.mu_a;
    let qa = m.var_n + c1 * c1 * m.var_a - 2.0 * c1 * m.cov_na;
    let qb = 2.0 * (m.cov_pn - c0 * c1 * m.var_a - c1 * m.cov_pa + c0 * m.cov_na);
    let qc = m.var_p + c0 * c0 * m.var_a + 2.0 * c0 * m.cov_pa - target.variance;
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Vec::new();
    }
    let d = disc.sqrt();
    [(-qb + d) / (2.0 * qa), (-qb - d) / (2.0 * qa)]
        .into_iter()
        .filter(|&a| a > 0.0)
        .map(|a| (a, c0 - c1 * a))
        .collect()
}

fn criterion_3() -> Outcome {
    let mut r = rng(103);
    let (mut exact_cases, mut approx_cases) = (0, 0);
    let mut worst: f64 = 0.0;
    let mut draws = 0;
    while exact_cases < 100 || approx_cases < 100 {
        draws += 1;
        check(draws < 10_000, "too many rejected draws")?;
        let pna = random_pna_set(&mut r);
        let m = summarize_pna(&pna).unwrap();
        let truth = LinearMap::new(r.random_range(0.5..2.0), r.random_range(-0.1..0.1));

        if exact_cases < 100 {
            let target = composed_pixels(&pna, &truth);
            // Keep draws where the true map is the root the selection rule picks.
            let roots = exact_roots(&m, &target);
            let picked = roots
                .iter()
                .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()))
                .copied();
            if picked.is_some_and(|(a, _)| (a - truth.gain).abs() < 1e-6) {
                let s = solve_background_map(&m, &target, SolveMode::Exact).unwrap();
                worst = worst
                    .max((s.map.gain - truth.gain).abs())
                    .max((s.map.offset - truth.offset).abs());
                exact_cases += 1;
            }
        }
        if approx_cases < 100 {
            let a = truth.gain;
            let target = ScalarStats {
                mean: m.mu_p + a * m.mu_n + truth.offset,
                variance: m.var_p + a * a * m.var_n + 2.0 * a * m.cov_pn,
                count: 1,
            };
            // The + root is the true gain when a·σN² + σPN ≥ 0.
            if a * m.var_n + m.cov_pn >= 0.0 {
                let s = solve_background_map(&m, &target, SolveMode::Approximate).unwrap();
                worst = worst
                    .max((s.map.gain - truth.gain).abs())
                    .max((s.map.offset - truth.offset).abs());
                approx_cases += 1;
            }
        }
    }
    check(
        worst <= RECOVERY_TOL,
        format!("worst recovery error {worst:e}"),
    )?;

    // Identity targets on studio-like sets, where cov(Y, N) ≥ 0.
    let mut worst_id: f64 = 0.0;
    for _ in 0..20 {
        let pna = random_pna_set(&mut r);
        let m = summarize_pna(&pna).unwrap();
        check(m.cov_pn + m.var_n >= 0.0, "fixture has cov(Y, N) < 0")?;
        let eq6 = composed_pixels(&pna, &LinearMap::identity());
        let eq10 = ScalarStats {
            mean: m.mu_p + m.mu_n,
            variance: m.var_p + m.var_n + 2.0 * m.cov_pn,
            count: 1,
        };
        for (mode, target) in [(SolveMode::Exact, eq6), (SolveMode::Approximate, eq10)] {
            let s = solve_background_map(&m, &target, mode).unwrap();
            worst_id = worst_id
                .max((s.map.gain - 1.0).abs())
                .max(s.map.offset.abs());
        }
    }
    check(
        worst_id <= IDENTITY_TOL,
        format!("identity recovered to {worst_id:e}"),
    )?;
    Ok(format!(
        "worst recovery {worst:.1e} ({draws} draws), identity {worst_id:.1e}"
    ))
}

fn criterion_4() -> Outcome {
    let mut r = rng(104);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let pna = random_pna_set(&mut r);
        let m = summarize_pna(&pna).unwrap();
        let map = LinearMap::new(r.random_range(0.1..3.0), r.random_range(-0.5..0.5));
        let direct = composed_pixels(&pna, &map);
        worst = worst
            .max(rel(m.composed_mean(&map), direct.mean))
            .max(rel(m.composed_variance(&map), direct.variance));
    }
    check(
        worst <= EXPANSION_TOL,
        format!("worst expansion error {worst:e}"),
    )?;
    Ok(format!("worst error {worst:.1e} over 100 instances"))
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let data: BenchData = generate(&CorpusSpec::default())
        .map_err(|e| e.to_string())?
        .into();
    let records = run_bench(
        &data,
        &LightingGridSpec::default(),
        &BenchOptions::default(),
    )
    .map_err(|(_, e)| e.to_string())?;
    let elapsed = start.elapsed();
    let acc = |f: f64, b: f64, v: Variant| {
        records
            .iter()
            .find(|x| x.sigma_f == f && x.sigma_b == b && x.variant == v)
            .map(|x| x.match_accuracy)
            .unwrap()
    };
    let mut failures = Vec::new();
    let mut judged = 0;
    for (f, b) in LightingGridSpec::default().cells() {
        let ratio = b / f;
        if (0.8..=1.25).contains(&ratio) {
            continue;
        }
        judged += 1;
        let (n, l, x) = (
            acc(f, b, Variant::None),
            acc(f, b, Variant::Lr),
            acc(f, b, Variant::Blr),
        );
        if x < n || x < l {
            failures.push(format!("({f}, {b}): none {n:.3} lr {l:.3} blr {x:.3}"));
        }
    }
    let (n, x) = (acc(0.5, 1.5, Variant::None), acc(0.5, 1.5, Variant::Blr));
    check(failures.is_empty(), failures.join("; "))?;
    check(
        x >= AT_EXTREME_FACTOR * n,
        format!("at (0.5, 1.5) blr {x:.3} vs none {n:.3}"),
    )?;
    check(elapsed < BENCH_BUDGET, format!("took {elapsed:?}"))?;
    Ok(format!(
        "{judged} off-diagonal cells hold; at (0.5, 1.5) blr {x:.3} vs none {n:.3}; {elapsed:.1?}"
    ))
}

fn criterion_6() -> Outcome {
    let mut r = rng(106);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let t: Vec<f64> = (0..49).map(|_| r.random()).collect();
        let a = 3.0 * (1.0 - r.random::<f64>());
        let b = r.random_range(-1.0..1.0);
        let at: Vec<f64> = t.iter().map(|v| a * v + b).collect();
        worst = worst.max((ncc(&t, &at).map_err(|e| e.to_string())? - 1.0).abs());
    }
    check(worst <= NCC_TOL, format!("ncc deviates by {worst:e}"))?;

    // Mirror-symmetric image whose right half is an affine relighting of the left.
    let (w, h, axis) = (40usize, 30usize, 19.5);
    let base = LuminanceImage::from_fn(w, h, |_, _| r.random::<f64>());
    let mut cases = 0;
    for (gain, offset) in [(1.0, 0.0), (1.5, 0.1), (0.6, -0.05)] {
        let img = LuminanceImage::from_fn(w, h, |x, y| {
            if (x as f64) < axis {
                base.get(x, y)
            } else {
                gain * base.get(w - 1 - x, y) + offset
            }
        });
        let lit = RegionMask::from_fn(w, h, |x, _| x as f64 >= axis);
        for p in [(5, 5), (10, 15), (17, 22), (2, 27), (12, 3)] {
            let c = symmetric_match(&img, p, axis, 5, 3, &lit).map_err(|e| e.to_string())?;
            check(
                c.matched_point == (w - 1 - p.0, p.1),
                format!("{p:?} matched {:?}", c.matched_point),
            )?;
            cases += 1;
        }
    }
    Ok(format!(
        "ncc worst {worst:.1e}; {cases} mirror matches exact"
    ))
}

fn criterion_7() -> Outcome {
    let corr = |ms: f64, ml: f64| ShadowCorrespondence {
        shadow_point: (0, 0),
        matched_point: (0, 0),
        mean_shadow: ms,
        mean_lit: ml,
    };
    let single = |v: f64, ms: f64, ml: f64| {
        let img = LuminanceImage::new(1, 1, vec![v]).unwrap();
        gamma_correct(&img, &RegionMask::full(1, 1), &[corr(ms, ml)])
            .unwrap()
            .0
            .get(0, 0)
    };
    let mut r = rng(107);
    for _ in 0..100 {
        let (ms, ml) = (r.random_range(0.01..1.0), r.random_range(0.01..1.0));
        check(
            single(0.0, ms, ml) == 0.0 && single(1.0, ms, ml) == 1.0,
            "fixed point moved",
        )?;
    }
    for _ in 0..1000 {
        let i = r.random_range(1e-3..1.0 - 1e-3);
        let ml = r.random_range(0.02..1.0);
        let ms = ml * r.random_range(0.01..0.999);
        let out = single(i, ms, ml);
        check(out > i, format!("({i}, {ms}, {ml}) -> {out}"))?;
    }
    let spot = single(0.25, 0.2, 0.4);
    check(
        (spot - 0.5).abs() <= GAMMA_SPOT_TOL,
        format!("spot value {spot}"),
    )?;
    Ok(format!(
        "fixed points exact; 1000 triples brighten; spot {spot}"
    ))
}

fn criterion_8() -> Outcome {
    // Canonical face landmarks under random small similarity transforms and jitter.
    let mut r = rng(108);
    let canonical = canonical_landmarks(100, 125);
    let sets: Vec<_> = (0..6)
        .map(|_| {
            let (s, th) = (r.random_range(0.95..1.05), r.random_range(-0.05..0.05));
            let (tx, ty) = (r.random_range(-2.0..2.0), r.random_range(-2.0..2.0));
            let (c, sn) = (s * f64::cos(th), s * f64::sin(th));
            LandmarkSet::new(
                canonical
                    .points
                    .iter()
                    .map(|&[x, y]| {
                        let (u, v) = (x - 50.0, y - 62.0);
                        [
                            50.0 + c * u - sn * v + tx + r.random_range(-0.5..0.5),
                            62.0 + sn * u + c * v + ty + r.random_range(-0.5..0.5),
                        ]
                    })
                    .collect(),
            )
        })
        .collect();
    let template = build_template(&sets, (100, 125)).map_err(|e| e.to_string())?;
    let img = LuminanceImage::from_fn(100, 125, |x, y| {
        let (u, v) = (x as f64 / 99.0, y as f64 / 124.0);
        0.5 + 0.2 * (3.0 * u).sin() * (2.0 * v).cos() + 0.1 * v
    });

    let mut worst_rt: f64 = 0.0;
    let mut worst_vertex: f64 = 0.0;
    for s in &sets {
        let w = fit_warp(s, &template).map_err(|e| e.to_string())?;
        let back = warp_image(
            &warp_image(&img, &w, WarpDirection::Forward).unwrap(),
            &w,
            WarpDirection::Inverse,
        )
        .unwrap();
        // Judge the face region; outside it the warp extrapolates.
        let face = blr::landmarks::face_mask(s, 100, 125).unwrap();
        for y in 0..125 {
            for x in 0..100 {
                if face.get(x, y) {
                    worst_rt = worst_rt.max((back.get(x, y) - img.get(x, y)).abs());
                }
            }
        }
        for (k, t) in w.triangles.iter().enumerate() {
            for &i in t {
                let p = w.forward[k].apply(w.source_points[i]);
                let q = w.template_points[i];
                worst_vertex = worst_vertex
                    .max((p[0] - q[0]).abs())
                    .max((p[1] - q[1]).abs());
                let p = w.inverse[k].apply(q);
                let q = w.source_points[i];
                worst_vertex = worst_vertex
                    .max((p[0] - q[0]).abs())
                    .max((p[1] - q[1]).abs());
            }
        }
    }
    let id = fit_warp(&template.mean_landmarks, &template).map_err(|e| e.to_string())?;
    let fwd = warp_image(&img, &id, WarpDirection::Forward).unwrap();
    let inv = warp_image(&img, &id, WarpDirection::Inverse).unwrap();
    check(
        fwd == img && inv == img,
        "template-to-template warp not bit-identical",
    )?;
    check(
        worst_rt <= ROUND_TRIP_TOL,
        format!("round trip residual {worst_rt}"),
    )?;
    check(
        worst_vertex < VERTEX_TOL,
        format!("vertex residual {worst_vertex:e}"),
    )?;
    Ok(format!(
        "round trip {worst_rt:.1e}; vertex {worst_vertex:.1e}; identity bit-exact"
    ))
}

fn criterion_9() -> Outcome {
    let corpus = generate(&CorpusSpec {
        training: 100,
        inputs: 1,
        width: 200,
        height: 250,
        ..CorpusSpec::default()
    })
    .map_err(|e| e.to_string())?;
    let model = BlrModel::from_training(&corpus.training).map_err(|e| e.to_string())?;
    let input = &corpus.inputs[0].photo;
    let mut best = Duration::MAX;
    for _ in 0..3 {
        let start = Instant::now();
        let out = model
            .remap(&input.composite, &input.landmarks, SolveMode::Approximate)
            .map_err(|e| e.to_string())?;
        best = best.min(start.elapsed());
        check(out.adapted_training.len() == 100, "missing adapted photos")?;
    }
    check(best < REMAP_BUDGET, format!("remap took {best:?}"))?;
    Ok(format!("remap over 100 photos at 200x250 in {best:.0?}"))
}

fn run_cli_bench(dir: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_blr"))
        .args([
            "bench",
            "--seed",
            "11",
            "--sigma-f",
            "0.5,1",
            "--sigma-b",
            "0.6,1.4",
            "--output-dir",
        ])
        .arg(dir)
        .status()
        .map_err(|e| e.to_string())?;
    check(status.success(), format!("bench exited with {status}"))?;
    std::fs::read(dir.join("bench.csv")).map_err(|e| e.to_string())
}

fn criterion_10() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let a = run_cli_bench(&tmp.path().join("a"))?;
    let b = run_cli_bench(&tmp.path().join("b"))?;
    check(a == b, "CSV differs between runs")?;
    let rows = a.iter().filter(|&&c| c == b'\n').count() - 1;
    check(rows == 12, format!("{rows} rows"))?;
    Ok(format!("{} bytes, {rows} rows identical", a.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("step-1 face statistics matching", criterion_1),
        ("step-2 set statistics matching", criterion_2),
        ("background solver recovery", criterion_3),
        ("composed moment expansion", criterion_4),
        ("lighting grid benchmark", criterion_5),
        ("NCC invariance and mirror search", criterion_6),
        ("gamma correction", criterion_7),
        ("pose round trip", criterion_8),
        ("remap overhead", criterion_9),
        ("benchmark determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = format!("criterion {}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|x| id.ends_with(&format!(" {x}"))) {
            continue;
        }
        match f() {
            Ok(detail) => println!("{id}: PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("{id}: FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
