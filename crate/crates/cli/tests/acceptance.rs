//! End-to-end acceptance run: one line per criterion, nonzero exit on any failure.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use whitney::chart::ChartPoint;
use whitney::geometry::{geometry_state, geometry_state_with, Depth, GeometryOptions, GeometryState};
use whitney::identities::{
    check_simons_identity, check_simons_inequality, contraction_identities_random, invariant_scalars,
    li_li_random, norm_identity_random, run_identity_suite, simons_bound_random, SuiteOptions,
};
use whitney::immersion::{
    make_perturbed_whitney, make_product_torus, make_whitney_cn, make_whitney_cpn, Immersion, ImmersionSpec,
};
use whitney::quadrature::{energy_report, QuadratureRule};
use whitney::tensor::{norm_identity_residual, random_orthogonal};
use whitney_cli::{identities, RunConfig};

const SEED: u64 = 20261017;

// criterion 1
const WHITNEY_CN_TOL: f64 = 1e-8;
const WHITNEY_CN_BUDGET: Duration = Duration::from_secs(30);
// criterion 2
const WHITNEY_CPN_TOL: f64 = 1e-6;
const WHITNEY_CPN_BUDGET: Duration = Duration::from_secs(60);
// criteria 3, 5
const ALGEBRAIC_TOL: f64 = 1e-10;
const CONTRACTION_BUDGET: Duration = Duration::from_secs(60);
// criterion 6
const LI_LI_SLACK: f64 = 1e-12;
// criterion 7
const SIMONS_TORUS_RHS_TOL: f64 = 1e-9;
const SIMONS_TORUS_LHS_TOL: f64 = 1e-4;
const SIMONS_PERTURBED_TOL: f64 = 1e-3;
// criterion 8
const SIMONS_MARGIN_SLACK: f64 = 1e-9;
const SIMONS_ALGEBRAIC_SLACK: f64 = 1e-10;
// criterion 9
const ENERGY_ORACLE_TOL: f64 = 1e-6;
const WHITNEY_ENERGY_TOL: f64 = 1e-7;
const DILATION_TOL: f64 = 1e-8;
// criterion 10
const INVARIANCE_TOL: f64 = 1e-9;

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: String) -> Verdict {
    Verdict { passed, detail }
}

fn points(imm: &Immersion, count: usize, seed: u64) -> Vec<ChartPoint> {
    imm.sample_points(count, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn vanishing(imm: &Immersion, count: usize, seed: u64, states: &mut Vec<GeometryState>) -> (f64, f64) {
    let (mut hh, mut tt) = (0.0f64, 0.0f64);
    for p in points(imm, count, seed) {
        let st = geometry_state(imm, &p, Depth::WithDerivatives).expect("state");
        hh = hh.max(st.hhat.norm2().sqrt());
        tt = tt.max(st.t.as_ref().expect("T at first-derivative depth").norm2().sqrt());
        states.push(st);
    }
    (hh, tt)
}

fn norm_identity_worst(states: &[GeometryState]) -> f64 {
    states
        .iter()
        .map(|s| norm_identity_residual(&s.h, &s.hhat, &s.mean_curvature) / (1.0 + s.h.norm2()))
        .fold(0.0, f64::max)
}

fn whitney_cn(geometric: &mut Vec<GeometryState>) -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut hh, mut tt) = (0.0f64, 0.0f64);
    let mut cases = 0;
    for n in 2..=5 {
        for r in [0.5, 1.0, 2.0] {
            let random: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
            for center in [vec![[0.0, 0.0]; n], random] {
                let imm = make_whitney_cn(r, &center, n).expect("whitney sphere");
                let (a, b) = vanishing(&imm, 50, SEED + cases, geometric);
                hh = hh.max(a);
                tt = tt.max(b);
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        hh < WHITNEY_CN_TOL && tt < WHITNEY_CN_TOL && elapsed < WHITNEY_CN_BUDGET,
        format!("{cases} spheres x 50 points, max |hhat| {hh:.2e}, max |T| {tt:.2e}, {elapsed:.1?}"),
    )
}

fn whitney_cpn(geometric: &mut Vec<GeometryState>) -> Verdict {
    let start = Instant::now();
    let (mut hh, mut tt) = (0.0f64, 0.0f64);
    for n in [2, 3] {
        for theta in [0.5, 1.0] {
            let imm = make_whitney_cpn(theta, n).expect("whitney sphere in CP^n");
            let (a, b) = vanishing(&imm, 30, SEED + n as u64, geometric);
            hh = hh.max(a);
            tt = tt.max(b);
        }
    }
    let elapsed = start.elapsed();
    verdict(
        hh < WHITNEY_CPN_TOL && tt < WHITNEY_CPN_TOL && elapsed < WHITNEY_CPN_BUDGET,
        format!("4 spheres x 30 points, max |hhat| {hh:.2e}, max |T| {tt:.2e}, {elapsed:.1?}"),
    )
}

fn norm_identity(geometric: &[GeometryState]) -> Verdict {
    let algebraic = (2..=5)
        .map(|n| norm_identity_random(n, 1000, SEED).expect("random instances"))
        .fold(0.0, f64::max);
    let sampled = norm_identity_worst(geometric);
    verdict(
        algebraic < ALGEBRAIC_TOL && sampled < ALGEBRAIC_TOL && !geometric.is_empty(),
        format!("4000 random tensors {algebraic:.2e}, {} geometric samples {sampled:.2e}", geometric.len()),
    )
}

const STRUCTURE_CHECKS: [&str; 6] = [
    "tri_symmetry",
    "codazzi",
    "mean_curvature_gradient_symmetry",
    "t_two_expressions",
    "gauss_two_methods",
    "ricci_normal_curvature",
];

fn structure_equations() -> Verdict {
    let specs = [
        ImmersionSpec::Plane { n: 3, complexify: None },
        ImmersionSpec::ProductTorus { radii: vec![1.0, 2.0] },
        ImmersionSpec::WhitneyCn { n: 3, r: 1.5, center: Some(vec![[0.2, -0.1], [0.0, 0.3], [1.0, 0.0]]) },
        ImmersionSpec::PerturbedWhitney { n: 3, r: 1.0, eps: 0.05, mode: 1 },
        ImmersionSpec::Rpn { n: 3 },
        ImmersionSpec::WhitneyCpn { n: 2, theta: 0.8 },
    ];
    let opts = SuiteOptions { samples: 10, seed: SEED, tol_scale: 1.0, simons_points: 0 };
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for spec in &specs {
        let imm = spec.build().expect("family");
        let report = run_identity_suite(&imm, &opts).expect("suite");
        for c in report.checks.iter().filter(|c| STRUCTURE_CHECKS.contains(&c.name.as_str())) {
            worst = worst.max(c.max_residual / c.tolerance);
            if !c.passed || c.samples == 0 {
                failures.push(format!("{}:{}", imm.name(), c.name));
            }
        }
    }
    verdict(
        failures.is_empty(),
        format!("6 families x {} checks, worst residual/tolerance {worst:.2e} {failures:?}", STRUCTURE_CHECKS.len()),
    )
}

fn contraction_identities() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in 2..=5 {
        let list = contraction_identities_random(n, 1000, SEED).expect("contractions");
        count = list.len();
        worst = list.iter().map(|(_, v)| *v).fold(worst, f64::max);
    }
    let elapsed = start.elapsed();
    verdict(
        worst < ALGEBRAIC_TOL && count >= 8 && elapsed < CONTRACTION_BUDGET,
        format!("{count} identities x 1000 pairs x n=2..5, max residual {worst:.2e}, {elapsed:.1?}"),
    )
}

fn li_li() -> Verdict {
    let excess = li_li_random(100_000, SEED, 5).expect("matrix tuples");
    verdict(excess <= LI_LI_SLACK, format!("100000 tuples, max LHS - 3/2 S^2 = {excess:.3e}"))
}

fn simons_identity() -> Verdict {
    let torus = make_product_torus(&[1.0, 2.0]).expect("torus");
    let (mut lhs, mut rhs) = (0.0f64, 0.0f64);
    for p in points(&torus, 5, SEED) {
        let s = check_simons_identity(&torus, &p).expect("torus terms");
        let n = s.n as f64;
        let exact = (n + 2.0) * s.hhat_grad_t_jet.expect("jet grad T") + s.grad_hhat_norm2 + s.curvature_terms;
        lhs = lhs.max(s.lhs.abs());
        rhs = rhs.max(exact.abs());
    }
    let perturbed = make_perturbed_whitney(2, 1.0, 0.05, 1).expect("perturbed whitney");
    let mut relres = 0.0f64;
    for p in points(&perturbed, 5, SEED) {
        relres = relres.max(check_simons_identity(&perturbed, &p).expect("terms").relative_residual);
    }
    verdict(
        lhs < SIMONS_TORUS_LHS_TOL && rhs < SIMONS_TORUS_RHS_TOL && relres < SIMONS_PERTURBED_TOL,
        format!("torus |lhs| {lhs:.2e}, |rhs| {rhs:.2e}; perturbed whitney relative residual {relres:.2e}"),
    )
}

fn simons_inequality() -> Verdict {
    let families = [
        make_product_torus(&[1.0, 2.0]).expect("torus"),
        make_product_torus(&[1.0, 1.0, 1.5]).expect("torus"),
        make_whitney_cn(1.0, &[[0.0, 0.0]; 3], 3).expect("whitney"),
        make_whitney_cpn(0.7, 2).expect("whitney cpn"),
    ];
    let mut margin = f64::INFINITY;
    for imm in &families {
        for p in points(imm, 3, SEED) {
            let s = check_simons_inequality(imm, &p).expect("inequality");
            margin = margin.min(s.margin);
        }
    }
    let algebraic = (2..=5)
        .flat_map(|n| [0.0, 1.0].map(|c| simons_bound_random(n, 1000, SEED, c).expect("bound")))
        .fold(f64::INFINITY, f64::min);
    verdict(
        margin >= -SIMONS_MARGIN_SLACK && algebraic >= -SIMONS_ALGEBRAIC_SLACK,
        format!("geometric min margin {margin:.2e}, algebraic min margin {algebraic:.2e}"),
    )
}

fn energies() -> Verdict {
    let torus = make_product_torus(&[1.0, 1.0]).expect("torus");
    let e = energy_report(&torus, &QuadratureRule::for_immersion(&torus, None).unwrap()).expect("energy");
    let d_hhat = (e.hhat_2 - 2.0 * PI * PI).abs();
    let d_h = (e.h_2 - 8.0 * PI * PI).abs();

    let mut whitney = 0.0f64;
    for (n, degree) in [(2, 30), (3, 20), (4, 10), (5, 6)] {
        let imm = make_whitney_cn(1.3, &vec![[0.1, -0.2]; n], n).expect("whitney");
        let rule = QuadratureRule::for_immersion(&imm, Some(degree)).unwrap();
        whitney = whitney.max(energy_report(&imm, &rule).expect("energy").hhat_n);
    }

    let mut dilation = 0.0f64;
    let bodies = [
        (make_perturbed_whitney(2, 1.0, 0.05, 1).expect("perturbed"), 30),
        (make_product_torus(&[1.0, 2.0]).expect("torus"), 32),
    ];
    for (imm, degree) in bodies {
        let rule = QuadratureRule::for_immersion(&imm, Some(degree)).unwrap();
        let base = energy_report(&imm, &rule).expect("energy").hhat_n;
        for lambda in [0.5, 2.0, 10.0] {
            let scaled = imm.clone().dilated(lambda).expect("dilation");
            let v = energy_report(&scaled, &rule).expect("energy").hhat_n;
            dilation = dilation.max((v - base).abs());
        }
    }
    verdict(
        d_hhat < ENERGY_ORACLE_TOL && d_h < ENERGY_ORACLE_TOL && whitney < WHITNEY_ENERGY_TOL && dilation < DILATION_TOL,
        format!(
            "torus errors {d_hhat:.1e} / {d_h:.1e}, whitney max {whitney:.1e}, dilation drift {dilation:.1e}"
        ),
    )
}

fn invariance() -> Verdict {
    let families = [
        make_whitney_cn(0.8, &[[0.3, 0.1], [-0.5, 0.2], [0.0, 1.0]], 3).expect("whitney"),
        make_perturbed_whitney(2, 1.0, 0.05, 1).expect("perturbed"),
        make_product_torus(&[1.0, 2.0]).expect("torus"),
        make_whitney_cpn(0.6, 2).expect("whitney cpn"),
        ImmersionSpec::Rpn { n: 3 }.build().expect("rpn"),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (mut gauge, mut chart, mut charts_compared) = (0.0f64, 0.0f64, 0);
    let fixed = GeometryOptions { gauge: None, keep_chart: true };
    let depth = Depth::WithSecondDerivatives;
    for imm in &families {
        for p in imm.sample_points(20, &mut rng) {
            let p = imm.source().canonicalize(&p).unwrap();
            let base = geometry_state_with(imm, &p, depth, &fixed).unwrap();
            let q = random_orthogonal(imm.dim(), &mut rng);
            let opts = GeometryOptions { gauge: Some(q), keep_chart: true };
            gauge = gauge.max(max_change(&base, &geometry_state_with(imm, &p, depth, &opts).unwrap()));
            if imm.source().chart_count() == 2 && p.norm() > 0.25 {
                let other = imm.source().transition(&p, 1 - p.chart).unwrap();
                chart = chart.max(max_change(&base, &geometry_state_with(imm, &other, depth, &fixed).unwrap()));
                charts_compared += 1;
            }
        }
    }
    verdict(
        gauge < INVARIANCE_TOL && chart < INVARIANCE_TOL && charts_compared > 0,
        format!("gauge change {gauge:.2e}, chart change {chart:.2e} over {charts_compared} overlap points"),
    )
}

fn max_change(a: &GeometryState, b: &GeometryState) -> f64 {
    invariant_scalars(a)
        .iter()
        .zip(invariant_scalars(b))
        .map(|((_, x), (_, y))| (x - y).abs())
        .fold(0.0, f64::max)
}

fn determinism() -> Verdict {
    let configs = [
        r#"{"immersion": {"family": "product_torus", "radii": [1, 2]}, "seed": 7}"#,
        "immersion.family = perturbed_whitney\nimmersion.n = 2\nimmersion.r = 1\nimmersion.eps = 0.05\nsamples = 12\nseed = 3\n",
    ];
    let mut identical = true;
    let mut bytes = 0;
    for text in configs {
        let cfg = RunConfig::parse(text).expect("config");
        let first = identities(&cfg).expect("first run").text;
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let serial = pool.install(|| identities(&cfg).expect("single-threaded run").text);
        let again = identities(&cfg).expect("second run").text;
        identical &= first == again && first == serial && first.ends_with('\n');
        bytes += first.len();
    }
    verdict(identical, format!("2 configs, 3 runs each (one single-threaded), {bytes} bytes compared"))
}

fn main() {
    let mut geometric = Vec::new();
    let c1 = whitney_cn(&mut geometric);
    let c2 = whitney_cpn(&mut geometric);
    let results = [
        ("1 whitney spheres in C^n: hhat = 0, T = 0", c1),
        ("2 whitney spheres in CP^n: hhat = 0, T = 0", c2),
        ("3 norm identity", norm_identity(&geometric)),
        ("4 structure equations", structure_equations()),
        ("5 contraction identities", contraction_identities()),
        ("6 matrix inequality", li_li()),
        ("7 laplacian formula", simons_identity()),
        ("8 laplacian lower bound", simons_inequality()),
        ("9 energy functionals", energies()),
        ("10 gauge and chart invariance", invariance()),
        ("11 determinism", determinism()),
    ];
    let mut failed = 0;
    for (name, v) in &results {
        let tag = if v.passed { "PASS" } else { "FAIL" };
        println!("[{tag}] {name}: {}", v.detail);
        failed += usize::from(!v.passed);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
