//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use enet_core::energy::EnergySpace;
use enet_core::spectral::{compare_spectra, defect_probe_chain, krein_contraction};
use enet_core::variation::{dyadic_intervals, random_unit_vector, random_upper};
use enet_core::{generate_chain, make_pair, random_network, ChainProfile, Network, VertexId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn FnOnce() -> Check + 'a>);

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn seeded_graph(seed: u64) -> Network {
    let mut r = rng(seed);
    let n = r.gen_range(3..=30);
    let p = r.gen_range(0.05..0.4);
    random_network(&mut r, n, p, 0.1, 10.0).expect("random network")
}

fn triangle() -> Network {
    Network::new(3, vec![(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)], 0).unwrap()
}

fn geometric(n: usize) -> Network {
    generate_chain(n, ChainProfile::Geometric(2.0)).unwrap()
}

fn unit(n: usize) -> Network {
    generate_chain(n, ChainProfile::Unit).unwrap()
}

/// (label, base, upper) pairs shared by the intertwining and isometry checks.
fn comparison_pairs() -> Vec<(String, Network, Network)> {
    let mut pairs = vec![
        ("unit/geometric n=20".to_string(), unit(20), geometric(20)),
        ("unit/geometric n=30".to_string(), unit(30), geometric(30)),
    ];
    let c = seeded_graph(7000);
    pairs.push(("c/2c".into(), c.clone(), c.scaled(2.0).unwrap()));
    let g = geometric(12);
    pairs.push(("geometric/2·geometric".into(), g.clone(), g.scaled(2.0).unwrap()));
    for seed in 0..20 {
        let base = seeded_graph(5000 + seed);
        let upper = random_upper(&mut rng(6000 + seed), &base).unwrap();
        pairs.push((format!("seed {seed}"), base, upper));
    }
    pairs
}

fn timed(budget: Option<Duration>, f: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    match (out, budget) {
        (Ok(msg), Some(b)) if took > b => Err(format!("{msg}; took {took:?} > {b:?}")),
        (Ok(msg), _) => Ok(format!("{msg}; {took:.2?}")),
        (Err(msg), _) => Err(format!("{msg}; {took:.2?}")),
    }
}

fn ensure(ok: bool, msg: String) -> Check {
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn chain_dipole() -> Check {
    let net = geometric(20);
    let space = EnergySpace::new(&net).map_err(|e| e.to_string())?;
    let v = space.dipole(VertexId(19), VertexId(0)).map_err(|e| e.to_string())?;
    let worst = (0..19)
        .map(|k| ((v.at(VertexId(k + 1)) - v.at(VertexId(k))) - 0.5f64.powi(k as i32)).abs())
        .fold(0.0, f64::max);
    ensure(worst <= 1e-10, format!("max increment error {worst:.3e}"))
}

fn chain_resistance() -> Check {
    let net = geometric(20);
    let space = EnergySpace::new(&net).map_err(|e| e.to_string())?;
    let mut worst = 0.0_f64;
    for n in 0..=17 {
        let d = space.resistance(VertexId(n), VertexId(n + 1)).map_err(|e| e.to_string())?;
        worst = worst.max((d - 0.5f64.powi(n as i32)).abs());
    }
    ensure(worst <= 1e-10, format!("max |dist(n, n+1) − 2^-n| {worst:.3e}"))
}

fn trace_formula() -> Check {
    let mut worst = 0.0_f64;
    let mut limits_ok = true;
    for n in [3, 5, 10, 20, 30] {
        let pair = make_pair(&unit(n), &geometric(n)).map_err(|e| e.to_string())?;
        let t = pair.trace_gram().map_err(|e| e.to_string())?;
        let want = 2.0 - 0.5f64.powi(n as i32 - 2);
        worst = worst.max((t.trace - want).abs()).max((t.trace_dipole_basis - want).abs());
        limits_ok &= t.limit == Some(2.0);
    }
    ensure(worst <= 1e-9 && limits_ok, format!("max trace error {worst:.3e}, limit 2 reported: {limits_ok}"))
}

fn spectral_equality() -> Check {
    let mut nets: Vec<Network> = (0..50).map(seeded_graph).collect();
    nets.push(triangle());
    for n in [2, 10, 20, 30] {
        for p in [ChainProfile::Unit, ChainProfile::Geometric(2.0), ChainProfile::Linear] {
            nets.push(generate_chain(n, p).unwrap());
        }
        nets.push(generate_chain(n, ChainProfile::TwoSidedGeometric(2.0)).unwrap());
    }
    let mut worst = 0.0_f64;
    let mut unmatched = 0;
    for net in &nets {
        let cmp = compare_spectra(net, 1e-8).map_err(|e| e.to_string())?;
        worst = worst.max(cmp.max_dev);
        unmatched += usize::from(!cmp.matched);
    }
    ensure(
        unmatched == 0,
        format!("{} networks, {unmatched} unmatched, max relative deviation {worst:.3e}", nets.len()),
    )
}

fn parseval_frame() -> Check {
    let mut nets: Vec<Network> = (0..50).map(|s| seeded_graph(1000 + s)).collect();
    nets.push(triangle());
    let mut worst_rec = 0.0_f64;
    let mut worst_norm = 0.0_f64;
    for (k, net) in nets.iter().enumerate() {
        let fs = enet_core::build_frame(net, 1e-12).map_err(|e| e.to_string())?;
        let mut r = rng(2000 + k as u64);
        for _ in 0..3 {
            let u = random_unit_vector(&mut r, fs.space()).map_err(|e| e.to_string())?;
            let coeffs = fs.analyze(&u).map_err(|e| e.to_string())?;
            let back = fs.synthesize(&coeffs).map_err(|e| e.to_string())?;
            let rec = fs.space().norm_sq(&back.sub(&u)).max(0.0).sqrt();
            let norm = (coeffs.iter().map(|c| c * c).sum::<f64>() - fs.space().norm_sq(&u)).abs();
            worst_rec = worst_rec.max(rec);
            worst_norm = worst_norm.max(norm);
        }
    }
    ensure(
        worst_rec <= 1e-9 && worst_norm <= 1e-9,
        format!("{} networks, reconstruction {worst_rec:.3e}, norm {worst_norm:.3e}", nets.len()),
    )
}

fn krein_contractivity() -> Check {
    let mut worst_res = 0.0_f64;
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for seed in 0..20 {
        let b = krein_contraction(&seeded_graph(3000 + seed)).map_err(|e| e.to_string())?;
        worst_res = worst_res.max(b.dipole_span_residual().map_err(|e| e.to_string())?);
        lo = lo.min(b.eigenvalues[0]);
        hi = hi.max(*b.eigenvalues.last().unwrap());
    }
    ensure(
        worst_res <= 1e-9 && lo >= -1e-10 && hi <= 1.0 + 1e-10,
        format!("identity residual {worst_res:.3e}, spectrum in [{lo:.3e}, {hi:.12}]"),
    )
}

fn intertwining(pairs: &[(String, Network, Network)]) -> Check {
    let mut worst = (0.0_f64, String::new());
    for (label, base, upper) in pairs {
        let pair = make_pair(base, upper).map_err(|e| format!("{label}: {e}"))?;
        let r = pair.intertwine_check(base.edges().len()).map_err(|e| format!("{label}: {e}"))?;
        if r.max_relative >= worst.0 {
            worst = (r.max_relative, label.clone());
        }
    }
    ensure(
        worst.0 <= 1e-8,
        format!("{} pairs, max relative residual {:.3e} ({})", pairs.len(), worst.0, worst.1),
    )
}

fn isometry(pairs: &[(String, Network, Network)]) -> Check {
    let mut worst = (0.0_f64, String::new());
    for (label, base, upper) in pairs {
        let pair = make_pair(base, upper).map_err(|e| format!("{label}: {e}"))?;
        let w = pair.isometric_factor().map_err(|e| format!("{label}: {e}"))?;
        if w.isometry_defect >= worst.0 {
            worst = (w.isometry_defect, label.clone());
        }
    }
    ensure(worst.0 <= 1e-9, format!("{} pairs, max ‖W*W − I‖ {:.3e} ({})", pairs.len(), worst.0, worst.1))
}

fn deficiency_probe() -> Check {
    let geo = defect_probe_chain(ChainProfile::Geometric(2.0), 200).map_err(|e| e.to_string())?;
    let uni = defect_probe_chain(ChainProfile::Unit, 200).map_err(|e| e.to_string())?;
    ensure(
        geo.plateau && !uni.plateau,
        format!(
            "geometric plateau {} (S = {:.6}), unit plateau {}",
            geo.plateau,
            geo.final_sum(),
            uni.plateau
        ),
    )
}

fn harmonic_witness() -> Check {
    let limit = enet_core::harmonics::two_sided_staircase_limit(2.0);
    let mut prev = 0.0;
    let mut worst_res = 0.0_f64;
    let mut worst_closed = 0.0_f64;
    let mut monotone = true;
    let mut bounded = true;
    let mut last = 0.0;
    for n in (3..=41).step_by(2) {
        let w = enet_core::harmonics::staircase_witness(2.0, n).map_err(|e| e.to_string())?;
        let oracle = 2.0 * (1.0 - 0.5f64.powi((n / 2) as i32));
        worst_res = worst_res.max(w.interior_residual);
        worst_closed = worst_closed.max((w.energy - oracle).abs());
        monotone &= w.energy >= prev - 1e-12;
        bounded &= w.energy <= limit + 1e-9;
        prev = w.energy;
        last = w.energy;
    }
    ensure(
        worst_res <= 1e-10 && worst_closed <= 1e-9 && monotone && bounded && (limit - 2.0).abs() < 1e-15,
        format!(
            "interior residual {worst_res:.3e}, closed-form error {worst_closed:.3e}, monotone {monotone}, \
             bounded {bounded}, energy {last:.12} → limit {limit}"
        ),
    )
}

fn moment_domination() -> Check {
    let mut failures = 0;
    let mut flags_failed = 0;
    let mut rows = 0;
    let mut tightest = f64::INFINITY;
    for seed in 0..20 {
        let base = seeded_graph(8000 + seed);
        let mut r = rng(9000 + seed);
        let upper = random_upper(&mut r, &base).map_err(|e| e.to_string())?;
        let pair = make_pair(&base, &upper).map_err(|e| e.to_string())?;
        let u = random_unit_vector(&mut r, pair.base()).map_err(|e| e.to_string())?;
        let rep = pair.spectral_domination(&u, &dyadic_intervals(64.0, 8)).map_err(|e| e.to_string())?;
        failures += rep.moments.iter().filter(|m| !m.holds).count();
        for m in &rep.moments {
            tightest = tightest.min(m.rhs - m.lhs);
        }
        flags_failed += rep.flags_failed();
        rows += rep.rows.len();
    }
    ensure(
        failures == 0,
        format!(
            "80 moment checks, {failures} violated, smallest gap {tightest:.3e}; \
             interval report (observational): {flags_failed}/{rows} intervals not dominated"
        ),
    )
}

fn main() -> ExitCode {
    let pairs = comparison_pairs();
    let ms = Duration::from_millis;
    let criteria: Vec<Criterion> = vec![
        ("chain dipole increments", Box::new(|| timed(Some(ms(100)), chain_dipole))),
        ("chain resistance", Box::new(|| timed(None, chain_resistance))),
        ("trace of j j*", Box::new(|| timed(Some(ms(1000)), trace_formula))),
        ("spectral equality", Box::new(|| timed(Some(ms(10_000)), spectral_equality))),
        ("Parseval frame", Box::new(|| timed(Some(ms(5000)), parseval_frame))),
        ("Krein contraction", Box::new(|| timed(None, krein_contractivity))),
        ("intertwining", Box::new(|| timed(None, || intertwining(&pairs)))),
        ("isometric factor", Box::new(|| timed(None, || isometry(&pairs)))),
        ("deficiency probe", Box::new(|| timed(Some(ms(100)), deficiency_probe))),
        ("harmonic witness", Box::new(|| timed(None, harmonic_witness))),
        ("moment domination", Box::new(|| timed(None, moment_domination))),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.into_iter().enumerate() {
        match run() {
            Ok(msg) => println!("criterion {:>2} PASS  {name}: {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {msg}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
