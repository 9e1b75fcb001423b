//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::Instant;

use corner_qed::analysis::{fit_decay_rate, BicCandidate, BIC_ABSENT};
use corner_qed::config::ExperimentConfig;
use corner_qed::dynamics::{evolve, initial_excited_state, propagate, uniform_grid, PropagationOptions};
use corner_qed::experiment::{execute, setup, sweep, RunSummary};
use corner_qed::lattice::{build_periodic, dispersion_deviation, k_grid, single_mode};
use corner_qed::polaron::{solve_selfconsistent, EmitterSpec, PolaronError, SolverOptions};
use num_complex::Complex64 as C64;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn preset(name: &str, sets: &[(&str, toml::Value)]) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset(name).expect("preset");
    for (k, v) in sets {
        c = c.with_value(k, v.clone()).expect("override");
    }
    c
}

fn int(v: i64) -> toml::Value {
    toml::Value::Integer(v)
}

fn float(v: f64) -> toml::Value {
    toml::Value::Float(v)
}

fn run(c: &ExperimentConfig) -> RunSummary {
    execute(c).unwrap_or_else(|e| panic!("{}: {e}", c.name)).summary
}

/// Periodic lattices against the closed-form dispersion, both as sorted
/// spectra and as Bloch eigenvector residuals at every grid k.
fn dispersion_fidelity() -> Outcome {
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    for d in 1..=3 {
        let bath = build_periodic(d, 10, 2.5, 1.0).unwrap();
        let spectral = dispersion_deviation(&bath);
        let h = bath.single_particle_matrix();
        let mut bloch = 0.0f64;
        for k in k_grid(d, 10) {
            let psi: Vec<C64> = bath
                .sites()
                .iter()
                .map(|c| C64::from_polar(1.0, (0..d).map(|a| k[a] * c[a] as f64).sum()))
                .collect();
            let mut hpsi = vec![C64::new(0.0, 0.0); psi.len()];
            h.mul_vec_c(&psi, &mut hpsi);
            let w = bath.geometry().dispersion(2.5, 1.0, &k);
            bloch = hpsi.iter().zip(&psi).map(|(a, b)| (a - b * w).norm()).fold(bloch, f64::max);
        }
        worst = worst.max(spectral).max(bloch);
        parts.push(format!("{d}D spectrum {spectral:.1e} Bloch {bloch:.1e}"));
    }
    outcome(worst <= 1e-12, format!("{} (tol 1e-12)", parts.join(", ")))
}

fn parity_1d() -> Outcome {
    let even = run(&preset("fig1", &[("emitter", int(12))]));
    let odd = run(&preset("fig1", &[("emitter", int(11))]));
    let proj = even.spectral_projection.unwrap_or(f64::NAN);
    let gap = (even.p_bic.value - proj).abs();
    let pass = even.p_bic.plateau && even.p_bic.value > 0.1 && odd.p_bic.value < BIC_ABSENT && gap <= 0.02;
    outcome(
        pass,
        format!(
            "x0=12 P_BIC {:.4} (plateau {}, std {:.1e}), projection {:.4}, gap {:.1e}; x0=11 P_BIC {:.2e}",
            even.p_bic.value, even.p_bic.plateau, even.p_bic.std, proj, gap, odd.p_bic.value
        ),
    )
}

/// Qubit and photon components of the bound state along a g sweep up to
/// the bandwidth W = 4J = 1.6Δ.
fn composition_trend() -> Outcome {
    let gs = [
        0.01, 0.02, 0.05, 0.08, 0.1, 0.12, 0.13, 0.14, 0.15, 0.16, 0.17, 0.18, 0.2, 0.25, 0.3, 0.4, 0.6, 0.8, 1.0,
        1.2, 1.4, 1.6,
    ];
    let rows = sweep(&preset("fig1", &[("t_max", float(100.0))]), "g", &gs, 1, None).unwrap();
    let Some(up): Option<Vec<f64>> = rows.iter().map(|r| r.bound_qubit_weight).collect() else {
        return outcome(false, "no bound state found for some g".into());
    };
    let gamma: Vec<f64> = up.iter().map(|u| 1.0 - u).collect();
    let up_ok = up.windows(2).all(|w| w[1] <= w[0]);
    let gamma_ok = gamma.windows(2).all(|w| w[1] >= w[0]);
    let (k, gap) = up
        .iter()
        .zip(&gamma)
        .map(|(u, p)| (u - p).abs())
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    outcome(
        up_ok && gamma_ok && gap < 0.05,
        format!(
            "{} couplings 0.01..1.6 Δ; P_up non-increasing {up_ok}, P_gamma non-decreasing {gamma_ok}; crossover at g = {} Δ with |P_up - P_gamma| = {gap:.3}",
            gs.len(),
            gs[k]
        ),
    )
}

fn usc_decay() -> Outcome {
    let t: Vec<f64> = (0..400).map(|k| 0.5 * k as f64).collect();
    let n: Vec<f64> = t.iter().map(|t| 0.7 * (-0.004 * t).exp()).collect();
    let synth = fit_decay_rate(&t, &n, 0.0).unwrap();
    let synth_ok = ((synth.gamma - 0.004) / 0.004).abs() < 0.01;

    let base = preset("fig1", &[("frame", toml::Value::String("polaron".into()))]);
    let weak = sweep(&base, "g", &[0.01, 0.02], 1, None).unwrap();
    let usc_g = [0.1, 0.15, 0.2, 0.25];
    let usc = sweep(&base, "g", &usc_g, 1, None).unwrap();
    let weak_ok = weak.iter().all(|r| r.floor_flag == Some(true));
    let gam: Vec<f64> = usc.iter().map(|r| r.gamma.unwrap_or(f64::NAN)).collect();
    let usc_ok = usc.iter().all(|r| r.floor_flag == Some(false)) && gam.windows(2).all(|w| w[1] > w[0]);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ");
    outcome(
        synth_ok && weak_ok && usc_ok,
        format!(
            "synthetic γ {:.6} vs 0.004; weak g 0.01,0.02 Δ γ [{}] floored {weak_ok}; USC g 0.1..0.25 Δ γ [{}] positive and increasing {usc_ok}",
            synth.gamma,
            fmt(&weak.iter().map(|r| r.gamma.unwrap_or(f64::NAN)).collect::<Vec<_>>()),
            fmt(&gam)
        ),
    )
}

fn corner_2d() -> Outcome {
    let positions = [("A", 1), ("B", 2), ("C", 3), ("D", 5), ("E", 7)];
    let mut parts = Vec::new();
    let mut pass = true;
    let mut e_map_ok = false;
    for (label, n) in positions {
        let c = preset("fig2", &[("emitter", int(n)), ("spectrum", toml::Value::Boolean(label == "E"))]);
        let out = execute(&c).unwrap();
        let s = &out.summary;
        let ok = if label == "B" { s.p_bic.value < BIC_ABSENT } else { s.p_bic.plateau };
        pass &= ok;
        parts.push(format!("{label} {:.4}{}", s.p_bic.value, if s.p_bic.plateau { "" } else { "*" }));
        if label == "E" {
            let site = out.setup.emitter.site;
            let dyn_ratio = out.density.density[site] / out.density.max();
            let cand: Option<&BicCandidate> = out.candidates.as_ref().and_then(|c| c.first());
            let (spec_ratio, weight) = cand
                .map(|b| {
                    let d: Vec<f64> = b.vector[1..].iter().map(|v| v * v).collect();
                    let max = d.iter().copied().fold(0.0, f64::max);
                    (d[site] / max, b.region_weight)
                })
                .unwrap_or((f64::NAN, 0.0));
            e_map_ok = dyn_ratio < 0.01 && spec_ratio < 0.01 && weight >= 0.5;
            parts.push(format!(
                "E map: emitter/max {dyn_ratio:.1e} (final state), {spec_ratio:.1e} (bound state), corner weight {weight:.3}"
            ));
        }
    }
    outcome(pass && e_map_ok, format!("P_BIC {} (* = no plateau; B must be < 0.01)", parts.join(", ")))
}

fn directionality() -> Outcome {
    let base = |delta: f64| {
        let text = format!(
            "name = \"bulk\"\ngeometry = \"rhombus\"\nextent = 120\nunits = \"j\"\nomega_a = 2.5\nhopping = 1.0\n\
             delta = {delta}\ng = 0.025\nemitter = 120\ndt = 0.1\nt_max = 20.0\nspectrum = false\nsnapshot_every = 0\n"
        );
        ExperimentConfig::from_toml_str(&text).unwrap()
    };
    let res = run(&base(2.5)).directionality.unwrap();
    let det = run(&base(5.5)).directionality.unwrap();
    outcome(
        res >= 0.8 && det <= 0.5 * res,
        format!("bulk rhombus L=120, t=20/J, half width 2: resonant {res:.3}, detuned by 3J {det:.3}"),
    )
}

fn corner_3d() -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for (label, n) in [("A", 1), ("B", 2), ("C", 3), ("D", 5)] {
        let s = run(&preset("fig3", &[("emitter", int(n))]));
        let ok = if label == "B" { s.p_bic.value < BIC_ABSENT } else { s.p_bic.plateau };
        pass &= ok;
        parts.push(format!("{label} {:.4}{}", s.p_bic.value, if s.p_bic.plateau { "" } else { "*" }));
    }
    outcome(pass, format!("P_BIC {} (* = no plateau; B must be < 0.01)", parts.join(", ")))
}

fn chain_oracle() -> Outcome {
    let cases = [
        ("1D M=N", preset("fig1", &[("chain_modes", int(400)), ("t_max", float(100.0)), ("spectrum", false.into())])),
        (
            "1D polaron M=N",
            preset(
                "fig1",
                &[
                    ("chain_modes", int(400)),
                    ("t_max", float(100.0)),
                    ("g", float(0.2)),
                    ("frame", toml::Value::String("polaron".into())),
                    ("spectrum", false.into()),
                ],
            ),
        ),
        (
            "2D M=400",
            preset(
                "fig2",
                &[("chain_modes", int(400)), ("t_max", float(100.0)), ("g", float(0.1)), ("spectrum", false.into())],
            ),
        ),
        ("3D M=400", preset("fig3-strong", &[("chain_modes", int(400)), ("t_max", float(100.0))])),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (label, c) in cases {
        let ch = run(&c).chain.unwrap();
        let ok = ch.max_amplitude_error <= 1e-6 && ch.compared_until > 0.0;
        pass &= ok;
        parts.push(format!(
            "{label}: max|Δc| {:.1e} for t <= {:.1} (bound {:.1})",
            ch.max_amplitude_error, ch.compared_until, ch.reflection_time
        ));
    }
    outcome(pass, parts.join("; "))
}

fn conservation() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let opts = PropagationOptions { snapshot_every: 0, ..Default::default() };
    for name in ["fig1", "fig2", "fig3", "fig3-strong"] {
        let c = preset(name, &[]);
        let s = setup(&c).unwrap();
        let all: Vec<usize> = (0..s.bath.n_sites()).collect();
        let t_end = 50.0;
        let traj = propagate(&s.hamiltonian, &initial_excited_state(&s.bath), &uniform_grid(c.dt, t_end), &all, &opts)
            .unwrap();
        let drift = traj.norm_drift_rate();
        let excit = traj.samples.iter().map(|x| (x.n_excit() - 1.0).abs()).fold(0.0, f64::max);
        let mut x = traj.final_state().to_flat();
        let steps = (t_end / c.dt).round() as usize;
        for _ in 0..steps {
            evolve(&s.hamiltonian, &mut x, -c.dt, &opts).unwrap();
        }
        let fid = x[0].norm_sqr();
        let ok = drift <= 1e-8 && excit <= 1e-8 && fid >= 1.0 - 1e-7;
        pass &= ok;
        parts.push(format!("{name}: drift {drift:.1e}/t, |N-1| {excit:.1e}, |1-F| {:.1e}", (1.0 - fid).abs()));
    }
    outcome(pass, parts.join("; "))
}

fn polaron_solver() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for name in ["fig1", "fig2", "fig3", "fig3-strong"] {
        let c = preset(name, &[]);
        let (w, delta, g) = c.energies_in_j();
        let bath = c.geometry_kind().build(w, 1.0).unwrap();
        let site = bath.diagonal_site(c.emitter).unwrap();
        let em = EmitterSpec::new(delta, g, site, &bath).unwrap();
        match solve_selfconsistent(&bath, &em, &SolverOptions::default()) {
            Ok(sol) => {
                let ok = sol.residual <= 1e-10 * delta && sol.delta_tilde <= delta;
                pass &= ok;
                parts.push(format!("{name} residual {:.1e}Δ", sol.residual / delta));
            }
            Err(PolaronError::NearSingularBathShift { lower_bound, delta_tilde }) => {
                // No residual exists: H_b + Δ̃ is indefinite for this bath.
                pass = false;
                parts.push(format!(
                    "{name} has no polaron solution (H_b + Δ̃ reaches {lower_bound:.2}J at Δ̃ = {delta_tilde:.2}J)"
                ));
            }
            Err(e) => {
                pass = false;
                parts.push(format!("{name} error {e}"));
            }
        }
    }
    let c = preset("fig1", &[]);
    let bath = c.geometry_kind().build(2.5, 1.0).unwrap();
    let mut last = f64::INFINITY;
    let mut mono = true;
    for k in 0..=14 {
        let g = 0.05 * k as f64 * 2.5;
        let em = EmitterSpec::new(2.5, g, 11, &bath).unwrap();
        let sol = solve_selfconsistent(&bath, &em, &SolverOptions::default()).unwrap();
        mono &= sol.delta_tilde <= last && sol.delta_tilde <= 2.5;
        last = sol.delta_tilde;
    }
    pass &= mono;
    // Scalar fixed point by bisection.
    let (w, d, g) = (2.5, 2.5, 0.3);
    let h = |x: f64| x - d * (-2.0 * g * g / ((w + x) * (w + x))).exp();
    let (mut lo, mut hi) = (0.0, d);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if h(mid) < 0.0 {
            lo = mid
        } else {
            hi = mid
        }
    }
    let one = single_mode(w);
    let sol = solve_selfconsistent(
        &one,
        &EmitterSpec::new(d, g, 0, &one).unwrap(),
        &SolverOptions { tol: 1e-14, ..Default::default() },
    )
    .unwrap();
    let bis = (sol.delta_tilde - 0.5 * (lo + hi)).abs();
    pass &= bis <= 1e-12;
    outcome(
        pass,
        format!("{}; Δ̃(g) non-increasing on g = 0..0.7Δ {mono}; single mode vs bisection {bis:.1e}", parts.join(", ")),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("dispersion fidelity", dispersion_fidelity),
        ("1D parity", parity_1d),
        ("1D bound-state composition", composition_trend),
        ("USC decay", usc_decay),
        ("2D corner states", corner_2d),
        ("2D directionality", directionality),
        ("3D corner states", corner_3d),
        ("chain-map oracle", chain_oracle),
        ("unitarity and conservation", conservation),
        ("polaron solver", polaron_solver),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let o = f();
        println!(
            "criterion {id:>2} {}: {name} [{:.0}s] {}",
            if o.pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64(),
            o.detail
        );
        if !o.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
