use std::fs;
use std::process::Command;

use corner_qed::analysis::{find_bic_eigenstates, spectral_projection, EigenOptions};
use corner_qed::config::ExperimentConfig;
use corner_qed::dynamics::initial_excited_state;
use corner_qed::experiment::{config_from_manifest, execute, run, sweep, MANIFEST_JSON, OBSERVABLES_CSV};

const BIN: &str = env!("CARGO_BIN_EXE_corner-qed");

fn fig1(sets: &[(&str, toml::Value)]) -> ExperimentConfig {
    let mut c = ExperimentConfig::preset("fig1").unwrap();
    for (k, v) in sets {
        c = c.with_value(k, v.clone()).unwrap();
    }
    c
}

#[test]
fn manifest_reruns_bit_identically() {
    let dir = tempfile::tempdir().unwrap();
    let c = fig1(&[("t_max", toml::Value::Float(40.0)), ("write_snapshots", toml::Value::Boolean(true))]);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&c, &a).unwrap();
    let again = config_from_manifest(&a.join(MANIFEST_JSON)).unwrap();
    assert_eq!(again, c);
    run(&again, &b).unwrap();
    for f in [OBSERVABLES_CSV, "density_final.csv", "bic.json", "decay_fit.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| Command::new(BIN).args(args).output().unwrap().status.code();
    let out = dir.path().join("run");
    let out = out.to_str().unwrap();
    assert_eq!(code(&["run", "--preset", "fig1", "--set", "t_max=20", "--out", out]), Some(0));
    assert!(dir.path().join("run").join(MANIFEST_JSON).exists());
    assert_eq!(code(&["validate", "--preset", "fig1", "--set", "t_max=20"]), Some(0));
    assert_eq!(code(&["preset", "fig2"]), Some(0));
    // Invalid input.
    assert_eq!(code(&["run", "--preset", "nope", "--out", out]), Some(1));
    assert_eq!(code(&["run", "--preset", "fig1", "--set", "delta=2", "--out", out]), Some(1));
    assert_eq!(code(&["run", "--preset", "fig1", "--set", "emitter=401", "--out", out]), Some(1));
    assert_eq!(code(&["sweep", "--preset", "fig1", "--axis", "hopping", "--values", "1", "--out", out]), Some(1));
    assert_eq!(code(&["chain-map", "--preset", "fig1", "--modes", "500", "--out", out]), Some(1));
    // The polaron frame is undefined when the bath reaches below -Δ.
    assert_eq!(code(&["run", "--preset", "fig3", "--set", "frame=\"polaron\"", "--out", out]), Some(2));
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "geometry = \"chain\"\n").unwrap();
    assert_eq!(code(&["run", "--config", bad.to_str().unwrap(), "--out", out]), Some(1));
}

#[test]
fn chain_map_and_spectrum_commands_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let st = Command::new(BIN).args(["chain-map", "--preset", "fig2", "--modes", "60", "--out", out]).status().unwrap();
    assert!(st.success());
    let text = fs::read_to_string(dir.path().join("chain.csv")).unwrap();
    assert_eq!(text.lines().count(), 61);
    let st = Command::new(BIN).args(["spectrum", "--preset", "fig1", "--out", out]).status().unwrap();
    assert!(st.success());
    assert!(dir.path().join("eigenvalues.csv").exists());
}

/// Traps exactly when the emitter sits on an even site.
#[test]
fn parity_law_in_one_dimension() {
    let values: Vec<f64> = (2..=20).map(f64::from).collect();
    let rows = sweep(&fig1(&[("spectrum", toml::Value::Boolean(false))]), "emitter", &values, 4, None).unwrap();
    for r in rows {
        let x = r.value as i64;
        if x % 2 == 0 {
            assert!(r.plateau && r.p_bic > 0.1, "x0 = {x}: {}", r.p_bic);
        } else {
            assert!(r.p_bic < 0.01, "x0 = {x}: {}", r.p_bic);
        }
    }
}

#[test]
fn dynamics_agree_with_spectral_projection() {
    for x0 in [4, 8, 16] {
        let out = execute(&fig1(&[("emitter", toml::Value::Integer(x0))])).unwrap();
        let s = &out.summary;
        let proj = s.spectral_projection.unwrap();
        assert!((s.p_bic.value - proj).abs() <= 0.02, "x0 = {x0}: {} vs {proj}", s.p_bic.value);
        let setup = &out.setup;
        let again = spectral_projection(
            &find_bic_eigenstates(&setup.hamiltonian, &setup.bath, &setup.region, &EigenOptions::default()),
            &initial_excited_state(&setup.bath),
        );
        assert_eq!(again, proj);
    }
}

/// Once the plateau is reached, the qubit and trap-region part of the state
/// is the bound state.
#[test]
fn plateau_state_matches_bound_state() {
    let out = execute(&fig1(&[])).unwrap();
    let v = &out.candidates.as_ref().unwrap()[0].vector;
    let x = out.trajectory.final_state().to_flat();
    let idx: Vec<usize> = std::iter::once(0).chain(out.setup.region.sites.iter().map(|i| i + 1)).collect();
    let overlap = idx.iter().map(|&i| x[i] * v[i]).sum::<num_complex::Complex64>().norm_sqr();
    let nv: f64 = idx.iter().map(|&i| v[i] * v[i]).sum();
    let nx: f64 = idx.iter().map(|&i| x[i].norm_sqr()).sum();
    assert!(overlap / (nv * nx) >= 0.99, "{}", overlap / (nv * nx));
}
