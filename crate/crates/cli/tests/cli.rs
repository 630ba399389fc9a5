use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pve_lab(args: &[&str], out_root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pve-lab"))
        .args(args)
        .env("PVE_LAB_OUT", out_root)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.conf");
    fs::write(&path, body).unwrap();
    path.display().to_string()
}

const QUICK_VERIFY: &str = "[verify]\ncount = 4\nmc_cases = 1\nmc_samples = 1000\n";

#[test]
fn verify_passes_and_uses_out_root() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), QUICK_VERIFY);
    let out = pve_lab(&["verify", "--config", &config], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("all checks passed"));

    let runs: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("verify-"))
        .collect();
    assert_eq!(runs.len(), 1);
    let dir = tmp.path().join(&runs[0]);
    for f in ["manifest.txt", "checks.csv", "bounds.csv", "bound_components.csv", "report.txt"] {
        assert!(dir.join(f).is_file(), "missing {f}");
    }
    let bounds = fs::read_to_string(dir.join("bounds.csv")).unwrap();
    assert_eq!(bounds.lines().next().unwrap(), "suite,seed,case,lhs,rhs,g,a,b,satisfied");
}

#[test]
fn failing_check_sets_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "[verify]\nfalse_ring_scale = 1.05\n");
    let out = pve_lab(&["verify", "--suite", "props", "--config", &config], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL false_ring_n_step_error"));
}

#[test]
fn seed_flag_overrides_config_and_changes_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &format!("seed = 5\n{QUICK_VERIFY}"));
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let run = |out: &Path, extra: &[&str]| {
        let mut args = vec!["verify", "--suite", "bounds", "--config", &config, "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        assert!(pve_lab(&args, tmp.path()).status.success());
        fs::read_to_string(out.join("manifest.txt")).unwrap()
    };
    let ma = run(&a, &[]);
    let mb = run(&b, &["--seed", "6"]);
    assert!(ma.contains("seed = 5"));
    assert!(mb.contains("seed = 6"));
    let hash = |m: &str| m.lines().find(|l| l.starts_with("config_hash")).unwrap().to_string();
    assert_ne!(hash(&ma), hash(&mb));
}

#[test]
fn existing_run_needs_force() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "[trajectories]\nn_traj = 5\nhorizon = 4\n");
    let out = tmp.path().join("traj");
    let out_s = out.to_str().unwrap();
    let base = ["trajectories", "--config", &config, "--out", out_s];
    assert!(pve_lab(&base, tmp.path()).status.success());
    assert!(pve_lab(&base, tmp.path()).status.success());

    let changed = [&base[..], &["--seed", "9"]].concat();
    let refused = pve_lab(&changed, tmp.path());
    assert_eq!(refused.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&refused.stderr).contains("--force"));
    let forced = [&changed[..], &["--force"]].concat();
    assert!(pve_lab(&forced, tmp.path()).status.success());

    let rows = fs::read_to_string(out.join("trajectories.csv")).unwrap();
    assert_eq!(rows.lines().count(), 1 + 5 * 5);
    assert_eq!(
        fs::read_to_string(out.join("summary.txt")).unwrap(),
        "transitions = 20\nnon_adjacent = 0\n"
    );
}

#[test]
fn trajectories_read_saved_models() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "[capacity]\nranks = 2\nfamilies = deterministic\nseeds = 1\niters = 5\ndataset_size = 10\naugment_per_policy = 5\n",
    );
    let sweep = tmp.path().join("sweep");
    let out = pve_lab(&["capacity-sweep", "--config", &config, "--out", sweep.to_str().unwrap()], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let model = sweep.join("models/rank2-deterministic-seed0.model");
    assert!(model.is_file());

    let config = write_config(
        tmp.path(),
        &format!("[trajectories]\nmodel = {}\nn_traj = 20\nstart = bottom-left\n", model.display()),
    );
    let out = pve_lab(&["trajectories", "--config", &config], tmp.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("600 transitions"));
}

#[test]
fn config_errors_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "[model_space]\nitres = 10\n");
    let out = pve_lab(&["model-space", "--config", &config], tmp.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("itres"));

    let out = pve_lab(&["verify", "--suite", "everything"], tmp.path());
    assert_eq!(out.status.code(), Some(2));
}
