use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_metanav");

const CORRIDOR: &str = "%%%%%%%%\n#S....G#\n########\n";

pub fn metanav(args: &[&str], seed: Option<&str>) -> Output {
    let mut c = Command::new(BIN);
    c.args(args).env_remove("METANAV_SEED");
    if let Some(s) = seed {
        c.env("METANAV_SEED", s);
    }
    c.output().unwrap()
}

pub fn small_config(dir: &Path) -> PathBuf {
    fs::write(dir.join("corridor.map"), CORRIDOR).unwrap();
    let cfg = dir.join("small.cfg");
    fs::write(
        &cfg,
        "seed = 3\n\n[env]\nmap = corridor.map   # relative to this file\nmax_steps = 40\n\n\
         [train]\ngamma = 0.7\nburn_in = 50\nbatch_size = 8\nreplay_capacity = 500\n\
         epsilon_decay_steps = 300\nmax_env_steps = 400\ntarget_sync_every = 50\n\n\
         [meta]\nhorizon = 3\noptions = AlwaysForward, SpinLeft\n",
    )
    .unwrap();
    cfg
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Training the same resolved config twice gives identical bytes; a different seed does not.
pub fn rerun_is_byte_identical(cfg: &Path, tmp: &Path, mode: &str) -> Result<(), String> {
    let run = |dir: &Path, config: &Path, seed: Option<&str>| -> Result<(Vec<u8>, Vec<u8>), String> {
        let out = metanav(&[mode, "--config", s(config), "--out", s(dir)], seed);
        if !out.status.success() {
            return Err(String::from_utf8_lossy(&out.stderr).into_owned());
        }
        Ok((fs::read(dir.join("training_log.csv")).unwrap(), fs::read(dir.join("policy.ckpt")).unwrap()))
    };
    let a = run(&tmp.join("a"), cfg, Some("11"))?;
    let resolved = tmp.join("a").join("resolved_config.cfg");
    if !fs::read_to_string(&resolved).unwrap().contains("seed = 11") {
        return Err("seed override missing from resolved config".into());
    }
    let b = run(&tmp.join("b"), &resolved, None)?;
    if a != b {
        return Err("re-run from resolved_config.cfg differs".into());
    }
    let c = run(&tmp.join("c"), cfg, Some("12"))?;
    if c.1 == a.1 {
        return Err("seed override had no effect".into());
    }
    Ok(())
}

