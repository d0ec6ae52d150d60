use std::process::{Command, Output};

fn eonsurv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eonsurv")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn topo_builtin_usnet() {
    let o = eonsurv(&["topo", "--builtin", "usnet"]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("usnet: 24 nodes, 43 links\n"));
}

#[test]
fn topo_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("n.topo");
    let emitted = eonsurv(&["topo", "--builtin", "nsfnet", "--emit"]);
    assert!(emitted.status.success());
    std::fs::write(&path, &emitted.stdout).unwrap();
    let o = eonsurv(&["topo", "--file", path.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("nsfnet: 14 nodes, 22 links\n"));
}

#[test]
fn fixtures_prints_the_window_costs() {
    let o = eonsurv(&["fixtures"]);
    assert!(o.status.success());
    let costs: Vec<String> = stdout(&o).lines().filter(|l| l.starts_with("start ")).map(str::to_string).collect();
    assert_eq!(costs, ["start 0 cost 0", "start 4 cost 1", "start 8 cost 3", "start 9 cost 4", "start 10 cost 2"]);
}

#[test]
fn svne_grid_has_one_row_per_cell_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = eonsurv(&[
            "svne",
            "--topology",
            "usnet",
            "--schemes",
            "apss,mdf",
            "--loads",
            "40,60",
            "--seeds",
            "1,2",
            "--requests",
            "400",
            "--warmup",
            "50",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(String::from_utf8(a.clone()).unwrap().lines().count(), 1 + 8);
    assert_eq!(a, run("b.csv"));
}

#[test]
fn evacuate_seed_range() {
    let o = eonsurv(&[
        "evacuate",
        "--topology",
        "nsfnet",
        "--capacity",
        "65",
        "--basic-bw",
        "5",
        "--scheme",
        "sedv",
        "--seeds",
        "1..5",
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 1 + 5);
    assert!(text.starts_with("scheme,topology,link_capacity_gbps,basic_bw_gbps,seed,n_dual_vns,tet_s,aet_s\n"));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# evacuation\nscheme = bedv\nseeds = 1..3\ncapacity = 70\n").unwrap();
    let o = eonsurv(&["evacuate", "--config", cfg.to_str().unwrap(), "--seeds", "4"]);
    assert!(o.status.success());
    let rows: Vec<String> = stdout(&o).lines().skip(1).map(str::to_string).collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("BEDV,nsfnet,70,5,4,"));
}

#[test]
fn timeline_needs_a_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let tl = dir.path().join("t.csv");
    let o = eonsurv(&["evacuate", "--capacity", "75", "--seed", "2", "--timeline", tl.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(std::fs::read_to_string(&tl).unwrap().starts_with("vn_id,admit_t,sync_t,done_t\n"));
    let o = eonsurv(&["evacuate", "--seeds", "1,2", "--timeline", tl.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bad_invocations_exit_one_with_usage() {
    let o = eonsurv(&["svne", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    assert_eq!(eonsurv(&["nosuch"]).status.code(), Some(1));
    assert_eq!(eonsurv(&["svne", "--schemes", "mdf:3"]).status.code(), Some(1));
    assert_eq!(eonsurv(&["evacuate", "--seeds", "5..1"]).status.code(), Some(1));
    assert_eq!(eonsurv(&["evacuate", "--drz", "3"]).status.code(), Some(1));
    let o = Command::new(env!("CARGO_BIN_EXE_eonsurv")).arg("fixtures").env("EONSURV_THREADS", "0").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "lods = 40\n").unwrap();
    assert_eq!(eonsurv(&["svne", "--config", cfg.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn write_failure_exits_two() {
    let o = eonsurv(&["evacuate", "--out", "/nonexistent-dir/e.csv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_exits_zero() {
    for sub in ["svne", "evacuate", "topo", "fixtures"] {
        let o = eonsurv(&[sub, "--help"]);
        assert!(o.status.success());
        assert!(stdout(&o).contains("Usage"));
    }
}
