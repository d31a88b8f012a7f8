use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eolchain")).args(args).output().expect("spawn eolchain")
}

fn scratch(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("eolchain-cli-{tag}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&d);
    fs::create_dir_all(&d).unwrap();
    d
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn eol_verify_exit_codes() {
    let d = scratch("eol");
    let eol = d.join("eol.txt");
    assert_eq!(bin(&["gen-eol", "--n", "2", "--path", "0,1,2", s(&eol)]).status.code(), Some(0));
    assert_eq!(bin(&["verify", "eol", s(&eol), "--bits", "01"]).status.code(), Some(0));
    let bad = bin(&["verify", "eol", s(&eol), "--bits", "11"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("\"pass\":false"));
    // wrong bit count is a parameter error, not a failed check
    assert_eq!(bin(&["verify", "eol", s(&eol), "--bits", "011"]).status.code(), Some(2));
    assert_eq!(bin(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(bin(&["compile-circuit", "--n", "3", "--eps", "1/256", s(&eol), s(&d.join("c.gc"))]).status.code(), Some(2));
}

#[test]
fn circuit_solve_verify_and_corrupt() {
    let d = scratch("circ");
    let gc = d.join("c.gc");
    fs::write(&gc, "Gz 1/3 _ _ a\nGxz 1/2 a _ b\nG+ _ a b c\nG< _ b a t\n").unwrap();
    let asg = d.join("c.asg");
    assert_eq!(bin(&["solve", "circuit", s(&gc), "--eps", "0.01", s(&asg)]).status.code(), Some(0));
    assert_eq!(bin(&["verify", "circuit", s(&gc), s(&asg), "--eps", "0.01"]).status.code(), Some(0));
    let text = fs::read_to_string(&asg).unwrap();
    let broken: String = text
        .lines()
        .map(|l| if l.starts_with("c ") { "c 0.9".to_string() } else { l.to_string() })
        .collect::<Vec<_>>()
        .join("\n");
    fs::write(&asg, broken).unwrap();
    let out = bin(&["verify", "circuit", s(&gc), s(&asg), "--eps", "0.01"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn compile_is_deterministic() {
    let d = scratch("det");
    let eol = d.join("eol.txt");
    bin(&["gen-eol", "--n", "1", "--path", "0,1", s(&eol)]);
    for k in 0..2 {
        let o = bin(&[
            "compile-circuit", "--n", "1", "--eps", "1/256", s(&eol), s(&d.join(format!("c{k}.gc"))),
            "--symbols", s(&d.join(format!("c{k}.sym"))),
        ]);
        assert_eq!(o.status.code(), Some(0));
        bin(&["fanout2", "--eps-prime", "1/4", s(&d.join(format!("c{k}.gc"))), s(&d.join(format!("f{k}.gc")))]);
    }
    for f in ["c", "f"] {
        assert_eq!(fs::read(d.join(format!("{f}0.gc"))).unwrap(), fs::read(d.join(format!("{f}1.gc"))).unwrap());
    }
}

#[test]
fn small_pipeline_end_to_end() {
    let d = scratch("pipe");
    let eol = d.join("eol.txt");
    bin(&["gen-eol", "--n", "1", "--path", "0,1", s(&eol)]);
    let out_dir = d.join("run");
    let o = bin(&["pipeline", s(&eol), "--out", s(&out_dir), "--eps-prime", "1/4", "--game-eps", "0.05", "--end-to-end"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert_eq!(bin(&["verify", "manifest", s(&out_dir)]).status.code(), Some(0));
    fs::write(out_dir.join("eol.txt"), "EOL n=1\n").unwrap();
    assert_eq!(bin(&["verify", "manifest", s(&out_dir)]).status.code(), Some(1));
}
