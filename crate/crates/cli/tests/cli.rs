use std::process::Command;

fn cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_bcpep-cli")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

fn value_column(csv: &str, col: &str) -> Vec<f64> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let idx = header.iter().position(|h| *h == col).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn solve_prints_one_row_and_exits_zero() {
    let (code, out, _) = cli(&["solve", "--K", "1"]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("algorithm,p,K,N,h,L,setting,R,criterion,value,"));
    let v = value_column(&out, "value")[0];
    assert!((v - 0.25).abs() < 1e-6, "{v}");
}

#[test]
fn config_errors_exit_one() {
    assert_eq!(cli(&["solve", "--K", "1", "--setting", "everywhere"]).0, 1);
    assert_eq!(cli(&["solve", "--algorithm", "custom"]).0, 1);
    assert_eq!(cli(&["solve", "--K", "1", "--Lvec", "1,2,3"]).0, 1);
    assert_eq!(cli(&["sweep", "--range", "3-1"]).0, 1);
}

#[test]
fn config_file_with_flag_override() {
    let dir = std::env::temp_dir().join(format!("bcpep-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("run.cfg");
    std::fs::write(&path, "algorithm = ccd\np = 2\nK = 2\nR = 1\n").unwrap();
    let (code, out, _) = cli(&["solve", "--config", path.to_str().unwrap(), "--R", "0"]);
    assert_eq!(code, 0);
    assert!(value_column(&out, "value")[0].abs() < 1e-7);
}

#[test]
fn sweep_is_ordered_and_byte_stable() {
    let args = ["sweep", "--setting", "all", "--range", "1-4", "--jobs", "3"];
    let (code, first, _) = cli(&args);
    assert_eq!(code, 0);
    let (_, second, _) = cli(&args);
    assert_eq!(first, second);
    let k = value_column(&first, "K");
    assert_eq!(k, vec![1.0, 2.0, 3.0, 4.0]);
    let v = value_column(&first, "value");
    let vk = value_column(&first, "value_times_K");
    for i in 0..4 {
        assert_eq!(vk[i], v[i] * k[i]);
    }
    assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn label_swapped_sequences_agree() {
    let (_, a, _) = cli(&["solve", "--algorithm", "custom", "--sequence", "1,1,2,1"]);
    let (_, b, _) = cli(&["solve", "--algorithm", "custom", "--sequence", "2,2,1,2"]);
    let (a, b) = (value_column(&a, "value")[0], value_column(&b, "value")[0]);
    assert!((a - b).abs() < 1e-5, "{a} {b}");
}

#[test]
fn stored_solve_certifies() {
    let path = std::env::temp_dir().join(format!("bcpep-solve-{}.json", std::process::id()));
    let (code, _, _) = cli(&["solve", "--algorithm", "am", "--K", "2", "--save", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let (code, out, _) = cli(&["certify", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.starts_with("0: PASS"));
}

#[test]
fn witness_and_simulate_outputs() {
    let (code, out, err) = cli(&["witness", "--K", "1"]);
    assert_eq!(code, 0, "{err}");
    assert!(out.starts_with("block,atom,point,coords\n"));
    assert!(err.contains("PASS"));

    let (code, out, _) = cli(&["simulate", "--K", "2", "--h", "1"]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().count(), 6);
    let gaps = value_column(&out, "f_gap");
    assert!(gaps.windows(2).all(|w| w[1] <= w[0]));
}
