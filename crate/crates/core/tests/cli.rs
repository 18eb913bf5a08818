use std::path::Path;
use std::process::{Command, Output};

use nbnet::io::write_image;
use nbnet::pipeline::synthetic_images;

fn nbnet(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nbnet")).args(args).current_dir(dir).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn presets_lists_ablation_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = nbnet(&["presets"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    for name in [
        "unet_plain", "unet_ssa", "unet_blocks", "unet_blocks_ssa", "k1", "k8", "k16", "dotprod", "proj_x2_given_x1x2",
        "proj_x1_given_x1x2",
    ] {
        assert!(s.contains(name), "{name} missing from:\n{s}");
    }
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nbnet(&["presets", "--frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(nbnet(&[], dir.path()).status.code(), Some(1));
    assert_eq!(nbnet(&["gradcheck", "--module", "everything"], dir.path()).status.code(), Some(1));
    assert_eq!(nbnet(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn gradcheck_ssa_passes() {
    let dir = tempfile::tempdir().unwrap();
    let o = nbnet(&["gradcheck", "--module", "ssa"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("gradcheck: "));
}

#[test]
fn train_denoise_eval_synth_export() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (i, img) in synthetic_images::<f32>(3, 32, 32, 3, 5).iter().enumerate() {
        write_image(img, d.join(format!("c{i}.ppm")), false).unwrap();
    }
    std::fs::write(d.join("clean.txt"), "# training set\nc0.ppm\nc1.ppm\nc2.ppm\n").unwrap();
    std::fs::write(d.join("train.json"), r#"{"total_iters": 3, "batch": 2, "patch": 16, "log_every": 1}"#).unwrap();

    let o = nbnet(
        &["train", "--net", "tiny", "--train", "train.json", "--data", "clean.txt", "--noise", "awgn:25", "--out", "ck.nbt"],
        d,
    );
    assert_eq!(o.status.code(), Some(0), "{}{}", stdout(&o), String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("train: {"), "{out}");
    let log = std::fs::read_to_string(d.join("ck.log")).unwrap();
    assert_eq!(log.lines().count(), 3);
    assert!(log.lines().all(|l| l.starts_with("step=") && l.contains(" lr=") && l.contains(" loss=")));

    let o = nbnet(&["denoise", "--ckpt", "ck.nbt", "--in", "c0.ppm", "--out", "d0.ppm"], d);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(nbnet::io::read_image::<f32>(d.join("d0.ppm")).unwrap().shape(), &[1, 3, 32, 32]);

    write_image(&synthetic_images::<f32>(1, 18, 16, 3, 6)[0], d.join("odd.ppm"), false).unwrap();
    let o = nbnet(&["denoise", "--ckpt", "ck.nbt", "--in", "odd.ppm", "--out", "x.ppm"], d);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not divisible by 4"));

    let o = nbnet(&["synth-noise", "--data", "clean.txt", "--noise", "noniid:test1", "--out-dir", "pairs", "--seed", "3"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = std::fs::read_to_string(d.join("pairs/manifest.txt")).unwrap();
    assert_eq!(manifest.lines().filter(|l| l.contains('\t')).count(), 3);

    let run_eval = || nbnet(&["eval", "--ckpt", "ck.nbt", "--data", "pairs/manifest.txt", "--records", "r.jsonl"], d);
    let (a, b) = (run_eval(), run_eval());
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).contains("mean"));
    let rec = std::fs::read_to_string(d.join("r.jsonl")).unwrap();
    assert_eq!(rec.lines().count(), 3);
    assert!(rec.contains("\"psnr_db\""));

    let o = nbnet(&["export-basis", "--ckpt", "ck.nbt", "--in", "c1.ppm", "--layer", "1", "--out-dir", "basis"], d);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let map = nbnet::io::read_image::<f32>(d.join("basis/basis_03.pgm")).unwrap();
    assert_eq!(map.shape(), &[1, 1, 16, 16]);
    assert!(d.join("basis/basis.nbt").is_file());

    let o = nbnet(&["eval", "--ckpt", "ck.nbt", "--data", "missing.txt"], d);
    assert_eq!(o.status.code(), Some(2));
}
