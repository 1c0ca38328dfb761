use std::fs;
use std::io::{self, Cursor, Write};
use std::path::Path;
use std::process::Command;

use maskdial_cli::commands::{cmd_chat, cmd_eval, cmd_generate, cmd_train, BEST_CHECKPOINT, LOG_FILE};
use maskdial_cli::RunConfig;
use tempfile::TempDir;

fn generate(dir: &Path, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    for (k, v) in [("n_dialogs", "12"), ("subset_size", "6"), ("seed", &seed.to_string())] {
        cfg.set(k, v).unwrap();
    }
    cfg.out = dir.join("data");
    cfg.data = cfg.out.clone();
    cmd_generate(&cfg, &mut io::sink()).unwrap();
    cfg
}

fn small_run(cfg: &mut RunConfig, run_dir: &Path) {
    for (k, v) in [("subset", "6"), ("dim", "8"), ("sl_epochs", "3"), ("rl_epochs", "2"), ("batch_size", "16")] {
        cfg.set(k, v).unwrap();
    }
    cfg.run_dir = run_dir.to_path_buf();
}

fn read_dir(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generate_is_deterministic_and_complete() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let c = TempDir::new().unwrap();
    generate(a.path(), 5);
    generate(b.path(), 5);
    generate(c.path(), 6);
    let fa = read_dir(&a.path().join("data"));
    assert_eq!(fa.len(), 10);
    assert_eq!(fa, read_dir(&b.path().join("data")));
    assert_ne!(fa, read_dir(&c.path().join("data")));
    for split in ["train", "val", "test", "test_oov"] {
        for subset in ["full", "6"] {
            assert!(fa.iter().any(|(n, _)| *n == format!("{split}_{subset}.txt")));
        }
    }
}

#[test]
fn training_and_evaluation_are_deterministic() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = generate(tmp.path(), 1);
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        small_run(&mut cfg, &tmp.path().join(name));
        cmd_train(&cfg, &mut io::sink()).unwrap();
        cfg.results = tmp.path().join(format!("{name}.csv"));
        cfg.splits = vec!["val".into(), "test_oov".into()];
        let mut first = Vec::new();
        cmd_eval(&cfg, &mut first).unwrap();
        let mut second = Vec::new();
        cmd_eval(&cfg, &mut second).unwrap();
        assert_eq!(first, second);
        outputs.push((
            fs::read(cfg.run_dir.join(BEST_CHECKPOINT)).unwrap(),
            fs::read(cfg.run_dir.join(LOG_FILE)).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = fs::read_to_string(tmp.path().join("a.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
}

/// Fails once `budget` lines have been written, like a killed process.
struct Interrupt {
    budget: usize,
}

impl Write for Interrupt {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let lines = buf.iter().filter(|&&b| b == b'\n').count();
        if lines > 0 {
            if self.budget == 0 {
                return Err(io::Error::new(io::ErrorKind::BrokenPipe, "stopped"));
            }
            self.budget -= lines.min(self.budget);
        }
        Ok(buf.len())
    }

    fn flush(&mut self) -> io::Result<()> {
        Ok(())
    }
}

#[test]
fn interrupted_training_resumes_to_the_same_result() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = generate(tmp.path(), 2);
    small_run(&mut cfg, &tmp.path().join("whole"));
    cmd_train(&cfg, &mut io::sink()).unwrap();
    let whole = read_dir(&cfg.run_dir);

    small_run(&mut cfg, &tmp.path().join("split"));
    // One header line, then one line per epoch: stop after the first RL epoch.
    assert!(cmd_train(&cfg, &mut Interrupt { budget: 4 }).is_err());
    cfg.resume = true;
    let mut out = Vec::new();
    cmd_train(&cfg, &mut out).unwrap();
    assert!(String::from_utf8(out).unwrap().contains("resuming at rl epoch 1"));
    let split = read_dir(&cfg.run_dir);
    for name in [BEST_CHECKPOINT, "last.ckpt", LOG_FILE] {
        let get = |files: &[(String, Vec<u8>)]| files.iter().find(|(n, _)| n == name).unwrap().1.clone();
        assert_eq!(get(&whole), get(&split), "{name}");
    }
}

#[test]
fn resume_rejects_a_changed_configuration() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = generate(tmp.path(), 3);
    small_run(&mut cfg, &tmp.path().join("run"));
    cmd_train(&cfg, &mut io::sink()).unwrap();
    cfg.resume = true;
    cfg.set("dim", "6").unwrap();
    assert!(matches!(
        cmd_train(&cfg, &mut io::sink()),
        Err(maskdial::Error::Compatibility(_))
    ));
}

#[test]
fn chat_commands() {
    let tmp = TempDir::new().unwrap();
    let mut cfg = generate(tmp.path(), 4);
    small_run(&mut cfg, &tmp.path().join("run"));
    cmd_train(&cfg, &mut io::sink()).unwrap();
    let script = "hello\n/kb resto_zzz_nothing\n/dance\n/reset\nhello\n/quit\nnever read\n";
    let mut out = Vec::new();
    cmd_chat(&cfg, &mut Cursor::new(script), &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.contains("no matching restaurant"));
    assert!(text.contains("unknown command `/dance`"));
    assert!(text.contains("memory cleared"));
    // Both greetings start from an empty memory, so the replies agree.
    let replies: Vec<&str> = text.lines().filter(|l| l.starts_with("> ") && l.len() > 2).collect();
    assert!(replies.len() >= 2);
    assert_eq!(replies[0], replies.last().copied().unwrap());
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_maskdial");
    let tmp = TempDir::new().unwrap();
    let run = |args: &[&str]| Command::new(exe).args(args).current_dir(tmp.path()).output().unwrap();
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--set", "no_such_key=1"]).status.code(), Some(1));
    assert_eq!(run(&["eval", "--run-dir", "missing"]).status.code(), Some(1));
    let bad = run(&["generate", "--mode", "shuffled"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("shuffled"));
    fs::write(tmp.path().join("cfg.txt"), "# sizes\nn_dialogs = 3\nsubset_size = 2\nwat\n").unwrap();
    let parse = run(&["generate", "--config", "cfg.txt"]);
    assert_eq!(parse.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&parse.stderr).contains(":4:"));
}
