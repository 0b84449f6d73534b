//! Runs every `$ locload ...` line of the guide's console blocks and checks
//! the output lines shown beneath it.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

struct Example {
    chapter: String,
    command: String,
    expected: Vec<String>,
}

fn examples(chapter: &Path) -> Vec<Example> {
    let text = fs::read_to_string(chapter).unwrap();
    let name = chapter.file_name().unwrap().to_string_lossy().into_owned();
    let mut out: Vec<Example> = Vec::new();
    let mut in_console = false;
    for line in text.lines() {
        if let Some(fence) = line.strip_prefix("```") {
            in_console = !in_console && fence.trim() == "console";
            continue;
        }
        if !in_console {
            continue;
        }
        if let Some(cmd) = line.strip_prefix("$ ") {
            out.push(Example {
                chapter: name.clone(),
                command: cmd.to_string(),
                expected: Vec::new(),
            });
        } else if let Some(last) = out.last_mut() {
            last.expected.push(line.to_string());
        }
    }
    out
}

/// Splits `echo "..." | locload args` into stdin text and arguments.
fn parse(command: &str) -> (String, Vec<String>) {
    let (stdin, rest) = match command.split_once(" | ") {
        Some((echo, rest)) => {
            let text = echo
                .strip_prefix("echo ")
                .expect("only echo may feed a pipe")
                .trim_matches('"');
            (format!("{text}\n"), rest)
        }
        None => (String::new(), command),
    };
    let mut words = rest.split_whitespace().map(String::from);
    assert_eq!(words.next().as_deref(), Some("locload"), "{command}");
    (stdin, words.collect())
}

fn run(dir: &Path, example: &Example) {
    let (stdin, args) = parse(&example.command);
    let mut child = Command::new(env!("CARGO_BIN_EXE_locload"))
        .current_dir(dir)
        .args(&args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(stdin.as_bytes()).unwrap();
    let out = child.wait_with_output().unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "{}: `{}` exited with {}\n{}",
        example.chapter,
        example.command,
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    let mut lines = stdout.lines();
    for want in example.expected.iter().filter(|l| l.trim() != "...") {
        assert!(
            lines.any(|got| got == want),
            "{}: `{}` did not print {want:?} in order\n--- output ---\n{stdout}",
            example.chapter,
            example.command
        );
    }
}

#[test]
fn guide_commands_run_verbatim() {
    let book = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../book/src");
    let mut chapters: Vec<PathBuf> = fs::read_dir(&book)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "md"))
        .collect();
    chapters.sort();
    let mut total = 0;
    for chapter in chapters {
        // Commands of one chapter share a working directory, in order.
        let dir = tempfile::tempdir().unwrap();
        for example in examples(&chapter) {
            run(dir.path(), &example);
            total += 1;
        }
    }
    assert!(total >= 12, "only {total} commands found");
}
