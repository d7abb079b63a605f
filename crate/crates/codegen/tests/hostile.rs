use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use isoscope_codegen::{security_scan, CodegenError, Sandbox, SandboxConfig};

fn snapshot(dir: &Path, skip: &Path, out: &mut BTreeSet<PathBuf>) {
    for e in std::fs::read_dir(dir).unwrap().flatten() {
        let p = e.path();
        if p == skip {
            continue;
        }
        if p.is_dir() {
            snapshot(&p, skip, out);
        }
        out.insert(p);
    }
}

#[test]
fn hostile_fixtures_are_confined() {
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/hostile");
    let mut scripts: Vec<PathBuf> = std::fs::read_dir(&fixtures)
        .unwrap()
        .flatten()
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "py"))
        .collect();
    scripts.sort();
    assert_eq!(scripts.len(), 10);

    let outer = tempfile::tempdir().unwrap();
    std::fs::write(outer.path().join("keep.txt"), "x").unwrap();
    let root = outer.path().join("sandbox");
    let sb = Sandbox::new(SandboxConfig::new(&root)).unwrap();
    let root = sb.root().to_path_buf();

    let mut before = BTreeSet::new();
    snapshot(outer.path(), &root, &mut before);
    let tmp_before: BTreeSet<_> = std::fs::read_dir("/tmp")
        .map(|rd| rd.flatten().map(|e| e.path()).collect())
        .unwrap_or_default();

    let mut blocked = 0;
    for s in &scripts {
        let code = std::fs::read_to_string(s).unwrap();
        let name = s.file_name().unwrap().to_string_lossy();
        match sb.execute(&code) {
            Err(CodegenError::ScanBlocked(v)) => {
                assert!(!security_scan(&code).allowed);
                assert!(!v.summary().is_empty());
                blocked += 1;
            }
            Ok(run) => {
                assert!(run.run_dir.starts_with(&root), "{name}");
                println!("{name}: ran, exit {}, artifacts {:?}", run.exit_code, run.artifacts);
            }
            Err(e) => panic!("{name}: {e}"),
        }
    }
    assert!(blocked >= 8, "only {blocked} blocked");

    let mut after = BTreeSet::new();
    snapshot(outer.path(), &root, &mut after);
    assert_eq!(before, after, "files appeared outside the sandbox");
    let tmp_after: BTreeSet<_> = std::fs::read_dir("/tmp")
        .map(|rd| rd.flatten().map(|e| e.path()).collect())
        .unwrap_or_default();
    let leaked: Vec<_> = tmp_after
        .difference(&tmp_before)
        .filter(|p| p.to_string_lossy().contains("isoscope_hostile"))
        .collect();
    assert!(leaked.is_empty(), "{leaked:?}");
}
