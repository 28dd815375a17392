use std::path::{Path, PathBuf};

use ulrot_cli::RunConfig;

#[test]
fn config_seeds() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus/run_config");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        let parsed = RunConfig::parse(&text, Path::new("/data"));
        if path.ends_with("duplicate.cfg") {
            assert!(parsed.unwrap_err().to_string().contains("duplicate key"));
        } else {
            assert!(parsed.is_ok(), "{}", path.display());
        }
        seen += 1;
    }
    assert!(seen >= 3);
}
