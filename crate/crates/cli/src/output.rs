use std::fs;
use std::path::PathBuf;

use crate::config::RunConfig;
use crate::Failure;

/// Comment line opening every output file.
pub fn metadata_line(cfg: &RunConfig, seed: u64) -> String {
    format!(
        "# ridgeshrink {} command={} seed={} config_sha256={}\n",
        env!("CARGO_PKG_VERSION"),
        cfg.command.name(),
        seed,
        cfg.hash()
    )
}

/// Write `body` under the metadata line to `out_dir/name`.
pub fn write_output(cfg: &RunConfig, seed: u64, name: &str, body: &[u8]) -> Result<PathBuf, Failure> {
    fs::create_dir_all(&cfg.out_dir)
        .map_err(|e| Failure::Input(format!("cannot create {}: {e}", cfg.out_dir.display())))?;
    let path = cfg.out_dir.join(name);
    let mut bytes = metadata_line(cfg, seed).into_bytes();
    bytes.extend_from_slice(body);
    fs::write(&path, bytes).map_err(|e| Failure::Input(format!("cannot write {}: {e}", path.display())))?;
    Ok(path)
}

/// Plain two-column CSV from key/value pairs.
pub fn key_value_csv(rows: &[(String, String)]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).expect("in-memory write");
    for (k, v) in rows {
        w.write_record([k, v]).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn report(paths: &[PathBuf]) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}
