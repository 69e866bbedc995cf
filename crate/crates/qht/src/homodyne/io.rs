//! Dataset persistence: CSV samples plus a JSON provenance sidecar.
//!
//! The CSV holds `x,phi,block` rows with 17 significant digits, enough for
//! every f64 to round-trip exactly; the sidecar `<file>.meta.json` carries
//! the provenance needed to regenerate or validate the data. Loading
//! re-checks the dataset invariants, so a corrupted or hand-edited file is
//! rejected instead of silently skewing statistics.

use super::{HomodyneDataset, Provenance, Sample};
use crate::error::{Error, Result};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

const HEADER: &str = "x,phi,block";

/// Sidecar path for a dataset file: `<path>.meta.json`.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    let mut os = csv_path.as_os_str().to_owned();
    os.push(".meta.json");
    PathBuf::from(os)
}

/// Write the dataset CSV and its provenance sidecar.
pub fn save(ds: &HomodyneDataset, csv_path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(csv_path)?);
    writeln!(w, "{HEADER}")?;
    for s in ds.samples() {
        // {:.16e} prints 17 significant digits: exact f64 round-trip.
        writeln!(w, "{:.16e},{:.16e},{}", s.x, s.phi, s.block)?;
    }
    w.flush()?;
    let mut m = BufWriter::new(File::create(sidecar_path(csv_path))?);
    serde_json::to_writer_pretty(&mut m, ds.provenance())?;
    writeln!(m)?;
    m.flush()?;
    Ok(())
}

/// Load a dataset written by [`save`], revalidating all invariants.
pub fn load(csv_path: &Path) -> Result<HomodyneDataset> {
    let side = sidecar_path(csv_path);
    if !side.exists() {
        return Err(Error::BadDataset(format!(
            "missing provenance sidecar {}",
            side.display()
        )));
    }
    let provenance: Provenance = serde_json::from_reader(BufReader::new(File::open(&side)?))?;
    let reader = BufReader::new(File::open(csv_path)?);
    let mut lines = reader.lines();
    match lines.next() {
        Some(Ok(h)) if h.trim_end() == HEADER => {}
        Some(Ok(h)) => {
            return Err(Error::Parse {
                line: 1,
                why: format!("expected header `{HEADER}`, got `{h}`"),
            })
        }
        Some(Err(e)) => return Err(e.into()),
        None => {
            return Err(Error::Parse {
                line: 1,
                why: "empty file".into(),
            })
        }
    }
    let mut samples = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = |what: &str| {
            fields.next().ok_or_else(|| Error::Parse {
                line: lineno,
                why: format!("missing field {what}"),
            })
        };
        let x: f64 = next("x")?.parse().map_err(|e| Error::Parse {
            line: lineno,
            why: format!("x: {e}"),
        })?;
        let phi: f64 = next("phi")?.parse().map_err(|e| Error::Parse {
            line: lineno,
            why: format!("phi: {e}"),
        })?;
        let block: u32 = next("block")?.parse().map_err(|e| Error::Parse {
            line: lineno,
            why: format!("block: {e}"),
        })?;
        if fields.next().is_some() {
            return Err(Error::Parse {
                line: lineno,
                why: "too many fields".into(),
            });
        }
        samples.push(Sample { x, phi, block });
    }
    HomodyneDataset::from_parts(provenance, samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::homodyne::{generate_dataset, PhaseStrategy};
    use crate::states::{StateKind, StateSpec};
    use crate::C64;

    fn small_dataset() -> HomodyneDataset {
        let spec = StateSpec::new(StateKind::Coherent {
            alpha: C64::new(1.0, -0.7),
        })
        .unwrap();
        generate_dataset(&spec, PhaseStrategy::Stratified { p: 4 }, 3, 25, 17).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = small_dataset();
        save(&ds, &path).unwrap();
        let back = load(&path).unwrap();
        assert_eq!(ds, back);
    }

    #[test]
    fn save_is_deterministic_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let (p1, p2) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
        let ds = small_dataset();
        save(&ds, &p1).unwrap();
        save(&ds, &p2).unwrap();
        assert_eq!(
            std::fs::read(&p1).unwrap(),
            std::fs::read(&p2).unwrap()
        );
        assert_eq!(
            std::fs::read(sidecar_path(&p1)).unwrap(),
            std::fs::read(sidecar_path(&p2)).unwrap()
        );
    }

    #[test]
    fn missing_sidecar_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        save(&small_dataset(), &path).unwrap();
        std::fs::remove_file(sidecar_path(&path)).unwrap();
        assert!(matches!(load(&path), Err(Error::BadDataset(_))));
    }

    #[test]
    fn corrupted_rows_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        let ds = small_dataset();
        save(&ds, &path).unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        let bad_header = text.replacen(HEADER, "x,phi", 1);
        std::fs::write(&path, bad_header).unwrap();
        assert!(matches!(load(&path), Err(Error::Parse { line: 1, .. })));

        let mut lines: Vec<&str> = text.lines().collect();
        lines[3] = "0.5,not-a-number,0";
        std::fs::write(&path, lines.join("\n")).unwrap();
        assert!(matches!(load(&path), Err(Error::Parse { line: 4, .. })));

        // Block tags inconsistent with the contiguous layout.
        let retagged = text.replacen(",0\n", ",2\n", 1);
        std::fs::write(&path, retagged).unwrap();
        assert!(matches!(load(&path), Err(Error::BadDataset(_))));
    }
}
