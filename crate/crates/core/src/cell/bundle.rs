//! JSON export and import of [`CellData`].

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use super::CellData;
use crate::error::{Error, Result};

const FORMAT: &str = "homog-cell-v1";

#[derive(serde::Serialize)]
struct BundleRef<'a> {
    format: &'a str,
    cell: &'a CellData,
}

#[derive(serde::Deserialize)]
struct Bundle {
    format: String,
    cell: CellData,
}

pub fn export_json(cell: &CellData, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, &BundleRef { format: FORMAT, cell })?;
    w.flush()?;
    Ok(())
}

pub fn import_json(path: &Path) -> Result<CellData> {
    let b: Bundle = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if b.format != FORMAT {
        return Err(Error::invalid(format!("unknown cell bundle format `{}`", b.format)));
    }
    check_shapes(&b.cell)?;
    Ok(b.cell)
}

fn check_shapes(c: &CellData) -> Result<()> {
    let (d, m) = (c.layout.dim, c.layout.m);
    let n = c.grid.len();
    let bad = |what: &str| Error::invalid(format!("cell bundle: inconsistent {what}"));
    if c.grid.dim != d {
        return Err(bad("dimension"));
    }
    let groups: [(&str, Vec<&super::TensorField>, usize); 6] = [
        ("chi", c.chi.iter().collect(), d + 1),
        ("b", c.b.iter().collect(), d * (d + 1)),
        ("W", c.w.iter().collect(), d + 1),
        ("theta", c.theta.iter().collect(), d + 1),
        ("Pi", c.pi.iter().collect(), d * (d + 1)),
        ("E", c.e.iter().collect(), d * d * (d + 1)),
    ];
    for (name, fields, count) in groups {
        if fields.len() != count {
            return Err(bad(name));
        }
        for f in fields {
            if f.m != m || f.comps.len() != m * m || f.comps.iter().any(|v| v.len() != n) {
                return Err(bad(name));
            }
        }
    }
    if c.chi_grad.len() != d + 1 || c.chi_grad.iter().any(|g| g.len() != d) {
        return Err(bad("chi gradients"));
    }
    if c.theta_grad.len() != d + 1 || c.theta_grad.iter().any(|g| g.len() != d) {
        return Err(bad("theta gradients"));
    }
    if c.hats.a.len() != c.layout.a_len() || c.hats.c.len() != c.layout.c_len() {
        return Err(bad("homogenized tensors"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cell::CellOptions;
    use crate::coeff::{preset, CellGrid};

    #[test]
    fn round_trip() {
        let c = preset("smooth-trig", 0).unwrap();
        let cd = CellData::compute(&c, CellGrid::new(16, 2).unwrap(), CellOptions::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cell.json");
        export_json(&cd, &p).unwrap();
        let back = import_json(&p).unwrap();
        assert_eq!(back, cd);
    }

    #[test]
    fn rejects_truncated_fields() {
        let c = preset("laminate", 0).unwrap();
        let mut cd = CellData::compute(&c, CellGrid::new(8, 2).unwrap(), CellOptions::default()).unwrap();
        cd.theta[0].comps[0].pop();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cell.json");
        export_json(&cd, &p).unwrap();
        assert!(import_json(&p).is_err());
    }
}
