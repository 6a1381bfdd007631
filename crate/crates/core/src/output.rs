//! On-disk formats: norm-series CSV, binary field dumps and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::integrator::PathRecord;
use crate::spectral::SpectralField;

pub const NORM_SERIES_HEADER: &str = "t,u_L2,u_Lpstar,v_Halpha,v_Halpha_aleph,h,phi";
pub const FIELD_HEADER_LEN: usize = 64;

pub fn norm_series_csv(record: &PathRecord) -> String {
    let n = &record.norms;
    let mut out = String::with_capacity(64 * (n.len() + 1));
    out.push_str(NORM_SERIES_HEADER);
    out.push('\n');
    for i in 0..n.len() {
        out.push_str(&format!(
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
            record.times[i], n.u_l2[i], n.u_lp[i], n.v_halpha[i], n.v_halpha_aleph[i], n.h[i], n.phi[i]
        ));
    }
    out
}

/// 64-byte space-padded text header followed by the coefficients as
/// little-endian `f64`.
pub fn field_dump_bytes(field: &SpectralField, name: &str, time: f64) -> Result<Vec<u8>> {
    let cfg = field.basis().config();
    let header = format!(
        "gsf1 d={} b={} N={} f={} t={:.9e}",
        cfg.dim,
        cfg.boundary,
        field.coeffs().len(),
        name,
        time
    );
    if header.len() >= FIELD_HEADER_LEN {
        return Err(Error::invalid(format!("field dump header too long: {header}")));
    }
    let mut out = Vec::with_capacity(FIELD_HEADER_LEN + 8 * field.coeffs().len());
    out.extend_from_slice(header.as_bytes());
    out.resize(FIELD_HEADER_LEN - 1, b' ');
    out.push(b'\n');
    for c in field.coeffs() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    Ok(out)
}

/// Parsed header fields and coefficients of a field dump.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub header: String,
    pub coeffs: Vec<f64>,
}

pub fn read_field_dump(bytes: &[u8]) -> Result<FieldDump> {
    if bytes.len() < FIELD_HEADER_LEN || (bytes.len() - FIELD_HEADER_LEN) % 8 != 0 {
        return Err(Error::Parse("truncated field dump".into()));
    }
    let header = String::from_utf8_lossy(&bytes[..FIELD_HEADER_LEN]).trim_end().to_string();
    let coeffs = bytes[FIELD_HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(FieldDump { header, coeffs })
}

/// Writes files under one directory and remembers their relative names.
#[derive(Debug)]
pub struct OutputDir {
    root: std::path::PathBuf,
    files: Vec<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root)?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.root.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut f = fs::File::create(path)?;
        f.write_all(contents.as_ref())?;
        self.files.push(name.to_string());
        Ok(())
    }

    pub fn files(&self) -> &[String] {
        &self.files
    }
}
