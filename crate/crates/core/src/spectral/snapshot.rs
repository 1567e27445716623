//! Persistence of flow states.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! | offset | size | content                                  |
//! |--------|------|------------------------------------------|
//! | 0      | 8    | magic `NSKQSNAP`                         |
//! | 8      | 4    | format version (u32, currently 1)        |
//! | 12     | 4    | dimension `d` (u32)                      |
//! | 16     | 4    | modes per axis `N` (u32)                 |
//! | 20     | 8    | period `L` (f64)                         |
//! | 28     | 8    | time stamp `t` (f64)                     |
//! | 36     | 1    | real flag (0 or 1)                       |
//! | 37     | 4    | component count `c` (u32, `d + 1`)       |
//! | 41     | ...  | `c · N^d` pairs `(re, im)` of f64        |
//!
//! Components are stored as `a, u_1, ..., u_d`; inside a component the
//! coefficients follow the lattice order (row-major, FFT slot order).

use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::field::{FlowState, SpectralField};
use super::lattice::{FrequencyLattice, LatticeSpec};
use crate::error::{NskqError, Result};

pub const MAGIC: &[u8; 8] = b"NSKQSNAP";
pub const VERSION: u32 = 1;

pub fn write_binary(state: &FlowState, mut w: impl Write) -> Result<()> {
    let lat = state.lattice();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(lat.dim() as u32).to_le_bytes())?;
    w.write_all(&(lat.modes() as u32).to_le_bytes())?;
    w.write_all(&lat.period().to_le_bytes())?;
    w.write_all(&state.t.to_le_bytes())?;
    let real = state.components().all(SpectralField::is_real);
    w.write_all(&[real as u8])?;
    w.write_all(&((state.dim() + 1) as u32).to_le_bytes())?;
    let mut buf = Vec::with_capacity(16 * lat.len());
    for comp in state.components() {
        buf.clear();
        for c in comp.coeffs() {
            buf.extend_from_slice(&c.re.to_le_bytes());
            buf.extend_from_slice(&c.im.to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

fn read_array<const K: usize>(r: &mut impl Read) -> Result<[u8; K]> {
    let mut b = [0u8; K];
    r.read_exact(&mut b)
        .map_err(|e| NskqError::Snapshot(format!("truncated header: {e}")))?;
    Ok(b)
}

/// Reads a state; `lattice` is reused when it matches the stored header.
pub fn read_binary(
    mut r: impl Read,
    lattice: Option<&Arc<FrequencyLattice>>,
) -> Result<FlowState> {
    if &read_array::<8>(&mut r)? != MAGIC {
        return Err(NskqError::Snapshot("bad magic".into()));
    }
    let version = u32::from_le_bytes(read_array(&mut r)?);
    if version != VERSION {
        return Err(NskqError::Snapshot(format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let modes = u32::from_le_bytes(read_array(&mut r)?) as usize;
    let period = f64::from_le_bytes(read_array(&mut r)?);
    let t = f64::from_le_bytes(read_array(&mut r)?);
    let real = read_array::<1>(&mut r)?[0] != 0;
    let count = u32::from_le_bytes(read_array(&mut r)?) as usize;
    if count != dim + 1 {
        return Err(NskqError::Snapshot(format!(
            "expected {} components, header says {count}",
            dim + 1
        )));
    }
    let spec = LatticeSpec::new(dim, modes, period);
    let lat = match lattice {
        Some(l) if l.spec() == spec => Arc::clone(l),
        _ => spec.build()?,
    };
    let mut bytes = vec![0u8; 16 * lat.len()];
    let mut comps = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut bytes)
            .map_err(|e| NskqError::Snapshot(format!("truncated coefficients: {e}")))?;
        let coeffs = bytes
            .chunks_exact(16)
            .map(|ch| {
                let re = f64::from_le_bytes(ch[..8].try_into().unwrap());
                let im = f64::from_le_bytes(ch[8..].try_into().unwrap());
                Complex64::new(re, im)
            })
            .collect();
        comps.push(SpectralField::from_coeffs(&lat, coeffs, real)?);
    }
    let a = comps.remove(0);
    FlowState::new(a, comps, t)
}

pub fn save(state: &FlowState, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_binary(state, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path, lattice: Option<&Arc<FrequencyLattice>>) -> Result<FlowState> {
    let file = std::fs::File::open(path)?;
    read_binary(std::io::BufReader::new(file), lattice)
}

/// Text form for small lattices.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JsonSnapshot {
    pub lattice: LatticeSpec,
    pub t: f64,
    pub real: bool,
    /// `[a, u_1, ..., u_d]`, each a list of `[re, im]`.
    pub components: Vec<Vec<[f64; 2]>>,
}

impl JsonSnapshot {
    pub fn from_state(state: &FlowState) -> Self {
        Self {
            lattice: state.lattice().spec(),
            t: state.t,
            real: state.components().all(SpectralField::is_real),
            components: state
                .components()
                .map(|c| c.coeffs().iter().map(|z| [z.re, z.im]).collect())
                .collect(),
        }
    }

    pub fn to_state(&self) -> Result<FlowState> {
        let lat = self.lattice.build()?;
        if self.components.len() != lat.dim() + 1 {
            return Err(NskqError::Snapshot("wrong component count".into()));
        }
        let mut comps = self
            .components
            .iter()
            .map(|c| {
                let coeffs = c.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
                SpectralField::from_coeffs(&lat, coeffs, self.real)
            })
            .collect::<Result<Vec<_>>>()?;
        let a = comps.remove(0);
        FlowState::new(a, comps, self.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sample_state() -> FlowState {
        let lat = LatticeSpec::new(2, 8, 2.0 * PI).build().unwrap();
        let mut s = FlowState::zeros(&lat, 0.125);
        s.a = SpectralField::single_mode(&lat, &[1, 2], Complex64::new(0.5, -0.25)).unwrap();
        s.u[1] = SpectralField::single_mode(&lat, &[0, 3], Complex64::new(1e-300, 7.0)).unwrap();
        s
    }

    #[test]
    fn binary_round_trip_is_exact() {
        let s = sample_state();
        let mut bytes = Vec::new();
        write_binary(&s, &mut bytes).unwrap();
        assert_eq!(bytes.len(), 41 + 3 * 64 * 16);
        assert_eq!(&bytes[..8], MAGIC);
        let back = read_binary(bytes.as_slice(), None).unwrap();
        assert_eq!(back.t, s.t);
        assert_eq!(back.max_abs_diff(&s), 0.0);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let mut bytes = Vec::new();
        write_binary(&sample_state(), &mut bytes).unwrap();
        bytes.truncate(100);
        assert!(matches!(read_binary(bytes.as_slice(), None), Err(NskqError::Snapshot(_))));
        assert!(read_binary(&b"NOTASNAPSHOT"[..], None).is_err());
    }

    #[test]
    fn json_round_trip() {
        let s = sample_state();
        let text = serde_json::to_string(&JsonSnapshot::from_state(&s)).unwrap();
        let js: JsonSnapshot = serde_json::from_str(&text).unwrap();
        assert_eq!(js.to_state().unwrap().max_abs_diff(&s), 0.0);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.bin");
        let s = sample_state();
        save(&s, &path).unwrap();
        let back = load(&path, Some(s.lattice())).unwrap();
        assert!(Arc::ptr_eq(back.lattice(), s.lattice()));
        assert_eq!(back.max_abs_diff(&s), 0.0);
    }
}
