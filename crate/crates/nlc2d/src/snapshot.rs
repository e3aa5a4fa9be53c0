//! Binary snapshots of a solver state.
//!
//! Layout (all integers and floats little-endian):
//!
//! | offset | size | field |
//! |-------:|-----:|-------|
//! | 0  | 6 | magic `NLC2D\0` |
//! | 6  | 2 | zero |
//! | 8  | 4 | format version (`u32`) |
//! | 12 | 4 | `nx` (`u32`) |
//! | 16 | 4 | `ny` (`u32`) |
//! | 20 | 4 | `L`, components of the director (`u32`) |
//! | 24 | 4 | domain: 0 torus, 1 square (`u32`) |
//! | 28 | 4 | manifold: 0 sphere, 1 biaxial (`u32`) |
//! | 32 | 8 | time (`f64`) |
//! | 40 | 8 | tubular radius `δ_N` (`f64`) |
//! | 48 | 16 | zero |
//!
//! The payload follows: `u` (2 per node), then `v` (`L` per node), then `p`
//! (1 per node), each node-major with components innermost, as `f64`.

use std::io::{Read, Write};
use std::path::Path;

use nlc2d_core::{DirectorField, Domain, Field, Grid2D, ManifoldKind, ManifoldSpec, State};

pub const MAGIC: [u8; 6] = *b"NLC2D\0";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 64;

#[derive(Debug, thiserror::Error)]
pub enum SnapshotError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a snapshot (bad magic)")]
    BadMagic,
    #[error("snapshot version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("payload has {found} bytes, header implies {expected}")]
    CorruptPayload { found: usize, expected: usize },
    #[error("bad header: {0}")]
    BadHeader(String),
}

/// A state together with the grid it lives on.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub grid: Grid2D,
    pub state: State,
}

impl Snapshot {
    pub fn new(grid: Grid2D, state: State) -> Self {
        Self { grid, state }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let s = &self.state;
        let n = self.grid.n() as u32;
        let dim = s.v.spec.ambient_dim();
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.grid.nodes() * (3 + dim));
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&[0, 0]);
        for word in [
            VERSION,
            n,
            n,
            dim as u32,
            match self.grid.domain() {
                Domain::PeriodicTorus => 0,
                Domain::DirichletSquare => 1,
            },
            match s.v.spec.kind() {
                ManifoldKind::Sphere => 0,
                ManifoldKind::Biaxial => 1,
            },
        ] {
            out.extend_from_slice(&word.to_le_bytes());
        }
        out.extend_from_slice(&s.t.to_le_bytes());
        out.extend_from_slice(&s.v.spec.delta_n().to_le_bytes());
        out.resize(HEADER_LEN, 0);
        for x in s.u.as_slice().iter().chain(s.v.values.as_slice()).chain(s.p.as_slice()) {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SnapshotError> {
        if bytes.len() < MAGIC.len() || bytes[..6] != MAGIC {
            return Err(SnapshotError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(SnapshotError::CorruptPayload { found: bytes.len(), expected: HEADER_LEN });
        }
        let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("four bytes"));
        let float = |at: usize| f64::from_le_bytes(bytes[at..at + 8].try_into().expect("eight bytes"));
        let version = word(8);
        if version != VERSION {
            return Err(SnapshotError::VersionMismatch { found: version, expected: VERSION });
        }
        let bad = |m: String| SnapshotError::BadHeader(m);
        let (nx, ny, dim) = (word(12) as usize, word(16) as usize, word(20) as usize);
        if nx != ny {
            return Err(bad(format!("nx = {nx} differs from ny = {ny}")));
        }
        let domain = match word(24) {
            0 => Domain::PeriodicTorus,
            1 => Domain::DirichletSquare,
            d => return Err(bad(format!("unknown domain {d}"))),
        };
        let kind = match word(28) {
            0 => ManifoldKind::Sphere,
            1 => ManifoldKind::Biaxial,
            k => return Err(bad(format!("unknown manifold {k}"))),
        };
        if dim != kind.ambient_dim() {
            return Err(bad(format!("{dim} components do not match the manifold")));
        }
        let spec = ManifoldSpec::new(kind, float(40)).map_err(|e| bad(e.to_string()))?;
        let t = float(32);
        if bytes[6..8] != [0, 0] || bytes[48..HEADER_LEN].iter().any(|&b| b != 0) {
            return Err(bad(String::from("nonzero padding")));
        }
        let grid = Grid2D::new(nx, domain).map_err(|e| bad(e.to_string()))?;
        let nodes = grid.nodes();
        let expected = nodes
            .checked_mul(8 * (3 + dim))
            .and_then(|p| p.checked_add(HEADER_LEN))
            .ok_or_else(|| bad(String::from("grid too large")))?;
        if bytes.len() != expected {
            return Err(SnapshotError::CorruptPayload { found: bytes.len(), expected });
        }
        let mut floats = bytes[HEADER_LEN..]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("eight bytes")));
        let mut take = |comps: usize| -> Field {
            let data: Vec<f64> = floats.by_ref().take(nodes * comps).collect();
            Field::from_vec(&grid, comps, data).expect("length checked")
        };
        let u = take(2);
        let v = take(dim);
        let p = take(1);
        Ok(Self { grid, state: State { t, u, v: DirectorField { spec, values: v }, p } })
    }
}

pub fn write_snapshot(path: &Path, snap: &Snapshot) -> Result<(), SnapshotError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(&snap.to_bytes())?;
    f.flush()?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    Snapshot::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Snapshot {
        let grid = Grid2D::square(8).unwrap();
        let v = DirectorField::from_fn(&grid, ManifoldSpec::biaxial(), |x, y, o| {
            let (s, c) = (x + 2.0 * y).sin_cos();
            o.copy_from_slice(&[c, s, 0.0, -s, c, 0.0]);
        });
        let u = Field::from_fn(&grid, 2, |x, y, o| o.copy_from_slice(&[x * y, -0.5 * x]));
        let mut state = State::new(&grid, u, v).unwrap();
        state.t = 0.125;
        state.p = Field::from_fn(&grid, 1, |x, _, o| o[0] = x - 0.5);
        Snapshot::new(grid, state)
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..6], b"NLC2D\0");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 6);
        assert_eq!(u32::from_le_bytes(bytes[24..28].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[32..40].try_into().unwrap()), 0.125);
        assert_eq!(bytes.len(), 64 + 64 * 9 * 8);
        // first payload value is u_x at node 0
        let g = sample().grid;
        let (x, y) = g.position(0);
        assert_eq!(f64::from_le_bytes(bytes[64..72].try_into().unwrap()), x * y);
    }

    #[test]
    fn round_trip_and_errors() {
        let snap = sample();
        let bytes = snap.to_bytes();
        assert_eq!(Snapshot::from_bytes(&bytes).unwrap(), snap);
        assert!(matches!(Snapshot::from_bytes(&bytes[..bytes.len() - 3]), Err(SnapshotError::CorruptPayload { .. })));
        assert!(matches!(Snapshot::from_bytes(&bytes[..40]), Err(SnapshotError::CorruptPayload { .. })));
        let mut b = bytes.clone();
        b[0] = b'X';
        assert!(matches!(Snapshot::from_bytes(&b), Err(SnapshotError::BadMagic)));
        let mut b = bytes.clone();
        b[8] = 2;
        assert!(matches!(Snapshot::from_bytes(&b), Err(SnapshotError::VersionMismatch { found: 2, .. })));
        let mut b = bytes.clone();
        b[28] = 7;
        assert!(matches!(Snapshot::from_bytes(&b), Err(SnapshotError::BadHeader(_))));
        assert!(matches!(Snapshot::from_bytes(&[]), Err(SnapshotError::BadMagic)));
    }
}
