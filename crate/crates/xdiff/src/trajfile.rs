//! Binary trajectory files.
//!
//! Header, all little-endian:
//!
//! | bytes | field |
//! |------:|-------|
//! | 4  | magic `XDIF` |
//! | 2  | format version (`u16`) |
//! | 4  | spatial dimension (`u32`) |
//! | 4  | species (`u32`) |
//! | 4  | cells per axis (`u32`) |
//! | 8  | snapshot spacing (`f64`) |
//! | 8  | time of the first snapshot (`f64`) |
//! | 8  | snapshot count (`u64`) |
//! | 16 | extent per axis (`2 × f64`, unused axes 0) |
//! | 4  | CRC32 of the 58 bytes above |
//!
//! The payload follows: `f64` values ordered by snapshot, then cell (x
//! fastest), then species.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use xdiff_core::grid::{SpaceTimeGrid, Trajectory};

pub const MAGIC: [u8; 4] = *b"XDIF";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 58;

#[derive(Debug, thiserror::Error)]
pub enum TrajectoryFileError {
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a trajectory file (bad magic {0:?})")]
    Magic([u8; 4]),
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("header checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },
    #[error("invalid header: {0}")]
    Header(String),
    #[error("payload holds {found} bytes, header implies {expected}")]
    Payload { expected: u64, found: u64 },
}

pub fn encode_header(grid: &SpaceTimeGrid) -> [u8; HEADER_LEN + 4] {
    let mut h = [0u8; HEADER_LEN + 4];
    let mut at = 0;
    let mut put = |bytes: &[u8]| {
        h[at..at + bytes.len()].copy_from_slice(bytes);
        at += bytes.len();
    };
    put(&MAGIC);
    put(&VERSION.to_le_bytes());
    put(&(grid.dim() as u32).to_le_bytes());
    put(&(grid.n_species() as u32).to_le_bytes());
    put(&(grid.cells_per_axis() as u32).to_le_bytes());
    put(&grid.dt_snap().to_le_bytes());
    put(&grid.t_start().to_le_bytes());
    put(&(grid.snapshots() as u64).to_le_bytes());
    for a in 0..2 {
        put(&grid.extent().get(a).copied().unwrap_or(0.0).to_le_bytes());
    }
    let crc = crc32fast::hash(&h[..HEADER_LEN]);
    h[HEADER_LEN..].copy_from_slice(&crc.to_le_bytes());
    h
}

pub fn decode_header(h: &[u8; HEADER_LEN + 4]) -> Result<SpaceTimeGrid, TrajectoryFileError> {
    let magic: [u8; 4] = h[0..4].try_into().unwrap();
    if magic != MAGIC {
        return Err(TrajectoryFileError::Magic(magic));
    }
    let stored = u32::from_le_bytes(h[HEADER_LEN..].try_into().unwrap());
    let computed = crc32fast::hash(&h[..HEADER_LEN]);
    if stored != computed {
        return Err(TrajectoryFileError::Checksum { stored, computed });
    }
    let version = u16::from_le_bytes(h[4..6].try_into().unwrap());
    if version != VERSION {
        return Err(TrajectoryFileError::Version(version));
    }
    let u32_at = |i: usize| u32::from_le_bytes(h[i..i + 4].try_into().unwrap()) as usize;
    let f64_at = |i: usize| f64::from_le_bytes(h[i..i + 8].try_into().unwrap());
    let dim = u32_at(6);
    let n = u32_at(10);
    let cells = u32_at(14);
    let dt_snap = f64_at(18);
    let t_start = f64_at(26);
    let snapshots = u64::from_le_bytes(h[34..42].try_into().unwrap());
    let extent = [f64_at(42), f64_at(50)];
    if !(1..=2).contains(&dim) {
        return Err(TrajectoryFileError::Header(format!("dimension {dim}")));
    }
    let snapshots = usize::try_from(snapshots).map_err(|_| TrajectoryFileError::Header(format!("{snapshots} snapshots")))?;
    SpaceTimeGrid::new(dim, &extent[..dim], cells, dt_snap, t_start, snapshots, n).map_err(|e| TrajectoryFileError::Header(e.to_string()))
}

fn payload_len(grid: &SpaceTimeGrid) -> u64 {
    grid.snapshots() as u64 * grid.n_cells() as u64 * grid.n_species() as u64 * 8
}

pub fn write_to<W: Write>(traj: &Trajectory, mut w: W) -> std::io::Result<()> {
    w.write_all(&encode_header(traj.grid()))?;
    let mut buf = Vec::with_capacity(traj.values().len() * 8);
    for v in traj.values() {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_from<R: Read>(mut r: R) -> Result<Trajectory, TrajectoryFileError> {
    let mut h = [0u8; HEADER_LEN + 4];
    r.read_exact(&mut h)?;
    let grid = decode_header(&h)?;
    let expected = payload_len(&grid);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() as u64 != expected {
        return Err(TrajectoryFileError::Payload { expected, found: bytes.len() as u64 });
    }
    let values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    Trajectory::new(grid, values).map_err(|e| TrajectoryFileError::Header(e.to_string()))
}

pub fn write(traj: &Trajectory, path: &Path) -> std::io::Result<()> {
    write_to(traj, BufWriter::new(File::create(path)?))
}

pub fn read(path: &Path) -> Result<Trajectory, TrajectoryFileError> {
    read_from(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Trajectory {
        let grid = SpaceTimeGrid::new(2, &[1.0, 2.0], 4, 0.25, -0.5, 2, 2).unwrap();
        Trajectory::from_fn(grid, |x, t, o| {
            o[0] = x[0] * 0.1 + t;
            o[1] = x[1].sin();
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_identical() {
        let traj = sample();
        let mut bytes = Vec::new();
        write_to(&traj, &mut bytes).unwrap();
        assert_eq!(bytes.len(), HEADER_LEN + 4 + 4 * 4 * 2 * 2 * 8);
        let back = read_from(bytes.as_slice()).unwrap();
        assert_eq!(back.grid(), traj.grid());
        let a: Vec<u64> = traj.values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = back.values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn header_corruption_is_detected() {
        let mut bytes = Vec::new();
        write_to(&sample(), &mut bytes).unwrap();
        bytes[20] ^= 1;
        assert!(matches!(read_from(bytes.as_slice()), Err(TrajectoryFileError::Checksum { .. })));
        bytes[20] ^= 1;
        bytes.pop();
        assert!(matches!(read_from(bytes.as_slice()), Err(TrajectoryFileError::Payload { .. })));
        bytes[0] = b'Y';
        assert!(matches!(read_from(bytes.as_slice()), Err(TrajectoryFileError::Magic(_))));
    }
}
