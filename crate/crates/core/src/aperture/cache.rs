//! On-disk cache of the aperture precompute.

use super::{ApertureData, CouplingMatrix};
use crate::boxmodes::{BoxMode, Family};
use crate::error::Result;
use crate::geometry::RegionMask;
use faer::Mat;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::{Path, PathBuf};

const MAGIC: &[u8; 8] = b"MENAPC01";

/// Content hash of everything the precompute depends on.
pub fn cache_key(mask: &RegionMask<f64>, n_modes: usize, box_modes: &[BoxMode<f64>], tol: f64) -> String {
    let mut h = Sha256::new();
    h.update(MAGIC);
    for v in [mask.nx as u64, mask.ny as u64, n_modes as u64, box_modes.len() as u64] {
        h.update(v.to_le_bytes());
    }
    for v in [mask.hx, mask.hy, tol] {
        h.update(v.to_bits().to_le_bytes());
    }
    let packed: Vec<u8> = mask
        .cells()
        .chunks(8)
        .map(|c| c.iter().enumerate().fold(0u8, |acc, (i, &b)| acc | ((b as u8) << i)))
        .collect();
    h.update(&packed);
    for m in box_modes {
        h.update([m.family as u8]);
        h.update(m.m.to_le_bytes());
        h.update(m.n.to_le_bytes());
    }
    hex::encode(h.finalize())
}

fn path(dir: &Path, key: &str) -> PathBuf {
    dir.join(format!("aperture-{key}.bin"))
}

/// Loads a cached precompute; any read or format problem is a miss.
pub fn load_cached(dir: &Path, key: &str) -> Option<ApertureData> {
    let p = path(dir, key);
    let bytes = std::fs::read(&p).ok()?;
    let data = decode(&bytes)?;
    log::info!("aperture cache hit: {}", p.display());
    Some(data)
}

fn decode(bytes: &[u8]) -> Option<ApertureData> {
    let mut at = 0usize;
    let mut take = |n: usize| -> Option<&[u8]> {
        let s = bytes.get(at..at + n)?;
        at += n;
        Some(s)
    };
    if take(8)? != MAGIC {
        return None;
    }
    let nb = u64::from_le_bytes(take(8)?.try_into().ok()?) as usize;
    let nk = u64::from_le_bytes(take(8)?.try_into().ok()?) as usize;
    let mut families = Vec::with_capacity(nb);
    for &f in take(nb)? {
        families.push(match f {
            0 => Family::TE,
            1 => Family::TM,
            _ => return None,
        });
    }
    let mut f64s = |n: usize| -> Option<Vec<f64>> {
        Some(take(n * 8)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    };
    let kc = f64s(nb)?;
    let c = f64s(nb * nk)?;
    if at != bytes.len() {
        return None;
    }
    Some(ApertureData {
        families,
        kc,
        coupling: CouplingMatrix { c: Mat::from_fn(nb, nk, |i, m| c[m * nb + i]) },
    })
}

/// Writes atomically through a temporary file in `dir`.
pub fn store_cached(dir: &Path, key: &str, data: &ApertureData) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let c = &data.coupling.c;
    let (nb, nk) = (c.nrows(), c.ncols());
    let mut buf = Vec::with_capacity(24 + nb * 9 + nb * nk * 8);
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&(nb as u64).to_le_bytes());
    buf.extend_from_slice(&(nk as u64).to_le_bytes());
    buf.extend(data.families.iter().map(|&f| f as u8));
    for v in &data.kc {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for m in 0..nk {
        for v in c.col_as_slice(m) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = dir.join(format!(".aperture-{key}.{}.tmp", std::process::id()));
    let mut f = std::fs::File::create(&tmp)?;
    f.write_all(&buf)?;
    f.sync_all()?;
    std::fs::rename(&tmp, path(dir, key))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boxmodes::enumerate_modes;
    use crate::geometry::{build_aperture, Metallization, Shape, ShieldBox};

    #[test]
    fn round_trip_and_key_sensitivity() {
        let bx = ShieldBox::new(1.0, 1.0).unwrap();
        let m0 = build_aperture(&bx, &Metallization::default(), 16, 16).unwrap();
        let m1 = build_aperture(&bx, &Metallization::new(vec![Shape::rect(0.0, 0.0, 0.25, 0.25)]), 16, 16).unwrap();
        let bm = enumerate_modes(&bx, 8);
        let k0 = cache_key(&m0, 2, &bm, 1e-10);
        assert_ne!(k0, cache_key(&m1, 2, &bm, 1e-10));
        assert_ne!(k0, cache_key(&m0, 3, &bm, 1e-10));
        assert_eq!(k0, cache_key(&m0, 2, &bm, 1e-10));
        let data = ApertureData {
            families: vec![Family::TE, Family::TM],
            kc: vec![1.5, 2.5],
            coupling: CouplingMatrix { c: Mat::from_fn(2, 8, |i, m| (i * 8 + m) as f64 * 0.1) },
        };
        let dir = tempfile::tempdir().unwrap();
        assert!(load_cached(dir.path(), &k0).is_none());
        store_cached(dir.path(), &k0, &data).unwrap();
        assert_eq!(load_cached(dir.path(), &k0).unwrap(), data);
        std::fs::write(path(dir.path(), &k0), b"MENAPC01garbage").unwrap();
        assert!(load_cached(dir.path(), &k0).is_none());
    }
}
