//! Binary caches for snapshots and transform pairs.
//!
//! Both formats are little-endian. Snapshot cache (`MSWQSNP1`):
//!
//! ```text
//! magic[8] version:u32 rows:u64 m:u64
//! x_cols:u64 x data (column-major f64)
//! f_flag:u8 [f_cols:u64 f data]
//! p_flag:u8 [p_cols:u64 p data]
//! desc_len:u64 desc utf-8
//! ```
//!
//! Transform cache (`MSWQXFM1`):
//!
//! ```text
//! magic[8] version:u32 dim:u64 n_r:u64 method:u8
//! v_r data (column-major) l_r data (row-major n_r x dim)
//! deim_flag:u8 [order:u64 u_fr data (column-major) indices u64*order]
//! ```

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::mor::{DeimData, MorMethod, SnapshotSet, TransformPair};

const SNAP_MAGIC: &[u8; 8] = b"MSWQSNP1";
const XFRM_MAGIC: &[u8; 8] = b"MSWQXFM1";
const VERSION: u32 = 1;

fn bad(msg: &str) -> std::io::Error {
    std::io::Error::new(std::io::ErrorKind::InvalidData, msg)
}

fn write_u64<W: Write>(w: &mut W, v: u64) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn write_matrix<W: Write>(w: &mut W, m: &DMatrix<f64>) -> std::io::Result<()> {
    // Column-major, matching the in-memory layout.
    for v in m.iter() {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_matrix<R: Read>(r: &mut R, rows: usize, cols: usize) -> std::io::Result<DMatrix<f64>> {
    let mut data = vec![0.0f64; rows * cols];
    let mut b = [0u8; 8];
    for v in data.iter_mut() {
        r.read_exact(&mut b)?;
        *v = f64::from_le_bytes(b);
    }
    Ok(DMatrix::from_vec(rows, cols, data))
}

pub fn write_snapshots<W: Write>(w: &mut W, snap: &SnapshotSet) -> std::io::Result<()> {
    w.write_all(SNAP_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_u64(w, snap.x.nrows() as u64)?;
    write_u64(w, snap.m as u64)?;
    write_u64(w, snap.x.ncols() as u64)?;
    write_matrix(w, &snap.x)?;
    match &snap.f {
        Some(f) => {
            w.write_all(&[1])?;
            write_u64(w, f.ncols() as u64)?;
            write_matrix(w, f)?;
        }
        None => w.write_all(&[0])?,
    }
    match &snap.p {
        Some(p) => {
            w.write_all(&[1])?;
            write_u64(w, p.ncols() as u64)?;
            write_matrix(w, p)?;
        }
        None => w.write_all(&[0])?,
    }
    write_u64(w, snap.excitation.len() as u64)?;
    w.write_all(snap.excitation.as_bytes())
}

pub fn read_snapshots<R: Read>(r: &mut R) -> std::io::Result<SnapshotSet> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != SNAP_MAGIC {
        return Err(bad("not a snapshot cache"));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != VERSION {
        return Err(bad("unsupported snapshot cache version"));
    }
    let rows = read_u64(r)? as usize;
    let m = read_u64(r)? as usize;
    let x_cols = read_u64(r)? as usize;
    let x = read_matrix(r, rows, x_cols)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let f = if flag[0] == 1 {
        let cols = read_u64(r)? as usize;
        Some(read_matrix(r, rows, cols)?)
    } else {
        None
    };
    r.read_exact(&mut flag)?;
    let p = if flag[0] == 1 {
        let cols = read_u64(r)? as usize;
        Some(read_matrix(r, rows, cols)?)
    } else {
        None
    };
    let desc_len = read_u64(r)? as usize;
    let mut desc = vec![0u8; desc_len];
    r.read_exact(&mut desc)?;
    Ok(SnapshotSet {
        x,
        f,
        p,
        m,
        excitation: String::from_utf8(desc).map_err(|_| bad("bad excitation description"))?,
    })
}

pub fn write_transform<W: Write>(
    w: &mut W,
    method: MorMethod,
    pair: &TransformPair,
    deim: Option<&DeimData>,
) -> std::io::Result<()> {
    w.write_all(XFRM_MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_u64(w, pair.dim() as u64)?;
    write_u64(w, pair.n_r() as u64)?;
    let tag = match method {
        MorMethod::Lpod => 0u8,
        MorMethod::Bpod => 1,
        MorMethod::Nlpod => 2,
    };
    w.write_all(&[tag])?;
    write_matrix(w, &pair.v_r)?;
    write_matrix(w, &pair.l_r)?;
    match deim {
        Some(d) => {
            w.write_all(&[1])?;
            write_u64(w, d.order() as u64)?;
            write_matrix(w, &d.u_fr)?;
            for &i in &d.indices {
                write_u64(w, i as u64)?;
            }
        }
        None => w.write_all(&[0])?,
    }
    Ok(())
}

pub fn read_transform<R: Read>(
    r: &mut R,
) -> std::io::Result<(MorMethod, TransformPair, Option<DeimData>)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != XFRM_MAGIC {
        return Err(bad("not a transform cache"));
    }
    let mut ver = [0u8; 4];
    r.read_exact(&mut ver)?;
    if u32::from_le_bytes(ver) != VERSION {
        return Err(bad("unsupported transform cache version"));
    }
    let dim = read_u64(r)? as usize;
    let n_r = read_u64(r)? as usize;
    let mut tag = [0u8; 1];
    r.read_exact(&mut tag)?;
    let method = match tag[0] {
        0 => MorMethod::Lpod,
        1 => MorMethod::Bpod,
        2 => MorMethod::Nlpod,
        _ => return Err(bad("unknown method tag")),
    };
    let v_r = read_matrix(r, dim, n_r)?;
    let l_r = read_matrix(r, n_r, dim)?;
    let mut flag = [0u8; 1];
    r.read_exact(&mut flag)?;
    let deim = if flag[0] == 1 {
        let order = read_u64(r)? as usize;
        let u_fr = read_matrix(r, dim, order)?;
        let mut indices = Vec::with_capacity(order);
        for _ in 0..order {
            indices.push(read_u64(r)? as usize);
        }
        Some(DeimData { u_fr, indices })
    } else {
        None
    };
    let retained = nalgebra::DVector::from_element(n_r, f64::NAN);
    Ok((
        method,
        TransformPair { v_r, l_r, retained },
        deim,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    #[test]
    fn snapshot_round_trip() {
        let snap = SnapshotSet {
            x: DMatrix::from_fn(4, 3, |i, j| (i * 3 + j) as f64),
            f: Some(DMatrix::from_fn(4, 3, |i, j| (i + j) as f64 * 0.5)),
            p: None,
            m: 3,
            excitation: "test run".to_string(),
        };
        let mut buf = Vec::new();
        write_snapshots(&mut buf, &snap).unwrap();
        let back = read_snapshots(&mut buf.as_slice()).unwrap();
        assert_eq!(back.x, snap.x);
        assert_eq!(back.f, snap.f);
        assert!(back.p.is_none());
        assert_eq!(back.m, 3);
        assert_eq!(back.excitation, "test run");
    }

    #[test]
    fn transform_round_trip() {
        let pair = TransformPair {
            v_r: DMatrix::from_fn(6, 2, |i, j| (i + j) as f64 * 0.1),
            l_r: DMatrix::from_fn(2, 6, |i, j| (i * 6 + j) as f64 * 0.01),
            retained: DVector::from_vec(vec![4.0, 1.0]),
        };
        let deim = DeimData {
            u_fr: DMatrix::from_fn(6, 2, |i, j| ((i + 1) * (j + 1)) as f64),
            indices: vec![4, 1],
        };
        let mut buf = Vec::new();
        write_transform(&mut buf, MorMethod::Nlpod, &pair, Some(&deim)).unwrap();
        let (method, pair2, deim2) = read_transform(&mut buf.as_slice()).unwrap();
        assert_eq!(method, MorMethod::Nlpod);
        assert_eq!(pair2.v_r, pair.v_r);
        assert_eq!(pair2.l_r, pair.l_r);
        let deim2 = deim2.unwrap();
        assert_eq!(deim2.indices, deim.indices);
        assert_eq!(deim2.u_fr, deim.u_fr);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let buf = b"NOTMAGIC\x01\x00\x00\x00".to_vec();
        assert!(read_snapshots(&mut buf.as_slice()).is_err());
        assert!(read_transform(&mut buf.as_slice()).is_err());
    }
}
