//! Binary serialization of [`KernelModel`].
//!
//! All integers are unsigned little-endian, all reals IEEE-754 `f64`
//! little-endian, matrices row-major:
//!
//! | field            | type                             |
//! |------------------|----------------------------------|
//! | magic            | 4 bytes `AHKM`                   |
//! | version          | `u32` = 1                        |
//! | shape            | `f64`                            |
//! | nugget           | `f64`                            |
//! | greedy_tol       | `f64`                            |
//! | max_centers      | `u64`                            |
//! | selection        | `u32` byte length + UTF-8 bytes  |
//! | box              | 4 x `f64`: Da_min Pe_min Da_max Pe_max |
//! | dt               | `f64`                            |
//! | n_centers `m`    | `u64`                            |
//! | n_outputs `N_T`  | `u64`                            |
//! | centers          | `m` x (Da `f64`, Pe `f64`), selection order |
//! | newton_factor    | `m*m` x `f64`, unit lower triangular |
//! | pivots           | `m` x `f64`                      |
//! | coeff_block      | `m*N_T` x `f64`                  |
//!
//! The greedy residual histories are diagnostic and not stored.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use super::{KernelConfig, KernelModel};
use crate::error::{Error, Result};
use crate::fem::{ParameterBox, ParameterPoint};

pub const MAGIC: &[u8; 4] = b"AHKM";
pub const VERSION: u32 = 1;

pub fn write_model<W: Write>(model: &KernelModel, mut w: W) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    put_f64(&mut w, model.config.shape)?;
    put_f64(&mut w, model.config.nugget)?;
    put_f64(&mut w, model.config.greedy_tol)?;
    put_u64(&mut w, model.config.max_centers as u64)?;
    let sel = model.config.selection.as_bytes();
    w.write_all(&(sel.len() as u32).to_le_bytes())?;
    w.write_all(sel)?;
    let [dl, pl] = model.param_box.lower();
    let [du, pu] = model.param_box.upper();
    for v in [dl, pl, du, pu, model.dt] {
        put_f64(&mut w, v)?;
    }
    let m = model.n_centers();
    let n_out = model.n_outputs();
    put_u64(&mut w, m as u64)?;
    put_u64(&mut w, n_out as u64)?;
    for c in &model.centers {
        put_f64(&mut w, c.da)?;
        put_f64(&mut w, c.pe)?;
    }
    for i in 0..m {
        for j in 0..m {
            put_f64(&mut w, model.newton_factor[(i, j)])?;
        }
    }
    for &p in &model.pivots {
        put_f64(&mut w, p)?;
    }
    for i in 0..m {
        for j in 0..n_out {
            put_f64(&mut w, model.coeff_block[(i, j)])?;
        }
    }
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<KernelModel> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::ModelFormat("bad magic".into()));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}")));
    }
    let shape = get_f64(&mut r)?;
    let nugget = get_f64(&mut r)?;
    let greedy_tol = get_f64(&mut r)?;
    let max_centers = get_len(&mut r)?;
    let sel_len = get_u32(&mut r)? as usize;
    let mut sel = vec![0u8; sel_len];
    r.read_exact(&mut sel)?;
    let selection =
        String::from_utf8(sel).map_err(|_| Error::ModelFormat("selection is not UTF-8".into()))?;
    let (dl, pl, du, pu) = (
        get_f64(&mut r)?,
        get_f64(&mut r)?,
        get_f64(&mut r)?,
        get_f64(&mut r)?,
    );
    let param_box = ParameterBox::new([dl, pl], [du, pu])?;
    let dt = get_f64(&mut r)?;
    let m = get_len(&mut r)?;
    let n_out = get_len(&mut r)?;
    let mut centers = Vec::with_capacity(m.min(1 << 16));
    for _ in 0..m {
        let da = get_f64(&mut r)?;
        let pe = get_f64(&mut r)?;
        centers.push(ParameterPoint::new(da, pe));
    }
    let mut factor = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            factor[(i, j)] = get_f64(&mut r)?;
        }
    }
    let pivots = (0..m)
        .map(|_| get_f64(&mut r))
        .collect::<Result<Vec<_>>>()?;
    let mut coeff_block = DMatrix::zeros(m, n_out);
    for i in 0..m {
        for j in 0..n_out {
            coeff_block[(i, j)] = get_f64(&mut r)?;
        }
    }
    let config = KernelConfig {
        shape,
        max_centers,
        greedy_tol,
        nugget,
        selection,
    };
    config
        .validate()
        .map_err(|e| Error::ModelFormat(format!("invalid kernel configuration: {e}")))?;
    Ok(KernelModel {
        centers,
        newton_factor: factor,
        pivots,
        coeff_block,
        config,
        param_box,
        dt,
        residual_history: Vec::new(),
        native_residual_history: Vec::new(),
    })
}

pub fn save(model: &KernelModel, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    write_model(model, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load(path: &Path) -> Result<KernelModel> {
    let file = std::fs::File::open(path)?;
    read_model(std::io::BufReader::new(file))
}

fn put_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn put_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn get_len<R: Read>(r: &mut R) -> Result<usize> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    usize::try_from(u64::from_le_bytes(b)).map_err(|_| Error::ModelFormat("length overflow".into()))
}
