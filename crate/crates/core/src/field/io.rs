//! Field files: one JSON header line, then a point-major payload.
//!
//! For each grid point in row-major order (last axis fastest) the payload holds
//! the tensors named in `tensors`, each row-major: `J` and `K` (`d^2`), `g` (`d^2`),
//! `H` (`d^3`). Binary payloads are little-endian IEEE-754 doubles; JSON payloads
//! are a single array of numbers on the second line.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{BivectorKind, Grid, StructureField};
use crate::error::{Result, StrataError};
use crate::numerics::Mat;

pub const FORMAT_NAME: &str = "strata-field";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Encoding {
    #[serde(rename = "binary-le-f64")]
    Binary,
    #[serde(rename = "json")]
    Json,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FieldHeader {
    pub format: String,
    pub version: u32,
    /// Base dimension.
    pub dims: usize,
    pub shape: Vec<usize>,
    pub h: f64,
    pub origin: Vec<f64>,
    /// Fiber complex dimension.
    pub n: usize,
    pub tensors: Vec<String>,
    /// Row-major base structure, if any.
    #[serde(default)]
    pub base: Option<Vec<f64>>,
    #[serde(default)]
    pub integrable: Vec<BivectorKind>,
    pub encoding: Encoding,
    pub byte_order: String,
}

fn row_major(m: &Mat) -> impl Iterator<Item = f64> + '_ {
    (0..m.nrows()).flat_map(move |r| (0..m.ncols()).map(move |c| m[(r, c)]))
}

pub fn write_field<W: Write>(field: &StructureField, out: &mut W, encoding: Encoding) -> Result<()> {
    let grid = field.grid();
    let mut tensors = vec!["J".to_string(), "K".to_string()];
    if field.has_metric() {
        tensors.push("g".into());
    }
    if field.three_form(0).is_some() {
        tensors.push("H".into());
    }
    let header = FieldHeader {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        dims: grid.dim(),
        shape: grid.shape().to_vec(),
        h: grid.h(),
        origin: grid.origin().to_vec(),
        n: field.n(),
        tensors,
        base: field.base().map(|b| row_major(b).collect()),
        integrable: field.integrable().to_vec(),
        encoding,
        byte_order: "little-endian".into(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    let mut values: Vec<f64> = Vec::new();
    for p in 0..field.len() {
        values.extend(row_major(field.j(p).matrix()));
        values.extend(row_major(field.k(p).matrix()));
        if let Some(g) = field.metric(p) {
            values.extend(row_major(g.matrix()));
        }
        if let Some(h) = field.three_form(p) {
            values.extend_from_slice(h);
        }
    }
    match encoding {
        Encoding::Binary => {
            for v in values {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Encoding::Json => {
            serde_json::to_writer(&mut *out, &values)?;
            out.write_all(b"\n")?;
        }
    }
    Ok(())
}

fn bad(msg: impl Into<String>) -> StrataError {
    StrataError::FieldFormat(msg.into())
}

pub fn read_field<R: BufRead>(input: &mut R) -> Result<StructureField> {
    let mut line = String::new();
    input.read_line(&mut line)?;
    let header: FieldHeader = serde_json::from_str(line.trim()).map_err(|e| bad(format!("header: {e}")))?;
    if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format {} v{}", header.format, header.version)));
    }
    if header.byte_order != "little-endian" {
        return Err(bad(format!("unsupported byte order {}", header.byte_order)));
    }
    if header.dims != header.shape.len() {
        return Err(bad("dims disagrees with shape"));
    }
    let order: Vec<&str> = header.tensors.iter().map(String::as_str).collect();
    let has_g = order.contains(&"g");
    let has_h = order.contains(&"H");
    let mut expected = vec!["J", "K"];
    if has_g {
        expected.push("g");
    }
    if has_h {
        expected.push("H");
    }
    if order != expected {
        return Err(bad(format!("tensor list {order:?} must be {expected:?}")));
    }
    let grid = Grid::new(header.shape.clone(), header.h, header.origin.clone()).map_err(|e| bad(e.to_string()))?;
    let d = 2 * header.n;
    if d == 0 {
        return Err(bad("n must be positive"));
    }
    let per_point = 2 * d * d + if has_g { d * d } else { 0 } + if has_h { d * d * d } else { 0 };
    let total = per_point * grid.len();
    let values: Vec<f64> = match header.encoding {
        Encoding::Binary => {
            let mut bytes = Vec::new();
            input.read_to_end(&mut bytes)?;
            if bytes.len() != 8 * total {
                return Err(bad(format!("payload has {} bytes, expected {}", bytes.len(), 8 * total)));
            }
            bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk"))).collect()
        }
        Encoding::Json => {
            let mut rest = String::new();
            input.read_to_string(&mut rest)?;
            let v: Vec<f64> = serde_json::from_str(rest.trim()).map_err(|e| bad(format!("payload: {e}")))?;
            if v.len() != total {
                return Err(bad(format!("payload has {} values, expected {total}", v.len())));
            }
            v
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(StrataError::NonFinite);
    }
    let len = grid.len();
    let (mut js, mut ks, mut gs, mut hs) = (Vec::with_capacity(len), Vec::with_capacity(len), Vec::new(), Vec::new());
    for chunk in values.chunks_exact(per_point) {
        let mut at = 0;
        let mut take = |k: usize| {
            let s = &chunk[at..at + k];
            at += k;
            s
        };
        js.push(Mat::from_row_slice(d, d, take(d * d)));
        ks.push(Mat::from_row_slice(d, d, take(d * d)));
        if has_g {
            gs.push(Mat::from_row_slice(d, d, take(d * d)));
        }
        if has_h {
            hs.push(take(d * d * d).to_vec());
        }
    }
    let mut field = StructureField::new(grid, js, ks, has_g.then_some(gs))?;
    if has_h {
        field = field.with_three_form(hs)?;
    }
    if let Some(b) = header.base {
        let bd = header.dims;
        if b.len() != bd * bd {
            return Err(bad("base structure has the wrong size"));
        }
        field = field.with_base(Mat::from_row_slice(bd, bd, &b))?;
    }
    Ok(field.declare_integrable(&header.integrable))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::{fixture, Fixture};

    fn same(a: &StructureField, b: &StructureField) -> bool {
        a.grid() == b.grid()
            && (0..a.len()).all(|p| {
                a.j(p) == b.j(p) && a.k(p) == b.k(p) && a.three_form(p) == b.three_form(p)
            })
            && a.base() == b.base()
            && a.integrable() == b.integrable()
    }

    #[test]
    fn both_encodings_round_trip() {
        for f in [Fixture::QuatRotation, Fixture::Holomorphic, Fixture::Poisson] {
            let field = fixture(f, Some(5), None).unwrap();
            for enc in [Encoding::Binary, Encoding::Json] {
                let mut buf = Vec::new();
                write_field(&field, &mut buf, enc).unwrap();
                let back = read_field(&mut buf.as_slice()).unwrap();
                assert!(same(&field, &back), "{} {enc:?}", f.name());
            }
        }
    }

    #[test]
    fn truncated_payload_is_a_format_error() {
        let field = fixture(Fixture::Constant, Some(4), None).unwrap();
        let mut buf = Vec::new();
        write_field(&field, &mut buf, Encoding::Binary).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(matches!(read_field(&mut buf.as_slice()), Err(StrataError::FieldFormat(_))));
        assert!(matches!(read_field(&mut &b"{not json\n"[..]), Err(StrataError::FieldFormat(_))));
    }
}
