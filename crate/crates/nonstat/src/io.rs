//! Field-file I/O ("NSF1" format).
//!
//! A file is a single UTF-8 header line holding a JSON object, followed by
//! the payload. Ensemble headers carry `nx, ny, h1, h2, p, order,
//! encoding`; parameter-field headers replace `p` with
//! `fields: ["xi1","xi2","theta","sigma2","tau2"]`.
//!
//! Binary payload (`"f64le"`): `p·nx·ny` little-endian doubles,
//! replicate-major, each replicate row-major with the column index
//! fastest. CSV payload (`"csv"`): one line per node with `p`
//! comma-separated columns. Parameter files stack the five planes in
//! header order.
//!
//! Writing is canonical, so a written file reads back bit-identically and
//! a read-write cycle reproduces a canonically written input byte for
//! byte.

use crate::error::{Error, Result};
use crate::grid::{Field, FieldEnsemble, Grid, LocalParams, ParamFields};
use crate::matern::Smoothness;
use serde_json::Value;
use std::io::{Read, Write};
use std::path::Path;

pub const PARAM_FIELD_NAMES: [&str; 5] = ["xi1", "xi2", "theta", "sigma2", "tau2"];

/// Payload encoding of a field file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Encoding {
    #[default]
    F64le,
    Csv,
}

impl Encoding {
    fn name(&self) -> &'static str {
        match self {
            Encoding::F64le => "f64le",
            Encoding::Csv => "csv",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "f64le" => Ok(Encoding::F64le),
            "csv" => Ok(Encoding::Csv),
            other => Err(Error::Format(format!(
                "header key `encoding`: expected \"f64le\" or \"csv\", got {other:?}"
            ))),
        }
    }
}

struct Header {
    grid: Grid,
    /// Number of value planes: replicates for ensembles, 5 for parameters.
    planes: usize,
    encoding: Encoding,
    is_params: bool,
}

fn get_key<'v>(map: &'v serde_json::Map<String, Value>, key: &str) -> Result<&'v Value> {
    map.get(key).ok_or_else(|| Error::Format(format!("header key `{key}` is missing")))
}

fn get_usize(map: &serde_json::Map<String, Value>, key: &str) -> Result<usize> {
    get_key(map, key)?
        .as_u64()
        .map(|v| v as usize)
        .ok_or_else(|| Error::Format(format!("header key `{key}`: expected a non-negative integer")))
}

fn get_f64(map: &serde_json::Map<String, Value>, key: &str) -> Result<f64> {
    get_key(map, key)?
        .as_f64()
        .ok_or_else(|| Error::Format(format!("header key `{key}`: expected a number")))
}

fn get_str<'v>(map: &'v serde_json::Map<String, Value>, key: &str) -> Result<&'v str> {
    get_key(map, key)?
        .as_str()
        .ok_or_else(|| Error::Format(format!("header key `{key}`: expected a string")))
}

fn parse_header(line: &str) -> Result<Header> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| Error::Format(format!("header is not a JSON object: {e}")))?;
    let map = value
        .as_object()
        .ok_or_else(|| Error::Format("header is not a JSON object".into()))?;
    let nx = get_usize(map, "nx")?;
    let ny = get_usize(map, "ny")?;
    let h1 = get_f64(map, "h1")?;
    let h2 = get_f64(map, "h2")?;
    let order = get_str(map, "order")?;
    if order != "row-major" {
        return Err(Error::Format(format!(
            "header key `order`: only \"row-major\" is supported, got {order:?}"
        )));
    }
    let encoding = Encoding::parse(get_str(map, "encoding")?)?;
    let grid = Grid::new(nx, ny, h1, h2, 0)
        .map_err(|e| Error::Format(format!("header geometry invalid: {e}")))?;
    let (planes, is_params) = if map.contains_key("fields") {
        let fields = get_key(map, "fields")?
            .as_array()
            .ok_or_else(|| Error::Format("header key `fields`: expected an array".into()))?;
        let names: Vec<&str> = fields.iter().filter_map(|v| v.as_str()).collect();
        if names != PARAM_FIELD_NAMES {
            return Err(Error::Format(format!(
                "header key `fields`: expected {PARAM_FIELD_NAMES:?}, got {names:?}"
            )));
        }
        (5, true)
    } else {
        let p = get_usize(map, "p")?;
        if p == 0 {
            return Err(Error::Format("header key `p`: must be at least 1".into()));
        }
        (p, false)
    };
    Ok(Header { grid, planes, encoding, is_params })
}

fn ensemble_header_line(grid: &Grid, p: usize, encoding: Encoding) -> String {
    format!(
        "{{\"nx\":{},\"ny\":{},\"h1\":{},\"h2\":{},\"p\":{},\"order\":\"row-major\",\"encoding\":\"{}\"}}\n",
        grid.nx(),
        grid.ny(),
        json_f64(grid.h1()),
        json_f64(grid.h2()),
        p,
        encoding.name()
    )
}

fn param_header_line(grid: &Grid, encoding: Encoding) -> String {
    format!(
        "{{\"nx\":{},\"ny\":{},\"h1\":{},\"h2\":{},\"fields\":[\"xi1\",\"xi2\",\"theta\",\"sigma2\",\"tau2\"],\"order\":\"row-major\",\"encoding\":\"{}\"}}\n",
        grid.nx(),
        grid.ny(),
        json_f64(grid.h1()),
        json_f64(grid.h2()),
        encoding.name()
    )
}

// shortest round-trip form, with a ".0" so the value stays a JSON number
// that parses back as f64
fn json_f64(v: f64) -> String {
    let s = format!("{v}");
    if s.contains('.') || s.contains('e') {
        s
    } else {
        format!("{s}.0")
    }
}

fn split_header(bytes: &[u8]) -> Result<(&str, &[u8])> {
    let pos = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("missing header line".into()))?;
    let line = std::str::from_utf8(&bytes[..pos])
        .map_err(|_| Error::Format("header line is not UTF-8".into()))?;
    Ok((line, &bytes[pos + 1..]))
}

/// Read all value planes of a file: header plus `planes`×`nx·ny` values.
fn read_planes(path: &Path) -> Result<(Header, Vec<Vec<f64>>)> {
    if !path.exists() {
        return Err(Error::MissingInput(path.to_path_buf()));
    }
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let (line, payload) = split_header(&bytes)?;
    let header = parse_header(line)?;
    let n = header.grid.interior_len();
    let total = header.planes * n;

    let flat: Vec<f64> = match header.encoding {
        Encoding::F64le => {
            if payload.len() != total * 8 {
                return Err(Error::Truncated { expected: total, got: payload.len() / 8 });
            }
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect()
        }
        Encoding::Csv => {
            let text = std::str::from_utf8(payload)
                .map_err(|_| Error::Format("csv payload is not UTF-8".into()))?;
            let mut by_node: Vec<Vec<f64>> = Vec::with_capacity(n);
            for (lineno, row) in text.lines().enumerate() {
                let vals = row
                    .split(',')
                    .map(|s| {
                        s.trim().parse::<f64>().map_err(|_| {
                            Error::Format(format!("csv payload line {}: bad number {s:?}", lineno + 1))
                        })
                    })
                    .collect::<Result<Vec<f64>>>()?;
                if vals.len() != header.planes {
                    return Err(Error::Truncated {
                        expected: total,
                        got: by_node.len() * header.planes + vals.len(),
                    });
                }
                by_node.push(vals);
            }
            if by_node.len() != n {
                return Err(Error::Truncated { expected: total, got: by_node.len() * header.planes });
            }
            // transpose node-major csv rows into plane-major order
            let mut flat = Vec::with_capacity(total);
            for plane in 0..header.planes {
                for node in by_node.iter() {
                    flat.push(node[plane]);
                }
            }
            flat
        }
    };

    let planes = flat.chunks_exact(n).map(|c| c.to_vec()).collect();
    Ok((header, planes))
}

fn write_planes(path: &Path, header_line: &str, planes: &[Vec<f64>], encoding: Encoding) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    out.write_all(header_line.as_bytes())?;
    match encoding {
        Encoding::F64le => {
            for plane in planes {
                for v in plane {
                    out.write_all(&v.to_le_bytes())?;
                }
            }
        }
        Encoding::Csv => {
            let n = planes[0].len();
            let mut line = String::new();
            for node in 0..n {
                line.clear();
                for (k, plane) in planes.iter().enumerate() {
                    if k > 0 {
                        line.push(',');
                    }
                    line.push_str(&format!("{}", plane[node]));
                }
                line.push('\n');
                out.write_all(line.as_bytes())?;
            }
        }
    }
    Ok(())
}

/// Read a replicate ensemble from an NSF1 file.
pub fn read_ensemble(path: &Path) -> Result<FieldEnsemble> {
    let (header, planes) = read_planes(path)?;
    if header.is_params {
        return Err(Error::Format(
            "file holds parameter fields, not a replicate ensemble".into(),
        ));
    }
    let replicates = planes
        .into_iter()
        .map(|v| Field::new(header.grid, v))
        .collect::<Result<Vec<_>>>()?;
    FieldEnsemble::new(header.grid, replicates)
}

/// Write an ensemble with the default binary encoding.
pub fn write_ensemble(ensemble: &FieldEnsemble, path: &Path) -> Result<()> {
    write_ensemble_with(ensemble, path, Encoding::F64le)
}

pub fn write_ensemble_with(ensemble: &FieldEnsemble, path: &Path, encoding: Encoding) -> Result<()> {
    let header = ensemble_header_line(ensemble.grid(), ensemble.len(), encoding);
    let planes: Vec<Vec<f64>> =
        ensemble.replicates().iter().map(|f| f.values().to_vec()).collect();
    write_planes(path, &header, &planes, encoding)
}

/// Write a single field as a one-replicate ensemble file.
pub fn write_field(field: &Field, path: &Path) -> Result<()> {
    let ens = FieldEnsemble::new(*field.grid(), vec![field.clone()])?;
    write_ensemble(&ens, path)
}

/// Read locally estimated parameters; `nu` is not stored in the file and
/// must be supplied by the caller's run configuration. Convergence flags
/// live in the diagnostics CSV sidecar, not in the field file, so loaded
/// parameters are marked converged.
pub fn read_param_fields(path: &Path, nu: Smoothness) -> Result<ParamFields> {
    let (header, planes) = read_planes(path)?;
    if !header.is_params {
        return Err(Error::Format("file holds a replicate ensemble, not parameter fields".into()));
    }
    let n = header.grid.interior_len();
    let params: Vec<LocalParams> = (0..n)
        .map(|k| LocalParams {
            xi1: planes[0][k],
            xi2: planes[1][k],
            theta: planes[2][k],
            sigma2: planes[3][k],
            tau2: planes[4][k],
            nu,
        })
        .collect();
    ParamFields::new(header.grid, params, vec![true; n], vec![true; n])
}

pub fn write_param_fields(fields: &ParamFields, path: &Path) -> Result<()> {
    let header = param_header_line(&fields.grid, Encoding::F64le);
    let n = fields.grid.interior_len();
    let mut planes = vec![Vec::with_capacity(n); 5];
    for p in &fields.params {
        planes[0].push(p.xi1);
        planes[1].push(p.xi2);
        planes[2].push(p.theta);
        planes[3].push(p.sigma2);
        planes[4].push(p.tau2);
    }
    write_planes(path, &header, &planes, Encoding::F64le)
}
