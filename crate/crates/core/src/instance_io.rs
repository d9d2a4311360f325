//! Plain-text dump of a [`NetworkInstance`].
//!
//! ```text
//! # d2d-underlay instance
//! format = 1
//! [params]
//! cell_radius_m = 5.00000000000000000e2
//! ...
//! [cu_to_bs]        1 row of K values
//! [budget]          1 row of K values
//! [own]             K rows of D values
//! [cu_to_rx]        K rows of D values
//! [tx_to_bs]        K rows of D values
//! [cross]           K*D rows of D values: row k*D + i holds tx i -> rx 0..D on channel k
//! ```
//!
//! Reals are written in scientific notation with 18 significant digits, so a
//! dump/load cycle is lossless. `#` starts a comment; blank lines are ignored.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::model::{Gains, NetworkInstance, SimParams};

const FORMAT_VERSION: u32 = 1;

fn sci(v: f64) -> String {
    format!("{v:.17e}")
}

fn write_rows(out: &mut String, name: &str, rows: &[Vec<f64>]) {
    let _ = writeln!(out, "[{name}]");
    for r in rows {
        let line: Vec<String> = r.iter().map(|&v| sci(v)).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
}

pub fn dump_instance(inst: &NetworkInstance) -> String {
    let p = inst.params();
    let g = inst.gains();
    let mut out = String::new();
    out.push_str("# d2d-underlay instance\n");
    let _ = writeln!(out, "format = {FORMAT_VERSION}");
    out.push_str("[params]\n");
    for (key, v) in [
        ("cell_radius_m", p.cell_radius_m),
        ("noise_power_w", p.noise_power_w),
        ("pathloss_exp", p.pathloss_exp),
        ("cu_power_w", p.cu_power_w),
        ("max_d2d_power_w", p.max_d2d_power_w),
        ("d2d_link_length_m", p.d2d_link_length_m),
        ("tolerance_rel_db", p.tolerance_rel_db),
        ("xi1", p.xi1),
        ("xi2", p.xi2),
        ("theta", p.theta),
        ("w_tradeoff", p.w_tradeoff),
        ("bisect_epsilon", p.bisect_epsilon),
    ] {
        let _ = writeln!(out, "{key} = {}", sci(v));
    }
    let _ = writeln!(out, "num_channels = {}", p.num_channels);
    let _ = writeln!(out, "num_d2d = {}", p.num_d2d);
    let _ = writeln!(out, "rng_seed = {}", p.rng_seed);
    write_rows(&mut out, "cu_to_bs", std::slice::from_ref(&g.cu_to_bs));
    write_rows(&mut out, "budget", std::slice::from_ref(&g.budget));
    write_rows(&mut out, "own", &g.own);
    write_rows(&mut out, "cu_to_rx", &g.cu_to_rx);
    write_rows(&mut out, "tx_to_bs", &g.tx_to_bs);
    let cross: Vec<Vec<f64>> = g.cross.iter().flatten().cloned().collect();
    write_rows(&mut out, "cross", &cross);
    out
}

#[derive(Default)]
struct Section {
    name: String,
    start_line: usize,
    lines: Vec<(usize, String)>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_real(line: usize, tok: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| parse_err(line, format!("'{tok}' is not a number")))
}

fn parse_rows(sec: &Section, rows: usize, cols: usize) -> Result<Vec<Vec<f64>>> {
    if sec.lines.len() != rows {
        return Err(parse_err(
            sec.start_line,
            format!(
                "[{}] has {} rows, expected {rows}",
                sec.name,
                sec.lines.len()
            ),
        ));
    }
    sec.lines
        .iter()
        .map(|(ln, text)| {
            let row = text
                .split_whitespace()
                .map(|t| parse_real(*ln, t))
                .collect::<Result<Vec<f64>>>()?;
            if row.len() != cols {
                return Err(parse_err(
                    *ln,
                    format!("expected {cols} values, found {}", row.len()),
                ));
            }
            Ok(row)
        })
        .collect()
}

fn parse_params(sec: &Section) -> Result<SimParams> {
    let mut p = SimParams::default();
    let mut seen = Vec::new();
    for (ln, text) in &sec.lines {
        let (key, val) = text
            .split_once('=')
            .ok_or_else(|| parse_err(*ln, "expected 'key = value'"))?;
        let (key, val) = (key.trim(), val.trim());
        let int = |v: &str| {
            v.parse::<u64>()
                .map_err(|_| parse_err(*ln, format!("'{v}' is not an integer")))
        };
        match key {
            "cell_radius_m" => p.cell_radius_m = parse_real(*ln, val)?,
            "noise_power_w" => p.noise_power_w = parse_real(*ln, val)?,
            "pathloss_exp" => p.pathloss_exp = parse_real(*ln, val)?,
            "cu_power_w" => p.cu_power_w = parse_real(*ln, val)?,
            "max_d2d_power_w" => p.max_d2d_power_w = parse_real(*ln, val)?,
            "d2d_link_length_m" => p.d2d_link_length_m = parse_real(*ln, val)?,
            "tolerance_rel_db" => p.tolerance_rel_db = parse_real(*ln, val)?,
            "xi1" => p.xi1 = parse_real(*ln, val)?,
            "xi2" => p.xi2 = parse_real(*ln, val)?,
            "theta" => p.theta = parse_real(*ln, val)?,
            "w_tradeoff" => p.w_tradeoff = parse_real(*ln, val)?,
            "bisect_epsilon" => p.bisect_epsilon = parse_real(*ln, val)?,
            "num_channels" => p.num_channels = int(val)? as usize,
            "num_d2d" => p.num_d2d = int(val)? as usize,
            "rng_seed" => p.rng_seed = int(val)?,
            other => return Err(parse_err(*ln, format!("unknown parameter '{other}'"))),
        }
        seen.push(key.to_string());
    }
    for required in ["num_channels", "num_d2d"] {
        if !seen.iter().any(|k| k == required) {
            return Err(parse_err(
                sec.start_line,
                format!("missing parameter '{required}'"),
            ));
        }
    }
    Ok(p)
}

pub fn load_instance(text: &str) -> Result<NetworkInstance> {
    let mut sections: Vec<Section> = Vec::new();
    let mut header = Section::default();
    for (idx, raw) in text.lines().enumerate() {
        let ln = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            sections.push(Section {
                name: name.trim().to_string(),
                start_line: ln,
                lines: Vec::new(),
            });
        } else if let Some(sec) = sections.last_mut() {
            sec.lines.push((ln, line.to_string()));
        } else {
            header.lines.push((ln, line.to_string()));
        }
    }
    match header.lines.as_slice() {
        [(ln, l)] => {
            let v = l
                .split_once('=')
                .filter(|(k, _)| k.trim() == "format")
                .map(|(_, v)| v.trim())
                .ok_or_else(|| parse_err(*ln, "expected 'format = 1'"))?;
            if v != FORMAT_VERSION.to_string() {
                return Err(parse_err(*ln, format!("unsupported format version {v}")));
            }
        }
        _ => return Err(parse_err(1, "missing 'format = 1' header")),
    }

    let find = |name: &str| {
        sections
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| parse_err(0, format!("missing section [{name}]")))
    };
    let params = parse_params(find("params")?)?;
    params.validate()?;
    let (nk, nd) = (params.num_channels, params.num_d2d);
    let cross_flat = parse_rows(find("cross")?, nk * nd, nd)?;
    let gains = Gains {
        cu_to_bs: parse_rows(find("cu_to_bs")?, 1, nk)?.remove(0),
        budget: parse_rows(find("budget")?, 1, nk)?.remove(0),
        own: parse_rows(find("own")?, nk, nd)?,
        cu_to_rx: parse_rows(find("cu_to_rx")?, nk, nd)?,
        tx_to_bs: parse_rows(find("tx_to_bs")?, nk, nd)?,
        cross: cross_flat.chunks(nd).map(<[Vec<f64>]>::to_vec).collect(),
    };
    NetworkInstance::new(params, gains)
}
