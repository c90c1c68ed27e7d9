//! Network file format: a plain-text header terminated by a line `end`,
//! followed by the parameters as little-endian 64-bit floats.
//!
//! ```text
//! ccn-densenet 1
//! widths 3 100 1
//! hidden relu
//! output sigmoid
//! params 501
//! end
//! <501 x f64 LE>
//! ```

use std::io::{BufRead, Write};
use std::path::Path;

use super::{param_count, Activation, DenseNet};
use crate::error::{CcnError, Result};
use crate::scalar::Real;

const MAGIC: &str = "ccn-densenet 1";

pub fn write_net<S: Real, W: Write>(net: &DenseNet<S>, mut w: W) -> Result<()> {
    let widths: Vec<String> = net.widths().iter().map(ToString::to_string).collect();
    writeln!(w, "{MAGIC}")?;
    writeln!(w, "widths {}", widths.join(" "))?;
    writeln!(w, "hidden {}", net.hidden_activation().name())?;
    writeln!(w, "output {}", net.output_activation().name())?;
    writeln!(w, "params {}", net.params().len())?;
    writeln!(w, "end")?;
    for p in net.params() {
        w.write_all(&p.to_f64_lossy().to_le_bytes())?;
    }
    Ok(())
}

fn header_line<R: BufRead>(r: &mut R, key: &str) -> Result<String> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let line = line.trim_end_matches(['\n', '\r']);
    match line.split_once(' ') {
        Some((k, v)) if k == key => Ok(v.to_string()),
        _ => Err(CcnError::Format(format!("expected `{key} ...`, found `{line}`"))),
    }
}

pub fn read_net<S: Real, R: BufRead>(mut r: R) -> Result<DenseNet<S>> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    if line.trim_end() != MAGIC {
        return Err(CcnError::Format(format!("bad magic line `{}`", line.trim_end())));
    }
    let widths = header_line(&mut r, "widths")?
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| CcnError::Format(format!("widths: {e}")))?;
    let act = |name: String| {
        Activation::from_name(&name).ok_or_else(|| CcnError::Format(format!("unknown activation {name}")))
    };
    let hidden = act(header_line(&mut r, "hidden")?)?;
    let output = act(header_line(&mut r, "output")?)?;
    let n: usize =
        header_line(&mut r, "params")?.trim().parse().map_err(|e| CcnError::Format(format!("params: {e}")))?;
    if n != param_count(&widths) {
        return Err(CcnError::Format(format!(
            "header declares {n} params but widths {widths:?} need {}",
            param_count(&widths)
        )));
    }
    line.clear();
    r.read_line(&mut line)?;
    if line.trim_end() != "end" {
        return Err(CcnError::Format("missing `end` line".into()));
    }
    let mut buf = vec![0u8; n * 8];
    r.read_exact(&mut buf)?;
    let params = buf.chunks_exact(8).map(|c| S::c(f64::from_le_bytes(c.try_into().unwrap()))).collect();
    DenseNet::from_params(&widths, hidden, output, params)
}

pub fn save_net<S: Real>(net: &DenseNet<S>, path: &Path) -> Result<()> {
    let f = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(f);
    write_net(net, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_net<S: Real>(path: &Path) -> Result<DenseNet<S>> {
    let f = std::fs::File::open(path)?;
    read_net(std::io::BufReader::new(f))
}
