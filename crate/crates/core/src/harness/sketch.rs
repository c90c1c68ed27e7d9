use std::io::Write;

use crate::ccn::CdfModel;
use crate::data::{Arm, Dataset};
use crate::error::{CcnError, Result};
use crate::scalar::Real;
use crate::scenarios::ScenarioOracle;

pub const SKETCH_HEADER: [&str; 5] = ["index", "arm", "z", "g_hat", "oracle_cdf"];

/// Writes the raw network output `g_hat` and, when an oracle is given, the
/// true CDF on an even `grid_size` grid over the probe range, for both arms
/// of each requested row. `arm` is 0 or 1; `oracle_cdf` is empty without an
/// oracle.
pub fn emit_cdf_sketch<S: Real, W: Write>(
    model: &CdfModel<S>,
    data: &Dataset<f64>,
    oracle: Option<&ScenarioOracle>,
    indices: &[usize],
    grid_size: usize,
    out: W,
) -> Result<()> {
    if let Some(&i) = indices.iter().find(|&&i| i >= data.n()) {
        return Err(CcnError::InvalidConfig(format!("row {i} is out of range for {} rows", data.n())));
    }
    let grid = model.grid(grid_size)?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SKETCH_HEADER)?;
    for &i in indices {
        let x = data.row(i);
        let xs: Vec<S> = x.iter().map(|&v| S::c(v)).collect();
        for arm in Arm::BOTH {
            let g = model.g_values(&xs, arm, &grid)?;
            for (z, g) in grid.iter().zip(g) {
                let z = z.to_f64_lossy();
                let truth = match oracle {
                    Some(o) => o.true_cdf(arm, x, z)?.to_string(),
                    None => String::new(),
                };
                w.write_record([
                    i.to_string(),
                    arm.index().to_string(),
                    z.to_string(),
                    g.to_f64_lossy().to_string(),
                    truth,
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
