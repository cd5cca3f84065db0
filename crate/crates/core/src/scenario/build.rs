use std::collections::BTreeMap;

use super::{PreparedTable, Scenario};
use crate::error::{Error, Result};

#[derive(Default)]
struct Cell {
    n: [u64; 2],
    events: [u64; 2],
}

/// Build the scenario from a prepared table. Only strata observed under both
/// treatment levels are kept; probabilities are raw frequencies over the
/// retained rows, strata in lexicographic order of their z vector.
pub fn build_scenario(table: &PreparedTable) -> Result<Scenario> {
    if table.rows() == 0 {
        return Err(Error::EmptyData);
    }
    let mut cells: BTreeMap<&[u8], Cell> = BTreeMap::new();
    for i in 0..table.rows() {
        let c = cells.entry(table.z_row(i)).or_default();
        let x = table.x[i] as usize;
        c.n[x] += 1;
        c.events[x] += table.y[i] as u64;
    }
    let observed = cells.len();
    cells.retain(|_, c| c.n[0] > 0 && c.n[1] > 0);
    if cells.is_empty() {
        return Err(Error::EmptyScenario);
    }
    let retained: u64 = cells.values().map(|c| c.n[0] + c.n[1]).sum();
    let total = retained as f64;

    let mut s = Scenario {
        confounder_names: table.confounder_names.clone(),
        strata: Vec::with_capacity(cells.len()),
        p_z: Vec::with_capacity(cells.len()),
        p_x_given_z: Vec::with_capacity(cells.len()),
        p_y_given_xz: Vec::with_capacity(cells.len()),
        provenance: table.provenance.clone(),
        source_rows: retained as usize,
    };
    for (z, c) in &cells {
        let nz = (c.n[0] + c.n[1]) as f64;
        s.strata.push(z.to_vec());
        s.p_z.push(nz / total);
        s.p_x_given_z.push(c.n[1] as f64 / nz);
        s.p_y_given_xz.push([
            c.events[0] as f64 / c.n[0] as f64,
            c.events[1] as f64 / c.n[1] as f64,
        ]);
    }
    s.provenance.push(format!(
        "positivity filter: {} of {observed} observed strata kept, {retained} of {} rows",
        s.k(),
        table.rows()
    ));
    s.validate()?;
    Ok(s)
}
