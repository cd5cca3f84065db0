use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::sync::Arc;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// One simulated (or loaded) sample: per-row stratum index, treatment and
/// outcome. The confounder vector of row `i` is `patterns[stratum[i]]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    confounder_names: Arc<Vec<String>>,
    patterns: Arc<Vec<Vec<u8>>>,
    stratum: Vec<u32>,
    x: Vec<u8>,
    y: Vec<u8>,
    seed: u64,
}

impl SimulatedDataset {
    pub(crate) fn from_parts(
        confounder_names: Arc<Vec<String>>,
        patterns: Arc<Vec<Vec<u8>>>,
        stratum: Vec<u32>,
        x: Vec<u8>,
        y: Vec<u8>,
        seed: u64,
    ) -> Self {
        debug_assert_eq!(stratum.len(), x.len());
        debug_assert_eq!(stratum.len(), y.len());
        SimulatedDataset {
            confounder_names,
            patterns,
            stratum,
            x,
            y,
            seed,
        }
    }

    /// Build from explicit per-row confounder vectors. Distinct vectors become
    /// patterns in lexicographic order.
    pub fn from_rows(
        confounder_names: Vec<String>,
        z_rows: &[Vec<u8>],
        x: Vec<u8>,
        y: Vec<u8>,
    ) -> Result<Self> {
        let d = confounder_names.len();
        if z_rows.len() != x.len() || x.len() != y.len() {
            return Err(Error::InvalidConfig(format!(
                "row counts differ: z {}, x {}, y {}",
                z_rows.len(),
                x.len(),
                y.len()
            )));
        }
        for (i, row) in z_rows.iter().enumerate() {
            if row.len() != d || row.iter().any(|&v| v > 1) {
                return Err(Error::InvalidConfig(format!(
                    "row {i}: confounder vector must be {d} binary values"
                )));
            }
        }
        if let Some(i) = x.iter().chain(y.iter()).position(|&v| v > 1) {
            return Err(Error::InvalidConfig(format!("x/y entry {i} is not binary")));
        }
        let mut index: BTreeMap<&[u8], u32> = z_rows.iter().map(|r| (r.as_slice(), 0)).collect();
        for (k, v) in index.values_mut().enumerate() {
            *v = k as u32;
        }
        let stratum = z_rows.iter().map(|r| index[r.as_slice()]).collect();
        let patterns = index.keys().map(|k| k.to_vec()).collect();
        Ok(SimulatedDataset {
            confounder_names: Arc::new(confounder_names),
            patterns: Arc::new(patterns),
            stratum,
            x,
            y,
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }

    pub fn dim(&self) -> usize {
        self.confounder_names.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn confounder_names(&self) -> &[String] {
        &self.confounder_names
    }

    pub fn patterns(&self) -> &[Vec<u8>] {
        &self.patterns
    }

    pub fn stratum_index(&self) -> &[u32] {
        &self.stratum
    }

    pub fn x(&self) -> &[u8] {
        &self.x
    }

    pub fn y(&self) -> &[u8] {
        &self.y
    }

    pub fn z_row(&self, i: usize) -> &[u8] {
        &self.patterns[self.stratum[i] as usize]
    }

    /// Gather rows by index (bootstrap resampling).
    pub fn resample(&self, indices: &[usize]) -> SimulatedDataset {
        SimulatedDataset {
            confounder_names: Arc::clone(&self.confounder_names),
            patterns: Arc::clone(&self.patterns),
            stratum: indices.iter().map(|&i| self.stratum[i]).collect(),
            x: indices.iter().map(|&i| self.x[i]).collect(),
            y: indices.iter().map(|&i| self.y[i]).collect(),
            seed: self.seed,
        }
    }

    /// Aggregate to per-(pattern, treatment) counts.
    pub fn cells(&self) -> CellCounts {
        self.tally(0..self.n())
    }

    /// Cell counts of the resample `indices`, without materializing it.
    pub fn cells_of(&self, indices: &[usize]) -> CellCounts {
        self.tally(indices.iter().copied())
    }

    fn tally(&self, rows: impl Iterator<Item = usize>) -> CellCounts {
        let k = self.patterns.len();
        let mut count = vec![[0.0; 2]; k];
        let mut events = vec![[0.0; 2]; k];
        for i in rows {
            let s = self.stratum[i] as usize;
            let a = self.x[i] as usize;
            count[s][a] += 1.0;
            events[s][a] += self.y[i] as f64;
        }
        CellCounts {
            patterns: Arc::clone(&self.patterns),
            count,
            events,
        }
    }

    /// SHA-256 over the row content; equal hashes mean byte-identical samples.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.n() as u64).to_le_bytes());
        for i in 0..self.n() {
            h.update(self.z_row(i));
            h.update([self.x[i], self.y[i]]);
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Comma-separated rows: `stratum,<confounders...>,x,y`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["stratum".to_string()];
        header.extend(self.confounder_names.iter().cloned());
        header.push("x".into());
        header.push("y".into());
        w.write_record(&header).map_err(csv_err)?;
        let mut record = Vec::with_capacity(header.len());
        for i in 0..self.n() {
            record.clear();
            record.push(self.stratum[i].to_string());
            record.extend(self.z_row(i).iter().map(|v| v.to_string()));
            record.push(self.x[i].to_string());
            record.push(self.y[i].to_string());
            w.write_record(&record).map_err(csv_err)?;
        }
        w.flush().map_err(|e| Error::parse("dataset csv", e))?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). The `stratum` column, if
    /// present, is ignored and patterns are re-derived from the confounders.
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(input);
        let header: Vec<String> = rdr
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_string)
            .collect();
        let col = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let xc = col("x")?;
        let yc = col("y")?;
        let zc: Vec<usize> = (0..header.len())
            .filter(|&j| j != xc && j != yc && header[j] != "stratum")
            .collect();
        let names = zc.iter().map(|&j| header[j].clone()).collect();
        let bit = |column: &str, row: usize, v: &str| match v {
            "0" => Ok(0u8),
            "1" => Ok(1u8),
            _ => Err(Error::NonBinary {
                column: column.to_string(),
                row,
                value: v.to_string(),
            }),
        };
        let (mut z, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new());
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(csv_err)?;
            z.push(
                zc.iter()
                    .map(|&j| bit(&header[j], i + 1, &rec[j]))
                    .collect::<Result<Vec<u8>>>()?,
            );
            x.push(bit("x", i + 1, &rec[xc])?);
            y.push(bit("y", i + 1, &rec[yc])?);
        }
        SimulatedDataset::from_rows(names, &z, x, y)
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::parse("dataset csv", e)
}

/// Sufficient statistics of a sample with binary confounders: row count and
/// outcome total in every (pattern, treatment) cell. Counts are reals so that
/// weighted resamples fit the same shape.
#[derive(Debug, Clone, PartialEq)]
pub struct CellCounts {
    pub patterns: Arc<Vec<Vec<u8>>>,
    /// `count[k][x]`
    pub count: Vec<[f64; 2]>,
    /// `events[k][x]`: number of rows with y = 1.
    pub events: Vec<[f64; 2]>,
}

impl CellCounts {
    pub fn total(&self) -> f64 {
        self.count.iter().map(|c| c[0] + c[1]).sum()
    }

    pub fn arm_total(&self, arm: usize) -> f64 {
        self.count.iter().map(|c| c[arm]).sum()
    }

    pub fn arm_events(&self, arm: usize) -> f64 {
        self.events.iter().map(|c| c[arm]).sum()
    }

    /// Rows in pattern `k`, both arms.
    pub fn pattern_total(&self, k: usize) -> f64 {
        self.count[k][0] + self.count[k][1]
    }
}
