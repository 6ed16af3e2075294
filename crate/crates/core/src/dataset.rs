//! Load sweeps solved by the swarm optimizer, stored as training and test
//! tables for the predictor.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::network::{delay_msec, mean_link_utilization, FlowVector, NetworkTopology};
use crate::pso::{run_pso, PsoConfig, PsoVariant};
use crate::search::{SearchObjective, SearchResult};

pub const FIXED_COLUMNS: [&str; 4] = ["load", "delay_msec", "mlu", "generations"];

/// Seed offset used when a row is retried after failing to converge.
pub const RETRY_SEED_OFFSET: u64 = 1 << 32;

/// Fractions of total capacity spanned by the default schedule.
pub const DEFAULT_SPAN: (f64, f64) = (0.30, 0.95);
pub const DEFAULT_COUNT: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Training,
    Test,
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Training => "training",
            Role::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetRow {
    pub load_kbps: f64,
    pub delay_msec: f64,
    pub mlu: f64,
    pub generations: usize,
    pub flows: Vec<f64>,
}

impl DatasetRow {
    /// Builds a row whose delay and M.L.U are computed from `flows`.
    pub fn from_flows(
        topology: &NetworkTopology,
        load_kbps: f64,
        generations: usize,
        flows: Vec<f64>,
    ) -> Result<Self> {
        let fv = FlowVector::new(flows);
        Ok(DatasetRow {
            load_kbps,
            delay_msec: delay_msec(topology, &fv)?,
            mlu: mean_link_utilization(topology, &fv)?,
            generations,
            flows: fv.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub role: Role,
    pub rows: Vec<DatasetRow>,
    /// Indices of rows whose optimizer run did not converge even after a retry.
    pub flagged: Vec<usize>,
}

impl Dataset {
    pub fn new(role: Role, rows: Vec<DatasetRow>) -> Result<Self> {
        check_increasing(rows.iter().map(|r| r.load_kbps))?;
        Ok(Dataset {
            role,
            rows,
            flagged: Vec::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn loads(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.load_kbps).collect()
    }

    /// Flow count per row, or `None` when empty.
    pub fn link_count(&self) -> Option<usize> {
        self.rows.first().map(|r| r.flows.len())
    }

    /// `(load, flows)` pairs for training.
    pub fn samples(&self) -> Vec<(f64, Vec<f64>)> {
        self.rows
            .iter()
            .map(|r| (r.load_kbps, r.flows.clone()))
            .collect()
    }

    pub fn check_topology(&self, topology: &NetworkTopology) -> Result<()> {
        match self.link_count() {
            Some(n) if n != topology.link_count() => Err(Error::DimensionMismatch {
                expected: topology.link_count(),
                found: n,
            }),
            _ => Ok(()),
        }
    }
}

fn check_increasing(loads: impl Iterator<Item = f64>) -> Result<()> {
    let mut prev = f64::NEG_INFINITY;
    for l in loads {
        if !(l > prev) {
            return Err(Error::Schema(format!(
                "loads must be strictly increasing ({l} after {prev})"
            )));
        }
        prev = l;
    }
    Ok(())
}

/// Errors if any load appears in both datasets.
pub fn check_disjoint(a: &Dataset, b: &Dataset) -> Result<()> {
    for r in &a.rows {
        if b.rows.iter().any(|s| s.load_kbps == r.load_kbps) {
            return Err(Error::Schema(format!(
                "load {} is in both datasets",
                r.load_kbps
            )));
        }
    }
    Ok(())
}

/// `count` loads from `from_frac · ΣC` upward, each shifted by `offset_kbps`.
/// Start and step are rounded to whole kbps; the step splits the span into
/// `count` equal parts, so an offset of half a step interleaves a second
/// schedule with the first.
pub fn load_schedule(
    topology: &NetworkTopology,
    from_frac: f64,
    to_frac: f64,
    count: usize,
    offset_kbps: f64,
) -> Result<Vec<f64>> {
    if count < 1 {
        return Err(Error::InvalidConfig(
            "schedule needs at least one load".into(),
        ));
    }
    if !(0.0 < from_frac && from_frac < to_frac && to_frac < 1.0) {
        return Err(Error::InvalidConfig(format!(
            "need 0 < from < to < 1, got {from_frac} and {to_frac}"
        )));
    }
    let total = topology.total_capacity();
    let start = (from_frac * total).round();
    let step = ((to_frac - from_frac) * total / count as f64).round();
    let loads: Vec<f64> = (0..count)
        .map(|i| start + offset_kbps + i as f64 * step)
        .collect();
    for &l in &loads {
        if !(l > 0.0 && l < total) {
            return Err(Error::Domain(format!(
                "scheduled load {l} outside (0, {total})"
            )));
        }
    }
    Ok(loads)
}

/// The default interleaved training and test schedules: ten loads each over
/// 30-95% of capacity, test shifted by half a step.
pub fn default_schedules(topology: &NetworkTopology) -> Result<(Vec<f64>, Vec<f64>)> {
    let (from, to) = DEFAULT_SPAN;
    let train = load_schedule(topology, from, to, DEFAULT_COUNT, 0.0)?;
    let step = if train.len() > 1 {
        train[1] - train[0]
    } else {
        0.0
    };
    let test = load_schedule(topology, from, to, DEFAULT_COUNT, step / 2.0)?;
    Ok((train, test))
}

/// Constriction PSO with a longer inertia ramp, which keeps the swarm from
/// settling early at heavy loads.
pub fn dataset_pso_config() -> PsoConfig {
    PsoConfig {
        inertia_generations: 1000,
        ..PsoConfig::standard(PsoVariant::Constriction)
    }
}

fn solve_row(
    topology: &NetworkTopology,
    load: f64,
    config: &PsoConfig,
    seed: u64,
) -> Result<(SearchResult, bool)> {
    let obj = SearchObjective::new(topology.clone(), load)?;
    let first = run_pso(config, &obj, seed)?;
    if first.converged {
        return Ok((first, true));
    }
    log::warn!("load {load}: no convergence with seed {seed}, retrying");
    let second = run_pso(config, &obj, seed.wrapping_add(RETRY_SEED_OFFSET))?;
    let ok = second.converged;
    if !ok {
        log::warn!("load {load}: no convergence after retry, row flagged");
    }
    Ok((second, ok))
}

/// Solves each load with `config`; row `i` uses seed `seed + i`. Rows run in
/// parallel but the output does not depend on scheduling.
pub fn build_dataset(
    topology: &NetworkTopology,
    loads: &[f64],
    config: &PsoConfig,
    seed: u64,
    role: Role,
) -> Result<Dataset> {
    config.validate()?;
    check_increasing(loads.iter().copied())?;
    let total = topology.total_capacity();
    if let Some(&bad) = loads.iter().find(|&&l| !(l > 0.0 && l < total)) {
        return Err(Error::Domain(format!("load {bad} outside (0, {total})")));
    }
    let solved: Vec<Result<(SearchResult, bool)>> = loads
        .par_iter()
        .enumerate()
        .map(|(i, &load)| solve_row(topology, load, config, seed.wrapping_add(i as u64)))
        .collect();
    let mut rows = Vec::with_capacity(loads.len());
    let mut flagged = Vec::new();
    for (i, (res, &load)) in solved.into_iter().zip(loads).enumerate() {
        let (result, converged) = res?;
        if !converged {
            flagged.push(i);
        }
        rows.push(DatasetRow::from_flows(
            topology,
            load,
            result.generations,
            result.best_flow.0,
        )?);
    }
    Ok(Dataset {
        role,
        rows,
        flagged,
    })
}

fn header(links: usize) -> Vec<String> {
    FIXED_COLUMNS
        .iter()
        .map(|s| s.to_string())
        .chain((1..=links).map(|j| format!("f{j}")))
        .collect()
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w)
}

/// Full-precision CSV. An empty dataset is written as a header for
/// `links` flow columns.
pub fn write_dataset_to<W: Write>(dataset: &Dataset, links: usize, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(header(dataset.link_count().unwrap_or(links)))?;
    for r in &dataset.rows {
        let mut rec = vec![
            r.load_kbps.to_string(),
            r.delay_msec.to_string(),
            r.mlu.to_string(),
            r.generations.to_string(),
        ];
        rec.extend(r.flows.iter().map(|f| f.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// Rounded for reading next to printed tables: whole kbps, delay to 0.1 ms,
/// M.L.U to four places.
pub fn write_dataset_rounded_to<W: Write>(dataset: &Dataset, links: usize, w: W) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(header(dataset.link_count().unwrap_or(links)))?;
    for r in &dataset.rows {
        let mut rec = vec![
            format!("{:.0}", r.load_kbps),
            format!("{:.1}", r.delay_msec),
            format!("{:.4}", r.mlu),
            r.generations.to_string(),
        ];
        rec.extend(r.flows.iter().map(|f| format!("{f:.0}")));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_dataset(dataset: &Dataset, links: usize, path: impl AsRef<Path>) -> Result<()> {
    write_dataset_to(dataset, links, std::fs::File::create(path)?)
}

fn schema_err(row: usize, msg: impl fmt::Display) -> Error {
    Error::Schema(format!("row {row}: {msg}"))
}

pub fn read_dataset_from<R: Read>(r: R, role: Role) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let head = rdr.headers()?.clone();
    let names: Vec<&str> = head.iter().collect();
    let links = names.len().saturating_sub(FIXED_COLUMNS.len());
    if links == 0 || names != header(links) {
        return Err(Error::Schema(format!(
            "expected header load,delay_msec,mlu,generations,f1..fN, got {:?}",
            head.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| match e.kind() {
            csv::ErrorKind::UnequalLengths {
                expected_len, len, ..
            } => schema_err(row, format!("expected {expected_len} columns, found {len}")),
            _ => Error::Csv(e),
        })?;
        let num = |j: usize| -> Result<f64> {
            let s = &rec[j];
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| schema_err(row, format!("bad number {s:?} in {}", names[j])))
        };
        let generations = rec[3]
            .trim()
            .parse::<usize>()
            .map_err(|_| schema_err(row, format!("bad generation count {:?}", &rec[3])))?;
        let flows = (4..rec.len()).map(num).collect::<Result<Vec<_>>>()?;
        rows.push(DatasetRow {
            load_kbps: num(0)?,
            delay_msec: num(1)?,
            mlu: num(2)?,
            generations,
            flows,
        });
    }
    if rows.is_empty() {
        log::warn!("dataset has no rows");
    }
    Dataset::new(role, rows)
}

pub fn read_dataset(path: impl AsRef<Path>, role: Role) -> Result<Dataset> {
    read_dataset_from(std::fs::File::open(path)?, role)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::kkt_optimal_flow;

    fn reference() -> NetworkTopology {
        NetworkTopology::reference_network()
    }

    #[test]
    fn default_schedules_interleave() {
        let (train, test) = default_schedules(&reference()).unwrap();
        let want: Vec<f64> = (0..10).map(|i| 275.0 + 60.0 * i as f64).collect();
        assert_eq!(train, want);
        let want: Vec<f64> = (0..10).map(|i| 305.0 + 60.0 * i as f64).collect();
        assert_eq!(test, want);
    }

    #[test]
    fn schedule_edge_cases() {
        let t = reference();
        let one = load_schedule(&t, 0.5 - 1e-9, 0.5, 1, 0.0).unwrap();
        assert_eq!(one, vec![458.0]);
        assert!(load_schedule(&t, 0.3, 0.9, 0, 0.0).is_err());
        assert!(load_schedule(&t, 0.9, 0.3, 5, 0.0).is_err());
        assert!(load_schedule(&t, 0.3, 0.95, 10, 150.0).is_err());
    }

    fn sample_dataset() -> Dataset {
        let t = reference();
        let rows = [300.0, 500.0]
            .iter()
            .map(|&l| DatasetRow::from_flows(&t, l, 0, kkt_optimal_flow(&t, l).unwrap().0).unwrap())
            .collect();
        Dataset::new(Role::Training, rows).unwrap()
    }

    #[test]
    fn csv_round_trip() {
        let ds = sample_dataset();
        let mut buf = Vec::new();
        write_dataset_to(&ds, 13, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("load,delay_msec,mlu,generations,f1,f2,"));
        assert!(!text.contains('\r'));
        let back = read_dataset_from(&buf[..], Role::Training).unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn header_mismatch_is_schema_error() {
        let bad = "load,delay,mlu,generations,f1\n1,2,3,4,5\n";
        assert!(matches!(
            read_dataset_from(bad.as_bytes(), Role::Test),
            Err(Error::Schema(_))
        ));
        let no_flows = "load,delay_msec,mlu,generations\n";
        assert!(matches!(
            read_dataset_from(no_flows.as_bytes(), Role::Test),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn column_count_mismatch() {
        let bad = "load,delay_msec,mlu,generations,f1,f2\n1,2,3,4,5\n";
        assert!(matches!(
            read_dataset_from(bad.as_bytes(), Role::Test),
            Err(Error::Schema(m)) if m.contains("columns")
        ));
    }

    #[test]
    fn bad_values() {
        let h = "load,delay_msec,mlu,generations,f1\n";
        for body in [
            "x,1,1,1,1\n",
            "1,1,1,-3,1\n",
            "1,1,1,1,inf\n",
            "2,1,1,1,1\n1,1,1,1,1\n",
        ] {
            let text = format!("{h}{body}");
            assert!(
                matches!(
                    read_dataset_from(text.as_bytes(), Role::Test),
                    Err(Error::Schema(_))
                ),
                "{body}"
            );
        }
    }

    #[test]
    fn empty_rows_are_valid() {
        let text = "load,delay_msec,mlu,generations,f1,f2,f3\n";
        let ds = read_dataset_from(text.as_bytes(), Role::Test).unwrap();
        assert!(ds.is_empty());
        let mut buf = Vec::new();
        write_dataset_to(&ds, 3, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), text);
    }

    #[test]
    fn rounded_output() {
        let ds = sample_dataset();
        let mut buf = Vec::new();
        write_dataset_rounded_to(&ds, 13, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row = text.lines().nth(1).unwrap();
        assert!(row.starts_with("300,"), "{row}");
        assert_eq!(row.split(',').nth(2).unwrap().len(), 6);
    }

    #[test]
    fn disjoint_check() {
        let a = sample_dataset();
        assert!(check_disjoint(&a, &a).is_err());
        let t = reference();
        let b = Dataset::new(
            Role::Test,
            vec![
                DatasetRow::from_flows(&t, 400.0, 0, kkt_optimal_flow(&t, 400.0).unwrap().0)
                    .unwrap(),
            ],
        )
        .unwrap();
        assert!(check_disjoint(&a, &b).is_ok());
    }

    #[test]
    fn build_rejects_bad_loads() {
        let t = reference();
        let cfg = dataset_pso_config();
        assert!(build_dataset(&t, &[916.0], &cfg, 1, Role::Test).is_err());
        assert!(build_dataset(&t, &[500.0, 400.0], &cfg, 1, Role::Test).is_err());
    }

    #[test]
    fn build_light_load_row() {
        let t = reference();
        let ds = build_dataset(&t, &[275.0], &dataset_pso_config(), 1, Role::Training).unwrap();
        let row = &ds.rows[0];
        assert!((row.delay_msec - 17.0).abs() <= 0.2, "{}", row.delay_msec);
        assert!((row.mlu - 0.2408).abs() <= 0.002, "{}", row.mlu);
        let recomputed = delay_msec(&t, &FlowVector::new(row.flows.clone())).unwrap();
        assert!((recomputed - row.delay_msec).abs() <= 1e-6);
        let sum: f64 = row.flows.iter().sum();
        assert!((sum - 275.0).abs() / 275.0 <= 1e-3);
        assert!(row.generations > 0);
    }
}
