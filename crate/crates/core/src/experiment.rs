//! Seeded sweeps behind the command line: convergence traces, BER versus
//! SNR, BER versus path count, and single-run dumps.
//!
//! Every result is a pure function of the resolved configuration and the seed
//! list. Channel `seed` is drawn from a ChaCha8 stream seeded with `seed`;
//! the Monte Carlo stream of a BER point is seeded from `(seed, scheme, snr)`
//! only, so the same point computed by two commands gives the same number.
//! Work items run on a rayon pool and are collected in input order.

use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ao::{optimize_multistart, AoOptions, SolveRecord};
use crate::baselines::{run_scheme, Scheme, SchemeResult};
use crate::ber::{simulate_ber, BerResult};
use crate::channel::{assemble_channel, sample_channel, AntennaLayout, ChannelRealization};
use crate::codebook::SmCodebook;
use crate::config::{ExperimentConfig, SystemConfig};
use crate::metrics::{self, Precoder};
use crate::{Error, Result};

/// Parses `a..b` (half-open), `a..=b`, or a comma-separated list.
pub fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || Error::invalid(format!("bad seed list '{s}' (use 0..10, 0..=9 or 1,2,3)"));
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..=") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..=b).collect()
    } else if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        (a..b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect::<Result<_>>()?
    };
    if seeds.is_empty() {
        return Err(bad());
    }
    Ok(seeds)
}

/// Parses a comma-separated list of scheme names.
pub fn parse_schemes(s: &str) -> Result<Vec<Scheme>> {
    s.split(',').map(|x| x.trim().parse()).collect()
}

pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|x| x.trim().parse().map_err(|_| Error::invalid(format!("bad {what} '{x}'"))))
        .collect()
}

/// Channel realization number `seed` with `paths` paths.
pub fn seeded_channel(cfg: &SystemConfig, seed: u64) -> ChannelRealization {
    sample_channel(cfg, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Seed of the Monte Carlo stream for one BER point.
pub fn ber_seed(seed: u64, scheme: Scheme, snr_db: f64) -> u64 {
    let mut h = seed ^ 0x6A09_E667_F3BC_C909;
    for x in [scheme.tag(), snr_db.to_bits()] {
        h = (h ^ x).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        h ^= h >> 31;
    }
    h
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::invalid(format!("cannot start worker pool: {e}")))
}

fn format_f64(x: f64) -> String {
    format!("{x:e}")
}

/// Comma-separated output with `#` metadata lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub meta: Vec<(String, String)>,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            let _ = writeln!(out, "# {k}: {v}");
        }
        let _ = writeln!(out, "{}", self.header.join(","));
        for r in &self.rows {
            let _ = writeln!(out, "{}", r.join(","));
        }
        out
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

fn meta(cmd: &str, exp: &ExperimentConfig, seeds: &[u64]) -> Vec<(String, String)> {
    vec![
        ("command".into(), cmd.into()),
        ("config_hash".into(), exp.hash()),
        ("seeds".into(), seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(",")),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergeTrace {
    pub seed: u64,
    pub paths: usize,
    pub order: usize,
    pub record: SolveRecord,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergeOutput {
    pub traces: Vec<ConvergeTrace>,
    pub table: Table,
}

impl ConvergeOutput {
    pub fn failures(&self) -> usize {
        self.traces.iter().map(|t| t.record.failures.len()).sum()
    }

    /// One JSON object per iteration, tagged with its trace.
    pub fn json_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.traces {
            for l in t.record.log() {
                let v = serde_json::json!({
                    "seed": t.seed, "L": t.paths, "M": t.order,
                    "n": l.n, "eta": l.eta, "wall_ms": l.wall_ms,
                });
                let _ = writeln!(out, "{v}");
            }
        }
        out
    }
}

/// Full AO traces for every `(seed, L, M)` of the sweep grid.
///
/// `wall_ms` is left empty unless `timing` is set, which keeps files
/// byte-identical between runs.
pub fn converge(exp: &ExperimentConfig, seeds: &[u64], workers: usize, timing: bool) -> Result<ConvergeOutput> {
    let mut items = Vec::new();
    for &seed in seeds {
        for &paths in &exp.sweep.converge_paths {
            for &order in &exp.sweep.converge_orders {
                items.push((seed, paths, order));
            }
        }
    }
    let opts = AoOptions::from(&exp.algorithm);
    let traces: Vec<ConvergeTrace> = pool(workers)?.install(|| {
        items
            .par_iter()
            .map(|&(seed, paths, order)| {
                let cfg = SystemConfig { paths, order, ..exp.system.clone() };
                cfg.validate()?;
                let cb = SmCodebook::for_config(&cfg)?;
                let ch = seeded_channel(&cfg, seed);
                let sol = optimize_multistart(&cfg, &ch, &cb, &exp.algorithm, &opts)?;
                Ok(ConvergeTrace { seed, paths, order, record: sol.record })
            })
            .collect::<Result<Vec<_>>>()
    })?;
    let mut rows = Vec::new();
    for t in &traces {
        for l in t.record.log() {
            rows.push(vec![
                t.seed.to_string(),
                t.paths.to_string(),
                t.order.to_string(),
                l.n.to_string(),
                format_f64(l.eta),
                if timing { format!("{:.3}", l.wall_ms) } else { String::new() },
            ]);
        }
    }
    Ok(ConvergeOutput {
        table: Table {
            meta: meta("converge", exp, seeds),
            header: vec!["seed", "L", "M", "iteration", "eta", "wall_ms"],
            rows,
        },
        traces,
    })
}

/// BER of one designed link at several SNRs.
#[derive(Debug, Clone, PartialEq)]
pub struct PointRun {
    pub seed: u64,
    pub scheme: Scheme,
    pub paths: usize,
    pub eta: f64,
    pub failures: usize,
    pub results: Vec<BerResult>,
}

/// Designs `(w, u, v)` for channel `seed` and measures BER at every SNR.
pub fn design_and_measure(
    exp: &ExperimentConfig,
    cfg: &SystemConfig,
    scheme: Scheme,
    seed: u64,
    snrs: &[f64],
) -> Result<PointRun> {
    let cb = SmCodebook::for_config(cfg)?;
    let ch = seeded_channel(cfg, seed);
    let design = run_scheme(scheme, cfg, &ch, &cb, &exp.algorithm, exp.gas_grid_step())?;
    let h = assemble_channel(&design.layout, &ch, cfg)?;
    let results = snrs
        .iter()
        .map(|&snr| simulate_ber(&h, &design.w, &cb, cfg, snr, &exp.ber, ber_seed(seed, scheme, snr)))
        .collect::<Result<Vec<_>>>()?;
    Ok(PointRun {
        seed,
        scheme,
        paths: cfg.paths,
        eta: design.eta,
        failures: design.failures,
        results,
    })
}

/// Channel-averaged BER of one sweep point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BerSummary {
    pub scheme: Scheme,
    pub snr_db: f64,
    pub paths: usize,
    pub order: usize,
    /// Mean over channels of the per-channel BER.
    pub ber: f64,
    /// Standard error of `ber` across channels.
    pub std_error: f64,
    pub bit_errors: u64,
    pub total_bits: u64,
    pub channels: usize,
    pub mean_eta: f64,
    pub failures: usize,
}

fn summarize(scheme: Scheme, snr_db: f64, cfg: &SystemConfig, runs: &[&PointRun], k: usize) -> BerSummary {
    let n = runs.len();
    let bers: Vec<f64> = runs.iter().map(|r| r.results[k].ber).collect();
    let mean = bers.iter().sum::<f64>() / n as f64;
    let var = if n > 1 {
        bers.iter().map(|b| (b - mean).powi(2)).sum::<f64>() / (n - 1) as f64
    } else {
        0.0
    };
    BerSummary {
        scheme,
        snr_db,
        paths: cfg.paths,
        order: cfg.order,
        ber: mean,
        std_error: (var / n as f64).sqrt(),
        bit_errors: runs.iter().map(|r| r.results[k].bit_errors).sum(),
        total_bits: runs.iter().map(|r| r.results[k].total_bits).sum(),
        channels: n,
        mean_eta: runs.iter().map(|r| r.eta).sum::<f64>() / n as f64,
        failures: runs.iter().map(|r| r.failures).sum(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BerOutput {
    pub summaries: Vec<BerSummary>,
    pub table: Table,
}

impl BerOutput {
    pub fn failures(&self) -> usize {
        self.summaries.iter().map(|s| s.failures).sum()
    }

    pub fn get(&self, scheme: Scheme, snr_db: f64, paths: usize) -> Option<&BerSummary> {
        self.summaries
            .iter()
            .find(|s| s.scheme == scheme && s.snr_db == snr_db && s.paths == paths)
    }
}

const BER_HEADER: [&str; 10] = [
    "scheme", "snr_db", "L", "M", "ber", "std_error", "bit_errors", "total_bits", "channels", "mean_eta",
];

fn ber_row(s: &BerSummary) -> Vec<String> {
    vec![
        s.scheme.to_string(),
        s.snr_db.to_string(),
        s.paths.to_string(),
        s.order.to_string(),
        format_f64(s.ber),
        format_f64(s.std_error),
        s.bit_errors.to_string(),
        s.total_bits.to_string(),
        s.channels.to_string(),
        format_f64(s.mean_eta),
    ]
}

fn sweep(
    exp: &ExperimentConfig,
    schemes: &[Scheme],
    cfgs: &[SystemConfig],
    snrs: &[f64],
    seeds: &[u64],
    workers: usize,
) -> Result<Vec<BerSummary>> {
    let mut items = Vec::new();
    for (c, _) in cfgs.iter().enumerate() {
        for &scheme in schemes {
            for &seed in seeds {
                items.push((c, scheme, seed));
            }
        }
    }
    let runs: Vec<PointRun> = pool(workers)?.install(|| {
        items
            .par_iter()
            .map(|&(c, scheme, seed)| design_and_measure(exp, &cfgs[c], scheme, seed, snrs))
            .collect::<Result<Vec<_>>>()
    })?;
    let mut out = Vec::new();
    for (c, cfg) in cfgs.iter().enumerate() {
        for &scheme in schemes {
            let group: Vec<&PointRun> = items
                .iter()
                .zip(&runs)
                .filter(|((ci, s, _), _)| *ci == c && *s == scheme)
                .map(|(_, r)| r)
                .collect();
            for (k, &snr) in snrs.iter().enumerate() {
                out.push(summarize(scheme, snr, cfg, &group, k));
            }
        }
    }
    Ok(out)
}

fn validate_sweep(schemes: &[Scheme], seeds: &[u64]) -> Result<()> {
    if schemes.is_empty() {
        return Err(Error::invalid("no schemes given"));
    }
    if seeds.is_empty() {
        return Err(Error::invalid("no seeds given"));
    }
    Ok(())
}

/// Mean BER versus SNR, one design per `(scheme, seed)`.
pub fn ber_vs_snr(
    exp: &ExperimentConfig,
    schemes: &[Scheme],
    snrs: &[f64],
    seeds: &[u64],
    workers: usize,
) -> Result<BerOutput> {
    validate_sweep(schemes, seeds)?;
    let summaries = sweep(exp, schemes, std::slice::from_ref(&exp.system), snrs, seeds, workers)?;
    let rows = summaries.iter().map(ber_row).collect();
    Ok(BerOutput {
        table: Table {
            meta: meta("ber-vs-snr", exp, seeds),
            header: BER_HEADER.to_vec(),
            rows,
        },
        summaries,
    })
}

/// Mean BER versus the number of paths at a fixed SNR.
pub fn ber_vs_paths(
    exp: &ExperimentConfig,
    schemes: &[Scheme],
    paths: &[usize],
    snr_db: f64,
    seeds: &[u64],
    workers: usize,
) -> Result<BerOutput> {
    validate_sweep(schemes, seeds)?;
    let cfgs = paths
        .iter()
        .map(|&l| {
            let c = SystemConfig { paths: l, ..exp.system.clone() };
            c.validate().map(|_| c)
        })
        .collect::<Result<Vec<_>>>()?;
    let summaries = sweep(exp, schemes, &cfgs, &[snr_db], seeds, workers)?;
    let rows = summaries.iter().map(ber_row).collect();
    Ok(BerOutput {
        table: Table {
            meta: meta("ber-vs-paths", exp, seeds),
            header: BER_HEADER.to_vec(),
            rows,
        },
        summaries,
    })
}

/// Everything about one full solve, for debugging and regression files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDump {
    pub config_hash: String,
    pub seed: u64,
    pub system: SystemConfig,
    pub channel: ChannelRealization,
    pub layout: AntennaLayout,
    pub w: Precoder,
    pub d_min: f64,
    pub snr_db: f64,
    pub sigma2: f64,
    pub pep_bound: f64,
    pub record: SolveRecord,
}

impl RunDump {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    /// Recomputes the minimum distance from the stored channel and design.
    pub fn reevaluate(&self) -> Result<f64> {
        let cb = SmCodebook::for_config(&self.system)?;
        let h = assemble_channel(&self.layout, &self.channel, &self.system)?;
        metrics::d_min(&h, &self.w, &cb)
    }
}

/// Full movable-antenna solve of one channel with iterate histories.
///
/// An explicit channel in the configuration takes precedence over `seed`.
pub fn single_run(exp: &ExperimentConfig, seed: u64) -> Result<RunDump> {
    let cfg = &exp.system;
    let ch = match &exp.channel {
        Some(file) => ChannelRealization::from_file(file)?,
        None => seeded_channel(cfg, seed),
    };
    let cb = SmCodebook::for_config(cfg)?;
    let mut opts = AoOptions::from(&exp.algorithm);
    opts.record_iterates = true;
    let sol = optimize_multistart(cfg, &ch, &cb, &exp.algorithm, &opts)?;
    Ok(RunDump {
        config_hash: exp.hash(),
        seed,
        system: cfg.clone(),
        pep_bound: metrics::pep_upper_bound(sol.eta, cfg.noise_power, cb.pairs().len())?,
        sigma2: cfg.noise_power,
        snr_db: exp.snr_db,
        d_min: sol.eta,
        layout: sol.layout,
        w: sol.w,
        channel: ch,
        record: sol.record,
    })
}

/// The design of one scheme on channel `seed`, for callers that want the
/// link itself rather than statistics.
pub fn design(exp: &ExperimentConfig, scheme: Scheme, seed: u64) -> Result<(ChannelRealization, SchemeResult)> {
    let cb = SmCodebook::for_config(&exp.system)?;
    let ch = seeded_channel(&exp.system, seed);
    let r = run_scheme(scheme, &exp.system, &ch, &cb, &exp.algorithm, exp.gas_grid_step())?;
    Ok((ch, r))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BerSettings;

    fn small() -> ExperimentConfig {
        let mut exp = ExperimentConfig::default();
        exp.ber = BerSettings {
            min_bits: 2_000,
            max_bits: 2_000,
            target_errors: 10,
        };
        exp.sweep.converge_paths = vec![4];
        exp.sweep.converge_orders = vec![2, 4];
        exp
    }

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("0..3").unwrap(), vec![0, 1, 2]);
        assert_eq!(parse_seeds("2..=4").unwrap(), vec![2, 3, 4]);
        assert_eq!(parse_seeds("5, 1,9").unwrap(), vec![5, 1, 9]);
        assert!(parse_seeds("3..3").is_err());
        assert!(parse_seeds("a").is_err());
    }

    #[test]
    fn scheme_lists() {
        assert_eq!(parse_schemes("ma,fpa").unwrap(), vec![Scheme::Ma, Scheme::Fpa]);
        assert!(parse_schemes("ma,xyz").is_err());
    }

    #[test]
    fn converge_table_shape_and_determinism() {
        let exp = small();
        let a = converge(&exp, &[1], 2, false).unwrap();
        let b = converge(&exp, &[1], 1, false).unwrap();
        assert_eq!(a.table.to_csv(), b.table.to_csv());
        assert_eq!(a.traces.len(), 2);
        let csv = a.table.to_csv();
        assert!(csv.starts_with("# command: converge\n# config_hash: "));
        assert!(csv.contains("\n# seeds: 1\nseed,L,M,iteration,eta,wall_ms\n"));
        for t in &a.traces {
            for w in t.record.eta_history.windows(2) {
                assert!(w[1] >= w[0] - 1e-9);
            }
        }
        assert_eq!(a.json_lines().lines().count(), a.table.rows.len());
    }

    #[test]
    fn ber_point_matches_across_commands() {
        let exp = small();
        let schemes = [Scheme::Fpa];
        let s = ber_vs_snr(&exp, &schemes, &[6.0, 12.0], &[3, 4], 2).unwrap();
        let p = ber_vs_paths(&exp, &schemes, &[exp.system.paths], 12.0, &[3, 4], 1).unwrap();
        let a = s.get(Scheme::Fpa, 12.0, exp.system.paths).unwrap();
        let b = p.get(Scheme::Fpa, 12.0, exp.system.paths).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.channels, 2);
        assert_eq!(a.total_bits, 2 * 2_000);
    }

    #[test]
    fn dump_round_trip() {
        let exp = small();
        let d = single_run(&exp, 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        d.save(&path).unwrap();
        let back = RunDump::load(&path).unwrap();
        assert!((back.reevaluate().unwrap() - d.d_min).abs() <= 1e-12 * d.d_min.max(1e-300));
        back.layout.validate(&back.system).unwrap();
        assert_eq!(back.record.u_history.len(), back.record.iterations + 1);
    }

    #[test]
    fn ber_seed_separates_points() {
        let a = ber_seed(1, Scheme::Ma, 10.0);
        assert_ne!(a, ber_seed(1, Scheme::Fpa, 10.0));
        assert_ne!(a, ber_seed(1, Scheme::Ma, 12.0));
        assert_ne!(a, ber_seed(2, Scheme::Ma, 10.0));
    }
}
