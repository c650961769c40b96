//! Browser bindings for the interactive demo in `www/`.
//!
//! Every export takes a JSON request and returns a JSON string, so the page
//! needs no generated TypeScript types. The plain Rust functions behind the
//! exports are what the native tests exercise.

use masm_core::ao::{optimize, AoOptions, InitStrategy};
use masm_core::baselines::{run_scheme, Scheme};
use masm_core::ber::simulate_ber;
use masm_core::channel::{assemble_channel, AntennaLayout};
use masm_core::codebook::SmCodebook;
use masm_core::config::{BerSettings, ExperimentConfig, SystemConfig};
use masm_core::experiment::{ber_seed, seeded_channel};
use masm_core::metrics::{self, Precoder};
use masm_core::position::feasible_intervals;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

/// Request shared by all exports. Missing fields take the defaults below.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Request {
    pub seed: u64,
    pub paths: usize,
    pub order: usize,
    /// `"tx"` or `"rx"` for the landscape.
    pub side: String,
    pub antenna: usize,
    pub points: usize,
    pub snr_db: Vec<f64>,
    pub bits: u64,
    pub schemes: Vec<String>,
}

impl Default for Request {
    fn default() -> Self {
        Request {
            seed: 0,
            paths: 8,
            order: 4,
            side: "tx".into(),
            antenna: 0,
            points: 400,
            snr_db: vec![0.0, 4.0, 8.0, 12.0],
            bits: 20_000,
            schemes: vec!["ma".into(), "fpa".into(), "gas".into()],
        }
    }
}

impl Request {
    fn parse(json: &str) -> Result<Self, String> {
        if json.trim().is_empty() {
            return Ok(Request::default());
        }
        serde_json::from_str(json).map_err(|e| e.to_string())
    }

    fn system(&self) -> Result<SystemConfig, String> {
        let mut cfg = ExperimentConfig::default().system;
        cfg.paths = self.paths;
        cfg.order = self.order;
        cfg.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }
}

#[derive(Serialize)]
struct Trace {
    /// `d_min / c^2` after every AO iteration, index 0 is the start.
    eta: Vec<f64>,
    /// `d_min / c^2` after every block update.
    blocks: Vec<f64>,
    termination: String,
    u_lambda: Vec<f64>,
    v_lambda: Vec<f64>,
    fpa_eta: f64,
    gas_eta: f64,
    region_lambda: f64,
}

/// Alternating optimization from the half-wavelength start, with the FPA and
/// GAS reference values for the same channel.
pub fn solve_trace(json: &str) -> Result<String, String> {
    let req = Request::parse(json)?;
    let cfg = req.system()?;
    let exp = ExperimentConfig::default();
    let cb = SmCodebook::for_config(&cfg).map_err(|e| e.to_string())?;
    let ch = seeded_channel(&cfg, req.seed);
    let start = masm_core::ao::initialize(&cfg, InitStrategy::Fpa).map_err(|e| e.to_string())?;
    let sol = optimize(&cfg, &ch, &cb, start, &AoOptions::from(&exp.algorithm)).map_err(|e| e.to_string())?;
    let scale = cfg.path_gain();
    let reference = |s| {
        run_scheme(s, &cfg, &ch, &cb, &exp.algorithm, exp.gas_grid_step())
            .map(|r| r.eta / scale)
            .map_err(|e| e.to_string())
    };
    let lam = cfg.wavelength;
    let out = Trace {
        eta: sol.record.eta_history.iter().map(|e| e / scale).collect(),
        blocks: sol.record.block_trace().iter().map(|e| e / scale).collect(),
        termination: format!("{:?}", sol.record.termination),
        u_lambda: sol.layout.u.iter().map(|x| x / lam).collect(),
        v_lambda: sol.layout.v.iter().map(|x| x / lam).collect(),
        fpa_eta: reference(Scheme::Fpa)?,
        gas_eta: reference(Scheme::Gas)?,
        region_lambda: cfg.tx_region / lam,
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Landscape {
    x_lambda: Vec<f64>,
    /// `None` where the spacing constraint is violated.
    eta: Vec<Option<f64>>,
    others_lambda: Vec<f64>,
}

/// True `d_min / c^2` as one antenna sweeps its region, everything else on
/// the half-wavelength grid with a uniform precoder.
pub fn landscape(json: &str) -> Result<String, String> {
    let req = Request::parse(json)?;
    let cfg = req.system()?;
    let cb = SmCodebook::for_config(&cfg).map_err(|e| e.to_string())?;
    let ch = seeded_channel(&cfg, req.seed);
    let w = Precoder::uniform(cfg.tx_antennas, cfg.power);
    let base = AntennaLayout::uniform(cfg.tx_antennas, cfg.rx_antennas, cfg.wavelength / 2.0);
    let (n, region) = match req.side.as_str() {
        "tx" => (cfg.tx_antennas, cfg.tx_region),
        "rx" => (cfg.rx_antennas, cfg.rx_region),
        other => return Err(format!("side must be 'tx' or 'rx', got '{other}'")),
    };
    if req.antenna >= n {
        return Err(format!("antenna index {} out of range (0..{n})", req.antenna));
    }
    let points = req.points.clamp(2, 5000);
    let positions = if req.side == "tx" { &base.u } else { &base.v };
    let intervals = feasible_intervals(req.antenna, positions, region, cfg.min_spacing);
    let mut x_lambda = Vec::with_capacity(points);
    let mut eta = Vec::with_capacity(points);
    for i in 0..points {
        let x = region * i as f64 / (points - 1) as f64;
        x_lambda.push(x / cfg.wavelength);
        if !intervals.iter().any(|&(a, b)| x >= a && x <= b) {
            eta.push(None);
            continue;
        }
        let mut layout = base.clone();
        if req.side == "tx" {
            layout.u[req.antenna] = x;
        } else {
            layout.v[req.antenna] = x;
        }
        let h = assemble_channel(&layout, &ch, &cfg).map_err(|e| e.to_string())?;
        let d = metrics::d_min(&h, &w, &cb).map_err(|e| e.to_string())?;
        eta.push(Some(d / cfg.path_gain()));
    }
    let others_lambda = positions
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != req.antenna)
        .map(|(_, x)| x / cfg.wavelength)
        .collect();
    serde_json::to_string(&Landscape {
        x_lambda,
        eta,
        others_lambda,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Curve {
    scheme: String,
    ber: Vec<f64>,
}

#[derive(Serialize)]
struct BerCurves {
    snr_db: Vec<f64>,
    curves: Vec<Curve>,
}

/// Monte Carlo BER of each scheme's design on one channel. `bits` is both the
/// minimum and the maximum per point, so the cost is predictable.
pub fn ber_curves(json: &str) -> Result<String, String> {
    let req = Request::parse(json)?;
    let cfg = req.system()?;
    let exp = ExperimentConfig::default();
    let cb = SmCodebook::for_config(&cfg).map_err(|e| e.to_string())?;
    let ch = seeded_channel(&cfg, req.seed);
    let bits = req.bits.clamp(1_000, 1_000_000);
    let settings = BerSettings {
        min_bits: bits,
        max_bits: bits,
        target_errors: 0,
    };
    let mut curves = Vec::new();
    for name in &req.schemes {
        let scheme: Scheme = name.parse().map_err(|e: masm_core::Error| e.to_string())?;
        let design =
            run_scheme(scheme, &cfg, &ch, &cb, &exp.algorithm, exp.gas_grid_step()).map_err(|e| e.to_string())?;
        let h = assemble_channel(&design.layout, &ch, &cfg).map_err(|e| e.to_string())?;
        let ber = req
            .snr_db
            .iter()
            .map(|&snr| {
                simulate_ber(&h, &design.w, &cb, &cfg, snr, &settings, ber_seed(req.seed, scheme, snr))
                    .map(|r| r.ber)
                    .map_err(|e| e.to_string())
            })
            .collect::<Result<Vec<_>, _>>()?;
        curves.push(Curve {
            scheme: scheme.name().to_string(),
            ber,
        });
    }
    serde_json::to_string(&BerCurves {
        snr_db: req.snr_db.clone(),
        curves,
    })
    .map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = solveTrace)]
pub fn solve_trace_js(request: &str) -> Result<String, JsError> {
    js(solve_trace(request))
}

#[wasm_bindgen(js_name = landscape)]
pub fn landscape_js(request: &str) -> Result<String, JsError> {
    js(landscape(request))
}

#[wasm_bindgen(js_name = berCurves)]
pub fn ber_curves_js(request: &str) -> Result<String, JsError> {
    js(ber_curves(request))
}
