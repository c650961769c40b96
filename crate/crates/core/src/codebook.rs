//! Spatial-modulation codebook.
//!
//! A symbol activates one transmit antenna `k` and sends one constellation
//! point `s_m` on it, so `x = e_k * s_m`. Symbols are ordered antenna-major,
//! constellation-minor: index `k * M + m`. The bit label puts the antenna index
//! (natural binary) in the high bits and the Gray label of `m` in the low bits.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::config::Constellation;
use crate::{CVec, Complex64, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmSymbol {
    /// Active antenna, zero-based.
    pub antenna: usize,
    /// Constellation index `m`.
    pub point_index: usize,
    pub point: Complex64,
    /// Dense form `e_k * s_m`, length `T`.
    pub vector: CVec,
}

/// Unordered symbol pair `(i, j)`, `i < j`, with `x_i - x_j` cached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffPair {
    pub i: usize,
    pub j: usize,
    pub diff: CVec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmCodebook {
    tx: usize,
    order: usize,
    points: Vec<Complex64>,
    /// Gray label of each constellation index.
    labels: Vec<u32>,
    symbols: Vec<SmSymbol>,
    pairs: Vec<DiffPair>,
}

fn log2_exact(n: usize, what: &str) -> Result<u32> {
    if n >= 1 && n.is_power_of_two() {
        Ok(n.trailing_zeros())
    } else {
        Err(Error::invalid(format!("{what} must be a power of two, got {n}")))
    }
}

/// `log2 T + log2 M`.
pub fn bits_per_symbol(tx: usize, order: usize) -> Result<usize> {
    Ok((log2_exact(tx, "antenna count")? + log2_exact(order, "constellation order")?) as usize)
}

pub fn gray(n: u32) -> u32 {
    n ^ (n >> 1)
}

fn psk(order: usize) -> (Vec<Complex64>, Vec<u32>) {
    let points = (0..order)
        .map(|m| Complex64::from_polar(1.0, 2.0 * PI * m as f64 / order as f64))
        .collect();
    let labels = (0..order as u32).map(gray).collect();
    (points, labels)
}

fn square_qam(order: usize) -> Result<(Vec<Complex64>, Vec<u32>)> {
    let bits = log2_exact(order, "constellation order")?;
    if bits % 2 != 0 {
        return Err(Error::invalid(format!("QAM order must be square, got {order}")));
    }
    let side = 1usize << (bits / 2);
    let norm = (2.0 * (order as f64 - 1.0) / 3.0).sqrt();
    let level = |a: usize| (2.0 * a as f64 - (side as f64 - 1.0)) / norm;
    let mut points = Vec::with_capacity(order);
    let mut labels = Vec::with_capacity(order);
    for a in 0..side {
        for b in 0..side {
            points.push(Complex64::new(level(a), level(b)));
            labels.push((gray(a as u32) << (bits / 2)) | gray(b as u32));
        }
    }
    Ok((points, labels))
}

impl SmCodebook {
    /// Codebook with unit-energy M-PSK points `exp(j 2 pi m / M)`.
    pub fn build(tx: usize, order: usize) -> Result<Self> {
        Self::with_constellation(tx, order, Constellation::Psk)
    }

    pub fn with_constellation(tx: usize, order: usize, kind: Constellation) -> Result<Self> {
        bits_per_symbol(tx, order)?;
        let (points, labels) = match kind {
            Constellation::Psk => psk(order),
            Constellation::Qam => square_qam(order)?,
        };
        let mut symbols = Vec::with_capacity(tx * order);
        for k in 0..tx {
            for (m, &s) in points.iter().enumerate() {
                let mut vector = CVec::zeros(tx);
                vector[k] = s;
                symbols.push(SmSymbol {
                    antenna: k,
                    point_index: m,
                    point: s,
                    vector,
                });
            }
        }
        let n = symbols.len();
        let mut pairs = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in i + 1..n {
                pairs.push(DiffPair {
                    i,
                    j,
                    diff: &symbols[i].vector - &symbols[j].vector,
                });
            }
        }
        Ok(SmCodebook {
            tx,
            order,
            points,
            labels,
            symbols,
            pairs,
        })
    }

    pub fn for_config(cfg: &crate::config::SystemConfig) -> Result<Self> {
        Self::with_constellation(cfg.tx_antennas, cfg.order, cfg.constellation)
    }

    pub fn tx(&self) -> usize {
        self.tx
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn symbols(&self) -> &[SmSymbol] {
        &self.symbols
    }

    pub fn pairs(&self) -> &[DiffPair] {
        &self.pairs
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn bits_per_symbol(&self) -> usize {
        (self.tx.trailing_zeros() + self.order.trailing_zeros()) as usize
    }

    /// Packed bit label of symbol `idx`.
    pub fn label(&self, idx: usize) -> u32 {
        let s = &self.symbols[idx];
        ((s.antenna as u32) << self.order.trailing_zeros()) | self.labels[s.point_index]
    }

    /// Symbol index carrying the packed label `label`.
    pub fn index_of_label(&self, label: u32) -> Option<usize> {
        let mbits = self.order.trailing_zeros();
        let k = (label >> mbits) as usize;
        let low = label & ((1u32 << mbits) - 1);
        if k >= self.tx {
            return None;
        }
        let m = self.labels.iter().position(|&l| l == low)?;
        Some(k * self.order + m)
    }

    /// Bits of a symbol, most significant first.
    pub fn symbol_to_bits(&self, sym: &SmSymbol) -> Vec<u8> {
        let label = self.label(sym.antenna * self.order + sym.point_index);
        let n = self.bits_per_symbol();
        (0..n).rev().map(|b| ((label >> b) & 1) as u8).collect()
    }

    pub fn bits_to_symbol(&self, bits: &[u8]) -> Result<&SmSymbol> {
        let n = self.bits_per_symbol();
        if bits.len() != n {
            return Err(Error::invalid(format!(
                "expected {n} bits, got {}",
                bits.len()
            )));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::invalid("bits must be 0 or 1"));
        }
        let label = bits.iter().fold(0u32, |acc, &b| (acc << 1) | b as u32);
        let idx = self
            .index_of_label(label)
            .ok_or_else(|| Error::invalid("bit pattern does not map to a symbol"))?;
        Ok(&self.symbols[idx])
    }

    /// Number of bits that differ between the labels of two symbols.
    pub fn bit_distance(&self, a: usize, b: usize) -> u32 {
        (self.label(a) ^ self.label(b)).count_ones()
    }
}

/// Free-function form of [`SmCodebook::symbol_to_bits`].
pub fn symbol_to_bits(sym: &SmSymbol, cb: &SmCodebook) -> Vec<u8> {
    cb.symbol_to_bits(sym)
}

/// Free-function form of [`SmCodebook::bits_to_symbol`].
pub fn bits_to_symbol<'a>(bits: &[u8], cb: &'a SmCodebook) -> Result<&'a SmSymbol> {
    cb.bits_to_symbol(bits)
}
