//! Working-parameter spaces for each case study.
//!
//! Bounds, training, finite differencing, scores and network inputs all use
//! working coordinates (mostly logs of the raw parameters). Margins are
//! fractions of the half-width split equally over both sides, so a 20%
//! margin on `[-1, 1]` moves each edge by 0.1.

use alloc::string::String;
use alloc::vec::Vec;
#[allow(unused_imports)]
use num_traits::Float as _;

use crate::{Error, Result};

/// Case study selector shared by architectures, spaces and configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Case {
    Sis,
    Gp,
    Stp,
    /// One-dimensional Gaussian location harness.
    Toy,
}

impl Case {
    pub fn name(self) -> &'static str {
        match self {
            Case::Sis => "sis",
            Case::Gp => "gp",
            Case::Stp => "stp",
            Case::Toy => "toy",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sis" => Ok(Case::Sis),
            "gp" => Ok(Case::Gp),
            "stp" => Ok(Case::Stp),
            "toy" => Ok(Case::Toy),
            _ => Err(Error::InvalidArgument(String::from("unknown case ") + s)),
        }
    }

    pub fn space(self) -> ParameterSpace {
        match self {
            Case::Sis => ParameterSpace::sis(),
            Case::Gp => ParameterSpace::gp(),
            Case::Stp => ParameterSpace::stp(),
            Case::Toy => ParameterSpace::toy(),
        }
    }
}

/// Map from a raw parameter to its working coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Transform {
    Identity,
    /// `working = ln(raw)`
    Log,
    /// `working = ln(raw - shift)`
    LogShifted(f64),
}

impl Transform {
    pub fn to_working(self, raw: f64) -> f64 {
        match self {
            Transform::Identity => raw,
            Transform::Log => raw.ln(),
            Transform::LogShifted(s) => (raw - s).ln(),
        }
    }

    pub fn to_raw(self, working: f64) -> f64 {
        match self {
            Transform::Identity => working,
            Transform::Log => working.exp(),
            Transform::LogShifted(s) => working.exp() + s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterDim {
    pub name: &'static str,
    pub transform: Transform,
    pub low: f64,
    pub high: f64,
    pub train_margin: f64,
    pub etest_margin: f64,
}

impl ParameterDim {
    fn edge_shift(&self, margin: f64) -> f64 {
        0.25 * margin * (self.high - self.low)
    }
}

/// Axis-aligned box in working coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl Bounds {
    pub fn new(low: Vec<f64>, high: Vec<f64>) -> Self {
        assert_eq!(low.len(), high.len());
        Self { low, high }
    }

    pub fn dim(&self) -> usize {
        self.low.len()
    }

    pub fn width(&self, k: usize) -> f64 {
        self.high[k] - self.low[k]
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.width(k)).product()
    }

    pub fn center(&self) -> Vec<f64> {
        self.low.iter().zip(&self.high).map(|(l, h)| 0.5 * (l + h)).collect()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.iter().enumerate().all(|(k, &t)| t >= self.low[k] && t <= self.high[k])
    }

    pub fn clamp(&self, theta: &mut [f64]) {
        for (k, t) in theta.iter_mut().enumerate() {
            *t = t.clamp(self.low[k], self.high[k]);
        }
    }

    /// Map a point of the unit cube into the box.
    pub fn from_unit(&self, u: &[f64]) -> Vec<f64> {
        u.iter().enumerate().map(|(k, &v)| self.low[k] + v * self.width(k)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    pub dims: Vec<ParameterDim>,
}

impl ParameterSpace {
    pub fn dim(&self) -> usize {
        self.dims.len()
    }

    pub fn base(&self) -> Bounds {
        Bounds::new(self.dims.iter().map(|d| d.low).collect(), self.dims.iter().map(|d| d.high).collect())
    }

    /// Base box widened by the training margin.
    pub fn train(&self) -> Bounds {
        Bounds::new(
            self.dims.iter().map(|d| d.low - d.edge_shift(d.train_margin)).collect(),
            self.dims.iter().map(|d| d.high + d.edge_shift(d.train_margin)).collect(),
        )
    }

    /// Base box shrunk by the E-test margin.
    pub fn etest(&self) -> Bounds {
        Bounds::new(
            self.dims.iter().map(|d| d.low + d.edge_shift(d.etest_margin)).collect(),
            self.dims.iter().map(|d| d.high - d.edge_shift(d.etest_margin)).collect(),
        )
    }

    pub fn to_raw(&self, working: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(working).map(|(d, &w)| d.transform.to_raw(w)).collect()
    }

    pub fn to_working(&self, raw: &[f64]) -> Vec<f64> {
        self.dims.iter().zip(raw).map(|(d, &r)| d.transform.to_working(r)).collect()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.dims.iter().map(|d| d.name).collect()
    }

    /// `(log λ, log μ)` on `[-1, 1]²`, 20% train / 40% E-test margins.
    pub fn sis() -> Self {
        Self {
            dims: alloc::vec![
                dim("log_lambda", Transform::Log, -1.0, 1.0, 0.2, 0.4),
                dim("log_mu", Transform::Log, -1.0, 1.0, 0.2, 0.4),
            ],
        }
    }

    /// `(log l_x, log l_y, log ε)`, 10% train / 40% E-test margins.
    pub fn gp() -> Self {
        Self {
            dims: alloc::vec![
                dim("log_lx", Transform::Log, -1.0, 1.0, 0.1, 0.4),
                dim("log_ly", Transform::Log, -1.0, 1.0, 0.1, 0.4),
                dim("log_eps", Transform::Log, -4.0, -1.0, 0.1, 0.4),
            ],
        }
    }

    /// `(log l_x, log l_y, log(ν − 2))`, 10% train / 40% E-test margins.
    pub fn stp() -> Self {
        Self {
            dims: alloc::vec![
                dim("log_lx", Transform::Log, -1.0, 1.0, 0.1, 0.4),
                dim("log_ly", Transform::Log, -1.0, 1.0, 0.1, 0.4),
                dim("log_nu_minus_2", Transform::LogShifted(2.0), -2.0, 3.0, 0.1, 0.4),
            ],
        }
    }

    /// Location parameter of the Gaussian toy model, uniform on `[-2, 2]`
    /// with no margins.
    pub fn toy() -> Self {
        Self { dims: alloc::vec![dim("location", Transform::Identity, -2.0, 2.0, 0.0, 0.0)] }
    }
}

fn dim(name: &'static str, transform: Transform, low: f64, high: f64, train: f64, etest: f64) -> ParameterDim {
    ParameterDim { name, transform, low, high, train_margin: train, etest_margin: etest }
}
