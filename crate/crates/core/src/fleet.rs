//! Physical model of the data-center fleet: per-slot energy, carbon
//! intensity traces and the carbon footprint of a selection.
//!
//! Energy figures are per-slot totals (kWh per one-hour slot) and carbon is
//! kept in kilograms; conversion to tons happens only when reporting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const KG_PER_TON: f64 = 1000.0;

/// Idle and full-load draw per GPU (kW) and GPUs per center used for the
/// default homogeneous energy model.
pub const GPUS_PER_CENTER: f64 = 2000.0;
pub const GPU_IDLE_KW: f64 = 0.020;
pub const GPU_ACTIVE_KW: f64 = 0.400;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub n_centers: usize,
    pub slot_hours: f64,
    pub center_labels: Vec<String>,
}

impl FleetConfig {
    pub fn new(n_centers: usize) -> Result<Self> {
        if n_centers == 0 {
            return Err(Error::InvalidParameter("n_centers must be >= 1".into()));
        }
        Ok(Self {
            n_centers,
            slot_hours: 1.0,
            center_labels: (0..n_centers).map(|i| format!("dc{i:02}")).collect(),
        })
    }

    pub fn with_labels(labels: Vec<String>) -> Result<Self> {
        let mut cfg = Self::new(labels.len())?;
        cfg.center_labels = labels;
        Ok(cfg)
    }
}

/// Static (`E^c`) and selection-dependent (`E^s`) energy per center per slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyModel {
    static_kwh: Vec<f64>,
    active_kwh: Vec<f64>,
}

impl EnergyModel {
    pub fn new(static_kwh: Vec<f64>, active_kwh: Vec<f64>) -> Result<Self> {
        if static_kwh.len() != active_kwh.len() {
            return Err(Error::DimensionMismatch(format!(
                "static_kwh has {} entries, active_kwh has {}",
                static_kwh.len(),
                active_kwh.len()
            )));
        }
        if static_kwh.is_empty() {
            return Err(Error::InvalidParameter("energy model needs >= 1 center".into()));
        }
        if static_kwh
            .iter()
            .chain(&active_kwh)
            .any(|e| !e.is_finite() || *e < 0.0)
        {
            return Err(Error::InvalidParameter(
                "energy entries must be finite and non-negative".into(),
            ));
        }
        Ok(Self {
            static_kwh,
            active_kwh,
        })
    }

    /// Homogeneous model from GPU counts: 2000 GPUs idling at 20 W give
    /// 40 kWh per slot; at 400 W full load the increment is 760 kWh.
    pub fn homogeneous_default(n: usize) -> Result<Self> {
        let e_static = GPUS_PER_CENTER * GPU_IDLE_KW;
        let e_full = GPUS_PER_CENTER * GPU_ACTIVE_KW;
        Self::uniform(n, e_static, e_full - e_static)
    }

    pub fn uniform(n: usize, static_kwh: f64, active_kwh: f64) -> Result<Self> {
        Self::new(vec![static_kwh; n], vec![active_kwh; n])
    }

    pub fn n_centers(&self) -> usize {
        self.static_kwh.len()
    }

    pub fn static_kwh(&self) -> &[f64] {
        &self.static_kwh
    }

    pub fn active_kwh(&self) -> &[f64] {
        &self.active_kwh
    }

    pub fn energy_per_slot(&self, center: usize, selected: bool) -> Result<f64> {
        self.check(center)?;
        let active = if selected { self.active_kwh[center] } else { 0.0 };
        Ok(self.static_kwh[center] + active)
    }

    fn check(&self, center: usize) -> Result<()> {
        if center >= self.n_centers() {
            return Err(Error::IndexOutOfRange {
                what: "center",
                index: center,
                limit: self.n_centers(),
            });
        }
        Ok(())
    }
}

/// Carbon intensity `beta[t][i]` in kg CO2 per kWh, T slots by N centers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonTrace {
    intensities: Vec<Vec<f64>>,
}

impl CarbonTrace {
    pub fn new(intensities: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = intensities.first() else {
            return Err(Error::InvalidParameter("trace horizon must be >= 1".into()));
        };
        let n = first.len();
        if n == 0 {
            return Err(Error::InvalidParameter("trace needs >= 1 center".into()));
        }
        for (t, row) in intensities.iter().enumerate() {
            if row.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "trace slot {t} has {} centers, expected {n}",
                    row.len()
                )));
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "trace slot {t} has invalid intensity {v}"
                )));
            }
        }
        Ok(Self { intensities })
    }

    pub fn horizon(&self) -> usize {
        self.intensities.len()
    }

    pub fn n_centers(&self) -> usize {
        self.intensities[0].len()
    }

    pub fn slot(&self, t: usize) -> Result<&[f64]> {
        self.intensities
            .get(t)
            .map(Vec::as_slice)
            .ok_or(Error::IndexOutOfRange {
                what: "slot",
                index: t,
                limit: self.horizon(),
            })
    }

    pub fn intensity(&self, t: usize, center: usize) -> Result<f64> {
        let row = self.slot(t)?;
        row.get(center).copied().ok_or(Error::IndexOutOfRange {
            what: "center",
            index: center,
            limit: row.len(),
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.intensities
    }

    /// Per-center mean intensity over the first `horizon` slots.
    pub fn center_means(&self, horizon: usize) -> Vec<f64> {
        let h = horizon.min(self.horizon()).max(1);
        let mut means = vec![0.0; self.n_centers()];
        for row in &self.intensities[..h] {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        means.iter_mut().for_each(|m| *m /= h as f64);
        means
    }

    /// Keeps the first `horizon` slots.
    pub fn truncated(&self, horizon: usize) -> Result<Self> {
        if horizon == 0 || horizon > self.horizon() {
            return Err(Error::InvalidParameter(format!(
                "cannot truncate trace of horizon {} to {horizon}",
                self.horizon()
            )));
        }
        Ok(Self {
            intensities: self.intensities[..horizon].to_vec(),
        })
    }
}

/// Binary selection over N centers; `bits[i]` is `a_i`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Selection {
    bits: Vec<bool>,
}

impl Selection {
    pub fn empty(n: usize) -> Self {
        Self { bits: vec![false; n] }
    }

    pub fn full(n: usize) -> Self {
        Self { bits: vec![true; n] }
    }

    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn from_indices(n: usize, indices: &[usize]) -> Result<Self> {
        let mut sel = Self::empty(n);
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange {
                    what: "center",
                    index: i,
                    limit: n,
                });
            }
            sel.bits[i] = true;
        }
        Ok(sel)
    }

    /// Bit `i` of `mask` selects center `i`.
    pub fn from_mask(n: usize, mask: u64) -> Self {
        debug_assert!(n <= 64);
        Self {
            bits: (0..n).map(|i| mask >> i & 1 == 1).collect(),
        }
    }

    pub fn to_mask(&self) -> u64 {
        debug_assert!(self.bits.len() <= 64);
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .fold(0, |m, (i, _)| m | 1 << i)
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn set(&mut self, i: usize, value: bool) {
        self.bits[i] = value;
    }

    pub fn with(&self, i: usize, value: bool) -> Self {
        let mut s = self.clone();
        s.bits[i] = value;
        s
    }

    /// The selected set `K = {i | a_i = 1}` in ascending order.
    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.bits.iter().enumerate().filter_map(|(i, b)| b.then_some(i))
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn none_selected(&self) -> bool {
        !self.bits.iter().any(|b| *b)
    }

    /// Renders as a string of `0`/`1`, center 0 first.
    pub fn to_bit_string(&self) -> String {
        self.bits.iter().map(|b| if *b { '1' } else { '0' }).collect()
    }

    pub fn parse_bit_string(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(format!(
                    "selection bit {other:?} is not 0/1"
                ))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }
}

pub fn carbon_per_center(
    energy: &EnergyModel,
    trace: &CarbonTrace,
    t: usize,
    center: usize,
    selected: bool,
) -> Result<f64> {
    Ok(trace.intensity(t, center)? * energy.energy_per_slot(center, selected)?)
}

/// Total slot footprint `sum_i beta_i^t (E_i^c + a_i E_i^s)`.
pub fn carbon_total(
    energy: &EnergyModel,
    trace: &CarbonTrace,
    t: usize,
    selection: &Selection,
) -> Result<f64> {
    let beta = trace.slot(t)?;
    check_width(energy, beta.len(), selection.len())?;
    Ok(beta
        .iter()
        .zip(energy.static_kwh.iter().zip(&energy.active_kwh))
        .zip(selection.bits())
        .map(|((b, (ec, es)), a)| b * (ec + if *a { *es } else { 0.0 }))
        .sum())
}

/// Carbon of the all-idle slot, charged regardless of the decision.
pub fn static_floor(energy: &EnergyModel, trace: &CarbonTrace, t: usize) -> Result<f64> {
    carbon_total(energy, trace, t, &Selection::empty(energy.n_centers()))
}

/// Per-center incremental carbon `beta_i^t E_i^s` of selecting center i.
pub fn incremental_costs(energy: &EnergyModel, trace: &CarbonTrace, t: usize) -> Result<Vec<f64>> {
    let beta = trace.slot(t)?;
    check_width(energy, beta.len(), energy.n_centers())?;
    Ok(beta.iter().zip(&energy.active_kwh).map(|(b, e)| b * e).collect())
}

fn check_width(energy: &EnergyModel, trace_n: usize, sel_n: usize) -> Result<()> {
    let n = energy.n_centers();
    if trace_n != n || sel_n != n {
        return Err(Error::DimensionMismatch(format!(
            "energy model has {n} centers, trace {trace_n}, selection {sel_n}"
        )));
    }
    Ok(())
}
