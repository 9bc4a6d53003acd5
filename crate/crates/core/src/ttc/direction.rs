use serde::{Deserialize, Serialize};

use super::TtcError;
use crate::grid::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Participant {
    pub bus: u32,
    pub share: f64,
}

/// Transfer of interest: generation rises at `sources`, load at `sinks`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transaction {
    pub sources: Vec<Participant>,
    pub sinks: Vec<Participant>,
    /// Power factor of the added sink load (lagging).
    #[serde(default = "unity")]
    pub sink_power_factor: f64,
}

fn unity() -> f64 {
    1.0
}

/// Per-bus increments per MW of transfer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionEntry {
    pub bus: u32,
    pub d_pg: f64,
    pub d_pl: f64,
    pub d_ql: f64,
}

/// Load-generation variation vector. Normalized so that one unit of the
/// transfer parameter adds 1 MW of sink load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferDirection {
    pub entries: Vec<DirectionEntry>,
}

impl TransferDirection {
    pub fn buses(&self) -> impl Iterator<Item = u32> + '_ {
        self.entries.iter().map(|e| e.bus)
    }

    pub fn source_buses(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.entries.iter().filter(|e| e.d_pg > 0.0).map(|e| (e.bus, e.d_pg))
    }

    /// All increments multiplied by `k`; the result is no longer normalized.
    #[cfg(test)]
    pub(crate) fn scaled(&self, k: f64) -> TransferDirection {
        TransferDirection {
            entries: self
                .entries
                .iter()
                .map(|e| DirectionEntry { bus: e.bus, d_pg: k * e.d_pg, d_pl: k * e.d_pl, d_ql: k * e.d_ql })
                .collect(),
        }
    }
}

fn check_side(side: &'static str, parts: &[Participant], net: &Network) -> Result<(), TtcError> {
    if parts.is_empty() {
        return Err(TtcError::EmptySide(side));
    }
    let sum: f64 = parts.iter().map(|p| p.share).sum();
    if parts.iter().any(|p| !(p.share > 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(TtcError::InvalidShares { side, sum });
    }
    match parts.iter().find(|p| net.bus_index(p.bus).is_none()) {
        Some(p) => Err(TtcError::UnknownBus(p.bus)),
        None => Ok(()),
    }
}

pub fn build_direction(t: &Transaction, net: &Network) -> Result<TransferDirection, TtcError> {
    check_side("source", &t.sources, net)?;
    check_side("sink", &t.sinks, net)?;
    let pf = t.sink_power_factor;
    if !(pf > 0.0 && pf <= 1.0) {
        return Err(TtcError::InvalidPowerFactor(pf));
    }
    let tan_phi = (1.0 - pf * pf).sqrt() / pf;
    let mut entries: Vec<DirectionEntry> = Vec::new();
    let mut slot = |bus: u32| -> usize {
        match entries.iter().position(|e| e.bus == bus) {
            Some(i) => i,
            None => {
                entries.push(DirectionEntry { bus, d_pg: 0.0, d_pl: 0.0, d_ql: 0.0 });
                entries.len() - 1
            }
        }
    };
    let mut idx = Vec::new();
    for p in &t.sources {
        idx.push((slot(p.bus), p.share, true));
    }
    for p in &t.sinks {
        idx.push((slot(p.bus), p.share, false));
    }
    for (i, share, is_source) in idx {
        if is_source {
            entries[i].d_pg += share;
        } else {
            entries[i].d_pl += share;
            entries[i].d_ql += share * tan_phi;
        }
    }
    Ok(TransferDirection { entries })
}
