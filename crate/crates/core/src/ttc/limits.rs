use std::fmt;

use serde::{Deserialize, Serialize};

use crate::grid::{Network, PowerFlowSolution};

/// Binding-limit vocabulary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LimitKind {
    #[serde(rename = "voltage")]
    Voltage,
    #[serde(rename = "thermal")]
    Thermal,
    #[serde(rename = "gen-P")]
    GenP,
    #[serde(rename = "gen-Q")]
    GenQ,
    #[serde(rename = "diverged")]
    Diverged,
    #[serde(rename = "islanded")]
    Islanded,
}

impl LimitKind {
    pub fn as_str(self) -> &'static str {
        match self {
            LimitKind::Voltage => "voltage",
            LimitKind::Thermal => "thermal",
            LimitKind::GenP => "gen-P",
            LimitKind::GenQ => "gen-Q",
            LimitKind::Diverged => "diverged",
            LimitKind::Islanded => "islanded",
        }
    }
}

impl fmt::Display for LimitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub kind: LimitKind,
    /// Bus, branch or generator position in the network tables.
    pub element: usize,
    pub value: f64,
    pub limit: f64,
}

impl Violation {
    /// Excess beyond the limit, relative to the limit's size (at least 1).
    pub fn relative_excess(&self) -> f64 {
        (self.value - self.limit).abs() / self.limit.abs().max(1.0)
    }
}

/// Operating limits in network-table order. Unlimited entries are infinite.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSet {
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    /// MVA per branch.
    pub s_max: Vec<f64>,
    pub p_min: Vec<f64>,
    pub p_max: Vec<f64>,
    pub q_min: Vec<f64>,
    pub q_max: Vec<f64>,
}

/// Study-level adjustments applied on top of the network's own limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LimitOverrides {
    /// Replaces every bus's lower voltage limit.
    pub v_min: Option<f64>,
    pub v_max: Option<f64>,
    /// Multiplies every finite branch rating.
    pub rating_scale: f64,
    /// Rating multiplier under contingencies (emergency ratings).
    pub contingency_rating_scale: Option<f64>,
    pub check_gen_q: bool,
}

impl Default for LimitOverrides {
    fn default() -> Self {
        LimitOverrides { v_min: None, v_max: None, rating_scale: 1.0, contingency_rating_scale: None, check_gen_q: true }
    }
}

impl LimitSet {
    pub fn from_network(net: &Network, ov: &LimitOverrides, contingency: bool) -> LimitSet {
        let scale = if contingency { ov.contingency_rating_scale.unwrap_or(ov.rating_scale) } else { ov.rating_scale };
        let gens = &net.generators;
        LimitSet {
            v_min: net.buses.iter().map(|b| ov.v_min.unwrap_or(b.v_min)).collect(),
            v_max: net.buses.iter().map(|b| ov.v_max.unwrap_or(b.v_max)).collect(),
            s_max: net.branches.iter().map(|b| if b.rate_a > 0.0 { b.rate_a * scale } else { f64::INFINITY }).collect(),
            p_min: gens.iter().map(|g| g.p_min).collect(),
            p_max: gens.iter().map(|g| g.p_max).collect(),
            q_min: gens.iter().map(|g| if ov.check_gen_q { g.q_min } else { f64::NEG_INFINITY }).collect(),
            q_max: gens.iter().map(|g| if ov.check_gen_q { g.q_max } else { f64::INFINITY }).collect(),
        }
    }

    /// Only the network's own limits.
    pub fn of(net: &Network) -> LimitSet {
        LimitSet::from_network(net, &LimitOverrides::default(), false)
    }
}

const VOLTAGE_TOL: f64 = 1e-6;
const POWER_TOL: f64 = 1e-6;

/// Every violated limit of a converged solution; empty means feasible.
pub fn check_limits(net: &Network, sol: &PowerFlowSolution, limits: &LimitSet) -> Vec<Violation> {
    let mut out = Vec::new();
    for (i, &vm) in sol.vm.iter().enumerate() {
        if vm < limits.v_min[i] - VOLTAGE_TOL {
            out.push(Violation { kind: LimitKind::Voltage, element: i, value: vm, limit: limits.v_min[i] });
        } else if vm > limits.v_max[i] + VOLTAGE_TOL {
            out.push(Violation { kind: LimitKind::Voltage, element: i, value: vm, limit: limits.v_max[i] });
        }
    }
    for (k, br) in net.branches.iter().enumerate() {
        let s = sol.branch_loading(k);
        if br.in_service && s > limits.s_max[k] + POWER_TOL {
            out.push(Violation { kind: LimitKind::Thermal, element: k, value: s, limit: limits.s_max[k] });
        }
    }
    for k in (0..net.generators.len()).filter(|&k| net.generators[k].in_service) {
        let (p, q) = (sol.pg[k], sol.qg[k]);
        if p > limits.p_max[k] + POWER_TOL {
            out.push(Violation { kind: LimitKind::GenP, element: k, value: p, limit: limits.p_max[k] });
        } else if p < limits.p_min[k] - POWER_TOL {
            out.push(Violation { kind: LimitKind::GenP, element: k, value: p, limit: limits.p_min[k] });
        }
        if q > limits.q_max[k] + POWER_TOL {
            out.push(Violation { kind: LimitKind::GenQ, element: k, value: q, limit: limits.q_max[k] });
        } else if q < limits.q_min[k] - POWER_TOL {
            out.push(Violation { kind: LimitKind::GenQ, element: k, value: q, limit: limits.q_min[k] });
        }
    }
    out
}
