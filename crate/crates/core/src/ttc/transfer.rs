//! Repeated power flow: geometric step-up to bracket the largest feasible
//! transfer, then bisection, warm-starting every solve from the last
//! feasible point.

use serde::{Deserialize, Serialize};

use super::{check_limits, LimitKind, LimitOverrides, LimitSet, TransferDirection, TtcError};
use crate::grid::{apply_sample, check_connectivity, solve_power_flow_from, Network, PfOptions, PowerFlowSolution};
use crate::par::Parallelism;
use crate::pce::ResponseModel;

/// What to do with a case whose transfer path is cut by outages.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IslandingPolicy {
    /// The case supports no transfer.
    #[default]
    Zero,
    /// The case is left out of the minimum.
    Skip,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TtcOptions {
    /// Final bracket width, MW.
    pub lambda_tol: f64,
    /// First step of the bracketing search, MW; doubles after each success.
    pub initial_step: f64,
    /// Give up (as unbounded) beyond this transfer, MW.
    pub max_lambda: f64,
    pub islanding: IslandingPolicy,
    pub enforce_q_limits: bool,
}

impl Default for TtcOptions {
    fn default() -> Self {
        TtcOptions {
            lambda_tol: 0.1,
            initial_step: 10.0,
            max_lambda: 1e5,
            islanding: IslandingPolicy::Zero,
            enforce_q_limits: true,
        }
    }
}

impl TtcOptions {
    pub fn validate(&self) -> Result<(), TtcError> {
        if !(self.lambda_tol > 0.0 && self.initial_step > 0.0 && self.max_lambda > self.initial_step) {
            return Err(TtcError::InvalidOptions("need lambda_tol > 0 and 0 < initial_step < max_lambda".into()));
        }
        Ok(())
    }

    pub fn power_flow(&self) -> PfOptions {
        PfOptions { enforce_q_limits: self.enforce_q_limits, ..PfOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyCase {
    pub label: String,
    /// Branch positions taken out of service together.
    pub outages: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct TransferResult {
    /// Largest feasible transfer found, MW.
    pub lambda: f64,
    /// Limit violated just beyond `lambda`.
    pub binding: LimitKind,
    /// False when the zero-transfer point already fails.
    pub base_feasible: bool,
    /// Operating point at `lambda`.
    pub solution: Option<PowerFlowSolution>,
}

struct Source {
    bus: usize,
    weight: f64,
    headroom: f64,
    slack: bool,
}

/// One network instance prepared for transfer evaluation.
///
/// Dead buses (no load, not on the transfer path) cut off by outages are
/// dropped before solving, so bus positions may differ from the input.
pub struct TransferStudy {
    net: Network,
    dir: TransferDirection,
    limits: LimitSet,
    pf: PfOptions,
    sources: Vec<Source>,
}

fn restrict(net: &Network, keep: &[usize]) -> Network {
    let kept_ids: Vec<u32> = keep.iter().map(|&i| net.buses[i].id).collect();
    let has = |id: u32| kept_ids.contains(&id);
    let mut branch_map = vec![None; net.branches.len()];
    let mut branches = Vec::new();
    for (k, br) in net.branches.iter().enumerate() {
        if has(br.from) && has(br.to) {
            branch_map[k] = Some(branches.len());
            branches.push(br.clone());
        }
    }
    Network {
        name: net.name.clone(),
        base_mva: net.base_mva,
        buses: keep.iter().map(|&i| net.buses[i].clone()).collect(),
        generators: net.generators.iter().filter(|g| has(g.bus)).cloned().collect(),
        branches,
        wind_farms: net.wind_farms.iter().filter(|w| has(w.bus)).cloned().collect(),
        solar_plants: net.solar_plants.iter().filter(|s| has(s.bus)).cloned().collect(),
        ultc: net
            .ultc
            .iter()
            .filter_map(|u| branch_map[u.branch].map(|b| crate::grid::Ultc { branch: b, ..u.clone() }))
            .collect(),
        inputs: Default::default(),
    }
}

impl TransferStudy {
    /// `None` when outages cut a load or a transfer bus off the slack bus.
    pub fn new(
        net: &Network,
        dir: &TransferDirection,
        overrides: &LimitOverrides,
        contingency: bool,
        opts: &TtcOptions,
    ) -> Result<Option<TransferStudy>, TtcError> {
        opts.validate()?;
        for bus in dir.buses() {
            if net.bus_index(bus).is_none() {
                return Err(TtcError::UnknownBus(bus));
            }
        }
        let islands = check_connectivity(net);
        let net = if islands.count() > 1 {
            let main = islands.of(net.slack_index()).to_vec();
            let dead = (0..net.buses.len()).filter(|i| main.binary_search(i).is_err());
            let on_path: Vec<u32> = dir.buses().collect();
            for i in dead {
                let b = &net.buses[i];
                if b.pd != 0.0 || b.qd != 0.0 || on_path.contains(&b.id) {
                    return Ok(None);
                }
            }
            restrict(net, &main)
        } else {
            net.clone()
        };
        let slack = net.slack_index();
        let sources = dir
            .source_buses()
            .map(|(id, weight)| {
                let bus = net.bus_index(id).expect("checked above");
                let headroom = net
                    .generators
                    .iter()
                    .filter(|g| g.in_service && g.bus == id)
                    .map(|g| (g.p_max - g.pg).max(0.0))
                    .sum();
                Source { bus, weight, headroom, slack: bus == slack }
            })
            .collect();
        let limits = LimitSet::from_network(&net, overrides, contingency);
        Ok(Some(TransferStudy { net, dir: dir.clone(), limits, pf: opts.power_flow(), sources }))
    }

    pub fn network(&self) -> &Network {
        &self.net
    }

    pub fn limits(&self) -> &LimitSet {
        &self.limits
    }

    /// Network after moving `lambda` MW along the direction. Source
    /// increments are shared in proportion to the direction and capped at
    /// each bus's headroom; `Err(GenP)` once every source is capped.
    pub fn network_at(&self, lambda: f64) -> Result<Network, LimitKind> {
        let mut net = self.net.clone();
        for e in &self.dir.entries {
            let i = net.bus_index(e.bus).expect("checked at construction");
            net.buses[i].pd += lambda * e.d_pl;
            net.buses[i].qd += lambda * e.d_ql;
        }
        let total: f64 = lambda * self.sources.iter().map(|s| s.weight).sum::<f64>();
        let mut alloc = vec![0.0; self.sources.len()];
        let mut open: Vec<bool> = self.sources.iter().map(|s| s.slack || s.headroom > 0.0).collect();
        let mut remaining = total;
        while remaining > 1e-12 {
            let wsum: f64 = self.sources.iter().zip(&open).filter(|(_, o)| **o).map(|(s, _)| s.weight).sum();
            if wsum <= 0.0 {
                break;
            }
            let over: Vec<usize> = (0..self.sources.len())
                .filter(|&k| open[k] && !self.sources[k].slack)
                .filter(|&k| alloc[k] + remaining * self.sources[k].weight / wsum > self.sources[k].headroom)
                .collect();
            if over.is_empty() {
                for k in (0..self.sources.len()).filter(|&k| open[k]) {
                    alloc[k] += remaining * self.sources[k].weight / wsum;
                }
                remaining = 0.0;
            } else {
                for k in over {
                    remaining -= self.sources[k].headroom - alloc[k];
                    alloc[k] = self.sources[k].headroom;
                    open[k] = false;
                }
            }
        }
        if remaining > 1e-9 {
            return Err(LimitKind::GenP);
        }
        for (s, &a) in self.sources.iter().zip(&alloc) {
            if s.slack || a == 0.0 {
                continue;
            }
            let id = net.buses[s.bus].id;
            let gens: Vec<usize> =
                (0..net.generators.len()).filter(|&k| net.generators[k].in_service && net.generators[k].bus == id).collect();
            for &k in &gens {
                let g = &mut net.generators[k];
                g.pg += a * (g.p_max - g.pg).max(0.0) / s.headroom;
            }
        }
        Ok(net)
    }

    /// Solve at `lambda` and check limits; `Err` carries the binding kind.
    pub fn check(&self, lambda: f64, warm: Option<&PowerFlowSolution>) -> Result<PowerFlowSolution, LimitKind> {
        let net = self.network_at(lambda)?;
        let sol = solve_power_flow_from(&net, &self.pf, warm).map_err(|_| LimitKind::Diverged)?;
        let worst = check_limits(&net, &sol, &self.limits)
            .into_iter()
            .max_by(|a, b| a.relative_excess().total_cmp(&b.relative_excess()));
        match worst {
            Some(v) => Err(v.kind),
            None => Ok(sol),
        }
    }

    /// Largest feasible transfer to within `opts.lambda_tol`.
    ///
    /// On return, `check(lambda + lambda_tol, solution)` fails.
    pub fn max_transfer(&self, opts: &TtcOptions) -> Result<TransferResult, TtcError> {
        const MAX_RESTARTS: usize = 20;
        let tol = opts.lambda_tol;
        let mut lo_sol = match self.check(0.0, None) {
            Ok(s) => s,
            Err(kind) => return Ok(TransferResult { lambda: 0.0, binding: kind, base_feasible: false, solution: None }),
        };
        let mut lo = 0.0;
        let mut binding = LimitKind::Diverged;
        for _ in 0..MAX_RESTARTS {
            let mut step = opts.initial_step;
            let mut hi = loop {
                let trial = lo + step;
                if trial > opts.max_lambda {
                    return Err(TtcError::Unbounded(opts.max_lambda));
                }
                match self.check(trial, Some(&lo_sol)) {
                    Ok(s) => {
                        lo = trial;
                        lo_sol = s;
                        step *= 2.0;
                    }
                    Err(kind) => {
                        binding = kind;
                        break trial;
                    }
                }
            };
            while hi - lo > tol {
                let mid = 0.5 * (lo + hi);
                match self.check(mid, Some(&lo_sol)) {
                    Ok(s) => {
                        lo = mid;
                        lo_sol = s;
                    }
                    Err(kind) => {
                        hi = mid;
                        binding = kind;
                    }
                }
            }
            match self.check(lo + tol, Some(&lo_sol)) {
                Err(_) => break,
                // Feasibility is not monotone here; keep climbing.
                Ok(s) => {
                    lo += tol;
                    lo_sol = s;
                }
            }
        }
        Ok(TransferResult { lambda: lo, binding, base_feasible: true, solution: Some(lo_sol) })
    }
}

/// Maximum transfer of the intact (base) case of `net`.
pub fn max_transfer(
    net: &Network,
    dir: &TransferDirection,
    overrides: &LimitOverrides,
    opts: &TtcOptions,
) -> Result<TransferResult, TtcError> {
    match TransferStudy::new(net, dir, overrides, false, opts)? {
        Some(study) => study.max_transfer(opts),
        None => Ok(TransferResult { lambda: 0.0, binding: LimitKind::Islanded, base_feasible: false, solution: None }),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseOutcome {
    pub label: String,
    pub lambda: f64,
    pub binding: LimitKind,
    /// Excluded from the minimum by the islanding policy.
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TtcOutcome {
    /// Base case first, then contingencies in list order.
    pub cases: Vec<CaseOutcome>,
    pub lambda_ttc: f64,
    pub binding_case: usize,
}

/// Transfer capability: the minimum over the base case and contingencies.
pub fn ttc_overall(
    net: &Network,
    dir: &TransferDirection,
    overrides: &LimitOverrides,
    contingencies: &[ContingencyCase],
    opts: &TtcOptions,
    par: Parallelism,
) -> Result<TtcOutcome, TtcError> {
    let base = ContingencyCase { label: "base".into(), outages: Vec::new() };
    let all: Vec<&ContingencyCase> = std::iter::once(&base).chain(contingencies).collect();
    let cases = par.try_map(all.len(), |k| -> Result<CaseOutcome, TtcError> {
        let case = all[k];
        let instance = net.with_outages(&case.outages)?;
        let study = TransferStudy::new(&instance, dir, overrides, k > 0, opts)?;
        let (lambda, binding, islanded) = match study {
            Some(s) => {
                let r = s.max_transfer(opts)?;
                (r.lambda, r.binding, false)
            }
            None => (0.0, LimitKind::Islanded, true),
        };
        Ok(CaseOutcome {
            label: case.label.clone(),
            lambda,
            binding,
            skipped: islanded && opts.islanding == IslandingPolicy::Skip,
        })
    })?;
    let (binding_case, lambda_ttc) = cases
        .iter()
        .enumerate()
        .filter(|(_, c)| !c.skipped)
        .fold((0, f64::INFINITY), |(bk, bl), (k, c)| if c.lambda < bl { (k, c.lambda) } else { (bk, bl) });
    let lambda_ttc = if lambda_ttc.is_finite() { lambda_ttc } else { 0.0 };
    Ok(TtcOutcome { cases, lambda_ttc, binding_case })
}

/// Sample row to transfer capability: apply the row to the network, then
/// run [`ttc_overall`].
#[derive(Debug, Clone)]
pub struct TtcEvaluator {
    pub net: Network,
    pub direction: TransferDirection,
    pub overrides: LimitOverrides,
    pub contingencies: Vec<ContingencyCase>,
    pub options: TtcOptions,
}

impl TtcEvaluator {
    pub fn outcome(&self, row: &[f64]) -> crate::Result<TtcOutcome> {
        let instance = apply_sample(&self.net, &self.net.inputs, row)?;
        Ok(ttc_overall(&instance, &self.direction, &self.overrides, &self.contingencies, &self.options, Parallelism::Sequential)?)
    }
}

impl ResponseModel for TtcEvaluator {
    fn evaluate(&self, row: &[f64]) -> crate::Result<f64> {
        Ok(self.outcome(row)?.lambda_ttc)
    }
}
