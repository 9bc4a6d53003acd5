//! Full Newton AC power flow in polar coordinates, with generator reactive
//! limits (PV to PQ switching) and an outer tap-changer loop.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_connectivity, BusKind, GridError, Network};

type C = Complex<f64>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PfOptions {
    /// Largest accepted bus mismatch, pu.
    pub tol: f64,
    pub max_iter: usize,
    pub enforce_q_limits: bool,
    /// Cap on PV/PQ switching rounds and on tap-changer rounds.
    pub max_outer: usize,
}

impl Default for PfOptions {
    fn default() -> Self {
        PfOptions { tol: 1e-8, max_iter: 50, enforce_q_limits: true, max_outer: 30 }
    }
}

/// Converged operating point. Powers are in MW / MVAr.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub vm: Vec<f64>,
    /// Radians; zero at the slack bus.
    pub va: Vec<f64>,
    pub pg: Vec<f64>,
    pub qg: Vec<f64>,
    pub p_from: Vec<f64>,
    pub q_from: Vec<f64>,
    pub p_to: Vec<f64>,
    pub q_to: Vec<f64>,
    /// Bus types after reactive-limit switching.
    pub bus_kinds: Vec<BusKind>,
    /// Branch turns ratios after tap-changer action.
    pub taps: Vec<f64>,
    /// Newton iterations summed over all inner solves.
    pub iterations: usize,
    /// Largest bus mismatch of the final inner solve, pu.
    pub max_mismatch: f64,
}

impl PowerFlowSolution {
    /// Larger of the two end apparent powers of branch `k`, MVA.
    pub fn branch_loading(&self, k: usize) -> f64 {
        self.p_from[k].hypot(self.q_from[k]).max(self.p_to[k].hypot(self.q_to[k]))
    }
}

struct BranchAdmittance {
    from: usize,
    to: usize,
    yff: C,
    yft: C,
    ytf: C,
    ytt: C,
}

fn branch_admittances(net: &Network, taps: &[f64]) -> Vec<Option<BranchAdmittance>> {
    let lookup = net.bus_lookup();
    net.branches
        .iter()
        .zip(taps)
        .map(|(br, &t)| {
            if !br.in_service {
                return None;
            }
            let ys = C::new(1.0, 0.0) / C::new(br.r, br.x);
            let half_b = C::new(0.0, br.b / 2.0);
            let tap = C::from_polar(t, br.shift.to_radians());
            Some(BranchAdmittance {
                from: lookup[&br.from],
                to: lookup[&br.to],
                yff: (ys + half_b) / (t * t),
                yft: -ys / tap.conj(),
                ytf: -ys / tap,
                ytt: ys + half_b,
            })
        })
        .collect()
}

fn build_ybus(net: &Network, adm: &[Option<BranchAdmittance>]) -> DMatrix<C> {
    let n = net.buses.len();
    let mut y = DMatrix::from_element(n, n, C::new(0.0, 0.0));
    for a in adm.iter().flatten() {
        y[(a.from, a.from)] += a.yff;
        y[(a.from, a.to)] += a.yft;
        y[(a.to, a.from)] += a.ytf;
        y[(a.to, a.to)] += a.ytt;
    }
    for (i, b) in net.buses.iter().enumerate() {
        y[(i, i)] += C::new(b.gs, b.bs) / net.base_mva;
    }
    y
}

fn calc_power(y: &DMatrix<C>, v: &[C]) -> Vec<C> {
    let vv = DVector::from_column_slice(v);
    let i = y * vv;
    v.iter().zip(i.iter()).map(|(vk, ik)| vk * ik.conj()).collect()
}

/// Newton iterations on the current bus types; `v` holds the start point
/// and receives the solution. Returns (iterations, final mismatch).
fn newton(y: &DMatrix<C>, sbus: &[C], kinds: &[BusKind], v: &mut [C], opts: &PfOptions) -> Result<(usize, f64), GridError> {
    let pvpq: Vec<usize> = (0..v.len()).filter(|&i| kinds[i] != BusKind::Slack).collect();
    let pq: Vec<usize> = (0..v.len()).filter(|&i| kinds[i] == BusKind::Pq).collect();
    let (na, nm) = (pvpq.len(), pq.len());
    let mut vm: Vec<f64> = v.iter().map(|c| c.norm()).collect();
    let mut va: Vec<f64> = v.iter().map(|c| c.arg()).collect();

    let residual = |v: &[C]| -> (DVector<f64>, Vec<C>, f64) {
        let s = calc_power(y, v);
        let mut f = DVector::zeros(na + nm);
        for (r, &i) in pvpq.iter().enumerate() {
            f[r] = s[i].re - sbus[i].re;
        }
        for (r, &i) in pq.iter().enumerate() {
            f[na + r] = s[i].im - sbus[i].im;
        }
        let norm = f.amax();
        (f, s, norm)
    };

    let (mut f, _, mut norm) = residual(v);
    let mut it = 0;
    while !(norm < opts.tol) {
        if it >= opts.max_iter || !norm.is_finite() || norm > 1e10 {
            return Err(GridError::Diverged { iterations: it, mismatch: norm });
        }
        it += 1;
        let vv = DVector::from_column_slice(v);
        let ibus = y * &vv;
        let vnorm: Vec<C> = v.iter().map(|c| c / c.norm()).collect();
        // dS/dVa[i][k] = j V_i conj(d_ik I_i - Y_ik V_k)
        // dS/dVm[i][k] = V_i conj(Y_ik Vnorm_k) + d_ik conj(I_i) Vnorm_i
        let d_va = |i: usize, k: usize| {
            let inner = if i == k { ibus[i] } else { C::new(0.0, 0.0) } - y[(i, k)] * v[k];
            C::new(0.0, 1.0) * v[i] * inner.conj()
        };
        let d_vm = |i: usize, k: usize| {
            let diag = if i == k { ibus[i].conj() * vnorm[i] } else { C::new(0.0, 0.0) };
            v[i] * (y[(i, k)] * vnorm[k]).conj() + diag
        };
        let jac = DMatrix::from_fn(na + nm, na + nm, |r, c| {
            let (i, p_row) = if r < na { (pvpq[r], true) } else { (pq[r - na], false) };
            let val = if c < na { d_va(i, pvpq[c]) } else { d_vm(i, pq[c - na]) };
            if p_row {
                val.re
            } else {
                val.im
            }
        });
        let dx = jac.lu().solve(&f).ok_or(GridError::Diverged { iterations: it, mismatch: norm })?;
        for (r, &i) in pvpq.iter().enumerate() {
            va[i] -= dx[r];
        }
        for (r, &i) in pq.iter().enumerate() {
            vm[i] -= dx[na + r];
        }
        if vm.iter().any(|m| !(*m > 0.0)) {
            return Err(GridError::Diverged { iterations: it, mismatch: norm });
        }
        for i in 0..v.len() {
            v[i] = C::from_polar(vm[i], va[i]);
        }
        (f, _, norm) = residual(v);
    }
    Ok((it, norm))
}

/// Per-bus generator aggregates: (in-service count, set P, set Q, Q min, Q max, V set).
struct BusGen {
    count: usize,
    pg: f64,
    qg: f64,
    q_min: f64,
    q_max: f64,
    v_set: Option<f64>,
}

fn bus_generators(net: &Network) -> Vec<BusGen> {
    let lookup = net.bus_lookup();
    let mut out: Vec<BusGen> =
        net.buses.iter().map(|_| BusGen { count: 0, pg: 0.0, qg: 0.0, q_min: 0.0, q_max: 0.0, v_set: None }).collect();
    for g in net.generators.iter().filter(|g| g.in_service) {
        let b = &mut out[lookup[&g.bus]];
        b.count += 1;
        b.pg += g.pg;
        b.qg += g.qg;
        b.q_min += g.q_min;
        b.q_max += g.q_max;
        b.v_set.get_or_insert(g.v_set);
    }
    out
}

/// Specified complex injection per bus in pu. `fixed_q` overrides the
/// generator reactive output of buses switched to PQ.
fn specified_injection(net: &Network, gens: &[BusGen], fixed_q: &[Option<f64>]) -> Vec<C> {
    let ren = net.renewable_injections();
    net.buses
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let qg = fixed_q[i].unwrap_or(gens[i].qg);
            C::new(gens[i].pg - b.pd + ren[i].0, qg - b.qd + ren[i].1) / net.base_mva
        })
        .collect()
}

/// Solve from a flat start (voltage setpoints at generator buses).
pub fn solve_power_flow(net: &Network, opts: &PfOptions) -> Result<PowerFlowSolution, GridError> {
    solve_power_flow_from(net, opts, None)
}

/// Solve, starting from `warm` when it matches the network's shape.
pub fn solve_power_flow_from(
    net: &Network,
    opts: &PfOptions,
    warm: Option<&PowerFlowSolution>,
) -> Result<PowerFlowSolution, GridError> {
    let islands = check_connectivity(net);
    if islands.count() > 1 {
        return Err(GridError::Islanded { islands: islands.count() });
    }
    let n = net.buses.len();
    let gens = bus_generators(net);
    let base_kinds: Vec<BusKind> = net
        .buses
        .iter()
        .zip(&gens)
        .map(|(b, g)| if b.kind == BusKind::Pv && g.count == 0 { BusKind::Pq } else { b.kind })
        .collect();
    let set_vm: Vec<f64> = net.buses.iter().zip(&gens).map(|(b, g)| g.v_set.unwrap_or(b.vm)).collect();

    let warm = warm.filter(|w| w.vm.len() == n && w.taps.len() == net.branches.len());
    let mut v: Vec<C> = (0..n)
        .map(|i| {
            let (m, a) = match warm {
                Some(w) => (w.vm[i], w.va[i]),
                None => (1.0, 0.0),
            };
            let m = if base_kinds[i] == BusKind::Pq { m } else { set_vm[i] };
            C::from_polar(m, a)
        })
        .collect();
    let mut taps: Vec<f64> = match warm {
        Some(w) => w.taps.clone(),
        None => net.branches.iter().map(|b| b.ratio()).collect(),
    };
    let lookup = net.bus_lookup();
    let ren = net.renewable_injections();

    let mut total_iter = 0;
    let mut kinds = base_kinds.clone();
    let mut fixed_q: Vec<Option<f64>> = vec![None; n];
    let mut last_norm;
    let mut tap_round = 0;
    loop {
        let adm = branch_admittances(net, &taps);
        let y = build_ybus(net, &adm);
        let mut switch_round = 0;
        loop {
            let sbus = specified_injection(net, &gens, &fixed_q);
            let (it, norm) = newton(&y, &sbus, &kinds, &mut v, opts)?;
            total_iter += it;
            last_norm = norm;
            if !opts.enforce_q_limits || switch_round >= opts.max_outer {
                break;
            }
            switch_round += 1;
            let s = calc_power(&y, &v);
            let mut changed = false;
            for i in 0..n {
                if base_kinds[i] != BusKind::Pv {
                    continue;
                }
                let g = &gens[i];
                let needed = s[i].im * net.base_mva + net.buses[i].qd - ren[i].1;
                match (kinds[i], fixed_q[i]) {
                    (BusKind::Pv, _) if needed > g.q_max + 1e-9 => {
                        kinds[i] = BusKind::Pq;
                        fixed_q[i] = Some(g.q_max);
                        changed = true;
                    }
                    (BusKind::Pv, _) if needed < g.q_min - 1e-9 => {
                        kinds[i] = BusKind::Pq;
                        fixed_q[i] = Some(g.q_min);
                        changed = true;
                    }
                    (BusKind::Pq, Some(q)) => {
                        let vm = v[i].norm();
                        let back = (q == g.q_max && vm > set_vm[i] + 1e-9) || (q == g.q_min && vm < set_vm[i] - 1e-9);
                        if back {
                            kinds[i] = BusKind::Pv;
                            fixed_q[i] = None;
                            v[i] = C::from_polar(set_vm[i], v[i].arg());
                            changed = true;
                        }
                    }
                    _ => {}
                }
            }
            if !changed {
                break;
            }
        }

        if tap_round >= opts.max_outer || !adjust_taps(net, &lookup, &v, &mut taps) {
            let s = calc_power(&y, &v);
            return Ok(assemble(net, &adm, &kinds, &fixed_q, &v, &s, taps, total_iter, last_norm));
        }
        tap_round += 1;
    }
}

/// Move out-of-band tap changers toward the middle of their band.
/// Returns whether any tap moved.
fn adjust_taps(net: &Network, lookup: &std::collections::HashMap<u32, usize>, v: &[C], taps: &mut [f64]) -> bool {
    let mut moved = false;
    for u in &net.ultc {
        let br = &net.branches[u.branch];
        if !br.in_service {
            continue;
        }
        let vm = v[lookup[&u.controlled_bus]].norm();
        if vm >= u.v_lo && vm <= u.v_hi {
            continue;
        }
        let target = 0.5 * (u.v_lo + u.v_hi);
        let t = taps[u.branch];
        // Voltage on the tap side rises with the ratio, on the far side it falls.
        let ideal = if u.controlled_bus == br.to { t * vm / target } else { t * target / vm };
        let next = if u.continuous {
            ideal
        } else {
            let steps = ((ideal - t) / u.tap_step).round();
            let steps = if steps == 0.0 { (ideal - t).signum() } else { steps };
            t + steps * u.tap_step
        };
        let next = next.clamp(u.tap_min, u.tap_max);
        if (next - t).abs() > 1e-12 {
            taps[u.branch] = next;
            moved = true;
        }
    }
    moved
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    net: &Network,
    adm: &[Option<BranchAdmittance>],
    kinds: &[BusKind],
    fixed_q: &[Option<f64>],
    v: &[C],
    s: &[C],
    taps: Vec<f64>,
    iterations: usize,
    max_mismatch: f64,
) -> PowerFlowSolution {
    let base = net.base_mva;
    let lookup = net.bus_lookup();
    let ren = net.renewable_injections();
    let slack = net.slack_index();
    let mut pg: Vec<f64> = net.generators.iter().map(|g| if g.in_service { g.pg } else { 0.0 }).collect();
    let mut qg: Vec<f64> = net.generators.iter().map(|g| if g.in_service { g.qg } else { 0.0 }).collect();

    for (i, b) in net.buses.iter().enumerate() {
        let at_bus: Vec<usize> =
            (0..net.generators.len()).filter(|&k| net.generators[k].in_service && lookup[&net.generators[k].bus] == i).collect();
        if at_bus.is_empty() {
            continue;
        }
        if i == slack {
            let p_total = s[i].re * base + b.pd - ren[i].0;
            let others: f64 = at_bus[1..].iter().map(|&k| pg[k]).sum();
            pg[at_bus[0]] = p_total - others;
        }
        let regulated = kinds[i] != BusKind::Pq || fixed_q[i].is_some();
        if regulated {
            let q_total = match fixed_q[i] {
                Some(q) if kinds[i] == BusKind::Pq => q,
                _ => s[i].im * base + b.qd - ren[i].1,
            };
            let ranges: Vec<f64> = at_bus.iter().map(|&k| net.generators[k].q_max - net.generators[k].q_min).collect();
            let total_range: f64 = ranges.iter().sum();
            for (j, &k) in at_bus.iter().enumerate() {
                qg[k] = if total_range.is_finite() && total_range > 0.0 {
                    q_total * ranges[j] / total_range
                } else {
                    q_total / at_bus.len() as f64
                };
            }
        }
    }

    let nb = net.branches.len();
    let (mut p_from, mut q_from, mut p_to, mut q_to) = (vec![0.0; nb], vec![0.0; nb], vec![0.0; nb], vec![0.0; nb]);
    for (k, a) in adm.iter().enumerate() {
        if let Some(a) = a {
            let i_f = a.yff * v[a.from] + a.yft * v[a.to];
            let i_t = a.ytf * v[a.from] + a.ytt * v[a.to];
            let sf = v[a.from] * i_f.conj() * base;
            let st = v[a.to] * i_t.conj() * base;
            (p_from[k], q_from[k], p_to[k], q_to[k]) = (sf.re, sf.im, st.re, st.im);
        }
    }
    let slack_angle = v[slack].arg();
    PowerFlowSolution {
        vm: v.iter().map(|c| c.norm()).collect(),
        va: v.iter().map(|c| c.arg() - slack_angle).collect(),
        pg,
        qg,
        p_from,
        q_from,
        p_to,
        q_to,
        bus_kinds: kinds.to_vec(),
        taps,
        iterations,
        max_mismatch,
    }
}

/// Largest bus power mismatch (pu) of `sol` against the network equations,
/// using the solution's realized generator outputs and taps.
pub fn mismatch(net: &Network, sol: &PowerFlowSolution) -> f64 {
    let adm = branch_admittances(net, &sol.taps);
    let y = build_ybus(net, &adm);
    let v: Vec<C> = sol.vm.iter().zip(&sol.va).map(|(&m, &a)| C::from_polar(m, a)).collect();
    let s = calc_power(&y, &v);
    let lookup = net.bus_lookup();
    let ren = net.renewable_injections();
    let mut spec: Vec<C> = net.buses.iter().zip(&ren).map(|(b, r)| C::new(r.0 - b.pd, r.1 - b.qd)).collect();
    for (k, g) in net.generators.iter().enumerate().filter(|(_, g)| g.in_service) {
        spec[lookup[&g.bus]] += C::new(sol.pg[k], sol.qg[k]);
    }
    s.iter()
        .zip(&spec)
        .map(|(sc, sp)| {
            let d = sc - sp / net.base_mva;
            d.re.abs().max(d.im.abs())
        })
        .fold(0.0, f64::max)
}
