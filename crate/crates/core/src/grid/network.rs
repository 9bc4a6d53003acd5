use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::sample::{InputMapping, InputRole};
use super::GridError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Pv,
    Pq,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bus {
    pub id: u32,
    pub kind: BusKind,
    /// Load, MW.
    #[serde(default)]
    pub pd: f64,
    /// Load, MVAr.
    #[serde(default)]
    pub qd: f64,
    /// Shunt conductance, MW at 1 pu.
    #[serde(default)]
    pub gs: f64,
    /// Shunt susceptance, MVAr at 1 pu.
    #[serde(default)]
    pub bs: f64,
    #[serde(default = "one")]
    pub vm: f64,
    /// Degrees.
    #[serde(default)]
    pub va: f64,
    #[serde(default = "v_min_default")]
    pub v_min: f64,
    #[serde(default = "v_max_default")]
    pub v_max: f64,
    #[serde(default)]
    pub base_kv: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Generator {
    pub bus: u32,
    #[serde(default)]
    pub pg: f64,
    #[serde(default)]
    pub qg: f64,
    #[serde(default = "inf", with = "upper_bound")]
    pub q_max: f64,
    #[serde(default = "neg_inf", with = "lower_bound")]
    pub q_min: f64,
    #[serde(default = "one")]
    pub v_set: f64,
    #[serde(default = "inf", with = "upper_bound")]
    pub p_max: f64,
    #[serde(default)]
    pub p_min: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Branch {
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    /// Total line charging susceptance, pu.
    #[serde(default)]
    pub b: f64,
    /// Thermal rating, MVA; 0 means unlimited.
    #[serde(default)]
    pub rate_a: f64,
    /// Off-nominal turns ratio at the `from` end; 0 means 1.
    #[serde(default)]
    pub tap: f64,
    /// Phase shift, degrees.
    #[serde(default)]
    pub shift: f64,
    #[serde(default = "yes")]
    pub in_service: bool,
}

impl Branch {
    pub fn ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }
}

/// Wind farm on a wind-speed input. Produces `wind_power(wind_speed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindFarm {
    pub name: String,
    pub bus: u32,
    pub v_in: f64,
    pub v_rated: f64,
    pub v_out: f64,
    /// Rated output, MW.
    pub p_rated: f64,
    #[serde(default = "pf_default")]
    pub power_factor: f64,
    /// Current wind speed, m/s.
    #[serde(default)]
    pub wind_speed: f64,
}

/// Photovoltaic plant on a radiation input, unity power factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolarPlant {
    pub name: String,
    pub bus: u32,
    /// W/m^2 at which output reaches `p_rated`.
    pub r_rated: f64,
    /// End of the quadratic low-radiation segment, W/m^2.
    #[serde(default = "r_c_default")]
    pub r_c: f64,
    pub p_rated: f64,
    #[serde(default)]
    pub radiation: f64,
}

/// Under-load tap changer on a transformer branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ultc {
    /// Index into `branches`.
    pub branch: usize,
    /// Regulated bus; must be one end of the branch.
    pub controlled_bus: u32,
    pub v_lo: f64,
    pub v_hi: f64,
    pub tap_min: f64,
    pub tap_max: f64,
    #[serde(default = "tap_step_default")]
    pub tap_step: f64,
    #[serde(default)]
    pub continuous: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Network {
    #[serde(default)]
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    #[serde(default)]
    pub wind_farms: Vec<WindFarm>,
    #[serde(default)]
    pub solar_plants: Vec<SolarPlant>,
    #[serde(default)]
    pub ultc: Vec<Ultc>,
    /// How sample columns map onto the network.
    #[serde(default)]
    pub inputs: InputMapping,
}

fn one() -> f64 {
    1.0
}
fn yes() -> bool {
    true
}
fn inf() -> f64 {
    f64::INFINITY
}
fn neg_inf() -> f64 {
    f64::NEG_INFINITY
}
fn v_min_default() -> f64 {
    0.9
}
fn v_max_default() -> f64 {
    1.1
}
fn pf_default() -> f64 {
    0.85
}
fn r_c_default() -> f64 {
    150.0
}
fn tap_step_default() -> f64 {
    0.00625
}

/// Unbounded limits are written as `null` and read back as infinities.
macro_rules! bound_serde {
    ($name:ident, $missing:expr) => {
        mod $name {
            use serde::{Deserialize, Deserializer, Serializer};

            pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
                if v.is_finite() {
                    s.serialize_f64(*v)
                } else {
                    s.serialize_none()
                }
            }

            pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
                Ok(Option::<f64>::deserialize(d)?.unwrap_or($missing))
            }
        }
    };
}
bound_serde!(upper_bound, f64::INFINITY);
bound_serde!(lower_bound, f64::NEG_INFINITY);

fn invalid(msg: impl Into<String>) -> GridError {
    GridError::InvalidNetwork(msg.into())
}

impl Network {
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let net: Network = serde_json::from_str(text).map_err(|e| GridError::Parse(e.to_string()))?;
        net.validate()?;
        Ok(net)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("network serializes")
    }

    /// Position of bus `id` in `buses`.
    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub(crate) fn bus_lookup(&self) -> HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn slack_index(&self) -> usize {
        self.buses.iter().position(|b| b.kind == BusKind::Slack).expect("validated network has a slack bus")
    }

    pub fn wind_farm(&self, name: &str) -> Option<usize> {
        self.wind_farms.iter().position(|w| w.name == name)
    }

    pub fn solar_plant(&self, name: &str) -> Option<usize> {
        self.solar_plants.iter().position(|s| s.name == name)
    }

    /// Total renewable output per bus, `(MW, MVAr)`.
    pub fn renewable_injections(&self) -> Vec<(f64, f64)> {
        let lookup = self.bus_lookup();
        let mut out = vec![(0.0, 0.0); self.buses.len()];
        for w in &self.wind_farms {
            let (p, q) = super::wind_power(w.wind_speed, w);
            let slot = &mut out[lookup[&w.bus]];
            slot.0 += p;
            slot.1 += q;
        }
        for s in &self.solar_plants {
            out[lookup[&s.bus]].0 += super::solar_power(s.radiation, s);
        }
        out
    }

    /// Copy with the listed branches switched out.
    pub fn with_outages(&self, branches: &[usize]) -> Result<Network, GridError> {
        let mut net = self.clone();
        for &k in branches {
            let br = net
                .branches
                .get_mut(k)
                .ok_or_else(|| invalid(format!("outage references branch {k}, network has {}", self.branches.len())))?;
            br.in_service = false;
        }
        Ok(net)
    }

    pub fn validate(&self) -> Result<(), GridError> {
        if !(self.base_mva > 0.0) {
            return Err(invalid("base_mva must be positive"));
        }
        if self.buses.is_empty() {
            return Err(invalid("no buses"));
        }
        let mut ids = HashSet::new();
        for b in &self.buses {
            if !ids.insert(b.id) {
                return Err(invalid(format!("duplicate bus id {}", b.id)));
            }
            if !(b.v_min < b.v_max) {
                return Err(invalid(format!("bus {}: v_min must be below v_max", b.id)));
            }
        }
        let slacks = self.buses.iter().filter(|b| b.kind == BusKind::Slack).count();
        if slacks != 1 {
            return Err(invalid(format!("expected exactly one slack bus, found {slacks}")));
        }
        let slack_id = self.buses[self.slack_index()].id;
        if !self.generators.iter().any(|g| g.in_service && g.bus == slack_id) {
            return Err(invalid(format!("slack bus {slack_id} has no in-service generator")));
        }
        let known = |id: u32, what: &str| {
            if ids.contains(&id) {
                Ok(())
            } else {
                Err(invalid(format!("{what} references unknown bus {id}")))
            }
        };
        for (k, br) in self.branches.iter().enumerate() {
            known(br.from, &format!("branch {k}"))?;
            known(br.to, &format!("branch {k}"))?;
            if br.from == br.to {
                return Err(invalid(format!("branch {k} connects bus {} to itself", br.from)));
            }
            if br.r == 0.0 && br.x == 0.0 {
                return Err(invalid(format!("branch {k} has zero impedance")));
            }
            if br.rate_a < 0.0 || br.tap < 0.0 {
                return Err(invalid(format!("branch {k}: rate_a and tap must be non-negative")));
            }
        }
        for (k, g) in self.generators.iter().enumerate() {
            known(g.bus, &format!("generator {k}"))?;
            if !(g.p_min <= g.p_max) || !(g.q_min <= g.q_max) {
                return Err(invalid(format!("generator {k}: min limit above max limit")));
            }
        }
        let mut names = HashSet::new();
        for w in &self.wind_farms {
            known(w.bus, &format!("wind farm '{}'", w.name))?;
            if !names.insert(w.name.as_str()) {
                return Err(invalid(format!("duplicate plant name '{}'", w.name)));
            }
            if !(0.0 <= w.v_in && w.v_in < w.v_rated && w.v_rated < w.v_out) {
                return Err(invalid(format!("wind farm '{}': need 0 <= v_in < v_rated < v_out", w.name)));
            }
            if !(w.p_rated > 0.0) || !(w.power_factor > 0.0 && w.power_factor <= 1.0) {
                return Err(invalid(format!("wind farm '{}': bad rating or power factor", w.name)));
            }
        }
        for s in &self.solar_plants {
            known(s.bus, &format!("solar plant '{}'", s.name))?;
            if !names.insert(s.name.as_str()) {
                return Err(invalid(format!("duplicate plant name '{}'", s.name)));
            }
            if !(s.r_rated > 0.0 && s.p_rated > 0.0 && s.r_c >= 0.0 && s.r_c <= s.r_rated) {
                return Err(invalid(format!("solar plant '{}': need r_rated, p_rated > 0 and 0 <= r_c <= r_rated", s.name)));
            }
        }
        for (k, u) in self.ultc.iter().enumerate() {
            let br = self.branches.get(u.branch).ok_or_else(|| invalid(format!("ultc {k}: unknown branch {}", u.branch)))?;
            if u.controlled_bus != br.from && u.controlled_bus != br.to {
                return Err(invalid(format!("ultc {k}: controlled bus must be an end of branch {}", u.branch)));
            }
            if !(u.tap_min < u.tap_max && u.tap_step > 0.0 && u.v_lo < u.v_hi && u.tap_min > 0.0) {
                return Err(invalid(format!("ultc {k}: need 0 < tap_min < tap_max, tap_step > 0, v_lo < v_hi")));
            }
        }
        let mut columns = HashSet::new();
        for c in &self.inputs.0 {
            if !columns.insert(c.column.as_str()) {
                return Err(invalid(format!("input column '{}' mapped twice", c.column)));
            }
            match &c.role {
                InputRole::WindSpeed { farm } if self.wind_farm(farm).is_none() => {
                    return Err(invalid(format!("input '{}' targets unknown wind farm '{farm}'", c.column)))
                }
                InputRole::Radiation { plant } if self.solar_plant(plant).is_none() => {
                    return Err(invalid(format!("input '{}' targets unknown solar plant '{plant}'", c.column)))
                }
                InputRole::Load { bus } => known(*bus, &format!("input '{}'", c.column))?,
                InputRole::BranchStatus { branch } if *branch >= self.branches.len() => {
                    return Err(invalid(format!("input '{}' targets unknown branch {branch}", c.column)))
                }
                _ => {}
            }
        }
        Ok(())
    }
}

pub fn load_network(path: impl AsRef<Path>) -> Result<Network, GridError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| GridError::Io { path: path.to_path_buf(), source })?;
    Network::from_json(&text)
}
