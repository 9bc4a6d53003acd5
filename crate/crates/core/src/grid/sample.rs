use serde::{Deserialize, Serialize};

use super::{GridError, Network};

/// What a sample column drives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputRole {
    /// Wind speed (m/s) at a named farm.
    WindSpeed { farm: String },
    /// Solar radiation (W/m^2) at a named plant.
    Radiation { plant: String },
    /// Active load (MW) at a bus; reactive load follows at constant power factor.
    Load { bus: u32 },
    /// Branch status indicator: 1 in service, 0 out.
    BranchStatus { branch: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputColumn {
    pub column: String,
    #[serde(flatten)]
    pub role: InputRole,
}

/// Ordered sample-column layout; row entry `i` feeds `columns[i]`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InputMapping(pub Vec<InputColumn>);

impl InputMapping {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(|c| c.column.clone()).collect()
    }

    /// Require sample headers to equal the mapped columns, in order.
    pub fn check_columns(&self, names: &[String]) -> Result<(), GridError> {
        if names.len() != self.len() {
            return Err(GridError::MappingMismatch { expected: self.len(), found: names.len() });
        }
        for (c, n) in self.0.iter().zip(names) {
            if &c.column != n {
                return Err(GridError::InvalidNetwork(format!(
                    "sample column '{n}' does not match mapped input '{}'",
                    c.column
                )));
            }
        }
        Ok(())
    }
}

/// Network instance for one realization of the random inputs.
pub fn apply_sample(net: &Network, mapping: &InputMapping, row: &[f64]) -> Result<Network, GridError> {
    if row.len() != mapping.len() {
        return Err(GridError::MappingMismatch { expected: mapping.len(), found: row.len() });
    }
    let mut out = net.clone();
    for (col, &value) in mapping.0.iter().zip(row) {
        match &col.role {
            InputRole::WindSpeed { farm } => {
                let k = net.wind_farm(farm).ok_or_else(|| unknown(&col.column))?;
                out.wind_farms[k].wind_speed = value.max(0.0);
            }
            InputRole::Radiation { plant } => {
                let k = net.solar_plant(plant).ok_or_else(|| unknown(&col.column))?;
                out.solar_plants[k].radiation = value.max(0.0);
            }
            InputRole::Load { bus } => {
                let k = net.bus_index(*bus).ok_or_else(|| unknown(&col.column))?;
                let base = &net.buses[k];
                out.buses[k].pd = value;
                if base.pd != 0.0 {
                    out.buses[k].qd = base.qd * value / base.pd;
                }
            }
            InputRole::BranchStatus { branch } => {
                let br = out.branches.get_mut(*branch).ok_or_else(|| unknown(&col.column))?;
                br.in_service = match value {
                    1.0 => net.branches[*branch].in_service,
                    0.0 => false,
                    _ => return Err(GridError::InvalidIndicator { column: col.column.clone(), value }),
                };
            }
        }
    }
    Ok(out)
}

fn unknown(column: &str) -> GridError {
    GridError::InvalidNetwork(format!("input '{column}' targets an element the network lacks"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::network::fixtures::two_bus;
    use crate::grid::WindFarm;

    fn net_with_inputs() -> Network {
        let mut net = two_bus(0.0, 0.1, 50.0, 10.0);
        net.wind_farms.push(WindFarm {
            name: "W1".into(),
            bus: 2,
            v_in: 3.0,
            v_rated: 12.0,
            v_out: 25.0,
            p_rated: 20.0,
            power_factor: 0.85,
            wind_speed: 0.0,
        });
        net.inputs = serde_json::from_str(
            r#"[{"column": "v1", "kind": "wind_speed", "farm": "W1"},
                {"column": "load2", "kind": "load", "bus": 2},
                {"column": "line0", "kind": "branch_status", "branch": 0}]"#,
        )
        .unwrap();
        net.validate().unwrap();
        net
    }

    #[test]
    fn base_row_is_identity() {
        let net = net_with_inputs();
        let inst = apply_sample(&net, &net.inputs, &[0.0, 50.0, 1.0]).unwrap();
        assert_eq!(inst, net);
    }

    #[test]
    fn load_scaling_keeps_power_factor() {
        let net = net_with_inputs();
        let inst = apply_sample(&net, &net.inputs, &[0.0, 55.0, 1.0]).unwrap();
        assert!((inst.buses[1].pd - 55.0).abs() < 1e-12);
        assert!((inst.buses[1].qd - 11.0).abs() < 1e-12);
    }

    #[test]
    fn outage_and_wind() {
        let net = net_with_inputs();
        let inst = apply_sample(&net, &net.inputs, &[7.5, 50.0, 0.0]).unwrap();
        assert!(!inst.branches[0].in_service);
        assert_eq!(inst.wind_farms[0].wind_speed, 7.5);
        assert!((inst.renewable_injections()[1].0 - 10.0).abs() < 1e-12);
    }

    #[test]
    fn bad_rows() {
        let net = net_with_inputs();
        assert!(matches!(apply_sample(&net, &net.inputs, &[1.0]), Err(GridError::MappingMismatch { .. })));
        assert!(matches!(
            apply_sample(&net, &net.inputs, &[1.0, 50.0, 0.5]),
            Err(GridError::InvalidIndicator { .. })
        ));
        assert!(net.inputs.check_columns(&["v1".into(), "load2".into(), "line0".into()]).is_ok());
        assert!(net.inputs.check_columns(&["load2".into(), "v1".into(), "line0".into()]).is_err());
    }
}
