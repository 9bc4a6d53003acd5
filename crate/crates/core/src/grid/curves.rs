use super::{SolarPlant, WindFarm};

/// Wind farm output `(MW, MVAr)` at wind speed `v`.
///
/// Linear between cut-in and rated speed, flat up to cut-out, zero outside.
/// Reactive power is absorbed at the farm's fixed power factor.
pub fn wind_power(v: f64, w: &WindFarm) -> (f64, f64) {
    let p = if v <= w.v_in || v > w.v_out {
        0.0
    } else if v <= w.v_rated {
        w.p_rated * (v - w.v_in) / (w.v_rated - w.v_in)
    } else {
        w.p_rated
    };
    let tan_phi = (1.0 - w.power_factor * w.power_factor).sqrt() / w.power_factor;
    (p, -p * tan_phi)
}

/// Photovoltaic output in MW at radiation `r` (W/m^2).
///
/// Quadratic up to `r_c`, linear up to `r_rated`, flat above.
pub fn solar_power(r: f64, s: &SolarPlant) -> f64 {
    if r <= 0.0 {
        0.0
    } else if r < s.r_c {
        s.p_rated * r * r / (s.r_rated * s.r_c)
    } else if r < s.r_rated {
        s.p_rated * r / s.r_rated
    } else {
        s.p_rated
    }
}
