//! Flat `key = value` configuration documents.
//!
//! Keys are the [`SystemConfig`] field names. Powers (`p_max`, `p_bar`,
//! `sigma2`) may be given in watts under the plain key or in dBm under the
//! key with a `_dbm` suffix; `gamma_min` also accepts `gamma_min_db`.
//! Anything not mentioned keeps its default. Unknown keys are an error.

use std::path::Path;

use toml::{Table, Value};

use super::{db_to_linear, dbm_to_watt, noise_power, SystemConfig};
use crate::error::{Error, Result};

pub fn load_config(path: impl AsRef<Path>) -> Result<SystemConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    parse_config(&text).map_err(|e| Error::ConfigFile {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn parse_config(text: &str) -> Result<SystemConfig> {
    let table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Parse(e.message().to_string()))?;
    let mut cfg = SystemConfig::paper_defaults();
    let mut noise_given = false;

    for (key, value) in &table {
        let num = || as_f64(key, value);
        let count = || as_u64(key, value);
        match key.as_str() {
            "num_nodes" => cfg.num_nodes = count()? as usize,
            "beacon_antennas" => cfg.beacon_antennas = count()? as usize,
            "ap_antennas" => cfg.ap_antennas = count()? as usize,
            "p_max" => cfg.p_max = num()?,
            "p_max_dbm" => cfg.p_max = dbm_to_watt(num()?),
            "p_bar" => cfg.p_bar = num()?,
            "p_bar_dbm" => cfg.p_bar = dbm_to_watt(num()?),
            "eta" => cfg.eta = num()?,
            "tau" => cfg.tau = num()?,
            "w_total" => cfg.w_total = num()?,
            // derived; accepted so that rendered configs parse back
            "w_k" => {}
            "sigma2" => {
                cfg.sigma2 = num()?;
                noise_given = true;
            }
            "sigma2_dbm" => {
                cfg.sigma2 = dbm_to_watt(num()?);
                noise_given = true;
            }
            "noise_density_dbm_hz" => cfg.noise_density_dbm_hz = num()?,
            "noise_figure_db" => cfg.noise_figure_db = num()?,
            "gamma_min" => cfg.gamma_min = num()?,
            "gamma_min_db" => cfg.gamma_min = db_to_linear(num()?),
            "e_max" => cfg.e_max = num()?,
            "a_lo" => cfg.a_lo = num()?,
            "a_hi" => cfg.a_hi = num()?,
            "a_max" => cfg.a_max = num()?,
            "path_loss_exp" => cfg.path_loss_exp = num()?,
            "d_ref" => cfg.d_ref = num()?,
            "beacon_x" => cfg.beacon_x = num()?,
            "beacon_y" => cfg.beacon_y = num()?,
            "ap_x" => cfg.ap_x = num()?,
            "ap_y" => cfg.ap_y = num()?,
            "disk_radius" => cfg.disk_radius = num()?,
            "beta" => cfg.beta = num()?,
            "alpha_lo" => cfg.alpha_lo = num()?,
            "alpha_hi" => cfg.alpha_hi = num()?,
            "psi_floor" => cfg.psi_floor = num()?,
            "strict_margin" => cfg.strict_margin = num()?,
            "sca_tol" => cfg.sca_tol = num()?,
            "max_sca_iter" => cfg.max_sca_iter = count()? as usize,
            "feas_tol" => cfg.feas_tol = num()?,
            "gap_tol" => cfg.gap_tol = num()?,
            "kkt_tol" => cfg.kkt_tol = num()?,
            "max_outer_iter" => cfg.max_outer_iter = count()? as usize,
            "max_inner_iter" => cfg.max_inner_iter = count()? as usize,
            "rng_seed" => cfg.rng_seed = count()?,
            "resample_topology" => cfg.resample_topology = as_bool(key, value)?,
            "cap_service_by_backlog" => cfg.cap_service_by_backlog = as_bool(key, value)?,
            other => return Err(Error::Parse(format!("unknown key `{other}`"))),
        }
    }

    if cfg.num_nodes == 0 {
        return Err(Error::InvalidConfig("num_nodes must be at least 1".into()));
    }
    if !noise_given {
        cfg.sigma2 = noise_power(
            cfg.noise_density_dbm_hz,
            cfg.noise_figure_db,
            cfg.w_total / cfg.num_nodes as f64,
        );
    }
    cfg.validate()
}

/// Renders `cfg` as a document [`parse_config`] reads back to the same value.
pub fn render_config(cfg: &SystemConfig) -> String {
    let value = toml::Value::try_from(cfg).expect("config is plain data");
    toml::to_string(&value).expect("flat table renders")
}

fn as_f64(key: &str, value: &Value) -> Result<f64> {
    match value {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::Parse(format!("`{key}` must be a number"))),
    }
}

fn as_u64(key: &str, value: &Value) -> Result<u64> {
    match value {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(Error::Parse(format!("`{key}` must be a non-negative integer"))),
    }
}

fn as_bool(key: &str, value: &Value) -> Result<bool> {
    value
        .as_bool()
        .ok_or_else(|| Error::Parse(format!("`{key}` must be true or false")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn dbm_and_watt_keys() {
        let cfg = parse_config("p_max_dbm = 43\np_bar = 0.01\ngamma_min_db = -10\n").unwrap();
        assert_relative_eq!(cfg.p_max, 19.9526, max_relative = 1e-4);
        assert_eq!(cfg.p_bar, 0.01);
        assert_relative_eq!(cfg.gamma_min, 0.1, max_relative = 1e-12);
    }

    #[test]
    fn noise_follows_node_count() {
        let cfg = parse_config("num_nodes = 1\n").unwrap();
        assert_eq!(cfg.w_k, 1e7);
        assert_relative_eq!(cfg.sigma2, 4e-13, max_relative = 1e-2);
        let cfg = parse_config("num_nodes = 1\nsigma2 = 2e-13\n").unwrap();
        assert_eq!(cfg.sigma2, 2e-13);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = parse_config("p_maxx = 3\n").unwrap_err().to_string();
        assert!(err.contains("p_maxx"), "{err}");
    }

    #[test]
    fn invalid_values_fail_validation() {
        assert!(parse_config("eta = 1.5\n").is_err());
        assert!(parse_config("num_nodes = 0\n").is_err());
        assert!(parse_config("beta = \"big\"\n").is_err());
    }

    #[test]
    fn rendered_config_parses_back() {
        let cfg = SystemConfig::paper_defaults().validate().unwrap();
        let text = render_config(&cfg);
        assert_eq!(parse_config(&text).unwrap(), cfg);
    }
}
